//! Detector accuracy with the synthetic generator's exact R indices as the
//! oracle.

mod common;

use common::match_peaks;
use ecgauth::ecgio::EcgRecord;
use ecgauth::qrs::{detect_beats, extract_beats, segment_beat, QrsDetector, RPeak, BEAT_LEN};
use ecgauth::synth::{default_cohort, generate_record, CohortConfig, SubjectMorphology};
use proptest::prelude::*;

fn indices(peaks: &[RPeak]) -> Vec<usize> {
    peaks.iter().map(|p| p.index).collect()
}

fn quiet_morphology(bpm: f64, seed: u64) -> SubjectMorphology {
    SubjectMorphology {
        bpm,
        seed,
        ..SubjectMorphology::reference()
    }
}

#[test]
fn moderate_noise_cohort_sensitivity() {
    let cfg = CohortConfig {
        enroll_s: 180.0,
        test_s: 180.0,
        ..CohortConfig::default()
    };
    let cohort = default_cohort(4, 7, &cfg).unwrap();
    let tol = (0.010 * cfg.fs as f64).floor() as usize;
    let (mut truth_n, mut matched_n, mut extra_n) = (0, 0, 0);
    for s in &cohort {
        for sess in &s.sessions {
            let found = indices(&detect_beats(&sess.record));
            let (m, worst, extra) = match_peaks(&sess.truth, &found, tol);
            assert!(worst <= tol);
            truth_n += sess.truth.len();
            matched_n += m;
            extra_n += extra;
        }
    }
    let sensitivity = matched_n as f64 / truth_n as f64;
    assert!(sensitivity >= 0.99, "sensitivity {sensitivity}");
    assert!(
        (extra_n as f64) <= 0.01 * truth_n as f64,
        "{extra_n} spurious detections"
    );
}

#[test]
fn noiseless_reference_is_exact() {
    let (rec, truth) = generate_record(&quiet_morphology(60.0, 3), 120.0, 512).unwrap();
    let found = indices(&detect_beats(&rec));
    let (m, worst, extra) = match_peaks(&truth, &found, 1);
    assert_eq!(m, truth.len());
    assert!(worst <= 1);
    assert_eq!(extra, 0);
}

#[test]
fn noiseless_cohort_is_exact() {
    let cfg = CohortConfig {
        enroll_s: 120.0,
        test_s: 60.0,
        noise: 0.0,
        ..CohortConfig::default()
    };
    for s in default_cohort(8, 2, &cfg).unwrap() {
        for sess in &s.sessions {
            let found = indices(&detect_beats(&sess.record));
            let (m, worst, _) = match_peaks(&sess.truth, &found, 1);
            assert_eq!(
                m,
                sess.truth.len(),
                "{} {}",
                s.subject_id,
                sess.record.session_id
            );
            assert!(worst <= 1);
        }
    }
}

#[test]
fn mean_rr_at_72_bpm() {
    let morph = SubjectMorphology {
        hrv: 0.05,
        rr_jitter: 0.02,
        noise: 15.0,
        wander: 30.0,
        ..quiet_morphology(72.0, 11)
    };
    let (rec, _) = generate_record(&morph, 300.0, 512).unwrap();
    let found = detect_beats(&rec);
    let rr: Vec<f64> = found
        .windows(2)
        .map(|p| p[1].time_s - p[0].time_s)
        .collect();
    let mean = rr.iter().sum::<f64>() / rr.len() as f64;
    let want = 60.0 / 72.0;
    assert!((mean - want).abs() <= 0.02 * want, "mean RR {mean}");
}

#[test]
fn refractory_suppresses_close_pair() {
    let (mut rec, truth) = generate_record(&quiet_morphology(60.0, 5), 30.0, 512).unwrap();
    let r = SubjectMorphology::reference().r;
    let at = truth[10] as f64 + 0.15 * 512.0;
    for (n, x) in rec.samples.iter_mut().enumerate() {
        let dt = (n as f64 - at) / 512.0;
        *x += (r.amplitude * (-0.5 * (dt / r.width).powi(2)).exp()).round() as i32;
    }
    let found = indices(&detect_beats(&rec));
    let lo = truth[10] - 20;
    let hi = at as usize + 20;
    assert!(found.iter().filter(|&&d| d >= lo && d <= hi).count() <= 1);
    assert!(found
        .windows(2)
        .all(|p| p[1] - p[0] >= (0.2 * 512.0) as usize));
}

#[test]
fn all_zero_and_low_rate_records() {
    let rec = EcgRecord {
        subject_id: "Z".into(),
        session_id: "z".into(),
        fs: 128,
        samples: vec![0; 128 * 20],
    };
    assert!(detect_beats(&rec).is_empty());
    let (rec, truth) = generate_record(&quiet_morphology(66.0, 1), 60.0, 128).unwrap();
    let found = indices(&detect_beats(&rec));
    let (m, _, _) = match_peaks(&truth, &found, 2);
    assert_eq!(m, truth.len());
}

#[test]
fn segmentation_contract() {
    let (rec, _) = generate_record(&quiet_morphology(60.0, 2), 10.0, 512).unwrap();
    let b = segment_beat(&rec, RPeak::new(1000, 512)).unwrap();
    assert_eq!(b.window.len(), BEAT_LEN);
    assert_eq!(b.window[0], rec.samples[922] as f64);
    assert_eq!(b.window[78], rec.samples[1000] as f64);
    assert_eq!(b.window[255], rec.samples[1177] as f64);
    assert!(segment_beat(&rec, RPeak::new(50, 512)).is_err());
    assert!(segment_beat(&rec, RPeak::new(rec.samples.len() - 100, 512)).is_err());
    for beat in extract_beats(&rec) {
        assert_eq!(beat.window[78], rec.samples[beat.r.index] as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn streaming_matches_offline(
        seed in 0u64..1000,
        chunks in prop::collection::vec(1usize..3000, 1..40),
    ) {
        let morph = SubjectMorphology {
            noise: 25.0,
            wander: 40.0,
            hrv: 0.04,
            rr_jitter: 0.02,
            ..quiet_morphology(70.0, seed)
        };
        let (rec, _) = generate_record(&morph, 40.0, 512).unwrap();
        let offline = detect_beats(&rec);
        let mut det = QrsDetector::new(512);
        let mut streamed = Vec::new();
        let mut pos = 0;
        for c in chunks.iter().cycle() {
            if pos >= rec.samples.len() {
                break;
            }
            let end = (pos + c).min(rec.samples.len());
            for &x in &rec.samples[pos..end] {
                streamed.extend(det.push(x));
            }
            pos = end;
        }
        streamed.extend(det.finish());
        prop_assert_eq!(&streamed, &offline);
        prop_assert_eq!(detect_beats(&rec), offline);
    }

    #[test]
    fn scaling_leaves_peaks_unchanged(seed in 0u64..1000, k in 2i32..5) {
        let morph = SubjectMorphology {
            noise: 20.0,
            ..quiet_morphology(64.0, seed)
        };
        let (rec, _) = generate_record(&morph, 30.0, 512).unwrap();
        let scaled = EcgRecord {
            samples: rec.samples.iter().map(|x| x * k).collect(),
            ..rec.clone()
        };
        prop_assert_eq!(indices(&detect_beats(&rec)), indices(&detect_beats(&scaled)));
    }
}
