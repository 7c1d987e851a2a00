//! Deterministic synthetic single-lead ECG with exact R-peak annotations.
//!
//! Each beat is the sum of five Gaussian bumps (P, Q, R, S, T). RR intervals
//! follow a respiratory-like sinusoid plus seeded jitter; the record carries
//! white noise and a slow 0.3 Hz baseline wander.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ecgio::{write_record, EcgRecord, ManifestEntry, RecordManifest, Role, MIN_FS};
use crate::error::{Error, Result};

/// One Gaussian component of a beat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    /// Peak amplitude in ADC units.
    pub amplitude: f64,
    /// Centre relative to the R-peak, seconds.
    pub center: f64,
    /// Gaussian standard deviation, seconds.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMorphology {
    pub p: Wave,
    pub q: Wave,
    pub r: Wave,
    pub s: Wave,
    pub t: Wave,
    pub bpm: f64,
    /// Relative amplitude of the sinusoidal RR modulation.
    pub hrv: f64,
    /// Relative standard deviation of random RR jitter.
    pub rr_jitter: f64,
    /// Relative per-beat standard deviation of wave amplitudes.
    pub beat_jitter: f64,
    /// White noise standard deviation, ADC units.
    pub noise: f64,
    /// Baseline wander amplitude, ADC units.
    pub wander: f64,
    pub seed: u64,
}

const RESP_HZ: f64 = 0.25;
const WANDER_HZ: f64 = 0.3;
const FIRST_BEAT_S: f64 = 0.5;

impl SubjectMorphology {
    /// A generic adult-looking beat at 60 bpm with no noise or variability.
    pub fn reference() -> Self {
        SubjectMorphology {
            p: Wave {
                amplitude: 120.0,
                center: -0.15,
                width: 0.022,
            },
            q: Wave {
                amplitude: -150.0,
                center: -0.032,
                width: 0.009,
            },
            r: Wave {
                amplitude: 1200.0,
                center: 0.0,
                width: 0.010,
            },
            s: Wave {
                amplitude: -300.0,
                center: 0.034,
                width: 0.011,
            },
            t: Wave {
                amplitude: 300.0,
                center: 0.27,
                width: 0.045,
            },
            bpm: 60.0,
            hrv: 0.0,
            rr_jitter: 0.0,
            beat_jitter: 0.0,
            noise: 0.0,
            wander: 0.0,
            seed: 0,
        }
    }

    pub fn waves(&self) -> [Wave; 5] {
        [self.p, self.q, self.r, self.s, self.t]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::contract(format!("invalid morphology: {m}")));
        let w = self.waves();
        if w.iter()
            .any(|w| !(w.width > 0.0) || !w.amplitude.is_finite())
        {
            return bad("wave widths must be positive and amplitudes finite");
        }
        if !(self.r.amplitude > 0.0) {
            return bad("R amplitude must be positive");
        }
        if [self.p, self.q, self.s, self.t]
            .iter()
            .any(|w| w.amplitude.abs() >= self.r.amplitude)
        {
            return bad("R wave must dominate");
        }
        if self.r.center != 0.0 {
            return bad("R centre defines the beat origin and must be 0");
        }
        if !w.windows(2).all(|p| p[0].center < p[1].center) {
            return bad("wave centres must be ordered P < Q < R < S < T");
        }
        if !(self.bpm > 20.0 && self.bpm < 250.0) {
            return bad("heart rate out of range");
        }
        for v in [
            self.hrv,
            self.rr_jitter,
            self.beat_jitter,
            self.noise,
            self.wander,
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad("variability and noise terms must be nonnegative");
            }
        }
        if self.hrv >= 0.5 {
            return bad("hrv must be below 0.5");
        }
        Ok(())
    }
}

/// Renders `duration_s` seconds of ECG and returns it with the exact R-peak
/// sample indices.
pub fn generate_record(
    morph: &SubjectMorphology,
    duration_s: f64,
    fs: u32,
) -> Result<(EcgRecord, Vec<usize>)> {
    morph.validate()?;
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::contract("duration must be positive"));
    }
    if fs < MIN_FS {
        return Err(Error::contract(format!("fs must be at least {MIN_FS} Hz")));
    }
    let fsf = fs as f64;
    let len = (duration_s * fsf).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(morph.seed);
    let mut signal = vec![0.0f64; len];

    let base_rr = 60.0 / morph.bpm;
    let waves = morph.waves();
    let reach = waves
        .iter()
        .map(|w| (w.center.abs() + 6.0 * w.width) * fsf)
        .fold(0.0, f64::max)
        .ceil() as i64;

    let mut truth = Vec::new();
    let mut t = FIRST_BEAT_S;
    loop {
        let r_index = (t * fsf).round() as usize;
        if r_index >= len {
            break;
        }
        truth.push(r_index);
        let r_time = r_index as f64 / fsf;
        let mut scaled = waves;
        for w in scaled.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            w.amplitude *= 1.0 + morph.beat_jitter * z;
        }
        let lo = (r_index as i64 - reach).max(0) as usize;
        let hi = ((r_index as i64 + reach) as usize).min(len - 1);
        for (n, v) in signal.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let dt = n as f64 / fsf - r_time;
            for w in &scaled {
                let u = (dt - w.center) / w.width;
                *v += w.amplitude * (-0.5 * u * u).exp();
            }
        }

        let z: f64 = StandardNormal.sample(&mut rng);
        let rr = base_rr * (1.0 + morph.hrv * (2.0 * PI * RESP_HZ * t).sin() + morph.rr_jitter * z);
        t += rr.max(0.3);
    }

    let phase = rng.gen_range(0.0..2.0 * PI);
    let samples = signal
        .iter()
        .enumerate()
        .map(|(n, &v)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let wander = morph.wander * (2.0 * PI * WANDER_HZ * n as f64 / fsf + phase).sin();
            (v + morph.noise * z + wander).round() as i32
        })
        .collect();

    Ok((
        EcgRecord {
            subject_id: "synthetic".into(),
            session_id: format!("seed{}", morph.seed),
            fs,
            samples,
        },
        truth,
    ))
}

/// Settings for [`default_cohort`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub enroll_s: f64,
    pub test_s: f64,
    pub fs: u32,
    pub noise: f64,
    pub beat_jitter: f64,
    /// Scales how far subject morphologies stray from the reference beat.
    pub spread: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            enroll_s: 600.0,
            test_s: 600.0,
            fs: 512,
            noise: 20.0,
            beat_jitter: 0.02,
            spread: 1.0,
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.enroll_s > 0.0 && self.test_s > 0.0) {
            return Err(Error::contract("session durations must be positive"));
        }
        if self.fs < MIN_FS {
            return Err(Error::contract(format!("fs must be at least {MIN_FS} Hz")));
        }
        if !(self.noise >= 0.0 && self.beat_jitter >= 0.0) {
            return Err(Error::contract("noise and jitter must be nonnegative"));
        }
        if !(self.spread > 0.0 && self.spread <= 2.0) {
            return Err(Error::contract("spread must lie in (0, 2]"));
        }
        Ok(())
    }
}

const MAX_DRAWS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct SyntheticSession {
    pub role: Role,
    pub record: EcgRecord,
    pub truth: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SyntheticSubject {
    pub subject_id: String,
    pub morphology: SubjectMorphology,
    pub sessions: Vec<SyntheticSession>,
}

/// Distinguishing traits handed out by subject index: the wave, the
/// parameter, and the change that moves the rendered beat by roughly 30 ADC
/// RMS. One-sided traits always push the same way.
const SIGNATURES: [(usize, Field, f64, bool); 8] = [
    (2, Field::Amplitude, 0.13, true),
    (4, Field::Amplitude, 0.25, true),
    (3, Field::Amplitude, 0.5, true),
    (4, Field::Center, 0.017, true),
    (0, Field::Amplitude, 1.2, false),
    (3, Field::Center, 0.008, true),
    (1, Field::Amplitude, 1.1, false),
    (0, Field::Center, 0.04, false),
];

#[derive(Clone, Copy)]
enum Field {
    Amplitude,
    Width,
    Center,
}

fn wave_mut(m: &mut SubjectMorphology, wave: usize) -> &mut Wave {
    match wave {
        0 => &mut m.p,
        1 => &mut m.q,
        2 => &mut m.r,
        3 => &mut m.s,
        _ => &mut m.t,
    }
}

fn nudge(w: &mut Wave, field: Field, delta: f64) {
    match field {
        Field::Amplitude => w.amplitude *= 1.0 + delta,
        Field::Width => w.width *= 1.0 + delta,
        Field::Center => w.center += delta,
    }
}

/// Draws the morphology of subject `index`. Every wave varies a little;
/// on top of that the subject gets trait `index % 8` at full strength, and
/// from the ninth subject on a second trait at reduced strength.
fn draw_morphology(rng: &mut ChaCha8Rng, cfg: &CohortConfig, index: usize) -> SubjectMorphology {
    let mut m = SubjectMorphology::reference();
    let k = cfg.spread;
    for wave in 0..5 {
        let w = wave_mut(&mut m, wave);
        nudge(w, Field::Amplitude, rng.gen_range(-0.03..0.03) * k);
        nudge(w, Field::Width, rng.gen_range(-0.03..0.03) * k);
        if wave != 2 {
            nudge(w, Field::Center, rng.gen_range(-0.001..0.001) * k);
        }
    }
    let n = SIGNATURES.len();
    let mut traits = vec![(index % n, 1.0)];
    if index >= n {
        traits = vec![(index % n, 0.75), ((index + index / n) % n, 0.75)];
    }
    for (j, strength) in traits {
        let (wave, field, step, two_sided) = SIGNATURES[j];
        let mut u = rng.gen_range(0.9..1.1) * strength;
        if two_sided && rng.gen::<bool>() {
            u = -u;
        }
        nudge(wave_mut(&mut m, wave), field, u * step * k);
    }
    m.bpm = rng.gen_range(58.0..82.0);
    m.hrv = 0.03;
    m.rr_jitter = 0.01;
    m.beat_jitter = cfg.beat_jitter;
    m.noise = cfg.noise;
    m.wander = 40.0;
    m
}

/// Largest relative difference over the shape parameters of two subjects.
/// Centre offsets count in units of the wider of the two widths.
fn morphology_spacing(a: &SubjectMorphology, b: &SubjectMorphology) -> f64 {
    let mut best = 0.0f64;
    for (x, y) in a.waves().iter().zip(b.waves().iter()) {
        let wide = x.width.max(y.width);
        best =
            best.max((x.amplitude - y.amplitude).abs() / x.amplitude.abs().max(y.amplitude.abs()));
        best = best.max((x.width - y.width).abs() / wide);
        best = best.max((x.center - y.center).abs() / wide);
    }
    best
}

/// `n_subjects` distinct synthetic subjects with one enrollment and one test
/// session each.
///
/// Morphologies are redrawn until every pair differs by at least five times
/// the per-beat amplitude jitter in some shape parameter.
pub fn default_cohort(
    n_subjects: usize,
    seed: u64,
    cfg: &CohortConfig,
) -> Result<Vec<SyntheticSubject>> {
    if n_subjects < 2 {
        return Err(Error::contract("a cohort needs at least two subjects"));
    }
    cfg.validate()?;
    let min_spacing = 5.0 * cfg.beat_jitter;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut morphs: Vec<SubjectMorphology> = Vec::with_capacity(n_subjects);
    let mut draws = 0;
    while morphs.len() < n_subjects {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(Error::contract(format!(
                "could not place {n_subjects} subjects {min_spacing} apart with spread {}",
                cfg.spread
            )));
        }
        let m = draw_morphology(&mut rng, cfg, morphs.len());
        if m.validate().is_ok()
            && morphs
                .iter()
                .all(|o| morphology_spacing(o, &m) >= min_spacing)
        {
            morphs.push(m);
        }
    }

    let mut subjects = Vec::with_capacity(n_subjects);
    for (i, base) in morphs.into_iter().enumerate() {
        let subject_id = format!("S{:02}", i + 1);
        let mut sessions = Vec::new();
        for (k, (role, dur)) in [(Role::Enroll, cfg.enroll_s), (Role::Test, cfg.test_s)]
            .into_iter()
            .enumerate()
        {
            let mut m = base.clone();
            m.seed = rng.gen();
            // small per-session differences in heart rate and electrode contact
            m.bpm *= rng.gen_range(0.95..1.05);
            let gain = rng.gen_range(0.98..1.02);
            for w in [&mut m.p, &mut m.q, &mut m.r, &mut m.s, &mut m.t] {
                w.amplitude *= gain;
            }
            let (mut record, truth) = generate_record(&m, dur, cfg.fs)?;
            record.subject_id = subject_id.clone();
            record.session_id = format!("s{}", k + 1);
            sessions.push(SyntheticSession {
                role,
                record,
                truth,
            });
        }
        subjects.push(SyntheticSubject {
            subject_id,
            morphology: base,
            sessions,
        });
    }
    Ok(subjects)
}

/// Writes every session as a record file plus a `<name>.truth.csv`
/// sidecar, and a `manifest.csv` tying them together.
pub fn write_cohort(subjects: &[SyntheticSubject], dir: &Path) -> Result<RecordManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = RecordManifest::default();
    for subj in subjects {
        for sess in &subj.sessions {
            let stem = format!("{}_{}", subj.subject_id, sess.record.session_id);
            let path = dir.join(format!("{stem}.csv"));
            write_record(&sess.record, &path)?;
            let truth_path = dir.join(format!("{stem}.truth.csv"));
            let mut text = String::from("r_index\n");
            for r in &sess.truth {
                text.push_str(&format!("{r}\n"));
            }
            std::fs::write(&truth_path, text).map_err(|e| Error::io(&truth_path, e))?;
            manifest.entries.push(ManifestEntry {
                subject_id: subj.subject_id.clone(),
                session_id: sess.record.session_id.clone(),
                path,
                role: sess.role,
            });
        }
    }
    manifest.validate()?;
    manifest.save(dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Reads a truth sidecar written by [`write_cohort`].
pub fn read_truth(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("r_index") {
        return Err(Error::Format {
            path: path.into(),
            msg: "expected `r_index` header".into(),
        });
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            l.parse().map_err(|_| Error::Parse {
                path: path.into(),
                line: i + 2,
                msg: format!("bad index {l:?}"),
            })
        })
        .collect()
}
