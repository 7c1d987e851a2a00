//! Enrollment: template beat, amplitude band, training features and the
//! per-subject classifier.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::beatmath::{pearson, SeriesStats};
use crate::ecgio::{read_record, EcgRecord, RecordManifest, Role};
use crate::error::{Error, Result};
use crate::pipeline::{extract_record, Extraction};
use crate::qrs::{extract_beats, Beat, BEAT_LEFT, BEAT_LEN};
use crate::svm::{train, SvmConfig, SvmModel, TrainingSet};

pub const MODEL_FORMAT_VERSION: u32 = 1;
/// Fewest beats an enrollment may be built from.
pub const MIN_ENROLL_BEATS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    /// Age horizon of the beat buffer, seconds.
    pub t_avg: f64,
    /// Retained DCT coefficients.
    pub m: usize,
    /// Minimum template correlation for a beat to be used.
    pub r_min: f64,
    /// Decision window, seconds.
    pub t_v: f64,
    /// Positive verifications required inside the decision window.
    pub n: usize,
    /// Kaiser window shape.
    pub beta: f64,
    pub beat_len: usize,
    pub beat_left: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            t_avg: 18.0,
            m: 40,
            r_min: 0.9,
            t_v: 30.0,
            n: 10,
            beta: 6.0,
            beat_len: BEAT_LEN,
            beat_left: BEAT_LEFT,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::contract(m));
        if !(self.t_avg > 0.0) {
            return fail(format!("t_avg must be positive, got {}", self.t_avg));
        }
        if self.m < 1 || self.m > self.beat_len {
            return fail(format!(
                "M must lie in 1..={}, got {}",
                self.beat_len, self.m
            ));
        }
        if !(self.r_min > 0.0 && self.r_min < 1.0) {
            return fail(format!("r_min must lie in (0, 1), got {}", self.r_min));
        }
        if !(self.t_v > 0.0) {
            return fail(format!("t_v must be positive, got {}", self.t_v));
        }
        if self.n < 1 {
            return fail("n must be at least 1".into());
        }
        if !(self.beta >= 0.0) {
            return fail(format!("beta must be nonnegative, got {}", self.beta));
        }
        if self.beat_len != BEAT_LEN || self.beat_left != BEAT_LEFT {
            return fail(format!(
                "beat geometry is fixed at {BEAT_LEN} samples, {BEAT_LEFT} left"
            ));
        }
        Ok(())
    }
}

/// Owner template with its precomputed statistics and amplitude band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateBeat {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub amp_lo: f64,
    pub amp_hi: f64,
}

impl TemplateBeat {
    pub fn new(samples: Vec<f64>, amp_lo: f64, amp_hi: f64) -> Result<Self> {
        let stats = SeriesStats::of(&samples)?;
        if !(amp_lo < amp_hi) {
            return Err(Error::contract("amplitude band is empty"));
        }
        Ok(TemplateBeat {
            samples,
            mean: stats.mean,
            std: stats.std,
            amp_lo,
            amp_hi,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectModel {
    pub format_version: u32,
    pub subject_id: String,
    pub fs: u32,
    pub template: TemplateBeat,
    pub svm: SvmModel,
    pub params: PipelineParams,
}

impl SubjectModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: SubjectModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::contract(format!(
                "model format version {} not supported",
                model.format_version
            )));
        }
        model.params.validate()?;
        if model.template.samples.len() != model.params.beat_len
            || model.svm.dim() != model.params.m
        {
            return Err(Error::contract(
                "model dimensions disagree with its parameters",
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Sorted copy of column `k` across `beats`, so sums do not depend on
/// beat order.
fn sorted_column<B: AsRef<[f64]>>(beats: &[B], k: usize) -> Vec<f64> {
    let mut col: Vec<f64> = beats.iter().map(|b| b.as_ref()[k]).collect();
    col.sort_by(f64::total_cmp);
    col
}

fn median_sorted(col: &[f64]) -> f64 {
    let n = col.len();
    if n % 2 == 1 {
        col[n / 2]
    } else {
        0.5 * (col[n / 2 - 1] + col[n / 2])
    }
}

/// Linear-interpolated percentile of sorted data.
fn percentile_sorted(v: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Robust template: correlate every beat against the elementwise median and
/// average the ones that reach `r_min`.
///
/// Returns the template and the indices of the surviving beats.
pub fn build_template<B: AsRef<[f64]>>(beats: &[B], r_min: f64) -> Result<(Vec<f64>, Vec<usize>)> {
    if beats.len() < MIN_ENROLL_BEATS {
        return Err(Error::EnrollmentQuality(format!(
            "{} beats detected, at least {MIN_ENROLL_BEATS} required",
            beats.len()
        )));
    }
    let len = beats[0].as_ref().len();
    if beats.iter().any(|b| b.as_ref().len() != len) {
        return Err(Error::contract("enrollment beats differ in length"));
    }
    let median: Vec<f64> = (0..len)
        .map(|k| median_sorted(&sorted_column(beats, k)))
        .collect();
    let survivors: Vec<usize> = beats
        .iter()
        .enumerate()
        .filter(|(_, b)| pearson(b.as_ref(), &median).is_ok_and(|r| r >= r_min))
        .map(|(i, _)| i)
        .collect();
    if 2 * survivors.len() < beats.len() {
        return Err(Error::EnrollmentQuality(format!(
            "only {} of {} beats correlate with the median beat",
            survivors.len(),
            beats.len()
        )));
    }
    let kept: Vec<&[f64]> = survivors.iter().map(|&i| beats[i].as_ref()).collect();
    let n = kept.len() as f64;
    let template = (0..len)
        .map(|k| sorted_column(&kept, k).iter().sum::<f64>() / n)
        .collect();
    Ok((template, survivors))
}

/// Amplitude band from the 1st percentile of beat minima and the 99th
/// percentile of beat maxima, widened by a quarter of their span each way.
pub fn amplitude_thresholds<B: AsRef<[f64]>>(beats: &[B]) -> Result<(f64, f64)> {
    if beats.is_empty() {
        return Err(Error::contract(
            "amplitude thresholds need at least one beat",
        ));
    }
    let mut mins: Vec<f64> = beats
        .iter()
        .map(|b| b.as_ref().iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let mut maxs: Vec<f64> = beats
        .iter()
        .map(|b| b.as_ref().iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    mins.sort_by(f64::total_cmp);
    maxs.sort_by(f64::total_cmp);
    let mn = percentile_sorted(&mins, 1.0);
    let mx = percentile_sorted(&maxs, 99.0);
    let span = mx - mn;
    Ok((mn - 0.25 * span, mx + 0.25 * span))
}

/// Template and amplitude band from an owner's enrollment beats.
pub fn build_template_beat(beats: &[Beat], r_min: f64) -> Result<(TemplateBeat, usize)> {
    let windows: Vec<&[f64]> = beats.iter().map(|b| b.window.as_slice()).collect();
    let (template, survivors) = build_template(&windows, r_min)?;
    let kept: Vec<&[f64]> = survivors.iter().map(|&i| windows[i]).collect();
    let (lo, hi) = amplitude_thresholds(&kept)?;
    Ok((TemplateBeat::new(template, lo, hi)?, survivors.len()))
}

/// A record with its detected beats, ready for enrollment or evaluation.
#[derive(Debug, Clone)]
pub struct LabeledRecord {
    pub subject_id: String,
    pub session_id: String,
    pub role: Role,
    pub fs: u32,
    pub duration_s: f64,
    pub beats: Vec<Beat>,
}

impl LabeledRecord {
    pub fn from_record(record: &EcgRecord, role: Role) -> Self {
        LabeledRecord {
            subject_id: record.subject_id.clone(),
            session_id: record.session_id.clone(),
            role,
            fs: record.fs,
            duration_s: record.duration_s(),
            beats: extract_beats(record),
        }
    }
}

/// One line of the enrollment provenance log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvenanceRow {
    pub subject: String,
    pub session: String,
    pub role: Role,
    pub beats_detected: usize,
    pub beats_surviving: usize,
}

pub fn write_provenance<W: Write>(rows: &[ProvenanceRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "subject,session,role,beats_detected,beats_surviving")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.subject, r.session, r.role, r.beats_detected, r.beats_surviving
        )?;
    }
    Ok(())
}

/// Streams owner records (label 1) and population records (label 0)
/// through the feature stage with the owner's template.
pub fn build_training_set(
    owner: &[&LabeledRecord],
    population: &[&LabeledRecord],
    template: &TemplateBeat,
    params: &PipelineParams,
) -> Result<(TrainingSet, Vec<ProvenanceRow>)> {
    let mut ts = TrainingSet::default();
    let mut provenance = Vec::new();
    for (records, label) in [(owner, true), (population, false)] {
        for rec in records {
            if rec.role == Role::Test {
                return Err(Error::contract(format!(
                    "test session {}/{} offered for training",
                    rec.subject_id, rec.session_id
                )));
            }
            let mut accepted = 0;
            for o in extract_record(&rec.beats, template, params)? {
                if let Extraction::Features { features, .. } = o.extraction {
                    ts.push(features, label, &rec.subject_id, &rec.session_id);
                    accepted += 1;
                }
            }
            provenance.push(ProvenanceRow {
                subject: rec.subject_id.clone(),
                session: rec.session_id.clone(),
                role: rec.role,
                beats_detected: rec.beats.len(),
                beats_surviving: accepted,
            });
        }
    }
    if ts.class_counts().0 == 0 {
        return Err(Error::EnrollmentQuality(
            "owner enrollment produced no feature vectors".into(),
        ));
    }
    Ok((ts, provenance))
}

/// Everything produced by one enrollment.
#[derive(Debug, Clone)]
pub struct Enrollment {
    pub model: SubjectModel,
    pub provenance: Vec<ProvenanceRow>,
}

/// Builds a subject model from pre-detected records.
pub fn enroll_from_records(
    subject_id: &str,
    owner: &[&LabeledRecord],
    population: &[&LabeledRecord],
    params: &PipelineParams,
    svm: &SvmConfig,
) -> Result<Enrollment> {
    let run = || -> Result<Enrollment> {
        params.validate()?;
        if owner.is_empty() {
            return Err(Error::contract("no enrollment records"));
        }
        if population.is_empty() {
            return Err(Error::contract(
                "no population records for the negative class",
            ));
        }
        let fs = owner[0].fs;
        if owner.iter().chain(population).any(|r| r.fs != fs) {
            return Err(Error::contract("records differ in sample rate"));
        }
        let beats: Vec<Beat> = owner.iter().flat_map(|r| r.beats.iter().cloned()).collect();
        let (template, _) = build_template_beat(&beats, params.r_min)?;
        let (ts, provenance) = build_training_set(owner, population, &template, params)?;
        let svm = train(&ts, svm)?;
        Ok(Enrollment {
            model: SubjectModel {
                format_version: MODEL_FORMAT_VERSION,
                subject_id: subject_id.to_string(),
                fs,
                template,
                svm,
                params: params.clone(),
            },
            provenance,
        })
    };
    run().map_err(|e| e.for_subject(subject_id))
}

/// Enrolls `subject_id` from the manifest: its `enroll` sessions are the
/// owner data and every other subject's `enroll`/`population` sessions the
/// generic population. Test and intruder-pool sessions are never read.
pub fn enroll_subject(
    manifest: &RecordManifest,
    subject_id: &str,
    params: &PipelineParams,
    svm: &SvmConfig,
) -> Result<Enrollment> {
    manifest.validate()?;
    let load = |e: &crate::ecgio::ManifestEntry| -> Result<LabeledRecord> {
        let rec = read_record(&e.path)?;
        if rec.subject_id != e.subject_id || rec.session_id != e.session_id {
            return Err(Error::Manifest(format!(
                "{} holds {}/{}, manifest says {}/{}",
                e.path.display(),
                rec.subject_id,
                rec.session_id,
                e.subject_id,
                e.session_id
            )));
        }
        Ok(LabeledRecord::from_record(&rec, e.role))
    };
    let owner: Vec<LabeledRecord> = manifest
        .records_of(subject_id)
        .filter(|e| e.role == Role::Enroll)
        .map(load)
        .collect::<Result<_>>()
        .map_err(|e| e.for_subject(subject_id))?;
    if owner.is_empty() {
        return Err(Error::contract("manifest has no enroll session").for_subject(subject_id));
    }
    let population: Vec<LabeledRecord> = manifest
        .entries
        .iter()
        .filter(|e| e.subject_id != subject_id && matches!(e.role, Role::Enroll | Role::Population))
        .map(load)
        .collect::<Result<_>>()
        .map_err(|e| e.for_subject(subject_id))?;
    let owner_refs: Vec<&LabeledRecord> = owner.iter().collect();
    let pop_refs: Vec<&LabeledRecord> = population.iter().collect();
    enroll_from_records(subject_id, &owner_refs, &pop_refs, params, svm)
}
