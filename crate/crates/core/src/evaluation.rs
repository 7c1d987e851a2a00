//! Leave-one-out evaluation with unseen intruders.
//!
//! For every subject with both enrollment and test sessions, one classifier
//! is trained per other subject, with that subject removed from the negative
//! population and then replayed against it as the intruder. Per-beat
//! decisions give TPR/FPR/BAR; the login timelines give lockout and
//! intrusion figures.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ecgio::{read_record, RecordManifest, Role};
use crate::enroll::{build_template_beat, LabeledRecord, PipelineParams, TemplateBeat};
use crate::error::{Error, Result};
use crate::pipeline::{extract_record, replay, BeatOutcome, EventKind, Extraction, LoginTimeline};
use crate::qrs::Beat;
use crate::svm::{train, SvmConfig, TrainingSet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl ConfusionCounts {
    pub fn tpr(&self) -> Result<f64> {
        ratio(self.tp, self.tp + self.fn_, "no genuine decisions")
    }

    pub fn fpr(&self) -> Result<f64> {
        ratio(self.fp, self.tn + self.fp, "no intruder decisions")
    }

    pub fn tnr(&self) -> Result<f64> {
        ratio(self.tn, self.tn + self.fp, "no intruder decisions")
    }

    pub fn add_genuine(&mut self, timeline: &LoginTimeline) {
        for e in &timeline.events {
            if e.kind == EventKind::VerifiedPositive {
                self.tp += 1;
            } else {
                self.fn_ += 1;
            }
        }
    }

    pub fn add_intruder(&mut self, timeline: &LoginTimeline) {
        for e in &timeline.events {
            if e.kind == EventKind::VerifiedPositive {
                self.fp += 1;
            } else {
                self.tn += 1;
            }
        }
    }
}

fn ratio(num: u64, den: u64, what: &'static str) -> Result<f64> {
    if den == 0 {
        Err(Error::UndefinedMetric(what))
    } else {
        Ok(num as f64 / den as f64)
    }
}

/// Balanced accuracy: the mean of true-positive and true-negative rates.
pub fn bar(counts: &ConfusionCounts) -> Result<f64> {
    Ok(0.5 * (counts.tpr()? + counts.tnr()?))
}

/// Balanced accuracy from a true-positive and a false-positive rate.
pub fn bar_from_rates(tpr: f64, fpr: f64) -> f64 {
    0.5 * (tpr + (1.0 - fpr))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineMetrics {
    pub genuine_lockouts_per_hour: Option<f64>,
    pub mean_time_to_intruder_lockout_s: Option<f64>,
    pub total_intruder_access_s: f64,
}

/// Lockouts per hour over genuine streams, and the total and mean length of
/// authenticated stretches in intruder streams.
pub fn timeline_metrics(
    genuine: &[&LoginTimeline],
    intruder: &[&LoginTimeline],
) -> TimelineMetrics {
    let hours: f64 = genuine.iter().map(|t| t.end_s).sum::<f64>() / 3600.0;
    let lockouts: usize = genuine.iter().map(|t| t.lockouts()).sum();
    let intervals: Vec<f64> = intruder
        .iter()
        .flat_map(|t| t.authenticated_intervals())
        .map(|(a, b)| b - a)
        .collect();
    TimelineMetrics {
        genuine_lockouts_per_hour: (hours > 0.0).then(|| lockouts as f64 / hours),
        mean_time_to_intruder_lockout_s: (!intervals.is_empty())
            .then(|| intervals.iter().sum::<f64>() / intervals.len() as f64),
        total_intruder_access_s: intervals.iter().fold(0.0, |acc, v| acc + v),
    }
}

/// Fraction of `[warmup, end]` a stream spent authenticated.
pub fn authenticated_fraction(timeline: &LoginTimeline, warmup: f64) -> Option<f64> {
    let span = timeline.end_s - warmup;
    (span > 0.0).then(|| timeline.authenticated_seconds(warmup, timeline.end_s) / span)
}

/// Records loaded and beat-detected once, sorted by (subject, session).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<LabeledRecord>,
    pub subjects: Vec<String>,
    pub owners: Vec<String>,
    pub fs: u32,
}

impl Dataset {
    pub fn load(manifest: &RecordManifest) -> Result<Self> {
        manifest.validate()?;
        let records = manifest
            .entries
            .par_iter()
            .map(|e| {
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
                rec.validate()?;
                Ok(LabeledRecord::from_record(&rec, e.role))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_records(records)
    }

    pub fn from_records(mut records: Vec<LabeledRecord>) -> Result<Self> {
        records.sort_by(|a, b| (&a.subject_id, &a.session_id).cmp(&(&b.subject_id, &b.session_id)));
        for w in records.windows(2) {
            if w[0].subject_id == w[1].subject_id && w[0].session_id == w[1].session_id {
                return Err(Error::Manifest(format!(
                    "session {}/{} listed more than once",
                    w[0].subject_id, w[0].session_id
                )));
            }
        }
        let fs = records.first().map(|r| r.fs).unwrap_or(0);
        if records.iter().any(|r| r.fs != fs) {
            return Err(Error::Manifest("records differ in sample rate".into()));
        }
        let mut subjects: Vec<String> = records.iter().map(|r| r.subject_id.clone()).collect();
        subjects.dedup();
        let owners: Vec<String> = subjects
            .iter()
            .filter(|s| {
                let roles = || {
                    records
                        .iter()
                        .filter(|r| &r.subject_id == *s)
                        .map(|r| r.role)
                };
                roles().any(|r| r == Role::Enroll) && roles().any(|r| r == Role::Test)
            })
            .cloned()
            .collect();
        Ok(Dataset {
            records,
            subjects,
            owners,
            fs,
        })
    }

    fn check_protocol(&self) -> Result<()> {
        if self.subjects.len() < 3 {
            return Err(Error::contract(format!(
                "leave-one-out needs at least 3 subjects, manifest has {}",
                self.subjects.len()
            )));
        }
        if self.owners.is_empty() {
            return Err(Error::contract(
                "no subject has both enroll and test sessions",
            ));
        }
        Ok(())
    }
}

/// One (owner, left-out intruder) classifier and its test results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub subject: String,
    pub left_out: String,
    pub population: Vec<String>,
    pub positives: usize,
    pub negatives: usize,
    pub counts: ConfusionCounts,
    pub genuine: Vec<LoginTimeline>,
    pub intruder: Vec<LoginTimeline>,
}

impl CellResult {
    pub fn bar(&self) -> Option<f64> {
        bar(&self.counts).ok()
    }

    pub fn tpr(&self) -> Option<f64> {
        self.counts.tpr().ok()
    }

    pub fn fpr(&self) -> Option<f64> {
        self.counts.fpr().ok()
    }

    pub fn intruder_access_s(&self) -> f64 {
        self.intruder
            .iter()
            .fold(0.0, |acc, t| acc + t.authenticated_seconds(0.0, t.end_s))
    }

    /// Worst genuine authenticated fraction after the first `warmup` s.
    pub fn genuine_auth_fraction(&self, warmup: f64) -> Option<f64> {
        self.genuine
            .iter()
            .filter_map(|t| authenticated_fraction(t, warmup))
            .reduce(f64::min)
    }
}

/// One row of the per-subject summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject_id: String,
    pub test_signal_s: f64,
    pub average_bar: Option<f64>,
    pub average_tpr: Option<f64>,
    pub average_fpr: Option<f64>,
    pub worst_tpr: Option<f64>,
    pub worst_fpr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub params: PipelineParams,
    pub reports: Vec<SubjectReport>,
    pub cells: Vec<CellResult>,
    pub metrics: TimelineMetrics,
}

fn mean(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let vals: Vec<f64> = v.flatten().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Owner template plus feature outcomes for every record in the dataset.
struct OwnerFeatures {
    outcomes: Vec<Vec<BeatOutcome>>,
}

fn owner_features(data: &Dataset, owner: &str, params: &PipelineParams) -> Result<OwnerFeatures> {
    let beats: Vec<Beat> = data
        .records
        .iter()
        .filter(|r| r.subject_id == owner && r.role == Role::Enroll)
        .flat_map(|r| r.beats.iter().cloned())
        .collect();
    let (template, _): (TemplateBeat, usize) = build_template_beat(&beats, params.r_min)?;
    let outcomes = data
        .records
        .iter()
        .map(|r| extract_record(&r.beats, &template, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(OwnerFeatures { outcomes })
}

fn truncated(outcomes: &[BeatOutcome], m: usize) -> Vec<BeatOutcome> {
    outcomes
        .iter()
        .map(|o| match &o.extraction {
            Extraction::Features {
                features,
                contributing,
                oldest_t,
            } if features.len() > m => BeatOutcome {
                t: o.t,
                extraction: Extraction::Features {
                    features: crate::beatmath::FeatureVector(features.0[..m].to_vec()),
                    contributing: *contributing,
                    oldest_t: *oldest_t,
                },
            },
            _ => o.clone(),
        })
        .collect()
}

fn run_cell(
    data: &Dataset,
    feats: &OwnerFeatures,
    owner: &str,
    left_out: &str,
    params: &PipelineParams,
    svm: &SvmConfig,
) -> Result<CellResult> {
    let mut ts = TrainingSet::default();
    let mut population = Vec::new();
    for (rec, outcomes) in data.records.iter().zip(&feats.outcomes) {
        let label = if rec.subject_id == owner && rec.role == Role::Enroll {
            true
        } else if rec.subject_id != owner
            && rec.subject_id != left_out
            && matches!(rec.role, Role::Enroll | Role::Population)
        {
            if population.last() != Some(&rec.subject_id) {
                population.push(rec.subject_id.clone());
            }
            false
        } else {
            continue;
        };
        for o in outcomes {
            if let Extraction::Features { features, .. } = &o.extraction {
                let f = crate::beatmath::FeatureVector(features.0[..params.m].to_vec());
                ts.push(f, label, &rec.subject_id, &rec.session_id);
            }
        }
    }
    let (positives, negatives) = ts.class_counts();
    let model = train(&ts, svm)?;

    let mut counts = ConfusionCounts::default();
    let mut genuine = Vec::new();
    let mut intruder = Vec::new();
    for (rec, outcomes) in data.records.iter().zip(&feats.outcomes) {
        let is_genuine = rec.subject_id == owner && rec.role == Role::Test;
        let is_intruder = rec.subject_id == left_out;
        if !is_genuine && !is_intruder {
            continue;
        }
        let outcomes = truncated(outcomes, params.m);
        let tl = replay(&outcomes, &model, params, rec.duration_s)?;
        if is_genuine {
            counts.add_genuine(&tl);
            genuine.push(tl);
        } else {
            counts.add_intruder(&tl);
            intruder.push(tl);
        }
    }
    Ok(CellResult {
        subject: owner.to_string(),
        left_out: left_out.to_string(),
        population,
        positives,
        negatives,
        counts,
        genuine,
        intruder,
    })
}

fn summarize(data: &Dataset, params: &PipelineParams, cells: Vec<CellResult>) -> Evaluation {
    let reports = data
        .owners
        .iter()
        .map(|s| {
            let mine: Vec<&CellResult> = cells.iter().filter(|c| &c.subject == s).collect();
            SubjectReport {
                subject_id: s.clone(),
                test_signal_s: data
                    .records
                    .iter()
                    .filter(|r| &r.subject_id == s && r.role == Role::Test)
                    .map(|r| r.duration_s)
                    .sum(),
                average_bar: mean(mine.iter().map(|c| c.bar())),
                average_tpr: mean(mine.iter().map(|c| c.tpr())),
                average_fpr: mean(mine.iter().map(|c| c.fpr())),
                worst_tpr: mine.iter().filter_map(|c| c.tpr()).reduce(f64::min),
                worst_fpr: mine.iter().filter_map(|c| c.fpr()).reduce(f64::max),
            }
        })
        .collect();
    let genuine: Vec<&LoginTimeline> = cells.iter().flat_map(|c| c.genuine.iter()).collect();
    let intruder: Vec<&LoginTimeline> = cells.iter().flat_map(|c| c.intruder.iter()).collect();
    let metrics = timeline_metrics(&genuine, &intruder);
    Evaluation {
        params: params.clone(),
        reports,
        cells,
        metrics,
    }
}

/// Features for each owner at the largest `M` any caller will need.
fn prepare(data: &Dataset, params: &PipelineParams) -> Result<Vec<OwnerFeatures>> {
    data.owners
        .par_iter()
        .map(|o| owner_features(data, o, params).map_err(|e| e.for_subject(o)))
        .collect()
}

fn evaluate_prepared(
    data: &Dataset,
    feats: &[OwnerFeatures],
    params: &PipelineParams,
    svm: &SvmConfig,
) -> Result<Evaluation> {
    let jobs: Vec<(usize, &String)> = data
        .owners
        .iter()
        .enumerate()
        .flat_map(|(k, o)| {
            data.subjects
                .iter()
                .filter(move |s| *s != o)
                .map(move |s| (k, s))
        })
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(k, left_out)| {
            let owner = &data.owners[k];
            run_cell(data, &feats[k], owner, left_out, params, svm)
                .map_err(|e| e.for_subject(owner))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(data, params, cells))
}

pub fn leave_one_out(
    data: &Dataset,
    params: &PipelineParams,
    svm: &SvmConfig,
) -> Result<Evaluation> {
    params.validate()?;
    data.check_protocol()?;
    let feats = prepare(data, params)?;
    evaluate_prepared(data, &feats, params, svm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub t_avg: f64,
    pub m: usize,
    pub avg_bar: Option<f64>,
    pub worst_bar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    /// Index of the cell with the highest average BAR.
    pub best: Option<usize>,
}

pub fn sweep_cell(eval: &Evaluation) -> SweepCell {
    SweepCell {
        t_avg: eval.params.t_avg,
        m: eval.params.m,
        avg_bar: mean(eval.cells.iter().map(|c| c.bar())),
        worst_bar: eval.cells.iter().filter_map(|c| c.bar()).reduce(f64::min),
    }
}

/// Runs leave-one-out over every `(t_avg, M)` pair. Features are extracted
/// once per `t_avg` at the largest `M` and truncated per cell.
pub fn parameter_sweep(
    data: &Dataset,
    base: &PipelineParams,
    t_avg_grid: &[f64],
    m_grid: &[usize],
    svm: &SvmConfig,
) -> Result<SweepResult> {
    if t_avg_grid.is_empty() || m_grid.is_empty() {
        return Err(Error::contract("sweep grids must be nonempty"));
    }
    data.check_protocol()?;
    let m_max = *m_grid.iter().max().unwrap();
    let mut cells = Vec::new();
    for &t_avg in t_avg_grid {
        let wide = PipelineParams {
            t_avg,
            m: m_max,
            ..base.clone()
        };
        wide.validate()?;
        let feats = prepare(data, &wide)?;
        for &m in m_grid {
            let params = PipelineParams { m, ..wide.clone() };
            params.validate()?;
            let eval = evaluate_prepared(data, &feats, &params, svm)?;
            cells.push(sweep_cell(&eval));
        }
    }
    let best = cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.avg_bar.map(|b| (i, b)))
        .fold(None, |acc: Option<(usize, f64)>, (i, b)| match acc {
            Some((_, best)) if best >= b => acc,
            _ => Some((i, b)),
        })
        .map(|(i, _)| i);
    Ok(SweepResult { cells, best })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{:.4}", 100.0 * x))
}

/// `hh:mm:ss`
pub fn format_duration(seconds: f64) -> String {
    let s = seconds.round() as u64;
    format!("{:02}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
}

pub fn write_report_csv<W: Write>(reports: &[SubjectReport], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "subject,test_len_hhmm,avg_bar,avg_tpr,avg_fpr,worst_tpr,worst_fpr"
    )?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.subject_id,
            format_duration(r.test_signal_s),
            pct(r.average_bar),
            pct(r.average_tpr),
            pct(r.average_fpr),
            pct(r.worst_tpr),
            pct(r.worst_fpr)
        )?;
    }
    Ok(())
}

/// Per-classifier detail, including which subjects formed its population.
pub fn write_cells_csv<W: Write>(eval: &Evaluation, mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "subject,left_out,population,positives,negatives,tp,fn,tn,fp,bar,tpr,fpr,genuine_auth_fraction,genuine_lockouts,intruder_access_s"
    )?;
    for c in &eval.cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3}",
            c.subject,
            c.left_out,
            c.population.join(";"),
            c.positives,
            c.negatives,
            c.counts.tp,
            c.counts.fn_,
            c.counts.tn,
            c.counts.fp,
            pct(c.bar()),
            pct(c.tpr()),
            pct(c.fpr()),
            pct(c.genuine_auth_fraction(eval.params.t_v)),
            c.genuine.iter().map(|t| t.lockouts()).sum::<usize>(),
            c.intruder_access_s()
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(sweep: &SweepResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "t_avg,M,avg_bar,worst_bar")?;
    for c in &sweep.cells {
        writeln!(
            w,
            "{},{},{},{}",
            c.t_avg,
            c.m,
            pct(c.avg_bar),
            pct(c.worst_bar)
        )?;
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

impl Evaluation {
    /// Writes `report.csv`, `cells.csv` and `metrics.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("report.csv"), |b| {
            write_report_csv(&self.reports, b)
        })?;
        write_file(&dir.join("cells.csv"), |b| write_cells_csv(self, b))?;
        let json = serde_json::to_string_pretty(&self.metrics)?;
        write_file(&dir.join("metrics.json"), |b| writeln!(b, "{json}"))
    }
}

impl SweepResult {
    /// Writes `sweep.csv` and `best.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("sweep.csv"), |b| write_sweep_csv(self, b))?;
        let best = self.best.map(|i| &self.cells[i]);
        let json = serde_json::to_string_pretty(&best)?;
        write_file(&dir.join("best.json"), |b| writeln!(b, "{json}"))
    }
}
