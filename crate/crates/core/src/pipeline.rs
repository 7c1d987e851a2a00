//! Streaming verification: prescreen, FIFO beat buffer, weighted averaging,
//! DCT features, SVM decision and the n-in-t_v login rule.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::beatmath::{
    cluster_ranks_from_distances, euclidean, kaiser_weights, pearson_with, weighted_average,
    DctMatrix, FeatureVector, SeriesStats,
};
use crate::ecgio::EcgRecord;
use crate::enroll::{PipelineParams, SubjectModel, TemplateBeat};
use crate::error::{Error, Result};
use crate::qrs::{extract_beats, Beat};
use crate::svm::{predict, SvmModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RejectReason {
    ZeroVariance,
    Correlation(f64),
    Amplitude { min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prescreen {
    Accept(f64),
    Reject(RejectReason),
}

impl Prescreen {
    pub fn accepted(&self) -> bool {
        matches!(self, Prescreen::Accept(_))
    }
}

/// Accepts a window iff it correlates with the template at `r_min` or
/// better and stays inside the enrollment amplitude band.
pub fn prescreen_window(window: &[f64], template: &TemplateBeat, r_min: f64) -> Prescreen {
    let stats = SeriesStats {
        mean: template.mean,
        std: template.std,
    };
    let r = match pearson_with(window, &template.samples, stats) {
        Ok(r) => r,
        Err(_) => return Prescreen::Reject(RejectReason::ZeroVariance),
    };
    if r < r_min {
        return Prescreen::Reject(RejectReason::Correlation(r));
    }
    let min = window.iter().copied().fold(f64::INFINITY, f64::min);
    let max = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min < template.amp_lo || max > template.amp_hi {
        return Prescreen::Reject(RejectReason::Amplitude { min, max });
    }
    Prescreen::Accept(r)
}

pub fn prescreen(beat: &Beat, model: &SubjectModel) -> Prescreen {
    prescreen_window(&beat.window, &model.template, model.params.r_min)
}

/// Beats seen within the last `t_avg` seconds, oldest first, with their
/// pairwise distances.
#[derive(Debug, Clone)]
pub struct BeatBuffer {
    t_avg: f64,
    beats: VecDeque<(Vec<f64>, f64)>,
    dist: VecDeque<VecDeque<f64>>,
}

impl BeatBuffer {
    pub fn new(t_avg: f64) -> Self {
        BeatBuffer {
            t_avg,
            beats: VecDeque::new(),
            dist: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.beats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beats.is_empty()
    }

    pub fn oldest(&self) -> Option<f64> {
        self.beats.front().map(|b| b.1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.beats.iter().map(|b| b.1)
    }

    /// Drops every beat older than `now - t_avg`.
    pub fn evict(&mut self, now: f64) {
        while let Some(&(_, t)) = self.beats.front() {
            if now - t > self.t_avg {
                self.beats.pop_front();
                self.dist.pop_front();
                for row in self.dist.iter_mut() {
                    row.pop_front();
                }
            } else {
                break;
            }
        }
    }

    pub fn push(&mut self, window: Vec<f64>, t: f64) {
        let mut row: VecDeque<f64> = self
            .beats
            .iter()
            .map(|(b, _)| euclidean(b, &window))
            .collect();
        for (r, &d) in self.dist.iter_mut().zip(row.iter()) {
            r.push_back(d);
        }
        row.push_back(0.0);
        self.dist.push_back(row);
        self.beats.push_back((window, t));
    }

    /// Cluster-rank weights over the buffer contents, in buffer order.
    pub fn weights(&self, beta: f64) -> Vec<f64> {
        let rows: Vec<Vec<f64>> = self
            .dist
            .iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        let ranks = cluster_ranks_from_distances(&rows);
        let by_rank = kaiser_weights(self.len(), beta);
        ranks.iter().map(|&r| by_rank[r - 1]).collect()
    }

    pub fn windows(&self) -> Vec<&[f64]> {
        self.beats.iter().map(|(b, _)| b.as_slice()).collect()
    }
}

/// Outcome of pushing one beat through the feature stage.
#[derive(Debug, Clone, PartialEq)]
pub enum Extraction {
    Rejected(RejectReason),
    Features {
        features: FeatureVector,
        contributing: usize,
        /// Timestamp of the oldest beat that contributed.
        oldest_t: f64,
    },
}

/// A beat's timestamp together with its feature-stage outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatOutcome {
    pub t: f64,
    pub extraction: Extraction,
}

/// Prescreen, buffer, weight, average and transform.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    template: TemplateBeat,
    params: PipelineParams,
    dct: DctMatrix,
    buffer: BeatBuffer,
    last_t: f64,
}

impl FeatureExtractor {
    pub fn new(template: TemplateBeat, params: PipelineParams) -> Result<Self> {
        params.validate()?;
        let dct = DctMatrix::new(params.beat_len, params.m)?;
        Ok(FeatureExtractor {
            template,
            buffer: BeatBuffer::new(params.t_avg),
            params,
            dct,
            last_t: f64::NEG_INFINITY,
        })
    }

    pub fn buffer(&self) -> &BeatBuffer {
        &self.buffer
    }

    pub fn process(&mut self, window: &[f64], t: f64) -> Result<Extraction> {
        if t < self.last_t {
            return Err(Error::contract(format!(
                "beat at {t} s arrived after one at {} s",
                self.last_t
            )));
        }
        if window.len() != self.params.beat_len {
            return Err(Error::contract(format!(
                "beat length {} != {}",
                window.len(),
                self.params.beat_len
            )));
        }
        self.last_t = t;
        if let Prescreen::Reject(reason) =
            prescreen_window(window, &self.template, self.params.r_min)
        {
            return Ok(Extraction::Rejected(reason));
        }
        self.buffer.evict(t);
        self.buffer.push(window.to_vec(), t);
        let weights = self.buffer.weights(self.params.beta);
        let averaged = weighted_average(&self.buffer.windows(), &weights, t)?;
        let features = FeatureVector(self.dct.apply(&averaged.samples)?);
        Ok(Extraction::Features {
            features,
            contributing: averaged.contributing_count,
            oldest_t: self.buffer.oldest().unwrap_or(t),
        })
    }
}

/// Runs a whole record through a fresh extractor.
pub fn extract_record(
    beats: &[Beat],
    template: &TemplateBeat,
    params: &PipelineParams,
) -> Result<Vec<BeatOutcome>> {
    let mut ex = FeatureExtractor::new(template.clone(), params.clone())?;
    beats
        .iter()
        .map(|b| {
            Ok(BeatOutcome {
                t: b.t,
                extraction: ex.process(&b.window, b.t)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoginState {
    Locked,
    Authenticated,
}

impl fmt::Display for LoginState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LoginState::Locked => "locked",
            LoginState::Authenticated => "authenticated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    BeatRejectedPrescreen,
    VerifiedPositive,
    VerifiedNegative,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::BeatRejectedPrescreen => "beat_rejected_prescreen",
            EventKind::VerifiedPositive => "verified_positive",
            EventKind::VerifiedNegative => "verified_negative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationEvent {
    pub t: f64,
    pub kind: EventKind,
    pub margin: Option<f64>,
    pub contributing_count: usize,
    /// Login state after this event was taken into account.
    pub state: LoginState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub t: f64,
    pub state: LoginState,
}

/// Everything that happened while verifying one stream.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoginTimeline {
    pub events: Vec<VerificationEvent>,
    /// State changes; the stream starts locked, so the first entry (if any)
    /// is an authentication.
    pub transitions: Vec<Transition>,
    pub end_s: f64,
}

impl LoginTimeline {
    /// Authenticated intervals `[start, end)`, clipped to the stream end.
    pub fn authenticated_intervals(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut open: Option<f64> = None;
        for tr in &self.transitions {
            match (tr.state, open) {
                (LoginState::Authenticated, None) => open = Some(tr.t),
                (LoginState::Locked, Some(s)) => {
                    out.push((s, tr.t));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(s) = open {
            out.push((s, self.end_s.max(s)));
        }
        out
    }

    /// Seconds spent authenticated within `[from, to]`.
    pub fn authenticated_seconds(&self, from: f64, to: f64) -> f64 {
        self.authenticated_intervals()
            .iter()
            .fold(0.0, |acc, &(a, b)| acc + (b.min(to) - a.max(from)).max(0.0))
    }

    pub fn lockouts(&self) -> usize {
        self.transitions
            .iter()
            .filter(|t| t.state == LoginState::Locked)
            .count()
    }

    pub fn final_state(&self) -> LoginState {
        self.transitions
            .last()
            .map_or(LoginState::Locked, |t| t.state)
    }

    pub fn positives(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::VerifiedPositive)
            .count()
    }

    /// Plot-ready CSV: one row per beat event plus one `state_change` row
    /// per login transition, in time order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_s,kind,margin,contributing,login_state")?;
        let mut tr = self.transitions.iter().peekable();
        for e in &self.events {
            while let Some(t) = tr.next_if(|t| t.t < e.t) {
                writeln!(w, "{:.6},state_change,,,{}", t.t, t.state)?;
            }
            let margin = e.margin.map(|m| format!("{m:.9}")).unwrap_or_default();
            let contributing = if e.kind == EventKind::BeatRejectedPrescreen {
                String::new()
            } else {
                e.contributing_count.to_string()
            };
            writeln!(
                w,
                "{:.6},{},{},{},{}",
                e.t, e.kind, margin, contributing, e.state
            )?;
            while let Some(t) = tr.next_if(|t| t.t == e.t) {
                writeln!(w, "{:.6},state_change,,,{}", t.t, t.state)?;
            }
        }
        for t in tr {
            writeln!(w, "{:.6},state_change,,,{}", t.t, t.state)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// The n-positives-in-t_v rule.
#[derive(Debug, Clone)]
pub struct DecisionState {
    n: usize,
    t_v: f64,
    positives: VecDeque<f64>,
    state: LoginState,
}

impl DecisionState {
    pub fn new(n: usize, t_v: f64) -> Self {
        DecisionState {
            n,
            t_v,
            positives: VecDeque::new(),
            state: LoginState::Locked,
        }
    }

    pub fn state(&self) -> LoginState {
        self.state
    }

    pub fn record_positive(&mut self, t: f64) {
        self.positives.push_back(t);
    }

    /// Re-evaluates the login state at `now`; returns the new state if it
    /// changed.
    pub fn update(&mut self, now: f64) -> Option<LoginState> {
        while let Some(&t) = self.positives.front() {
            if t <= now - self.t_v {
                self.positives.pop_front();
            } else {
                break;
            }
        }
        let count = self.positives.iter().filter(|&&t| t <= now).count();
        let next = if count >= self.n {
            LoginState::Authenticated
        } else {
            LoginState::Locked
        };
        if next != self.state {
            self.state = next;
            Some(next)
        } else {
            None
        }
    }
}

/// Classifies feature-stage outcomes and keeps the login timeline, with a
/// 1 Hz clock driving the decision rule through beat-free stretches.
#[derive(Debug, Clone)]
pub struct LoginTracker<'m> {
    svm: &'m SvmModel,
    decision: DecisionState,
    timeline: LoginTimeline,
    next_tick: f64,
}

impl<'m> LoginTracker<'m> {
    pub fn new(svm: &'m SvmModel, params: &PipelineParams) -> Self {
        LoginTracker {
            svm,
            decision: DecisionState::new(params.n, params.t_v),
            timeline: LoginTimeline::default(),
            next_tick: 1.0,
        }
    }

    pub fn state(&self) -> LoginState {
        self.decision.state()
    }

    fn decide(&mut self, now: f64) {
        if let Some(state) = self.decision.update(now) {
            self.timeline.transitions.push(Transition { t: now, state });
        }
    }

    /// Runs every clock tick up to and including `now`.
    pub fn tick(&mut self, now: f64) {
        while self.next_tick <= now {
            let t = self.next_tick;
            self.decide(t);
            self.next_tick += 1.0;
        }
        self.timeline.end_s = self.timeline.end_s.max(now);
    }

    pub fn observe(&mut self, outcome: &BeatOutcome) -> Result<VerificationEvent> {
        let t = outcome.t;
        // ticks strictly before the beat, so silence is judged before it
        while self.next_tick < t {
            let tick = self.next_tick;
            self.decide(tick);
            self.next_tick += 1.0;
        }
        let (kind, margin, contributing) = match &outcome.extraction {
            Extraction::Rejected(_) => (EventKind::BeatRejectedPrescreen, None, 0),
            Extraction::Features {
                features,
                contributing,
                ..
            } => {
                let (z, m) = predict(self.svm, features)?;
                if z {
                    self.decision.record_positive(t);
                    (EventKind::VerifiedPositive, Some(m), *contributing)
                } else {
                    (EventKind::VerifiedNegative, Some(m), *contributing)
                }
            }
        };
        self.decide(t);
        let event = VerificationEvent {
            t,
            kind,
            margin,
            contributing_count: contributing,
            state: self.decision.state(),
        };
        self.timeline.events.push(event.clone());
        self.timeline.end_s = self.timeline.end_s.max(t);
        Ok(event)
    }

    pub fn finish(mut self, end_s: f64) -> LoginTimeline {
        self.tick(end_s);
        self.timeline.end_s = self.timeline.end_s.max(end_s);
        self.timeline
    }
}

/// Replays precomputed feature outcomes through the decision layer.
pub fn replay(
    outcomes: &[BeatOutcome],
    svm: &SvmModel,
    params: &PipelineParams,
    end_s: f64,
) -> Result<LoginTimeline> {
    let mut tracker = LoginTracker::new(svm, params);
    for o in outcomes {
        tracker.observe(o)?;
    }
    Ok(tracker.finish(end_s))
}

/// One verification pipeline bound to a subject model.
#[derive(Debug, Clone)]
pub struct Verifier<'m> {
    extractor: FeatureExtractor,
    tracker: LoginTracker<'m>,
}

impl<'m> Verifier<'m> {
    pub fn new(model: &'m SubjectModel) -> Result<Self> {
        Ok(Verifier {
            extractor: FeatureExtractor::new(model.template.clone(), model.params.clone())?,
            tracker: LoginTracker::new(&model.svm, &model.params),
        })
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn state(&self) -> LoginState {
        self.tracker.state()
    }

    pub fn process_beat(&mut self, beat: &Beat) -> Result<VerificationEvent> {
        let extraction = self.extractor.process(&beat.window, beat.t)?;
        self.tracker.observe(&BeatOutcome {
            t: beat.t,
            extraction,
        })
    }

    pub fn tick(&mut self, now: f64) {
        self.tracker.tick(now);
    }

    pub fn finish(self, end_s: f64) -> LoginTimeline {
        self.tracker.finish(end_s)
    }
}

/// Detects, segments and verifies a whole record.
pub fn verify_record(model: &SubjectModel, record: &EcgRecord) -> Result<LoginTimeline> {
    if record.fs != model.fs {
        return Err(Error::contract(format!(
            "record sampled at {} Hz but model enrolled at {} Hz",
            record.fs, model.fs
        )));
    }
    let mut v = Verifier::new(model)?;
    for beat in extract_beats(record) {
        v.process_beat(&beat)?;
    }
    Ok(v.finish(record.duration_s()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffer_evicts_by_age_only() {
        let mut b = BeatBuffer::new(18.0);
        for k in 0..30 {
            b.evict(k as f64);
            b.push(vec![k as f64; 4], k as f64);
        }
        assert_eq!(b.len(), 19);
        assert_eq!(b.oldest(), Some(11.0));
        b.evict(60.0);
        assert!(b.is_empty());
    }

    #[test]
    fn buffer_distances_track_contents() {
        let mut b = BeatBuffer::new(5.0);
        let beats: Vec<Vec<f64>> = (0..8).map(|k| vec![(k * k) as f64, k as f64]).collect();
        for (k, v) in beats.iter().enumerate() {
            b.evict(k as f64);
            b.push(v.clone(), k as f64);
        }
        let live = &beats[2..];
        for (i, row) in b.dist.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                assert_eq!(d, euclidean(&live[i], &live[j]));
            }
        }
    }

    #[test]
    fn decision_threshold_is_inclusive() {
        let mut d = DecisionState::new(10, 30.0);
        for k in 0..9 {
            d.record_positive(1.0 + k as f64);
        }
        assert_eq!(d.update(10.0), None);
        assert_eq!(d.state(), LoginState::Locked);
        d.record_positive(10.0);
        assert_eq!(d.update(10.0), Some(LoginState::Authenticated));
        // positive at t = 1 leaves the half-open window (now - 30, now] at 31
        assert_eq!(d.update(30.5), None);
        assert_eq!(d.update(31.0), Some(LoginState::Locked));
    }

    #[test]
    fn timeline_intervals_and_csv() {
        let tl = LoginTimeline {
            events: vec![VerificationEvent {
                t: 2.0,
                kind: EventKind::VerifiedPositive,
                margin: Some(1.5),
                contributing_count: 3,
                state: LoginState::Authenticated,
            }],
            transitions: vec![
                Transition {
                    t: 2.0,
                    state: LoginState::Authenticated,
                },
                Transition {
                    t: 14.0,
                    state: LoginState::Locked,
                },
            ],
            end_s: 20.0,
        };
        assert_eq!(tl.authenticated_intervals(), vec![(2.0, 14.0)]);
        assert_eq!(tl.authenticated_seconds(0.0, 20.0), 12.0);
        assert_eq!(tl.authenticated_seconds(10.0, 20.0), 4.0);
        let mut out = Vec::new();
        tl.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "t_s,kind,margin,contributing,login_state\n\
             2.000000,verified_positive,1.500000000,3,authenticated\n\
             2.000000,state_change,,,authenticated\n\
             14.000000,state_change,,,locked\n"
        );
    }
}
