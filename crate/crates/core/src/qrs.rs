//! Streaming QRS detection and beat segmentation.
//!
//! The detector follows the Pan-Tompkins chain: 5-15 Hz band-pass (second
//! order Butterworth low-pass and high-pass sections designed for the record's
//! sample rate), five-point derivative, squaring and a 150 ms moving-window
//! integrator. Peaks of the integrated signal are classified with adaptive
//! signal/noise levels, a 200 ms refractory period, T-wave slope rejection and
//! search-back at half threshold. Every accepted peak is then moved to the
//! largest raw sample within 25 ms of the band-pass fiducial.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::ecgio::EcgRecord;
use crate::error::{Error, Result};

/// Samples per beat window.
pub const BEAT_LEN: usize = 256;
/// Samples preceding the R-peak inside a beat window.
pub const BEAT_LEFT: usize = 78;
/// Samples following the R-peak inside a beat window.
pub const BEAT_RIGHT: usize = BEAT_LEN - BEAT_LEFT - 1;

const REFRACTORY_S: f64 = 0.2;
const T_WAVE_S: f64 = 0.36;
const INTEGRATION_S: f64 = 0.15;
const REFINE_S: f64 = 0.025;
const SEED_S: f64 = 2.0;
const SEARCH_BACK_RR: f64 = 1.66;
const RR_HISTORY: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RPeak {
    pub index: usize,
    pub time_s: f64,
}

impl RPeak {
    pub fn new(index: usize, fs: u32) -> Self {
        RPeak {
            index,
            time_s: index as f64 / fs as f64,
        }
    }
}

/// A fixed-length window around a detected R-peak.
#[derive(Debug, Clone, PartialEq)]
pub struct Beat {
    pub r: RPeak,
    pub window: Vec<f64>,
    pub t: f64,
}

/// Cuts `[r - 78, r + 177]` out of the record as floating point.
pub fn segment_beat(record: &EcgRecord, r: RPeak) -> Result<Beat> {
    segment_samples(&record.samples, r)
}

pub(crate) fn segment_samples(samples: &[i32], r: RPeak) -> Result<Beat> {
    if r.index < BEAT_LEFT || r.index + BEAT_RIGHT >= samples.len() {
        return Err(Error::Boundary {
            index: r.index,
            left: BEAT_LEFT,
            right: BEAT_RIGHT,
        });
    }
    let window = samples[r.index - BEAT_LEFT..=r.index + BEAT_RIGHT]
        .iter()
        .map(|&v| v as f64)
        .collect();
    Ok(Beat {
        r,
        window,
        t: r.time_s,
    })
}

/// Runs the detector over a whole record.
pub fn detect_beats(record: &EcgRecord) -> Vec<RPeak> {
    let mut det = QrsDetector::new(record.fs);
    let mut peaks = Vec::new();
    for &x in &record.samples {
        peaks.extend(det.push(x));
    }
    peaks.extend(det.finish());
    peaks
}

/// Detects and segments every beat with enough context on both sides.
pub fn extract_beats(record: &EcgRecord) -> Vec<Beat> {
    detect_beats(record)
        .into_iter()
        .filter_map(|r| segment_beat(record, r).ok())
        .collect()
}

#[derive(Debug, Clone)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl Biquad {
    fn butterworth(fs: f64, fc: f64, highpass: bool) -> Self {
        let k = (std::f64::consts::PI * fc / fs).tan();
        let q = std::f64::consts::SQRT_2;
        let norm = 1.0 / (1.0 + q * k + k * k);
        let b = if highpass {
            [norm, -2.0 * norm, norm]
        } else {
            let b0 = k * k * norm;
            [b0, 2.0 * b0, b0]
        };
        let a = [2.0 * (k * k - 1.0) * norm, (1.0 - q * k + k * k) * norm];
        Biquad {
            b,
            a,
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1]
            - self.a[0] * self.y[0]
            - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }

    /// Complex response at normalised angular frequency `w`.
    fn response(&self, w: f64) -> (f64, f64) {
        let z1 = (w.cos(), -w.sin());
        let z2 = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b[0] + self.b[1] * z1.0 + self.b[2] * z2.0,
            self.b[1] * z1.1 + self.b[2] * z2.1,
        );
        let den = (
            1.0 + self.a[0] * z1.0 + self.a[1] * z2.0,
            self.a[0] * z1.1 + self.a[1] * z2.1,
        );
        let d2 = den.0 * den.0 + den.1 * den.1;
        (
            (num.0 * den.0 + num.1 * den.1) / d2,
            (num.1 * den.0 - num.0 * den.1) / d2,
        )
    }
}

/// Group delay in samples of a biquad cascade at `freq` Hz.
fn group_delay(stages: &[&Biquad], fs: f64, freq: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * freq / fs;
    let h = 1e-4;
    let phase = |w: f64| -> f64 {
        stages
            .iter()
            .map(|s| {
                let (re, im) = s.response(w);
                im.atan2(re)
            })
            .sum()
    };
    let mut dphi = phase(w + h) - phase(w - h);
    while dphi > std::f64::consts::PI {
        dphi -= 2.0 * std::f64::consts::PI;
    }
    while dphi < -std::f64::consts::PI {
        dphi += 2.0 * std::f64::consts::PI;
    }
    -dphi / (2.0 * h)
}

/// Fixed-capacity history addressed by absolute sample index.
#[derive(Debug, Clone)]
struct History {
    buf: Vec<f64>,
}

impl History {
    fn new(cap: usize) -> Self {
        History {
            buf: vec![0.0; cap],
        }
    }

    fn set(&mut self, i: usize, v: f64) {
        let cap = self.buf.len();
        self.buf[i % cap] = v;
    }

    fn get(&self, i: usize) -> f64 {
        self.buf[i % self.buf.len()]
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    value: f64,
    slope: f64,
    r: usize,
}

/// Single-stream QRS detector. Feed samples in order with [`push`]; call
/// [`finish`] at end of stream to flush peaks still awaiting look-ahead.
///
/// [`push`]: QrsDetector::push
/// [`finish`]: QrsDetector::finish
#[derive(Debug, Clone)]
pub struct QrsDetector {
    fs: u32,
    lowpass: Biquad,
    highpass: Biquad,
    offset: Option<f64>,

    integ_len: usize,
    half_win: usize,
    refine: usize,
    bp_delay: usize,
    refractory: usize,
    t_wave: usize,
    seed_len: usize,

    raw: History,
    bp: History,
    slope: History,
    mwi: History,
    sq: History,
    sq_sum: f64,
    next: usize,

    seeded: bool,
    seed_max: f64,
    seed_sum: f64,
    seed_count: usize,
    pending: Vec<Candidate>,

    spk: f64,
    npk: f64,
    last: Option<Candidate>,
    rr: VecDeque<usize>,
    noise_since_last: Vec<Candidate>,
}

impl QrsDetector {
    pub fn new(fs: u32) -> Self {
        let fsf = fs as f64;
        let lowpass = Biquad::butterworth(fsf, 15.0, false);
        let highpass = Biquad::butterworth(fsf, 5.0, true);
        let bp_delay = group_delay(&[&lowpass, &highpass], fsf, 10.0)
            .round()
            .max(0.0) as usize;
        let samples = |s: f64| ((s * fsf).round() as usize).max(1);
        let integ_len = samples(INTEGRATION_S);
        let half_win = samples(REFRACTORY_S);
        let refine = samples(REFINE_S);
        let cap = 2 * (half_win + integ_len + bp_delay + refine) + 16;
        QrsDetector {
            fs,
            lowpass,
            highpass,
            offset: None,
            integ_len,
            half_win,
            refine,
            bp_delay,
            refractory: samples(REFRACTORY_S),
            t_wave: samples(T_WAVE_S),
            seed_len: samples(SEED_S),
            raw: History::new(cap),
            bp: History::new(cap),
            slope: History::new(cap),
            mwi: History::new(cap),
            sq: History::new(cap),
            sq_sum: 0.0,
            next: 0,
            seeded: false,
            seed_max: 0.0,
            seed_sum: 0.0,
            seed_count: 0,
            pending: Vec::new(),
            spk: 0.0,
            npk: 0.0,
            last: None,
            rr: VecDeque::with_capacity(RR_HISTORY),
            noise_since_last: Vec::new(),
        }
    }

    pub fn fs(&self) -> u32 {
        self.fs
    }

    /// Number of samples consumed so far.
    pub fn position(&self) -> usize {
        self.next
    }

    pub fn push(&mut self, sample: i32) -> Vec<RPeak> {
        let i = self.next;
        self.next += 1;
        let x = sample as f64;
        // start the filters from rest at the first sample's level
        let offset = *self.offset.get_or_insert(x);
        let bp = self.highpass.step(self.lowpass.step(x - offset));
        self.raw.set(i, x);
        self.bp.set(i, bp);

        let d = if i >= 4 {
            (2.0 * bp + self.bp.get(i - 1) - self.bp.get(i - 3) - 2.0 * self.bp.get(i - 4))
                * self.fs as f64
                / 8.0
        } else {
            0.0
        };
        self.slope.set(i, d.abs());
        let sq = d * d;
        self.sq_sum += sq;
        if i >= self.integ_len {
            self.sq_sum -= self.sq.get(i - self.integ_len);
        }
        self.sq.set(i, sq);
        let m = (self.sq_sum / self.integ_len as f64).max(0.0);
        self.mwi.set(i, m);

        let mut out = Vec::new();
        if !self.seeded {
            self.seed_max = self.seed_max.max(m);
            self.seed_sum += m;
            self.seed_count += 1;
            if self.seed_count == self.seed_len {
                self.seed(&mut out);
            }
        }

        if i >= self.half_win {
            let p = i - self.half_win;
            if self.is_local_max(p, i) {
                let c = self.candidate(p);
                self.offer(c, p, &mut out);
            }
            if self.seeded {
                self.search_back(p, &mut out);
            }
        }
        out
    }

    /// Flushes peaks whose look-ahead window runs past the end of stream.
    ///
    /// The signal is extended by holding its last sample so a QRS cut off by
    /// the end still reaches the thresholds; peaks that land in the
    /// extension are dropped.
    pub fn finish(&mut self) -> Vec<RPeak> {
        let mut out = Vec::new();
        if self.next == 0 {
            return out;
        }
        let real_end = self.next;
        let pad = self.half_win + self.integ_len + self.bp_delay + self.refine;
        let last = self.raw.get(real_end - 1) as i32;
        for _ in 0..pad {
            out.extend(self.push(last));
        }
        if !self.seeded {
            self.seed(&mut out);
        }
        let end = self.next - 1;
        let start = self.next.saturating_sub(self.half_win);
        for p in start..self.next {
            if self.is_local_max(p, end) {
                let c = self.candidate(p);
                self.offer(c, p, &mut out);
            }
        }
        self.search_back(end, &mut out);
        out.retain(|p| p.index < real_end);
        out
    }

    fn seed(&mut self, out: &mut Vec<RPeak>) {
        let mean = self.seed_sum / self.seed_count.max(1) as f64;
        self.spk = 0.25 * self.seed_max;
        self.npk = 0.5 * mean;
        self.seeded = true;
        for c in std::mem::take(&mut self.pending) {
            self.classify(c, out);
        }
    }

    /// `p` is a peak of the integrated signal if it beats everything in
    /// `[p - half_win, p)` and is not exceeded in `(p, upto]`.
    fn is_local_max(&self, p: usize, upto: usize) -> bool {
        let v = self.mwi.get(p);
        if !(v > 0.0) {
            return false;
        }
        let lo = p.saturating_sub(self.half_win);
        (lo..p).all(|q| self.mwi.get(q) < v) && ((p + 1)..=upto).all(|q| self.mwi.get(q) <= v)
    }

    fn candidate(&self, p: usize) -> Candidate {
        let lo = p.saturating_sub(self.integ_len);
        let mut best = p;
        let mut best_bp = f64::NEG_INFINITY;
        let mut slope = 0.0f64;
        for q in lo..=p {
            if self.bp.get(q) > best_bp {
                best_bp = self.bp.get(q);
                best = q;
            }
            slope = slope.max(self.slope.get(q));
        }
        let mark = best.saturating_sub(self.bp_delay);
        let lo = mark.saturating_sub(self.refine);
        let hi = (mark + self.refine).min(self.next - 1);
        let mut r = mark;
        let mut r_val = f64::NEG_INFINITY;
        for q in lo..=hi {
            if self.raw.get(q) > r_val {
                r_val = self.raw.get(q);
                r = q;
            }
        }
        Candidate {
            value: self.mwi.get(p),
            slope,
            r,
        }
    }

    fn offer(&mut self, c: Candidate, p: usize, out: &mut Vec<RPeak>) {
        if !self.seeded {
            self.pending.push(c);
            return;
        }
        self.search_back(p, out);
        self.classify(c, out);
    }

    fn threshold(&self) -> f64 {
        self.npk + 0.25 * (self.spk - self.npk)
    }

    fn qrs_allowed(&self, c: &Candidate) -> bool {
        match self.last {
            None => true,
            Some(last) => {
                if c.r <= last.r || c.r - last.r < self.refractory {
                    return false;
                }
                !(c.r - last.r < self.t_wave && c.slope < 0.5 * last.slope)
            }
        }
    }

    fn classify(&mut self, c: Candidate, out: &mut Vec<RPeak>) {
        if c.value > self.threshold() && self.qrs_allowed(&c) {
            self.spk = 0.125 * c.value + 0.875 * self.spk;
            self.accept(c, out);
        } else {
            self.npk = 0.125 * c.value + 0.875 * self.npk;
            self.noise_since_last.push(c);
        }
    }

    fn accept(&mut self, c: Candidate, out: &mut Vec<RPeak>) {
        if let Some(last) = self.last {
            if self.rr.len() == RR_HISTORY {
                self.rr.pop_front();
            }
            self.rr.push_back(c.r - last.r);
        }
        self.last = Some(c);
        self.noise_since_last.clear();
        out.push(RPeak::new(c.r, self.fs));
    }

    fn search_back(&mut self, now: usize, out: &mut Vec<RPeak>) {
        loop {
            let Some(last) = self.last else { return };
            if self.rr.is_empty() {
                return;
            }
            let rr_mean = self.rr.iter().sum::<usize>() as f64 / self.rr.len() as f64;
            if (now.saturating_sub(last.r) as f64) <= SEARCH_BACK_RR * rr_mean {
                return;
            }
            let thr2 = 0.5 * self.threshold();
            let mut best: Option<(usize, Candidate)> = None;
            for (k, c) in self.noise_since_last.iter().enumerate() {
                if c.value > thr2
                    && c.r > last.r
                    && c.r - last.r >= self.refractory
                    && best.is_none_or(|(_, b)| c.value > b.value)
                {
                    best = Some((k, *c));
                }
            }
            let Some((k, c)) = best else { return };
            let rest = self.noise_since_last.split_off(k + 1);
            self.spk = 0.25 * c.value + 0.75 * self.spk;
            self.accept(c, out);
            self.noise_since_last = rest;
        }
    }
}
