//! Per-subject linear soft-margin SVM.
//!
//! Training minimises
//!
//! ```text
//! 0.5 |w|^2 + C * sum_i cw(y_i) * max(0, 1 - y_i (w . x_i + b))
//! ```
//!
//! over z-scored features, with an unregularised bias. The dual is solved by
//! SMO with second-order working-set selection; iteration stops once the
//! duality gap falls below `gap_tol * (1 + |primal|)` or the iteration budget
//! runs out.

use serde::{Deserialize, Serialize};

use crate::beatmath::FeatureVector;
use crate::error::{Error, Result};

/// Rows of features with binary labels (`true` = owner).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub x: Vec<FeatureVector>,
    pub y: Vec<bool>,
    /// (subject, session) each row came from.
    pub provenance: Vec<(String, String)>,
}

impl TrainingSet {
    pub fn push(&mut self, x: FeatureVector, y: bool, subject: &str, session: &str) {
        self.x.push(x);
        self.y.push(y);
        self.provenance
            .push((subject.to_string(), session.to_string()));
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.y.iter().filter(|&&v| v).count();
        (pos, self.y.len() - pos)
    }

    fn validate(&self) -> Result<usize> {
        if self.x.len() != self.y.len() || self.x.len() != self.provenance.len() {
            return Err(Error::contract("training set columns differ in length"));
        }
        let (pos, neg) = self.class_counts();
        if pos == 0 || neg == 0 {
            return Err(Error::contract(format!(
                "training needs both classes ({pos} positive, {neg} negative rows)"
            )));
        }
        let dim = self.x[0].len();
        if dim == 0 || self.x.iter().any(|r| r.len() != dim) {
            return Err(Error::contract("training rows differ in dimension"));
        }
        if self.x.iter().any(|r| r.0.iter().any(|v| !v.is_finite())) {
            return Err(Error::contract("training rows contain non-finite values"));
        }
        Ok(dim)
    }
}

/// Misclassification cost multipliers per class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub positive: f64,
    pub negative: f64,
}

impl ClassWeights {
    /// Inverse class frequency, scaled so a balanced set gets weight one.
    pub fn balanced(positives: usize, negatives: usize) -> Self {
        let n = (positives + negatives) as f64;
        ClassWeights {
            positive: n / (2.0 * positives.max(1) as f64),
            negative: n / (2.0 * negatives.max(1) as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    /// `None` selects [`ClassWeights::balanced`] from the training counts.
    pub class_weights: Option<ClassWeights>,
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            class_weights: None,
            gap_tol: 1e-6,
            max_iter: 200_000,
        }
    }
}

/// Per-feature z-score parameters from the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: &[FeatureVector]) -> Self {
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(&r.0) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(&r.0).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                // a constant feature standardises to exactly zero
                if sd > 1e-12 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Scaler {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub scaler: Scaler,
    pub c: f64,
    pub class_weights: ClassWeights,
}

/// Solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub iterations: usize,
    pub primal: f64,
    pub dual: f64,
    pub converged: bool,
}

impl TrainStats {
    pub fn gap(&self) -> f64 {
        self.primal - self.dual
    }
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Signed score `w . standardize(d) + b`.
    pub fn margin(&self, d: &[f64]) -> Result<f64> {
        if d.len() != self.w.len() {
            return Err(Error::contract(format!(
                "feature length {} != model dimension {}",
                d.len(),
                self.w.len()
            )));
        }
        let s = self.scaler.apply(d);
        Ok(dot(&self.w, &s) + self.b)
    }

    /// Primal objective of this model on standardised training data.
    pub fn primal_objective(&self, ts: &TrainingSet) -> f64 {
        let rows: Vec<Vec<f64>> = ts.x.iter().map(|r| self.scaler.apply(&r.0)).collect();
        let hinge: f64 = rows
            .iter()
            .zip(&ts.y)
            .map(|(x, &y)| {
                let (sign, cw) = if y {
                    (1.0, self.class_weights.positive)
                } else {
                    (-1.0, self.class_weights.negative)
                };
                self.c * cw * (1.0 - sign * (dot(&self.w, x) + self.b)).max(0.0)
            })
            .sum();
        0.5 * dot(&self.w, &self.w) + hinge
    }
}

/// `(z, margin)`; ties at margin zero reject.
pub fn predict(model: &SvmModel, d: &FeatureVector) -> Result<(bool, f64)> {
    let m = model.margin(&d.0)?;
    Ok((m > 0.0, m))
}

pub fn train(ts: &TrainingSet, config: &SvmConfig) -> Result<SvmModel> {
    train_with_stats(ts, config).map(|(m, _)| m)
}

pub fn train_with_stats(ts: &TrainingSet, config: &SvmConfig) -> Result<(SvmModel, TrainStats)> {
    let dim = ts.validate()?;
    if !(config.c > 0.0) {
        return Err(Error::contract("C must be positive"));
    }
    let (pos, neg) = ts.class_counts();
    let cw = config
        .class_weights
        .unwrap_or_else(|| ClassWeights::balanced(pos, neg));
    if !(cw.positive > 0.0 && cw.negative > 0.0) {
        return Err(Error::contract("class weights must be positive"));
    }
    let scaler = Scaler::fit(&ts.x);
    let x: Vec<Vec<f64>> = ts.x.iter().map(|r| scaler.apply(&r.0)).collect();
    let y: Vec<f64> = ts.y.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect();
    let upper: Vec<f64> =
        ts.y.iter()
            .map(|&v| config.c * if v { cw.positive } else { cw.negative })
            .collect();

    let mut smo = Smo::new(&x, &y, &upper, dim);
    let stats = smo.solve(config.gap_tol, config.max_iter);
    let b = smo.best_bias();
    Ok((
        SvmModel {
            w: smo.w,
            b,
            scaler,
            c: config.c,
            class_weights: cw,
        },
        stats,
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const TAU: f64 = 1e-12;

struct Smo<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    upper: &'a [f64],
    alpha: Vec<f64>,
    /// Gradient of the dual (minimisation form): `y_k (w . x_k) - 1`.
    grad: Vec<f64>,
    diag: Vec<f64>,
    w: Vec<f64>,
}

impl<'a> Smo<'a> {
    fn new(x: &'a [Vec<f64>], y: &'a [f64], upper: &'a [f64], dim: usize) -> Self {
        let n = x.len();
        Smo {
            x,
            y,
            upper,
            alpha: vec![0.0; n],
            grad: vec![-1.0; n],
            diag: x.iter().map(|r| dot(r, r)).collect(),
            w: vec![0.0; dim],
        }
    }

    fn in_up(&self, t: usize) -> bool {
        if self.y[t] > 0.0 {
            self.alpha[t] < self.upper[t]
        } else {
            self.alpha[t] > 0.0
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if self.y[t] > 0.0 {
            self.alpha[t] > 0.0
        } else {
            self.alpha[t] < self.upper[t]
        }
    }

    /// Second-order working set selection; `None` once the maximal KKT
    /// violation is negligible.
    fn select(&self) -> Option<(usize, usize)> {
        let n = self.alpha.len();
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if self.in_up(t) {
                let v = -self.y[t] * self.grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        if i == usize::MAX {
            return None;
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        let xi = &self.x[i];
        for t in 0..n {
            if !self.in_low(t) {
                continue;
            }
            let v = -self.y[t] * self.grad[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > 0.0 {
                let a = self.diag[i] + self.diag[t] - 2.0 * dot(xi, &self.x[t]);
                let a = if a > 0.0 { a } else { TAU };
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if j == usize::MAX || gmax - gmin < 1e-12 {
            return None;
        }
        Some((i, j))
    }

    fn step(&mut self, i: usize, j: usize) {
        let (yi, yj) = (self.y[i], self.y[j]);
        let (ci, cj) = (self.upper[i], self.upper[j]);
        let kij = dot(&self.x[i], &self.x[j]);
        let qij = yi * yj * kij;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if yi != yj {
            let quad = self.diag[i] + self.diag[j] + 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > ci - cj {
                if ai > ci {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if aj > cj {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            let quad = self.diag[i] + self.diag[j] - 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > ci {
                if ai > ci {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > cj {
                if aj > cj {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let di = (ai - old_i) * yi;
        let dj = (aj - old_j) * yj;
        for ((w, a), b) in self.w.iter_mut().zip(&self.x[i]).zip(&self.x[j]) {
            *w += di * a + dj * b;
        }
        for k in 0..self.x.len() {
            self.grad[k] = self.y[k] * dot(&self.w, &self.x[k]) - 1.0;
        }
    }

    fn decision_values(&self) -> Vec<f64> {
        self.grad
            .iter()
            .zip(self.y)
            .map(|(g, y)| y * (g + 1.0))
            .collect()
    }

    /// Exact minimiser over `b` of the weighted hinge sum for the current
    /// `w`; the midpoint is taken when the minimum is a flat interval.
    fn best_bias(&self) -> f64 {
        let f = self.decision_values();
        let mut knots: Vec<(f64, f64)> = f
            .iter()
            .zip(self.y)
            .zip(self.upper)
            .map(|((fk, y), u)| (y - fk, *u))
            .collect();
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total_pos: f64 = self
            .y
            .iter()
            .zip(self.upper)
            .filter(|(y, _)| **y > 0.0)
            .map(|(_, u)| u)
            .sum();
        let scale: f64 = self.upper.iter().sum();
        let mut slope = -total_pos;
        let mut k = 0;
        while k < knots.len() {
            // every knot at this position changes the slope together
            let at = knots[k].0;
            while k < knots.len() && knots[k].0 == at {
                slope += knots[k].1;
                k += 1;
            }
            if slope > 1e-12 * scale {
                return at;
            }
            if slope >= -1e-12 * scale {
                // flat stretch up to the next knot
                return match knots.get(k) {
                    Some(&(v, _)) => 0.5 * (at + v),
                    None => at,
                };
            }
        }
        knots.last().map_or(0.0, |k| k.0)
    }

    fn objectives(&self) -> (f64, f64) {
        let b = self.best_bias();
        let ww = dot(&self.w, &self.w);
        let hinge: f64 = self
            .decision_values()
            .iter()
            .zip(self.y)
            .zip(self.upper)
            .map(|((f, y), u)| u * (1.0 - y * (f + b)).max(0.0))
            .sum();
        let primal = 0.5 * ww + hinge;
        let dual = self.alpha.iter().sum::<f64>() - 0.5 * ww;
        (primal, dual)
    }

    fn solve(&mut self, gap_tol: f64, max_iter: usize) -> TrainStats {
        let check_every = 10;
        let mut iterations = 0;
        loop {
            if iterations % check_every == 0 {
                let (primal, dual) = self.objectives();
                if primal - dual <= gap_tol * (1.0 + primal.abs()) {
                    return TrainStats {
                        iterations,
                        primal,
                        dual,
                        converged: true,
                    };
                }
            }
            if iterations >= max_iter {
                let (primal, dual) = self.objectives();
                return TrainStats {
                    iterations,
                    primal,
                    dual,
                    converged: false,
                };
            }
            let Some((i, j)) = self.select() else {
                let (primal, dual) = self.objectives();
                let converged = primal - dual <= gap_tol * (1.0 + primal.abs());
                return TrainStats {
                    iterations,
                    primal,
                    dual,
                    converged,
                };
            };
            self.step(i, j);
            iterations += 1;
        }
    }
}
