use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::AveragedBeat;
use crate::error::{Error, Result};

/// Leading DCT-II coefficients of an averaged beat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Precomputed orthonormal DCT-II basis, truncated to the first `m` rows.
///
/// Row `k` (1-based) at column `n` (1-based) holds
/// `sqrt(2/N) / sqrt(1 + [k == 1]) * cos(pi / (2N) * (2n - 1) * (k - 1))`.
#[derive(Debug, Clone)]
pub struct DctMatrix {
    n: usize,
    m: usize,
    rows: Vec<f64>,
}

impl DctMatrix {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 || m > n {
            return Err(Error::contract(format!(
                "DCT needs 1 <= M <= N, got N = {n}, M = {m}"
            )));
        }
        let scale = (2.0 / n as f64).sqrt();
        let mut rows = Vec::with_capacity(n * m);
        for k in 1..=m {
            let norm = if k == 1 { 1.0 / 2f64.sqrt() } else { 1.0 };
            for i in 1..=n {
                let angle = PI / (2.0 * n as f64) * (2 * i - 1) as f64 * (k - 1) as f64;
                rows.push(scale * norm * angle.cos());
            }
        }
        Ok(DctMatrix { n, m, rows })
    }

    pub fn input_len(&self) -> usize {
        self.n
    }

    pub fn coefficients(&self) -> usize {
        self.m
    }

    /// Row `k` (0-based) of the basis.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k * self.n..(k + 1) * self.n]
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::contract(format!(
                "DCT input length {} != {}",
                x.len(),
                self.n
            )));
        }
        Ok((0..self.m)
            .map(|k| self.row(k).iter().zip(x).map(|(g, v)| g * v).sum())
            .collect())
    }

    /// `G^T d`: the least-squares reconstruction from `m` coefficients.
    pub fn inverse(&self, d: &[f64]) -> Result<Vec<f64>> {
        if d.len() != self.m {
            return Err(Error::contract(format!(
                "DCT coefficient length {} != {}",
                d.len(),
                self.m
            )));
        }
        let mut out = vec![0.0; self.n];
        for (k, &c) in d.iter().enumerate() {
            for (o, g) in out.iter_mut().zip(self.row(k)) {
                *o += c * g;
            }
        }
        Ok(out)
    }
}

pub fn dct_features(a: &AveragedBeat, g: &DctMatrix) -> Result<FeatureVector> {
    g.apply(&a.samples).map(FeatureVector)
}
