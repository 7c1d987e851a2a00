//! Per-beat mathematics: correlation prescreen, cluster-rank weighting and
//! the DCT feature transform.

mod cluster;
mod dct;
mod kaiser;
mod pearson;

pub use cluster::{cluster_ranks, cluster_ranks_from_distances, euclidean};
pub use dct::{dct_features, DctMatrix, FeatureVector};
pub use kaiser::{bessel_i0, kaiser_weights};
pub use pearson::{pearson, pearson_with, SeriesStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weighted average of the beats currently held in the buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedBeat {
    pub samples: Vec<f64>,
    pub t: f64,
    pub contributing_count: usize,
}

/// Elementwise `sum_j weights[j] * beats[j]`.
///
/// Weights must be nonnegative and sum to one within `1e-9`.
pub fn weighted_average<B: AsRef<[f64]>>(
    beats: &[B],
    weights: &[f64],
    t: f64,
) -> Result<AveragedBeat> {
    if beats.is_empty() {
        return Err(Error::contract("weighted_average needs at least one beat"));
    }
    if beats.len() != weights.len() {
        return Err(Error::contract(format!(
            "{} beats but {} weights",
            beats.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::contract("weights must be nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "weights sum to {total}, expected 1"
        )));
    }
    let n = beats[0].as_ref().len();
    let mut samples = vec![0.0; n];
    for (beat, &w) in beats.iter().zip(weights) {
        let beat = beat.as_ref();
        if beat.len() != n {
            return Err(Error::contract("beats differ in length"));
        }
        for (acc, &x) in samples.iter_mut().zip(beat) {
            *acc += w * x;
        }
    }
    Ok(AveragedBeat {
        samples,
        t,
        contributing_count: beats.len(),
    })
}
