use crate::error::{Error, Result};

/// Mean and sample standard deviation of a series, precomputable for a
/// static template.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesStats {
    pub mean: f64,
    pub std: f64,
}

impl SeriesStats {
    pub fn of(x: &[f64]) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::contract("correlation needs at least two points"));
        }
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
        let std = (ss / (n - 1.0)).sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::ZeroVariance);
        }
        Ok(SeriesStats { mean, std })
    }
}

/// Sample Pearson correlation of two equal-length series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let ys = SeriesStats::of(y)?;
    pearson_with(x, y, ys)
}

/// Pearson correlation with the `y`-side statistics supplied by the caller.
///
/// `r = (sum x_i y_i - N xbar ybar) / ((N - 1) s_x s_y)`, clamped to [-1, 1].
pub fn pearson_with(x: &[f64], y: &[f64], y_stats: SeriesStats) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::contract(format!(
            "pearson length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let xs = SeriesStats::of(x)?;
    let n = x.len() as f64;
    // centred form of the cross term; algebraically equal to sum(xy) - N*xbar*ybar
    let cross: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - xs.mean) * (b - y_stats.mean))
        .sum();
    let r = cross / ((n - 1.0) * xs.std * y_stats.std);
    Ok(r.clamp(-1.0, 1.0))
}
