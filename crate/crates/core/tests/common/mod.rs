//! Independent reference implementations shared by the test targets.

#![allow(dead_code)]

use ecgauth::beatmath::{euclidean, FeatureVector};
use ecgauth::svm::TrainingSet;

/// Pearson via the raw-moment formula, a different route from the
/// centred two-pass one.
pub fn pearson_raw_moments(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// I0 by Simpson quadrature of (1/pi) * int_0^pi exp(x cos t) dt.
pub fn bessel_i0_quadrature(x: f64) -> f64 {
    let n = 4000;
    let h = std::f64::consts::PI / n as f64;
    let f = |t: f64| (x * t.cos()).exp();
    let mut s = f(0.0) + f(std::f64::consts::PI);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0 / std::f64::consts::PI
}

/// Textbook average-linkage agglomeration over explicit clusters; a beat's
/// rank is the order in which it leaves singleton status.
pub fn average_linkage_ranks(beats: &[Vec<f64>]) -> Vec<usize> {
    let b = beats.len();
    let mut clusters: Vec<Vec<usize>> = (0..b).map(|i| vec![i]).collect();
    let mut ranks = vec![0usize; b];
    let mut next = 1;
    if b == 1 {
        return vec![1];
    }
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let mut total = 0.0;
                for &p in &clusters[i] {
                    for &q in &clusters[j] {
                        total += euclidean(&beats[p], &beats[q]);
                    }
                }
                let d = total / (clusters[i].len() * clusters[j].len()) as f64;
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (_, i, j) = best;
        let mut joining: Vec<usize> = [&clusters[i], &clusters[j]]
            .iter()
            .filter(|c| c.len() == 1)
            .map(|c| c[0])
            .collect();
        joining.sort_unstable();
        for k in joining {
            ranks[k] = next;
            next += 1;
        }
        let merged = clusters.remove(j);
        clusters[i].extend(merged);
    }
    ranks
}

/// The DCT-II sum evaluated term by term with 1-based k and n.
pub fn naive_dct(a: &[f64], m: usize) -> Vec<f64> {
    let n = a.len();
    let nf = n as f64;
    (1..=m)
        .map(|k| {
            let delta: f64 = if k == 1 { 1.0 } else { 0.0 };
            let scale = (2.0 / nf).sqrt() / (1.0 + delta).sqrt();
            scale
                * (1..=n)
                    .map(|i| {
                        a[i - 1]
                            * (std::f64::consts::PI / (2.0 * nf)
                                * (2.0 * i as f64 - 1.0)
                                * (k as f64 - 1.0))
                                .cos()
                    })
                    .sum::<f64>()
        })
        .collect()
}

pub fn set(rows: &[(Vec<f64>, bool)]) -> TrainingSet {
    let mut ts = TrainingSet::default();
    for (i, (x, y)) in rows.iter().enumerate() {
        ts.push(
            FeatureVector(x.clone()),
            *y,
            if *y { "own" } else { "pop" },
            &format!("s{i}"),
        );
    }
    ts
}

/// Population z-score, computed here rather than through the library.
pub fn standardize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let dim = rows[0].len();
    let mean: Vec<f64> = (0..dim)
        .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n)
        .collect();
    let sd: Vec<f64> = (0..dim)
        .map(|k| (rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    rows.iter()
        .map(|r| (0..dim).map(|k| (r[k] - mean[k]) / sd[k]).collect())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn primal(x: &[Vec<f64>], y: &[f64], ub: &[f64], w: &[f64], b: f64) -> f64 {
    0.5 * dot(w, w)
        + x.iter()
            .zip(y)
            .zip(ub)
            .map(|((xi, yi), u)| u * (1.0 - yi * (dot(w, xi) + b)).max(0.0))
            .sum::<f64>()
}

/// Solves `a z = rhs` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        rhs.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / a[i][i]).collect())
}

/// Maximum of the soft-margin dual found by enumerating which multipliers
/// sit at zero, at their upper bound, or strictly between. Each face's
/// stationary point solves a small linear system; the best feasible one is
/// the optimum, which equals the primal optimum by strong duality.
pub fn dual_optimum(x: &[Vec<f64>], y: &[f64], ub: &[f64]) -> f64 {
    let n = x.len();
    let q = |i: usize, j: usize| y[i] * y[j] * dot(&x[i], &x[j]);
    let mut best = f64::NEG_INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let state: Vec<usize> = (0..n).map(|i| code / 3usize.pow(i as u32) % 3).collect();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 1).collect();
        let mut alpha: Vec<f64> = (0..n)
            .map(|i| if state[i] == 2 { ub[i] } else { 0.0 })
            .collect();
        if free.is_empty() {
            if dot(&alpha, y).abs() > 1e-12 {
                continue;
            }
        } else {
            // unknowns: alpha over the free set, then the equality multiplier
            let m = free.len();
            let mut a = vec![vec![0.0; m + 1]; m + 1];
            let mut rhs = vec![0.0; m + 1];
            for (r, &i) in free.iter().enumerate() {
                for (c, &j) in free.iter().enumerate() {
                    a[r][c] = q(i, j);
                }
                a[r][m] = y[i];
                rhs[r] = 1.0
                    - (0..n)
                        .filter(|&j| state[j] == 2)
                        .map(|j| q(i, j) * ub[j])
                        .sum::<f64>();
                a[m][r] = y[i];
            }
            rhs[m] = -(0..n)
                .filter(|&j| state[j] == 2)
                .map(|j| y[j] * ub[j])
                .sum::<f64>();
            let Some(z) = solve(a, rhs) else { continue };
            if free
                .iter()
                .enumerate()
                .any(|(r, &i)| z[r] <= 0.0 || z[r] >= ub[i])
            {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = z[r];
            }
        }
        let quad: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| alpha[i] * alpha[j] * q(i, j))
            .sum();
        let value = alpha.iter().sum::<f64>() - 0.5 * quad;
        best = best.max(value);
    }
    best
}

/// Matches each truth index to the nearest unused detection within `tol`
/// samples. Returns (matched, worst error in samples, unmatched detections).
pub fn match_peaks(truth: &[usize], detected: &[usize], tol: usize) -> (usize, usize, usize) {
    let mut used = vec![false; detected.len()];
    let mut matched = 0;
    let mut worst = 0;
    for &t in truth {
        let best = detected
            .iter()
            .enumerate()
            .filter(|(i, &d)| !used[*i] && d.abs_diff(t) <= tol)
            .min_by_key(|(_, &d)| d.abs_diff(t));
        if let Some((i, &d)) = best {
            used[i] = true;
            matched += 1;
            worst = worst.max(d.abs_diff(t));
        }
    }
    (matched, worst, used.iter().filter(|u| !**u).count())
}

/// Standardised rows, labels, balanced box bounds and the exact optimum of
/// the soft-margin problem a trainer with cost `c` should solve.
pub fn qp_reference(rows: &[(Vec<f64>, bool)], c: f64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, f64) {
    let raw: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    let x = standardize(&raw);
    let y: Vec<f64> = rows.iter().map(|r| if r.1 { 1.0 } else { -1.0 }).collect();
    let pos = rows.iter().filter(|r| r.1).count() as f64;
    let neg = rows.len() as f64 - pos;
    let n = rows.len() as f64;
    let ub: Vec<f64> = rows
        .iter()
        .map(|r| c * n / (2.0 * if r.1 { pos } else { neg }))
        .collect();
    let opt = dual_optimum(&x, &y, &ub);
    (x, y, ub, opt)
}
