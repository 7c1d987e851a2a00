/// Euclidean distance between two equal-length vectors.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Rank each beat by the agglomeration step at which it first joins a
/// cluster under average linkage on Euclidean distance.
///
/// Input order is buffer order (index 0 is the oldest beat). Returned ranks
/// are 1-based; rank 1 is the most central beat.
pub fn cluster_ranks<B: AsRef<[f64]>>(beats: &[B]) -> Vec<usize> {
    let n = beats.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclidean(beats[i].as_ref(), beats[j].as_ref());
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    cluster_ranks_from_distances(&dist)
}

/// Same as [`cluster_ranks`] but from a precomputed symmetric distance
/// matrix (row `i` holds distances from beat `i`).
///
/// Closest-pair ties are broken by the oldest member of each cluster, so
/// the result depends only on distances and buffer order.
pub fn cluster_ranks_from_distances<R: AsRef<[f64]>>(dist: &[R]) -> Vec<usize> {
    let n = dist.len();
    let mut ranks = vec![0usize; n];
    if n == 0 {
        return ranks;
    }
    if n == 1 {
        ranks[0] = 1;
        return ranks;
    }

    // Slot i holds the cluster whose oldest member is beat i.
    let mut d: Vec<Vec<f64>> = dist.iter().map(|r| r.as_ref().to_vec()).collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut next_rank = 1;

    for _ in 0..(n - 1) {
        let mut best = (usize::MAX, usize::MAX);
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if active[j] && d[i][j] < best_d {
                    best_d = d[i][j];
                    best = (i, j);
                }
            }
        }
        let (i, j) = best;
        if i == usize::MAX {
            // only NaN distances remain; unranked beats go last in buffer order
            break;
        }

        if size[i] == 1 {
            ranks[i] = next_rank;
            next_rank += 1;
        }
        if size[j] == 1 {
            ranks[j] = next_rank;
            next_rank += 1;
        }

        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if active[k] && k != i && k != j {
                let merged = (ni * d[i][k] + nj * d[j][k]) / (ni + nj);
                d[i][k] = merged;
                d[k][i] = merged;
            }
        }
        size[i] += size[j];
        active[j] = false;
    }
    for r in ranks.iter_mut().filter(|r| **r == 0) {
        *r = next_rank;
        next_rank += 1;
    }
    ranks
}
