//! Density-based clustering over rows of a feature table.

/// Noise label.
pub const NOISE: i64 = -1;

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Standard DBSCAN. Core points have at least `min_pts` neighbors within
/// `eps` (the point itself counts); clusters are density-connected
/// components; border points join the first core point that discovers
/// them, scanning in index order, so labels are deterministic.
pub fn dbscan_cluster(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<i64> {
    let n = points.len();
    let mut labels = vec![NOISE; n];
    if n == 0 {
        return labels;
    }
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| euclidean(&points[i], &points[j]) <= eps)
                .collect()
        })
        .collect();
    let is_core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= min_pts).collect();

    let mut visited = vec![false; n];
    let mut cluster = 0i64;
    for start in 0..n {
        if visited[start] || !is_core[start] {
            continue;
        }
        // Grow one cluster from this core point.
        let mut queue = vec![start];
        visited[start] = true;
        labels[start] = cluster;
        while let Some(p) = queue.pop() {
            for &q in &neighbors[p] {
                if labels[q] == NOISE {
                    labels[q] = cluster;
                }
                if is_core[q] && !visited[q] {
                    visited[q] = true;
                    queue.push(q);
                }
            }
        }
        cluster += 1;
    }
    labels
}

/// 90th-percentile k-NN distance, the default DBSCAN radius when the
/// caller does not pin one. Percentile by nearest-rank on the sorted
/// distances.
pub fn knn_distance_percentile(points: &[Vec<f64>], k: usize, percentile: f64) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let k = k.min(n - 1);
    let mut knn: Vec<f64> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| euclidean(&points[i], &points[j]))
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            d[k - 1]
        })
        .collect();
    knn.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((percentile * n as f64).ceil() as usize).clamp(1, n);
    knn[rank - 1]
}

/// Z-score each column using only rows without NaN; constant columns map
/// to 0. Returns the standardized complete rows and their original row
/// indices.
pub fn zscore_complete_rows(table: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let complete: Vec<usize> = (0..table.len())
        .filter(|&r| table[r].iter().all(|v| !v.is_nan()))
        .collect();
    if complete.is_empty() {
        return (Vec::new(), complete);
    }
    let cols = table[complete[0]].len();
    let n = complete.len() as f64;
    let mut mean = vec![0.0; cols];
    for &r in &complete {
        for c in 0..cols {
            mean[c] += table[r][c];
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut std = vec![0.0; cols];
    for &r in &complete {
        for c in 0..cols {
            std[c] += (table[r][c] - mean[c]).powi(2);
        }
    }
    for s in std.iter_mut() {
        *s = (*s / n).sqrt();
    }
    let rows = complete
        .iter()
        .map(|&r| {
            (0..cols)
                .map(|c| {
                    if std[c] < 1e-12 {
                        0.0
                    } else {
                        (table[r][c] - mean[c]) / std[c]
                    }
                })
                .collect()
        })
        .collect();
    (rows, complete)
}
