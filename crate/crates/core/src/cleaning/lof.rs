//! Cluster-pruned local outlier factor.
//!
//! DBSCAN output prunes the points that need scoring: per cluster, the
//! mean member-to-center distance is the cluster radius, and only members
//! at or beyond the radius (plus every noise point) enter the candidate
//! set. LOF itself is the classical definition with neighborhoods drawn
//! from *all* points, so pruning changes which points get scored, never
//! their scores.

use crate::cleaning::dbscan::{euclidean, NOISE};
use crate::error::{Error, Result};

/// Reachability floor keeping local densities finite for duplicates.
const DIST_FLOOR: f64 = 1e-12;

/// Points that survive cluster pruning, with their provenance.
#[derive(Clone, Debug)]
pub struct OutlierCandidateSet {
    /// Indices into the point array.
    pub indices: Vec<usize>,
    /// DBSCAN label of each candidate (NOISE for noise points).
    pub cluster_of: Vec<i64>,
    /// Distance to the owning cluster's center (0 for noise points).
    pub distance_to_center: Vec<f64>,
}

/// Admit cluster members with distance-to-center >= radius and every noise
/// point. A radius-0 cluster (all members identical) admits nobody —
/// perfect duplicates are not suspicious.
pub fn build_candidate_set(points: &[Vec<f64>], labels: &[i64]) -> OutlierCandidateSet {
    let mut set = OutlierCandidateSet {
        indices: Vec::new(),
        cluster_of: Vec::new(),
        distance_to_center: Vec::new(),
    };
    if points.is_empty() {
        return set;
    }
    let dim = points[0].len();
    let n_clusters = labels.iter().cloned().max().unwrap_or(NOISE) + 1;

    let mut centers = vec![vec![0.0; dim]; n_clusters.max(0) as usize];
    let mut counts = vec![0usize; n_clusters.max(0) as usize];
    for (p, &l) in points.iter().zip(labels) {
        if l >= 0 {
            for (c, v) in centers[l as usize].iter_mut().zip(p) {
                *c += v;
            }
            counts[l as usize] += 1;
        }
    }
    for (center, &count) in centers.iter_mut().zip(&counts) {
        for c in center.iter_mut() {
            *c /= count as f64;
        }
    }
    let mut radii = vec![0.0; centers.len()];
    for (i, p) in points.iter().enumerate() {
        if labels[i] >= 0 {
            radii[labels[i] as usize] += euclidean(p, &centers[labels[i] as usize]);
        }
    }
    for (r, &count) in radii.iter_mut().zip(&counts) {
        *r /= count as f64;
    }

    for (i, p) in points.iter().enumerate() {
        let l = labels[i];
        if l == NOISE {
            set.indices.push(i);
            set.cluster_of.push(NOISE);
            set.distance_to_center.push(0.0);
            continue;
        }
        let d = euclidean(p, &centers[l as usize]);
        let radius = radii[l as usize];
        let admitted = if radius == 0.0 { d > 0.0 } else { d >= radius };
        if admitted {
            set.indices.push(i);
            set.cluster_of.push(l);
            set.distance_to_center.push(d);
        }
    }
    set
}

/// Classical LOF of each candidate, with k-NN structures built over all
/// points. Neighborhoods are tie-inclusive: every point within the
/// k-distance belongs to N_k(p), so results do not depend on sort order.
pub fn lof_score(candidates: &[usize], points: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    let n = points.len();
    if k == 0 {
        return Err(Error::Contract("LOF needs k >= 1".into()));
    }
    if k >= n {
        return Err(Error::Contract(format!(
            "LOF needs k < number of points ({k} >= {n})"
        )));
    }
    // k-distance and tie-inclusive neighborhoods for every point.
    let mut kdist = vec![0.0; n];
    let mut neigh: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (euclidean(&points[i], &points[j]), j))
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        kdist[i] = d[k - 1].0;
        neigh[i] = d
            .iter()
            .take_while(|(dist, _)| *dist <= kdist[i])
            .map(|&(_, j)| j)
            .collect();
    }
    // Local reachability density of every point.
    let lrd: Vec<f64> = (0..n)
        .map(|i| {
            let mean_reach: f64 = neigh[i]
                .iter()
                .map(|&o| euclidean(&points[i], &points[o]).max(kdist[o]))
                .sum::<f64>()
                / neigh[i].len() as f64;
            1.0 / mean_reach.max(DIST_FLOOR)
        })
        .collect();
    Ok(candidates
        .iter()
        .map(|&p| neigh[p].iter().map(|&o| lrd[o] / lrd[p]).sum::<f64>() / neigh[p].len() as f64)
        .collect())
}

/// Flag scores strictly above mean + 4·SD (population SD). Returns indices
/// into the score slice.
pub fn detect_outliers(scores: &[f64]) -> Vec<usize> {
    if scores.is_empty() {
        return Vec::new();
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let threshold = mean + 4.0 * var.sqrt();
    (0..scores.len())
        .filter(|&i| scores[i] > threshold)
        .collect()
}

/// The flagging threshold itself, for reporting.
pub fn outlier_threshold(scores: &[f64]) -> f64 {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    mean + 4.0 * var.sqrt()
}
