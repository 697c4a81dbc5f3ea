//! SCADA cleaning: cluster-pruned LOF outlier detection followed by
//! iterative forest imputation.
//!
//! Detection runs per node over the complete (gap-free) time rows in
//! z-scored channel space. A row flagged as an outlier has all of its
//! electrical cells converted to missing, so outliers and gaps share one
//! repair path. The feeder-level loss series comes from a separate
//! acquisition path and is not touched here.

pub mod dbscan;
pub mod forest;
pub mod impute;
pub mod lof;

pub use dbscan::dbscan_cluster;
pub use forest::{forest_fit, forest_predict, ForestParams, RegressionForest};
pub use impute::{iterative_impute, linear_interp_init, ImputeOutcome, ImputeParams};
pub use lof::{build_candidate_set, detect_outliers, lof_score, OutlierCandidateSet};

use crate::error::Result;
use crate::features::{ScadaSeries, N_ELECTRICAL};

#[derive(Clone, Debug)]
pub struct CleanParams {
    /// DBSCAN radius; None derives the 90th percentile of 5-NN distances.
    pub eps: Option<f64>,
    pub min_pts: usize,
    pub lof_k: usize,
    pub impute: ImputeParams,
}

impl Default for CleanParams {
    fn default() -> Self {
        CleanParams {
            eps: None,
            min_pts: 5,
            lof_k: 10,
            impute: ImputeParams::default(),
        }
    }
}

/// Audit trail of one cleaning run over an N×T×M series.
#[derive(Clone, Debug)]
pub struct CleaningReport {
    pub n_nodes: usize,
    pub t_len: usize,
    /// N×T×M mask of cells discarded as outliers.
    pub outlier_flags: Vec<bool>,
    /// N×T×M mask of cells filled by imputation (missing ∪ outlier).
    pub imputed_mask: Vec<bool>,
    /// Per node: (time row, LOF score) of every scored candidate.
    pub lof_scores: Vec<Vec<(usize, f64)>>,
    /// Per node: the mean + 4·SD flagging threshold (NaN when no
    /// candidates were scored).
    pub lof_thresholds: Vec<f64>,
    /// Per node: forest refinement rounds run.
    pub rounds_used: Vec<usize>,
    /// Per node: max absolute cell change per round.
    pub change_norms: Vec<Vec<f64>>,
}

impl CleaningReport {
    pub fn outlier_cells(&self) -> usize {
        self.outlier_flags.iter().filter(|&&f| f).count()
    }

    pub fn imputed_cells(&self) -> usize {
        self.imputed_mask.iter().filter(|&&f| f).count()
    }

    /// Plain-text report for the CLI artifact.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("cleaning report\n");
        out.push_str(&format!("nodes: {}\n", self.n_nodes));
        out.push_str(&format!("time steps: {}\n", self.t_len));
        out.push_str(&format!(
            "cells total: {}\n",
            self.n_nodes * self.t_len * N_ELECTRICAL
        ));
        out.push_str(&format!("outlier cells flagged: {}\n", self.outlier_cells()));
        out.push_str(&format!("cells imputed: {}\n", self.imputed_cells()));
        for node in 0..self.n_nodes {
            out.push_str(&format!(
                "node {node}: candidates={} threshold={:.6} flagged_rows={} rounds={} \n",
                self.lof_scores[node].len(),
                self.lof_thresholds[node],
                self.flagged_rows(node).len(),
                self.rounds_used[node],
            ));
        }
        out
    }

    fn flagged_rows(&self, node: usize) -> Vec<usize> {
        (0..self.t_len)
            .filter(|&t| self.outlier_flags[(node * self.t_len + t) * N_ELECTRICAL])
            .collect()
    }
}

/// Clean one series: detect outliers, convert them to missing, impute
/// everything, and return the repaired series plus the audit report.
pub fn clean_scada(s: &ScadaSeries, params: &CleanParams) -> Result<(ScadaSeries, CleaningReport)> {
    let n = s.n_nodes;
    let t = s.t_len();
    let mut cleaned = s.clone();
    let mut report = CleaningReport {
        n_nodes: n,
        t_len: t,
        outlier_flags: vec![false; n * t * N_ELECTRICAL],
        imputed_mask: vec![false; n * t * N_ELECTRICAL],
        lof_scores: vec![Vec::new(); n],
        lof_thresholds: vec![f64::NAN; n],
        rounds_used: vec![0; n],
        change_norms: vec![Vec::new(); n],
    };

    for node in 0..n {
        // T×M table for this node, NaN marking gaps.
        let mut table: Vec<Vec<f64>> = (0..t)
            .map(|ti| (0..N_ELECTRICAL).map(|ch| s.cell(node, ti, ch)).collect())
            .collect();

        let (zrows, row_of) = dbscan::zscore_complete_rows(&table);
        if zrows.len() > params.lof_k {
            let eps = params
                .eps
                .unwrap_or_else(|| dbscan::knn_distance_percentile(&zrows, 5, 0.9));
            let labels = dbscan_cluster(&zrows, eps, params.min_pts);
            let candidates = build_candidate_set(&zrows, &labels);
            if !candidates.indices.is_empty() {
                let scores = lof_score(&candidates.indices, &zrows, params.lof_k)?;
                report.lof_thresholds[node] = lof::outlier_threshold(&scores);
                report.lof_scores[node] = candidates
                    .indices
                    .iter()
                    .zip(&scores)
                    .map(|(&zi, &sc)| (row_of[zi], sc))
                    .collect();
                for flagged in detect_outliers(&scores) {
                    let row = row_of[candidates.indices[flagged]];
                    table[row] = vec![f64::NAN; N_ELECTRICAL];
                    let base = (node * t + row) * N_ELECTRICAL;
                    report.outlier_flags[base..base + N_ELECTRICAL].fill(true);
                }
            }
        }

        let outcome = iterative_impute(
            &table,
            &ImputeParams {
                seed: params.impute.seed.wrapping_add(node as u64),
                forest: ForestParams {
                    seed: params.impute.forest.seed.wrapping_add(node as u64),
                    ..params.impute.forest.clone()
                },
                ..params.impute.clone()
            },
        )?;
        report.rounds_used[node] = outcome.rounds_used;
        report.change_norms[node] = outcome.change_norms.clone();
        for ti in 0..t {
            for ch in 0..N_ELECTRICAL {
                if outcome.imputed_mask[ti][ch] {
                    report.imputed_mask[(node * t + ti) * N_ELECTRICAL + ch] = true;
                }
                *cleaned.cell_mut(node, ti, ch) = outcome.table[ti][ch];
            }
        }
    }
    Ok((cleaned, report))
}
