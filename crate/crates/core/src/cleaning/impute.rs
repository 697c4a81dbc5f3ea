//! Missing-value repair: linear-interpolation bootstrap refined by
//! iterative per-feature regression forests.
//!
//! Features are processed in ascending-missingness order. Each round
//! refits a forest per feature on the currently-filled table and
//! re-predicts that feature's originally-missing cells. The round count is
//! chosen by masking 5% of observed cells as a validation set and keeping
//! the count (0 allowed, meaning bootstrap only) that minimizes validation
//! RMSE; rounds also stop early once the largest cell change drops under
//! `tol`.

use crate::cleaning::forest::{forest_fit, forest_predict_one, ForestParams};
use crate::error::Result;
use crate::rng::Rng;

#[derive(Clone, Debug)]
pub struct ImputeParams {
    pub forest: ForestParams,
    /// Convergence tolerance on the max absolute cell change per round.
    pub tol: f64,
    pub max_rounds: usize,
    /// Fraction of observed cells masked for round selection.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for ImputeParams {
    fn default() -> Self {
        ImputeParams {
            forest: ForestParams::default(),
            tol: 1e-4,
            max_rounds: 10,
            validation_fraction: 0.05,
            seed: 0,
        }
    }
}

/// Outcome of one table imputation.
#[derive(Clone, Debug)]
pub struct ImputeOutcome {
    /// rows × cols, every cell filled.
    pub table: Vec<Vec<f64>>,
    /// Cells that were missing on input (and are now imputed).
    pub imputed_mask: Vec<Vec<bool>>,
    /// Forest refinement rounds actually run.
    pub rounds_used: usize,
    /// Max absolute cell change per round.
    pub change_norms: Vec<f64>,
    /// Round count selected by validation.
    pub selected_rounds: usize,
}

/// Fill NaN gaps of one series by linear interpolation between the nearest
/// observed neighbors; leading/trailing gaps copy the nearest observed
/// value. A fully-missing series is returned untouched (the table-level
/// path handles it).
pub fn linear_interp_init(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mut out = series.to_vec();
    let observed: Vec<usize> = (0..n).filter(|&i| !series[i].is_nan()).collect();
    if observed.is_empty() {
        return out;
    }
    for (i, slot) in out.iter_mut().enumerate() {
        if !slot.is_nan() {
            continue;
        }
        let prev = observed.iter().rev().find(|&&o| o < i);
        let next = observed.iter().find(|&&o| o > i);
        *slot = match (prev, next) {
            (Some(&p), Some(&q)) => {
                let w = (i - p) as f64 / (q - p) as f64;
                series[p] + w * (series[q] - series[p])
            }
            (Some(&p), None) => series[p],
            (None, Some(&q)) => series[q],
            (None, None) => unreachable!(),
        };
    }
    out
}

/// Bootstrap-fill a whole table. Columns with at least one observation
/// interpolate down the column; fully-missing columns take the transposed
/// path and interpolate each of their cells across the row instead.
fn bootstrap_fill(table: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let rows = table.len();
    let cols = table[0].len();
    let mut filled = table.to_vec();
    let mut dead_cols = Vec::new();
    for c in 0..cols {
        let col: Vec<f64> = (0..rows).map(|r| table[r][c]).collect();
        if col.iter().all(|v| v.is_nan()) {
            dead_cols.push(c);
            continue;
        }
        let fixed = linear_interp_init(&col);
        for r in 0..rows {
            filled[r][c] = fixed[r];
        }
    }
    // Transposed handling: the dead column becomes a gap inside each row,
    // bridged from the row's other (already filled) columns.
    for &c in &dead_cols {
        for r in 0..rows {
            let mut row = filled[r].clone();
            row[c] = f64::NAN;
            for &other in &dead_cols {
                if other != c && table[r][other].is_nan() {
                    row[other] = f64::NAN;
                }
            }
            filled[r][c] = linear_interp_init(&row)[c];
        }
    }
    (filled, dead_cols)
}

/// (filled table, per-round change norms, validation RMSE curve).
type ScheduleRun = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>);

fn rmse(pairs: &[(f64, f64)]) -> f64 {
    (pairs.iter().map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pairs.len() as f64).sqrt()
}

/// One refinement round over the given targets; returns the max absolute
/// cell change. `targets` lists (column, missing row indices) to repredict.
fn refine_round(
    filled: &mut [Vec<f64>],
    observed_rows: &[Vec<usize>],
    targets: &[(usize, Vec<usize>)],
    params: &ImputeParams,
    round: usize,
) -> Result<f64> {
    let mut max_change = 0.0f64;
    for (c, missing_rows) in targets {
        let c = *c;
        let strip = |row: &[f64]| -> Vec<f64> {
            row.iter()
                .enumerate()
                .filter(|(j, _)| *j != c)
                .map(|(_, v)| *v)
                .collect()
        };
        let train_x: Vec<Vec<f64>> = observed_rows[c].iter().map(|&r| strip(&filled[r])).collect();
        let train_y: Vec<f64> = observed_rows[c].iter().map(|&r| filled[r][c]).collect();
        let forest = forest_fit(
            &train_x,
            &train_y,
            &ForestParams {
                // Per-feature, per-round seed keeps refits deterministic.
                seed: params
                    .forest
                    .seed
                    .wrapping_add((round as u64) << 32)
                    .wrapping_add(c as u64),
                ..params.forest.clone()
            },
        )?;
        for &r in missing_rows {
            let pred = forest_predict_one(&forest, &strip(&filled[r]));
            max_change = max_change.max((pred - filled[r][c]).abs());
            filled[r][c] = pred;
        }
    }
    Ok(max_change)
}

/// Run bootstrap + refinement for a fixed maximum round count; returns the
/// filled table, the per-round change norms, and (if `probe` is given) the
/// validation RMSE after the bootstrap and after each round.
fn run_schedule(
    table: &[Vec<f64>],
    params: &ImputeParams,
    rounds: usize,
    probe: Option<&[(usize, usize, f64)]>,
) -> Result<ScheduleRun> {
    let rows = table.len();
    let cols = table[0].len();
    let (mut filled, dead_cols) = bootstrap_fill(table);

    let mut observed_rows: Vec<Vec<usize>> = vec![Vec::new(); cols];
    for c in 0..cols {
        observed_rows[c] = (0..rows).filter(|&r| !table[r][c].is_nan()).collect();
    }
    // Ascending missingness; dead columns are bootstrap-only (no training
    // rows exist for them).
    let mut targets: Vec<(usize, Vec<usize>)> = (0..cols)
        .filter(|c| !dead_cols.contains(c))
        .map(|c| {
            (
                c,
                (0..rows).filter(|&r| table[r][c].is_nan()).collect::<Vec<_>>(),
            )
        })
        .filter(|(_, missing)| !missing.is_empty())
        .collect();
    targets.sort_by_key(|(c, missing)| (missing.len(), *c));
    // A column needs enough observed rows to grow even one split.
    targets.retain(|(c, _)| observed_rows[*c].len() >= 2 * params.forest.min_leaf);

    let score = |filled: &[Vec<f64>]| -> f64 {
        let probe = probe.unwrap();
        rmse(
            &probe
                .iter()
                .map(|&(r, c, truth)| (filled[r][c], truth))
                .collect::<Vec<_>>(),
        )
    };

    let mut val_curve = Vec::new();
    if probe.is_some() {
        val_curve.push(score(&filled));
    }
    let mut change_norms = Vec::new();
    for round in 0..rounds {
        if targets.is_empty() {
            break;
        }
        let change = refine_round(&mut filled, &observed_rows, &targets, params, round)?;
        change_norms.push(change);
        if probe.is_some() {
            val_curve.push(score(&filled));
        }
        if change < params.tol {
            break;
        }
    }
    Ok((filled, change_norms, val_curve))
}

/// Impute every NaN cell of a rows×cols table.
pub fn iterative_impute(table: &[Vec<f64>], params: &ImputeParams) -> Result<ImputeOutcome> {
    let rows = table.len();
    let cols = if rows > 0 { table[0].len() } else { 0 };
    let imputed_mask: Vec<Vec<bool>> = table
        .iter()
        .map(|row| row.iter().map(|v| v.is_nan()).collect())
        .collect();
    let n_missing: usize = imputed_mask
        .iter()
        .map(|r| r.iter().filter(|&&m| m).count())
        .sum();
    if n_missing == 0 {
        return Ok(ImputeOutcome {
            table: table.to_vec(),
            imputed_mask,
            rounds_used: 0,
            change_norms: Vec::new(),
            selected_rounds: 0,
        });
    }

    // Round selection: hide a slice of the observed cells and watch the
    // validation RMSE over the round schedule.
    let observed_cells: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .filter(|&(r, c)| !table[r][c].is_nan())
        .collect();
    let n_probe = ((observed_cells.len() as f64 * params.validation_fraction).round() as usize)
        .min(observed_cells.len().saturating_sub(1));
    let selected_rounds = if n_probe == 0 {
        params.max_rounds
    } else {
        let mut rng = Rng::seed_from_u64(params.seed ^ 0x5eed_ce11);
        let mut order: Vec<usize> = (0..observed_cells.len()).collect();
        rng.shuffle(&mut order);
        let probe: Vec<(usize, usize, f64)> = order[..n_probe]
            .iter()
            .map(|&i| {
                let (r, c) = observed_cells[i];
                (r, c, table[r][c])
            })
            .collect();
        let mut masked = table.to_vec();
        for &(r, c, _) in &probe {
            masked[r][c] = f64::NAN;
        }
        let (_, _, val_curve) = run_schedule(&masked, params, params.max_rounds, Some(&probe))?;
        // val_curve[0] is bootstrap-only; index = round count.
        val_curve
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    };

    let (filled, change_norms, _) = run_schedule(table, params, selected_rounds, None)?;
    Ok(ImputeOutcome {
        table: filled,
        imputed_mask,
        rounds_used: change_norms.len(),
        change_norms,
        selected_rounds,
    })
}
