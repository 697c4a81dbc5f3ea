//! Evaluation metrics and their CSV artifacts.

use std::io::Write as _;
use std::path::Path;

use chrono::NaiveDateTime;

use crate::error::{Error, Result};
use crate::features::TIMESTAMP_FORMAT;

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual)?;
    let n = pred.len() as f64;
    Ok((pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / n)
        .sqrt())
}

pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual)?;
    let n = pred.len() as f64;
    Ok(pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / n)
}

/// Coefficient of determination about the actual mean. None when the
/// actuals are constant (SS_tot = 0, undefined); may be negative for
/// predictors worse than the mean.
pub fn r2(pred: &[f64], actual: &[f64]) -> Result<Option<f64>> {
    check_pair(pred, actual)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Ok(None);
    }
    let ss_res: f64 = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok(Some(1.0 - ss_res / ss_tot))
}

fn check_pair(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Contract("metrics over an empty batch".into()));
    }
    if pred.len() != actual.len() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} actuals",
            pred.len(),
            actual.len()
        )));
    }
    Ok(())
}

/// Metrics of one trained model on one horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonMetrics {
    pub horizon: usize,
    pub rmse: f64,
    pub mae: f64,
    /// None when undefined (constant actuals).
    pub r2: Option<f64>,
    /// Mean wall-clock per-sample inference time; None when not measured.
    pub inference_ms: Option<f64>,
}

/// Everything `train` + `evaluate` report for one run.
#[derive(Clone, Debug, Default)]
pub struct MetricsReport {
    pub horizons: Vec<HorizonMetrics>,
    pub train_curve: Vec<f64>,
    pub val_curve: Vec<f64>,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// `horizon,rmse,mae,r2,inference_ms`; unmeasured/undefined fields are
/// empty so the file stays byte-deterministic.
pub fn write_metrics_csv(rows: &[HorizonMetrics], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "horizon,rmse,mae,r2,inference_ms")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.horizon,
            r.rmse,
            r.mae,
            opt_cell(r.r2),
            opt_cell(r.inference_ms)
        )?;
    }
    out.flush()?;
    Ok(())
}

/// `timestamp,actual,predicted` forecast dump for external plotting.
pub fn write_forecast_csv(
    rows: &[(NaiveDateTime, f64, f64)],
    path: &Path,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "timestamp,actual,predicted")?;
    for (ts, actual, predicted) in rows {
        writeln!(
            out,
            "{},{actual},{predicted}",
            ts.format(TIMESTAMP_FORMAT)
        )?;
    }
    out.flush()?;
    Ok(())
}

/// `epoch,train_mse,val_mse` per-epoch loss curve.
pub fn write_loss_curve_csv(train: &[f64], val: &[f64], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,train_mse,val_mse")?;
    for (i, (t, v)) in train.iter().zip(val).enumerate() {
        writeln!(out, "{},{t},{v}", i + 1)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_metrics() {
        let y = [1.0, 2.5, -3.0];
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(r2(&y, &y).unwrap(), Some(1.0));
    }

    #[test]
    fn mean_predictor_has_zero_r2() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let mean = 2.5;
        let pred = [mean; 4];
        assert_eq!(r2(&pred, &y).unwrap(), Some(0.0));
    }

    #[test]
    fn analytic_fixture_one_two_three() {
        let y = [1.0, 2.0, 3.0];
        let pred = [2.0, 2.0, 2.0];
        assert!((rmse(&pred, &y).unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((mae(&pred, &y).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r2(&pred, &y).unwrap(), Some(0.0));
    }

    #[test]
    fn r2_undefined_for_constant_actuals() {
        assert_eq!(r2(&[1.0, 2.0], &[5.0, 5.0]).unwrap(), None);
    }

    #[test]
    fn r2_negative_for_bad_predictor() {
        let y = [1.0, 2.0, 3.0];
        let pred = [30.0, -10.0, 0.0];
        assert!(r2(&pred, &y).unwrap().unwrap() < 0.0);
    }

    #[test]
    fn rmse_dominates_mae() {
        let y = [0.0, 0.0, 0.0, 0.0];
        let pred = [1.0, -3.0, 0.5, 2.0];
        assert!(rmse(&pred, &y).unwrap() >= mae(&pred, &y).unwrap());
    }

    #[test]
    fn empty_batch_is_contract_error() {
        assert!(matches!(rmse(&[], &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn metrics_csv_has_empty_cells_for_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        write_metrics_csv(
            &[HorizonMetrics {
                horizon: 3,
                rmse: 0.5,
                mae: 0.25,
                r2: None,
                inference_ms: None,
            }],
            &path,
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "horizon,rmse,mae,r2,inference_ms\n3,0.5,0.25,,\n");
    }
}
