//! CSV readers and writers for the pipeline's file schemas.
//!
//! - SCADA:   `timestamp,node_id,ua,ub,uc,ia,ib,ic,p,q,imbalance,pf,load_rate`
//! - Loss:    `timestamp,loss_rate_percent`
//! - Static:  `node_id,transformer_type,branch_type`
//! - Weather: `timestamp,temp,humidity,wind_dir,wind_speed,sunhour,visibility,dew_point`
//!
//! Timestamps are ISO-8601 seconds (`2017-01-01T00:15:00`); empty numeric
//! fields mean "missing" and load as NaN. Writers emit floats with Rust's
//! shortest round-trip formatting, so identical data produces identical
//! bytes.

use std::io::Write as _;
use std::path::Path;

use chrono::NaiveDateTime;

use super::{
    ScadaSeries, StaticAttributes, WeatherSeries, ELECTRICAL_CHANNELS, N_ELECTRICAL, N_WEATHER,
    TIMESTAMP_FORMAT, WEATHER_CHANNELS,
};
use crate::error::{Error, Result};

fn parse_timestamp(s: &str, line: usize) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT).map_err(|_| Error::Parse {
        line,
        msg: format!("bad timestamp `{s}`"),
    })
}

/// Empty field -> NaN (missing).
fn parse_cell(s: &str, line: usize, col: &str) -> Result<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("column {col}: `{s}` is not a number"),
    })
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn check_header(record: &csv::StringRecord, expected: &[&str], path: &Path) -> Result<()> {
    let got: Vec<&str> = record.iter().collect();
    if got != expected {
        return Err(Error::Schema(format!(
            "{}: header is {got:?}, expected {expected:?}",
            path.display()
        )));
    }
    Ok(())
}

/// Load SCADA telemetry and the loss series into one [`ScadaSeries`].
///
/// Rows must be sorted by timestamp then node id, with every node present
/// at every instant; the loss file must cover exactly the same instants.
pub fn load_scada(scada_path: &Path, loss_path: &Path) -> Result<ScadaSeries> {
    let mut reader = csv::Reader::from_path(scada_path)?;
    let mut expected = vec!["timestamp", "node_id"];
    expected.extend_from_slice(&ELECTRICAL_CHANNELS);
    check_header(reader.headers()?, &expected, scada_path)?;

    let mut timestamps: Vec<NaiveDateTime> = Vec::new();
    // Row-major (t, node, channel); transposed to (node, t, channel) once
    // the node count is known.
    let mut rows: Vec<f64> = Vec::new();
    let mut n_nodes = 0usize;
    let mut node_cursor = 0usize;

    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record?;
        if record.len() != 2 + N_ELECTRICAL {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, got {}", 2 + N_ELECTRICAL, record.len()),
            });
        }
        let ts = parse_timestamp(&record[0], line)?;
        let node: usize = record[1].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad node_id `{}`", &record[1]),
        })?;

        let new_instant = timestamps.last() != Some(&ts);
        if new_instant {
            if let Some(&last) = timestamps.last() {
                if ts < last {
                    return Err(Error::Parse {
                        line,
                        msg: "timestamps out of order".into(),
                    });
                }
                if n_nodes == 0 {
                    n_nodes = node_cursor;
                } else if node_cursor != n_nodes {
                    return Err(Error::Schema(format!(
                        "{}: instant {} has {} rows, expected {}",
                        scada_path.display(),
                        last.format(TIMESTAMP_FORMAT),
                        node_cursor,
                        n_nodes
                    )));
                }
            }
            timestamps.push(ts);
            node_cursor = 0;
        }
        if node != node_cursor {
            return Err(Error::Parse {
                line,
                msg: format!("expected node_id {node_cursor}, got {node}"),
            });
        }
        node_cursor += 1;
        for (ch, name) in ELECTRICAL_CHANNELS.iter().enumerate() {
            rows.push(parse_cell(&record[2 + ch], line, name)?);
        }
    }
    if timestamps.is_empty() {
        return Err(Error::Schema(format!(
            "{}: no data rows",
            scada_path.display()
        )));
    }
    if n_nodes == 0 {
        n_nodes = node_cursor;
    } else if node_cursor != n_nodes {
        return Err(Error::Schema(format!(
            "{}: final instant has {node_cursor} rows, expected {n_nodes}",
            scada_path.display()
        )));
    }

    let t = timestamps.len();
    let mut electrical = vec![0.0; n_nodes * t * N_ELECTRICAL];
    for ti in 0..t {
        for node in 0..n_nodes {
            let src = (ti * n_nodes + node) * N_ELECTRICAL;
            let dst = (node * t + ti) * N_ELECTRICAL;
            electrical[dst..dst + N_ELECTRICAL].copy_from_slice(&rows[src..src + N_ELECTRICAL]);
        }
    }

    let (loss_ts, loss) = read_loss_csv(loss_path)?;
    if loss_ts != timestamps {
        return Err(Error::Alignment(format!(
            "{} and {} cover different instants",
            scada_path.display(),
            loss_path.display()
        )));
    }
    ScadaSeries::new(n_nodes, timestamps, electrical, loss)
}

pub fn read_loss_csv(path: &Path) -> Result<(Vec<NaiveDateTime>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    check_header(reader.headers()?, &["timestamp", "loss_rate_percent"], path)?;
    let mut timestamps = Vec::new();
    let mut loss = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        timestamps.push(parse_timestamp(&record[0], line)?);
        loss.push(parse_cell(&record[1], line, "loss_rate_percent")?);
    }
    Ok((timestamps, loss))
}

pub fn read_static_csv(path: &Path) -> Result<StaticAttributes> {
    let mut reader = csv::Reader::from_path(path)?;
    check_header(
        reader.headers()?,
        &["node_id", "transformer_type", "branch_type"],
        path,
    )?;
    let mut transformer_type = Vec::new();
    let mut branch_type = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        let node: usize = record[0].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad node_id `{}`", &record[0]),
        })?;
        if node != transformer_type.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected node_id {}, got {node}", transformer_type.len()),
            });
        }
        transformer_type.push(record[1].to_string());
        branch_type.push(record[2].to_string());
    }
    if transformer_type.is_empty() {
        return Err(Error::Schema(format!("{}: no data rows", path.display())));
    }
    Ok(StaticAttributes {
        transformer_type,
        branch_type,
    })
}

pub fn read_weather_csv(path: &Path) -> Result<WeatherSeries> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut expected = vec!["timestamp"];
    expected.extend_from_slice(&WEATHER_CHANNELS);
    check_header(reader.headers()?, &expected, path)?;
    let mut timestamps = Vec::new();
    let mut channels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        timestamps.push(parse_timestamp(&record[0], line)?);
        for (ch, name) in WEATHER_CHANNELS.iter().enumerate() {
            channels.push(parse_cell(&record[1 + ch], line, name)?);
        }
    }
    WeatherSeries::new(timestamps, channels)
}

pub fn write_scada_csv(s: &ScadaSeries, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "timestamp,node_id,{}", ELECTRICAL_CHANNELS.join(","))?;
    for (ti, ts) in s.timestamps.iter().enumerate() {
        for node in 0..s.n_nodes {
            write!(out, "{},{node}", ts.format(TIMESTAMP_FORMAT))?;
            for ch in 0..N_ELECTRICAL {
                write!(out, ",{}", format_cell(s.cell(node, ti, ch)))?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_loss_csv(timestamps: &[NaiveDateTime], loss: &[f64], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "timestamp,loss_rate_percent")?;
    for (ts, v) in timestamps.iter().zip(loss) {
        writeln!(out, "{},{}", ts.format(TIMESTAMP_FORMAT), format_cell(*v))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_static_csv(attrs: &StaticAttributes, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "node_id,transformer_type,branch_type")?;
    for node in 0..attrs.n_nodes() {
        writeln!(
            out,
            "{node},{},{}",
            attrs.transformer_type[node], attrs.branch_type[node]
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_weather_csv(w: &WeatherSeries, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "timestamp,{}", WEATHER_CHANNELS.join(","))?;
    for (ti, ts) in w.timestamps.iter().enumerate() {
        write!(out, "{}", ts.format(TIMESTAMP_FORMAT))?;
        for ch in 0..N_WEATHER {
            write!(out, ",{}", format_cell(w.channels[ti * N_WEATHER + ch]))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
