//! Deterministic synthetic feeders and SCADA/weather series with planted
//! spatial-temporal structure, for exercising the whole pipeline against
//! known ground truth.
//!
//! Every value is a pure function of the spec and its seed. Per-node loads
//! are daily+weekly sinusoids around a node offset, coupled to the mean of
//! the neighbors' base loads; the feeder loss follows the I²R-style ratio
//! a·Σ(load²)/Σ(load) plus a temperature term, with the constants recorded
//! in the output so the truth is recoverable.

use std::io::Write as _;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};
use crate::features::{
    derive_electrical_indicators, ScadaSeries, StaticAttributes, StaticVocab, WeatherSeries,
    N_ELECTRICAL, N_WEATHER, TIMESTAMP_FORMAT,
};
use crate::graph::FeederGraph;
use crate::rng::Rng;

pub const STEPS_PER_DAY: usize = 96; // 15-minute cadence
pub const LOSS_LOAD_COEFF: f64 = 0.05;
pub const LOSS_TEMP_COEFF: f64 = 0.04;
/// Loss telemetry noise relative to the spec's noise knob.
pub const LOSS_NOISE_SCALE: f64 = 3.0;
/// Electrical telemetry noise relative to the spec's noise knob.
pub const TELEMETRY_NOISE_SCALE: f64 = 6.0;
/// Per-node slow load drift: AR(1) coefficient per 15-minute step and the
/// innovation scale relative to the noise knob. The drift is persistent
/// and spatially shared through the coupling, so it is predictable from
/// current telemetry but not from the clock.
pub const DRIFT_PHI: f64 = 0.9;
pub const DRIFT_NOISE_SCALE: f64 = 3.0;
pub const NOMINAL_VOLTAGE: f64 = 230.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopologyKind {
    /// Chain 0-1-2-...
    Path,
    /// Near-balanced binary tree (node i hangs off (i-1)/2).
    Tree,
    /// Uniform random attachment tree.
    RandomTree,
}

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub n_nodes: usize,
    pub days: usize,
    pub seed: u64,
    pub topology: TopologyKind,
    /// Fraction of electrical cells deleted (MCAR).
    pub missing_fraction: f64,
    /// Fraction of electrical cells spiked by a ×5..×20 factor.
    pub outlier_fraction: f64,
    /// Neighbor coupling strength λ.
    pub coupling: f64,
    /// Scale of the white-noise terms; 0 makes every series an exact
    /// formula of the spec.
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_nodes: 10,
            days: 7,
            seed: 0,
            topology: TopologyKind::RandomTree,
            missing_fraction: 0.0959,
            outlier_fraction: 0.0,
            coupling: 0.5,
            noise: 0.05,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::Contract("need at least 2 nodes".into()));
        }
        if self.days == 0 {
            return Err(Error::Contract("need at least one day".into()));
        }
        for (name, f) in [
            ("missing_fraction", self.missing_fraction),
            ("outlier_fraction", self.outlier_fraction),
        ] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Contract(format!("{name} must be in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Everything the generator knows that a consumer may score against.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// N×T per-node loads (15-minute cadence), after coupling and noise.
    pub loads: Vec<f64>,
    pub loss_load_coeff: f64,
    pub loss_temp_coeff: f64,
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub graph: FeederGraph,
    pub attrs: StaticAttributes,
    pub vocab: StaticVocab,
    /// Clean 15-minute SCADA + loss.
    pub scada: ScadaSeries,
    /// Hourly weather.
    pub weather: WeatherSeries,
    pub truth: GroundTruth,
}

pub fn default_vocab() -> StaticVocab {
    StaticVocab {
        transformer_types: vec!["S9".into(), "S11".into()],
        branch_types: vec!["overhead".into(), "cable".into(), "hybrid".into()],
    }
}

/// Seeded topology plus round-robin static attributes.
pub fn generate_feeder(spec: &SynthSpec) -> Result<(FeederGraph, StaticAttributes)> {
    spec.validate()?;
    let mut rng = Rng::seed_from_u64(spec.seed).split(0xF0);
    let mut graph = FeederGraph::new(spec.n_nodes);
    for i in 1..spec.n_nodes {
        let parent = match spec.topology {
            TopologyKind::Path => i - 1,
            TopologyKind::Tree => (i - 1) / 2,
            TopologyKind::RandomTree => rng.below(i),
        };
        graph.add_edge(parent, i)?;
    }
    let vocab = default_vocab();
    let attrs = StaticAttributes {
        transformer_type: (0..spec.n_nodes)
            .map(|i| vocab.transformer_types[i % vocab.transformer_types.len()].clone())
            .collect(),
        branch_type: (0..spec.n_nodes)
            .map(|i| vocab.branch_types[i % vocab.branch_types.len()].clone())
            .collect(),
    };
    Ok((graph, attrs))
}

pub fn node_capacity(node: usize) -> f64 {
    100.0 + 20.0 * (node % 3) as f64
}

fn start_instant() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2017, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

/// Clean SCADA, weather, and the ground-truth loss for one feeder.
pub fn generate_scada(spec: &SynthSpec, graph: &FeederGraph) -> Result<SynthDataset> {
    spec.validate()?;
    let n = spec.n_nodes;
    let t_len = spec.days * STEPS_PER_DAY;
    let mut rng = Rng::seed_from_u64(spec.seed).split(0x5C);

    // Per-node personality: offset and sinusoid phases.
    let offsets: Vec<f64> = (0..n).map(|_| rng.uniform_in(4.0, 7.0)).collect();
    let daily_phase: Vec<f64> = (0..n)
        .map(|_| rng.uniform_in(0.0, std::f64::consts::TAU))
        .collect();
    let weekly_phase: Vec<f64> = (0..n)
        .map(|_| rng.uniform_in(0.0, std::f64::consts::TAU))
        .collect();

    let day = STEPS_PER_DAY as f64;
    let week = day * 7.0;
    let tau = std::f64::consts::TAU;
    let mut base = vec![0.0; n * t_len];
    let mut load_rng = rng.split(1);
    for node in 0..n {
        let mut drift = 0.0;
        for t in 0..t_len {
            let tf = t as f64;
            drift = DRIFT_PHI * drift
                + DRIFT_NOISE_SCALE * spec.noise * load_rng.normal();
            base[node * t_len + t] = offsets[node]
                + 1.5 * (tau * tf / day + daily_phase[node]).sin()
                + 0.6 * (tau * tf / week + weekly_phase[node]).sin()
                + drift
                + spec.noise * load_rng.normal();
        }
    }
    // One coupling pass over the base loads.
    let mut loads = base.clone();
    if spec.coupling != 0.0 {
        for node in 0..n {
            let neighbors = graph.neighbors(node);
            if neighbors.is_empty() {
                continue;
            }
            for t in 0..t_len {
                let mean: f64 = neighbors
                    .iter()
                    .map(|&j| base[j * t_len + t])
                    .sum::<f64>()
                    / neighbors.len() as f64;
                loads[node * t_len + t] += spec.coupling * mean;
            }
        }
    }

    // Hourly weather.
    let hours = spec.days * 24;
    let mut weather_rng = rng.split(2);
    let mut weather_vals = Vec::with_capacity(hours * N_WEATHER);
    let mut temps = Vec::with_capacity(hours);
    for h in 0..hours {
        let hf = h as f64;
        let temp = 15.0
            + 8.0 * (tau * hf / 24.0 - 0.6).sin()
            + 3.0 * (tau * hf / 168.0).sin()
            + spec.noise * weather_rng.normal();
        let humidity = (60.0 - 0.8 * temp + spec.noise * weather_rng.normal()).clamp(5.0, 100.0);
        let wind_dir = 180.0 + 120.0 * (hf / 50.0).sin();
        let wind_speed = 3.0 + 2.0 * (hf / 13.0).sin().abs();
        let sunhour = (8.0 * (tau * hf / 24.0 - std::f64::consts::FRAC_PI_2).sin()).max(0.0);
        let visibility = 10.0 - 0.02 * humidity;
        let dew_point = temp - 5.0 + 0.05 * humidity;
        temps.push(temp);
        weather_vals.extend_from_slice(&[
            temp, humidity, wind_dir, wind_speed, sunhour, visibility, dew_point,
        ]);
    }

    // Electrical channels driven by load; derived indicators go through
    // the shared pipeline op. Telemetry carries measurement noise on top
    // of the process noise already in the loads (TTU readings are not the
    // physical state), scaled off the same noise knob.
    let mut el_rng = rng.split(3);
    let meas = TELEMETRY_NOISE_SCALE * spec.noise;
    let mut electrical = vec![0.0; n * t_len * N_ELECTRICAL];
    for node in 0..n {
        for t in 0..t_len {
            let load = loads[node * t_len + t];
            let tf = t as f64;
            let p_active = load + meas * el_rng.normal();
            let q_reactive =
                p_active * (0.3 + 0.1 * (tau * tf / day + node as f64).sin());
            let volt_droop = NOMINAL_VOLTAGE * (1.0 - 5e-4 * load);
            let ua = volt_droop + 0.4 * (tf / 31.0 + node as f64).sin()
                + spec.noise * el_rng.normal();
            let ub = volt_droop + 0.4 * (tf / 37.0 + 1.0 + node as f64).sin()
                + spec.noise * el_rng.normal();
            let uc = volt_droop + 0.4 * (tf / 41.0 + 2.0 + node as f64).sin()
                + spec.noise * el_rng.normal();
            // Phase currents around the single-phase equivalent, with a
            // slow asymmetry so the imbalance channel carries signal.
            let i_mean = 1000.0 * (load + meas * el_rng.normal()) / (3.0 * NOMINAL_VOLTAGE);
            let skew = 0.06 * (tau * tf / week + node as f64 * 0.7).sin();
            let ia = i_mean * (1.0 + skew) + spec.noise * 0.01 * el_rng.normal().abs();
            let ib = i_mean + spec.noise * 0.01 * el_rng.normal().abs();
            let ic = i_mean * (1.0 - skew) + spec.noise * 0.01 * el_rng.normal().abs();
            let (load_rate, pf, imbalance) = derive_electrical_indicators(
                p_active,
                q_reactive,
                [ia, ib, ic],
                node_capacity(node),
            )?;
            let base = (node * t_len + t) * N_ELECTRICAL;
            electrical[base..base + N_ELECTRICAL].copy_from_slice(&[
                ua, ub, uc, ia, ib, ic, p_active, q_reactive, imbalance, pf, load_rate,
            ]);
        }
    }

    // Feeder loss: I²R over the tree's edge currents. Each edge carries
    // the total load of its downstream subtree, so the loss is a function
    // of the topology, not just of the node loads.
    let order = bfs_order(graph, 0);
    let mut loss_rng = rng.split(4);
    let loss: Vec<f64> = (0..t_len)
        .map(|t| {
            let node_loads: Vec<f64> = (0..n).map(|i| loads[i * t_len + t]).collect();
            structural_load_term(&order, &node_loads)
                + LOSS_TEMP_COEFF * temps[t / 4]
                + LOSS_NOISE_SCALE * spec.noise * loss_rng.normal()
        })
        .collect();

    let start = start_instant();
    let scada_ts: Vec<NaiveDateTime> = (0..t_len)
        .map(|i| start + chrono::Duration::minutes(15 * i as i64))
        .collect();
    let weather_ts: Vec<NaiveDateTime> = (0..hours)
        .map(|i| start + chrono::Duration::hours(i as i64))
        .collect();

    let (_, attrs) = generate_feeder(spec)?;
    Ok(SynthDataset {
        graph: graph.clone(),
        attrs,
        vocab: default_vocab(),
        scada: ScadaSeries::new(n, scada_ts, electrical, loss)?,
        weather: WeatherSeries::new(weather_ts, weather_vals)?,
        truth: GroundTruth {
            loads,
            loss_load_coeff: LOSS_LOAD_COEFF,
            loss_temp_coeff: LOSS_TEMP_COEFF,
        },
    })
}

/// BFS order from the feeder root, with each node's parent.
pub fn bfs_order(graph: &FeederGraph, root: usize) -> Vec<(usize, Option<usize>)> {
    let mut order = vec![(root, None)];
    let mut seen = vec![false; graph.n_nodes];
    seen[root] = true;
    let mut at = 0;
    while at < order.len() {
        let (node, _) = order[at];
        for next in graph.neighbors(node) {
            if !seen[next] {
                seen[next] = true;
                order.push((next, Some(node)));
            }
        }
        at += 1;
    }
    order
}

/// The load-dependent part of the feeder loss:
/// a · Σ_edges (subtree load)² / Σ loads, over the BFS tree from node 0.
pub fn structural_load_term(order: &[(usize, Option<usize>)], node_loads: &[f64]) -> f64 {
    let mut subtree = node_loads.to_vec();
    for &(node, parent) in order.iter().rev() {
        if let Some(p) = parent {
            subtree[p] += subtree[node];
        }
    }
    let total: f64 = node_loads.iter().sum();
    let edge_sq: f64 = order
        .iter()
        .filter(|(_, parent)| parent.is_some())
        .map(|&(node, _)| subtree[node] * subtree[node])
        .sum();
    LOSS_LOAD_COEFF * edge_sq / total
}

/// What happened to one corrupted cell.
#[derive(Clone, Debug, PartialEq)]
pub enum CorruptionKind {
    Missing,
    Spike,
}

#[derive(Clone, Debug)]
pub struct CorruptionEntry {
    pub node: usize,
    pub t: usize,
    pub channel: usize,
    pub kind: CorruptionKind,
    pub original: f64,
}

/// MCAR deletions plus multiplicative ×5..×20 spikes over the electrical
/// cells, totals set by the spec's fractions. Returns the corrupted series
/// and the truth mask.
pub fn inject_bad_data(
    series: &ScadaSeries,
    spec: &SynthSpec,
) -> Result<(ScadaSeries, Vec<CorruptionEntry>)> {
    spec.validate()?;
    let cells = series.n_nodes * series.t_len() * N_ELECTRICAL;
    let n_missing = (cells as f64 * spec.missing_fraction).round() as usize;
    let n_spike = (cells as f64 * spec.outlier_fraction).round() as usize;
    if n_missing + n_spike > cells {
        return Err(Error::Contract(format!(
            "cannot corrupt {} of {cells} cells",
            n_missing + n_spike
        )));
    }
    let mut rng = Rng::seed_from_u64(spec.seed).split(0xBAD);
    let mut order: Vec<usize> = (0..cells).collect();
    rng.shuffle(&mut order);

    let t_len = series.t_len();
    let mut corrupted = series.clone();
    let mut mask = Vec::with_capacity(n_missing + n_spike);
    for (rank, &cell) in order[..n_missing + n_spike].iter().enumerate() {
        let node = cell / (t_len * N_ELECTRICAL);
        let t = (cell / N_ELECTRICAL) % t_len;
        let channel = cell % N_ELECTRICAL;
        let original = series.cell(node, t, channel);
        let kind = if rank < n_missing {
            *corrupted.cell_mut(node, t, channel) = f64::NAN;
            CorruptionKind::Missing
        } else {
            *corrupted.cell_mut(node, t, channel) = original * rng.uniform_in(5.0, 20.0);
            CorruptionKind::Spike
        };
        mask.push(CorruptionEntry {
            node,
            t,
            channel,
            kind,
            original,
        });
    }
    mask.sort_by_key(|e| (e.node, e.t, e.channel));
    Ok((corrupted, mask))
}

/// `timestamp,node_id,channel,kind,original_value`
pub fn write_corruption_mask(
    mask: &[CorruptionEntry],
    timestamps: &[NaiveDateTime],
    path: &Path,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "timestamp,node_id,channel,kind,original_value")?;
    for e in mask {
        writeln!(
            out,
            "{},{},{},{},{}",
            timestamps[e.t].format(TIMESTAMP_FORMAT),
            e.node,
            crate::features::ELECTRICAL_CHANNELS[e.channel],
            match e.kind {
                CorruptionKind::Missing => "missing",
                CorruptionKind::Spike => "spike",
            },
            e.original
        )?;
    }
    out.flush()?;
    Ok(())
}
