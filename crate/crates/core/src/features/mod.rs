//! Mixed feature construction: resampling, derived electrical indicators,
//! one-hot static attributes, min-max scaling, windowing, and the
//! chronological train/val/test split.
//!
//! Missing measurements are carried as NaN inside [`ScadaSeries`]; they
//! must be repaired by the cleaning stage before feature assembly.

pub mod csvio;

use std::sync::Arc;

use chrono::{NaiveDateTime, Timelike};

use crate::error::{Error, Result};

/// Time-varying electrical channels, in CSV column order.
pub const ELECTRICAL_CHANNELS: [&str; 11] = [
    "ua", "ub", "uc", "ia", "ib", "ic", "p", "q", "imbalance", "pf", "load_rate",
];
pub const N_ELECTRICAL: usize = ELECTRICAL_CHANNELS.len();

/// Weather channels shared by every node, in CSV column order.
pub const WEATHER_CHANNELS: [&str; 7] = [
    "temp",
    "humidity",
    "wind_dir",
    "wind_speed",
    "sunhour",
    "visibility",
    "dew_point",
];
pub const N_WEATHER: usize = WEATHER_CHANNELS.len();

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Per-district telemetry plus the feeder-level loss series.
///
/// `electrical` is N×T×M row-major with NaN marking missing cells; `loss`
/// is the feeder's overall loss rate in percent, one value per instant.
#[derive(Clone, Debug, PartialEq)]
pub struct ScadaSeries {
    pub n_nodes: usize,
    pub timestamps: Vec<NaiveDateTime>,
    pub electrical: Vec<f64>,
    pub loss: Vec<f64>,
}

impl ScadaSeries {
    pub fn new(
        n_nodes: usize,
        timestamps: Vec<NaiveDateTime>,
        electrical: Vec<f64>,
        loss: Vec<f64>,
    ) -> Result<Self> {
        let t = timestamps.len();
        if electrical.len() != n_nodes * t * N_ELECTRICAL {
            return Err(Error::Dimension(format!(
                "electrical array has {} cells, expected {}x{}x{}",
                electrical.len(),
                n_nodes,
                t,
                N_ELECTRICAL
            )));
        }
        if loss.len() != t {
            return Err(Error::Alignment(format!(
                "loss series length {} != {} timestamps",
                loss.len(),
                t
            )));
        }
        check_strictly_increasing(&timestamps)?;
        Ok(ScadaSeries {
            n_nodes,
            timestamps,
            electrical,
            loss,
        })
    }

    pub fn t_len(&self) -> usize {
        self.timestamps.len()
    }

    #[inline]
    pub fn cell(&self, node: usize, t: usize, ch: usize) -> f64 {
        self.electrical[(node * self.t_len() + t) * N_ELECTRICAL + ch]
    }

    #[inline]
    pub fn cell_mut(&mut self, node: usize, t: usize, ch: usize) -> &mut f64 {
        let t_len = self.t_len();
        &mut self.electrical[(node * t_len + t) * N_ELECTRICAL + ch]
    }
}

/// Per-node static categories.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticAttributes {
    pub transformer_type: Vec<String>,
    pub branch_type: Vec<String>,
}

impl StaticAttributes {
    pub fn n_nodes(&self) -> usize {
        self.transformer_type.len()
    }
}

/// Declared category vocabulary for the two static attribute groups.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticVocab {
    pub transformer_types: Vec<String>,
    pub branch_types: Vec<String>,
}

impl StaticVocab {
    /// Total one-hot width Q.
    pub fn q(&self) -> usize {
        self.transformer_types.len() + self.branch_types.len()
    }

    /// Declare the vocabulary observed in a static table: sorted unique
    /// categories per group, so the one-hot layout is deterministic.
    pub fn from_attrs(attrs: &StaticAttributes) -> Self {
        let uniq = |xs: &[String]| -> Vec<String> {
            let mut v: Vec<String> = xs.to_vec();
            v.sort();
            v.dedup();
            v
        };
        StaticVocab {
            transformer_types: uniq(&attrs.transformer_type),
            branch_types: uniq(&attrs.branch_type),
        }
    }
}

/// Hourly weather indices shared by all nodes; T×K row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WeatherSeries {
    pub timestamps: Vec<NaiveDateTime>,
    pub channels: Vec<f64>,
}

impl WeatherSeries {
    pub fn new(timestamps: Vec<NaiveDateTime>, channels: Vec<f64>) -> Result<Self> {
        if channels.len() != timestamps.len() * N_WEATHER {
            return Err(Error::Dimension(format!(
                "weather array has {} cells, expected {}x{}",
                channels.len(),
                timestamps.len(),
                N_WEATHER
            )));
        }
        check_strictly_increasing(&timestamps)?;
        Ok(WeatherSeries {
            timestamps,
            channels,
        })
    }

    pub fn t_len(&self) -> usize {
        self.timestamps.len()
    }
}

fn check_strictly_increasing(ts: &[NaiveDateTime]) -> Result<()> {
    for w in ts.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Alignment(format!(
                "timestamps not strictly increasing at {}",
                w[1].format(TIMESTAMP_FORMAT)
            )));
        }
    }
    Ok(())
}

/// Per-channel min-max affine normalization, fit on the training range.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ChannelScaler {
    /// Constant channels (max − min < 1e-12) scale to 0.
    pub fn scale(&self, ch: usize, v: f64) -> f64 {
        let span = self.max[ch] - self.min[ch];
        if span < 1e-12 {
            0.0
        } else {
            (v - self.min[ch]) / span
        }
    }

    pub fn unscale(&self, ch: usize, v: f64) -> f64 {
        let span = self.max[ch] - self.min[ch];
        if span < 1e-12 {
            self.min[ch]
        } else {
            self.min[ch] + v * span
        }
    }
}

/// How [`build_mixed_features`] obtains its scaler.
#[derive(Clone, Debug)]
pub enum ScalerMode {
    /// Fit min/max on the leading fraction of T (0.8 reproduces the 8:1:1
    /// split's training range) and apply everywhere.
    FitLeading(f64),
    /// Apply a previously fit scaler (inference on new data).
    Apply(ChannelScaler),
}

/// The assembled N×T×C input tensor, scaled, plus everything needed to map
/// model output back to raw percent.
#[derive(Clone, Debug)]
pub struct MixedFeatureTensor {
    pub n_nodes: usize,
    pub t_len: usize,
    pub channels: usize,
    /// Scaled values, N×T×C row-major.
    pub data: Vec<f64>,
    /// Channel names matching the last axis.
    pub channel_layout: Vec<String>,
    pub scaler: ChannelScaler,
    /// Raw (unscaled) loss series in percent; targets are cut from this.
    pub raw_loss: Vec<f64>,
    pub timestamps: Vec<NaiveDateTime>,
}

impl MixedFeatureTensor {
    #[inline]
    pub fn at(&self, node: usize, t: usize, ch: usize) -> f64 {
        self.data[(node * self.t_len + t) * self.channels + ch]
    }
}

/// One training sample: a window start plus its raw-percent target vector.
#[derive(Clone, Debug)]
pub struct WindowSample {
    pub start: usize,
    pub target: Vec<f64>,
}

/// Chronologically ordered sliding windows over a feature tensor.
#[derive(Clone, Debug)]
pub struct WindowedDataset {
    pub features: Arc<MixedFeatureTensor>,
    pub window: usize,
    pub horizon: usize,
    pub samples: Vec<WindowSample>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Materialize sample `i`'s input window as N×T_w×C row-major.
    pub fn input(&self, i: usize) -> Vec<f64> {
        let f = &self.features;
        let s = self.samples[i].start;
        let mut out = Vec::with_capacity(f.n_nodes * self.window * f.channels);
        for node in 0..f.n_nodes {
            let base = (node * f.t_len + s) * f.channels;
            out.extend_from_slice(&f.data[base..base + self.window * f.channels]);
        }
        out
    }

    /// Timestamp of target step `p` for sample `i`.
    pub fn target_time(&self, i: usize, p: usize) -> NaiveDateTime {
        self.features.timestamps[self.samples[i].start + self.window + p]
    }
}

/// Keep only the on-the-hour samples of a 15-minute series (selection, not
/// averaging). An already-hourly series passes through unchanged.
pub fn resample_hourly(s: &ScadaSeries) -> Result<ScadaSeries> {
    let t = s.t_len();
    if t < 2 {
        return Err(Error::Alignment(
            "need at least two samples to establish cadence".into(),
        ));
    }
    let step = s.timestamps[1] - s.timestamps[0];
    for w in s.timestamps.windows(2) {
        if w[1] - w[0] != step {
            return Err(Error::Alignment(format!(
                "irregular cadence near {}",
                w[1].format(TIMESTAMP_FORMAT)
            )));
        }
    }
    if step == chrono::Duration::hours(1) {
        return Ok(s.clone());
    }
    if step != chrono::Duration::minutes(15) {
        return Err(Error::Alignment(format!(
            "expected 15-minute or hourly cadence, got {} seconds",
            step.num_seconds()
        )));
    }
    let keep: Vec<usize> = (0..t)
        .filter(|&i| s.timestamps[i].minute() == 0 && s.timestamps[i].second() == 0)
        .collect();
    let mut electrical = Vec::with_capacity(s.n_nodes * keep.len() * N_ELECTRICAL);
    for node in 0..s.n_nodes {
        for &i in &keep {
            let base = (node * t + i) * N_ELECTRICAL;
            electrical.extend_from_slice(&s.electrical[base..base + N_ELECTRICAL]);
        }
    }
    ScadaSeries::new(
        s.n_nodes,
        keep.iter().map(|&i| s.timestamps[i]).collect(),
        electrical,
        keep.iter().map(|&i| s.loss[i]).collect(),
    )
}

/// Derived indicators for one node at one instant:
/// load rate, power factor, and three-phase current imbalance.
pub fn derive_electrical_indicators(
    p_active: f64,
    q_reactive: f64,
    phase_currents: [f64; 3],
    capacity: f64,
) -> Result<(f64, f64, f64)> {
    if capacity <= 0.0 {
        return Err(Error::Contract(format!(
            "transformer capacity must be positive, got {capacity}"
        )));
    }
    let load_rate = p_active / capacity;
    let apparent = (p_active * p_active + q_reactive * q_reactive).sqrt();
    let power_factor = if apparent == 0.0 { 0.0 } else { p_active / apparent };
    let mags = phase_currents.map(f64::abs);
    let mean = (mags[0] + mags[1] + mags[2]) / 3.0;
    let imbalance = if mean == 0.0 {
        0.0
    } else {
        let max = mags.iter().cloned().fold(f64::MIN, f64::max);
        let min = mags.iter().cloned().fold(f64::MAX, f64::min);
        (max - min) / mean
    };
    Ok((load_rate, power_factor, imbalance))
}

/// One-hot encode both static attribute groups; N×Q row-major with Q =
/// total category count, exactly one 1 per group per row.
pub fn one_hot_static(attrs: &StaticAttributes, vocab: &StaticVocab) -> Result<Vec<f64>> {
    let n = attrs.n_nodes();
    if attrs.branch_type.len() != n {
        return Err(Error::Dimension(
            "transformer_type and branch_type lengths differ".into(),
        ));
    }
    let q = vocab.q();
    let mut out = vec![0.0; n * q];
    for node in 0..n {
        let ti = vocab
            .transformer_types
            .iter()
            .position(|c| *c == attrs.transformer_type[node])
            .ok_or_else(|| {
                Error::Vocabulary(format!(
                    "node {node}: unknown transformer type `{}`",
                    attrs.transformer_type[node]
                ))
            })?;
        let bi = vocab
            .branch_types
            .iter()
            .position(|c| *c == attrs.branch_type[node])
            .ok_or_else(|| {
                Error::Vocabulary(format!(
                    "node {node}: unknown branch type `{}`",
                    attrs.branch_type[node]
                ))
            })?;
        out[node * q + ti] = 1.0;
        out[node * q + vocab.transformer_types.len() + bi] = 1.0;
    }
    Ok(out)
}

/// Merge loss, electrical, static, and weather channels into the scaled
/// N×T×(1+M+Q+K) tensor. Channel order: loss | electrical | static |
/// weather. The loss series is replicated to every node, static channels
/// along time, and weather channels across nodes.
pub fn build_mixed_features(
    s: &ScadaSeries,
    attrs: &StaticAttributes,
    vocab: &StaticVocab,
    w: &WeatherSeries,
    mode: ScalerMode,
) -> Result<MixedFeatureTensor> {
    let n = s.n_nodes;
    let t = s.t_len();
    if attrs.n_nodes() != n {
        return Err(Error::Dimension(format!(
            "static attributes cover {} nodes, series has {n}",
            attrs.n_nodes()
        )));
    }
    if w.timestamps != s.timestamps {
        return Err(Error::Alignment(
            "weather timestamps do not match the SCADA series".into(),
        ));
    }
    if s.electrical.iter().any(|v| v.is_nan()) || s.loss.iter().any(|v| v.is_nan()) {
        return Err(Error::Contract(
            "series still contains missing cells; clean before feature assembly".into(),
        ));
    }
    let one_hot = one_hot_static(attrs, vocab)?;
    let q = vocab.q();
    let channels = 1 + N_ELECTRICAL + q + N_WEATHER;

    let mut layout = Vec::with_capacity(channels);
    layout.push("loss".to_string());
    layout.extend(ELECTRICAL_CHANNELS.iter().map(|c| format!("e_{c}")));
    layout.extend(
        vocab
            .transformer_types
            .iter()
            .map(|c| format!("s_transformer_{c}")),
    );
    layout.extend(vocab.branch_types.iter().map(|c| format!("s_branch_{c}")));
    layout.extend(WEATHER_CHANNELS.iter().map(|c| format!("w_{c}")));

    // Raw assembly, then one scaling pass.
    let mut data = vec![0.0; n * t * channels];
    for node in 0..n {
        for ti in 0..t {
            let base = (node * t + ti) * channels;
            data[base] = s.loss[ti];
            for ch in 0..N_ELECTRICAL {
                data[base + 1 + ch] = s.cell(node, ti, ch);
            }
            for ch in 0..q {
                data[base + 1 + N_ELECTRICAL + ch] = one_hot[node * q + ch];
            }
            for ch in 0..N_WEATHER {
                data[base + 1 + N_ELECTRICAL + q + ch] = w.channels[ti * N_WEATHER + ch];
            }
        }
    }

    let scaler = match mode {
        ScalerMode::Apply(sc) => {
            if sc.min.len() != channels {
                return Err(Error::Dimension(format!(
                    "scaler covers {} channels, tensor has {channels}",
                    sc.min.len()
                )));
            }
            sc
        }
        ScalerMode::FitLeading(fraction) => {
            if !(0.0..=1.0).contains(&fraction) || fraction == 0.0 {
                return Err(Error::Contract(format!(
                    "training fraction must be in (0, 1], got {fraction}"
                )));
            }
            let t_fit = ((t as f64 * fraction).floor() as usize).clamp(1, t);
            let mut min = vec![f64::INFINITY; channels];
            let mut max = vec![f64::NEG_INFINITY; channels];
            for node in 0..n {
                for ti in 0..t_fit {
                    let base = (node * t + ti) * channels;
                    for ch in 0..channels {
                        let v = data[base + ch];
                        min[ch] = min[ch].min(v);
                        max[ch] = max[ch].max(v);
                    }
                }
            }
            ChannelScaler { min, max }
        }
    };

    for node in 0..n {
        for ti in 0..t {
            let base = (node * t + ti) * channels;
            for ch in 0..channels {
                data[base + ch] = scaler.scale(ch, data[base + ch]);
            }
        }
    }

    Ok(MixedFeatureTensor {
        n_nodes: n,
        t_len: t,
        channels,
        data,
        channel_layout: layout,
        scaler,
        raw_loss: s.loss.clone(),
        timestamps: s.timestamps.clone(),
    })
}

/// Cut sliding windows of length `window` with raw-percent targets at the
/// `horizon` steps immediately after each window.
pub fn make_windows(
    features: Arc<MixedFeatureTensor>,
    window: usize,
    horizon: usize,
    stride: usize,
) -> Result<WindowedDataset> {
    if window == 0 || horizon == 0 || stride == 0 {
        return Err(Error::Contract(
            "window, horizon, and stride must be positive".into(),
        ));
    }
    let t = features.t_len;
    if t < window + horizon {
        return Err(Error::InsufficientData(format!(
            "need at least {} steps for window {window} + horizon {horizon}, have {t}",
            window + horizon
        )));
    }
    let count = (t - window - horizon) / stride + 1;
    let samples = (0..count)
        .map(|w| {
            let start = w * stride;
            WindowSample {
                start,
                target: features.raw_loss[start + window..start + window + horizon].to_vec(),
            }
        })
        .collect();
    Ok(WindowedDataset {
        features,
        window,
        horizon,
        samples,
    })
}

/// Chronological split; val and test get floor(n·r), the remainder stays
/// in train. Errors if any partition would be empty.
pub fn split_dataset(
    d: &WindowedDataset,
    ratios: (f64, f64, f64),
) -> Result<(WindowedDataset, WindowedDataset, WindowedDataset)> {
    let (rt, rv, rs) = ratios;
    if rt <= 0.0 || rv <= 0.0 || rs <= 0.0 || ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "ratios must be positive and sum to 1, got ({rt}, {rv}, {rs})"
        )));
    }
    let n = d.len();
    let n_val = (n as f64 * rv).floor() as usize;
    let n_test = (n as f64 * rs).floor() as usize;
    if n_val == 0 || n_test == 0 || n_val + n_test >= n {
        return Err(Error::DegenerateSplit(format!(
            "{n} windows cannot be split {rt}:{rv}:{rs} without an empty partition"
        )));
    }
    let n_train = n - n_val - n_test;
    let part = |range: std::ops::Range<usize>| WindowedDataset {
        features: Arc::clone(&d.features),
        window: d.window,
        horizon: d.horizon,
        samples: d.samples[range].to_vec(),
    };
    Ok((
        part(0..n_train),
        part(n_train..n_train + n_val),
        part(n_train + n_val..n),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn ts(day: u32, hour: u32, min: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2017, 1, day)
            .unwrap()
            .and_hms_opt(hour, min, 0)
            .unwrap()
    }

    fn quarter_hour_series(n_nodes: usize, quarters: usize) -> ScadaSeries {
        let timestamps: Vec<NaiveDateTime> = (0..quarters)
            .map(|i| ts(1, 0, 0) + chrono::Duration::minutes(15 * i as i64))
            .collect();
        let electrical: Vec<f64> = (0..n_nodes * quarters * N_ELECTRICAL)
            .map(|i| i as f64 * 0.01)
            .collect();
        let loss: Vec<f64> = (0..quarters).map(|i| 3.0 + (i as f64) * 0.1).collect();
        ScadaSeries::new(n_nodes, timestamps, electrical, loss).unwrap()
    }

    fn hourly_weather(timestamps: &[NaiveDateTime]) -> WeatherSeries {
        let channels: Vec<f64> = (0..timestamps.len() * N_WEATHER)
            .map(|i| 10.0 + i as f64 * 0.05)
            .collect();
        WeatherSeries::new(timestamps.to_vec(), channels).unwrap()
    }

    fn toy_vocab() -> StaticVocab {
        StaticVocab {
            transformer_types: vec!["S9".into(), "S11".into()],
            branch_types: vec!["overhead".into(), "cable".into(), "hybrid".into()],
        }
    }

    fn toy_attrs(n: usize) -> StaticAttributes {
        StaticAttributes {
            transformer_type: (0..n)
                .map(|i| if i % 2 == 0 { "S9" } else { "S11" }.to_string())
                .collect(),
            branch_type: (0..n)
                .map(|i| ["overhead", "cable", "hybrid"][i % 3].to_string())
                .collect(),
        }
    }

    #[test]
    fn resample_keeps_one_in_four() {
        let s = quarter_hour_series(2, 96);
        let hourly = resample_hourly(&s).unwrap();
        assert_eq!(hourly.t_len(), 24);
        assert_eq!(
            hourly.timestamps[1] - hourly.timestamps[0],
            chrono::Duration::hours(1)
        );
        // Selection, not averaging: values carried over verbatim.
        assert_eq!(hourly.cell(1, 1, 3), s.cell(1, 4, 3));
        assert_eq!(hourly.loss[2], s.loss[8]);
    }

    #[test]
    fn resample_is_idempotent_on_hourly() {
        let s = quarter_hour_series(1, 32);
        let hourly = resample_hourly(&s).unwrap();
        assert_eq!(resample_hourly(&hourly).unwrap(), hourly);
    }

    #[test]
    fn resample_partial_hour_keeps_only_on_the_hour() {
        let s = quarter_hour_series(1, 3); // :00, :15, :30
        let hourly = resample_hourly(&s).unwrap();
        assert_eq!(hourly.t_len(), 1);
    }

    #[test]
    fn resample_rejects_irregular_cadence() {
        let mut s = quarter_hour_series(1, 8);
        s.timestamps[5] += chrono::Duration::minutes(1);
        assert!(matches!(resample_hourly(&s), Err(Error::Alignment(_))));
    }

    #[test]
    fn indicators_on_three_four_five_triangle() {
        let (lr, pf, imb) =
            derive_electrical_indicators(3.0, 4.0, [2.0, 2.0, 2.0], 100.0).unwrap();
        assert!((pf - 0.6).abs() < 1e-15);
        assert_eq!(imb, 0.0);
        assert!((lr - 0.03).abs() < 1e-15);
    }

    #[test]
    fn indicators_half_load() {
        let (lr, _, _) = derive_electrical_indicators(50.0, 0.0, [1.0, 2.0, 3.0], 100.0).unwrap();
        assert!((lr - 0.5).abs() < 1e-15);
    }

    #[test]
    fn indicators_zero_power_and_current() {
        let (_, pf, imb) = derive_electrical_indicators(0.0, 0.0, [0.0, 0.0, 0.0], 10.0).unwrap();
        assert_eq!(pf, 0.0);
        assert_eq!(imb, 0.0);
    }

    #[test]
    fn indicators_reject_nonpositive_capacity() {
        assert!(matches!(
            derive_electrical_indicators(1.0, 0.0, [1.0; 3], -5.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn one_hot_places_both_group_bits() {
        let attrs = StaticAttributes {
            transformer_type: vec!["S11".into()],
            branch_type: vec!["cable".into()],
        };
        let row = one_hot_static(&attrs, &toy_vocab()).unwrap();
        assert_eq!(row, vec![0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn one_hot_q_is_group_total_with_two_ones_per_row() {
        let attrs = toy_attrs(4);
        let v = toy_vocab();
        let m = one_hot_static(&attrs, &v).unwrap();
        assert_eq!(m.len(), 4 * 5);
        for node in 0..4 {
            let ones = m[node * 5..(node + 1) * 5]
                .iter()
                .filter(|&&x| x == 1.0)
                .count();
            assert_eq!(ones, 2);
        }
    }

    #[test]
    fn one_hot_rejects_unknown_category() {
        let attrs = StaticAttributes {
            transformer_type: vec!["S13".into()],
            branch_type: vec!["cable".into()],
        };
        let err = one_hot_static(&attrs, &toy_vocab()).unwrap_err();
        match err {
            Error::Vocabulary(msg) => {
                assert!(msg.contains("node 0") && msg.contains("S13"), "{msg}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn built_tensor(n: usize, t: usize) -> MixedFeatureTensor {
        let s = resample_hourly(&quarter_hour_series(n, t * 4)).unwrap();
        let w = hourly_weather(&s.timestamps);
        build_mixed_features(
            &s,
            &toy_attrs(n),
            &toy_vocab(),
            &w,
            ScalerMode::FitLeading(0.8),
        )
        .unwrap()
    }

    #[test]
    fn mixed_tensor_shape_is_one_plus_m_q_k() {
        let c = built_tensor(2, 3);
        assert_eq!(c.channels, 1 + 11 + 5 + 7);
        assert_eq!(c.data.len(), 2 * 3 * 24);
        assert_eq!(c.channel_layout.len(), c.channels);
    }

    #[test]
    fn loss_channel_is_replicated_across_nodes() {
        let c = built_tensor(3, 5);
        for t in 0..5 {
            let v0 = c.at(0, t, 0);
            for node in 1..3 {
                assert_eq!(c.at(node, t, 0), v0);
            }
        }
    }

    #[test]
    fn static_channels_constant_over_time() {
        let c = built_tensor(2, 6);
        for node in 0..2 {
            for ch in 12..17 {
                let v = c.at(node, 0, ch);
                for t in 1..6 {
                    assert_eq!(c.at(node, t, ch), v);
                }
            }
        }
    }

    #[test]
    fn training_range_scales_into_unit_interval() {
        let c = built_tensor(2, 10);
        let t_fit = 8;
        for node in 0..2 {
            for t in 0..t_fit {
                for ch in 0..c.channels {
                    let v = c.at(node, t, ch);
                    assert!(
                        (-1e-12..=1.0 + 1e-12).contains(&v),
                        "channel {ch} at ({node},{t}) scaled to {v}"
                    );
                }
            }
        }
    }

    #[test]
    fn inverse_scaling_recovers_training_values() {
        let s = resample_hourly(&quarter_hour_series(2, 40)).unwrap();
        let w = hourly_weather(&s.timestamps);
        let c = build_mixed_features(
            &s,
            &toy_attrs(2),
            &toy_vocab(),
            &w,
            ScalerMode::FitLeading(0.8),
        )
        .unwrap();
        for t in 0..8 {
            let raw = s.loss[t];
            let back = c.scaler.unscale(0, c.at(0, t, 0));
            assert!((raw - back).abs() < 1e-9);
            for ch in 0..N_ELECTRICAL {
                let raw = s.cell(1, t, ch);
                let back = c.scaler.unscale(1 + ch, c.at(1, t, 1 + ch));
                assert!((raw - back).abs() < 1e-9, "channel {ch}: {raw} vs {back}");
            }
        }
    }

    #[test]
    fn constant_channel_scales_to_zero() {
        let mut s = resample_hourly(&quarter_hour_series(1, 20)).unwrap();
        for t in 0..s.t_len() {
            *s.cell_mut(0, t, 0) = 230.0;
        }
        let w = hourly_weather(&s.timestamps);
        let c = build_mixed_features(
            &s,
            &toy_attrs(1),
            &toy_vocab(),
            &w,
            ScalerMode::FitLeading(0.8),
        )
        .unwrap();
        for t in 0..c.t_len {
            assert_eq!(c.at(0, t, 1), 0.0);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = built_tensor(2, 8);
        let b = built_tensor(2, 8);
        assert_eq!(a.data, b.data);
        assert_eq!(a.scaler, b.scaler);
    }

    #[test]
    fn build_rejects_missing_cells() {
        let mut s = resample_hourly(&quarter_hour_series(1, 12)).unwrap();
        *s.cell_mut(0, 1, 4) = f64::NAN;
        let w = hourly_weather(&s.timestamps);
        assert!(matches!(
            build_mixed_features(
                &s,
                &toy_attrs(1),
                &toy_vocab(),
                &w,
                ScalerMode::FitLeading(0.8)
            ),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn build_rejects_misaligned_weather() {
        let s = resample_hourly(&quarter_hour_series(1, 12)).unwrap();
        let mut wts = s.timestamps.clone();
        wts[0] += chrono::Duration::minutes(1);
        let w = WeatherSeries::new(wts, vec![0.0; s.t_len() * N_WEATHER]).unwrap();
        assert!(matches!(
            build_mixed_features(
                &s,
                &toy_attrs(1),
                &toy_vocab(),
                &w,
                ScalerMode::FitLeading(0.8)
            ),
            Err(Error::Alignment(_))
        ));
    }

    fn windowed(t: usize, window: usize, horizon: usize, stride: usize) -> Result<WindowedDataset> {
        let c = built_tensor(2, t);
        make_windows(Arc::new(c), window, horizon, stride)
    }

    #[test]
    fn window_count_matches_arithmetic() {
        assert_eq!(windowed(200, 100, 1, 1).unwrap().len(), 100);
    }

    #[test]
    fn window_boundary_single_window() {
        assert_eq!(windowed(101, 100, 1, 1).unwrap().len(), 1);
    }

    #[test]
    fn window_insufficient_data_errors() {
        assert!(matches!(
            windowed(100, 100, 1, 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn targets_are_raw_loss_after_window() {
        let d = windowed(30, 10, 3, 2).unwrap();
        for (i, sample) in d.samples.iter().enumerate() {
            assert_eq!(sample.start, i * 2);
            let expect = &d.features.raw_loss[sample.start + 10..sample.start + 13];
            assert_eq!(sample.target, expect);
        }
    }

    #[test]
    fn windows_never_leak_their_targets() {
        let d = windowed(40, 12, 4, 1).unwrap();
        for s in &d.samples {
            // Input range [start, start+window) is disjoint from target
            // range [start+window, start+window+horizon).
            assert!(s.start + d.window <= d.features.t_len - d.horizon);
        }
    }

    #[test]
    fn split_80_10_10() {
        let d = windowed(124, 24, 1, 1).unwrap();
        assert_eq!(d.len(), 100);
        let (train, val, test) = split_dataset(&d, (0.8, 0.1, 0.1)).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (80, 10, 10));
        // Chronological, contiguous, no overlap.
        assert_eq!(
            train.samples.last().unwrap().start + 1,
            val.samples[0].start
        );
        assert_eq!(val.samples.last().unwrap().start + 1, test.samples[0].start);
    }

    #[test]
    fn split_ten_windows() {
        let d = windowed(34, 24, 1, 1).unwrap();
        assert_eq!(d.len(), 10);
        let (train, val, test) = split_dataset(&d, (0.8, 0.1, 0.1)).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (8, 1, 1));
    }

    #[test]
    fn split_five_windows_is_degenerate() {
        let d = windowed(29, 24, 1, 1).unwrap();
        assert_eq!(d.len(), 5);
        assert!(matches!(
            split_dataset(&d, (0.8, 0.1, 0.1)),
            Err(Error::DegenerateSplit(_))
        ));
    }

    #[test]
    fn test_targets_never_in_training_windows() {
        let d = windowed(124, 24, 1, 1).unwrap();
        let (train, _, test) = split_dataset(&d, (0.8, 0.1, 0.1)).unwrap();
        let train_max_input_end = train
            .samples
            .iter()
            .map(|s| s.start + d.window)
            .max()
            .unwrap();
        let test_min_target = test
            .samples
            .iter()
            .map(|s| s.start + d.window)
            .min()
            .unwrap();
        assert!(train_max_input_end <= test_min_target);
    }
}
