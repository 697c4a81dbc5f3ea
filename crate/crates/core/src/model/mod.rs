//! The line-loss forecaster: two-layer GCN, district-level attention,
//! feature-level attention over frozen random embeddings, a two-layer
//! LSTM, time-level attention, and a ReLU fully-connected head, each
//! behind an ablation switch.

pub mod blocks;
pub mod checkpoint;

pub use blocks::TimeAggregation;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::rng::Rng;
use crate::tensor::{Tape, TensorId};
use blocks::{
    feature_attention_block, gcn_block, head_block, lstm_layer, node_attention_block,
    time_attention_block, LstmLayerIds,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_nodes: usize,
    pub window: usize,
    pub in_channels: usize,
    pub gcn_hidden: usize,
    pub gcn_out: usize,
    pub embed_dim: usize,
    pub node_attention_hidden: usize,
    pub feature_attention_hidden: usize,
    pub time_attention_hidden: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub horizon: usize,
    /// Dropout on LSTM inputs and the head input during training.
    pub dropout: f64,
    pub use_gcn: bool,
    pub use_node_attention: bool,
    pub use_feature_attention: bool,
    pub use_lstm: bool,
    pub use_time_attention: bool,
    pub time_aggregation: TimeAggregation,
    pub seed: u64,
}

impl ModelConfig {
    /// Full-size configuration: GCN layers 256 and 16 wide, two LSTM
    /// layers of 256, window 100.
    pub fn full_scale(n_nodes: usize, in_channels: usize, horizon: usize) -> Self {
        ModelConfig {
            n_nodes,
            window: 100,
            in_channels,
            gcn_hidden: 256,
            gcn_out: 16,
            embed_dim: 8,
            node_attention_hidden: 32,
            feature_attention_hidden: 32,
            time_attention_hidden: 32,
            lstm_layers: 2,
            lstm_hidden: 256,
            horizon,
            dropout: 0.05,
            use_gcn: true,
            use_node_attention: true,
            use_feature_attention: true,
            use_lstm: true,
            use_time_attention: true,
            time_aggregation: TimeAggregation::WeightedSum,
            seed: 0,
        }
    }

    /// Graph feature width after the (possibly ablated) GCN.
    pub fn graph_features(&self) -> usize {
        if self.use_gcn {
            self.gcn_out
        } else {
            self.in_channels
        }
    }

    /// Width of the flattened per-step feature vector.
    pub fn flat_features(&self) -> usize {
        self.n_nodes * self.graph_features()
    }

    /// Width of the sequence entering time aggregation.
    pub fn time_features(&self) -> usize {
        if self.use_lstm {
            self.lstm_hidden
        } else {
            self.flat_features()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_nodes", self.n_nodes),
            ("window", self.window),
            ("in_channels", self.in_channels),
            ("embed_dim", self.embed_dim),
            ("node_attention_hidden", self.node_attention_hidden),
            ("feature_attention_hidden", self.feature_attention_hidden),
            ("time_attention_hidden", self.time_attention_hidden),
            ("horizon", self.horizon),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Contract(format!("{name} must be positive")));
            }
        }
        if self.use_gcn && (self.gcn_hidden == 0 || self.gcn_out == 0) {
            return Err(Error::Contract("GCN dimensions must be positive".into()));
        }
        if self.use_lstm && (self.lstm_layers == 0 || self.lstm_hidden == 0) {
            return Err(Error::Contract("LSTM dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Contract(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// One named parameter array. The embedding matrix is the only
/// non-trainable entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn numel(&self) -> usize {
        self.values.len()
    }
}

/// Parameter container. Construction order is fixed, so parameter index,
/// checkpoint layout, and optimizer state always line up.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastModel {
    pub config: ModelConfig,
    pub params: Vec<Param>,
}

/// Attention score copies from one forward pass; each vector sums to 1
/// along its softmax axis.
#[derive(Clone, Debug, Default)]
pub struct AttentionTrace {
    /// ζ, T×N row-major (district scores per step).
    pub node_scores: Option<Vec<f64>>,
    /// ξ, T×(N·F) row-major (feature scores per step).
    pub feature_scores: Option<Vec<f64>>,
    /// ν, length T (step scores).
    pub time_scores: Option<Vec<f64>>,
}

/// Everything a caller needs after one forward pass.
pub struct ForwardPass {
    /// (1, P) forecast in scaled target space.
    pub output: TensorId,
    pub trace: AttentionTrace,
    /// Tape leaf of each parameter, aligned with `model.params`.
    pub param_ids: Vec<TensorId>,
}

impl ForecastModel {
    /// Initialize all parameters: uniform(−1/√fan_in, 1/√fan_in), the
    /// embedding uniform(−1/√d, 1/√d) and frozen.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::seed_from_u64(config.seed);
        let mut params = Vec::new();
        let mut push = |name: &str, rows: usize, cols: usize, fan_in: usize, trainable: bool,
                        rng: &mut Rng| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.push(Param {
                name: name.to_string(),
                shape: vec![rows, cols],
                values: (0..rows * cols).map(|_| rng.uniform_in(-bound, bound)).collect(),
                trainable,
            });
        };

        let c = &config;
        if c.use_gcn {
            push("gcn.w0", c.in_channels, c.gcn_hidden, c.in_channels, true, &mut rng);
            push("gcn.w1", c.gcn_hidden, c.gcn_out, c.gcn_hidden, true, &mut rng);
        }
        let f = c.graph_features();
        if c.use_node_attention {
            let h = c.node_attention_hidden;
            push("d_atten.w0", f, h, f, true, &mut rng);
            push("d_atten.b0", 1, h, f, true, &mut rng);
            push("d_atten.w1", h, 1, h, true, &mut rng);
            push("d_atten.b1", 1, 1, h, true, &mut rng);
        }
        if c.use_feature_attention {
            let nf = c.flat_features();
            let d = c.embed_dim;
            push("f_atten.embed", nf, d, d, false, &mut rng);
            let h = c.feature_attention_hidden;
            push("f_atten.w2", d, h, d, true, &mut rng);
            push("f_atten.b2", 1, h, d, true, &mut rng);
            push("f_atten.w3", h, 1, h, true, &mut rng);
            push("f_atten.b3", 1, 1, h, true, &mut rng);
        }
        if c.use_lstm {
            let mut input = c.flat_features();
            for layer in 0..c.lstm_layers {
                let rows = input + c.lstm_hidden;
                for gate in ["f", "i", "g", "o"] {
                    push(
                        &format!("lstm.l{layer}.w_{gate}"),
                        rows,
                        c.lstm_hidden,
                        rows,
                        true,
                        &mut rng,
                    );
                    push(
                        &format!("lstm.l{layer}.b_{gate}"),
                        1,
                        c.lstm_hidden,
                        rows,
                        true,
                        &mut rng,
                    );
                }
                input = c.lstm_hidden;
            }
        }
        let tw = c.time_features();
        if c.use_time_attention {
            let h = c.time_attention_hidden;
            push("t_atten.w4", tw, h, tw, true, &mut rng);
            push("t_atten.b4", 1, h, tw, true, &mut rng);
            push("t_atten.w5", h, 1, h, true, &mut rng);
            push("t_atten.b5", 1, 1, h, true, &mut rng);
        }
        push("head.w", tw, c.horizon, tw, true, &mut rng);
        // The head bias starts at the scaled-target midpoint instead of a
        // signed uniform draw: a negative bias behind the output ReLU
        // zeroes the forecast and its gradient, freezing training.
        params.push(Param {
            name: "head.b".into(),
            shape: vec![1, c.horizon],
            values: vec![0.5; c.horizon],
            trainable: true,
        });

        Ok(ForecastModel { config, params })
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn set_param(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Contract(format!("no parameter named {name}")))?;
        if values.len() != p.numel() {
            return Err(Error::Dimension(format!(
                "{name}: {} values for shape {:?}",
                values.len(),
                p.shape
            )));
        }
        p.values = values;
        Ok(())
    }

    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(Param::numel)
            .sum()
    }

    fn param_index(&self, name: &str) -> usize {
        self.params
            .iter()
            .position(|p| p.name == name)
            .unwrap_or_else(|| panic!("parameter {name} missing"))
    }

    /// Run the full composition on one window (N×T_w×C row-major).
    /// `dropout_rng` enables inverted dropout on LSTM and head inputs;
    /// pass None for evaluation.
    pub fn forward(
        &self,
        tape: &mut Tape,
        window: &[f64],
        adjacency: &NormalizedAdjacency,
        dropout_rng: Option<&mut Rng>,
    ) -> Result<ForwardPass> {
        let c = &self.config;
        let (n, t_w, ch) = (c.n_nodes, c.window, c.in_channels);
        if window.len() != n * t_w * ch {
            return Err(Error::Dimension(format!(
                "window has {} values, config wants {}x{}x{}",
                window.len(),
                n,
                t_w,
                ch
            )));
        }
        if adjacency.n != n {
            return Err(Error::Dimension(format!(
                "adjacency is {}x{}, config wants {n} nodes",
                adjacency.n, adjacency.n
            )));
        }

        let param_ids: Vec<TensorId> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.values.clone(), p.shape.clone(), p.trainable))
            .collect::<Result<_>>()?;
        let id = |name: &str| param_ids[self.param_index(name)];
        let mut dropout_rng = dropout_rng;
        let mut trace = AttentionTrace::default();

        // GCN (or identity) per time step, stacked to (T, N, F).
        let adj_id = tape.constant(adjacency.matrix.clone(), vec![n, n])?;
        let mut steps = Vec::with_capacity(t_w);
        for t in 0..t_w {
            let mut slice = Vec::with_capacity(n * ch);
            for node in 0..n {
                let base = (node * t_w + t) * ch;
                slice.extend_from_slice(&window[base..base + ch]);
            }
            let c_t = tape.constant(slice, vec![n, ch])?;
            let g_t = if c.use_gcn {
                gcn_block(tape, adj_id, c_t, id("gcn.w0"), id("gcn.w1"))?
            } else {
                c_t
            };
            steps.push(tape.reshape(g_t, vec![1, n, c.graph_features()])?);
        }
        let mut g = tape.concat(&steps, 0)?;

        if c.use_node_attention {
            let (out, zeta) = node_attention_block(
                tape,
                g,
                id("d_atten.w0"),
                id("d_atten.b0"),
                id("d_atten.w1"),
                id("d_atten.b1"),
            )?;
            trace.node_scores = Some(tape.values(zeta).to_vec());
            g = out;
        }

        let mut x = tape.reshape(g, vec![t_w, c.flat_features()])?;

        if c.use_feature_attention {
            let (out, xi) = feature_attention_block(
                tape,
                x,
                id("f_atten.embed"),
                id("f_atten.w2"),
                id("f_atten.b2"),
                id("f_atten.w3"),
                id("f_atten.b3"),
            )?;
            trace.feature_scores = Some(tape.values(xi).to_vec());
            x = out;
        }

        let mut seq = x;
        if c.use_lstm {
            let mut input = c.flat_features();
            for layer in 0..c.lstm_layers {
                let ids = LstmLayerIds {
                    w_f: id(&format!("lstm.l{layer}.w_f")),
                    b_f: id(&format!("lstm.l{layer}.b_f")),
                    w_i: id(&format!("lstm.l{layer}.w_i")),
                    b_i: id(&format!("lstm.l{layer}.b_i")),
                    w_g: id(&format!("lstm.l{layer}.w_g")),
                    b_g: id(&format!("lstm.l{layer}.b_g")),
                    w_o: id(&format!("lstm.l{layer}.w_o")),
                    b_o: id(&format!("lstm.l{layer}.b_o")),
                };
                let masks = match dropout_rng.as_deref_mut() {
                    Some(rng) if c.dropout > 0.0 => {
                        let mut ms = Vec::with_capacity(t_w);
                        for _ in 0..t_w {
                            ms.push(dropout_mask(tape, rng, input, c.dropout)?);
                        }
                        Some(ms)
                    }
                    _ => None,
                };
                seq = lstm_layer(tape, seq, &ids, c.lstm_hidden, masks.as_deref())?;
                input = c.lstm_hidden;
            }
        }

        let mut context = if c.use_time_attention {
            let (ctx, nu) = time_attention_block(
                tape,
                seq,
                id("t_atten.w4"),
                id("t_atten.b4"),
                id("t_atten.w5"),
                id("t_atten.b5"),
                c.time_aggregation,
            )?;
            trace.time_scores = Some(tape.values(nu).to_vec());
            ctx
        } else {
            let m = tape.reduce_mean(seq, 0)?;
            tape.reshape(m, vec![1, c.time_features()])?
        };

        if let Some(rng) = dropout_rng.take() {
            if c.dropout > 0.0 {
                let mask = dropout_mask(tape, rng, c.time_features(), c.dropout)?;
                context = tape.mul(context, mask)?;
            }
        }

        let output = head_block(tape, context, id("head.w"), id("head.b"))?;
        Ok(ForwardPass {
            output,
            trace,
            param_ids,
        })
    }

    /// Convenience: forward in evaluation mode, returning the forecast in
    /// scaled target space.
    pub fn predict(&self, window: &[f64], adjacency: &NormalizedAdjacency) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let pass = self.forward(&mut tape, window, adjacency, None)?;
        Ok(tape.values(pass.output).to_vec())
    }
}

/// Central-difference check of every trainable parameter of a model
/// against the tape gradients, through an MSE loss on one random window.
/// Returns the max relative error |a−b| / max(1e-8, |a|+|b|).
pub fn model_gradient_check(config: &ModelConfig, data_seed: u64, eps: f64) -> Result<f64> {
    let model = ForecastModel::new(config.clone())?;
    let mut rng = Rng::seed_from_u64(data_seed);
    let window: Vec<f64> = (0..config.n_nodes * config.window * config.in_channels)
        .map(|_| rng.uniform())
        .collect();
    let target: Vec<f64> = (0..config.horizon)
        .map(|_| rng.uniform_in(0.2, 0.8))
        .collect();
    // A connected chain keeps every node's signal in play.
    let mut graph = crate::graph::FeederGraph::new(config.n_nodes);
    for i in 1..config.n_nodes {
        graph.add_edge(i - 1, i)?;
    }
    let adjacency = crate::graph::normalize_adjacency(&graph);

    let mut tape = Tape::new();
    let pass = model.forward(&mut tape, &window, &adjacency, None)?;
    let t_id = tape.constant(target.clone(), vec![1, config.horizon])?;
    let diff = tape.sub(pass.output, t_id)?;
    let sq = tape.mul(diff, diff)?;
    let loss = tape.mean_all(sq)?;
    tape.backward(loss)?;

    let loss_of = |m: &ForecastModel| -> Result<f64> {
        let y = m.predict(&window, &adjacency)?;
        Ok(y.iter()
            .zip(&target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / target.len() as f64)
    };

    let mut worst = 0.0f64;
    for (pi, p) in model.params.iter().enumerate() {
        if !p.trainable {
            continue;
        }
        let analytic = tape
            .grad(pass.param_ids[pi])
            .expect("trainable leaf has a gradient");
        for (ci, &a) in analytic.iter().enumerate() {
            let mut plus = model.clone();
            plus.params[pi].values[ci] += eps;
            let mut minus = model.clone();
            minus.params[pi].values[ci] -= eps;
            let numeric = (loss_of(&plus)? - loss_of(&minus)?) / (2.0 * eps);
            let rel = (a - numeric).abs() / (1e-8f64).max(a.abs() + numeric.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Inverted dropout mask: 0 with probability p, else 1/(1−p).
fn dropout_mask(tape: &mut Tape, rng: &mut Rng, width: usize, p: f64) -> Result<TensorId> {
    let keep = 1.0 - p;
    let values = (0..width)
        .map(|_| if rng.uniform() < p { 0.0 } else { 1.0 / keep })
        .collect();
    tape.constant(values, vec![1, width])
}
