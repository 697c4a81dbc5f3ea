//! The forecaster's building blocks, written against the tape so each can
//! be driven and verified in isolation.

use crate::error::{Error, Result};
use crate::tensor::{Tape, TensorId};

/// Two-layer graph convolution over one time step:
/// ReLU(Ã · ReLU(Ã · c_t · W₀) · W₁), shapes N×C -> N×F.
pub fn gcn_block(
    tape: &mut Tape,
    adj: TensorId,
    c_t: TensorId,
    w0: TensorId,
    w1: TensorId,
) -> Result<TensorId> {
    let mixed = tape.matmul(adj, c_t)?;
    let h = tape.matmul(mixed, w0)?;
    let h = tape.relu(h)?;
    let mixed = tape.matmul(adj, h)?;
    let out = tape.matmul(mixed, w1)?;
    tape.relu(out)
}

/// Shared one-hidden-layer scorer: tanh(w_out(w_in · x + b_in) + b_out),
/// mapping rows of x to one scalar each.
fn mlp_scores(
    tape: &mut Tape,
    x: TensorId,
    w_in: TensorId,
    b_in: TensorId,
    w_out: TensorId,
    b_out: TensorId,
) -> Result<TensorId> {
    let hidden = tape.matmul(x, w_in)?;
    let hidden = tape.add(hidden, b_in)?;
    let score = tape.matmul(hidden, w_out)?;
    let score = tape.add(score, b_out)?;
    tape.tanh(score)
}

/// Transformer-district-level attention over a (T, N, F) stack: per-row
/// MLP score, softmax over the node axis, then the residual
/// ζ ⊙ G + G. Returns (output, ζ) with ζ shaped (T, N, 1).
pub fn node_attention_block(
    tape: &mut Tape,
    g: TensorId,
    w0: TensorId,
    b0: TensorId,
    w1: TensorId,
    b1: TensorId,
) -> Result<(TensorId, TensorId)> {
    let (t, n, f) = expect_rank3(tape, g, "node attention")?;
    let z = tape.reshape(g, vec![t * n, f])?;
    let alpha = mlp_scores(tape, z, w0, b0, w1, b1)?;
    let alpha = tape.reshape(alpha, vec![t, n, 1])?;
    let zeta = tape.softmax_axis(alpha, 1)?;
    let scaled = tape.mul(zeta, g)?;
    let out = tape.add(scaled, g)?;
    Ok((out, zeta))
}

/// Feature-level attention over a flattened (T, N·F) tensor with a frozen
/// (N·F, d) embedding: score each feature's d-dim embedding product,
/// softmax over the N·F axis, weight and mean-reduce the product tensor
/// over d, then add back the flattened input. Returns (output, ξ).
pub fn feature_attention_block(
    tape: &mut Tape,
    x: TensorId,
    embed: TensorId,
    w2: TensorId,
    b2: TensorId,
    w3: TensorId,
    b3: TensorId,
) -> Result<(TensorId, TensorId)> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 2 {
        return Err(Error::Dimension(format!(
            "feature attention expects (T, N*F), got {shape:?}"
        )));
    }
    let (t, nf) = (shape[0], shape[1]);
    let d = tape.shape(embed)[1];
    let x3 = tape.reshape(x, vec![t, nf, 1])?;
    let e3 = tape.reshape(embed, vec![1, nf, d])?;
    let prod = tape.mul(x3, e3)?;
    let flat = tape.reshape(prod, vec![t * nf, d])?;
    let alpha = mlp_scores(tape, flat, w2, b2, w3, b3)?;
    let alpha = tape.reshape(alpha, vec![t, nf])?;
    let xi = tape.softmax_axis(alpha, 1)?;
    let xi3 = tape.reshape(xi, vec![t, nf, 1])?;
    let weighted = tape.mul(prod, xi3)?;
    let reduced = tape.reduce_mean(weighted, 2)?;
    let out = tape.add(reduced, x)?;
    Ok((out, xi))
}

/// Weights of one LSTM layer; each gate consumes [h_{t-1}, x_t].
#[derive(Clone, Copy, Debug)]
pub struct LstmLayerIds {
    pub w_f: TensorId,
    pub b_f: TensorId,
    pub w_i: TensorId,
    pub b_i: TensorId,
    pub w_g: TensorId,
    pub b_g: TensorId,
    pub w_o: TensorId,
    pub b_o: TensorId,
}

/// One LSTM layer over a (T, In) sequence with zero initial state;
/// returns the (T, H) hidden stack. `input_masks`, when given, multiply
/// each x_t (dropout on layer inputs).
pub fn lstm_layer(
    tape: &mut Tape,
    seq: TensorId,
    layer: &LstmLayerIds,
    hidden: usize,
    input_masks: Option<&[TensorId]>,
) -> Result<TensorId> {
    let t_len = tape.shape(seq)[0];
    let mut h = tape.constant(vec![0.0; hidden], vec![1, hidden])?;
    let mut c = tape.constant(vec![0.0; hidden], vec![1, hidden])?;
    let mut rows = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut x_t = tape.row(seq, t)?;
        if let Some(masks) = input_masks {
            x_t = tape.mul(x_t, masks[t])?;
        }
        let hx = tape.concat(&[h, x_t], 1)?;
        let f = gate(tape, hx, layer.w_f, layer.b_f)?;
        let f = tape.sigmoid(f)?;
        let i = gate(tape, hx, layer.w_i, layer.b_i)?;
        let i = tape.sigmoid(i)?;
        let g = gate(tape, hx, layer.w_g, layer.b_g)?;
        let g = tape.tanh(g)?;
        let o = gate(tape, hx, layer.w_o, layer.b_o)?;
        let o = tape.sigmoid(o)?;
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        c = tape.add(keep, write)?;
        let c_act = tape.tanh(c)?;
        h = tape.mul(o, c_act)?;
        rows.push(h);
    }
    tape.concat(&rows, 0)
}

fn gate(tape: &mut Tape, hx: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
    let z = tape.matmul(hx, w)?;
    tape.add(z, b)
}

/// How the residual-augmented per-step vectors collapse into the single
/// context vector the head consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TimeAggregation {
    /// Σ_t ν_t · ỹ_t (default).
    WeightedSum,
    /// Mean over T of ỹ_t.
    Mean,
    /// ỹ at the final step.
    Last,
}

/// Time-level attention over a (T, H) hidden stack: per-step MLP score,
/// softmax over T, residual ỹ_t = ν_t·h_t + h_t, then aggregation into a
/// (1, H) context. Returns (context, ν) with ν shaped (T, 1).
pub fn time_attention_block(
    tape: &mut Tape,
    h: TensorId,
    w4: TensorId,
    b4: TensorId,
    w5: TensorId,
    b5: TensorId,
    agg: TimeAggregation,
) -> Result<(TensorId, TensorId)> {
    let shape = tape.shape(h).to_vec();
    if shape.len() != 2 {
        return Err(Error::Dimension(format!(
            "time attention expects (T, H), got {shape:?}"
        )));
    }
    let (t, width) = (shape[0], shape[1]);
    let eta = mlp_scores(tape, h, w4, b4, w5, b5)?;
    let nu = tape.softmax_axis(eta, 0)?;
    let scaled = tape.mul(nu, h)?;
    let ytilde = tape.add(scaled, h)?;
    let context = match agg {
        TimeAggregation::WeightedSum => {
            let nu_row = tape.reshape(nu, vec![1, t])?;
            tape.matmul(nu_row, ytilde)?
        }
        TimeAggregation::Mean => {
            let m = tape.reduce_mean(ytilde, 0)?;
            tape.reshape(m, vec![1, width])?
        }
        TimeAggregation::Last => tape.row(ytilde, t - 1)?,
    };
    Ok((context, nu))
}

/// ReLU fully-connected head mapping the (1, H) context to the (1, P)
/// forecast in scaled target space.
pub fn head_block(tape: &mut Tape, context: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
    let z = tape.matmul(context, w)?;
    let z = tape.add(z, b)?;
    tape.relu(z)
}

fn expect_rank3(tape: &Tape, id: TensorId, what: &str) -> Result<(usize, usize, usize)> {
    let s = tape.shape(id);
    if s.len() != 3 {
        return Err(Error::Dimension(format!(
            "{what} expects rank 3, got {s:?}"
        )));
    }
    Ok((s[0], s[1], s[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize_adjacency, FeederGraph};
    use crate::rng::Rng;

    fn leaf(tape: &mut Tape, vals: Vec<f64>, shape: Vec<usize>) -> TensorId {
        tape.leaf(vals, shape, false).unwrap()
    }

    fn rand_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.uniform_in(-scale, scale)).collect()
    }

    // ── reference computations (plain f64, independent of the tape) ──

    fn ref_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn ref_relu(x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v.max(0.0)).collect()
    }

    fn ref_softmax(x: &[f64]) -> Vec<f64> {
        let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }

    #[test]
    fn gcn_single_node_identity_weights_is_relu() {
        // Ã = [[1]], square identity weights: output = ReLU(input).
        let mut tape = Tape::new();
        let adj = leaf(&mut tape, vec![1.0], vec![1, 1]);
        let c_t = leaf(&mut tape, vec![-2.0, 0.5, 3.0], vec![1, 3]);
        let eye = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let w0 = leaf(&mut tape, eye.clone(), vec![3, 3]);
        let w1 = leaf(&mut tape, eye, vec![3, 3]);
        let out = gcn_block(&mut tape, adj, c_t, w0, w1).unwrap();
        assert_eq!(tape.values(out), &[0.0, 0.5, 3.0]);
    }

    #[test]
    fn gcn_zero_first_layer_kills_output() {
        let mut tape = Tape::new();
        let adj = leaf(&mut tape, vec![0.5; 4], vec![2, 2]);
        let c_t = leaf(&mut tape, vec![1.0, 2.0, 3.0, 4.0], vec![2, 2]);
        let w0 = leaf(&mut tape, vec![0.0; 6], vec![2, 3]);
        let w1 = leaf(&mut tape, vec![1.0; 6], vec![3, 2]);
        let out = gcn_block(&mut tape, adj, c_t, w0, w1).unwrap();
        assert!(tape.values(out).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gcn_path_graph_matches_dense_reference() {
        let mut g = FeederGraph::new(2);
        g.add_edge(0, 1).unwrap();
        let adj = normalize_adjacency(&g);
        let mut rng = Rng::seed_from_u64(40);
        let c = rand_vec(&mut rng, 2 * 3, 0.8);
        let w0 = rand_vec(&mut rng, 3 * 4, 0.8);
        let w1 = rand_vec(&mut rng, 4 * 2, 0.8);

        let mut tape = Tape::new();
        let adj_id = leaf(&mut tape, adj.matrix.clone(), vec![2, 2]);
        let c_id = leaf(&mut tape, c.clone(), vec![2, 3]);
        let w0_id = leaf(&mut tape, w0.clone(), vec![3, 4]);
        let w1_id = leaf(&mut tape, w1.clone(), vec![4, 2]);
        let out = gcn_block(&mut tape, adj_id, c_id, w0_id, w1_id).unwrap();

        let inner = ref_relu(&ref_matmul(
            &ref_matmul(&adj.matrix, &c, 2, 2, 3),
            &w0,
            2,
            3,
            4,
        ));
        let expect = ref_relu(&ref_matmul(
            &ref_matmul(&adj.matrix, &inner, 2, 2, 4),
            &w1,
            2,
            4,
            2,
        ));
        for (a, b) in tape.values(out).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    fn node_attn_ids(
        tape: &mut Tape,
        rng: &mut Rng,
        f: usize,
        hidden: usize,
    ) -> (TensorId, TensorId, TensorId, TensorId) {
        let w0 = leaf(tape, rand_vec(rng, f * hidden, 0.5), vec![f, hidden]);
        let b0 = leaf(tape, rand_vec(rng, hidden, 0.5), vec![1, hidden]);
        let w1 = leaf(tape, rand_vec(rng, hidden, 0.5), vec![hidden, 1]);
        let b1 = leaf(tape, rand_vec(rng, 1, 0.5), vec![1, 1]);
        (w0, b0, w1, b1)
    }

    #[test]
    fn node_attention_single_node_doubles_input() {
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from_u64(41);
        let g_vals = rand_vec(&mut rng, 3 * 1 * 2, 1.0);
        let g = leaf(&mut tape, g_vals.clone(), vec![3, 1, 2]);
        let (w0, b0, w1, b1) = node_attn_ids(&mut tape, &mut rng, 2, 4);
        let (out, zeta) = node_attention_block(&mut tape, g, w0, b0, w1, b1).unwrap();
        for z in tape.values(zeta) {
            assert!((z - 1.0).abs() < 1e-15);
        }
        for (o, i) in tape.values(out).iter().zip(&g_vals) {
            assert!((o - 2.0 * i).abs() < 1e-15);
        }
    }

    #[test]
    fn node_attention_identical_rows_uniform_scores() {
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from_u64(42);
        // 4 nodes share one feature row at each of 2 steps.
        let row: Vec<f64> = rand_vec(&mut rng, 3, 1.0);
        let mut g_vals = Vec::new();
        for _ in 0..2 {
            for _ in 0..4 {
                g_vals.extend_from_slice(&row);
            }
        }
        let g = leaf(&mut tape, g_vals, vec![2, 4, 3]);
        let (w0, b0, w1, b1) = node_attn_ids(&mut tape, &mut rng, 3, 4);
        let (_, zeta) = node_attention_block(&mut tape, g, w0, b0, w1, b1).unwrap();
        for z in tape.values(zeta) {
            assert!((z - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn node_attention_zero_weights_uniform_scores() {
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from_u64(43);
        let g = leaf(&mut tape, rand_vec(&mut rng, 2 * 3 * 2, 1.0), vec![2, 3, 2]);
        let w0 = leaf(&mut tape, vec![0.0; 2 * 4], vec![2, 4]);
        let b0 = leaf(&mut tape, rand_vec(&mut rng, 4, 0.5), vec![1, 4]);
        let w1 = leaf(&mut tape, vec![0.0; 4], vec![4, 1]);
        let b1 = leaf(&mut tape, vec![0.7], vec![1, 1]);
        let (_, zeta) = node_attention_block(&mut tape, g, w0, b0, w1, b1).unwrap();
        for z in tape.values(zeta) {
            assert!((z - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn node_attention_matches_stepwise_reference() {
        let (t, n, f, hidden) = (2, 3, 2, 4);
        let mut rng = Rng::seed_from_u64(44);
        let g_vals = rand_vec(&mut rng, t * n * f, 1.0);
        let w0v = rand_vec(&mut rng, f * hidden, 0.6);
        let b0v = rand_vec(&mut rng, hidden, 0.6);
        let w1v = rand_vec(&mut rng, hidden, 0.6);
        let b1v = rand_vec(&mut rng, 1, 0.6);

        let mut tape = Tape::new();
        let g = leaf(&mut tape, g_vals.clone(), vec![t, n, f]);
        let w0 = leaf(&mut tape, w0v.clone(), vec![f, hidden]);
        let b0 = leaf(&mut tape, b0v.clone(), vec![1, hidden]);
        let w1 = leaf(&mut tape, w1v.clone(), vec![hidden, 1]);
        let b1 = leaf(&mut tape, b1v.clone(), vec![1, 1]);
        let (out, _) = node_attention_block(&mut tape, g, w0, b0, w1, b1).unwrap();

        // Reference: score each (t,n) row, softmax over n, residual.
        let mut expect = vec![0.0; t * n * f];
        for ti in 0..t {
            let mut alphas = vec![0.0; n];
            for ni in 0..n {
                let row = &g_vals[(ti * n + ni) * f..(ti * n + ni + 1) * f];
                let mut hid = b0v.clone();
                for (j, h) in hid.iter_mut().enumerate() {
                    for (i, x) in row.iter().enumerate() {
                        *h += x * w0v[i * hidden + j];
                    }
                }
                let mut s = b1v[0];
                for (h, w) in hid.iter().zip(&w1v) {
                    s += h * w;
                }
                alphas[ni] = s.tanh();
            }
            let zeta = ref_softmax(&alphas);
            for ni in 0..n {
                for fi in 0..f {
                    let idx = (ti * n + ni) * f + fi;
                    expect[idx] = g_vals[idx] * (1.0 + zeta[ni]);
                }
            }
        }
        for (a, b) in tape.values(out).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn feature_attention_singleton_feature_scores_one() {
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from_u64(45);
        let x = leaf(&mut tape, rand_vec(&mut rng, 3, 1.0), vec![3, 1]);
        let embed = leaf(&mut tape, rand_vec(&mut rng, 2, 1.0), vec![1, 2]);
        let w2 = leaf(&mut tape, rand_vec(&mut rng, 2 * 3, 0.5), vec![2, 3]);
        let b2 = leaf(&mut tape, rand_vec(&mut rng, 3, 0.5), vec![1, 3]);
        let w3 = leaf(&mut tape, rand_vec(&mut rng, 3, 0.5), vec![3, 1]);
        let b3 = leaf(&mut tape, rand_vec(&mut rng, 1, 0.5), vec![1, 1]);
        let (_, xi) = feature_attention_block(&mut tape, x, embed, w2, b2, w3, b3).unwrap();
        for v in tape.values(xi) {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn feature_attention_zero_mlp_uniform_scores() {
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from_u64(46);
        let nf = 6;
        let x = leaf(&mut tape, rand_vec(&mut rng, 2 * nf, 1.0), vec![2, nf]);
        let embed = leaf(&mut tape, rand_vec(&mut rng, nf * 3, 1.0), vec![nf, 3]);
        let w2 = leaf(&mut tape, vec![0.0; 3 * 4], vec![3, 4]);
        let b2 = leaf(&mut tape, rand_vec(&mut rng, 4, 0.5), vec![1, 4]);
        let w3 = leaf(&mut tape, vec![0.0; 4], vec![4, 1]);
        let b3 = leaf(&mut tape, vec![-0.3], vec![1, 1]);
        let (_, xi) = feature_attention_block(&mut tape, x, embed, w2, b2, w3, b3).unwrap();
        for v in tape.values(xi) {
            assert!((v - 1.0 / nf as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_attention_matches_stepwise_reference() {
        let (t, nf, d, hidden) = (2, 4, 3, 5);
        let mut rng = Rng::seed_from_u64(47);
        let xv = rand_vec(&mut rng, t * nf, 1.0);
        let ev = rand_vec(&mut rng, nf * d, 1.0);
        let w2v = rand_vec(&mut rng, d * hidden, 0.5);
        let b2v = rand_vec(&mut rng, hidden, 0.5);
        let w3v = rand_vec(&mut rng, hidden, 0.5);
        let b3v = rand_vec(&mut rng, 1, 0.5);

        let mut tape = Tape::new();
        let x = leaf(&mut tape, xv.clone(), vec![t, nf]);
        let embed = leaf(&mut tape, ev.clone(), vec![nf, d]);
        let w2 = leaf(&mut tape, w2v.clone(), vec![d, hidden]);
        let b2 = leaf(&mut tape, b2v.clone(), vec![1, hidden]);
        let w3 = leaf(&mut tape, w3v.clone(), vec![hidden, 1]);
        let b3 = leaf(&mut tape, b3v.clone(), vec![1, 1]);
        let (out, _) = feature_attention_block(&mut tape, x, embed, w2, b2, w3, b3).unwrap();

        let mut expect = vec![0.0; t * nf];
        for j in 0..t {
            // Scores per feature from its embedded product vector.
            let mut alphas = vec![0.0; nf];
            let mut prods = vec![vec![0.0; d]; nf];
            for i in 0..nf {
                for k in 0..d {
                    prods[i][k] = xv[j * nf + i] * ev[i * d + k];
                }
                let mut hid = b2v.clone();
                for (h_i, h) in hid.iter_mut().enumerate() {
                    for k in 0..d {
                        *h += prods[i][k] * w2v[k * hidden + h_i];
                    }
                }
                let mut s = b3v[0];
                for (h, w) in hid.iter().zip(&w3v) {
                    s += h * w;
                }
                alphas[i] = s.tanh();
            }
            let xi = ref_softmax(&alphas);
            for i in 0..nf {
                let mean_d: f64 = prods[i].iter().sum::<f64>() / d as f64;
                expect[j * nf + i] = xi[i] * mean_d + xv[j * nf + i];
            }
        }
        for (a, b) in tape.values(out).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    fn lstm_ids(tape: &mut Tape, rng: &mut Rng, input: usize, hidden: usize) -> LstmLayerIds {
        let mut w = |n: usize| -> Vec<f64> { rand_vec(rng, n, 0.4) };
        let dims = vec![(input + hidden) * hidden, hidden];
        let w_f = leaf(tape, w(dims[0]), vec![input + hidden, hidden]);
        let b_f = leaf(tape, w(dims[1]), vec![1, hidden]);
        let w_i = leaf(tape, w(dims[0]), vec![input + hidden, hidden]);
        let b_i = leaf(tape, w(dims[1]), vec![1, hidden]);
        let w_g = leaf(tape, w(dims[0]), vec![input + hidden, hidden]);
        let b_g = leaf(tape, w(dims[1]), vec![1, hidden]);
        let w_o = leaf(tape, w(dims[0]), vec![input + hidden, hidden]);
        let b_o = leaf(tape, w(dims[1]), vec![1, hidden]);
        LstmLayerIds {
            w_f,
            b_f,
            w_i,
            b_i,
            w_g,
            b_g,
            w_o,
            b_o,
        }
    }

    fn zero_lstm_ids(tape: &mut Tape, input: usize, hidden: usize) -> LstmLayerIds {
        let wz = vec![0.0; (input + hidden) * hidden];
        let bz = vec![0.0; hidden];
        let mk_w = |tape: &mut Tape| leaf(tape, wz.clone(), vec![input + hidden, hidden]);
        let mk_b = |tape: &mut Tape| leaf(tape, bz.clone(), vec![1, hidden]);
        LstmLayerIds {
            w_f: mk_w(tape),
            b_f: mk_b(tape),
            w_i: mk_w(tape),
            b_i: mk_b(tape),
            w_g: mk_w(tape),
            b_g: mk_b(tape),
            w_o: mk_w(tape),
            b_o: mk_b(tape),
        }
    }

    #[test]
    fn lstm_all_zero_parameters_emit_zero_hidden() {
        // f = i = o = 0.5 and g = 0, so c and h stay 0 for every step.
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from_u64(48);
        let seq = leaf(&mut tape, rand_vec(&mut rng, 5 * 3, 1.0), vec![5, 3]);
        let layer = zero_lstm_ids(&mut tape, 3, 4);
        let h = lstm_layer(&mut tape, seq, &layer, 4, None).unwrap();
        assert!(tape.values(h).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_forget_bias_ten_gives_gate_sigmoid_ten() {
        // Zero weights except b_f = 10 and b_g = 1: c_t = f·c_{t-1} + u
        // with u = 0.5·tanh(1), so f = c_2/c_1 − 1. Recover c from
        // h = 0.5·tanh(c).
        let mut tape = Tape::new();
        let seq = leaf(&mut tape, vec![0.3, -0.8], vec![2, 1]);
        let mut layer = zero_lstm_ids(&mut tape, 1, 1);
        layer.b_f = leaf(&mut tape, vec![10.0], vec![1, 1]);
        layer.b_g = leaf(&mut tape, vec![1.0], vec![1, 1]);
        let h = lstm_layer(&mut tape, seq, &layer, 1, None).unwrap();
        let hv = tape.values(h);
        let c1 = (2.0 * hv[0]).atanh();
        let c2 = (2.0 * hv[1]).atanh();
        let f = c2 / c1 - 1.0;
        let expect = 1.0 / (1.0 + (-10.0f64).exp());
        assert!((f - expect).abs() < 1e-9, "f {f} vs {expect}");
        assert!((expect - 0.99995).abs() < 1e-4);
    }

    /// Scalar oracle for a 1-wide LSTM cell.
    #[allow(clippy::too_many_arguments)]
    fn ref_lstm_step(
        h: f64,
        c: f64,
        x: f64,
        w: &[f64; 8], // wf_h, wf_x, wi_h, wi_x, wg_h, wg_x, wo_h, wo_x
        b: &[f64; 4],
    ) -> (f64, f64) {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let f = sig(w[0] * h + w[1] * x + b[0]);
        let i = sig(w[2] * h + w[3] * x + b[1]);
        let g = (w[4] * h + w[5] * x + b[2]).tanh();
        let o = sig(w[6] * h + w[7] * x + b[3]);
        let c_new = f * c + i * g;
        (o * c_new.tanh(), c_new)
    }

    #[test]
    fn lstm_single_width_matches_scalar_oracle() {
        let w = [0.3, -0.6, 0.2, 0.9, -0.4, 0.5, 0.7, -0.1];
        let b = [0.1, -0.2, 0.3, -0.4];
        let xs = [0.5, -1.0, 0.25];

        let mut tape = Tape::new();
        let seq = leaf(&mut tape, xs.to_vec(), vec![3, 1]);
        // Gate weight layout: rows = [h, x].
        let layer = LstmLayerIds {
            w_f: leaf(&mut tape, vec![w[0], w[1]], vec![2, 1]),
            b_f: leaf(&mut tape, vec![b[0]], vec![1, 1]),
            w_i: leaf(&mut tape, vec![w[2], w[3]], vec![2, 1]),
            b_i: leaf(&mut tape, vec![b[1]], vec![1, 1]),
            w_g: leaf(&mut tape, vec![w[4], w[5]], vec![2, 1]),
            b_g: leaf(&mut tape, vec![b[2]], vec![1, 1]),
            w_o: leaf(&mut tape, vec![w[6], w[7]], vec![2, 1]),
            b_o: leaf(&mut tape, vec![b[3]], vec![1, 1]),
        };
        let h = lstm_layer(&mut tape, seq, &layer, 1, None).unwrap();

        let (mut href, mut cref) = (0.0, 0.0);
        let mut expect = Vec::new();
        for &x in &xs {
            let (hn, cn) = ref_lstm_step(href, cref, x, &w, &b);
            href = hn;
            cref = cn;
            expect.push(hn);
        }
        for (a, b) in tape.values(h).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    fn time_attn_ids(
        tape: &mut Tape,
        rng: &mut Rng,
        width: usize,
        hidden: usize,
    ) -> (TensorId, TensorId, TensorId, TensorId) {
        let w4 = leaf(tape, rand_vec(rng, width * hidden, 0.5), vec![width, hidden]);
        let b4 = leaf(tape, rand_vec(rng, hidden, 0.5), vec![1, hidden]);
        let w5 = leaf(tape, rand_vec(rng, hidden, 0.5), vec![hidden, 1]);
        let b5 = leaf(tape, rand_vec(rng, 1, 0.5), vec![1, 1]);
        (w4, b4, w5, b5)
    }

    #[test]
    fn time_attention_single_step_doubles() {
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from_u64(50);
        let hv = rand_vec(&mut rng, 3, 1.0);
        let h = leaf(&mut tape, hv.clone(), vec![1, 3]);
        let (w4, b4, w5, b5) = time_attn_ids(&mut tape, &mut rng, 3, 4);
        let (ctx, nu) =
            time_attention_block(&mut tape, h, w4, b4, w5, b5, TimeAggregation::WeightedSum)
                .unwrap();
        assert!((tape.values(nu)[0] - 1.0).abs() < 1e-15);
        for (c, v) in tape.values(ctx).iter().zip(&hv) {
            assert!((c - 2.0 * v).abs() < 1e-15);
        }
    }

    #[test]
    fn time_attention_identical_steps_average_cleanly() {
        // All h_t equal: ν uniform, context = (1 + 1/T)·h.
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from_u64(51);
        let row = rand_vec(&mut rng, 4, 1.0);
        let t = 5;
        let mut hv = Vec::new();
        for _ in 0..t {
            hv.extend_from_slice(&row);
        }
        let h = leaf(&mut tape, hv, vec![t, 4]);
        let (w4, b4, w5, b5) = time_attn_ids(&mut tape, &mut rng, 4, 3);
        let (ctx, nu) =
            time_attention_block(&mut tape, h, w4, b4, w5, b5, TimeAggregation::WeightedSum)
                .unwrap();
        for v in tape.values(nu) {
            assert!((v - 1.0 / t as f64).abs() < 1e-12);
        }
        for (c, v) in tape.values(ctx).iter().zip(&row) {
            assert!((c - (1.0 + 1.0 / t as f64) * v).abs() < 1e-12);
        }
    }

    #[test]
    fn time_attention_matches_stepwise_reference() {
        let (t, width, hidden) = (2, 3, 4);
        let mut rng = Rng::seed_from_u64(52);
        let hv = rand_vec(&mut rng, t * width, 1.0);
        let w4v = rand_vec(&mut rng, width * hidden, 0.5);
        let b4v = rand_vec(&mut rng, hidden, 0.5);
        let w5v = rand_vec(&mut rng, hidden, 0.5);
        let b5v = rand_vec(&mut rng, 1, 0.5);

        let mut tape = Tape::new();
        let h = leaf(&mut tape, hv.clone(), vec![t, width]);
        let w4 = leaf(&mut tape, w4v.clone(), vec![width, hidden]);
        let b4 = leaf(&mut tape, b4v.clone(), vec![1, hidden]);
        let w5 = leaf(&mut tape, w5v.clone(), vec![hidden, 1]);
        let b5 = leaf(&mut tape, b5v.clone(), vec![1, 1]);
        let (ctx, _) =
            time_attention_block(&mut tape, h, w4, b4, w5, b5, TimeAggregation::WeightedSum)
                .unwrap();

        let mut etas = vec![0.0; t];
        for ti in 0..t {
            let row = &hv[ti * width..(ti + 1) * width];
            let mut hid = b4v.clone();
            for (j, hj) in hid.iter_mut().enumerate() {
                for (i, x) in row.iter().enumerate() {
                    *hj += x * w4v[i * hidden + j];
                }
            }
            let mut s = b5v[0];
            for (x, w) in hid.iter().zip(&w5v) {
                s += x * w;
            }
            etas[ti] = s.tanh();
        }
        let nu = ref_softmax(&etas);
        let mut expect = vec![0.0; width];
        for ti in 0..t {
            for wi in 0..width {
                let y = nu[ti] * hv[ti * width + wi] + hv[ti * width + wi];
                expect[wi] += nu[ti] * y;
            }
        }
        for (a, b) in tape.values(ctx).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn head_zero_weights_zero_output() {
        let mut tape = Tape::new();
        let ctx = leaf(&mut tape, vec![1.0, -2.0, 3.0], vec![1, 3]);
        let w = leaf(&mut tape, vec![0.0; 6], vec![3, 2]);
        let b = leaf(&mut tape, vec![0.0; 2], vec![1, 2]);
        let y = head_block(&mut tape, ctx, w, b).unwrap();
        assert_eq!(tape.values(y), &[0.0, 0.0]);
    }

    #[test]
    fn head_negative_bias_clips_to_zero() {
        let mut tape = Tape::new();
        let ctx = leaf(&mut tape, vec![0.5, 0.5], vec![1, 2]);
        let w = leaf(&mut tape, vec![0.0; 4], vec![2, 2]);
        let b = leaf(&mut tape, vec![-1.0, -1.0], vec![1, 2]);
        let y = head_block(&mut tape, ctx, w, b).unwrap();
        assert_eq!(tape.values(y), &[0.0, 0.0]);
    }

    #[test]
    fn head_output_is_never_negative() {
        let mut rng = Rng::seed_from_u64(53);
        for _ in 0..20 {
            let mut tape = Tape::new();
            let ctx = leaf(&mut tape, rand_vec(&mut rng, 4, 2.0), vec![1, 4]);
            let w = leaf(&mut tape, rand_vec(&mut rng, 4 * 3, 0.8), vec![4, 3]);
            let b = leaf(&mut tape, rand_vec(&mut rng, 3, 0.8), vec![1, 3]);
            let y = head_block(&mut tape, ctx, w, b).unwrap();
            assert!(tape.values(y).iter().all(|&v| v >= 0.0));
        }
    }
}
