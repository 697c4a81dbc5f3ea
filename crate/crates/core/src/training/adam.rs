//! Adam with bias correction, plus global-norm gradient clipping.

/// First/second moment accumulators, one slot per trainable parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: usize,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }
}

/// Scale all gradients so the global L2 norm is at most `max_norm`;
/// returns the scale applied (1.0 when already within bounds).
pub fn clip_gradients(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm <= max_norm || norm == 0.0 {
        return 1.0;
    }
    let scale = max_norm / norm;
    for g in grads.iter_mut() {
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    scale
}

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// One bias-corrected Adam update over aligned parameter/gradient slots.
pub fn adam_step(
    params: &mut [&mut Vec<f64>],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    hyper: &AdamHyper,
) {
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - hyper.beta1.powf(t);
    let bc2 = 1.0 - hyper.beta2.powf(t);
    for (slot, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[slot], &mut state.v[slot]);
        for i in 0..grad.len() {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * grad[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            param[i] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
}
