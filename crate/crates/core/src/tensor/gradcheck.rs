//! Central-difference gradient verification.

use crate::error::{Error, Result};
use crate::tensor::{Tape, TensorId};

/// Compare tape gradients against central differences.
///
/// `build` must construct a scalar loss on a fresh tape from leaves created
/// with the given values (one leaf per input, in order). Returns the
/// maximum over all coordinates of |analytic − numeric| / max(1e-8,
/// |analytic| + |numeric|).
pub fn gradient_check<F>(build: F, inputs: &[(Vec<usize>, Vec<f64>)], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId>,
{
    if eps <= 0.0 {
        return Err(Error::Contract("gradient_check needs eps > 0".into()));
    }
    let run = |data: &[Vec<f64>], with_grad: bool| -> Result<(Tape, TensorId, Vec<TensorId>)> {
        let mut tape = Tape::new();
        let mut ids = Vec::with_capacity(inputs.len());
        for ((shape, _), values) in inputs.iter().zip(data) {
            ids.push(tape.leaf(values.clone(), shape.clone(), with_grad)?);
        }
        let loss = build(&mut tape, &ids)?;
        if tape.values(loss).len() != 1 {
            return Err(Error::Contract(
                "gradient_check target must be scalar-valued".into(),
            ));
        }
        Ok((tape, loss, ids))
    };

    let base: Vec<Vec<f64>> = inputs.iter().map(|(_, v)| v.clone()).collect();
    let (mut tape, loss, ids) = run(&base, true)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| tape.grad(id).expect("leaf requested grad").to_vec())
        .collect();

    let mut worst = 0.0f64;
    for (pi, (_, values)) in inputs.iter().enumerate() {
        for ci in 0..values.len() {
            let mut plus = base.clone();
            plus[pi][ci] += eps;
            let (tape_p, loss_p, _) = run(&plus, false)?;
            let fp = tape_p.values(loss_p)[0];

            let mut minus = base.clone();
            minus[pi][ci] -= eps;
            let (tape_m, loss_m, _) = run(&minus, false)?;
            let fm = tape_m.values(loss_m)[0];

            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic[pi][ci];
            let rel = (a - numeric).abs() / (1e-8f64).max(a.abs() + numeric.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
