//! Central-difference verification of tape gradients.

use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Max over coordinates of `|analytic - numeric| / max(1, |analytic|)` for a
/// scalar function of one tensor.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), core::slice::from_ref(x), eps)
}

/// [`grad_check`] over several inputs at once; every coordinate of every input
/// is perturbed.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(contract!("grad_check eps {} outside [1e-7, 1e-3]", eps));
    }
    let eval = |xs: &[Tensor]| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        if tape.value(out).len() != 1 {
            return Err(contract!(
                "grad_check needs a scalar function, got shape {:?}",
                tape.value(out).shape()
            ));
        }
        Ok((tape, vars, out))
    };

    let (tape, vars, out) = eval(inputs)?;
    let grads = tape.backward(out)?;
    let mut worst: f64 = 0.0;
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.wrt(vars[k], input);
        for i in 0..input.len() {
            let orig = input.data()[i];
            probe[k].data_mut()[i] = orig + eps;
            let (t, _, o) = eval(&probe)?;
            let plus = t.value(o).data()[0];
            probe[k].data_mut()[i] = orig - eps;
            let (t, _, o) = eval(&probe)?;
            let minus = t.value(o).data()[0];
            probe[k].data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[i];
            let err = libm::fabs(a - numeric) / libm::fabs(a).max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
