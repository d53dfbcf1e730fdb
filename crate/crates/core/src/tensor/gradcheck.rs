//! Central-difference gradient checking oracle.
//!
//! The numeric side never touches `backward`, so it stays an independent
//! check on the analytic gradients.

use super::tape::{NodeId, Tape};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::scalar::Scalar;

fn eval_at<S, F>(f: &F, point: &Tensor<S>) -> Result<S>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, NodeId) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(point.shape().to_vec(), point.data().to_vec(), false)?;
    let y = f(&mut tape, x)?;
    if tape.value(y).len() != 1 {
        return Err(Error::Contract(
            "grad_check: function must be scalar-valued".into(),
        ));
    }
    let v = tape.value(y)[0];
    if !v.is_finite() {
        return Err(Error::Eval(format!("grad_check: f(point) = {v} not finite")));
    }
    Ok(v)
}

fn relative_error<S: Scalar>(analytic: S, numeric: S) -> S {
    let denom = analytic.abs().max(numeric.abs()).max(S::of(1e-8));
    (analytic - numeric).abs() / denom
}

fn check_components<S, F>(
    f: &F,
    point: &Tensor<S>,
    epsilon: S,
    components: &[usize],
) -> Result<S>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, NodeId) -> Result<NodeId>,
{
    // Analytic gradient through the tape once.
    let mut tape = Tape::new();
    let x = tape.leaf(point.shape().to_vec(), point.data().to_vec(), true)?;
    let y = f(&mut tape, x)?;
    if tape.value(y).len() != 1 {
        return Err(Error::Contract(
            "grad_check: function must be scalar-valued".into(),
        ));
    }
    if !tape.value(y)[0].is_finite() {
        return Err(Error::Eval(format!(
            "grad_check: f(point) = {} not finite",
            tape.value(y)[0]
        )));
    }
    tape.backward(y)?;
    let zero_grad = vec![S::zero(); point.numel()];
    let analytic: Vec<S> = tape.grad(x).unwrap_or(&zero_grad).to_vec();

    let mut worst = S::zero();
    let mut probe = point.clone();
    for &i in components {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + epsilon;
        let plus = eval_at(f, &probe)?;
        probe.data_mut()[i] = orig - epsilon;
        let minus = eval_at(f, &probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (S::of(2.0) * epsilon);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

/// Compare analytic gradients against central differences on every
/// component of `point`; returns the worst relative error with denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<S, F>(f: F, point: &Tensor<S>, epsilon: S) -> Result<S>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, NodeId) -> Result<NodeId>,
{
    let all: Vec<usize> = (0..point.numel()).collect();
    check_components(&f, point, epsilon, &all)
}

/// Like [`grad_check`] but probes at most `max_components` randomly chosen
/// components; used for large end-to-end checks.
pub fn grad_check_sampled<S, F>(
    f: F,
    point: &Tensor<S>,
    epsilon: S,
    max_components: usize,
    rng: &mut RngState,
) -> Result<S>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, NodeId) -> Result<NodeId>,
{
    let n = point.numel();
    let components: Vec<usize> = if n <= max_components {
        (0..n).collect()
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        idx.truncate(max_components);
        idx.sort_unstable();
        idx
    };
    check_components(&f, point, epsilon, &components)
}
