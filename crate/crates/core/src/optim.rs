//! Named parameter store with Adam optimizer state.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone)]
struct Slot<S: Scalar> {
    tensor: Tensor<S>,
    first_moment: Vec<S>,
    second_moment: Vec<S>,
    step: u64,
}

/// Map from dotted parameter paths to tensors, plus per-parameter Adam
/// moments. Iteration order is the sorted name order, so any walk over the
/// store is deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<S: Scalar> {
    slots: BTreeMap<String, Slot<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore { slots: BTreeMap::new() }
    }

    /// Register a parameter. Names must be unique.
    pub fn insert(&mut self, name: &str, tensor: Tensor<S>) -> Result<()> {
        if self.slots.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        let n = tensor.numel();
        let mut tensor = tensor;
        tensor.set_requires_grad(true);
        self.slots.insert(
            name.to_string(),
            Slot {
                tensor,
                first_moment: vec![S::zero(); n],
                second_moment: vec![S::zero(); n],
                step: 0,
            },
        );
        Ok(())
    }

    /// Register a parameter initialized uniformly in ±sqrt(1/fan_in).
    pub fn insert_uniform(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut RngState,
    ) -> Result<()> {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let numel = shape.iter().product();
        let data: Vec<S> = (0..numel)
            .map(|_| S::of(rng.next_range(-bound, bound)))
            .collect();
        self.insert(name, Tensor::from_vec(shape, data)?)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.slots
            .get(name)
            .map(|s| &s.tensor)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<S>> {
        self.slots
            .get_mut(name)
            .map(|s| &mut s.tensor)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.slots.iter().map(|(k, v)| (k.as_str(), &v.tensor))
    }

    /// Clear any stale tape handles before recording a new forward pass.
    pub fn begin_pass(&mut self) {
        for slot in self.slots.values_mut() {
            slot.tensor.set_tape_id(None);
        }
    }

    /// Stage a parameter onto `tape`, reusing the existing handle if the
    /// parameter was already staged this pass (shared weights must map to a
    /// single node so gradients accumulate).
    pub fn stage(&mut self, tape: &mut Tape<S>, name: &str) -> Result<crate::tensor::NodeId> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))?;
        if let Some(id) = slot.tensor.tape_id() {
            return Ok(id);
        }
        tape.stage(&mut slot.tensor)
    }

    /// Pull gradients off the tape into the parameters' grad buffers,
    /// accumulating across calls. Parameters staged but off the loss path
    /// receive a zero gradient contribution. Tape handles are cleared.
    pub fn harvest_grads(&mut self, tape: &Tape<S>) -> Result<()> {
        for slot in self.slots.values_mut() {
            if let Some(id) = slot.tensor.tape_id() {
                if let Some(g) = tape.grad(id) {
                    let g = g.to_vec();
                    slot.tensor.accumulate_grad(&g)?;
                } else {
                    let zeros = vec![S::zero(); slot.tensor.numel()];
                    slot.tensor.accumulate_grad(&zeros)?;
                }
                slot.tensor.set_tape_id(None);
            }
        }
        Ok(())
    }

    /// Scale all pending gradients (gradient accumulation over a batch).
    pub fn scale_grads(&mut self, factor: S) -> Result<()> {
        for (name, slot) in self.slots.iter_mut() {
            let n = slot.tensor.numel();
            let Some(g) = slot.tensor.grad() else {
                return Err(Error::Contract(format!(
                    "parameter {name} has no gradient to scale"
                )));
            };
            let scaled: Vec<S> = g.iter().map(|v| *v * factor).collect();
            slot.tensor.clear_grad();
            debug_assert_eq!(scaled.len(), n);
            slot.tensor.accumulate_grad(&scaled)?;
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for slot in self.slots.values_mut() {
            slot.tensor.clear_grad();
        }
    }

    /// One Adam update with bias correction over every parameter; gradients
    /// are cleared afterwards.
    pub fn adam_step(&mut self, lr: S, beta1: S, beta2: S, eps: S) -> Result<()> {
        for (name, slot) in self.slots.iter_mut() {
            if slot.tensor.grad().is_none() {
                return Err(Error::Contract(format!(
                    "adam_step: parameter {name} has no gradient"
                )));
            }
        }
        let one = S::one();
        for slot in self.slots.values_mut() {
            slot.step += 1;
            let t = slot.step as i32;
            let bias1 = one - beta1.powi(t);
            let bias2 = one - beta2.powi(t);
            let grad = slot.tensor.grad().expect("checked above").to_vec();
            for i in 0..grad.len() {
                let g = grad[i];
                slot.first_moment[i] = beta1 * slot.first_moment[i] + (one - beta1) * g;
                slot.second_moment[i] = beta2 * slot.second_moment[i] + (one - beta2) * g * g;
                let m_hat = slot.first_moment[i] / bias1;
                let v_hat = slot.second_moment[i] / bias2;
                let update = lr * m_hat / (v_hat.sqrt() + eps);
                slot.tensor.data_mut()[i] -= update;
            }
            slot.tensor.clear_grad();
        }
        Ok(())
    }
}

/// Default Adam hyperparameters used throughout the harness.
pub mod adam_defaults {
    pub const LR: f64 = 1e-3;
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::zeros(vec![2])).unwrap();
        assert!(store.insert("w", Tensor::zeros(vec![2])).is_err());
    }

    #[test]
    fn zero_grads_leave_parameters_unchanged() {
        let mut store = ParamStore::<f64>::new();
        store
            .insert("w", Tensor::from_vec(vec![3], vec![1.0, -2.0, 0.5]).unwrap())
            .unwrap();
        store
            .get_mut("w")
            .unwrap()
            .accumulate_grad(&[0.0, 0.0, 0.0])
            .unwrap();
        store.adam_step(1e-3, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(store.get("w").unwrap().data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_magnitude_close_to_lr() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::scalar(0.0)).unwrap();
        store.get_mut("w").unwrap().accumulate_grad(&[0.37]).unwrap();
        let lr = 1e-3;
        store.adam_step(lr, 0.9, 0.999, 1e-8).unwrap();
        let w = store.get("w").unwrap().data()[0];
        // First step with bias correction: lr * g / (|g| + eps') ≈ lr.
        assert!((w.abs() - lr).abs() < 1e-6, "step magnitude {}", w.abs());
        assert!(w < 0.0, "moves against the gradient");
        // Gradient cleared after the step.
        assert!(store.get("w").unwrap().grad().is_none());
    }

    #[test]
    fn quadratic_converges_within_500_steps() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::scalar(0.0)).unwrap();
        for _ in 0..500 {
            let w = store.get("w").unwrap().data()[0];
            // d/dw (w - 3)^2 = 2 (w - 3)
            store
                .get_mut("w")
                .unwrap()
                .accumulate_grad(&[2.0 * (w - 3.0)])
                .unwrap();
            store.adam_step(0.1, 0.9, 0.999, 1e-8).unwrap();
        }
        let w = store.get("w").unwrap().data()[0];
        assert!((w - 3.0).abs() < 0.05, "w = {w}");
    }

    #[test]
    fn missing_grad_names_parameter() {
        let mut store = ParamStore::<f64>::new();
        store.insert("enc.w", Tensor::zeros(vec![2])).unwrap();
        store.insert("dec.w", Tensor::zeros(vec![2])).unwrap();
        store
            .get_mut("dec.w")
            .unwrap()
            .accumulate_grad(&[1.0, 1.0])
            .unwrap();
        let err = store.adam_step(1e-3, 0.9, 0.999, 1e-8).unwrap_err();
        assert!(err.to_string().contains("enc.w"), "{err}");
    }

    #[test]
    fn staging_reuses_the_same_node_for_shared_weights() {
        let mut store = ParamStore::<f64>::new();
        store
            .insert("w", Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        store.begin_pass();
        let a = store.stage(&mut tape, "w").unwrap();
        let b = store.stage(&mut tape, "w").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_init_respects_fan_in_bound() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngState::new(5);
        store.insert_uniform("w", vec![16, 4], 4, &mut rng).unwrap();
        let bound = 0.5; // sqrt(1/4)
        for v in store.get("w").unwrap().data() {
            assert!(v.abs() <= bound);
        }
    }
}
