//! Task losses (depth: smooth-L1 plus edge-aware smoothness; segmentation:
//! cross entropy), the multi-robot loss average, and evaluation metrics.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{NodeId, Tape};

/// Loss weights. `alpha_smooth` scales the edge-aware smoothness term;
/// `beta` is the smooth-L1 quadratic/linear transition point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha_smooth: f64,
    pub beta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha_smooth: 1e-3,
            beta: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_smooth < 0.0 {
            return Err(Error::Config("alpha_smooth must be >= 0".into()));
        }
        if self.beta <= 0.0 {
            return Err(Error::Config("beta must be > 0".into()));
        }
        Ok(())
    }
}

/// Depth loss: smooth-L1 against the target plus `alpha_smooth` times the
/// edge-aware smoothness of the prediction w.r.t. the input image.
pub fn depth_loss<S: Scalar>(
    tape: &mut Tape<S>,
    image: &[S],
    pred: NodeId,
    target: &[S],
    cfg: &LossConfig,
) -> Result<NodeId> {
    let l1 = tape.smooth_l1(pred, target, S::of(cfg.beta))?;
    if cfg.alpha_smooth == 0.0 {
        return Ok(l1);
    }
    let smooth = tape.edge_aware_smoothness(pred, image)?;
    let weighted = tape.scale(smooth, S::of(cfg.alpha_smooth));
    tape.add(l1, weighted)
}

/// Segmentation loss: mean pixelwise cross entropy.
pub fn seg_loss<S: Scalar>(tape: &mut Tape<S>, logits: NodeId, target: &[usize]) -> Result<NodeId> {
    tape.cross_entropy_seg(logits, target)
}

/// Mean of the per-robot losses.
pub fn total_loss<S: Scalar>(tape: &mut Tape<S>, per_node: &[NodeId]) -> Result<NodeId> {
    if per_node.is_empty() {
        return Err(Error::Contract("total_loss: no per-node losses".into()));
    }
    tape.mean_of(per_node)
}

/// Depth metrics over pre-masked value pairs:
/// `abs_rel = mean |y−y*|/y*`, `sq_rel = mean (y−y*)²/y*`,
/// `rmse = sqrt(mean (y−y*)²)`. Targets must be positive; an empty slice is
/// a metric error (the valid mask removed everything).
pub fn depth_metrics(pred: &[f64], target: &[f64]) -> Result<(f64, f64, f64)> {
    if pred.len() != target.len() {
        return Err(Error::Dimension(format!(
            "depth_metrics: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Metric("depth_metrics: empty valid mask".into()));
    }
    if target.iter().any(|&t| t <= 0.0) {
        return Err(Error::Metric(
            "depth_metrics: target depths must be positive".into(),
        ));
    }
    let n = pred.len() as f64;
    let mut abs_rel = 0.0;
    let mut sq_rel = 0.0;
    let mut mse = 0.0;
    for (&y, &t) in pred.iter().zip(target) {
        let d = y - t;
        abs_rel += d.abs() / t;
        sq_rel += d * d / t;
        mse += d * d;
    }
    Ok((abs_rel / n, sq_rel / n, (mse / n).sqrt()))
}

/// Mean IoU over the classes present in prediction or target; classes
/// absent from both are skipped so empty classes never contribute 0/0.
pub fn miou(pred: &[usize], target: &[usize], class_count: usize) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Dimension(format!(
            "miou: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    let mut counts = MiouAccumulator::new(class_count);
    counts.update(pred, target)?;
    counts.finish()
}

/// Streaming intersection/union counts so evaluation can pool frames.
#[derive(Debug, Clone)]
pub struct MiouAccumulator {
    class_count: usize,
    true_positive: Vec<u64>,
    false_positive: Vec<u64>,
    false_negative: Vec<u64>,
}

impl MiouAccumulator {
    pub fn new(class_count: usize) -> Self {
        MiouAccumulator {
            class_count,
            true_positive: vec![0; class_count],
            false_positive: vec![0; class_count],
            false_negative: vec![0; class_count],
        }
    }

    pub fn update(&mut self, pred: &[usize], target: &[usize]) -> Result<()> {
        for (&p, &t) in pred.iter().zip(target) {
            if p >= self.class_count || t >= self.class_count {
                return Err(Error::Input(format!(
                    "miou: class {} out of range [0, {})",
                    p.max(t),
                    self.class_count
                )));
            }
            if p == t {
                self.true_positive[p] += 1;
            } else {
                self.false_positive[p] += 1;
                self.false_negative[t] += 1;
            }
        }
        Ok(())
    }

    /// Mean over classes appearing in prediction or target.
    pub fn finish(&self) -> Result<f64> {
        let mut total = 0.0;
        let mut present = 0usize;
        for c in 0..self.class_count {
            let union = self.true_positive[c] + self.false_positive[c] + self.false_negative[c];
            if union == 0 {
                continue;
            }
            total += self.true_positive[c] as f64 / union as f64;
            present += 1;
        }
        if present == 0 {
            return Err(Error::Metric("miou: no classes present".into()));
        }
        Ok(total / present as f64)
    }
}

/// One row of evaluation results. Depth tasks fill the first three fields,
/// segmentation fills `miou`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricBundle {
    pub abs_rel: Option<f64>,
    pub sq_rel: Option<f64>,
    pub rmse: Option<f64>,
    pub miou: Option<f64>,
}
