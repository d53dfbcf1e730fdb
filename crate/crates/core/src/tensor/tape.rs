//! Reverse-mode autodiff tape.
//!
//! The tape records every operation of one forward pass and is rebuilt per
//! pass. Node inputs always precede the node itself, so a single reverse
//! sweep visits each node exactly once.
//!
//! Reductions whose operand order depends on graph node labels (neighbor
//! averaging, attention softmax) sum their addends in sorted-value order via
//! [`stable_sum`], which makes the forward pass bitwise equivariant under
//! node relabeling.

use super::kernels;
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Sum values in ascending order, independent of the caller's ordering.
pub fn stable_sum<S: Scalar>(values: &mut [S]) -> S {
    values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    values.iter().fold(S::zero(), |acc, v| acc + *v)
}

/// Elementwise activation kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation<S> {
    Relu,
    LeakyRelu(S),
    Exp,
    Abs,
}

#[derive(Debug, Clone)]
enum Op<S: Scalar> {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, S),
    Relu(NodeId),
    LeakyRelu(NodeId, S),
    Exp(NodeId),
    Abs(NodeId),
    Softplus(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Conv2d {
        x: NodeId,
        k: NodeId,
        b: NodeId,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        x: NodeId,
        k: NodeId,
        b: NodeId,
        stride: usize,
        padding: usize,
    },
    ConcatChannels {
        a: NodeId,
        b: NodeId,
        split: usize,
    },
    ChannelAffine {
        h: NodeId,
        scale: NodeId,
        shift: NodeId,
    },
    ScaleBy {
        t: NodeId,
        s: NodeId,
    },
    StackScalars(Vec<NodeId>),
    Softmax1d(NodeId),
    Index {
        x: NodeId,
        index: usize,
    },
    SliceFlat {
        x: NodeId,
        start: usize,
    },
    Reshape(NodeId),
    MeanOf(Vec<NodeId>),
    SmoothL1 {
        pred: NodeId,
        target: Vec<S>,
        beta: S,
    },
    EdgeAware {
        pred: NodeId,
        wx: Vec<S>,
        wy: Vec<S>,
        h: usize,
        w: usize,
    },
    CrossEntropySeg {
        logits: NodeId,
        target: Vec<usize>,
        probs: Vec<S>,
    },
}

#[derive(Debug)]
struct Node<S: Scalar> {
    shape: Vec<usize>,
    value: Vec<S>,
    grad: Option<Vec<S>>,
    requires_grad: bool,
    op: Op<S>,
}

/// Recorded computation of one forward pass.
#[derive(Debug, Default)]
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[S] {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn grad(&self, id: NodeId) -> Option<&[S]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Copy a node out into a standalone tensor.
    pub fn to_tensor(&self, id: NodeId) -> Tensor<S> {
        let node = &self.nodes[id.0];
        Tensor::from_vec(node.shape.clone(), node.value.clone())
            .expect("tape node shapes are consistent")
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<S>, requires_grad: bool, op: Op<S>) -> NodeId {
        debug_assert!(
            value.iter().all(|v| v.is_finite()),
            "non-finite forward value on tape"
        );
        self.push_unchecked(shape, value, requires_grad, op)
    }

    /// Leaves carry caller data and `exp` may overflow legitimately; those
    /// skip the finiteness debug check so the condition can surface as an
    /// evaluation error instead.
    fn push_unchecked(
        &mut self,
        shape: Vec<usize>,
        value: Vec<S>,
        requires_grad: bool,
        op: Op<S>,
    ) -> NodeId {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            grad: None,
            requires_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Record an input value.
    pub fn leaf(&mut self, shape: Vec<usize>, data: Vec<S>, requires_grad: bool) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "leaf shape {:?} incompatible with {} values",
                shape,
                data.len()
            )));
        }
        Ok(self.push_unchecked(shape, data, requires_grad, Op::Leaf))
    }

    /// Record a non-differentiable input.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<S>) -> Result<NodeId> {
        self.leaf(shape, data, false)
    }

    /// Stage a tensor onto the tape and remember the handle in `tape_id`.
    pub fn stage(&mut self, tensor: &mut Tensor<S>) -> Result<NodeId> {
        let id = self.leaf(
            tensor.shape().to_vec(),
            tensor.data().to_vec(),
            tensor.requires_grad(),
        )?;
        tensor.set_tape_id(Some(id));
        Ok(id)
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    // ── Elementwise and reduction ops ──────────────────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let value: Vec<S> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x + *y).collect();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(self.shape(a).to_vec(), value, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let value: Vec<S> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x - *y).collect();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(self.shape(a).to_vec(), value, rg, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let value: Vec<S> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x * *y).collect();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(self.shape(a).to_vec(), value, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, c: S) -> NodeId {
        let value: Vec<S> = self.value(a).iter().map(|x| *x * c).collect();
        let rg = self.requires_grad(a);
        self.push(self.shape(a).to_vec(), value, rg, Op::Scale(a, c))
    }

    pub fn activation(&mut self, a: NodeId, kind: Activation<S>) -> NodeId {
        match kind {
            Activation::Relu => self.relu(a),
            Activation::LeakyRelu(slope) => self.leaky_relu(a, slope),
            Activation::Exp => self.exp(a),
            Activation::Abs => self.abs(a),
        }
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value: Vec<S> = self
            .value(a)
            .iter()
            .map(|x| if *x > S::zero() { *x } else { S::zero() })
            .collect();
        let rg = self.requires_grad(a);
        self.push(self.shape(a).to_vec(), value, rg, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: S) -> NodeId {
        let value: Vec<S> = self
            .value(a)
            .iter()
            .map(|x| if *x >= S::zero() { *x } else { slope * *x })
            .collect();
        let rg = self.requires_grad(a);
        self.push(self.shape(a).to_vec(), value, rg, Op::LeakyRelu(a, slope))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let value: Vec<S> = self.value(a).iter().map(|x| x.exp()).collect();
        let rg = self.requires_grad(a);
        self.push_unchecked(self.shape(a).to_vec(), value, rg, Op::Exp(a))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let value: Vec<S> = self.value(a).iter().map(|x| x.abs()).collect();
        let rg = self.requires_grad(a);
        self.push(self.shape(a).to_vec(), value, rg, Op::Abs(a))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let value: Vec<S> = self.value(a).iter().map(|x| softplus(*x)).collect();
        let rg = self.requires_grad(a);
        self.push(self.shape(a).to_vec(), value, rg, Op::Softplus(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total = self.value(a).iter().fold(S::zero(), |acc, v| acc + *v);
        let rg = self.requires_grad(a);
        self.push(vec![1], vec![total], rg, Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = S::of(self.value(a).len() as f64);
        let total = self.value(a).iter().fold(S::zero(), |acc, v| acc + *v);
        let rg = self.requires_grad(a);
        self.push(vec![1], vec![total / n], rg, Op::Mean(a))
    }

    // ── Layer primitives ───────────────────────────────────────────────

    /// `w · x + b` for a 1-D input.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 1 || ws.len() != 2 || bs.len() != 1 || ws[1] != xs[0] || ws[0] != bs[0] {
            return Err(Error::Dimension(format!(
                "linear: x {xs:?}, w {ws:?}, b {bs:?} incompatible"
            )));
        }
        let (m, n) = (ws[0], ws[1]);
        let mut value = vec![S::zero(); m];
        {
            let xv = self.value(x);
            let wv = self.value(w);
            let bv = self.value(b);
            for i in 0..m {
                let mut acc = bv[i];
                let row = &wv[i * n..(i + 1) * n];
                for j in 0..n {
                    acc = acc + row[j] * xv[j];
                }
                value[i] = acc;
            }
        }
        let rg = self.requires_grad(x) || self.requires_grad(w) || self.requires_grad(b);
        Ok(self.push(vec![m], value, rg, Op::Linear { x, w, b }))
    }

    /// 2-D cross-correlation. Input `Cin×H×W`, kernel `Cout×Cin×k×k`,
    /// bias `Cout`.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        k: NodeId,
        b: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let (xs, ks, bs) = (self.shape(x), self.shape(k), self.shape(b));
        if xs.len() != 3 || ks.len() != 4 || bs.len() != 1 {
            return Err(Error::Dimension(format!(
                "conv2d: ranks input {xs:?}, kernel {ks:?}, bias {bs:?}"
            )));
        }
        if ks[1] != xs[0] || ks[2] != ks[3] || bs[0] != ks[0] {
            return Err(Error::Dimension(format!(
                "conv2d: input shape {xs:?} incompatible with kernel shape {ks:?}"
            )));
        }
        if stride == 0 {
            return Err(Error::Contract("conv2d: stride must be positive".into()));
        }
        let (cin, h, w) = (xs[0], xs[1], xs[2]);
        let (cout, ksize) = (ks[0], ks[2]);
        let ho = kernels::conv_out_dim(h, ksize, stride, padding);
        let wo = kernels::conv_out_dim(w, ksize, stride, padding);
        let (Some(ho), Some(wo)) = (ho, wo) else {
            return Err(Error::Dimension(format!(
                "conv2d: kernel {ksize} exceeds padded input {h}x{w} (padding {padding})"
            )));
        };
        let mut value = vec![S::zero(); cout * ho * wo];
        kernels::conv2d_forward(
            self.value(x),
            (cin, h, w),
            self.value(k),
            ksize,
            self.value(b),
            stride,
            padding,
            &mut value,
            (cout, ho, wo),
        );
        let rg = self.requires_grad(x) || self.requires_grad(k) || self.requires_grad(b);
        Ok(self.push(
            vec![cout, ho, wo],
            value,
            rg,
            Op::Conv2d { x, k, b, stride, padding },
        ))
    }

    /// 2-D transposed convolution (adjoint of `conv2d`). Input `Cin×H×W`,
    /// kernel `Cin×Cout×k×k`, bias `Cout`.
    pub fn conv_transpose2d(
        &mut self,
        x: NodeId,
        k: NodeId,
        b: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let (xs, ks, bs) = (self.shape(x), self.shape(k), self.shape(b));
        if xs.len() != 3 || ks.len() != 4 || bs.len() != 1 {
            return Err(Error::Dimension(format!(
                "conv_transpose2d: ranks input {xs:?}, kernel {ks:?}, bias {bs:?}"
            )));
        }
        if ks[0] != xs[0] || ks[2] != ks[3] || bs[0] != ks[1] {
            return Err(Error::Dimension(format!(
                "conv_transpose2d: input shape {xs:?} incompatible with kernel shape {ks:?}"
            )));
        }
        if stride == 0 {
            return Err(Error::Contract(
                "conv_transpose2d: stride must be positive".into(),
            ));
        }
        let (cin, h, w) = (xs[0], xs[1], xs[2]);
        let (cout, ksize) = (ks[1], ks[2]);
        let ho = kernels::conv_transpose_out_dim(h, ksize, stride, padding);
        let wo = kernels::conv_transpose_out_dim(w, ksize, stride, padding);
        let (Some(ho), Some(wo)) = (ho, wo) else {
            return Err(Error::Dimension(format!(
                "conv_transpose2d: output collapses for input {h}x{w}, kernel {ksize}, stride {stride}, padding {padding}"
            )));
        };
        let mut value = vec![S::zero(); cout * ho * wo];
        kernels::conv_transpose2d_forward(
            self.value(x),
            (cin, h, w),
            self.value(k),
            ksize,
            self.value(b),
            stride,
            padding,
            &mut value,
            (cout, ho, wo),
        );
        let rg = self.requires_grad(x) || self.requires_grad(k) || self.requires_grad(b);
        Ok(self.push(
            vec![cout, ho, wo],
            value,
            rg,
            Op::ConvTranspose2d { x, k, b, stride, padding },
        ))
    }

    /// Concatenate two `C×h×w` tensors along the channel axis.
    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[1..] != sb[1..] {
            return Err(Error::Dimension(format!(
                "concat_channels: shapes {sa:?} and {sb:?} incompatible"
            )));
        }
        let shape = vec![sa[0] + sb[0], sa[1], sa[2]];
        let split = self.value(a).len();
        let mut value = Vec::with_capacity(split + self.value(b).len());
        value.extend_from_slice(self.value(a));
        value.extend_from_slice(self.value(b));
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(shape, value, rg, Op::ConcatChannels { a, b, split }))
    }

    /// Per-channel affine transform: `out_c = scale_c * h_c + shift_c * 1`.
    pub fn channel_affine(&mut self, h: NodeId, scale: NodeId, shift: NodeId) -> Result<NodeId> {
        let (hs, ss, ts) = (self.shape(h), self.shape(scale), self.shape(shift));
        if hs.len() != 3 || ss.len() != 1 || ts.len() != 1 || ss[0] != hs[0] || ts[0] != hs[0] {
            return Err(Error::Dimension(format!(
                "channel_affine: feature {hs:?} needs per-channel scale/shift, got {ss:?}/{ts:?}"
            )));
        }
        let (c, plane) = (hs[0], hs[1] * hs[2]);
        let mut value = vec![S::zero(); c * plane];
        {
            let hv = self.value(h);
            let sv = self.value(scale);
            let tv = self.value(shift);
            for ch in 0..c {
                for p in 0..plane {
                    value[ch * plane + p] = sv[ch] * hv[ch * plane + p] + tv[ch];
                }
            }
        }
        let rg =
            self.requires_grad(h) || self.requires_grad(scale) || self.requires_grad(shift);
        Ok(self.push(hs.to_vec(), value, rg, Op::ChannelAffine { h, scale, shift }))
    }

    /// Multiply a tensor by a scalar node (broadcast).
    pub fn scale_by(&mut self, t: NodeId, s: NodeId) -> Result<NodeId> {
        if self.value(s).len() != 1 {
            return Err(Error::Dimension(format!(
                "scale_by: scale must be scalar, got shape {:?}",
                self.shape(s)
            )));
        }
        let sv = self.value(s)[0];
        let value: Vec<S> = self.value(t).iter().map(|x| *x * sv).collect();
        let rg = self.requires_grad(t) || self.requires_grad(s);
        Ok(self.push(self.shape(t).to_vec(), value, rg, Op::ScaleBy { t, s }))
    }

    /// Stack scalar nodes into a 1-D vector.
    pub fn stack_scalars(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Contract("stack_scalars: empty list".into()));
        }
        let mut value = Vec::with_capacity(parts.len());
        let mut rg = false;
        for &p in parts {
            if self.value(p).len() != 1 {
                return Err(Error::Dimension(format!(
                    "stack_scalars: node has shape {:?}, expected scalar",
                    self.shape(p)
                )));
            }
            value.push(self.value(p)[0]);
            rg |= self.requires_grad(p);
        }
        Ok(self.push(vec![parts.len()], value, rg, Op::StackScalars(parts.to_vec())))
    }

    /// Softmax over a 1-D vector, shift-stabilized.
    pub fn softmax_1d(&mut self, x: NodeId) -> Result<NodeId> {
        if self.shape(x).len() != 1 {
            return Err(Error::Dimension(format!(
                "softmax_1d: expected vector, got {:?}",
                self.shape(x)
            )));
        }
        let xv = self.value(x);
        let max = xv.iter().fold(S::neg_infinity(), |a, v| a.max(*v));
        let mut exps: Vec<S> = xv.iter().map(|v| (*v - max).exp()).collect();
        let denom = stable_sum(&mut exps.clone());
        for e in exps.iter_mut() {
            *e = *e / denom;
        }
        let rg = self.requires_grad(x);
        Ok(self.push(self.shape(x).to_vec(), exps, rg, Op::Softmax1d(x)))
    }

    /// Extract one component of a 1-D vector as a scalar node.
    pub fn index(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        if self.shape(x).len() != 1 || index >= self.value(x).len() {
            return Err(Error::Dimension(format!(
                "index {index} out of bounds for shape {:?}",
                self.shape(x)
            )));
        }
        let v = self.value(x)[index];
        let rg = self.requires_grad(x);
        Ok(self.push(vec![1], vec![v], rg, Op::Index { x, index }))
    }

    /// Normalize scalar scores to positive weights summing to 1.
    pub fn softmax_normalize(&mut self, scores: &[NodeId]) -> Result<Vec<NodeId>> {
        if scores.is_empty() {
            return Err(Error::Contract(
                "softmax_normalize: empty score list".into(),
            ));
        }
        let stacked = self.stack_scalars(scores)?;
        let soft = self.softmax_1d(stacked)?;
        (0..scores.len()).map(|i| self.index(soft, i)).collect()
    }

    /// Contiguous slice of the flat buffer reinterpreted as `shape`.
    pub fn slice_flat(&mut self, x: NodeId, start: usize, shape: Vec<usize>) -> Result<NodeId> {
        let len: usize = shape.iter().product();
        if start + len > self.value(x).len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "slice [{start}, {start}+{len}) with shape {shape:?} exceeds source numel {}",
                self.value(x).len()
            )));
        }
        let value = self.value(x)[start..start + len].to_vec();
        let rg = self.requires_grad(x);
        Ok(self.push(shape, value, rg, Op::SliceFlat { x, start }))
    }

    /// Slice channels `[c0, c1)` of a `C×h×w` tensor.
    pub fn slice_channels(&mut self, x: NodeId, c0: usize, c1: usize) -> Result<NodeId> {
        let s = self.shape(x);
        if s.len() != 3 || c1 > s[0] || c0 >= c1 {
            return Err(Error::Dimension(format!(
                "slice_channels [{c0}, {c1}) invalid for shape {s:?}"
            )));
        }
        let plane = s[1] * s[2];
        let shape = vec![c1 - c0, s[1], s[2]];
        self.slice_flat(x, c0 * plane, shape)
    }

    /// Reinterpret the flat data with a new shape of equal element count.
    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "reshape to {shape:?} incompatible with numel {}",
                self.value(x).len()
            )));
        }
        let value = self.value(x).to_vec();
        let rg = self.requires_grad(x);
        Ok(self.push(shape, value, rg, Op::Reshape(x)))
    }

    /// Elementwise mean of same-shaped tensors, order-canonicalized so the
    /// result does not depend on the caller's operand ordering.
    pub fn mean_of(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Contract("mean_of: empty list".into()));
        }
        for &p in &parts[1..] {
            self.same_shape(parts[0], p, "mean_of")?;
        }
        let numel = self.value(parts[0]).len();
        let k = S::of(parts.len() as f64);
        let mut value = vec![S::zero(); numel];
        let mut buf = vec![S::zero(); parts.len()];
        for e in 0..numel {
            for (slot, &p) in buf.iter_mut().zip(parts) {
                *slot = self.value(p)[e];
            }
            value[e] = stable_sum(&mut buf) / k;
        }
        let rg = parts.iter().any(|&p| self.requires_grad(p));
        Ok(self.push(
            self.shape(parts[0]).to_vec(),
            value,
            rg,
            Op::MeanOf(parts.to_vec()),
        ))
    }

    // ── Losses ─────────────────────────────────────────────────────────

    /// Smooth-L1 (Huber) loss against a constant target, averaged over
    /// elements. Quadratic inside `|d| < beta`, linear outside.
    pub fn smooth_l1(&mut self, pred: NodeId, target: &[S], beta: S) -> Result<NodeId> {
        if target.len() != self.value(pred).len() {
            return Err(Error::Dimension(format!(
                "smooth_l1: prediction numel {} vs target {}",
                self.value(pred).len(),
                target.len()
            )));
        }
        if beta <= S::zero() {
            return Err(Error::Contract("smooth_l1: beta must be positive".into()));
        }
        let half = S::of(0.5);
        let n = S::of(target.len() as f64);
        let mut acc = S::zero();
        for (p, t) in self.value(pred).iter().zip(target) {
            let d = *p - *t;
            let a = d.abs();
            acc = acc
                + if a < beta {
                    half * d * d / beta
                } else {
                    a - half * beta
                };
        }
        let rg = self.requires_grad(pred);
        Ok(self.push(
            vec![1],
            vec![acc / n],
            rg,
            Op::SmoothL1 {
                pred,
                target: target.to_vec(),
                beta,
            },
        ))
    }

    /// Edge-aware smoothness: mean over pixels of
    /// `|∂x pred|·e^(−|∂x img|) + |∂y pred|·e^(−|∂y img|)` with forward
    /// differences; image gradients are averaged over channels.
    pub fn edge_aware_smoothness(&mut self, pred: NodeId, image: &[S]) -> Result<NodeId> {
        let s = self.shape(pred);
        let (h, w) = match s.len() {
            2 => (s[0], s[1]),
            3 if s[0] == 1 => (s[1], s[2]),
            _ => {
                return Err(Error::Dimension(format!(
                    "edge_aware_smoothness: prediction must be H×W, got {s:?}"
                )))
            }
        };
        if image.len() != 3 * h * w {
            return Err(Error::Dimension(format!(
                "edge_aware_smoothness: image numel {} != 3*{h}*{w}",
                image.len()
            )));
        }
        let third = S::of(1.0 / 3.0);
        let plane = h * w;
        // Channel-averaged image gradient attenuation weights.
        let mut wx = vec![S::zero(); h * (w - 1).max(0)];
        let mut wy = vec![S::zero(); (h - 1).max(0) * w];
        for y in 0..h {
            for x in 0..w.saturating_sub(1) {
                let mut g = S::zero();
                for c in 0..3 {
                    let base = c * plane + y * w + x;
                    g = g + (image[base + 1] - image[base]).abs();
                }
                wx[y * (w - 1) + x] = (-(g * third)).exp();
            }
        }
        for y in 0..h.saturating_sub(1) {
            for x in 0..w {
                let mut g = S::zero();
                for c in 0..3 {
                    let base = c * plane + y * w + x;
                    g = g + (image[base + w] - image[base]).abs();
                }
                wy[y * w + x] = (-(g * third)).exp();
            }
        }
        let pv = self.value(pred);
        let mut acc = S::zero();
        for y in 0..h {
            for x in 0..w.saturating_sub(1) {
                acc = acc + (pv[y * w + x + 1] - pv[y * w + x]).abs() * wx[y * (w - 1) + x];
            }
        }
        for y in 0..h.saturating_sub(1) {
            for x in 0..w {
                acc = acc + (pv[(y + 1) * w + x] - pv[y * w + x]).abs() * wy[y * w + x];
            }
        }
        let value = acc / S::of((h * w) as f64);
        let rg = self.requires_grad(pred);
        Ok(self.push(vec![1], vec![value], rg, Op::EdgeAware { pred, wx, wy, h, w }))
    }

    /// Pixelwise cross entropy of `K×H×W` logits against an `H×W` class map,
    /// averaged over pixels.
    pub fn cross_entropy_seg(&mut self, logits: NodeId, target: &[usize]) -> Result<NodeId> {
        let s = self.shape(logits);
        if s.len() != 3 {
            return Err(Error::Dimension(format!(
                "cross_entropy_seg: logits must be K×H×W, got {s:?}"
            )));
        }
        let (kc, plane) = (s[0], s[1] * s[2]);
        if target.len() != plane {
            return Err(Error::Dimension(format!(
                "cross_entropy_seg: target numel {} != {}x{}",
                target.len(),
                s[1],
                s[2]
            )));
        }
        if let Some(bad) = target.iter().find(|&&t| t >= kc) {
            return Err(Error::Input(format!(
                "cross_entropy_seg: class {bad} out of range [0, {kc})"
            )));
        }
        let lv = self.value(logits);
        let mut probs = vec![S::zero(); kc * plane];
        let mut acc = S::zero();
        for p in 0..plane {
            let mut max = S::neg_infinity();
            for k in 0..kc {
                max = max.max(lv[k * plane + p]);
            }
            let mut denom = S::zero();
            for k in 0..kc {
                let e = (lv[k * plane + p] - max).exp();
                probs[k * plane + p] = e;
                denom = denom + e;
            }
            for k in 0..kc {
                probs[k * plane + p] = probs[k * plane + p] / denom;
            }
            let lse = max + denom.ln();
            acc = acc + (lse - lv[target[p] * plane + p]);
        }
        let value = acc / S::of(plane as f64);
        let rg = self.requires_grad(logits);
        Ok(self.push(
            vec![1],
            vec![value],
            rg,
            Op::CrossEntropySeg {
                logits,
                target: target.to_vec(),
                probs,
            },
        ))
    }

    // ── Backward ───────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss; populates gradients on every
    /// node that requires them.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Contract("backward: loss not on this tape".into()));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        self.nodes[loss.0].grad = Some(vec![S::one()]);
        for idx in (0..=loss.0).rev() {
            let (lo, hi) = self.nodes.split_at_mut(idx);
            let node = &hi[0];
            if node.grad.is_none() || !node.requires_grad {
                continue;
            }
            let g = node.grad.as_deref().unwrap();
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(lo, *a, g);
                    accumulate(lo, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(lo, *a, g);
                    let neg: Vec<S> = g.iter().map(|v| -*v).collect();
                    accumulate(lo, *b, &neg);
                }
                Op::Mul(a, b) => {
                    if lo[a.0].requires_grad {
                        let da: Vec<S> =
                            g.iter().zip(&lo[b.0].value).map(|(gv, bv)| *gv * *bv).collect();
                        accumulate(lo, *a, &da);
                    }
                    if lo[b.0].requires_grad {
                        let db: Vec<S> =
                            g.iter().zip(&lo[a.0].value).map(|(gv, av)| *gv * *av).collect();
                        accumulate(lo, *b, &db);
                    }
                }
                Op::Scale(a, c) => {
                    let da: Vec<S> = g.iter().map(|v| *v * *c).collect();
                    accumulate(lo, *a, &da);
                }
                Op::Relu(a) => {
                    let da: Vec<S> = g
                        .iter()
                        .zip(&lo[a.0].value)
                        .map(|(gv, xv)| if *xv > S::zero() { *gv } else { S::zero() })
                        .collect();
                    accumulate(lo, *a, &da);
                }
                Op::LeakyRelu(a, slope) => {
                    let da: Vec<S> = g
                        .iter()
                        .zip(&lo[a.0].value)
                        .map(|(gv, xv)| if *xv >= S::zero() { *gv } else { *slope * *gv })
                        .collect();
                    accumulate(lo, *a, &da);
                }
                Op::Exp(a) => {
                    let da: Vec<S> = g.iter().zip(&node.value).map(|(gv, ov)| *gv * *ov).collect();
                    accumulate(lo, *a, &da);
                }
                Op::Abs(a) => {
                    let da: Vec<S> = g
                        .iter()
                        .zip(&lo[a.0].value)
                        .map(|(gv, xv)| {
                            if *xv > S::zero() {
                                *gv
                            } else if *xv < S::zero() {
                                -*gv
                            } else {
                                S::zero()
                            }
                        })
                        .collect();
                    accumulate(lo, *a, &da);
                }
                Op::Softplus(a) => {
                    let da: Vec<S> = g
                        .iter()
                        .zip(&lo[a.0].value)
                        .map(|(gv, xv)| *gv * sigmoid(*xv))
                        .collect();
                    accumulate(lo, *a, &da);
                }
                Op::Sum(a) => {
                    let da = vec![g[0]; lo[a.0].value.len()];
                    accumulate(lo, *a, &da);
                }
                Op::Mean(a) => {
                    let n = S::of(lo[a.0].value.len() as f64);
                    let da = vec![g[0] / n; lo[a.0].value.len()];
                    accumulate(lo, *a, &da);
                }
                Op::Linear { x, w, b } => {
                    let (m, n) = (lo[w.0].shape[0], lo[w.0].shape[1]);
                    if lo[x.0].requires_grad {
                        let wv = &lo[w.0].value;
                        let mut dx = vec![S::zero(); n];
                        for i in 0..m {
                            for j in 0..n {
                                dx[j] += g[i] * wv[i * n + j];
                            }
                        }
                        accumulate(lo, *x, &dx);
                    }
                    if lo[w.0].requires_grad {
                        let xv = &lo[x.0].value;
                        let mut dw = vec![S::zero(); m * n];
                        for i in 0..m {
                            for j in 0..n {
                                dw[i * n + j] = g[i] * xv[j];
                            }
                        }
                        accumulate(lo, *w, &dw);
                    }
                    if lo[b.0].requires_grad {
                        accumulate(lo, *b, g);
                    }
                }
                Op::Conv2d { x, k, b, stride, padding } => {
                    let xs = &lo[x.0].shape;
                    let ks = &lo[k.0].shape;
                    let (cin, h, w) = (xs[0], xs[1], xs[2]);
                    let os = &node.shape;
                    let mut dx = if lo[x.0].requires_grad {
                        vec![S::zero(); lo[x.0].value.len()]
                    } else {
                        Vec::new()
                    };
                    let mut dk = if lo[k.0].requires_grad {
                        vec![S::zero(); lo[k.0].value.len()]
                    } else {
                        Vec::new()
                    };
                    let mut db = if lo[b.0].requires_grad {
                        vec![S::zero(); lo[b.0].value.len()]
                    } else {
                        Vec::new()
                    };
                    kernels::conv2d_backward(
                        &lo[x.0].value,
                        (cin, h, w),
                        &lo[k.0].value,
                        ks[2],
                        *stride,
                        *padding,
                        g,
                        (os[0], os[1], os[2]),
                        &mut dx,
                        &mut dk,
                        &mut db,
                    );
                    if !dx.is_empty() {
                        accumulate(lo, *x, &dx);
                    }
                    if !dk.is_empty() {
                        accumulate(lo, *k, &dk);
                    }
                    if !db.is_empty() {
                        accumulate(lo, *b, &db);
                    }
                }
                Op::ConvTranspose2d { x, k, b, stride, padding } => {
                    let xs = &lo[x.0].shape;
                    let ks = &lo[k.0].shape;
                    let (cin, h, w) = (xs[0], xs[1], xs[2]);
                    let os = &node.shape;
                    let mut dx = if lo[x.0].requires_grad {
                        vec![S::zero(); lo[x.0].value.len()]
                    } else {
                        Vec::new()
                    };
                    let mut dk = if lo[k.0].requires_grad {
                        vec![S::zero(); lo[k.0].value.len()]
                    } else {
                        Vec::new()
                    };
                    let mut db = if lo[b.0].requires_grad {
                        vec![S::zero(); lo[b.0].value.len()]
                    } else {
                        Vec::new()
                    };
                    kernels::conv_transpose2d_backward(
                        &lo[x.0].value,
                        (cin, h, w),
                        &lo[k.0].value,
                        ks[2],
                        *stride,
                        *padding,
                        g,
                        (os[0], os[1], os[2]),
                        &mut dx,
                        &mut dk,
                        &mut db,
                    );
                    if !dx.is_empty() {
                        accumulate(lo, *x, &dx);
                    }
                    if !dk.is_empty() {
                        accumulate(lo, *k, &dk);
                    }
                    if !db.is_empty() {
                        accumulate(lo, *b, &db);
                    }
                }
                Op::ConcatChannels { a, b, split } => {
                    accumulate(lo, *a, &g[..*split]);
                    accumulate(lo, *b, &g[*split..]);
                }
                Op::ChannelAffine { h, scale, shift } => {
                    let c = lo[scale.0].value.len();
                    let plane = lo[h.0].value.len() / c;
                    if lo[h.0].requires_grad {
                        let sv = &lo[scale.0].value;
                        let dh: Vec<S> = g
                            .iter()
                            .enumerate()
                            .map(|(i, gv)| *gv * sv[i / plane])
                            .collect();
                        accumulate(lo, *h, &dh);
                    }
                    if lo[scale.0].requires_grad {
                        let hv = &lo[h.0].value;
                        let mut ds = vec![S::zero(); c];
                        for ch in 0..c {
                            for p in 0..plane {
                                ds[ch] += g[ch * plane + p] * hv[ch * plane + p];
                            }
                        }
                        accumulate(lo, *scale, &ds);
                    }
                    if lo[shift.0].requires_grad {
                        let mut dt = vec![S::zero(); c];
                        for ch in 0..c {
                            for p in 0..plane {
                                dt[ch] += g[ch * plane + p];
                            }
                        }
                        accumulate(lo, *shift, &dt);
                    }
                }
                Op::ScaleBy { t, s } => {
                    if lo[t.0].requires_grad {
                        let sv = lo[s.0].value[0];
                        let dt: Vec<S> = g.iter().map(|gv| *gv * sv).collect();
                        accumulate(lo, *t, &dt);
                    }
                    if lo[s.0].requires_grad {
                        let mut acc = S::zero();
                        for (gv, tv) in g.iter().zip(&lo[t.0].value) {
                            acc += *gv * *tv;
                        }
                        accumulate(lo, *s, &[acc]);
                    }
                }
                Op::StackScalars(parts) => {
                    for (i, p) in parts.clone().iter().enumerate() {
                        accumulate(lo, *p, &g[i..i + 1]);
                    }
                }
                Op::Softmax1d(x) => {
                    let out = &node.value;
                    let mut prods: Vec<S> =
                        g.iter().zip(out).map(|(gv, ov)| *gv * *ov).collect();
                    let dot = stable_sum(&mut prods);
                    let dx: Vec<S> = g
                        .iter()
                        .zip(out)
                        .map(|(gv, ov)| *ov * (*gv - dot))
                        .collect();
                    accumulate(lo, *x, &dx);
                }
                Op::Index { x, index } => {
                    let mut dx = vec![S::zero(); lo[x.0].value.len()];
                    dx[*index] = g[0];
                    accumulate(lo, *x, &dx);
                }
                Op::SliceFlat { x, start } => {
                    let mut dx = vec![S::zero(); lo[x.0].value.len()];
                    dx[*start..*start + g.len()].copy_from_slice(g);
                    accumulate(lo, *x, &dx);
                }
                Op::Reshape(x) => {
                    accumulate(lo, *x, g);
                }
                Op::MeanOf(parts) => {
                    let k = S::of(parts.len() as f64);
                    let dp: Vec<S> = g.iter().map(|gv| *gv / k).collect();
                    for p in parts.clone() {
                        accumulate(lo, p, &dp);
                    }
                }
                Op::SmoothL1 { pred, target, beta } => {
                    let n = S::of(target.len() as f64);
                    let gv = g[0];
                    let dp: Vec<S> = lo[pred.0]
                        .value
                        .iter()
                        .zip(target)
                        .map(|(p, t)| {
                            let d = *p - *t;
                            let local = if d.abs() < *beta {
                                d / *beta
                            } else if d > S::zero() {
                                S::one()
                            } else {
                                -S::one()
                            };
                            gv * local / n
                        })
                        .collect();
                    accumulate(lo, *pred, &dp);
                }
                Op::EdgeAware { pred, wx, wy, h, w } => {
                    let (h, w) = (*h, *w);
                    let scale = g[0] / S::of((h * w) as f64);
                    let pv = &lo[pred.0].value;
                    let mut dp = vec![S::zero(); pv.len()];
                    for y in 0..h {
                        for x in 0..w.saturating_sub(1) {
                            let d = pv[y * w + x + 1] - pv[y * w + x];
                            let s = sign(d) * wx[y * (w - 1) + x] * scale;
                            dp[y * w + x + 1] += s;
                            dp[y * w + x] -= s;
                        }
                    }
                    for y in 0..h.saturating_sub(1) {
                        for x in 0..w {
                            let d = pv[(y + 1) * w + x] - pv[y * w + x];
                            let s = sign(d) * wy[y * w + x] * scale;
                            dp[(y + 1) * w + x] += s;
                            dp[y * w + x] -= s;
                        }
                    }
                    accumulate(lo, *pred, &dp);
                }
                Op::CrossEntropySeg { logits, target, probs } => {
                    let kc = lo[logits.0].shape[0];
                    let plane = target.len();
                    let scale = g[0] / S::of(plane as f64);
                    let mut dl = vec![S::zero(); kc * plane];
                    for p in 0..plane {
                        for k in 0..kc {
                            let onehot = if target[p] == k { S::one() } else { S::zero() };
                            dl[k * plane + p] = (probs[k * plane + p] - onehot) * scale;
                        }
                    }
                    accumulate(lo, *logits, &dl);
                }
            }
        }
        Ok(())
    }
}

/// Accumulate `delta` into the grad buffer of `id` if it participates in
/// differentiation.
fn accumulate<S: Scalar>(nodes: &mut [Node<S>], id: NodeId, delta: &[S]) {
    let node = &mut nodes[id.0];
    if !node.requires_grad {
        return;
    }
    let grad = node.grad.get_or_insert_with(|| vec![S::zero(); node.value.len()]);
    debug_assert_eq!(grad.len(), delta.len());
    for (g, d) in grad.iter_mut().zip(delta) {
        *g += *d;
    }
}

fn sign<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        S::one()
    } else if x < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}

fn softplus<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape<f64>, shape: Vec<usize>, data: Vec<f64>) -> NodeId {
        tape.leaf(shape, data, true).unwrap()
    }

    #[test]
    fn conv2d_hand_case() {
        let mut t = Tape::new();
        let x = leaf(&mut t, vec![1, 3, 3], (1..=9).map(f64::from).collect());
        let k = leaf(&mut t, vec![1, 1, 2, 2], vec![1.0; 4]);
        let b = leaf(&mut t, vec![1], vec![0.0]);
        let y = t.conv2d(x, k, b, 1, 0).unwrap();
        assert_eq!(t.shape(y), &[1, 2, 2]);
        assert_eq!(t.value(y), &[12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn conv2d_identity_kernel() {
        let mut t = Tape::new();
        let x = leaf(&mut t, vec![1, 2, 3], vec![0.5, -1.0, 2.0, 3.0, 4.0, -0.25]);
        let k = leaf(&mut t, vec![1, 1, 1, 1], vec![1.0]);
        let b = leaf(&mut t, vec![1], vec![0.0]);
        let y = t.conv2d(x, k, b, 1, 0).unwrap();
        assert_eq!(t.value(y), t.value(x));
    }

    #[test]
    fn conv2d_constant_field() {
        let c = 1.75;
        let mut t = Tape::new();
        let x = leaf(&mut t, vec![1, 5, 5], vec![c; 25]);
        let k = leaf(&mut t, vec![1, 1, 3, 3], vec![1.0; 9]);
        let b = leaf(&mut t, vec![1], vec![0.0]);
        let y = t.conv2d(x, k, b, 1, 0).unwrap();
        for v in t.value(y) {
            assert!((v - 9.0 * c).abs() < 1e-12);
        }
    }

    #[test]
    fn conv2d_channel_mismatch_names_shapes() {
        let mut t = Tape::new();
        let x = leaf(&mut t, vec![2, 3, 3], vec![0.0; 18]);
        let k = leaf(&mut t, vec![1, 3, 2, 2], vec![0.0; 12]);
        let b = leaf(&mut t, vec![1], vec![0.0]);
        let err = t.conv2d(x, k, b, 1, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3, 3]") && msg.contains("[1, 3, 2, 2]"), "{msg}");
    }

    #[test]
    fn conv_transpose_broadcasts_single_pixel() {
        let mut t = Tape::new();
        let v = -2.5;
        let x = leaf(&mut t, vec![1, 1, 1], vec![v]);
        let k = leaf(&mut t, vec![1, 1, 2, 2], vec![1.0; 4]);
        let b = leaf(&mut t, vec![1], vec![0.0]);
        let y = t.conv_transpose2d(x, k, b, 1, 0).unwrap();
        assert_eq!(t.shape(y), &[1, 2, 2]);
        for o in t.value(y) {
            assert_eq!(*o, v);
        }
    }

    #[test]
    fn conv_transpose_stride2_disjoint_blocks() {
        let mut t = Tape::new();
        let x = leaf(&mut t, vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let k = leaf(&mut t, vec![1, 1, 2, 2], vec![1.0, 1.0, 1.0, 1.0]);
        let b = leaf(&mut t, vec![1], vec![0.0]);
        let y = t.conv_transpose2d(x, k, b, 2, 0).unwrap();
        assert_eq!(t.shape(y), &[1, 4, 4]);
        let v = t.value(y);
        let expect = [
            1.0, 1.0, 2.0, 2.0, //
            1.0, 1.0, 2.0, 2.0, //
            3.0, 3.0, 4.0, 4.0, //
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(v, expect);
    }

    #[test]
    fn linear_identity_and_hand_case() {
        let mut t = Tape::new();
        let x = leaf(&mut t, vec![2], vec![1.0, 2.0]);
        let w_id = leaf(&mut t, vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let b0 = leaf(&mut t, vec![2], vec![0.0, 0.0]);
        let y = t.linear(x, w_id, b0, ).unwrap();
        assert_eq!(t.value(y), &[1.0, 2.0]);

        let w = leaf(&mut t, vec![2, 2], vec![1.0, 1.0, 1.0, -1.0]);
        let b = leaf(&mut t, vec![2], vec![0.0, 10.0]);
        let y = t.linear(x, w, b).unwrap();
        assert_eq!(t.value(y), &[3.0, 9.0]);
    }

    #[test]
    fn activations_hand_values() {
        let mut t = Tape::new();
        let x = leaf(&mut t, vec![3], vec![-1.0, 0.0, 2.0]);
        let r = t.relu(x);
        assert_eq!(t.value(r), &[0.0, 0.0, 2.0]);

        let x2 = leaf(&mut t, vec![2], vec![-1.0, 2.0]);
        let l = t.leaky_relu(x2, 0.2);
        assert_eq!(t.value(l), &[-0.2, 2.0]);
    }

    #[test]
    fn softmax_normalize_symmetry_and_direct_value() {
        for c in [-3.0, 0.0, 17.5] {
            let mut t = Tape::new();
            let a = leaf(&mut t, vec![1], vec![c]);
            let b = leaf(&mut t, vec![1], vec![c]);
            let out = t.softmax_normalize(&[a, b]).unwrap();
            assert!((t.value(out[0])[0] - 0.5).abs() < 1e-15);
            assert!((t.value(out[1])[0] - 0.5).abs() < 1e-15);
        }

        let mut t = Tape::new();
        let single = leaf(&mut t, vec![1], vec![123.0]);
        let out = t.softmax_normalize(&[single]).unwrap();
        assert_eq!(t.value(out[0]), &[1.0]);

        let mut t = Tape::new();
        let a = leaf(&mut t, vec![1], vec![3.0]);
        let b = leaf(&mut t, vec![1], vec![5.0]);
        let out = t.softmax_normalize(&[a, b]).unwrap();
        assert!((t.value(out[0])[0] - 0.11920).abs() < 1e-5);
        assert!((t.value(out[1])[0] - 0.88080).abs() < 1e-5);

        let err = t.softmax_normalize(&[]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut t = Tape::new();
        let x = leaf(&mut t, vec![4], vec![1.0, -2.0, 3.0, 0.5]);
        let s = t.sum(x);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[1.0; 4]);
    }

    #[test]
    fn backward_quadratic_gives_two_x() {
        let mut t = Tape::new();
        let data = vec![1.0, -2.0, 3.0, 0.5];
        let x = leaf(&mut t, vec![4], data.clone());
        let sq = t.mul(x, x).unwrap();
        let s = t.sum(sq);
        t.backward(s).unwrap();
        let g = t.grad(x).unwrap();
        for (gi, xi) in g.iter().zip(&data) {
            assert!((gi - 2.0 * xi).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut t = Tape::new();
        let x = leaf(&mut t, vec![3], vec![1.0, 2.0, 3.0]);
        let err = t.backward(x).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn smooth_l1_hand_values() {
        // Uniform difference d = 2, beta = 1 -> |d| - 0.5*beta = 1.5.
        let mut t = Tape::new();
        let p = leaf(&mut t, vec![2, 2], vec![3.0; 4]);
        let l = t.smooth_l1(p, &[1.0; 4], 1.0).unwrap();
        assert!((t.value(l)[0] - 1.5).abs() < 1e-15);

        // Uniform d = 0.5, beta = 1 -> 0.5*0.25 = 0.125.
        let mut t = Tape::new();
        let p = leaf(&mut t, vec![4], vec![0.5; 4]);
        let l = t.smooth_l1(p, &[0.0; 4], 1.0).unwrap();
        assert!((t.value(l)[0] - 0.125).abs() < 1e-15);

        // Exact match -> 0.
        let mut t = Tape::new();
        let p = leaf(&mut t, vec![4], vec![0.7; 4]);
        let l = t.smooth_l1(p, &[0.7; 4], 1.0).unwrap();
        assert_eq!(t.value(l)[0], 0.0);
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_k() {
        for k in [2usize, 3, 7] {
            let mut t = Tape::new();
            let logits = leaf(&mut t, vec![k, 2, 2], vec![0.3; k * 4]);
            let target = vec![0usize, 1 % k, (k - 1) % k, 0];
            let l = t.cross_entropy_seg(logits, &target).unwrap();
            assert!((t.value(l)[0] - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_rejects_bad_class() {
        let mut t = Tape::new();
        let logits = leaf(&mut t, vec![2, 1, 1], vec![0.0, 0.0]);
        let err = t.cross_entropy_seg(logits, &[2]).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn mean_of_is_order_independent_bitwise() {
        let vals = [
            vec![0.1, 0.7, -0.3],
            vec![1.0 / 3.0, 2.0 / 7.0, 0.9],
            vec![-0.25, 0.55, 1.3],
        ];
        let mut t = Tape::new();
        let ids: Vec<NodeId> = vals
            .iter()
            .map(|v| t.leaf(vec![3], v.clone(), false).unwrap())
            .collect();
        let fwd = t.mean_of(&ids).unwrap();
        let rev = t.mean_of(&[ids[2], ids[0], ids[1]]).unwrap();
        assert_eq!(t.value(fwd), t.value(rev));
    }

    #[test]
    fn concat_and_slice_roundtrip() {
        let mut t = Tape::new();
        let a = leaf(&mut t, vec![2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = leaf(&mut t, vec![1, 1, 2], vec![5.0, 6.0]);
        let c = t.concat_channels(a, b).unwrap();
        assert_eq!(t.shape(c), &[3, 1, 2]);
        let back = t.slice_channels(c, 0, 2).unwrap();
        assert_eq!(t.value(back), t.value(a));
        let tail = t.slice_channels(c, 2, 3).unwrap();
        assert_eq!(t.value(tail), t.value(b));
    }

    #[test]
    fn edge_aware_constant_pred_is_zero() {
        let mut t = Tape::new();
        let p = leaf(&mut t, vec![4, 4], vec![2.5; 16]);
        let img: Vec<f64> = (0..48).map(|i| (i as f64) * 0.01).collect();
        let l = t.edge_aware_smoothness(p, &img).unwrap();
        assert_eq!(t.value(l)[0], 0.0);
    }

    #[test]
    fn edge_aware_ramp_on_constant_image() {
        let (h, w) = (3usize, 4usize);
        let mut t = Tape::new();
        let ramp: Vec<f64> = (0..h * w).map(|i| (i % w) as f64).collect();
        let p = leaf(&mut t, vec![h, w], ramp);
        let img = vec![0.6; 3 * h * w];
        let l = t.edge_aware_smoothness(p, &img).unwrap();
        // h*(w-1) unit contributions averaged over h*w pixels.
        let expect = (h * (w - 1)) as f64 / (h * w) as f64;
        assert!((t.value(l)[0] - expect).abs() < 1e-14);
    }
}
