//! The perception network: per-node CNN encoder, L rounds of message
//! passing with a configurable message encoding, average aggregation, and a
//! skip-concat decoder. Includes the single-robot baseline and the
//! stacked-input multi-robot baseline.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{relative_pose, CommGraph, RobotPose};
use crate::message::{
    attention_messages, encode_continuous_pose, film_generate, film_message,
    AttentionHeadParams, SpatialEncoderParams, LEAKY_SLOPE,
};
use crate::optim::ParamStore;
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::{NodeId, Tape, Tensor};

/// Method variants compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Single-robot encoder/decoder, no graph.
    Baseline,
    /// All images stacked on channels into one network with per-robot heads.
    BaselineMp,
    /// Message passing with plain messages (previous-level node features).
    Mp,
    /// Message passing with pose-conditioned affine (FiLM) messages.
    MpPose,
    /// Message passing with cross-attention weighted messages.
    MpAtt,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::BaselineMp,
        Variant::Mp,
        Variant::MpPose,
        Variant::MpAtt,
    ];

    pub fn uses_graph(&self) -> bool {
        matches!(self, Variant::Mp | Variant::MpPose | Variant::MpAtt)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Baseline => "baseline",
            Variant::BaselineMp => "baseline-mp",
            Variant::Mp => "mp",
            Variant::MpPose => "mp-pose",
            Variant::MpAtt => "mp-att",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "baseline-mp" => Ok(Variant::BaselineMp),
            "mp" => Ok(Variant::Mp),
            "mp-pose" => Ok(Variant::MpPose),
            "mp-att" => Ok(Variant::MpAtt),
            other => Err(Error::Config(format!(
                "unknown variant {other}; expected baseline, baseline-mp, mp, mp-pose or mp-att"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Depth,
    Segmentation,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Depth => "depth",
            TaskKind::Segmentation => "segmentation",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(TaskKind::Depth),
            "segmentation" | "seg" => Ok(TaskKind::Segmentation),
            other => Err(Error::Config(format!(
                "unknown task {other}; expected depth or segmentation"
            ))),
        }
    }
}

/// Network and problem dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Message-passing levels L; the graph depth is kept at 1 or 2.
    pub levels: usize,
    /// Node feature channels C.
    pub channels: usize,
    /// Attention heads D.
    pub heads: usize,
    pub height: usize,
    pub width: usize,
    pub class_count: usize,
    pub task: TaskKind,
    /// Robot count; fixed at construction only for `baseline-mp`.
    pub agents: usize,
    /// Share message-network weights across levels when L = 2.
    pub share_level_params: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Mp,
            levels: 1,
            channels: 32,
            heads: 4,
            height: 64,
            width: 64,
            class_count: 4,
            task: TaskKind::Depth,
            agents: 5,
            share_level_params: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.levels == 1 || self.levels == 2) {
            return Err(Error::Config(format!(
                "levels must be 1 or 2, got {}",
                self.levels
            )));
        }
        if self.heads == 0 {
            return Err(Error::Config("heads must be >= 1".into()));
        }
        if self.channels < 2 || self.channels % 2 != 0 {
            return Err(Error::Config(format!(
                "channels must be even and >= 2, got {}",
                self.channels
            )));
        }
        if self.height % 8 != 0 || self.width % 8 != 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Config(format!(
                "image dims must be positive multiples of 8, got {}x{}",
                self.height, self.width
            )));
        }
        if self.task == TaskKind::Segmentation && self.class_count < 2 {
            return Err(Error::Config("segmentation needs >= 2 classes".into()));
        }
        if self.agents == 0 {
            return Err(Error::Config("agents must be >= 1".into()));
        }
        Ok(())
    }

    /// Node-feature spatial dims (encoder stride product is 8).
    pub fn feature_dims(&self) -> (usize, usize) {
        (self.height / 8, self.width / 8)
    }

    /// Channels of the decoder's final layer before any per-robot split.
    fn head_channels(&self) -> usize {
        let per_node = match self.task {
            TaskKind::Depth => 1,
            TaskKind::Segmentation => self.class_count,
        };
        if self.variant == Variant::BaselineMp {
            per_node * self.agents
        } else {
            per_node
        }
    }

    fn encoder_input_channels(&self) -> usize {
        if self.variant == Variant::BaselineMp {
            3 * self.agents
        } else {
            3
        }
    }

    /// Message-network parameter prefix for a level, honoring weight
    /// sharing across levels.
    fn level_prefix(&self, base: &str, level: usize) -> String {
        if self.share_level_params || self.levels == 1 {
            base.to_string()
        } else {
            format!("{base}.l{level}")
        }
    }
}

/// Width of the spatial-encoder hidden layer (9 → hidden → 2C).
const FILM_HIDDEN: usize = 64;

/// The perception network with its parameters.
#[derive(Debug, Clone)]
pub struct PerceptionModel<S: Scalar> {
    cfg: ModelConfig,
    params: ParamStore<S>,
}

impl<S: Scalar> PerceptionModel<S> {
    /// Initialize parameters uniformly in ±sqrt(1/fan_in) from the seed.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let mut rng = RngState::new(seed);
        for (name, shape, fan_in) in parameter_plan(&cfg) {
            params.insert_uniform(&name, shape, fan_in, &mut rng)?;
        }
        Ok(PerceptionModel { cfg, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    /// Full forward pass: encode every observation, run L message-passing
    /// rounds per the variant, decode every node with its (h⁰, hᴸ) skip
    /// pair. Returns one output node per robot.
    pub fn forward(
        &mut self,
        tape: &mut Tape<S>,
        graph: &CommGraph,
        images: &[Tensor<S>],
        poses: Option<&[RobotPose<S>]>,
    ) -> Result<Vec<NodeId>> {
        let n = graph.n_nodes();
        if images.len() != n {
            return Err(Error::Dimension(format!(
                "forward: {} images for {} graph nodes",
                images.len(),
                n
            )));
        }
        for img in images {
            if img.shape() != [3, self.cfg.height, self.cfg.width] {
                return Err(Error::Dimension(format!(
                    "forward: image shape {:?}, expected [3, {}, {}]",
                    img.shape(),
                    self.cfg.height,
                    self.cfg.width
                )));
            }
        }
        if self.cfg.variant == Variant::MpPose {
            let poses = poses.ok_or_else(|| {
                Error::Config("variant mp-pose requires robot poses".into())
            })?;
            if poses.len() != n {
                return Err(Error::Dimension(format!(
                    "forward: {} poses for {} nodes",
                    poses.len(),
                    n
                )));
            }
        }
        self.params.begin_pass();

        match self.cfg.variant {
            Variant::Baseline => {
                let mut outputs = Vec::with_capacity(n);
                for img in images {
                    let x = tape.constant(img.shape().to_vec(), img.data().to_vec())?;
                    let h0 = self.encode(tape, x)?;
                    outputs.push(self.decode(tape, h0, h0)?);
                }
                Ok(outputs)
            }
            Variant::BaselineMp => {
                if n != self.cfg.agents {
                    return Err(Error::Config(format!(
                        "baseline-mp was built for {} robots, got {n}",
                        self.cfg.agents
                    )));
                }
                let mut stacked = tape.constant(images[0].shape().to_vec(), images[0].data().to_vec())?;
                for img in &images[1..] {
                    let x = tape.constant(img.shape().to_vec(), img.data().to_vec())?;
                    stacked = tape.concat_channels(stacked, x)?;
                }
                let h0 = self.encode(tape, stacked)?;
                let pre = self.decode_pre_head(tape, h0, h0)?;
                let per_node = self.cfg.head_channels() / n;
                let mut outputs = Vec::with_capacity(n);
                for i in 0..n {
                    let slice = tape.slice_channels(pre, i * per_node, (i + 1) * per_node)?;
                    outputs.push(self.apply_head(tape, slice)?);
                }
                Ok(outputs)
            }
            Variant::Mp | Variant::MpPose | Variant::MpAtt => {
                let mut initial = Vec::with_capacity(n);
                for img in images {
                    let x = tape.constant(img.shape().to_vec(), img.data().to_vec())?;
                    initial.push(self.encode(tape, x)?);
                }
                let mut features = initial.clone();
                for level in 0..self.cfg.levels {
                    features = self.message_round(tape, graph, &features, poses, level)?;
                }
                let mut outputs = Vec::with_capacity(n);
                for (h0, hl) in initial.iter().zip(&features) {
                    outputs.push(self.decode(tape, *h0, *hl)?);
                }
                Ok(outputs)
            }
        }
    }

    /// Single-robot forward: encode, then decode with the (h⁰, h⁰) skip
    /// pair. Identical to `forward` on a one-node graph.
    pub fn baseline_forward(&mut self, tape: &mut Tape<S>, image: &Tensor<S>) -> Result<NodeId> {
        if image.shape() != [3, self.cfg.height, self.cfg.width] {
            return Err(Error::Dimension(format!(
                "baseline_forward: image shape {:?}, expected [3, {}, {}]",
                image.shape(),
                self.cfg.height,
                self.cfg.width
            )));
        }
        self.params.begin_pass();
        let x = tape.constant(image.shape().to_vec(), image.data().to_vec())?;
        let h0 = self.encode(tape, x)?;
        self.decode(tape, h0, h0)
    }

    /// One synchronous message-passing round:
    /// `h_i^{l+1} = mean over j in N(i) of m_{j→i}`, isolated nodes keep
    /// their feature.
    fn message_round(
        &mut self,
        tape: &mut Tape<S>,
        graph: &CommGraph,
        features: &[NodeId],
        poses: Option<&[RobotPose<S>]>,
        level: usize,
    ) -> Result<Vec<NodeId>> {
        for pair in features.windows(2) {
            if tape.shape(pair[0]) != tape.shape(pair[1]) {
                return Err(Error::Dimension(format!(
                    "message_round: node feature shapes {:?} and {:?} disagree",
                    tape.shape(pair[0]),
                    tape.shape(pair[1])
                )));
            }
        }
        let mut next = Vec::with_capacity(features.len());
        for dest in 0..graph.n_nodes() {
            let neighbors = graph.neighbors(dest);
            if neighbors.is_empty() {
                next.push(features[dest]);
                continue;
            }
            let incoming: Vec<NodeId> = match self.cfg.variant {
                Variant::Mp => neighbors
                    .iter()
                    .map(|&j| crate::message::plain_message(features[j]))
                    .collect(),
                Variant::MpPose => {
                    let poses = poses.expect("validated in forward");
                    let spatial = self.spatial_encoder_params(tape, level)?;
                    let mut msgs = Vec::with_capacity(neighbors.len());
                    for &j in neighbors {
                        let (r, t) = relative_pose(&poses[j], &poses[dest]);
                        let p_ji = encode_continuous_pose(&r, &t)?;
                        let film = film_generate(tape, &p_ji, &spatial)?;
                        msgs.push(film_message(tape, features[j], &film)?);
                    }
                    msgs
                }
                Variant::MpAtt => {
                    let heads = self.attention_heads(tape, level)?;
                    let neighbor_features: Vec<(usize, NodeId)> =
                        neighbors.iter().map(|&j| (j, features[j])).collect();
                    attention_messages(tape, dest, features[dest], &neighbor_features, &heads, level)?
                        .into_iter()
                        .map(|m| m.node)
                        .collect()
                }
                Variant::Baseline | Variant::BaselineMp => {
                    return Err(Error::Contract(
                        "message_round: baseline variants do not exchange messages".into(),
                    ))
                }
            };
            next.push(tape.mean_of(&incoming)?);
        }
        Ok(next)
    }

    fn encode(&mut self, tape: &mut Tape<S>, image: NodeId) -> Result<NodeId> {
        let mut x = image;
        for (layer, stride) in [(1usize, 2usize), (2, 2), (3, 2), (4, 1)] {
            let w = self.params.stage(tape, &format!("encoder.conv{layer}.weight"))?;
            let b = self.params.stage(tape, &format!("encoder.conv{layer}.bias"))?;
            x = tape.conv2d(x, w, b, stride, 1)?;
            x = tape.relu(x);
        }
        Ok(x)
    }

    /// Decoder through its five learned layers, before the task head.
    fn decode_pre_head(&mut self, tape: &mut Tape<S>, h0: NodeId, hl: NodeId) -> Result<NodeId> {
        if tape.shape(h0) != tape.shape(hl) {
            return Err(Error::Dimension(format!(
                "decode: skip shapes {:?} and {:?} differ",
                tape.shape(h0),
                tape.shape(hl)
            )));
        }
        let cat = tape.concat_channels(h0, hl)?;
        let up = |tape: &mut Tape<S>, params: &mut ParamStore<S>, x, name: &str| -> Result<NodeId> {
            let w = params.stage(tape, &format!("decoder.{name}.weight"))?;
            let b = params.stage(tape, &format!("decoder.{name}.bias"))?;
            tape.conv_transpose2d(x, w, b, 2, 1)
        };
        let refine = |tape: &mut Tape<S>, params: &mut ParamStore<S>, x, name: &str| -> Result<NodeId> {
            let w = params.stage(tape, &format!("decoder.{name}.weight"))?;
            let b = params.stage(tape, &format!("decoder.{name}.bias"))?;
            tape.conv2d(x, w, b, 1, 1)
        };
        let x = up(tape, &mut self.params, cat, "up1")?;
        let x = tape.relu(x);
        let x = refine(tape, &mut self.params, x, "refine1")?;
        let x = tape.relu(x);
        let x = up(tape, &mut self.params, x, "up2")?;
        let x = tape.relu(x);
        let x = refine(tape, &mut self.params, x, "refine2")?;
        let x = tape.relu(x);
        up(tape, &mut self.params, x, "up3")
    }

    /// Task head: softplus (positive depth) reported as H×W, or raw
    /// segmentation logits K×H×W.
    fn apply_head(&mut self, tape: &mut Tape<S>, pre: NodeId) -> Result<NodeId> {
        match self.cfg.task {
            TaskKind::Depth => {
                let pos = tape.softplus(pre);
                let s = tape.shape(pos).to_vec();
                tape.reshape(pos, vec![s[1], s[2]])
            }
            TaskKind::Segmentation => Ok(pre),
        }
    }

    fn decode(&mut self, tape: &mut Tape<S>, h0: NodeId, hl: NodeId) -> Result<NodeId> {
        let pre = self.decode_pre_head(tape, h0, hl)?;
        self.apply_head(tape, pre)
    }

    fn spatial_encoder_params(
        &mut self,
        tape: &mut Tape<S>,
        level: usize,
    ) -> Result<SpatialEncoderParams> {
        let prefix = self.cfg.level_prefix("film", level);
        Ok(SpatialEncoderParams {
            fc1_weight: self.params.stage(tape, &format!("{prefix}.fc1.weight"))?,
            fc1_bias: self.params.stage(tape, &format!("{prefix}.fc1.bias"))?,
            fc2_weight: self.params.stage(tape, &format!("{prefix}.fc2.weight"))?,
            fc2_bias: self.params.stage(tape, &format!("{prefix}.fc2.bias"))?,
        })
    }

    fn attention_heads(
        &mut self,
        tape: &mut Tape<S>,
        level: usize,
    ) -> Result<Vec<AttentionHeadParams>> {
        let prefix = self.cfg.level_prefix("att", level);
        (0..self.cfg.heads)
            .map(|d| {
                Ok(AttentionHeadParams {
                    conv1_weight: self.params.stage(tape, &format!("{prefix}.h{d}.conv1.weight"))?,
                    conv1_bias: self.params.stage(tape, &format!("{prefix}.h{d}.conv1.bias"))?,
                    conv2_weight: self.params.stage(tape, &format!("{prefix}.h{d}.conv2.weight"))?,
                    conv2_bias: self.params.stage(tape, &format!("{prefix}.h{d}.conv2.bias"))?,
                    fc_weight: self.params.stage(tape, &format!("{prefix}.h{d}.fc.weight"))?,
                    fc_bias: self.params.stage(tape, &format!("{prefix}.h{d}.fc.bias"))?,
                })
            })
            .collect()
    }
}

/// Leaky slope used by attention scores; re-exported for tests.
pub const ATTENTION_LEAKY_SLOPE: f64 = LEAKY_SLOPE;

/// Deterministic list of (name, shape, fan_in) for a configuration.
fn parameter_plan(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, usize)> {
    let mut plan = Vec::new();
    let c = cfg.channels;
    let conv = |plan: &mut Vec<(String, Vec<usize>, usize)>, name: String, cout, cin, k| {
        plan.push((format!("{name}.weight"), vec![cout, cin, k, k], cin * k * k));
        plan.push((format!("{name}.bias"), vec![cout], cin * k * k));
    };
    let conv_t = |plan: &mut Vec<(String, Vec<usize>, usize)>, name: String, cin, cout, k| {
        plan.push((format!("{name}.weight"), vec![cin, cout, k, k], cin * k * k));
        plan.push((format!("{name}.bias"), vec![cout], cin * k * k));
    };
    let linear = |plan: &mut Vec<(String, Vec<usize>, usize)>, name: String, m: usize, n: usize| {
        plan.push((format!("{name}.weight"), vec![m, n], n));
        plan.push((format!("{name}.bias"), vec![m], n));
    };

    // Encoder: stride pattern 2,2,2,1; channels 16 → 32 → C → C.
    let enc_in = cfg.encoder_input_channels();
    conv(&mut plan, "encoder.conv1".into(), 16, enc_in, 3);
    conv(&mut plan, "encoder.conv2".into(), 32, 16, 3);
    conv(&mut plan, "encoder.conv3".into(), c, 32, 3);
    conv(&mut plan, "encoder.conv4".into(), c, c, 3);

    // Decoder: three ×2 upsamplings interleaved with two refinements.
    let head = cfg.head_channels();
    conv_t(&mut plan, "decoder.up1".into(), 2 * c, c, 4);
    conv(&mut plan, "decoder.refine1".into(), c, c, 3);
    conv_t(&mut plan, "decoder.up2".into(), c, c / 2, 4);
    conv(&mut plan, "decoder.refine2".into(), c / 2, c / 2, 3);
    conv_t(&mut plan, "decoder.up3".into(), c / 2, head, 4);

    let level_count = if cfg.share_level_params || cfg.levels == 1 {
        1
    } else {
        cfg.levels
    };
    match cfg.variant {
        Variant::MpPose => {
            for l in 0..level_count {
                let prefix = cfg.level_prefix("film", l);
                linear(&mut plan, format!("{prefix}.fc1"), FILM_HIDDEN, 9);
                linear(&mut plan, format!("{prefix}.fc2"), 2 * c, FILM_HIDDEN);
            }
        }
        Variant::MpAtt => {
            let (fh, fw) = cfg.feature_dims();
            let flat = c * fh.div_ceil(4).max(1) * fw.div_ceil(4).max(1);
            for l in 0..level_count {
                let prefix = cfg.level_prefix("att", l);
                for d in 0..cfg.heads {
                    conv(&mut plan, format!("{prefix}.h{d}.conv1"), c, 2 * c, 3);
                    conv(&mut plan, format!("{prefix}.h{d}.conv2"), c, c, 3);
                    linear(&mut plan, format!("{prefix}.h{d}.fc"), 1, flat);
                }
            }
        }
        Variant::Baseline | Variant::BaselineMp | Variant::Mp => {}
    }
    plan
}
