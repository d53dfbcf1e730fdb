//! Message construction for the three encodings exchanged between robots:
//! plain node features, pose-conditioned affine (FiLM) messages, and
//! cross-attention weighted messages.
//!
//! Direction convention: a message `m_ij` flows from node `i` to node `j`;
//! the FiLM parameters for it are generated from `p_ij`, the pose of `j`
//! expressed in `i`'s body frame. Attention normalizes scores over the
//! destination's incoming edges.

use crate::error::{Error, Result};
use crate::graph::{Mat3, Vec3};
use crate::scalar::Scalar;
use crate::tensor::{NodeId, Tape};

/// Slope of every LeakyReLU in the message networks.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Continuous 9-value relative-pose representation:
/// `[t_x, t_y, t_z, r1..r6]` where `r1..r6` are the first two columns of
/// the rotation matrix. Lossless, since the third column is the cross
/// product of the first two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousRelPose<S: Scalar> {
    pub values: [S; 9],
}

/// Per-channel affine parameters generated from a relative pose.
#[derive(Debug, Clone, Copy)]
pub struct FilmParams {
    /// Channel scales `a`.
    pub scale: NodeId,
    /// Channel shifts `b`.
    pub shift: NodeId,
}

/// A message flowing along one directed edge at one message-passing level.
#[derive(Debug, Clone, Copy)]
pub struct Message {
    pub node: NodeId,
    pub source: usize,
    pub dest: usize,
    pub level: usize,
}

/// Encode a relative pose `(R, t)` as translation plus the first two
/// rotation columns. Rejects non-orthonormal rotations (tolerance 1e-9).
pub fn encode_continuous_pose<S: Scalar>(
    rotation: &Mat3<S>,
    translation: &Vec3<S>,
) -> Result<ContinuousRelPose<S>> {
    let col = |j: usize| [rotation[0][j], rotation[1][j], rotation[2][j]];
    let (c0, c1, c2) = (col(0), col(1), col(2));
    let dot = crate::graph::vec3_dot(&c0, &c1).abs();
    let n0 = (crate::graph::vec3_norm(&c0) - S::one()).abs();
    let n1 = (crate::graph::vec3_norm(&c1) - S::one()).abs();
    let cross = crate::graph::vec3_cross(&c0, &c1);
    let handed = crate::graph::vec3_norm(&crate::graph::vec3_sub(&cross, &c2));
    let tol = S::of(1e-9);
    if dot > tol || n0 > tol || n1 > tol || handed > S::of(1e-8) {
        return Err(Error::Input(format!(
            "encode_continuous_pose: rotation not orthonormal (defects {dot}, {n0}, {n1}, {handed})"
        )));
    }
    Ok(ContinuousRelPose {
        values: [
            translation[0],
            translation[1],
            translation[2],
            rotation[0][0],
            rotation[1][0],
            rotation[2][0],
            rotation[0][1],
            rotation[1][1],
            rotation[2][1],
        ],
    })
}

impl<S: Scalar> ContinuousRelPose<S> {
    /// Rebuild the full rotation matrix; the third column is the cross
    /// product of the two embedded columns.
    pub fn reconstruct_rotation(&self) -> Mat3<S> {
        let c0 = [self.values[3], self.values[4], self.values[5]];
        let c1 = [self.values[6], self.values[7], self.values[8]];
        let c2 = crate::graph::vec3_cross(&c0, &c1);
        [
            [c0[0], c1[0], c2[0]],
            [c0[1], c1[1], c2[1]],
            [c0[2], c1[2], c2[2]],
        ]
    }

    pub fn translation(&self) -> Vec3<S> {
        [self.values[0], self.values[1], self.values[2]]
    }
}

/// Tape handles of the two fully connected layers of the spatial encoder
/// (9 → hidden → 2C, ReLU in between).
#[derive(Debug, Clone, Copy)]
pub struct SpatialEncoderParams {
    pub fc1_weight: NodeId,
    pub fc1_bias: NodeId,
    pub fc2_weight: NodeId,
    pub fc2_bias: NodeId,
}

/// Run the spatial encoder on a continuous relative pose, splitting the
/// output into per-channel scale and shift vectors.
pub fn film_generate<S: Scalar>(
    tape: &mut Tape<S>,
    pose: &ContinuousRelPose<S>,
    params: &SpatialEncoderParams,
) -> Result<FilmParams> {
    let out_dim = tape.shape(params.fc2_weight)[0];
    if out_dim % 2 != 0 {
        return Err(Error::Dimension(format!(
            "spatial encoder output dim {out_dim} must be 2*C"
        )));
    }
    let c = out_dim / 2;
    let p = tape.constant(vec![9], pose.values.to_vec())?;
    let hidden = tape.linear(p, params.fc1_weight, params.fc1_bias)?;
    let hidden = tape.relu(hidden);
    let out = tape.linear(hidden, params.fc2_weight, params.fc2_bias)?;
    let scale = tape.slice_flat(out, 0, vec![c])?;
    let shift = tape.slice_flat(out, c, vec![c])?;
    Ok(FilmParams { scale, shift })
}

/// FiLM message: channel `k` of the output is `a_k * h_k + b_k * 1`.
pub fn film_message<S: Scalar>(
    tape: &mut Tape<S>,
    feature: NodeId,
    params: &FilmParams,
) -> Result<NodeId> {
    tape.channel_affine(feature, params.scale, params.shift)
}

/// Plain message: the feature itself, unchanged.
pub fn plain_message(feature: NodeId) -> NodeId {
    feature
}

/// Tape handles of one attention head's transform: two stride-2
/// convolutions halving the channel count from 2C to C, a flatten, and one
/// fully connected row producing a single score.
#[derive(Debug, Clone, Copy)]
pub struct AttentionHeadParams {
    pub conv1_weight: NodeId,
    pub conv1_bias: NodeId,
    pub conv2_weight: NodeId,
    pub conv2_bias: NodeId,
    pub fc_weight: NodeId,
    pub fc_bias: NodeId,
}

/// Attention score for the directed edge `source → dest`:
/// `LeakyReLU(F[h_source ∥ h_dest])`. Not symmetric in its arguments.
pub fn attention_score<S: Scalar>(
    tape: &mut Tape<S>,
    h_source: NodeId,
    h_dest: NodeId,
    head: &AttentionHeadParams,
) -> Result<NodeId> {
    if tape.shape(h_source) != tape.shape(h_dest) {
        return Err(Error::Dimension(format!(
            "attention_score: feature shapes {:?} and {:?} differ",
            tape.shape(h_source),
            tape.shape(h_dest)
        )));
    }
    let cat = tape.concat_channels(h_source, h_dest)?;
    let c1 = tape.conv2d(cat, head.conv1_weight, head.conv1_bias, 2, 1)?;
    let c2 = tape.conv2d(c1, head.conv2_weight, head.conv2_bias, 2, 1)?;
    let flat_len: usize = tape.shape(c2).iter().product();
    let flat = tape.reshape(c2, vec![flat_len])?;
    let score = tape.linear(flat, head.fc_weight, head.fc_bias)?;
    Ok(tape.leaky_relu(score, S::of(LEAKY_SLOPE)))
}

/// Build the attention-encoded messages arriving at `dest`. Per head, the
/// scores of all incoming edges are softmax-normalized and weight the
/// sender features; the final per-edge message averages the heads.
pub fn attention_messages<S: Scalar>(
    tape: &mut Tape<S>,
    dest: usize,
    dest_feature: NodeId,
    neighbor_features: &[(usize, NodeId)],
    heads: &[AttentionHeadParams],
    level: usize,
) -> Result<Vec<Message>> {
    if neighbor_features.is_empty() {
        return Err(Error::Contract(format!(
            "attention_messages: node {dest} has no incoming edges; isolated nodes must be skipped"
        )));
    }
    if heads.is_empty() {
        return Err(Error::Contract("attention_messages: no heads".into()));
    }
    // per_edge[j] collects the D per-head messages for neighbor j.
    let mut per_edge: Vec<Vec<NodeId>> = vec![Vec::with_capacity(heads.len()); neighbor_features.len()];
    for head in heads {
        let scores: Vec<NodeId> = neighbor_features
            .iter()
            .map(|&(_, h_j)| attention_score(tape, h_j, dest_feature, head))
            .collect::<Result<_>>()?;
        let weights = tape.softmax_normalize(&scores)?;
        for (slot, (&(_, h_j), w)) in per_edge.iter_mut().zip(neighbor_features.iter().zip(weights)) {
            slot.push(tape.scale_by(h_j, w)?);
        }
    }
    let mut messages = Vec::with_capacity(neighbor_features.len());
    for (&(source, _), head_msgs) in neighbor_features.iter().zip(&per_edge) {
        let node = tape.mean_of(head_msgs)?;
        messages.push(Message {
            node,
            source,
            dest,
            level,
        });
    }
    Ok(messages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{mat3_identity, mat3_mul};
    use crate::rng::RngState;

    fn rot_z(angle: f64) -> Mat3<f64> {
        let (s, c) = angle.sin_cos();
        [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    }

    fn rot_x(angle: f64) -> Mat3<f64> {
        let (s, c) = angle.sin_cos();
        [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
    }

    #[test]
    fn continuous_pose_identity() {
        let p = encode_continuous_pose(&mat3_identity::<f64>(), &[0.0; 3]).unwrap();
        assert_eq!(p.values, [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn continuous_pose_rot_z_90() {
        let p = encode_continuous_pose(&rot_z(std::f64::consts::FRAC_PI_2), &[1.0, 2.0, 3.0]).unwrap();
        let expect = [1.0, 2.0, 3.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0];
        for (v, e) in p.values.iter().zip(expect) {
            assert!((v - e).abs() < 1e-12, "{:?}", p.values);
        }
    }

    #[test]
    fn continuous_pose_roundtrips_random_rotations() {
        let mut rng = RngState::new(3);
        for _ in 0..50 {
            let r = mat3_mul(
                &rot_z(rng.next_range(-3.0, 3.0)),
                &rot_x(rng.next_range(-1.5, 1.5)),
            );
            let p = encode_continuous_pose(&r, &[0.1, -0.2, 0.3]).unwrap();
            let rebuilt = p.reconstruct_rotation();
            for i in 0..3 {
                for j in 0..3 {
                    assert!((rebuilt[i][j] - r[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn continuous_pose_rejects_sheared_matrix() {
        let mut bad = mat3_identity::<f64>();
        bad[0][1] = 0.01;
        assert!(encode_continuous_pose(&bad, &[0.0; 3]).is_err());
    }

    fn film_net(tape: &mut Tape<f64>, c: usize, hidden: usize, fill: f64) -> SpatialEncoderParams {
        SpatialEncoderParams {
            fc1_weight: tape.leaf(vec![hidden, 9], vec![fill; hidden * 9], true).unwrap(),
            fc1_bias: tape.leaf(vec![hidden], vec![fill; hidden], true).unwrap(),
            fc2_weight: tape
                .leaf(vec![2 * c, hidden], vec![fill; 2 * c * hidden], true)
                .unwrap(),
            fc2_bias: tape.leaf(vec![2 * c], vec![fill; 2 * c], true).unwrap(),
        }
    }

    #[test]
    fn film_generate_zero_weights_gives_zero_params() {
        let mut tape = Tape::new();
        let params = film_net(&mut tape, 4, 8, 0.0);
        let pose = encode_continuous_pose(&mat3_identity::<f64>(), &[1.0, 2.0, 3.0]).unwrap();
        let film = film_generate(&mut tape, &pose, &params).unwrap();
        assert_eq!(tape.value(film.scale), &[0.0; 4]);
        assert_eq!(tape.value(film.shift), &[0.0; 4]);
    }

    #[test]
    fn film_identity_affine_reproduces_feature_bitwise() {
        let mut tape = Tape::new();
        let c = 3;
        let mut params = film_net(&mut tape, c, 8, 0.0);
        // Final bias: scale channels 1, shift channels 0.
        let mut bias = vec![0.0; 2 * c];
        bias[..c].fill(1.0);
        params.fc2_bias = tape.leaf(vec![2 * c], bias, true).unwrap();
        let pose = encode_continuous_pose(&mat3_identity::<f64>(), &[0.5, 0.0, -0.5]).unwrap();
        let film = film_generate(&mut tape, &pose, &params).unwrap();

        let mut rng = RngState::new(77);
        let h_data: Vec<f64> = (0..c * 4 * 4).map(|_| rng.next_range(0.01, 1.0)).collect();
        let h = tape.leaf(vec![c, 4, 4], h_data.clone(), true).unwrap();
        let m = film_message(&mut tape, h, &film).unwrap();
        assert_eq!(tape.value(m), h_data.as_slice());
    }

    #[test]
    fn film_message_hand_values() {
        let mut tape = Tape::new();
        // h all ones, a = 2, b = -1 per channel -> message all ones.
        let h = tape.leaf(vec![2, 2, 2], vec![1.0; 8], false).unwrap();
        let a = tape.leaf(vec![2], vec![2.0; 2], false).unwrap();
        let b = tape.leaf(vec![2], vec![-1.0; 2], false).unwrap();
        let m = film_message(&mut tape, h, &FilmParams { scale: a, shift: b }).unwrap();
        assert_eq!(tape.value(m), &[1.0; 8]);

        // a = 0 broadcasts b over space.
        let a0 = tape.leaf(vec![2], vec![0.0; 2], false).unwrap();
        let b2 = tape.leaf(vec![2], vec![0.25, -0.75], false).unwrap();
        let h2 = tape
            .leaf(vec![2, 2, 2], (0..8).map(|i| i as f64).collect(), false)
            .unwrap();
        let m2 = film_message(&mut tape, h2, &FilmParams { scale: a0, shift: b2 }).unwrap();
        assert_eq!(tape.value(m2), &[0.25, 0.25, 0.25, 0.25, -0.75, -0.75, -0.75, -0.75]);
    }

    #[test]
    fn film_generate_gradients_match_finite_differences() {
        // Gradient w.r.t. the pose vector through both layers.
        let mut rng = RngState::new(5);
        let hidden = 6;
        let c = 2;
        let w1: Vec<f64> = (0..hidden * 9).map(|_| rng.next_range(-0.5, 0.5)).collect();
        let b1: Vec<f64> = (0..hidden).map(|_| rng.next_range(-0.2, 0.2)).collect();
        let w2: Vec<f64> = (0..2 * c * hidden).map(|_| rng.next_range(-0.5, 0.5)).collect();
        let b2: Vec<f64> = (0..2 * c).map(|_| rng.next_range(-0.2, 0.2)).collect();
        let point = crate::tensor::Tensor::from_vec(
            vec![9],
            (0..9).map(|_| rng.next_range(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let err = crate::tensor::grad_check(
            move |tape, p| {
                let fw1 = tape.constant(vec![hidden, 9], w1.clone())?;
                let fb1 = tape.constant(vec![hidden], b1.clone())?;
                let fw2 = tape.constant(vec![2 * c, hidden], w2.clone())?;
                let fb2 = tape.constant(vec![2 * c], b2.clone())?;
                let hid = tape.linear(p, fw1, fb1)?;
                let hid = tape.relu(hid);
                let out = tape.linear(hid, fw2, fb2)?;
                Ok(tape.mean(out))
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    /// Head whose transform reduces to "sum of the concatenated feature"
    /// for 1×1×1 features: all-ones convolutions and fc, zero biases.
    fn sum_head(tape: &mut Tape<f64>) -> AttentionHeadParams {
        AttentionHeadParams {
            conv1_weight: tape.leaf(vec![1, 2, 3, 3], vec![1.0; 18], true).unwrap(),
            conv1_bias: tape.leaf(vec![1], vec![0.0], true).unwrap(),
            conv2_weight: tape.leaf(vec![1, 1, 3, 3], vec![1.0; 9], true).unwrap(),
            conv2_bias: tape.leaf(vec![1], vec![0.0], true).unwrap(),
            fc_weight: tape.leaf(vec![1, 1], vec![1.0], true).unwrap(),
            fc_bias: tape.leaf(vec![1], vec![0.0], true).unwrap(),
        }
    }

    fn zero_head(tape: &mut Tape<f64>) -> AttentionHeadParams {
        AttentionHeadParams {
            conv1_weight: tape.leaf(vec![1, 2, 3, 3], vec![0.0; 18], true).unwrap(),
            conv1_bias: tape.leaf(vec![1], vec![0.0], true).unwrap(),
            conv2_weight: tape.leaf(vec![1, 1, 3, 3], vec![0.0; 9], true).unwrap(),
            conv2_bias: tape.leaf(vec![1], vec![0.0], true).unwrap(),
            fc_weight: tape.leaf(vec![1, 1], vec![0.0], true).unwrap(),
            fc_bias: tape.leaf(vec![1], vec![0.0], true).unwrap(),
        }
    }

    #[test]
    fn attention_score_zero_transform_is_zero() {
        let mut tape = Tape::new();
        let head = zero_head(&mut tape);
        let hi = tape.leaf(vec![1, 1, 1], vec![3.7], false).unwrap();
        let hj = tape.leaf(vec![1, 1, 1], vec![-1.9], false).unwrap();
        let s = attention_score(&mut tape, hi, hj, &head).unwrap();
        assert_eq!(tape.value(s), &[0.0]);
    }

    #[test]
    fn attention_score_sum_transform_hand_values() {
        let mut tape = Tape::new();
        let head = sum_head(&mut tape);
        let hi = tape.leaf(vec![1, 1, 1], vec![1.0], false).unwrap();
        let hj = tape.leaf(vec![1, 1, 1], vec![2.0], false).unwrap();
        let s = attention_score(&mut tape, hi, hj, &head).unwrap();
        assert!((tape.value(s)[0] - 3.0).abs() < 1e-12);

        let hi = tape.leaf(vec![1, 1, 1], vec![-4.0], false).unwrap();
        let hj = tape.leaf(vec![1, 1, 1], vec![1.0], false).unwrap();
        let s = attention_score(&mut tape, hi, hj, &head).unwrap();
        assert!((tape.value(s)[0] - (-0.6)).abs() < 1e-12);
    }

    #[test]
    fn attention_messages_identical_neighbors_split_evenly() {
        let mut tape = Tape::new();
        let head = sum_head(&mut tape);
        let dest = tape.leaf(vec![1, 1, 1], vec![0.4], false).unwrap();
        let h = tape.leaf(vec![1, 1, 1], vec![1.6], false).unwrap();
        let msgs =
            attention_messages(&mut tape, 0, dest, &[(1, h), (2, h)], &[head], 0).unwrap();
        for m in &msgs {
            assert!((tape.value(m.node)[0] - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_messages_hand_computed_softmax_case() {
        let mut tape = Tape::new();
        let head = sum_head(&mut tape);
        let dest = tape.leaf(vec![1, 1, 1], vec![2.0], false).unwrap();
        let h1 = tape.leaf(vec![1, 1, 1], vec![1.0], false).unwrap();
        let h3 = tape.leaf(vec![1, 1, 1], vec![3.0], false).unwrap();
        let msgs =
            attention_messages(&mut tape, 0, dest, &[(1, h1), (2, h3)], &[head], 0).unwrap();
        // Scores 3 and 5; weights 0.11920 / 0.88080; messages w * h.
        assert!((tape.value(msgs[0].node)[0] - 0.11920).abs() < 1e-4);
        assert!((tape.value(msgs[1].node)[0] - 2.64241).abs() < 1e-4);
    }

    #[test]
    fn identical_heads_match_single_head_bitwise() {
        let mut rng = RngState::new(13);
        let c = 2;
        let feat = |tape: &mut Tape<f64>, rng: &mut RngState| {
            let data: Vec<f64> = (0..c * 4 * 4).map(|_| rng.next_range(-1.0, 1.0)).collect();
            tape.leaf(vec![c, 4, 4], data, false).unwrap()
        };
        let head_params = |tape: &mut Tape<f64>, values: &[Vec<f64>]| AttentionHeadParams {
            conv1_weight: tape.leaf(vec![c, 2 * c, 3, 3], values[0].clone(), true).unwrap(),
            conv1_bias: tape.leaf(vec![c], values[1].clone(), true).unwrap(),
            conv2_weight: tape.leaf(vec![c, c, 3, 3], values[2].clone(), true).unwrap(),
            conv2_bias: tape.leaf(vec![c], values[3].clone(), true).unwrap(),
            fc_weight: tape.leaf(vec![1, c], values[4].clone(), true).unwrap(),
            fc_bias: tape.leaf(vec![1], values[5].clone(), true).unwrap(),
        };
        let mut values = Vec::new();
        for len in [c * 2 * c * 9, c, c * c * 9, c, c, 1] {
            values.push((0..len).map(|_| rng.next_range(-0.5, 0.5)).collect::<Vec<f64>>());
        }

        let mut tape = Tape::new();
        let dest = feat(&mut tape, &mut rng.clone());
        let mut n_rng = rng.substream(1);
        let n1 = feat(&mut tape, &mut n_rng);
        let n2 = feat(&mut tape, &mut n_rng);
        let single = head_params(&mut tape, &values);
        let one = attention_messages(&mut tape, 0, dest, &[(1, n1), (2, n2)], &[single], 0).unwrap();
        // Four identical heads (power of two so the head average is exact).
        let heads: Vec<AttentionHeadParams> =
            (0..4).map(|_| head_params(&mut tape, &values)).collect();
        let four = attention_messages(&mut tape, 0, dest, &[(1, n1), (2, n2)], &heads, 0).unwrap();
        for (a, b) in one.iter().zip(&four) {
            assert_eq!(tape.value(a.node), tape.value(b.node));
        }
    }

    #[test]
    fn attention_weights_sum_to_one_per_head() {
        let mut rng = RngState::new(29);
        let mut tape = Tape::new();
        let c = 2;
        let mk_feat = |tape: &mut Tape<f64>, rng: &mut RngState| {
            let data: Vec<f64> = (0..c * 4 * 4).map(|_| rng.next_range(-1.0, 1.0)).collect();
            tape.leaf(vec![c, 4, 4], data, false).unwrap()
        };
        let dest = mk_feat(&mut tape, &mut rng);
        let neighbors: Vec<NodeId> = (0..4).map(|_| mk_feat(&mut tape, &mut rng)).collect();
        let head = AttentionHeadParams {
            conv1_weight: tape
                .leaf(vec![c, 2 * c, 3, 3], (0..c * 2 * c * 9).map(|i| (i as f64 * 0.37).sin() * 0.4).collect(), true)
                .unwrap(),
            conv1_bias: tape.leaf(vec![c], vec![0.1; c], true).unwrap(),
            conv2_weight: tape
                .leaf(vec![c, c, 3, 3], (0..c * c * 9).map(|i| (i as f64 * 0.21).cos() * 0.4).collect(), true)
                .unwrap(),
            conv2_bias: tape.leaf(vec![c], vec![-0.05; c], true).unwrap(),
            fc_weight: tape.leaf(vec![1, c], vec![0.3, -0.6], true).unwrap(),
            fc_bias: tape.leaf(vec![1], vec![0.0], true).unwrap(),
        };
        let scores: Vec<NodeId> = neighbors
            .iter()
            .map(|&h| attention_score(&mut tape, h, dest, &head).unwrap())
            .collect();
        let weights = tape.softmax_normalize(&scores).unwrap();
        let total: f64 = weights.iter().map(|&w| tape.value(w)[0]).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_destination_is_a_contract_violation() {
        let mut tape = Tape::new();
        let head = sum_head(&mut tape);
        let dest = tape.leaf(vec![1, 1, 1], vec![0.0], false).unwrap();
        let err = attention_messages(&mut tape, 0, dest, &[], &[head], 0).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn bidirectional_messages_differ_for_generic_parameters() {
        // FiLM: p_ij != p_ji for a generic pose, so messages differ.
        let mut rng = RngState::new(41);
        let mut tape = Tape::new();
        let c = 2;
        let hidden = 8;
        let mut mk = |tape: &mut Tape<f64>, len: usize, lo: f64, hi: f64| {
            let data: Vec<f64> = (0..len).map(|_| rng.next_range(lo, hi)).collect();
            tape.leaf(vec![len], data, false).unwrap()
        };
        let w1 = mk(&mut tape, hidden * 9, -0.5, 0.5);
        let w1 = tape.reshape(w1, vec![hidden, 9]).unwrap();
        let b1 = mk(&mut tape, hidden, -0.2, 0.2);
        let w2 = mk(&mut tape, 2 * c * hidden, -0.5, 0.5);
        let w2 = tape.reshape(w2, vec![2 * c, hidden]).unwrap();
        let b2 = mk(&mut tape, 2 * c, -0.2, 0.2);
        let params = SpatialEncoderParams {
            fc1_weight: w1,
            fc1_bias: b1,
            fc2_weight: w2,
            fc2_bias: b2,
        };

        let pose_i = crate::graph::RobotPose::new([0.0, 0.0, 1.0], mat3_identity()).unwrap();
        let pose_j =
            crate::graph::RobotPose::new([2.0, 1.0, 1.5], rot_z(0.8)).unwrap();
        let (r_ij, t_ij) = crate::graph::relative_pose(&pose_i, &pose_j);
        let (r_ji, t_ji) = crate::graph::relative_pose(&pose_j, &pose_i);
        let p_ij = encode_continuous_pose(&r_ij, &t_ij).unwrap();
        let p_ji = encode_continuous_pose(&r_ji, &t_ji).unwrap();

        let hi_data: Vec<f64> = (0..c * 4).map(|k| 0.3 + 0.1 * k as f64).collect();
        let hj_data: Vec<f64> = (0..c * 4).map(|k| -0.2 + 0.07 * k as f64).collect();
        let h_i = tape.leaf(vec![c, 2, 2], hi_data, false).unwrap();
        let h_j = tape.leaf(vec![c, 2, 2], hj_data, false).unwrap();

        let f_ij = film_generate(&mut tape, &p_ij, &params).unwrap();
        let f_ji = film_generate(&mut tape, &p_ji, &params).unwrap();
        let m_ij = film_message(&mut tape, h_i, &f_ij).unwrap();
        let m_ji = film_message(&mut tape, h_j, &f_ji).unwrap();
        assert_ne!(tape.value(m_ij), tape.value(m_ji));
    }
}
