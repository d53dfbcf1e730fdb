//! Robot poses, the communication graph, relative poses, and the
//! field-of-view overlap diagnostic.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type Vec3<S> = [S; 3];
pub type Mat3<S> = [[S; 3]; 3];

pub fn mat3_identity<S: Scalar>() -> Mat3<S> {
    let (o, z) = (S::one(), S::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub fn mat3_transpose<S: Scalar>(m: &Mat3<S>) -> Mat3<S> {
    let mut out = *m;
    for (r, row) in m.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            out[c][r] = *v;
        }
    }
    out
}

pub fn mat3_mul<S: Scalar>(a: &Mat3<S>, b: &Mat3<S>) -> Mat3<S> {
    let mut out = [[S::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = S::zero();
            for (k, bk) in b.iter().enumerate() {
                acc = acc + a[i][k] * bk[j];
            }
            out[i][j] = acc;
        }
    }
    out
}

pub fn mat3_mul_vec<S: Scalar>(m: &Mat3<S>, v: &Vec3<S>) -> Vec3<S> {
    let mut out = [S::zero(); 3];
    for (i, row) in m.iter().enumerate() {
        out[i] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
    }
    out
}

pub fn mat3_det<S: Scalar>(m: &Mat3<S>) -> S {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn vec3_sub<S: Scalar>(a: &Vec3<S>, b: &Vec3<S>) -> Vec3<S> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn vec3_dot<S: Scalar>(a: &Vec3<S>, b: &Vec3<S>) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn vec3_cross<S: Scalar>(a: &Vec3<S>, b: &Vec3<S>) -> Vec3<S> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn vec3_norm<S: Scalar>(a: &Vec3<S>) -> S {
    vec3_dot(a, a).sqrt()
}

pub fn vec3_normalize<S: Scalar>(a: &Vec3<S>) -> Vec3<S> {
    let n = vec3_norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Maximum deviation from orthonormality: entries of |RᵀR − I| plus
/// |det(R) − 1|.
fn orthonormality_defect<S: Scalar>(r: &Mat3<S>) -> S {
    let gram = mat3_mul(&mat3_transpose(r), r);
    let mut worst = (mat3_det(r) - S::one()).abs();
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { S::one() } else { S::zero() };
            worst = worst.max((gram[i][j] - target).abs());
        }
    }
    worst
}

/// World-frame robot pose. The rotation maps body coordinates to world
/// coordinates; the camera convention is x-right, y-down, z-forward
/// (optical axis).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotPose<S: Scalar> {
    pub position: Vec3<S>,
    pub rotation: Mat3<S>,
}

impl<S: Scalar> RobotPose<S> {
    /// Build a pose, validating finiteness and rotation orthonormality
    /// (tolerance 1e-9).
    pub fn new(position: Vec3<S>, rotation: Mat3<S>) -> Result<Self> {
        if position.iter().any(|v| !v.is_finite())
            || rotation.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::Input("pose contains non-finite values".into()));
        }
        let defect = orthonormality_defect(&rotation);
        if defect > S::of(1e-9) {
            return Err(Error::Input(format!(
                "rotation not orthonormal (defect {defect})"
            )));
        }
        Ok(RobotPose { position, rotation })
    }

    pub fn identity() -> Self {
        RobotPose {
            position: [S::zero(); 3],
            rotation: mat3_identity(),
        }
    }

    /// Pose looking from `position` toward `target` with the image-down
    /// direction as close to world-down as possible.
    pub fn look_at(position: Vec3<S>, target: Vec3<S>) -> Result<Self> {
        let forward = vec3_sub(&target, &position);
        if vec3_norm(&forward) < S::of(1e-12) {
            return Err(Error::Input("look_at: target equals position".into()));
        }
        let forward = vec3_normalize(&forward);
        let up_world = [S::zero(), S::zero(), S::one()];
        let right = vec3_cross(&forward, &up_world);
        if vec3_norm(&right) < S::of(1e-9) {
            return Err(Error::Input(
                "look_at: forward direction parallel to world up".into(),
            ));
        }
        let right = vec3_normalize(&right);
        let down = vec3_cross(&forward, &right);
        let rotation = [
            [right[0], down[0], forward[0]],
            [right[1], down[1], forward[1]],
            [right[2], down[2], forward[2]],
        ];
        RobotPose::new(position, rotation)
    }

    /// Optical axis (body +z) expressed in world coordinates.
    pub fn optical_axis(&self) -> Vec3<S> {
        [self.rotation[0][2], self.rotation[1][2], self.rotation[2][2]]
    }

    /// World point expressed in this pose's body frame.
    pub fn world_to_body(&self, p: &Vec3<S>) -> Vec3<S> {
        let rel = vec3_sub(p, &self.position);
        mat3_mul_vec(&mat3_transpose(&self.rotation), &rel)
    }
}

/// Pinhole camera with symmetric FoV angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fov_horizontal: f64,
    pub fov_vertical: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fov_horizontal: f64, fov_vertical: f64, width: usize, height: usize) -> Result<Self> {
        if !(0.0..std::f64::consts::PI).contains(&fov_horizontal)
            || !(0.0..std::f64::consts::PI).contains(&fov_vertical)
            || fov_horizontal <= 0.0
            || fov_vertical <= 0.0
        {
            return Err(Error::Input(format!(
                "FoV angles must lie in (0, pi), got {fov_horizontal}, {fov_vertical}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::Input("image dimensions must be positive".into()));
        }
        Ok(CameraIntrinsics {
            fov_horizontal,
            fov_vertical,
            width,
            height,
        })
    }
}

/// Undirected communication graph over robot indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Build from an explicit edge list; self-loops are rejected, duplicate
    /// edges collapse.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut canonical: Vec<(usize, usize)> = Vec::new();
        for &(a, b) in edges {
            if a == b {
                return Err(Error::Input(format!("self-loop on node {a}")));
            }
            if a >= n_nodes || b >= n_nodes {
                return Err(Error::Input(format!(
                    "edge ({a}, {b}) out of range for {n_nodes} nodes"
                )));
            }
            canonical.push((a.min(b), a.max(b)));
        }
        canonical.sort_unstable();
        canonical.dedup();
        let mut neighbors = vec![Vec::new(); n_nodes];
        for &(a, b) in &canonical {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(CommGraph {
            n_nodes,
            edges: canonical,
            neighbors,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Canonical (min, max) edge pairs, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbor list of `node`, ascending.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    /// Number of directed links (each undirected edge carries two).
    pub fn directed_links(&self) -> usize {
        2 * self.edges.len()
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                edges.push((a, b));
            }
        }
        CommGraph::from_edges(n, &edges).expect("complete graph is valid")
    }
}

/// Connect robots whose Euclidean distance is at most `distance_threshold`.
pub fn build_graph<S: Scalar>(
    poses: &[RobotPose<S>],
    distance_threshold: S,
) -> Result<CommGraph> {
    if poses.is_empty() {
        return Err(Error::Input("build_graph: no poses".into()));
    }
    if distance_threshold <= S::zero() {
        return Err(Error::Input("build_graph: threshold must be positive".into()));
    }
    for pose in poses {
        if pose.position.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("build_graph: non-finite position".into()));
        }
    }
    let mut edges = Vec::new();
    for i in 0..poses.len() {
        for j in i + 1..poses.len() {
            let d = vec3_norm(&vec3_sub(&poses[j].position, &poses[i].position));
            if d <= distance_threshold {
                edges.push((i, j));
            }
        }
    }
    CommGraph::from_edges(poses.len(), &edges)
}

/// Pose of robot `j` expressed in robot `i`'s body frame:
/// `R_ij = R_iᵀ·R_j`, `t_ij = R_iᵀ·(p_j − p_i)`.
pub fn relative_pose<S: Scalar>(
    pose_i: &RobotPose<S>,
    pose_j: &RobotPose<S>,
) -> (Mat3<S>, Vec3<S>) {
    let ri_t = mat3_transpose(&pose_i.rotation);
    let r = mat3_mul(&ri_t, &pose_j.rotation);
    let t = mat3_mul_vec(&ri_t, &vec3_sub(&pose_j.position, &pose_i.position));
    (r, t)
}

/// Quad footprint of a camera frustum on the ground plane.
fn ground_footprint<S: Scalar>(
    pose: &RobotPose<S>,
    intrinsics: &CameraIntrinsics,
    ground_height: S,
) -> Result<[(S, S); 4]> {
    let tan_h = S::of((intrinsics.fov_horizontal / 2.0).tan());
    let tan_v = S::of((intrinsics.fov_vertical / 2.0).tan());
    let corners = [
        (-S::one(), -S::one()),
        (S::one(), -S::one()),
        (S::one(), S::one()),
        (-S::one(), S::one()),
    ];
    let mut out = [(S::zero(), S::zero()); 4];
    for (slot, (sx, sy)) in out.iter_mut().zip(corners) {
        let dir_body = [sx * tan_h, sy * tan_v, S::one()];
        let dir = mat3_mul_vec(&pose.rotation, &dir_body);
        let dz = dir[2];
        let height_above = pose.position[2] - ground_height;
        if dz.abs() < S::of(1e-12) {
            return Err(Error::Geometry(
                "camera ray parallel to ground plane".into(),
            ));
        }
        let t = -height_above / dz;
        if t <= S::zero() {
            return Err(Error::Geometry(
                "camera field of view does not intersect the ground plane".into(),
            ));
        }
        *slot = (pose.position[0] + dir[0] * t, pose.position[1] + dir[1] * t);
    }
    Ok(out)
}

/// Is the ground point `(x, y, ground_height)` inside the camera frustum?
fn covers<S: Scalar>(
    pose: &RobotPose<S>,
    tan_h: S,
    tan_v: S,
    ground_height: S,
    x: S,
    y: S,
) -> bool {
    let q = pose.world_to_body(&[x, y, ground_height]);
    if q[2] <= S::zero() {
        return false;
    }
    (q[0] / q[2]).abs() <= tan_h && (q[1] / q[2]).abs() <= tan_v
}

/// Ratio of the union of the ground-projected FoV footprints to the sum of
/// their individual areas, computed by grid rasterization. Smaller means
/// more mutual overlap; disjoint footprints give 1.
pub fn fov_overlap_ratio<S: Scalar>(
    poses: &[RobotPose<S>],
    intrinsics: &CameraIntrinsics,
    ground_height: S,
    grid_resolution: S,
) -> Result<f64> {
    if poses.is_empty() {
        return Err(Error::Input("fov_overlap_ratio: no poses".into()));
    }
    if grid_resolution <= S::zero() {
        return Err(Error::Input(
            "fov_overlap_ratio: grid resolution must be positive".into(),
        ));
    }
    let mut min_x = S::infinity();
    let mut max_x = S::neg_infinity();
    let mut min_y = S::infinity();
    let mut max_y = S::neg_infinity();
    for pose in poses {
        for (x, y) in ground_footprint(pose, intrinsics, ground_height)? {
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
    }
    let tan_h = S::of((intrinsics.fov_horizontal / 2.0).tan());
    let tan_v = S::of((intrinsics.fov_vertical / 2.0).tan());
    let res = grid_resolution.to_f64_c();
    let nx = (((max_x - min_x).to_f64_c() / res).ceil() as usize).max(1);
    let ny = (((max_y - min_y).to_f64_c() / res).ceil() as usize).max(1);
    let mut union_cells = 0u64;
    let mut sum_cells = 0u64;
    let half = S::of(0.5);
    for iy in 0..ny {
        let y = min_y + grid_resolution * (S::of(iy as f64) + half);
        for ix in 0..nx {
            let x = min_x + grid_resolution * (S::of(ix as f64) + half);
            let mut count = 0u64;
            for pose in poses {
                if covers(pose, tan_h, tan_v, ground_height, x, y) {
                    count += 1;
                }
            }
            if count > 0 {
                union_cells += 1;
                sum_cells += count;
            }
        }
    }
    if sum_cells == 0 {
        return Err(Error::Geometry(
            "fov_overlap_ratio: no footprint cells rasterized".into(),
        ));
    }
    Ok(union_cells as f64 / sum_cells as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn rot_z(angle: f64) -> Mat3<f64> {
        let (s, c) = angle.sin_cos();
        [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    }

    fn random_rotation(rng: &mut RngState) -> Mat3<f64> {
        // Compose rotations about z and x for a generic orientation.
        let a = rng.next_range(-3.0, 3.0);
        let b = rng.next_range(-1.5, 1.5);
        let (sb, cb) = b.sin_cos();
        let rx = [[1.0, 0.0, 0.0], [0.0, cb, -sb], [0.0, sb, cb]];
        mat3_mul(&rot_z(a), &rx)
    }

    fn line_poses(xs: &[f64]) -> Vec<RobotPose<f64>> {
        xs.iter()
            .map(|&x| RobotPose::new([x, 0.0, 0.0], mat3_identity()).unwrap())
            .collect()
    }

    #[test]
    fn pose_rejects_non_orthonormal_rotation() {
        let mut bad = mat3_identity::<f64>();
        bad[0][0] = 1.1;
        assert!(RobotPose::new([0.0; 3], bad).is_err());
        assert!(RobotPose::new([f64::NAN, 0.0, 0.0], mat3_identity()).is_err());
    }

    #[test]
    fn complete_graph_with_large_threshold() {
        let poses = line_poses(&[0.0, 1.0, 2.5, 7.0]);
        let g = build_graph(&poses, 1e6).unwrap();
        assert_eq!(g.edges().len(), 6);
        for i in 0..4 {
            assert_eq!(g.neighbors(i).len(), 3);
        }
    }

    #[test]
    fn empty_graph_below_min_distance() {
        let poses = line_poses(&[0.0, 1.0, 2.5]);
        let g = build_graph(&poses, 0.5).unwrap();
        assert!(g.edges().is_empty());
    }

    #[test]
    fn line_formation_threshold_case() {
        let poses = line_poses(&[0.0, 1.0, 2.5]);
        let g = build_graph(&poses, 1.5).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.neighbors(1), &[0, 2]);
    }

    #[test]
    fn build_graph_is_permutation_equivariant() {
        let mut rng = RngState::new(17);
        let poses: Vec<RobotPose<f64>> = (0..6)
            .map(|_| {
                RobotPose::new(
                    [
                        rng.next_range(-5.0, 5.0),
                        rng.next_range(-5.0, 5.0),
                        rng.next_range(0.0, 3.0),
                    ],
                    mat3_identity(),
                )
                .unwrap()
            })
            .collect();
        let perm = [3usize, 0, 5, 1, 4, 2];
        let permuted: Vec<RobotPose<f64>> = perm.iter().map(|&i| poses[i]).collect();
        let g = build_graph(&poses, 4.0).unwrap();
        let gp = build_graph(&permuted, 4.0).unwrap();
        // position in `permuted` of original index i
        let mut inv = [0usize; 6];
        for (slot, &orig) in perm.iter().enumerate() {
            inv[orig] = slot;
        }
        for a in 0..6 {
            for b in 0..6 {
                if a != b {
                    assert_eq!(g.has_edge(a, b), gp.has_edge(inv[a], inv[b]));
                }
            }
        }
    }

    #[test]
    fn relative_pose_identity_and_translation() {
        let p = RobotPose::new([1.0, 2.0, 3.0], rot_z(0.7)).unwrap();
        let (r, t) = relative_pose(&p, &p);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((r[i][j] - expect).abs() < 1e-14);
            }
            assert!(t[i].abs() < 1e-14);
        }

        let a = RobotPose::new([0.0, 0.0, 0.0], mat3_identity()).unwrap();
        let b = RobotPose::new([1.0, 0.0, 0.0], mat3_identity()).unwrap();
        let (_, t) = relative_pose(&a, &b);
        assert_eq!(t, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn relative_pose_composes() {
        let mut rng = RngState::new(23);
        for _ in 0..20 {
            let mk = |rng: &mut RngState| {
                RobotPose::new(
                    [
                        rng.next_range(-2.0, 2.0),
                        rng.next_range(-2.0, 2.0),
                        rng.next_range(-2.0, 2.0),
                    ],
                    random_rotation(rng),
                )
                .unwrap()
            };
            let (pi, pj, pk) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
            let (r_ij, t_ij) = relative_pose(&pi, &pj);
            let (r_jk, t_jk) = relative_pose(&pj, &pk);
            let (r_ik, t_ik) = relative_pose(&pi, &pk);
            let r_comp = mat3_mul(&r_ij, &r_jk);
            let t_comp = {
                let rt = mat3_mul_vec(&r_ij, &t_jk);
                [rt[0] + t_ij[0], rt[1] + t_ij[1], rt[2] + t_ij[2]]
            };
            for i in 0..3 {
                assert!((t_comp[i] - t_ik[i]).abs() < 1e-12);
                for j in 0..3 {
                    assert!((r_comp[i][j] - r_ik[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    fn down_camera(x: f64, y: f64, z: f64) -> RobotPose<f64> {
        RobotPose::look_at([x, y, z], [x + 0.3, y, 0.0]).unwrap()
    }

    #[test]
    fn identical_cameras_overlap_ratio_half() {
        let intr = CameraIntrinsics::new(1.0, 0.8, 64, 64).unwrap();
        let poses = vec![down_camera(0.0, 0.0, 3.0), down_camera(0.0, 0.0, 3.0)];
        let ratio = fov_overlap_ratio(&poses, &intr, 0.0, 0.05).unwrap();
        assert!((ratio - 0.5).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn disjoint_footprints_ratio_one() {
        let intr = CameraIntrinsics::new(0.8, 0.8, 64, 64).unwrap();
        let poses = vec![down_camera(0.0, 0.0, 2.0), down_camera(100.0, 0.0, 2.0)];
        let ratio = fov_overlap_ratio(&poses, &intr, 0.0, 0.05).unwrap();
        assert_eq!(ratio, 1.0);
    }

    #[test]
    fn horizontal_camera_is_a_geometry_error() {
        let intr = CameraIntrinsics::new(0.8, 0.8, 64, 64).unwrap();
        // Optical axis along +x at constant height: upper frustum corners
        // never reach the ground.
        let pose = RobotPose::look_at([0.0, 0.0, 2.0], [5.0, 0.0, 2.0]).unwrap();
        let err = fov_overlap_ratio(&[pose], &intr, 0.0, 0.05).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn overlap_invariant_under_rigid_transform() {
        let intr = CameraIntrinsics::new(1.0, 0.9, 64, 64).unwrap();
        let poses = vec![
            down_camera(0.0, 0.0, 3.0),
            down_camera(1.5, 0.5, 2.5),
            down_camera(-1.0, 1.0, 3.5),
        ];
        let base = fov_overlap_ratio(&poses, &intr, 0.0, 0.05).unwrap();
        // Rotate everything by 40 degrees about z and translate in-plane.
        let rz = rot_z(40f64.to_radians());
        let shift = [10.0, -4.0, 0.0];
        let moved: Vec<RobotPose<f64>> = poses
            .iter()
            .map(|p| {
                let pos = mat3_mul_vec(&rz, &p.position);
                RobotPose::new(
                    [pos[0] + shift[0], pos[1] + shift[1], pos[2] + shift[2]],
                    mat3_mul(&rz, &p.rotation),
                )
                .unwrap()
            })
            .collect();
        let transformed = fov_overlap_ratio(&moved, &intr, 0.0, 0.05).unwrap();
        assert!(
            (base - transformed).abs() < 0.02,
            "base {base}, transformed {transformed}"
        );
    }
}
