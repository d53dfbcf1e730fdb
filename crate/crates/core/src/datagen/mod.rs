//! Synthetic multi-view dataset generation: primitive scenes rendered by
//! ray casting with depth and segmentation ground truth, circle formation
//! presets, and the on-disk dataset format.

pub mod corrupt;
pub mod format;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{mat3_mul_vec, vec3_dot, vec3_normalize, vec3_sub, CameraIntrinsics, RobotPose};
use crate::rng::RngState;

pub use corrupt::{corrupt, corrupt_in_place, NoiseKind, NoiseSpec};
pub use format::{read_dataset, write_dataset, DatasetManifest, DatasetMeta};

/// Scene primitive with a semantic class and a base color.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Sphere {
        center: [f64; 3],
        radius: f64,
        class_id: u16,
        color: [f64; 3],
    },
    /// Axis-aligned box.
    Box {
        min: [f64; 3],
        max: [f64; 3],
        class_id: u16,
        color: [f64; 3],
    },
}

impl Primitive {
    pub fn class_id(&self) -> u16 {
        match self {
            Primitive::Sphere { class_id, .. } | Primitive::Box { class_id, .. } => *class_id,
        }
    }
}

/// Scene description. Rays that hit nothing within `max_depth` produce the
/// background class at `max_depth`; the ground plane is the projection
/// reference for FoV footprints, not a rendered surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub objects: Vec<Primitive>,
    pub ground_height: f64,
    pub background_class: u16,
    pub max_depth: f64,
}

impl SceneSpec {
    pub fn validate(&self, class_count: usize) -> Result<()> {
        if self.max_depth <= 0.0 {
            return Err(Error::Input("max_depth must be positive".into()));
        }
        for obj in &self.objects {
            if usize::from(obj.class_id()) >= class_count {
                return Err(Error::Input(format!(
                    "object class {} out of range [0, {class_count})",
                    obj.class_id()
                )));
            }
        }
        if usize::from(self.background_class) >= class_count {
            return Err(Error::Input("background class out of range".into()));
        }
        Ok(())
    }
}

/// One agent's rendered view plus its pose, in the dataset's storage
/// precision (f32, so file roundtrips are bitwise).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSample {
    /// RGB, 3×H×W row-major, values in [0, 1].
    pub rgb: Vec<f32>,
    /// Ray-distance depth, H×W, in (0, max_depth].
    pub depth: Vec<f32>,
    /// Class ids, H×W.
    pub seg: Vec<u16>,
    /// Rotation row-major (9 values) followed by position (3 values).
    pub pose: [f32; 12],
}

impl AgentSample {
    /// Rebuild a valid pose from the stored f32 values; Gram-Schmidt
    /// re-orthonormalization absorbs the storage rounding.
    pub fn robot_pose(&self) -> Result<RobotPose<f64>> {
        let p = &self.pose;
        let rows = [
            [p[0] as f64, p[1] as f64, p[2] as f64],
            [p[3] as f64, p[4] as f64, p[5] as f64],
            [p[6] as f64, p[7] as f64, p[8] as f64],
        ];
        // Orthonormalize the columns.
        let col = |j: usize| [rows[0][j], rows[1][j], rows[2][j]];
        let c0 = vec3_normalize(&col(0));
        let mut c1 = col(1);
        let d = vec3_dot(&c1, &c0);
        c1 = vec3_normalize(&[c1[0] - d * c0[0], c1[1] - d * c0[1], c1[2] - d * c0[2]]);
        let c2 = crate::graph::vec3_cross(&c0, &c1);
        let rotation = [
            [c0[0], c1[0], c2[0]],
            [c0[1], c1[1], c2[1]],
            [c0[2], c1[2], c2[2]],
        ];
        RobotPose::new([p[9] as f64, p[10] as f64, p[11] as f64], rotation)
    }

    pub fn pose_from(pose: &RobotPose<f64>) -> [f32; 12] {
        let r = &pose.rotation;
        [
            r[0][0] as f32, r[0][1] as f32, r[0][2] as f32,
            r[1][0] as f32, r[1][1] as f32, r[1][2] as f32,
            r[2][0] as f32, r[2][1] as f32, r[2][2] as f32,
            pose.position[0] as f32, pose.position[1] as f32, pose.position[2] as f32,
        ]
    }
}

/// One synchronized multi-robot capture.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    pub agents: Vec<AgentSample>,
}

fn intersect_sphere(
    origin: &[f64; 3],
    dir: &[f64; 3],
    center: &[f64; 3],
    radius: f64,
) -> Option<(f64, [f64; 3])> {
    let oc = vec3_sub(origin, center);
    let b = vec3_dot(&oc, dir);
    let c = vec3_dot(&oc, &oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    if t <= 1e-9 {
        return None;
    }
    let hit = [origin[0] + dir[0] * t, origin[1] + dir[1] * t, origin[2] + dir[2] * t];
    let normal = vec3_normalize(&vec3_sub(&hit, center));
    Some((t, normal))
}

fn intersect_box(
    origin: &[f64; 3],
    dir: &[f64; 3],
    min: &[f64; 3],
    max: &[f64; 3],
) -> Option<(f64, [f64; 3])> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    let mut axis = 0usize;
    for a in 0..3 {
        if dir[a].abs() < 1e-12 {
            if origin[a] < min[a] || origin[a] > max[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut t0, mut t1) = ((min[a] - origin[a]) * inv, (max[a] - origin[a]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_enter {
            t_enter = t0;
            axis = a;
        }
        t_exit = t_exit.min(t1);
        if t_enter > t_exit {
            return None;
        }
    }
    if t_enter <= 1e-9 {
        return None;
    }
    let mut normal = [0.0; 3];
    normal[axis] = if dir[axis] > 0.0 { -1.0 } else { 1.0 };
    Some((t_enter, normal))
}

/// Fixed directional light (normalized, pointing from surfaces toward the
/// light) and ambient floor for Lambertian shading.
const LIGHT_DIR: [f64; 3] = [0.340_777_16, 0.255_582_87, 0.904_752_47];
const AMBIENT: f64 = 0.35;

fn shade(base: &[f64; 3], normal: &[f64; 3]) -> [f32; 3] {
    let lambert = vec3_dot(normal, &LIGHT_DIR).max(0.0);
    let intensity = AMBIENT + (1.0 - AMBIENT) * lambert;
    [
        (base[0] * intensity).clamp(0.0, 1.0) as f32,
        (base[1] * intensity).clamp(0.0, 1.0) as f32,
        (base[2] * intensity).clamp(0.0, 1.0) as f32,
    ]
}

fn sky_color(dir_z: f64) -> [f32; 3] {
    let t = (0.5 * (dir_z + 1.0)).clamp(0.0, 1.0);
    [
        (0.16 + 0.10 * t) as f32,
        (0.19 + 0.14 * t) as f32,
        (0.24 + 0.20 * t) as f32,
    ]
}

/// Render every agent's view of the scene: per pixel, cast a ray through
/// the pixel center; the nearest hit within `max_depth` supplies class,
/// ray-distance depth, and Lambertian-shaded color. Misses get the
/// background class at `max_depth`.
pub fn render_views(
    scene: &SceneSpec,
    poses: &[RobotPose<f64>],
    intrinsics: &CameraIntrinsics,
) -> Result<FrameSample> {
    if intrinsics.width == 0 || intrinsics.height == 0 {
        return Err(Error::Input("render_views: degenerate intrinsics".into()));
    }
    for pose in poses {
        if pose.position.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("render_views: non-finite pose".into()));
        }
    }
    let (w, h) = (intrinsics.width, intrinsics.height);
    let tan_h = (intrinsics.fov_horizontal / 2.0).tan();
    let tan_v = (intrinsics.fov_vertical / 2.0).tan();
    let mut agents = Vec::with_capacity(poses.len());
    for pose in poses {
        let mut rgb = vec![0.0f32; 3 * h * w];
        let mut depth = vec![0.0f32; h * w];
        let mut seg = vec![0u16; h * w];
        for py in 0..h {
            let sy = (2.0 * (py as f64 + 0.5) / h as f64 - 1.0) * tan_v;
            for px in 0..w {
                let sx = (2.0 * (px as f64 + 0.5) / w as f64 - 1.0) * tan_h;
                let dir = vec3_normalize(&mat3_mul_vec(&pose.rotation, &[sx, sy, 1.0]));
                let mut nearest: Option<(f64, [f64; 3], u16, [f64; 3])> = None;
                for obj in &scene.objects {
                    let hit = match obj {
                        Primitive::Sphere { center, radius, class_id, color } => {
                            intersect_sphere(&pose.position, &dir, center, *radius)
                                .map(|(t, n)| (t, n, *class_id, *color))
                        }
                        Primitive::Box { min, max, class_id, color } => {
                            intersect_box(&pose.position, &dir, min, max)
                                .map(|(t, n)| (t, n, *class_id, *color))
                        }
                    };
                    if let Some((t, ..)) = hit {
                        if t <= scene.max_depth
                            && nearest.as_ref().map_or(true, |(best, ..)| t < *best)
                        {
                            nearest = hit;
                        }
                    }
                }
                let idx = py * w + px;
                match nearest {
                    Some((t, normal, class, color)) => {
                        depth[idx] = t as f32;
                        seg[idx] = class;
                        let c = shade(&color, &normal);
                        rgb[idx] = c[0];
                        rgb[h * w + idx] = c[1];
                        rgb[2 * h * w + idx] = c[2];
                    }
                    None => {
                        depth[idx] = scene.max_depth as f32;
                        seg[idx] = scene.background_class;
                        let c = sky_color(dir[2]);
                        rgb[idx] = c[0];
                        rgb[h * w + idx] = c[1];
                        rgb[2 * h * w + idx] = c[2];
                    }
                }
            }
        }
        agents.push(AgentSample {
            rgb,
            depth,
            seg,
            pose: AgentSample::pose_from(pose),
        });
    }
    Ok(FrameSample { agents })
}

/// Circle formation presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormationPreset {
    /// Robots on a circle aiming at the ground point under its center;
    /// footprints share the central region heavily.
    CircleInward,
    /// Robots aiming radially outward (about 45° down); footprints mostly
    /// disjoint sectors.
    CircleOutward,
    /// Inward formation with per-agent altitude (±30%) and yaw (±15°)
    /// variation drawn from the seed.
    PoseVaried,
}

impl fmt::Display for FormationPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormationPreset::CircleInward => "circle_inward",
            FormationPreset::CircleOutward => "circle_outward",
            FormationPreset::PoseVaried => "pose_varied",
        })
    }
}

impl FromStr for FormationPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle_inward" => Ok(FormationPreset::CircleInward),
            "circle_outward" => Ok(FormationPreset::CircleOutward),
            "pose_varied" => Ok(FormationPreset::PoseVaried),
            other => Err(Error::Config(format!(
                "unknown formation preset {other}; expected circle_inward, circle_outward or pose_varied"
            ))),
        }
    }
}

/// Equally spaced circle formation with small seeded position jitter.
/// Aim directions are exact after jitter, so inward axes pass through the
/// ground center regardless of the seed.
pub fn formation_preset(
    preset: FormationPreset,
    n_agents: usize,
    radius: f64,
    altitude: f64,
    seed: u64,
) -> Result<Vec<RobotPose<f64>>> {
    if n_agents < 2 {
        return Err(Error::Input("formation needs at least 2 agents".into()));
    }
    if radius <= 0.0 || altitude <= 0.0 {
        return Err(Error::Input("radius and altitude must be positive".into()));
    }
    let mut rng = RngState::new(seed);
    let mut poses = Vec::with_capacity(n_agents);
    for i in 0..n_agents {
        let angle = std::f64::consts::TAU * i as f64 / n_agents as f64;
        let jitter = [
            rng.next_range(-0.3, 0.3),
            rng.next_range(-0.3, 0.3),
            rng.next_range(-0.3, 0.3),
        ];
        let alt = match preset {
            FormationPreset::PoseVaried => altitude * (1.0 + 0.3 * rng.next_range(-1.0, 1.0)),
            _ => altitude,
        };
        let position = [
            radius * angle.cos() + jitter[0],
            radius * angle.sin() + jitter[1],
            alt + jitter[2],
        ];
        let target = match preset {
            FormationPreset::CircleInward => [0.0, 0.0, 0.0],
            FormationPreset::CircleOutward => {
                let horizontal = [position[0], position[1], 0.0];
                let u = vec3_normalize(&horizontal);
                // About 45° downward: go out by one altitude.
                [
                    position[0] + u[0] * position[2],
                    position[1] + u[1] * position[2],
                    0.0,
                ]
            }
            FormationPreset::PoseVaried => {
                let yaw = rng.next_range(-15.0, 15.0).to_radians();
                let (s, c) = yaw.sin_cos();
                // Rotate the aim point about the robot's vertical axis.
                let dx = -position[0];
                let dy = -position[1];
                [
                    position[0] + c * dx - s * dy,
                    position[1] + s * dx + c * dy,
                    0.0,
                ]
            }
        };
        poses.push(RobotPose::look_at(position, target)?);
    }
    Ok(poses)
}

/// Class-keyed base palette; object colors jitter around these so
/// segmentation classes stay visually separable.
const PALETTE: [[f64; 3]; 7] = [
    [0.20, 0.22, 0.26], // background (unused by objects)
    [0.85, 0.30, 0.25],
    [0.25, 0.60, 0.85],
    [0.90, 0.75, 0.20],
    [0.35, 0.75, 0.35],
    [0.75, 0.35, 0.80],
    [0.90, 0.55, 0.30],
];

/// Sample a scene of spheres and boxes spread over the circle's interior
/// and an outer annulus, so both inward and outward formations see objects.
pub fn sample_scene(rng: &mut RngState, class_count: usize, max_depth: f64) -> SceneSpec {
    let object_count = 6 + rng.next_below(4) as usize;
    let mut objects = Vec::with_capacity(object_count);
    for _ in 0..object_count {
        let class_id = (1 + rng.next_below(class_count as u64 - 1)) as u16;
        let base = PALETTE[usize::from(class_id) % PALETTE.len()];
        let color = [
            (base[0] + rng.next_range(-0.08, 0.08)).clamp(0.05, 1.0),
            (base[1] + rng.next_range(-0.08, 0.08)).clamp(0.05, 1.0),
            (base[2] + rng.next_range(-0.08, 0.08)).clamp(0.05, 1.0),
        ];
        // 60% of objects near the center, the rest on an outer annulus.
        let dist = if rng.next_f64() < 0.6 {
            rng.next_range(0.5, 4.5)
        } else {
            rng.next_range(7.0, 12.0)
        };
        let theta = rng.next_range(0.0, std::f64::consts::TAU);
        let center = [
            dist * theta.cos(),
            dist * theta.sin(),
            rng.next_range(0.6, 3.0),
        ];
        if rng.next_f64() < 0.5 {
            objects.push(Primitive::Sphere {
                center,
                radius: rng.next_range(0.7, 1.9),
                class_id,
                color,
            });
        } else {
            let half = [
                rng.next_range(0.5, 1.6),
                rng.next_range(0.5, 1.6),
                rng.next_range(0.5, 1.8),
            ];
            objects.push(Primitive::Box {
                min: [center[0] - half[0], center[1] - half[1], (center[2] - half[2]).max(0.0)],
                max: [center[0] + half[0], center[1] + half[1], center[2] + half[2]],
                class_id,
                color,
            });
        }
    }
    SceneSpec {
        objects,
        ground_height: 0.0,
        background_class: 0,
        max_depth,
    }
}

/// Everything `generate_dataset` needs.
#[derive(Debug, Clone)]
pub struct GenSpec {
    pub preset: FormationPreset,
    pub agents: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub class_count: usize,
    pub radius: f64,
    pub altitude: f64,
    pub fov_horizontal: f64,
    pub fov_vertical: f64,
    pub seed: u64,
    pub noise: NoiseSpec,
    /// Background depth; rays miss beyond this distance.
    pub max_depth: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            preset: FormationPreset::CircleInward,
            agents: 5,
            frames: 8,
            height: 64,
            width: 64,
            class_count: 4,
            radius: 6.0,
            altitude: 4.0,
            fov_horizontal: 1.0,
            fov_vertical: 1.0,
            seed: 7,
            noise: NoiseSpec {
                kind: NoiseKind::Severe,
                n_corrupt: 0,
            },
            max_depth: 20.0,
        }
    }
}

/// Render `frames` clean captures (scene and formation jitter re-sampled
/// per frame from the seed) and write them as one dataset file. Corruption
/// is never baked in; the harness applies it at train/eval time per the
/// manifest's noise protocol.
pub fn generate_dataset(spec: &GenSpec, path: &std::path::Path) -> Result<DatasetManifest> {
    if spec.frames == 0 {
        return Err(Error::Input("dataset needs at least one frame".into()));
    }
    if spec.class_count < 2 || spec.class_count > PALETTE.len() {
        return Err(Error::Input(format!(
            "class_count must be in [2, {}]",
            PALETTE.len()
        )));
    }
    let intrinsics = CameraIntrinsics::new(
        spec.fov_horizontal,
        spec.fov_vertical,
        spec.width,
        spec.height,
    )?;
    if spec.max_depth <= 0.0 {
        return Err(Error::Input("max_depth must be positive".into()));
    }
    let root = RngState::new(spec.seed);
    let mut frames = Vec::with_capacity(spec.frames);
    for f in 0..spec.frames {
        let mut rng = root.substream(f as u64);
        let scene = sample_scene(&mut rng, spec.class_count, spec.max_depth);
        scene.validate(spec.class_count)?;
        let poses = formation_preset(
            spec.preset,
            spec.agents,
            spec.radius,
            spec.altitude,
            rng.next_u64(),
        )?;
        frames.push(render_views(&scene, &poses, &intrinsics)?);
    }
    let meta = DatasetMeta {
        agent_count: spec.agents,
        height: spec.height,
        width: spec.width,
        class_count: spec.class_count,
        max_depth: spec.max_depth,
        preset: spec.preset.to_string(),
        noise: spec.noise.clone(),
        seed: spec.seed,
    };
    write_dataset(path, &frames, &meta)
}
