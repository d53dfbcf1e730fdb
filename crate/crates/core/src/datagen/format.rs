//! Dataset file format.
//!
//! Layout: magic `MRCPDATA`, version u32, manifest block (counts, dims,
//! class count, max depth, seed, preset name, noise spec, per-frame byte
//! offsets), then per frame per agent: pose (12 f32: rotation row-major
//! plus position), rgb (f32×3HW), depth (f32×HW), seg (u16×HW), and a
//! trailing CRC32 of all prior bytes. All fields little-endian and
//! fixed-width, so files are platform-independent. A human-readable
//! `key = value` sidecar is written next to the binary.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::wire;

use super::corrupt::{NoiseKind, NoiseSpec};
use super::{AgentSample, FrameSample};

pub const MAGIC: &[u8; 8] = b"MRCPDATA";
pub const VERSION: u32 = 1;

/// Dataset-level fields supplied by the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub agent_count: usize,
    pub height: usize,
    pub width: usize,
    pub class_count: usize,
    /// Background depth; evaluation masks it out.
    pub max_depth: f64,
    pub preset: String,
    pub noise: NoiseSpec,
    pub seed: u64,
}

/// Manifest read back from a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub frame_count: usize,
    pub agent_count: usize,
    pub height: usize,
    pub width: usize,
    pub class_count: usize,
    pub max_depth: f64,
    pub preset: String,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub frame_offsets: Vec<u64>,
}

fn noise_tag(kind: &NoiseKind) -> (u32, f64, f64) {
    match kind {
        NoiseKind::Gaussian { sigma } => (0, *sigma, 0.0),
        NoiseKind::Shot { scale } => (1, *scale, 0.0),
        NoiseKind::Impulse { prob } => (2, *prob, 0.0),
        NoiseKind::GaussianBlur { kernel } => (3, *kernel as f64, 0.0),
        NoiseKind::MotionBlur { length, angle } => (4, *length as f64, *angle),
        NoiseKind::Severe => (5, 0.0, 0.0),
        NoiseKind::Mixed => (6, 0.0, 0.0),
    }
}

fn noise_from_tag(tag: u32, p0: f64, p1: f64) -> Result<NoiseKind> {
    Ok(match tag {
        0 => NoiseKind::Gaussian { sigma: p0 },
        1 => NoiseKind::Shot { scale: p0 },
        2 => NoiseKind::Impulse { prob: p0 },
        3 => NoiseKind::GaussianBlur { kernel: p0 as usize },
        4 => NoiseKind::MotionBlur { length: p0 as usize, angle: p1 },
        5 => NoiseKind::Severe,
        6 => NoiseKind::Mixed,
        other => return Err(Error::Format(format!("unknown noise tag {other}"))),
    })
}

fn agent_block_bytes(h: usize, w: usize) -> usize {
    12 * 4 + 3 * h * w * 4 + h * w * 4 + h * w * 2
}

fn header_bytes(meta: &DatasetMeta, frame_count: usize) -> usize {
    8 + 4                      // magic + version
        + 5 * 4                // frame/agent counts, dims, classes
        + 8                    // max_depth f64
        + 8                    // seed
        + 4 + meta.preset.len()
        + 4 + 8 + 8 + 4        // noise tag, p0, p1, n_corrupt
        + 8 * frame_count      // offsets
}

/// Serialize frames; returns the manifest describing the written file.
pub fn write_dataset(
    path: &Path,
    frames: &[FrameSample],
    meta: &DatasetMeta,
) -> Result<DatasetManifest> {
    if frames.is_empty() {
        return Err(Error::Input("write_dataset: no frames".into()));
    }
    let (h, w) = (meta.height, meta.width);
    for frame in frames {
        if frame.agents.len() != meta.agent_count {
            return Err(Error::Dimension(format!(
                "write_dataset: frame has {} agents, manifest says {}",
                frame.agents.len(),
                meta.agent_count
            )));
        }
        for agent in &frame.agents {
            if agent.rgb.len() != 3 * h * w
                || agent.depth.len() != h * w
                || agent.seg.len() != h * w
            {
                return Err(Error::Dimension(
                    "write_dataset: agent buffers do not match manifest dims".into(),
                ));
            }
        }
    }
    let frame_bytes = meta.agent_count * agent_block_bytes(h, w);
    let header = header_bytes(meta, frames.len());
    let frame_offsets: Vec<u64> = (0..frames.len())
        .map(|i| (header + i * frame_bytes) as u64)
        .collect();

    let mut buf = Vec::with_capacity(header + frames.len() * frame_bytes + 4);
    buf.extend_from_slice(MAGIC);
    wire::put_u32(&mut buf, VERSION);
    wire::put_u32(&mut buf, frames.len() as u32);
    wire::put_u32(&mut buf, meta.agent_count as u32);
    wire::put_u32(&mut buf, h as u32);
    wire::put_u32(&mut buf, w as u32);
    wire::put_u32(&mut buf, meta.class_count as u32);
    wire::put_f64(&mut buf, meta.max_depth);
    wire::put_u64(&mut buf, meta.seed);
    wire::put_u32(&mut buf, meta.preset.len() as u32);
    buf.extend_from_slice(meta.preset.as_bytes());
    let (tag, p0, p1) = noise_tag(&meta.noise.kind);
    wire::put_u32(&mut buf, tag);
    wire::put_f64(&mut buf, p0);
    wire::put_f64(&mut buf, p1);
    wire::put_u32(&mut buf, meta.noise.n_corrupt as u32);
    for &off in &frame_offsets {
        wire::put_u64(&mut buf, off);
    }
    debug_assert_eq!(buf.len(), header);
    for frame in frames {
        for agent in &frame.agents {
            for &v in &agent.pose {
                wire::put_f32(&mut buf, v);
            }
            for &v in &agent.rgb {
                wire::put_f32(&mut buf, v);
            }
            for &v in &agent.depth {
                wire::put_f32(&mut buf, v);
            }
            for &v in &agent.seg {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    wire::seal_envelope(&mut buf);
    std::fs::write(path, &buf)?;

    let manifest = DatasetManifest {
        frame_count: frames.len(),
        agent_count: meta.agent_count,
        height: h,
        width: w,
        class_count: meta.class_count,
        max_depth: meta.max_depth,
        preset: meta.preset.clone(),
        noise: meta.noise.clone(),
        seed: meta.seed,
        frame_offsets,
    };
    std::fs::write(sidecar_path(path), render_sidecar(&manifest))?;
    Ok(manifest)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".manifest.txt");
    PathBuf::from(os)
}

fn render_sidecar(m: &DatasetManifest) -> String {
    let mut out = String::new();
    out.push_str("# dataset manifest\n");
    out.push_str(&format!("frames = {}\n", m.frame_count));
    out.push_str(&format!("agents = {}\n", m.agent_count));
    out.push_str(&format!("height = {}\n", m.height));
    out.push_str(&format!("width = {}\n", m.width));
    out.push_str(&format!("classes = {}\n", m.class_count));
    out.push_str(&format!("max_depth = {}\n", m.max_depth));
    out.push_str(&format!("preset = {}\n", m.preset));
    out.push_str(&format!("noise = {}\n", m.noise.kind));
    out.push_str(&format!("noisy_cameras = {}\n", m.noise.n_corrupt));
    out.push_str(&format!("seed = {}\n", m.seed));
    out
}

/// Read and fully validate a dataset file.
pub fn read_dataset(path: &Path) -> Result<(DatasetManifest, Vec<FrameSample>)> {
    let bytes = std::fs::read(path)?;
    let body = wire::open_envelope(&bytes, MAGIC, VERSION)?;
    let mut r = wire::Reader::new(body);
    let frame_count = r.u32("frame count")? as usize;
    let agent_count = r.u32("agent count")? as usize;
    let height = r.u32("height")? as usize;
    let width = r.u32("width")? as usize;
    let class_count = r.u32("class count")? as usize;
    let max_depth = r.f64("max depth")?;
    let seed = r.u64("seed")?;
    let preset_len = r.u32("preset length")? as usize;
    let preset = String::from_utf8(r.take(preset_len, "preset name")?.to_vec())
        .map_err(|_| Error::Format("preset name is not UTF-8".into()))?;
    let tag = r.u32("noise tag")?;
    let p0 = r.f64("noise parameter")?;
    let p1 = r.f64("noise parameter")?;
    let n_corrupt = r.u32("noisy camera count")? as usize;
    let noise = NoiseSpec {
        kind: noise_from_tag(tag, p0, p1)?,
        n_corrupt,
    };
    let mut frame_offsets = Vec::with_capacity(frame_count);
    for _ in 0..frame_count {
        frame_offsets.push(r.u64("frame offset")?);
    }
    if frame_offsets.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::Format("frame offsets not strictly increasing".into()));
    }
    if agent_count == 0 || frame_count == 0 || height == 0 || width == 0 {
        return Err(Error::Format("empty dataset dimensions".into()));
    }

    let plane = height * width;
    let mut frames = Vec::with_capacity(frame_count);
    for f in 0..frame_count {
        // Offsets are absolute file positions; the reader is positioned
        // just past the header, which the first offset must match.
        let expect = frame_offsets[f] as usize;
        if expect != r.position() + 12 {
            return Err(Error::Format(format!(
                "frame {f} offset {expect} does not match stream position {}",
                r.position() + 12
            )));
        }
        let mut agents = Vec::with_capacity(agent_count);
        for _ in 0..agent_count {
            let mut pose = [0.0f32; 12];
            for v in pose.iter_mut() {
                *v = r.f32("pose")?;
            }
            let mut rgb = Vec::with_capacity(3 * plane);
            for _ in 0..3 * plane {
                rgb.push(r.f32("rgb payload")?);
            }
            let mut depth = Vec::with_capacity(plane);
            for _ in 0..plane {
                depth.push(r.f32("depth payload")?);
            }
            let mut seg = Vec::with_capacity(plane);
            for _ in 0..plane {
                let b = r.take(2, "segmentation payload")?;
                let class = u16::from_le_bytes([b[0], b[1]]);
                if usize::from(class) >= class_count {
                    return Err(Error::Format(format!(
                        "segmentation class {class} out of range [0, {class_count})"
                    )));
                }
                seg.push(class);
            }
            agents.push(AgentSample { rgb, depth, seg, pose });
        }
        frames.push(FrameSample { agents });
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!(
            "{} trailing bytes after last frame",
            r.remaining()
        )));
    }
    Ok((
        DatasetManifest {
            frame_count,
            agent_count,
            height,
            width,
            class_count,
            max_depth,
            preset,
            noise,
            seed,
            frame_offsets,
        },
        frames,
    ))
}
