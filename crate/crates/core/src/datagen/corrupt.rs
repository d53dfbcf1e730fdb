//! Sensor corruption suite: additive Gaussian noise, shot noise, impulse
//! noise, Gaussian and motion blur, the severe blur-plus-noise protocol,
//! and a per-frame mixed mode. Corruption always targets the first
//! `n_corrupt` cameras; ground truth is never touched.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::RngState;

use super::FrameSample;

/// Default magnitudes for the individual noise kinds.
pub const DEFAULT_GAUSSIAN_SIGMA: f64 = 0.05;
pub const DEFAULT_SHOT_SCALE: f64 = 50.0;
pub const DEFAULT_IMPULSE_PROB: f64 = 0.02;
pub const DEFAULT_BLUR_KERNEL: usize = 7;
pub const DEFAULT_MOTION_LENGTH: usize = 9;
/// Gaussian sigma applied after the random blur in the severe protocol.
pub const SEVERE_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    Shot { scale: f64 },
    Impulse { prob: f64 },
    GaussianBlur { kernel: usize },
    MotionBlur { length: usize, angle: f64 },
    /// Gaussian blur with kernel size drawn uniformly from [1, 100],
    /// followed by additive Gaussian noise.
    Severe,
    /// Per frame, one of the five basic kinds at default magnitude.
    Mixed,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            NoiseKind::Shot { scale } => write!(f, "shot:{scale}"),
            NoiseKind::Impulse { prob } => write!(f, "impulse:{prob}"),
            NoiseKind::GaussianBlur { kernel } => write!(f, "gaussian_blur:{kernel}"),
            NoiseKind::MotionBlur { length, angle } => write!(f, "motion_blur:{length}:{angle}"),
            NoiseKind::Severe => f.write_str("severe"),
            NoiseKind::Mixed => f.write_str("mixed"),
        }
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    /// Parse `name` or `name:param[:param]`; omitted params use defaults.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or("");
        let p0 = parts.next();
        let p1 = parts.next();
        let parse = |v: Option<&str>, what: &str| -> Result<Option<f64>> {
            v.map(|x| {
                x.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad {what} value {x}")))
            })
            .transpose()
        };
        match name {
            "gaussian" => Ok(NoiseKind::Gaussian {
                sigma: parse(p0, "sigma")?.unwrap_or(DEFAULT_GAUSSIAN_SIGMA),
            }),
            "shot" => Ok(NoiseKind::Shot {
                scale: parse(p0, "scale")?.unwrap_or(DEFAULT_SHOT_SCALE),
            }),
            "impulse" => Ok(NoiseKind::Impulse {
                prob: parse(p0, "probability")?.unwrap_or(DEFAULT_IMPULSE_PROB),
            }),
            "gaussian_blur" => Ok(NoiseKind::GaussianBlur {
                kernel: parse(p0, "kernel")?.unwrap_or(DEFAULT_BLUR_KERNEL as f64) as usize,
            }),
            "motion_blur" => Ok(NoiseKind::MotionBlur {
                length: parse(p0, "length")?.unwrap_or(DEFAULT_MOTION_LENGTH as f64) as usize,
                angle: parse(p1, "angle")?.unwrap_or(0.6),
            }),
            "severe" => Ok(NoiseKind::Severe),
            "mixed" => Ok(NoiseKind::Mixed),
            other => Err(Error::Config(format!("unknown noise kind {other}"))),
        }
    }
}

/// Noise protocol: which corruption and how many cameras it hits.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub n_corrupt: usize,
}

impl NoiseSpec {
    pub fn validate(&self, agents: usize) -> Result<()> {
        if self.n_corrupt > agents {
            return Err(Error::Config(format!(
                "n_corrupt {} exceeds agent count {agents}",
                self.n_corrupt
            )));
        }
        match self.kind {
            NoiseKind::Gaussian { sigma } if sigma < 0.0 => {
                Err(Error::Config("gaussian sigma must be >= 0".into()))
            }
            NoiseKind::Shot { scale } if scale <= 0.0 => {
                Err(Error::Config("shot scale must be positive".into()))
            }
            NoiseKind::Impulse { prob } if !(0.0..=1.0).contains(&prob) => {
                Err(Error::Config("impulse probability must be in [0, 1]".into()))
            }
            NoiseKind::GaussianBlur { kernel } if kernel == 0 => {
                Err(Error::Config("blur kernel must be >= 1".into()))
            }
            NoiseKind::MotionBlur { length, .. } if length == 0 => {
                Err(Error::Config("motion length must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

fn clamp01(v: f64) -> f32 {
    v.clamp(0.0, 1.0) as f32
}

fn add_gaussian(image: &mut [f32], sigma: f64, rng: &mut RngState) {
    if sigma == 0.0 {
        return;
    }
    for v in image.iter_mut() {
        *v = clamp01(*v as f64 + sigma * rng.next_normal());
    }
}

fn add_shot(image: &mut [f32], scale: f64, rng: &mut RngState) {
    for v in image.iter_mut() {
        let lambda = (*v as f64) * scale;
        *v = clamp01(rng.next_poisson(lambda) as f64 / scale);
    }
}

fn add_impulse(image: &mut [f32], prob: f64, rng: &mut RngState) {
    for v in image.iter_mut() {
        if rng.next_f64() < prob {
            *v = if rng.next_f64() < 0.5 { 0.0 } else { 1.0 };
        }
    }
}

/// Separable Gaussian blur with replicated borders. Even kernel sizes round
/// up to the next odd size; size 1 is the identity.
fn gaussian_blur(image: &mut [f32], h: usize, w: usize, kernel: usize) {
    let k = if kernel % 2 == 0 { kernel + 1 } else { kernel };
    if k <= 1 {
        return;
    }
    let half = (k / 2) as isize;
    let sigma = 0.3 * ((k as f64 - 1.0) / 2.0 - 1.0) + 0.8;
    let mut weights = Vec::with_capacity(k);
    let mut total = 0.0;
    for i in 0..k {
        let x = i as f64 - half as f64;
        let wv = (-x * x / (2.0 * sigma * sigma)).exp();
        weights.push(wv);
        total += wv;
    }
    for wv in weights.iter_mut() {
        *wv /= total;
    }
    let plane = h * w;
    let mut scratch = vec![0.0f32; plane];
    for c in 0..3 {
        let channel = &mut image[c * plane..(c + 1) * plane];
        // Horizontal pass.
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, wv) in weights.iter().enumerate() {
                    let sx = (x as isize + i as isize - half).clamp(0, w as isize - 1) as usize;
                    acc += wv * channel[y * w + sx] as f64;
                }
                scratch[y * w + x] = acc as f32;
            }
        }
        // Vertical pass.
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, wv) in weights.iter().enumerate() {
                    let sy = (y as isize + i as isize - half).clamp(0, h as isize - 1) as usize;
                    acc += wv * scratch[sy * w + x] as f64;
                }
                channel[y * w + x] = clamp01(acc);
            }
        }
    }
}

/// Average along a line segment of `length` nearest-neighbor samples at
/// `angle`, borders replicated.
fn motion_blur(image: &mut [f32], h: usize, w: usize, length: usize, angle: f64) {
    if length <= 1 {
        return;
    }
    let (s, c) = angle.sin_cos();
    let half = (length as f64 - 1.0) / 2.0;
    let plane = h * w;
    let mut scratch = vec![0.0f32; plane];
    for ch in 0..3 {
        let channel = &mut image[ch * plane..(ch + 1) * plane];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for i in 0..length {
                    let o = i as f64 - half;
                    let sx = ((x as f64 + o * c).round() as isize).clamp(0, w as isize - 1) as usize;
                    let sy = ((y as f64 + o * s).round() as isize).clamp(0, h as isize - 1) as usize;
                    acc += channel[sy * w + sx] as f64;
                }
                scratch[y * w + x] = clamp01(acc / length as f64);
            }
        }
        channel.copy_from_slice(&scratch);
    }
}

/// Apply one corruption to a 3×H×W image in place.
pub fn corrupt_in_place(
    image: &mut [f32],
    h: usize,
    w: usize,
    kind: &NoiseKind,
    rng: &mut RngState,
) -> Result<()> {
    if image.len() != 3 * h * w {
        return Err(Error::Dimension(format!(
            "corrupt: image has {} values, expected 3*{h}*{w}",
            image.len()
        )));
    }
    match kind {
        NoiseKind::Gaussian { sigma } => add_gaussian(image, *sigma, rng),
        NoiseKind::Shot { scale } => add_shot(image, *scale, rng),
        NoiseKind::Impulse { prob } => add_impulse(image, *prob, rng),
        NoiseKind::GaussianBlur { kernel } => gaussian_blur(image, h, w, *kernel),
        NoiseKind::MotionBlur { length, angle } => motion_blur(image, h, w, *length, *angle),
        NoiseKind::Severe => {
            let kernel = 1 + rng.next_below(100) as usize;
            gaussian_blur(image, h, w, kernel);
            add_gaussian(image, SEVERE_SIGMA, rng);
        }
        NoiseKind::Mixed => {
            let kind = match rng.next_below(5) {
                0 => NoiseKind::Gaussian { sigma: DEFAULT_GAUSSIAN_SIGMA },
                1 => NoiseKind::Shot { scale: DEFAULT_SHOT_SCALE },
                2 => NoiseKind::Impulse { prob: DEFAULT_IMPULSE_PROB },
                3 => NoiseKind::GaussianBlur { kernel: DEFAULT_BLUR_KERNEL },
                _ => NoiseKind::MotionBlur {
                    length: DEFAULT_MOTION_LENGTH,
                    angle: rng.next_range(0.0, std::f64::consts::PI),
                },
            };
            corrupt_in_place(image, h, w, &kind, rng)?;
        }
    }
    Ok(())
}

/// Apply the corruption, returning a new buffer.
pub fn corrupt(image: &[f32], h: usize, w: usize, kind: &NoiseKind, rng: &mut RngState) -> Result<Vec<f32>> {
    let mut out = image.to_vec();
    corrupt_in_place(&mut out, h, w, kind, rng)?;
    Ok(out)
}

/// Corrupt the first `n_corrupt` agents' images of a frame; ground truth
/// and remaining agents stay untouched.
pub fn corrupt_frame(
    frame: &mut FrameSample,
    h: usize,
    w: usize,
    spec: &NoiseSpec,
    rng: &mut RngState,
) -> Result<()> {
    spec.validate(frame.agents.len())?;
    for agent in frame.agents.iter_mut().take(spec.n_corrupt) {
        corrupt_in_place(&mut agent.rgb, h, w, &spec.kind, rng)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image(h: usize, w: usize, fill: f32) -> Vec<f32> {
        vec![fill; 3 * h * w]
    }

    #[test]
    fn zero_sigma_gaussian_is_identity() {
        let img = test_image(8, 8, 0.4);
        let mut rng = RngState::new(1);
        let out = corrupt(&img, 8, 8, &NoiseKind::Gaussian { sigma: 0.0 }, &mut rng).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn impulse_probability_one_binarizes_every_value() {
        let img = test_image(8, 8, 0.5);
        let mut rng = RngState::new(2);
        let out = corrupt(&img, 8, 8, &NoiseKind::Impulse { prob: 1.0 }, &mut rng).unwrap();
        assert!(out.iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(out.iter().any(|&v| v == 0.0) && out.iter().any(|&v| v == 1.0));
    }

    #[test]
    fn gaussian_noise_statistics_on_constant_image() {
        let img = test_image(64, 64, 0.5);
        let mut rng = RngState::new(3);
        let out = corrupt(&img, 64, 64, &NoiseKind::Gaussian { sigma: 0.1 }, &mut rng).unwrap();
        let n = out.len() as f64;
        let mean = out.iter().map(|&v| v as f64).sum::<f64>() / n;
        let std = (out.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
        assert!((std - 0.1).abs() < 0.01, "std {std}");
    }

    #[test]
    fn blur_kernel_one_is_identity_and_blur_smooths() {
        let mut img = test_image(16, 16, 0.0);
        // Single bright pixel in the middle of channel 0.
        img[8 * 16 + 8] = 1.0;
        let mut rng = RngState::new(4);
        let same = corrupt(&img, 16, 16, &NoiseKind::GaussianBlur { kernel: 1 }, &mut rng).unwrap();
        assert_eq!(same, img);
        let blurred =
            corrupt(&img, 16, 16, &NoiseKind::GaussianBlur { kernel: 7 }, &mut rng).unwrap();
        assert!(blurred[8 * 16 + 8] < 1.0);
        assert!(blurred[8 * 16 + 9] > 0.0);
        // Blur preserves total mass away from borders.
        let total: f32 = blurred[..256].iter().sum();
        assert!((total - 1.0).abs() < 1e-3, "mass {total}");
    }

    #[test]
    fn motion_blur_streaks_along_the_axis() {
        let mut img = test_image(16, 16, 0.0);
        img[8 * 16 + 8] = 1.0;
        let mut rng = RngState::new(5);
        let out = corrupt(
            &img,
            16,
            16,
            &NoiseKind::MotionBlur { length: 5, angle: 0.0 },
            &mut rng,
        )
        .unwrap();
        // Horizontal streak: neighbors on the row get 1/5 each.
        assert!((out[8 * 16 + 6] - 0.2).abs() < 1e-6);
        assert!((out[8 * 16 + 10] - 0.2).abs() < 1e-6);
        assert_eq!(out[7 * 16 + 8], 0.0);
    }

    #[test]
    fn shot_noise_preserves_scale_roughly() {
        let img = test_image(32, 32, 0.5);
        let mut rng = RngState::new(6);
        let out = corrupt(&img, 32, 32, &NoiseKind::Shot { scale: 50.0 }, &mut rng).unwrap();
        let mean = out.iter().map(|&v| v as f64).sum::<f64>() / out.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
        assert!(out.iter().any(|&v| v != 0.5));
    }

    #[test]
    fn corrupt_frame_touches_only_selected_agents() {
        let agent = |fill: f32| super::super::AgentSample {
            rgb: test_image(8, 8, fill),
            depth: vec![1.0; 64],
            seg: vec![0; 64],
            pose: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        };
        let mut frame = FrameSample {
            agents: vec![agent(0.3), agent(0.5), agent(0.7)],
        };
        let spec = NoiseSpec {
            kind: NoiseKind::Gaussian { sigma: 0.2 },
            n_corrupt: 2,
        };
        let mut rng = RngState::new(7);
        corrupt_frame(&mut frame, 8, 8, &spec, &mut rng).unwrap();
        assert!(frame.agents[0].rgb.iter().any(|&v| v != 0.3));
        assert!(frame.agents[1].rgb.iter().any(|&v| v != 0.5));
        assert!(frame.agents[2].rgb.iter().all(|&v| v == 0.7));
        assert!(frame.agents[0].depth.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn severe_protocol_degrades_structure() {
        let mut img = test_image(32, 32, 0.0);
        for x in 0..32 {
            img[16 * 32 + x] = 1.0; // bright line
        }
        let mut rng = RngState::new(8);
        let out = corrupt(&img, 32, 32, &NoiseKind::Severe, &mut rng).unwrap();
        assert!(out.iter().zip(&img).any(|(a, b)| a != b));
    }

    #[test]
    fn unknown_kind_string_is_a_config_error() {
        let err = "salt_and_vinegar".parse::<NoiseKind>().unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(
            "gaussian:0.25".parse::<NoiseKind>().unwrap(),
            NoiseKind::Gaussian { sigma: 0.25 }
        );
    }
}
