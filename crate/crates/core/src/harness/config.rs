//! Training configuration and its line-oriented `key = value` file format.
//! `#` starts a comment; command-line flags override file values.

use std::path::PathBuf;

use crate::datagen::NoiseKind;
use crate::error::{Error, Result};
use crate::model::{TaskKind, Variant};
use crate::optim::adam_defaults;
use crate::tasks::LossConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub variant: Variant,
    pub task: TaskKind,
    pub levels: usize,
    pub channels: usize,
    pub heads: usize,
    pub epochs: usize,
    /// Frames accumulated into one optimizer step.
    pub batch_frames: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub loss: LossConfig,
    pub seed: u64,
    /// Per training step the number of corrupted cameras is drawn
    /// uniformly from 0..=noisy_train, covering every noisy-camera count.
    pub noisy_train: usize,
    /// Evaluation reports settings 0..=noisy_eval.
    pub noisy_eval: usize,
    /// Communication distance threshold; the default exceeds any formation,
    /// giving a complete graph.
    pub comm_threshold: f64,
    pub share_level_params: bool,
    /// Evaluate every k-th epoch (the final epoch always evaluates).
    pub eval_every: usize,
    /// Override the dataset manifest's noise protocol.
    pub noise: Option<NoiseKind>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dataset: PathBuf::new(),
            out_dir: PathBuf::from("out"),
            variant: Variant::Mp,
            task: TaskKind::Depth,
            levels: 1,
            channels: 16,
            heads: 4,
            epochs: 10,
            batch_frames: 1,
            lr: adam_defaults::LR,
            beta1: adam_defaults::BETA1,
            beta2: adam_defaults::BETA2,
            adam_eps: adam_defaults::EPS,
            loss: LossConfig::default(),
            seed: 7,
            noisy_train: 0,
            noisy_eval: 2,
            comm_threshold: 1e9,
            share_level_params: true,
            eval_every: 1,
            noise: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dataset.as_os_str().is_empty() {
            return Err(Error::Config("dataset path not set".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_frames == 0 {
            return Err(Error::Config("batch_frames must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if self.comm_threshold <= 0.0 {
            return Err(Error::Config("comm_threshold must be positive".into()));
        }
        self.loss.validate()?;
        Ok(())
    }

    /// Apply one `key = value` assignment.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let uint = |v: &str, what: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad {what} value {v}")))
        };
        let float = |v: &str, what: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad {what} value {v}")))
        };
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "variant" => self.variant = value.parse()?,
            "task" => self.task = value.parse()?,
            "levels" => self.levels = uint(value, "levels")?,
            "channels" => self.channels = uint(value, "channels")?,
            "heads" => self.heads = uint(value, "heads")?,
            "epochs" => self.epochs = uint(value, "epochs")?,
            "batch_frames" => self.batch_frames = uint(value, "batch_frames")?,
            "lr" => self.lr = float(value, "lr")?,
            "beta1" => self.beta1 = float(value, "beta1")?,
            "beta2" => self.beta2 = float(value, "beta2")?,
            "adam_eps" => self.adam_eps = float(value, "adam_eps")?,
            "loss_alpha" => self.loss.alpha_smooth = float(value, "loss_alpha")?,
            "loss_beta" => self.loss.beta = float(value, "loss_beta")?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad seed value {value}")))?
            }
            "noisy_train" => self.noisy_train = uint(value, "noisy_train")?,
            "noisy_eval" => self.noisy_eval = uint(value, "noisy_eval")?,
            "comm_threshold" => self.comm_threshold = float(value, "comm_threshold")?,
            "share_level_params" => {
                self.share_level_params = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    other => {
                        return Err(Error::Config(format!(
                            "bad share_level_params value {other}"
                        )))
                    }
                }
            }
            "eval_every" => self.eval_every = uint(value, "eval_every")?,
            "noise" => {
                self.noise = if value == "dataset" {
                    None
                } else {
                    Some(value.parse()?)
                }
            }
            other => return Err(Error::Config(format!("unknown config key {other}"))),
        }
        Ok(())
    }

    /// Parse a config file body over the defaults.
    pub fn from_str_over(text: &str, base: TrainConfig) -> Result<TrainConfig> {
        let mut cfg = base;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            cfg.apply(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Serialize every field as `key = value` lines (the checkpoint
    /// sidecar format).
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("# training configuration\n");
        s.push_str(&format!("dataset = {}\n", self.dataset.display()));
        s.push_str(&format!("out_dir = {}\n", self.out_dir.display()));
        s.push_str(&format!("variant = {}\n", self.variant));
        s.push_str(&format!("task = {}\n", self.task));
        s.push_str(&format!("levels = {}\n", self.levels));
        s.push_str(&format!("channels = {}\n", self.channels));
        s.push_str(&format!("heads = {}\n", self.heads));
        s.push_str(&format!("epochs = {}\n", self.epochs));
        s.push_str(&format!("batch_frames = {}\n", self.batch_frames));
        s.push_str(&format!("lr = {}\n", self.lr));
        s.push_str(&format!("beta1 = {}\n", self.beta1));
        s.push_str(&format!("beta2 = {}\n", self.beta2));
        s.push_str(&format!("adam_eps = {}\n", self.adam_eps));
        s.push_str(&format!("loss_alpha = {}\n", self.loss.alpha_smooth));
        s.push_str(&format!("loss_beta = {}\n", self.loss.beta));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("noisy_train = {}\n", self.noisy_train));
        s.push_str(&format!("noisy_eval = {}\n", self.noisy_eval));
        s.push_str(&format!("comm_threshold = {}\n", self.comm_threshold));
        s.push_str(&format!("share_level_params = {}\n", self.share_level_params));
        s.push_str(&format!("eval_every = {}\n", self.eval_every));
        match &self.noise {
            Some(kind) => s.push_str(&format!("noise = {kind}\n")),
            None => s.push_str("noise = dataset\n"),
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_roundtrip_preserves_every_field() {
        let mut cfg = TrainConfig::default();
        cfg.dataset = PathBuf::from("d.mrcp");
        cfg.variant = Variant::MpPose;
        cfg.task = TaskKind::Segmentation;
        cfg.levels = 2;
        cfg.channels = 8;
        cfg.epochs = 3;
        cfg.lr = 5e-4;
        cfg.loss.alpha_smooth = 0.01;
        cfg.noisy_train = 2;
        cfg.noise = Some(NoiseKind::Gaussian { sigma: 0.2 });
        cfg.share_level_params = false;
        let text = cfg.render();
        let parsed = TrainConfig::from_str_over(&text, TrainConfig::default()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# comment\n\nepochs = 4   # trailing comment\n  seed=9\n";
        let cfg = TrainConfig::from_str_over(text, TrainConfig::default()).unwrap();
        assert_eq!(cfg.epochs, 4);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let err = TrainConfig::from_str_over("bogus = 1\n", TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err =
            TrainConfig::from_str_over("epochs = soon\n", TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = TrainConfig::from_str_over("epochs 4\n", TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn validation_catches_empty_dataset_and_zero_epochs() {
        let cfg = TrainConfig::default();
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.dataset = PathBuf::from("d.mrcp");
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
    }
}
