//! Training hyper-parameters and their `key=value` text form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::feathering::DEFAULT_HIDDEN;
use crate::model::ModelParams;
use crate::segnet::{LdnConfig, DENSE_LAYERS};

/// Geometric and photometric augmentation ranges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    /// Probability of a horizontal mirror.
    pub flip_prob: f64,
    /// Uniform zoom range.
    pub scale: (f64, f64),
    /// Uniform rotation range in degrees.
    pub rotation_deg: (f64, f64),
    /// Probability of blurring the image.
    pub blur_prob: f64,
    /// Blur σ is drawn from `[0, blur_sigma_max]` pixels.
    pub blur_sigma_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip_prob: 0.5,
            scale: (0.75, 1.5),
            rotation_deg: (-30.0, 30.0),
            blur_prob: 0.5,
            blur_sigma_max: 1.5,
        }
    }
}

impl AugmentConfig {
    /// No augmentation: samples are only resized to the training size.
    pub fn none() -> Self {
        AugmentConfig {
            flip_prob: 0.0,
            scale: (1.0, 1.0),
            rotation_deg: (0.0, 0.0),
            blur_prob: 0.0,
            blur_sigma_max: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.flip_prob == 0.0
            && self.scale == (1.0, 1.0)
            && self.rotation_deg == (0.0, 0.0)
            && (self.blur_prob == 0.0 || self.blur_sigma_max == 0.0)
    }
}

/// Everything the three-stage trainer needs.
///
/// Iteration counts are base values; the trainer runs
/// `round(base · iter_scale)` iterations of each phase.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iter_scale: f64,
    /// Segmentation only, two learning-rate phases.
    pub stage1_lr: [f64; 2],
    pub stage1_iters: [usize; 2],
    /// Feathering only, two learning-rate phases.
    pub stage2_lr: [f64; 2],
    pub stage2_iters: [usize; 2],
    /// Joint fine-tuning.
    pub stage3_lr: f64,
    pub stage3_iters: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub charbonnier_eps: f64,
    pub augment: AugmentConfig,
    /// `(h, w)` every training sample is brought to.
    pub train_size: (usize, usize),
    pub ldn: LdnConfig,
    pub feather_hidden: usize,
    /// Coefficient averaging radius of the feathering block.
    pub feather_smooth: usize,
    /// Loss is recorded every `log_interval` iterations (and at each
    /// stage's last iteration).
    pub log_interval: usize,
    /// Validation runs every `val_interval` iterations (0 = only at the end
    /// of each stage).
    pub val_interval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            iter_scale: 0.025,
            stage1_lr: [1e-3, 1e-4],
            stage1_iters: [10_000, 10_000],
            stage2_lr: [1e-6, 1e-7],
            stage2_iters: [10_000, 10_000],
            stage3_lr: 1e-7,
            stage3_iters: 20_000,
            momentum: 0.99,
            weight_decay: 5e-4,
            charbonnier_eps: 1e-3,
            augment: AugmentConfig::default(),
            train_size: (128, 128),
            ldn: LdnConfig::default(),
            feather_hidden: DEFAULT_HIDDEN,
            feather_smooth: 0,
            log_interval: 10,
            val_interval: 0,
            seed: 0,
        }
    }
}

/// Effective iteration count of one phase.
pub fn scaled(base: usize, scale: f64) -> usize {
    (base as f64 * scale).round() as usize
}

impl TrainConfig {
    /// Schedule tuned for small synthetic corpora with per-pixel mean
    /// losses. Segmentation gets twice the default iterations and both
    /// stages run at rates where mean-normalised gradients make progress.
    /// Momentum 0.9 keeps those rates stable. Augmentation is off because
    /// the synthetic generator already randomises pose and colour. A wide
    /// Charbonnier eps keeps the feathering loss near quadratic so the
    /// blending weights learn soft boundaries instead of snapping to the
    /// mask. 2000 iterations in total at the default scale.
    pub fn desk() -> Self {
        TrainConfig {
            stage1_lr: [1e-1, 1e-2],
            stage1_iters: [20_000, 20_000],
            stage2_lr: [3e-1, 3e-2],
            stage3_lr: 1e-2,
            momentum: 0.9,
            charbonnier_eps: 1.0,
            augment: AugmentConfig::none(),
            ..TrainConfig::default()
        }
    }

    pub fn stage_iters(&self) -> [usize; 5] {
        let s = |b| scaled(b, self.iter_scale);
        [
            s(self.stage1_iters[0]),
            s(self.stage1_iters[1]),
            s(self.stage2_iters[0]),
            s(self.stage2_iters[1]),
            s(self.stage3_iters),
        ]
    }

    /// Fresh parameters for this architecture, seeded by `seed`.
    pub fn init_params(&self) -> Result<ModelParams> {
        let mut p = ModelParams::init(&self.ldn, self.feather_hidden, self.seed)?;
        p.feather.smooth = self.feather_smooth;
        Ok(p)
    }

    pub fn total_iters(&self) -> usize {
        self.stage_iters().iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        let rates = [self.stage1_lr[0], self.stage1_lr[1], self.stage2_lr[0], self.stage2_lr[1], self.stage3_lr];
        if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return bad(format!("learning rates must be positive, got {r}"));
        }
        if !(self.iter_scale >= 0.0 && self.iter_scale.is_finite()) {
            return bad(format!("iter_scale must be non-negative, got {}", self.iter_scale));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(self.charbonnier_eps > 0.0) {
            return bad(format!("charbonnier_eps must be positive, got {}", self.charbonnier_eps));
        }
        let a = &self.augment;
        if !(0.0..=1.0).contains(&a.flip_prob) || !(0.0..=1.0).contains(&a.blur_prob) {
            return bad("augmentation probabilities must lie in [0, 1]".into());
        }
        if !(a.scale.0 > 0.0 && a.scale.0 <= a.scale.1) || a.rotation_deg.0 > a.rotation_deg.1 || a.blur_sigma_max < 0.0 {
            return bad("augmentation ranges must be ordered and positive".into());
        }
        let (h, w) = self.train_size;
        if h == 0 || w == 0 || h % 4 != 0 || w % 4 != 0 {
            return bad(format!("train_size {h}x{w} must be a positive multiple of 4"));
        }
        if self.feather_hidden == 0 || self.log_interval == 0 {
            return bad("feather_hidden and log_interval must be at least 1".into());
        }
        self.ldn.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `key=value` lines on top of [`TrainConfig::default`]
    /// (or on top of [`TrainConfig::desk`] when the first key is
    /// `preset=desk`). `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: &str| Error::Config(format!("line {}: {m}: {raw:?}", lineno + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key=value"))?;
            let (k, v) = (k.trim(), v.trim());
            let f = |v: &str| v.trim().parse::<f64>().map_err(|_| err("expected a number"));
            let u = |v: &str| v.trim().parse::<usize>().map_err(|_| err("expected an integer"));
            let pair = |v: &str| -> Result<(f64, f64)> {
                let (a, b) = v.split_once(',').ok_or_else(|| err("expected two comma-separated values"))?;
                Ok((f(a)?, f(b)?))
            };
            let upair = |v: &str| -> Result<(usize, usize)> {
                let (a, b) = v.split_once(',').ok_or_else(|| err("expected two comma-separated values"))?;
                Ok((u(a)?, u(b)?))
            };
            match k {
                "preset" => match v {
                    "default" => cfg = TrainConfig { seed: cfg.seed, ..TrainConfig::default() },
                    "desk" => cfg = TrainConfig { seed: cfg.seed, ..TrainConfig::desk() },
                    _ => return Err(err("unknown preset (default|desk)")),
                },
                "batch_size" => cfg.batch_size = u(v)?,
                "iter_scale" => cfg.iter_scale = f(v)?,
                "stage1_lr" => cfg.stage1_lr = pair(v).map(|(a, b)| [a, b])?,
                "stage1_iters" => cfg.stage1_iters = upair(v).map(|(a, b)| [a, b])?,
                "stage2_lr" => cfg.stage2_lr = pair(v).map(|(a, b)| [a, b])?,
                "stage2_iters" => cfg.stage2_iters = upair(v).map(|(a, b)| [a, b])?,
                "stage3_lr" => cfg.stage3_lr = f(v)?,
                "stage3_iters" => cfg.stage3_iters = u(v)?,
                "momentum" => cfg.momentum = f(v)?,
                "weight_decay" => cfg.weight_decay = f(v)?,
                "charbonnier_eps" => cfg.charbonnier_eps = f(v)?,
                "flip_prob" => cfg.augment.flip_prob = f(v)?,
                "scale_range" => cfg.augment.scale = pair(v)?,
                "rotation_deg" => cfg.augment.rotation_deg = pair(v)?,
                "blur_prob" => cfg.augment.blur_prob = f(v)?,
                "blur_sigma_max" => cfg.augment.blur_sigma_max = f(v)?,
                "augment" => match v {
                    "on" => cfg.augment = AugmentConfig::default(),
                    "off" => cfg.augment = AugmentConfig::none(),
                    _ => return Err(err("expected on|off")),
                },
                "train_size" => cfg.train_size = upair(v)?,
                "initial_channels" => cfg.ldn.initial_channels = u(v)?,
                "growth" => cfg.ldn.growth = u(v)?,
                "dilations" => {
                    let d: Vec<usize> = v.split(',').map(u).collect::<Result<_>>()?;
                    cfg.ldn.dilations = d.try_into().map_err(|_| err("expected four dilation rates"))?;
                }
                "feather_hidden" => cfg.feather_hidden = u(v)?,
                "feather_smooth" => cfg.feather_smooth = u(v)?,
                "log_interval" => cfg.log_interval = u(v)?,
                "val_interval" => cfg.val_interval = u(v)?,
                "seed" => cfg.seed = v.parse().map_err(|_| err("expected an integer"))?,
                _ => return Err(err("unknown key")),
            }
        }
        cfg.ldn.input_size = cfg.train_size;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Text form accepted by [`TrainConfig::parse`].
    pub fn to_text(&self) -> String {
        let a = &self.augment;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        kv("batch_size", self.batch_size.to_string());
        kv("iter_scale", self.iter_scale.to_string());
        kv("stage1_lr", format!("{},{}", self.stage1_lr[0], self.stage1_lr[1]));
        kv("stage1_iters", format!("{},{}", self.stage1_iters[0], self.stage1_iters[1]));
        kv("stage2_lr", format!("{},{}", self.stage2_lr[0], self.stage2_lr[1]));
        kv("stage2_iters", format!("{},{}", self.stage2_iters[0], self.stage2_iters[1]));
        kv("stage3_lr", self.stage3_lr.to_string());
        kv("stage3_iters", self.stage3_iters.to_string());
        kv("momentum", self.momentum.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("charbonnier_eps", self.charbonnier_eps.to_string());
        kv("flip_prob", a.flip_prob.to_string());
        kv("scale_range", format!("{},{}", a.scale.0, a.scale.1));
        kv("rotation_deg", format!("{},{}", a.rotation_deg.0, a.rotation_deg.1));
        kv("blur_prob", a.blur_prob.to_string());
        kv("blur_sigma_max", a.blur_sigma_max.to_string());
        kv("train_size", format!("{},{}", self.train_size.0, self.train_size.1));
        kv("initial_channels", self.ldn.initial_channels.to_string());
        kv("growth", self.ldn.growth.to_string());
        kv(
            "dilations",
            self.ldn.dilations.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
        );
        kv("feather_hidden", self.feather_hidden.to_string());
        kv("feather_smooth", self.feather_smooth.to_string());
        kv("log_interval", self.log_interval.to_string());
        kv("val_interval", self.val_interval.to_string());
        kv("seed", self.seed.to_string());
        debug_assert_eq!(self.ldn.dilations.len(), DENSE_LAYERS);
        s
    }
}
