//! `RunConfig`: one TOML file binding data, model and training settings.

use std::path::{Path, PathBuf};

use pcnic::kitti::{DepthSource, DEFAULT_D_MAX};
use pcnic::net::{CodecConfig, TrainConfig, PAPER_LAMBDAS};
use pcnic::stats::SIGMA_MIN;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// KITTI object split with `image_2/`, `velodyne/` and `calib/`.
    pub root: Option<PathBuf>,
    pub image_dir: String,
    pub velodyne_dir: String,
    pub calib_dir: String,
    /// Directory of projected `.pcnu` samples; replaces `root` when set.
    pub pcnu_dir: Option<PathBuf>,
    /// Evaluation data; defaults to the training data.
    pub test_root: Option<PathBuf>,
    pub test_pcnu_dir: Option<PathBuf>,
    pub max_train: usize,
    /// First frame index of the evaluation subset.
    pub test_offset: usize,
    pub max_test: usize,
    pub depth_source: DepthSource,
    pub d_max: f64,
    /// `[height, width]` of the crop taken from every frame.
    pub crop: Option<[usize; 2]>,
    /// Crop for the evaluation split; defaults to `crop`.
    pub test_crop: Option<[usize; 2]>,
    /// Crops never start above this row.
    pub crop_min_top: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: None,
            image_dir: "image_2".into(),
            velodyne_dir: "velodyne".into(),
            calib_dir: "calib".into(),
            pcnu_dir: None,
            test_root: None,
            test_pcnu_dir: None,
            max_train: 7481,
            test_offset: 0,
            max_test: 7518,
            depth_source: DepthSource::default(),
            d_max: DEFAULT_D_MAX,
            crop: Some([256, 256]),
            test_crop: None,
            crop_min_top: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    pub m: usize,
    pub depth: usize,
    pub context: bool,
    pub attention: bool,
    pub point_branch: bool,
    pub sigma_min: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { n: 192, m: 288, depth: 4, context: false, attention: true, point_branch: true, sigma_min: SIGMA_MIN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lambdas: Vec<f64>,
    pub lr: f64,
    pub decay: f64,
    pub lr_floor: f64,
    /// Epochs without improvement before the learning rate decays.
    pub patience: usize,
    pub min_improvement: f64,
    pub epochs: u64,
    /// Optional cap on optimizer steps.
    pub max_steps: Option<u64>,
    pub batch_size: usize,
    /// Checkpoint every this many epochs (and always at the end).
    pub checkpoint_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lambdas: PAPER_LAMBDAS.to_vec(),
            lr: t.lr,
            decay: t.decay,
            lr_floor: t.lr_floor,
            patience: t.patience,
            min_improvement: t.min_improvement,
            epochs: 100,
            max_steps: None,
            batch_size: t.batch_size,
            checkpoint_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        fix(&mut cfg.data.root);
        fix(&mut cfg.data.pcnu_dir);
        fix(&mut cfg.data.test_root);
        fix(&mut cfg.data.test_pcnu_dir);
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks the invariants that do not need the data.
    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.train.lambdas.is_empty() {
            return usage("train.lambdas must not be empty".into());
        }
        if let Some(l) = self.train.lambdas.iter().find(|l| !(**l > 0.0)) {
            return usage(format!("λ must be positive, got {l}"));
        }
        if !(self.train.lr >= 0.0) || !(self.train.decay > 0.0 && self.train.decay <= 1.0) {
            return usage(format!("invalid learning-rate schedule: lr {}, decay {}", self.train.lr, self.train.decay));
        }
        if self.train.batch_size == 0 {
            return usage("train.batch_size must be positive".into());
        }
        if self.data.root.is_none() && self.data.pcnu_dir.is_none() {
            return usage("set data.root or data.pcnu_dir".into());
        }
        for p in [&self.data.root, &self.data.pcnu_dir, &self.data.test_root, &self.data.test_pcnu_dir].into_iter().flatten() {
            if !p.exists() {
                return usage(format!("data path {} does not exist", p.display()));
            }
        }
        self.codec_config(self.train.lambdas[0]).validate()?;
        Ok(())
    }

    pub fn codec_config(&self, lambda: f64) -> CodecConfig {
        let m = &self.model;
        CodecConfig {
            n: m.n,
            m: m.m,
            depth: m.depth,
            context: m.context,
            attention: m.attention,
            lambda,
            sigma_min: m.sigma_min,
            d_max: self.data.d_max,
            point_branch: m.point_branch,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            batch_size: t.batch_size,
            seed: self.seed,
            decay: t.decay,
            lr_floor: t.lr_floor,
            patience: t.patience,
            min_improvement: t.min_improvement,
        }
    }
}

/// Model variants of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Variant {
    /// Fusion with channel attention (the full model).
    Full,
    /// Fusion conv without the attention path.
    MmfftNoAttn,
    /// Depth branch removed: depth channel zeroed and its latent zero.
    ImageOnly,
}

impl Variant {
    pub fn slug(self) -> &'static str {
        match self {
            Self::Full => "pca-nic",
            Self::MmfftNoAttn => "mmfft-no-attn",
            Self::ImageOnly => "image-only",
        }
    }

    /// Row label in reports.
    pub fn label(self) -> &'static str {
        match self {
            Self::Full => "PCA-NIC",
            Self::MmfftNoAttn => "PCA-NIC_no_attn",
            Self::ImageOnly => "image-only",
        }
    }

    pub fn apply(self, cfg: &mut RunConfig) {
        match self {
            Self::Full => {}
            Self::MmfftNoAttn => cfg.model.attention = false,
            Self::ImageOnly => cfg.model.point_branch = false,
        }
    }
}

pub fn lambda_dir(root: &Path, variant: Variant, lambda: f64) -> PathBuf {
    root.join(variant.slug()).join(format!("lambda_{lambda}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_paper_schedule() {
        let c = RunConfig::default();
        assert_eq!(c.train.lambdas, vec![0.0016, 0.0032, 0.0075, 0.015, 0.03, 0.045]);
        assert_eq!((c.train.lr, c.train.lr_floor, c.train.decay), (1e-4, 1e-8, 0.1));
        assert_eq!((c.model.n, c.model.m), (192, 288));
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let c = RunConfig::default();
        assert_eq!(toml::from_str::<RunConfig>(&c.to_toml()).unwrap(), c);
        assert!(toml::from_str::<RunConfig>("[model]\nchannels = 3\n").is_err());
    }

    #[test]
    fn empty_lambda_list_is_a_usage_error() {
        let mut c = RunConfig::default();
        c.data.pcnu_dir = Some(".".into());
        c.train.lambdas.clear();
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);
    }
}
