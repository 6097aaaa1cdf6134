//! Run configuration: defaults, `key = value` files and flag overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lcnn::augment::AugmentConfig;
use lcnn::data::SplitSpec;
use lcnn::model::{ModelSpec, Precision, TrainConfig, DEFAULT_ETA_SWEEP};
use lcnn::optim::OptimizerKind;

use crate::CliError;

/// Fully resolved settings of one run. Every field has a default; a config
/// file overrides the defaults and command-line flags override the file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub seed: u64,
    pub augment: bool,
    /// Training-set growth factor applied after class balancing.
    pub multiplier: usize,
    pub train_ratio: f64,
    pub precision: Precision,
    pub conv2_kernels: usize,
    pub threads: usize,
    pub sweep: Vec<f64>,
    pub aug: AugmentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: None,
            weights: None,
            epochs: 50,
            lr: 0.005,
            optimizer: OptimizerKind::Adam,
            batch_size: 32,
            seed: 42,
            augment: false,
            multiplier: 1,
            train_ratio: 0.7,
            precision: Precision::F32,
            conv2_kernels: 64,
            threads: 1,
            sweep: DEFAULT_ETA_SWEEP.to_vec(),
            aug: AugmentConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::input(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::input(format!("`{key}` expects on/off, got `{value}`"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(|v| parse::<f64>(key, v.trim()))
        .collect()
}

fn parse_pair(key: &str, value: &str) -> Result<[f64; 2], CliError> {
    match parse_list(key, value)?.as_slice() {
        &[a, b] => Ok([a, b]),
        _ => Err(CliError::input(format!("`{key}` expects two comma-separated numbers"))),
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "data" => self.data = Some(value.into()),
            "out" => self.out = Some(value.into()),
            "weights" => self.weights = Some(value.into()),
            "epochs" => self.epochs = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "optimizer" => self.optimizer = value.parse().map_err(|e| CliError::input(format!("{e}")))?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "augment" => self.augment = parse_bool(key, value)?,
            "multiplier" => self.multiplier = parse(key, value)?,
            "train_ratio" => self.train_ratio = parse(key, value)?,
            "precision" => self.precision = value.parse().map_err(|e| CliError::input(format!("{e}")))?,
            "conv2_kernels" => self.conv2_kernels = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "sweep" => self.sweep = parse_list(key, value)?,
            "aug_blur_sigma" => self.aug.blur_sigma_range = parse_pair(key, value)?,
            "aug_brightness" => self.aug.brightness_delta = parse(key, value)?,
            "aug_contrast" => self.aug.contrast_range = parse_pair(key, value)?,
            "aug_rotation" => self.aug.rotation_max_deg = parse(key, value)?,
            "aug_translate" => self.aug.translate_max_frac = parse(key, value)?,
            "aug_zoom" => self.aug.zoom_range = parse_pair(key, value)?,
            "aug_crop_threshold" => self.aug.crop_threshold = parse(key, value)?,
            _ => return Err(CliError::input(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Parse a config file: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::input(format!("config line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Every setting in config-file syntax; feeding it back reproduces `self`.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        for (key, value) in [("data", path(&self.data)), ("out", path(&self.out)), ("weights", path(&self.weights))] {
            if let Some(v) = value {
                writeln!(s, "{key} = {v}").unwrap();
            }
        }
        let a = &self.aug;
        let rows: Vec<(&str, String)> = vec![
            ("epochs", self.epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("optimizer", self.optimizer.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("augment", if self.augment { "on" } else { "off" }.into()),
            ("multiplier", self.multiplier.to_string()),
            ("train_ratio", self.train_ratio.to_string()),
            ("precision", self.precision.to_string()),
            ("conv2_kernels", self.conv2_kernels.to_string()),
            ("threads", self.threads.to_string()),
            ("sweep", join(&self.sweep)),
            ("aug_blur_sigma", join(&a.blur_sigma_range)),
            ("aug_brightness", a.brightness_delta.to_string()),
            ("aug_contrast", join(&a.contrast_range)),
            ("aug_rotation", a.rotation_max_deg.to_string()),
            ("aug_translate", a.translate_max_frac.to_string()),
            ("aug_zoom", join(&a.zoom_range)),
            ("aug_crop_threshold", a.crop_threshold.to_string()),
        ];
        for (k, v) in rows {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            eta: self.lr,
            optimizer: self.optimizer,
            batch_size: self.batch_size,
            seed: self.seed,
            threads: self.threads,
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_ratio: self.train_ratio,
            seed: self.seed,
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec::standard(self.conv2_kernels)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: lcnn::Error| CliError::input(e.to_string());
        self.train_config().validate().map_err(bad)?;
        self.aug.validate().map_err(bad)?;
        if self.multiplier == 0 {
            return Err(CliError::input("multiplier must be at least 1"));
        }
        if self.sweep.is_empty() {
            return Err(CliError::input("sweep list must not be empty"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("epochs = 3\nlr=0.01 # faster\naugment = on\naug_zoom = 0.8, 1.2\ndata = /tmp/x\n")
            .unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.aug.zoom_range, [0.8, 1.2]);
        let mut back = RunConfig::default();
        back.apply_text(&cfg.snapshot()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_text("colour = blue").is_err());
        assert!(cfg.apply_text("epochs = many").is_err());
        assert!(cfg.apply_text("just words").is_err());
        assert!(cfg.apply_text("augment = maybe").is_err());
    }
}
