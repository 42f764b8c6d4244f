//! Effective configuration: built-in defaults, overlaid by an optional
//! flat `key = value` config file, the SENSELAB_SEED environment variable,
//! and finally command-line flags (applied by the subcommands).

use senselab::corpus::EncodeOptions;
use senselab::lstm::ModelConfig;
use senselab::wsd;
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const SEED_ENV: &str = "SENSELAB_SEED";

#[derive(Debug, Error)]
pub enum SettingsError {
    #[error("cannot read config {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{SEED_ENV}: {msg}")]
    Env { msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub lowercase: bool,
    pub max_len: usize,
    pub max_vocab: usize,
    pub min_count: u64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lp_k: usize,
    /// `None` means "estimate from the data" (median pairwise distance).
    pub lp_sigma: Option<f64>,
    pub lp_tol: f64,
    pub lp_max_iter: usize,
}

impl Default for Settings {
    fn default() -> Settings {
        let model = ModelConfig::default();
        Settings {
            seed: model.seed,
            lowercase: true,
            max_len: model.max_len,
            max_vocab: model.vocab_size,
            min_count: 1,
            embed_dim: model.embed_dim,
            hidden_dim: model.hidden_dim,
            learning_rate: model.learning_rate,
            clip_norm: model.clip_norm,
            batch_size: model.batch_size,
            epochs: model.epochs,
            lp_k: wsd::DEFAULT_K,
            lp_sigma: None,
            lp_tol: wsd::DEFAULT_TOL,
            lp_max_iter: wsd::DEFAULT_MAX_ITER,
        }
    }
}

impl Settings {
    /// Defaults, then the config file (if any), then the seed environment
    /// variable. Flag overrides happen at the subcommand.
    pub fn resolve(config: Option<&Path>) -> Result<Settings, SettingsError> {
        let mut settings = Settings::default();
        if let Some(path) = config {
            let text = fs::read_to_string(path).map_err(|e| SettingsError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            settings.apply_config(&text)?;
        }
        if let Ok(value) = std::env::var(SEED_ENV) {
            settings.seed = value.trim().parse().map_err(|_| SettingsError::Env {
                msg: format!("bad seed \"{value}\""),
            })?;
        }
        Ok(settings)
    }

    pub fn apply_config(&mut self, text: &str) -> Result<(), SettingsError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| SettingsError::Parse { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got \"{line}\"")))?;
            let (key, value) = (key.trim(), value.trim());
            fn parse<T: std::str::FromStr>(
                key: &str,
                value: &str,
                err: &impl Fn(String) -> SettingsError,
            ) -> Result<T, SettingsError> {
                value
                    .parse()
                    .map_err(|_| err(format!("bad value \"{value}\" for {key}")))
            }
            match key {
                "seed" => self.seed = parse(key, value, &err)?,
                "lowercase" => self.lowercase = parse(key, value, &err)?,
                "max_len" => self.max_len = parse(key, value, &err)?,
                "max_vocab" => self.max_vocab = parse(key, value, &err)?,
                "min_count" => self.min_count = parse(key, value, &err)?,
                "embed_dim" => self.embed_dim = parse(key, value, &err)?,
                "hidden_dim" => self.hidden_dim = parse(key, value, &err)?,
                "learning_rate" => self.learning_rate = parse(key, value, &err)?,
                "clip_norm" => self.clip_norm = parse(key, value, &err)?,
                "batch_size" => self.batch_size = parse(key, value, &err)?,
                "epochs" => self.epochs = parse(key, value, &err)?,
                "lp_k" => self.lp_k = parse(key, value, &err)?,
                "lp_sigma" => {
                    self.lp_sigma = if value == "median" {
                        None
                    } else {
                        Some(parse(key, value, &err)?)
                    }
                }
                "lp_tol" => self.lp_tol = parse(key, value, &err)?,
                "lp_max_iter" => self.lp_max_iter = parse(key, value, &err)?,
                _ => return Err(err(format!("unknown key \"{key}\""))),
            }
        }
        Ok(())
    }

    pub fn encode_options(&self) -> EncodeOptions {
        EncodeOptions {
            lowercase: self.lowercase,
            max_len: self.max_len,
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            learning_rate: self.learning_rate,
            clip_norm: self.clip_norm,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            max_len: self.max_len,
        }
    }
}
