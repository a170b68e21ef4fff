//! Flat `key = value` run configuration.
//!
//! Precedence, lowest first: built-in defaults, config file, the
//! `S2SA_SEED` environment variable, command-line `--set key=value` flags.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{SplitSpec, DEFAULT_LENGTH_CAP};
use crate::decoding::{BeamConfig, ContextStrategy, DEFAULT_LAMBDA};
use crate::error::{Error, Result};
use crate::model::{ModelDims, TrainConfig, DEFAULT_INIT_SCALE};
use crate::vocab::DEFAULT_CAPACITY;

pub const SEED_ENV: &str = "S2SA_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub vocab_capacity: usize,
    pub length_cap: usize,
    pub train_ratio: f64,
    pub test_ratio: f64,
    pub valid_ratio: f64,
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub init_scale: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub max_epochs: usize,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
    /// 0 disables clipping.
    pub clip_norm: f64,
    /// Stop training once the selection loss drops below this; 0 = off.
    pub target_loss: f64,
    pub beam_width: usize,
    pub max_len: usize,
    pub length_normalize: bool,
    pub strategy: ContextStrategy,
    pub lambda: f64,
    /// Decoding threads; 0 lets the pool decide.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let split = SplitSpec::default();
        let beam = BeamConfig::default();
        RunConfig {
            seed: 0,
            vocab_capacity: DEFAULT_CAPACITY,
            length_cap: DEFAULT_LENGTH_CAP,
            train_ratio: split.train_ratio,
            test_ratio: split.test_ratio,
            valid_ratio: split.valid_ratio,
            emb_dim: 64,
            hidden_dim: 64,
            init_scale: DEFAULT_INIT_SCALE,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            dropout: train.dropout_rate,
            max_epochs: train.max_epochs,
            adadelta_rho: train.adadelta_rho,
            adadelta_eps: train.adadelta_eps,
            clip_norm: 0.0,
            target_loss: 0.0,
            beam_width: beam.beam_width,
            max_len: beam.max_len,
            length_normalize: beam.length_normalize,
            strategy: ContextStrategy::StandardSoft,
            lambda: DEFAULT_LAMBDA,
            workers: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

impl RunConfig {
    pub const KEYS: [&'static str; 23] = [
        "seed",
        "vocab_capacity",
        "length_cap",
        "train_ratio",
        "test_ratio",
        "valid_ratio",
        "emb_dim",
        "hidden_dim",
        "init_scale",
        "learning_rate",
        "batch_size",
        "dropout",
        "max_epochs",
        "adadelta_rho",
        "adadelta_eps",
        "clip_norm",
        "target_loss",
        "beam_width",
        "max_len",
        "length_normalize",
        "strategy",
        "lambda",
        "workers",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "vocab_capacity" => self.vocab_capacity = parse(key, v)?,
            "length_cap" => self.length_cap = parse(key, v)?,
            "train_ratio" => self.train_ratio = parse(key, v)?,
            "test_ratio" => self.test_ratio = parse(key, v)?,
            "valid_ratio" => self.valid_ratio = parse(key, v)?,
            "emb_dim" => self.emb_dim = parse(key, v)?,
            "hidden_dim" => self.hidden_dim = parse(key, v)?,
            "init_scale" => self.init_scale = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "max_epochs" => self.max_epochs = parse(key, v)?,
            "adadelta_rho" => self.adadelta_rho = parse(key, v)?,
            "adadelta_eps" => self.adadelta_eps = parse(key, v)?,
            "clip_norm" => self.clip_norm = parse(key, v)?,
            "target_loss" => self.target_loss = parse(key, v)?,
            "beam_width" => self.beam_width = parse(key, v)?,
            "max_len" => self.max_len = parse(key, v)?,
            "length_normalize" => self.length_normalize = parse(key, v)?,
            "strategy" => self.strategy = v.parse()?,
            "lambda" => self.lambda = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Apply a `key=value` assignment as given on the command line.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
        self.set(k, v)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_text(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.set("seed", &v)
                .map_err(|e| Error::Config(format!("{SEED_ENV}: {e}")))?;
        }
        Ok(())
    }

    fn value(&self, key: &str) -> String {
        match key {
            "seed" => self.seed.to_string(),
            "vocab_capacity" => self.vocab_capacity.to_string(),
            "length_cap" => self.length_cap.to_string(),
            "train_ratio" => self.train_ratio.to_string(),
            "test_ratio" => self.test_ratio.to_string(),
            "valid_ratio" => self.valid_ratio.to_string(),
            "emb_dim" => self.emb_dim.to_string(),
            "hidden_dim" => self.hidden_dim.to_string(),
            "init_scale" => self.init_scale.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "dropout" => self.dropout.to_string(),
            "max_epochs" => self.max_epochs.to_string(),
            "adadelta_rho" => self.adadelta_rho.to_string(),
            "adadelta_eps" => self.adadelta_eps.to_string(),
            "clip_norm" => self.clip_norm.to_string(),
            "target_loss" => self.target_loss.to_string(),
            "beam_width" => self.beam_width.to_string(),
            "max_len" => self.max_len.to_string(),
            "length_normalize" => self.length_normalize.to_string(),
            "strategy" => self.strategy.to_string(),
            "lambda" => self.lambda.to_string(),
            "workers" => self.workers.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Every key in a fixed order; `from_text(render())` reproduces `self`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let _ = writeln!(out, "{key} = {}", self.value(key));
        }
        out
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_ratio: self.train_ratio,
            test_ratio: self.test_ratio,
            valid_ratio: self.valid_ratio,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            dropout_rate: self.dropout,
            max_epochs: self.max_epochs,
            adadelta_rho: self.adadelta_rho,
            adadelta_eps: self.adadelta_eps,
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
            target_loss: (self.target_loss > 0.0).then_some(self.target_loss),
            seed: self.seed,
        }
    }

    pub fn beam_config(&self) -> BeamConfig {
        BeamConfig {
            beam_width: self.beam_width,
            max_len: self.max_len,
            length_normalize: self.length_normalize,
        }
    }

    pub fn model_dims(&self, vocab_size: usize) -> ModelDims {
        ModelDims {
            vocab_size,
            emb_dim: self.emb_dim,
            hidden_dim: self.hidden_dim,
        }
    }
}
