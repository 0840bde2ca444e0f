//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{DressError, Result};
use crate::ndgraph::TrainConfig;
use crate::reinforce::{Curriculum, RlConfig};
use crate::rewardmodels::RewardWeights;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub clip: f64,
    pub batch: usize,
    pub epochs: usize,
    pub sae_epochs: usize,
    pub lm_epochs: usize,
    pub lexsimp_epochs: usize,
    pub rl_lr: f64,
    pub baseline_lr: f64,
    pub seed: u64,
    pub min_count: usize,
    pub curriculum_start: usize,
    pub curriculum_step: usize,
    pub curriculum_period: usize,
    pub lambda_s: f64,
    pub lambda_r: f64,
    pub lambda_f: f64,
    pub beta: f64,
    pub eta: f64,
    pub max_len_factor: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            hidden: 256,
            layers: 2,
            dropout: 0.2,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            clip: 5.0,
            batch: 32,
            epochs: 10,
            sae_epochs: 10,
            lm_epochs: 10,
            lexsimp_epochs: 10,
            rl_lr: 0.01,
            baseline_lr: 0.01,
            seed: 1,
            min_count: crate::textproc::DEFAULT_MIN_COUNT,
            curriculum_start: 24,
            curriculum_step: 3,
            curriculum_period: 2,
            lambda_s: 1.0,
            lambda_r: 0.25,
            lambda_f: 0.5,
            beta: 0.1,
            eta: 0.1,
            max_len_factor: 1.5,
        }
    }
}

/// Overrides applied by `--desk`.
pub const DESK_PRESET: &[(&str, &str)] = &[
    ("hidden", "64"),
    ("layers", "1"),
    ("batch", "16"),
    ("lr", "0.01"),
    ("epochs", "10"),
    ("sae_epochs", "3"),
    ("lm_epochs", "3"),
    ("lexsimp_epochs", "4"),
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| DressError::Config(format!("cannot parse `{value}` for `{key}`")))
}

impl Config {
    pub fn desk() -> Self {
        let mut c = Config::default();
        for (k, v) in DESK_PRESET {
            c.set(k, v).expect("preset keys are valid");
        }
        c
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "hidden" => self.hidden = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "beta1" => self.beta1 = parse(key, v)?,
            "beta2" => self.beta2 = parse(key, v)?,
            "clip" => self.clip = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "sae_epochs" => self.sae_epochs = parse(key, v)?,
            "lm_epochs" => self.lm_epochs = parse(key, v)?,
            "lexsimp_epochs" => self.lexsimp_epochs = parse(key, v)?,
            "rl_lr" => self.rl_lr = parse(key, v)?,
            "baseline_lr" => self.baseline_lr = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "min_count" => self.min_count = parse(key, v)?,
            "curriculum_start" => self.curriculum_start = parse(key, v)?,
            "curriculum_step" => self.curriculum_step = parse(key, v)?,
            "curriculum_period" => self.curriculum_period = parse(key, v)?,
            "lambda_s" => self.lambda_s = parse(key, v)?,
            "lambda_r" => self.lambda_r = parse(key, v)?,
            "lambda_f" => self.lambda_f = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "eta" => self.eta = parse(key, v)?,
            "max_len_factor" => self.max_len_factor = parse(key, v)?,
            other => return Err(DressError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| DressError::Config(format!("expected key=value, got `{pair}`")))?;
        self.set(k, v)
    }

    /// Apply every `key = value` line of `text`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                self.set_pair(line)?;
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| DressError::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("hidden", self.hidden.to_string()),
            ("layers", self.layers.to_string()),
            ("dropout", self.dropout.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("clip", self.clip.to_string()),
            ("batch", self.batch.to_string()),
            ("epochs", self.epochs.to_string()),
            ("sae_epochs", self.sae_epochs.to_string()),
            ("lm_epochs", self.lm_epochs.to_string()),
            ("lexsimp_epochs", self.lexsimp_epochs.to_string()),
            ("rl_lr", self.rl_lr.to_string()),
            ("baseline_lr", self.baseline_lr.to_string()),
            ("seed", self.seed.to_string()),
            ("min_count", self.min_count.to_string()),
            ("curriculum_start", self.curriculum_start.to_string()),
            ("curriculum_step", self.curriculum_step.to_string()),
            ("curriculum_period", self.curriculum_period.to_string()),
            ("lambda_s", self.lambda_s.to_string()),
            ("lambda_r", self.lambda_r.to_string()),
            ("lambda_f", self.lambda_f.to_string()),
            ("beta", self.beta.to_string()),
            ("eta", self.eta.to_string()),
            ("max_len_factor", self.max_len_factor.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DressError::Config(m.to_owned()));
        if self.hidden == 0 || self.layers == 0 || self.batch == 0 {
            return bad("hidden, layers and batch must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.lr <= 0.0 || self.rl_lr <= 0.0 || self.baseline_lr <= 0.0 || self.clip <= 0.0 {
            return bad("learning rates and clip norm must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam moment coefficients must lie in [0, 1)");
        }
        if self.curriculum_step == 0 || self.curriculum_period == 0 {
            return bad("curriculum step and period must be positive");
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad("eta must lie in [0, 1]");
        }
        if self.max_len_factor <= 0.0 {
            return bad("max_len_factor must be positive");
        }
        self.reward_weights().validate()
    }

    pub fn train(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch: self.batch,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            clip: self.clip,
            dropout: self.dropout,
        }
    }

    pub fn rl(&self) -> RlConfig {
        RlConfig {
            lr: self.rl_lr,
            clip: self.clip,
            baseline_lr: self.baseline_lr,
            max_len_factor: self.max_len_factor,
        }
    }

    pub fn curriculum(&self) -> Curriculum {
        Curriculum {
            start: self.curriculum_start,
            step: self.curriculum_step,
            period: self.curriculum_period,
        }
    }

    pub fn reward_weights(&self) -> RewardWeights {
        RewardWeights {
            lambda_s: self.lambda_s,
            lambda_r: self.lambda_r,
            lambda_f: self.lambda_f,
            beta: self.beta,
        }
    }
}
