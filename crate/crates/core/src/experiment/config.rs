//! `key = value` experiment files. `#` starts a comment, lists are
//! comma-separated, unknown keys are errors.

use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::channel::RadioConfig;
use crate::error::{Error, Result};
use crate::ota::FadingPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    AnalogV0,
    AnalogV1,
    Digital,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::AnalogV0 => "a-slv0",
            Scheme::AnalogV1 => "a-slv1",
            Scheme::Digital => "digital",
        }
    }

    pub fn policy(self) -> Option<FadingPolicy> {
        match self {
            Scheme::AnalogV0 => Some(FadingPolicy::V0),
            Scheme::AnalogV1 => Some(FadingPolicy::V1),
            Scheme::Digital => None,
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "v0" | "a-slv0" => Ok(Scheme::AnalogV0),
            "v1" | "a-slv1" => Ok(Scheme::AnalogV1),
            "digital" => Ok(Scheme::Digital),
            other => Err(Error::config(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetParams {
    pub classes: usize,
    pub dim: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Scale of each agent's private linear distortion and view noise.
    pub distortion: f64,
    /// View-noise standard deviation relative to `distortion`.
    pub view_noise: f64,
    /// Standard deviation of the class means around the origin.
    pub class_separation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub agents: Vec<usize>,
    pub cut_width: usize,
    pub aggregation_width: usize,
    pub snr_db: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub cu_budgets: Vec<u64>,
    pub task_count: u64,
    pub runs: usize,
    pub seed: u64,
    pub dataset: DatasetParams,
    pub train: TrainSettings,
    pub radio: RadioConfig,
    pub bits_per_element: u32,
    pub max_slots: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            agents: vec![6, 24, 48],
            cut_width: 32,
            aggregation_width: 256,
            snr_db: vec![-20.0, 0.0, 20.0],
            schemes: vec![Scheme::AnalogV0, Scheme::AnalogV1, Scheme::Digital],
            cu_budgets: vec![2_000_000, 5_000_000],
            task_count: 10_000,
            runs: 5,
            seed: 1,
            dataset: DatasetParams {
                classes: 10,
                dim: 16,
                train_samples: 2000,
                test_samples: 500,
                distortion: 0.5,
                view_noise: 1.0,
                class_separation: 1.0,
            },
            train: TrainSettings {
                epochs: 20,
                batch_size: 100,
                learning_rate: 0.05,
            },
            radio: RadioConfig::default(),
            bits_per_element: 32,
            max_slots: 1_000_000,
        }
    }
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse_one(key, v))
        .collect()
}

fn join<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Starts from the defaults and applies every `key = value` line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!(
                    "line {}: expected `key = value`",
                    lineno + 1
                )));
            };
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "agents" => self.agents = parse_list(key, value)?,
            "n_d" => self.cut_width = parse_one(key, value)?,
            "n_a" => self.aggregation_width = parse_one(key, value)?,
            "snr_db" => self.snr_db = parse_list(key, value)?,
            "schemes" | "policies" => self.schemes = parse_list(key, value)?,
            "cu_budgets" => self.cu_budgets = parse_list(key, value)?,
            "task_count" => self.task_count = parse_one(key, value)?,
            "runs" => self.runs = parse_one(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "classes" => self.dataset.classes = parse_one(key, value)?,
            "dim" => self.dataset.dim = parse_one(key, value)?,
            "train_samples" => self.dataset.train_samples = parse_one(key, value)?,
            "test_samples" => self.dataset.test_samples = parse_one(key, value)?,
            "distortion" => self.dataset.distortion = parse_one(key, value)?,
            "view_noise" => self.dataset.view_noise = parse_one(key, value)?,
            "class_separation" => self.dataset.class_separation = parse_one(key, value)?,
            "epochs" => self.train.epochs = parse_one(key, value)?,
            "batch_size" => self.train.batch_size = parse_one(key, value)?,
            "learning_rate" => self.train.learning_rate = parse_one(key, value)?,
            "subcarriers" => self.radio.subcarriers = parse_one(key, value)?,
            "bandwidth_hz" => self.radio.bandwidth_hz = parse_one(key, value)?,
            "slot_duration_s" => self.radio.slot_duration_s = parse_one(key, value)?,
            "noise_psd" => self.radio.noise_psd = parse_one(key, value)?,
            "max_power_w" => self.radio.max_power_w = parse_one(key, value)?,
            "epsilon" => self.radio.epsilon = parse_one(key, value)?,
            "bits_per_element" => self.bits_per_element = parse_one(key, value)?,
            "max_slots" => self.max_slots = parse_one(key, value)?,
            other => return Err(Error::config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() || self.agents.contains(&0) {
            return Err(Error::config(
                "agents must be a non-empty list of positive counts",
            ));
        }
        if self.snr_db.is_empty() || self.schemes.is_empty() || self.cu_budgets.is_empty() {
            return Err(Error::config(
                "snr_db, schemes and cu_budgets must be non-empty",
            ));
        }
        if self.snr_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("snr_db values must be finite"));
        }
        if self.runs == 0 {
            return Err(Error::config("runs must be at least 1"));
        }
        if self.cut_width == 0 || self.aggregation_width == 0 {
            return Err(Error::config("n_d and n_a must be positive"));
        }
        let d = &self.dataset;
        if d.classes < 2 || d.dim == 0 || d.train_samples < d.classes || d.test_samples == 0 {
            return Err(Error::config(
                "dataset needs classes >= 2, dim >= 1, train_samples >= classes, test_samples >= 1",
            ));
        }
        if !(d.distortion >= 0.0 && d.view_noise >= 0.0 && d.class_separation >= 0.0) {
            return Err(Error::config(
                "distortion, view_noise and class_separation must be non-negative",
            ));
        }
        if self.train.batch_size == 0
            || self.train.learning_rate.is_nan()
            || self.train.learning_rate <= 0.0
        {
            return Err(Error::config(
                "batch_size and learning_rate must be positive",
            ));
        }
        if self.bits_per_element == 0 || self.max_slots == 0 {
            return Err(Error::config(
                "bits_per_element and max_slots must be positive",
            ));
        }
        self.radio.validate()
    }

    pub fn max_agents(&self) -> usize {
        self.agents.iter().copied().max().unwrap_or(1)
    }

    /// Every key in a fixed order; parsing it back yields the same config.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("agents", join(&self.agents));
        line("n_d", self.cut_width.to_string());
        line("n_a", self.aggregation_width.to_string());
        line("snr_db", join(&self.snr_db));
        line(
            "schemes",
            self.schemes
                .iter()
                .map(|s| s.name())
                .collect::<Vec<_>>()
                .join(","),
        );
        line("cu_budgets", join(&self.cu_budgets));
        line("task_count", self.task_count.to_string());
        line("runs", self.runs.to_string());
        line("seed", self.seed.to_string());
        line("classes", self.dataset.classes.to_string());
        line("dim", self.dataset.dim.to_string());
        line("train_samples", self.dataset.train_samples.to_string());
        line("test_samples", self.dataset.test_samples.to_string());
        line("distortion", self.dataset.distortion.to_string());
        line("view_noise", self.dataset.view_noise.to_string());
        line(
            "class_separation",
            self.dataset.class_separation.to_string(),
        );
        line("epochs", self.train.epochs.to_string());
        line("batch_size", self.train.batch_size.to_string());
        line("learning_rate", self.train.learning_rate.to_string());
        line("subcarriers", self.radio.subcarriers.to_string());
        line("bandwidth_hz", self.radio.bandwidth_hz.to_string());
        line("slot_duration_s", self.radio.slot_duration_s.to_string());
        line("noise_psd", self.radio.noise_psd.to_string());
        line("max_power_w", self.radio.max_power_w.to_string());
        line("epsilon", self.radio.epsilon.to_string());
        line("bits_per_element", self.bits_per_element.to_string());
        line("max_slots", self.max_slots.to_string());
        out
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
