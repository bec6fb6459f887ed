//! `key = value` run configuration for `rawseq train`.
//!
//! Blank lines and lines starting with `#` are ignored. Recognized keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `preset` | `tiny`, `timit39`, `timit117`, `timit183` or `wsj` |
//! | `sample_rate` | Hz |
//! | `window_ms`, `hop_ms` | classification window and hop |
//! | `input_dim` | samples per input frame (default 1) |
//! | `stages` | comma-separated `kW:dW:filters:pool[:poolShift]` |
//! | `hidden_units` | classifier hidden layer width |
//! | `learning_rate`, `max_epochs`, `patience` | trainer settings |
//! | `shuffle_seed`, `init_seed` | RNG seeds |
//! | `checkpoint`, `metrics` | output paths |
//!
//! Explicit keys override the preset's values. Without a preset,
//! `sample_rate`, `window_ms`, `hop_ms`, `stages` and `hidden_units` are
//! required.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rawseq::data::FramingConfig;
use rawseq::network::{NetworkConfig, StageConfig};
use rawseq::presets::{preset, Preset};
use rawseq::trainer::TrainConfig;

const KEYS: [&str; 14] = [
    "preset",
    "sample_rate",
    "window_ms",
    "hop_ms",
    "input_dim",
    "stages",
    "hidden_units",
    "learning_rate",
    "max_epochs",
    "patience",
    "shuffle_seed",
    "init_seed",
    "checkpoint",
    "metrics",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub preset: Option<Preset>,
    pub framing: FramingConfig,
    pub input_dim: usize,
    pub stages: Vec<StageConfig>,
    pub hidden_units: usize,
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl Resolved {
    pub fn network(&self, num_classes: usize) -> NetworkConfig {
        NetworkConfig {
            input_dim: self.input_dim,
            window_samples: self.framing.window_samples,
            stages: self.stages.clone(),
            hidden_units: self.hidden_units,
            num_classes,
        }
    }
}

fn parse_stage(s: &str) -> Result<StageConfig, String> {
    let parts: Vec<usize> = s
        .split(':')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("bad stage {s:?}: expected kW:dW:filters:pool[:poolShift]"))?;
    match parts[..] {
        [kw, dw, f, p] => Ok(StageConfig::new(kw, dw, f, p)),
        [kw, dw, f, p, pdw] => Ok(StageConfig {
            pool_dw: pdw,
            ..StageConfig::new(kw, dw, f, p)
        }),
        _ => Err(format!(
            "bad stage {s:?}: expected kW:dW:filters:pool[:poolShift]"
        )),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(format!("line {}: unknown key {k:?}", n + 1));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(format!("line {}: duplicate key {k:?}", n + 1));
            }
        }
        Ok(Self { values })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| format!("invalid value {v:?} for {key}"))
            })
            .transpose()
    }

    fn require<T: std::str::FromStr>(&self, key: &str, fallback: Option<T>) -> Result<T, String> {
        match self.get(key)? {
            Some(v) => Ok(v),
            None => fallback.ok_or_else(|| format!("missing required key {key:?}")),
        }
    }

    pub fn resolve(&self) -> Result<Resolved, String> {
        let preset = self
            .values
            .get("preset")
            .map(|name| preset(name).map_err(|e| e.to_string()))
            .transpose()?;
        let p = preset.as_ref();
        let sample_rate: u32 = self.require("sample_rate", p.map(|p| p.sample_rate))?;
        let window_ms: f64 = self.require("window_ms", p.map(|p| p.window_ms))?;
        let hop_ms: f64 = self.require("hop_ms", p.map(|p| p.hop_ms))?;
        let framing =
            FramingConfig::from_ms(window_ms, hop_ms, sample_rate).map_err(|e| e.to_string())?;
        let stages = match self.values.get("stages") {
            Some(s) => s
                .split(',')
                .map(parse_stage)
                .collect::<Result<Vec<_>, _>>()?,
            None => p
                .map(|p| p.stages.clone())
                .ok_or("missing required key \"stages\"")?,
        };
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            learning_rate: self.require("learning_rate", Some(defaults.learning_rate))?,
            max_epochs: self.require("max_epochs", Some(defaults.max_epochs))?,
            patience: self.require("patience", Some(defaults.patience))?,
            shuffle_seed: self.require("shuffle_seed", Some(defaults.shuffle_seed))?,
            checkpoint_path: self.get::<PathBuf>("checkpoint")?,
            metrics_path: self.get::<PathBuf>("metrics")?,
        };
        train.validate().map_err(|e| e.to_string())?;
        Ok(Resolved {
            framing,
            input_dim: self.require("input_dim", Some(1))?,
            stages,
            hidden_units: self.require("hidden_units", p.map(|p| p.hidden_units))?,
            init_seed: self.require("init_seed", Some(0))?,
            train,
            preset,
        })
    }
}
