//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments
//! (including `--set` overrides) replace earlier ones. Unknown keys are
//! rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use triformer_core::data::SplitSpec;
use triformer_core::model::{join_sizes, parse_sizes};
use triformer_core::training::TrainConfig;
use triformer_core::vsm::GeneratorActivation;
use triformer_core::{Result, TriformerConfig, TriformerError, VsmMode};

/// Every accepted key, in the order the resolved snapshot lists them.
pub const KEYS: &[&str] = &[
    "data.path",
    "data.synth.n",
    "data.synth.t",
    "data.synth.seed",
    "data.synth.heterogeneity",
    "split.train",
    "split.val",
    "split.test",
    "model.h",
    "model.f",
    "model.d",
    "model.m",
    "model.a",
    "model.patch_sizes",
    "model.vsm",
    "model.recurrent",
    "model.multiscale",
    "model.seed",
    "model.h_pred",
    "model.agg_hidden",
    "model.generator",
    "train.lr",
    "train.batch",
    "train.max_epochs",
    "train.patience",
    "train.seed",
    "out.dir",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSource {
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub heterogeneity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// CSV input; synthetic data is generated when absent.
    pub data_path: Option<PathBuf>,
    pub synth: SynthSource,
    pub split: SplitSpec,
    /// Model settings; `n` is filled in from the data.
    pub model: TriformerConfig,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_path: None,
            synth: SynthSource {
                n: 8,
                t: 4000,
                seed: 7,
                heterogeneity: 1.0,
            },
            split: SplitSpec::default(),
            model: TriformerConfig::new(96, 24, 8, vec![6, 4, 4]),
            train: TrainConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| TriformerError::Config(format!("invalid value {raw:?} for {key}")))
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(TriformerError::Config(format!("invalid value {raw:?} for {key} (expected true or false)"))),
    }
}

/// Splits one `key = value` assignment.
pub fn parse_assignment(line: &str) -> Result<(String, String)> {
    let (key, val) = line
        .split_once('=')
        .ok_or_else(|| TriformerError::Config(format!("expected key = value, got {line:?}")))?;
    let key = key.trim();
    if !KEYS.contains(&key) {
        return Err(TriformerError::Config(format!("unknown config key {key:?}")));
    }
    Ok((key.to_string(), val.trim().to_string()))
}

/// Parses a config file body into assignments, in order.
pub fn parse_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(
            parse_assignment(line)
                .map_err(|e| TriformerError::Config(format!("line {}: {}", i + 1, strip_prefix(&e))))?,
        );
    }
    Ok(out)
}

fn strip_prefix(e: &TriformerError) -> String {
    match e {
        TriformerError::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}

impl RunConfig {
    /// Defaults, then the file at `path` (if any), then `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| TriformerError::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            for (k, v) in parse_text(&text)? {
                cfg.set(&k, &v)?;
            }
        }
        for o in overrides {
            let (k, v) = parse_assignment(o)?;
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "data.path" => self.data_path = (!raw.is_empty()).then(|| PathBuf::from(raw)),
            "data.synth.n" => self.synth.n = value(key, raw)?,
            "data.synth.t" => self.synth.t = value(key, raw)?,
            "data.synth.seed" => self.synth.seed = value(key, raw)?,
            "data.synth.heterogeneity" => self.synth.heterogeneity = value(key, raw)?,
            "split.train" => self.split.train = value(key, raw)?,
            "split.val" => self.split.val = value(key, raw)?,
            "split.test" => self.split.test = value(key, raw)?,
            "model.h" => m.h = value(key, raw)?,
            "model.f" => m.f = value(key, raw)?,
            "model.d" => m.d = value(key, raw)?,
            "model.m" => m.m = value(key, raw)?,
            "model.a" => m.a = value(key, raw)?,
            "model.patch_sizes" => m.patch_sizes = parse_sizes(raw)?,
            "model.vsm" => m.vsm = raw.parse::<VsmMode>()?,
            "model.recurrent" => m.recurrent = flag(key, raw)?,
            "model.multiscale" => m.multiscale = flag(key, raw)?,
            "model.seed" => m.seed = value(key, raw)?,
            "model.h_pred" => {
                m.predictor_hidden = match raw {
                    "auto" => None,
                    _ => Some(value(key, raw)?),
                }
            }
            "model.agg_hidden" => m.aggregator_hidden = value(key, raw)?,
            "model.generator" => m.generator_activation = raw.parse::<GeneratorActivation>()?,
            "train.lr" => self.train.lr = value(key, raw)?,
            "train.batch" => self.train.batch = value(key, raw)?,
            "train.max_epochs" => self.train.max_epochs = value(key, raw)?,
            "train.patience" => self.train.patience = value(key, raw)?,
            "train.seed" => self.train.seed = value(key, raw)?,
            "out.dir" => self.out_dir = PathBuf::from(raw),
            other => return Err(TriformerError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> String {
        let m = &self.model;
        match key {
            "data.path" => self
                .data_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "data.synth.n" => self.synth.n.to_string(),
            "data.synth.t" => self.synth.t.to_string(),
            "data.synth.seed" => self.synth.seed.to_string(),
            "data.synth.heterogeneity" => self.synth.heterogeneity.to_string(),
            "split.train" => self.split.train.to_string(),
            "split.val" => self.split.val.to_string(),
            "split.test" => self.split.test.to_string(),
            "model.h" => m.h.to_string(),
            "model.f" => m.f.to_string(),
            "model.d" => m.d.to_string(),
            "model.m" => m.m.to_string(),
            "model.a" => m.a.to_string(),
            "model.patch_sizes" => join_sizes(&m.patch_sizes),
            "model.vsm" => m.vsm.to_string(),
            "model.recurrent" => m.recurrent.to_string(),
            "model.multiscale" => m.multiscale.to_string(),
            "model.seed" => m.seed.to_string(),
            "model.h_pred" => m.predictor_hidden.map_or_else(|| "auto".into(), |w| w.to_string()),
            "model.agg_hidden" => m.aggregator_hidden.to_string(),
            "model.generator" => m.generator_activation.to_string(),
            "train.lr" => self.train.lr.to_string(),
            "train.batch" => self.train.batch.to_string(),
            "train.max_epochs" => self.train.max_epochs.to_string(),
            "train.patience" => self.train.patience.to_string(),
            "train.seed" => self.train.seed.to_string(),
            "out.dir" => self.out_dir.display().to_string(),
            _ => unreachable!("get called with unknown key {key}"),
        }
    }

    /// Every key with its effective value, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.get(key)).expect("writing to a string");
        }
        out
    }
}
