//! Flat `key=value` run configuration.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Section prefixes group related keys (`agent.gamma`). Unknown and
//! duplicate keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agent::AgentConfig;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Labelled contexts drawn for the supervised baseline.
    pub examples: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            epochs: 3000,
            learning_rate: 0.1,
            examples: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub contexts: usize,
    /// Share of the holdout reserved for evaluation contexts; the rest
    /// feeds training episodes and supervised examples.
    pub fraction: f64,
    pub repeat: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            contexts: 1000,
            fraction: 0.5,
            repeat: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub holdout_fraction: f64,
    pub k: usize,
    pub m: usize,
    pub distractor_prob: f64,
    pub encoder: EncoderConfig,
    /// `agent.seed` is not a key; it is derived from `seed`.
    pub agent: AgentConfig,
    pub hidden: Vec<usize>,
    pub baseline: BaselineConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let agent = AgentConfig::default();
        Self {
            dataset_path: None,
            output_dir: PathBuf::from("kgc-out"),
            seed: 0,
            holdout_fraction: 0.2,
            k: 5,
            m: 16,
            distractor_prob: 0.2,
            encoder: EncoderConfig::default(),
            agent,
            hidden: vec![64, 64],
            baseline: BaselineConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Every accepted key, in the order the resolved config is written.
pub const KEYS: &[&str] = &[
    "dataset_path",
    "output_dir",
    "seed",
    "holdout_fraction",
    "k",
    "m",
    "distractor_prob",
    "encoder.d_embed",
    "encoder.hash_seed",
    "agent.gamma",
    "agent.learning_rate",
    "agent.epsilon_start",
    "agent.epsilon_end",
    "agent.epsilon_decay_steps",
    "agent.batch_size",
    "agent.buffer_capacity",
    "agent.target_sync_interval",
    "agent.total_steps",
    "agent.hidden",
    "baseline.epochs",
    "baseline.learning_rate",
    "baseline.examples",
    "eval.contexts",
    "eval.fraction",
    "eval.repeat",
];

fn value<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("line {line}: cannot parse {key} = {raw:?}")))
}

fn parse_list(key: &str, raw: &str, line: usize) -> Result<Vec<usize>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|s| value(key, s.trim(), line)).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        let mut cfg = RunConfig::default();
        let mut decay_given = false;

        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw_line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, raw) = trimmed
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected key = value")))?;
            let key = key.trim();
            let raw = raw.trim();
            let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
                return Err(Error::Config(format!("line {line}: unknown key {key:?}")));
            };
            if let Some(prev) = seen.insert(known, line) {
                return Err(Error::Config(format!(
                    "line {line}: {key} already set on line {prev}"
                )));
            }
            match known {
                "dataset_path" => cfg.dataset_path = Some(PathBuf::from(raw)),
                "output_dir" => cfg.output_dir = PathBuf::from(raw),
                "seed" => cfg.seed = value(key, raw, line)?,
                "holdout_fraction" => cfg.holdout_fraction = value(key, raw, line)?,
                "k" => cfg.k = value(key, raw, line)?,
                "m" => cfg.m = value(key, raw, line)?,
                "distractor_prob" => cfg.distractor_prob = value(key, raw, line)?,
                "encoder.d_embed" => cfg.encoder.d_embed = value(key, raw, line)?,
                "encoder.hash_seed" => cfg.encoder.hash_seed = value(key, raw, line)?,
                "agent.gamma" => cfg.agent.gamma = value(key, raw, line)?,
                "agent.learning_rate" => cfg.agent.learning_rate = value(key, raw, line)?,
                "agent.epsilon_start" => cfg.agent.epsilon_start = value(key, raw, line)?,
                "agent.epsilon_end" => cfg.agent.epsilon_end = value(key, raw, line)?,
                "agent.epsilon_decay_steps" => {
                    cfg.agent.epsilon_decay_steps = value(key, raw, line)?;
                    decay_given = true;
                }
                "agent.batch_size" => cfg.agent.batch_size = value(key, raw, line)?,
                "agent.buffer_capacity" => cfg.agent.buffer_capacity = value(key, raw, line)?,
                "agent.target_sync_interval" => {
                    cfg.agent.target_sync_interval = value(key, raw, line)?
                }
                "agent.total_steps" => cfg.agent.total_steps = value(key, raw, line)?,
                "agent.hidden" => cfg.hidden = parse_list(key, raw, line)?,
                "baseline.epochs" => cfg.baseline.epochs = value(key, raw, line)?,
                "baseline.learning_rate" => cfg.baseline.learning_rate = value(key, raw, line)?,
                "baseline.examples" => cfg.baseline.examples = value(key, raw, line)?,
                "eval.contexts" => cfg.eval.contexts = value(key, raw, line)?,
                "eval.fraction" => cfg.eval.fraction = value(key, raw, line)?,
                "eval.repeat" => cfg.eval.repeat = value(key, raw, line)?,
                _ => unreachable!("key list and match arms out of sync"),
            }
        }
        if !decay_given {
            // Decay over the first half of training unless told otherwise.
            cfg.agent.epsilon_decay_steps = (cfg.agent.total_steps / 2).max(1);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Checks every field against the constraints of the module that uses it.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |msg: String| Err(Error::Config(msg));
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                cfg_err(format!("{name} = {v} outside [0, 1]"))
            }
        };
        unit("holdout_fraction", self.holdout_fraction)?;
        unit("distractor_prob", self.distractor_prob)?;
        if !(self.eval.fraction > 0.0 && self.eval.fraction < 1.0) {
            return cfg_err(format!(
                "eval.fraction = {} outside (0, 1)",
                self.eval.fraction
            ));
        }
        for (name, v) in [
            ("k", self.k),
            ("m", self.m),
            ("encoder.d_embed", self.encoder.d_embed),
            ("eval.contexts", self.eval.contexts),
            ("eval.repeat", self.eval.repeat),
            ("baseline.examples", self.baseline.examples),
        ] {
            if v == 0 {
                return cfg_err(format!("{name} must be positive"));
            }
        }
        if self.hidden.contains(&0) {
            return cfg_err("agent.hidden widths must be positive".into());
        }
        if !(self.baseline.learning_rate > 0.0 && self.baseline.learning_rate.is_finite()) {
            return cfg_err("baseline.learning_rate must be positive".into());
        }
        self.agent
            .validate()
            .map_err(|e| Error::Config(format!("agent: {e}")))
    }

    /// Resolved configuration in `KEYS` order; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        if let Some(p) = &self.dataset_path {
            put("dataset_path", &p.display());
        }
        put("output_dir", &self.output_dir.display());
        put("seed", &self.seed);
        put("holdout_fraction", &self.holdout_fraction);
        put("k", &self.k);
        put("m", &self.m);
        put("distractor_prob", &self.distractor_prob);
        put("encoder.d_embed", &self.encoder.d_embed);
        put("encoder.hash_seed", &self.encoder.hash_seed);
        let a = &self.agent;
        put("agent.gamma", &a.gamma);
        put("agent.learning_rate", &a.learning_rate);
        put("agent.epsilon_start", &a.epsilon_start);
        put("agent.epsilon_end", &a.epsilon_end);
        put("agent.epsilon_decay_steps", &a.epsilon_decay_steps);
        put("agent.batch_size", &a.batch_size);
        put("agent.buffer_capacity", &a.buffer_capacity);
        put("agent.target_sync_interval", &a.target_sync_interval);
        put("agent.total_steps", &a.total_steps);
        let hidden: Vec<String> = self.hidden.iter().map(ToString::to_string).collect();
        put("agent.hidden", &hidden.join(","));
        put("baseline.epochs", &self.baseline.epochs);
        put("baseline.learning_rate", &self.baseline.learning_rate);
        put("baseline.examples", &self.baseline.examples);
        put("eval.contexts", &self.eval.contexts);
        put("eval.fraction", &self.eval.fraction);
        put("eval.repeat", &self.eval.repeat);
        out
    }
}
