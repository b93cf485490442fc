//! Flat `key = value` run configuration.
//!
//! Values come from three layers: built-in defaults, then a config file,
//! then command-line `--key value` overrides. Unknown keys are rejected in
//! both the file and the overrides. `#` starts a comment.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kgroup_core::group::GroupKind;
use kgroup_core::model::{ModelConfig, Similarity};
use kgroup_core::objective::LossParams;
use kgroup_core::train::TrainConfig;

use crate::error::{Error, Result};
use crate::tsv;

/// Every accepted key, in the order [`RunConfig::render`] writes them.
pub const KEYS: &[&str] = &[
    "data",
    "checkpoint",
    "log",
    "resume",
    "group",
    "n_blocks",
    "similarity",
    "margin",
    "temperature",
    "n_neg",
    "batch_size",
    "lr",
    "min_lr",
    "max_steps",
    "valid_every",
    "patience",
    "valid_mrr",
    "checkpoint_every",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Dataset directory with train.txt, valid.txt, test.txt.
    pub data: Option<PathBuf>,
    /// Best-validation checkpoint.
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    /// Start from this checkpoint instead of a fresh initialization.
    pub resume: Option<PathBuf>,
    pub group: GroupKind,
    pub n_blocks: usize,
    /// `None` picks the default for the group kind.
    pub similarity: Option<Similarity>,
    pub margin: f64,
    pub temperature: f64,
    pub n_neg: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub min_lr: f64,
    pub max_steps: u64,
    pub valid_every: u64,
    pub patience: usize,
    pub valid_mrr: bool,
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::new(ModelConfig::new(GroupKind::So3, 100));
        Self {
            data: None,
            checkpoint: PathBuf::from("model.ckpt"),
            log: PathBuf::from("train.log"),
            resume: None,
            group: train.model.kind,
            n_blocks: train.model.n_blocks,
            similarity: None,
            margin: train.model.margin,
            temperature: train.loss.temperature,
            n_neg: train.loss.n_neg,
            batch_size: train.batch_size,
            lr: train.lr,
            min_lr: train.min_lr,
            max_steps: train.max_steps,
            valid_every: train.valid_every,
            patience: train.patience,
            valid_mrr: train.valid_mrr,
            checkpoint_every: train.checkpoint_every,
            seed: train.seed,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid value '{value}' for key '{key}'"))),
    }
}

/// `--n-blocks` and `n_blocks` name the same key.
pub fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        let value = value.trim();
        let path = || PathBuf::from(value);
        match key.as_str() {
            "data" => self.data = Some(path()),
            "checkpoint" => self.checkpoint = path(),
            "log" => self.log = path(),
            "resume" => self.resume = (!value.is_empty()).then(path),
            "group" => self.group = parse(&key, value)?,
            "n_blocks" => self.n_blocks = parse(&key, value)?,
            "similarity" => {
                self.similarity = match value {
                    "" | "auto" => None,
                    v => Some(parse(&key, v)?),
                }
            }
            "margin" => self.margin = parse(&key, value)?,
            "temperature" => self.temperature = parse(&key, value)?,
            "n_neg" => self.n_neg = parse(&key, value)?,
            "batch_size" => self.batch_size = parse(&key, value)?,
            "lr" => self.lr = parse(&key, value)?,
            "min_lr" => self.min_lr = parse(&key, value)?,
            "max_steps" => self.max_steps = parse(&key, value)?,
            "valid_every" => self.valid_every = parse(&key, value)?,
            "patience" => self.patience = parse(&key, value)?,
            "valid_mrr" => self.valid_mrr = parse_bool(&key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Applies the lines of a config file. `origin` labels errors.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: format!("expected 'key = value', found '{line}'"),
            })?;
            self.set(key, value).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{}:{}: {msg}", origin.display(), i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Applies `(key, value)` overrides in order.
    pub fn apply_overrides(&mut self, overrides: &[(String, String)]) -> Result<()> {
        overrides.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    /// Defaults, then the optional file, then the overrides.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text, path)?;
        }
        cfg.apply_overrides(overrides)?;
        Ok(cfg)
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut m = ModelConfig::new(self.group, self.n_blocks);
        m.similarity = self.similarity.unwrap_or(Similarity::default_for(self.group));
        m.margin = self.margin;
        m
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut c = TrainConfig::new(self.model_config());
        c.loss = LossParams {
            temperature: self.temperature,
            n_neg: self.n_neg,
        };
        c.batch_size = self.batch_size;
        c.lr = self.lr;
        c.min_lr = self.min_lr;
        c.max_steps = self.max_steps;
        c.valid_every = self.valid_every;
        c.patience = self.patience;
        c.valid_mrr = self.valid_mrr;
        c.checkpoint_every = self.checkpoint_every;
        c.seed = self.seed;
        c.validate()?;
        Ok(c)
    }

    /// Checks every input exists and every output directory is present
    /// before any work starts.
    pub fn validate_paths(&self) -> Result<()> {
        let data = self
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("no dataset given (set 'data')".into()))?;
        let train = data.join(tsv::split_file_name(kgroup_core::Split::Train));
        if !train.is_file() {
            return Err(Error::io(
                train,
                std::io::Error::new(std::io::ErrorKind::NotFound, "training file not found"),
            ));
        }
        if let Some(r) = &self.resume {
            if !r.is_file() {
                return Err(Error::io(
                    r,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint to resume not found"),
                ));
            }
        }
        for out in [&self.checkpoint, &self.log] {
            let parent = out.parent().filter(|p| !p.as_os_str().is_empty());
            if let Some(p) = parent {
                if !p.is_dir() {
                    return Err(Error::io(
                        p,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The effective configuration in file syntax; feeding it back through
    /// [`RunConfig::apply_text`] reproduces `self`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        for key in KEYS {
            let value = match *key {
                "data" => opt_path(&self.data),
                "checkpoint" => self.checkpoint.display().to_string(),
                "log" => self.log.display().to_string(),
                "resume" => opt_path(&self.resume),
                "group" => self.group.to_string(),
                "n_blocks" => self.n_blocks.to_string(),
                "similarity" => self.similarity.map_or("auto".into(), |s| s.to_string()),
                "margin" => format!("{:?}", self.margin),
                "temperature" => format!("{:?}", self.temperature),
                "n_neg" => self.n_neg.to_string(),
                "batch_size" => self.batch_size.to_string(),
                "lr" => format!("{:?}", self.lr),
                "min_lr" => format!("{:?}", self.min_lr),
                "max_steps" => self.max_steps.to_string(),
                "valid_every" => self.valid_every.to_string(),
                "patience" => self.patience.to_string(),
                "valid_mrr" => self.valid_mrr.to_string(),
                "checkpoint_every" => self.checkpoint_every.to_string(),
                "seed" => self.seed.to_string(),
                _ => unreachable!("key list and renderer disagree"),
            };
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }
}

/// Splits `--key value` / `--key=value` arguments into pairs.
pub fn parse_override_args(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(Error::Config(format!("unexpected argument '{arg}' (expected --key value)")));
        };
        match flag.split_once('=') {
            Some((k, v)) => out.push((normalize_key(k), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("missing value for '--{flag}'")))?;
                out.push((normalize_key(flag), v.clone()));
            }
        }
    }
    Ok(out)
}
