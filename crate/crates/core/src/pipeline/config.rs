//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::classifier::TrainConfig;
use crate::corpus::{MetadataSchema, DEFAULT_MIN_COUNT};
use crate::embedding::EmbedConfig;
use crate::error::{Error, Result};
use crate::generator::GenConfig;

/// Every recognized key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("corpus", "line-delimited JSON corpus"),
    ("output", "directory for artifacts and reports"),
    ("global_fields", "comma-separated metadata fields that generate documents"),
    ("local_fields", "comma-separated metadata fields that describe documents"),
    ("min_count", "minimum word frequency"),
    ("k_per_class", "labeled training documents per class"),
    ("seed", "root seed for every stage"),
    ("dim", "embedding dimension"),
    ("window", "context half-width"),
    ("negatives", "negative samples per pair"),
    ("embed_lr", "initial embedding learning rate"),
    ("embed_lr_floor", "final embedding learning rate"),
    ("embed_epochs", "embedding epochs"),
    ("exclude_fields", "comma-separated metadata fields left out of embedding"),
    ("use_context", "train word-context pairs (true/false)"),
    ("threads", "embedding threads; more than 1 is not deterministic"),
    ("projection", "when embedding rows return to the unit sphere: output, epoch or step"),
    ("samples_per_class", "synthetic documents per class"),
    ("kappa", "concentration of document draws around a label"),
    ("tau", "candidates kept per namespace when sampling"),
    ("batch_size", "classifier mini-batch size"),
    ("cnn_lr", "classifier learning rate"),
    ("cnn_epochs", "classifier epochs"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub output: Option<PathBuf>,
    pub global_fields: Vec<String>,
    pub local_fields: Vec<String>,
    pub min_count: u64,
    pub k_per_class: usize,
    pub seed: u64,
    /// Seeds inside the stage configs are replaced by ones derived from `seed`.
    pub embed: EmbedConfig,
    pub generate: GenConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::new(),
            output: None,
            global_fields: Vec::new(),
            local_fields: Vec::new(),
            min_count: DEFAULT_MIN_COUNT,
            k_per_class: 10,
            seed: 0,
            embed: EmbedConfig::default(),
            generate: GenConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("cannot parse `{value}` for `{key}`")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "corpus" => self.corpus = PathBuf::from(value.trim()),
            "output" => {
                let v = value.trim();
                self.output = (!v.is_empty()).then(|| PathBuf::from(v));
            }
            "global_fields" => self.global_fields = list(value),
            "local_fields" => self.local_fields = list(value),
            "min_count" => self.min_count = parse(key, value)?,
            "k_per_class" => self.k_per_class = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "dim" => self.embed.dim = parse(key, value)?,
            "window" => self.embed.window = parse(key, value)?,
            "negatives" => self.embed.negatives = parse(key, value)?,
            "embed_lr" => self.embed.learning_rate = parse(key, value)?,
            "embed_lr_floor" => self.embed.learning_rate_floor = parse(key, value)?,
            "embed_epochs" => self.embed.epochs = parse(key, value)?,
            "exclude_fields" => self.embed.exclude_fields = list(value),
            "use_context" => self.embed.use_context = parse(key, value)?,
            "threads" => self.embed.threads = parse(key, value)?,
            "projection" => self.embed.projection = parse(key, value)?,
            "samples_per_class" => self.generate.samples_per_class = parse(key, value)?,
            "kappa" => self.generate.kappa = parse(key, value)?,
            "tau" => self.generate.tau = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "cnn_lr" => self.train.learning_rate = parse(key, value)?,
            "cnn_epochs" => self.train.epochs = parse(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Current value of every key, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let path = |p: &Path| p.display().to_string();
        let values = [
            path(&self.corpus),
            self.output.as_deref().map(path).unwrap_or_default(),
            self.global_fields.join(","),
            self.local_fields.join(","),
            self.min_count.to_string(),
            self.k_per_class.to_string(),
            self.seed.to_string(),
            self.embed.dim.to_string(),
            self.embed.window.to_string(),
            self.embed.negatives.to_string(),
            self.embed.learning_rate.to_string(),
            self.embed.learning_rate_floor.to_string(),
            self.embed.epochs.to_string(),
            self.embed.exclude_fields.join(","),
            self.embed.use_context.to_string(),
            self.embed.threads.to_string(),
            self.embed.projection.to_string(),
            self.generate.samples_per_class.to_string(),
            self.generate.kappa.to_string(),
            self.generate.tau.to_string(),
            self.train.batch_size.to_string(),
            self.train.learning_rate.to_string(),
            self.train.epochs.to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(&(k, _), v)| (k.to_owned(), v))
            .collect()
    }

    /// Reads `key = value` lines; blank lines and `#` comments are ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("{}:{}: expected key = value", path.display(), i + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn schema(&self) -> Result<MetadataSchema> {
        MetadataSchema::new(self.global_fields.clone(), self.local_fields.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.schema()?;
        self.embed.validate()?;
        self.generate.validate()?;
        self.train.validate()?;
        let known: Vec<&String> = self.global_fields.iter().chain(&self.local_fields).collect();
        if let Some(f) = self.embed.exclude_fields.iter().find(|f| !known.contains(f)) {
            return Err(Error::InvalidConfig(format!("excluded field `{f}` is not in the schema")));
        }
        Ok(())
    }

    pub fn stage_seeds(&self) -> StageSeeds {
        StageSeeds::derive(self.seed)
    }
}

/// Per-stage seeds split from the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageSeeds {
    pub root: u64,
    pub split: u64,
    pub embed: u64,
    pub generate: u64,
    pub train: u64,
}

impl StageSeeds {
    pub fn derive(root: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(root);
        Self {
            root,
            split: rng.next_u64(),
            embed: rng.next_u64(),
            generate: rng.next_u64(),
            train: rng.next_u64(),
        }
    }
}
