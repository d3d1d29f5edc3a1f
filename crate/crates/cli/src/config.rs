//! TOML configuration file. Every key is optional; command-line flags take
//! precedence over the file, and the file over built-in defaults.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    #[serde(default)]
    pub build_dicts: BuildDicts,
    #[serde(default)]
    pub train_scorer: TrainScorer,
    #[serde(default)]
    pub train_retriever: TrainRetriever,
    #[serde(default)]
    pub link: Link,
    #[serde(default)]
    pub bench: Bench,
    #[serde(default)]
    pub eval: Eval,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildDicts {
    pub casefold: Option<bool>,
    pub strict: Option<bool>,
    pub aliases: Option<bool>,
    pub coref: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainScorer {
    pub order: Option<usize>,
    pub smoothing: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRetriever {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub negatives: Option<usize>,
    pub chunk_len: Option<usize>,
    pub dim: Option<usize>,
    pub buckets: Option<u32>,
    pub init_scale: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub mode: Option<String>,
    pub k: Option<usize>,
    pub offset: Option<f64>,
    pub beam_size: Option<usize>,
    pub parallelism: Option<usize>,
    pub chunk_len: Option<usize>,
    pub context_window: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bench {
    pub repeats: Option<usize>,
    pub modes: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Eval {
    pub min_f1: Option<f64>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
