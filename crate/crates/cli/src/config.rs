//! Run configuration: one TOML file merged with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use kws_core::baselines::ScorerKind;
use kws_core::corpus::SyntheticConfig;
use kws_core::features::{FeatureConfig, MAX_FRAMES};
use kws_core::network::Architecture;
use kws_core::seed;
use kws_core::spotting::StemmerKind;
use kws_core::trainer::TrainConfig;

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "KWS_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkSize {
    /// Three convolutions of 64/256/1024 filters and a 3000-unit hidden layer.
    #[default]
    Full,
    /// Same layout with a handful of units per layer, for quick smoke runs.
    Miniature,
}

impl NetworkSize {
    pub fn architecture(self) -> Architecture {
        match self {
            NetworkSize::Full => Architecture::full(1),
            NetworkSize::Miniature => Architecture::miniature(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeywordConfig {
    /// Explicit keywords; when absent they are drawn at random from the vocabulary.
    pub list: Option<Vec<String>>,
    pub count: usize,
    /// A drawn keyword must occur in at least this many test references.
    pub min_occurrences: usize,
}

impl Default for KeywordConfig {
    fn default() -> Self {
        Self {
            list: None,
            count: 10,
            min_occurrences: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub pooled_eer: bool,
    /// Rows per keyword in the ranked-list CSV.
    pub ranked_top: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 10,
            pooled_eer: false,
            ranked_top: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Top-level seed; the corpus, tagger, initialization, shuffling and
    /// keyword draws all use named sub-seeds of it.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Scorer used by `train`, `evaluate` and `search` when no `--model` is given.
    pub model: ScorerKind,
    /// JSON-lines corpus manifest. Mutually exclusive with `synthetic`.
    pub manifest: Option<PathBuf>,
    /// Tagger vocabulary, one word per line (manifest corpora only).
    pub vocab: Option<PathBuf>,
    /// Translation lexicon mapping annotated concepts to vocabulary words.
    pub lexicon: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub keywords: KeywordConfig,
    pub stemmer: StemmerKind,
    /// Fixed input length; defaults to the longest synthetic utterance, or
    /// 800 frames for manifest corpora.
    pub pad_frames: Option<usize>,
    pub network: NetworkSize,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("out"),
            model: ScorerKind::XVisionSpeechCnn,
            manifest: None,
            vocab: None,
            lexicon: None,
            synthetic: None,
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            keywords: KeywordConfig::default(),
            stemmer: StemmerKind::Identity,
            pad_frames: None,
            network: NetworkSize::Full,
            eval: EvalConfig::default(),
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// `dotted.key=value` pairs; values are parsed as TOML, falling back to strings.
    pub set: Vec<String>,
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .with_context(|| format!("--set expects key=value, got {assignment:?}"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("--set has an empty key segment in {key:?}");
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .with_context(|| format!("--set {key}: {part} is not a table"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies overrides, then validates. Precedence
    /// for the output directory: `--out`, then the environment, then the file.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for s in &overrides.set {
            apply_set(&mut table, s)?;
        }
        let mut config: RunConfig = toml::Value::Table(table)
            .try_into()
            .context("invalid configuration")?;
        if let Some(dir) = path.and_then(Path::parent) {
            config.resolve_paths(dir);
        }
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
            config.out_dir = PathBuf::from(dir);
        }
        if let Some(dir) = &overrides.out_dir {
            config.out_dir = dir.clone();
        }
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        config.finish()?;
        Ok(config)
    }

    /// Relative corpus paths in a config file are relative to that file.
    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.manifest, &mut self.vocab, &mut self.lexicon].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Fills derived defaults, propagates the seed and validates.
    pub fn finish(&mut self) -> Result<()> {
        match (&self.manifest, &self.synthetic) {
            (Some(_), Some(_)) => bail!("configure exactly one corpus source: `manifest` or `[synthetic]`, not both"),
            (None, None) => self.synthetic = Some(SyntheticConfig::default()),
            _ => {}
        }
        if self.stemmer == StemmerKind::Custom {
            bail!("stemmer = \"custom\" is only available through the library API");
        }
        if self.manifest.is_some() && self.vocab.is_none() {
            bail!("a manifest corpus needs `vocab`, the tagger's word list");
        }
        if let Some(s) = &mut self.synthetic {
            s.seed = seed::derive(self.seed, "corpus");
            s.validate()?;
        }
        self.train.seed = self.seed;
        self.train.validate()?;
        self.features.validate()?;
        if self.eval.k == 0 {
            bail!("eval.k must be at least 1");
        }
        let min = Architecture::full(1).min_input_frames();
        let pad = self.pad_frames();
        if !(min..=MAX_FRAMES).contains(&pad) {
            bail!("pad_frames {pad} must lie in {min}..={MAX_FRAMES}");
        }
        Ok(())
    }

    pub fn pad_frames(&self) -> usize {
        self.pad_frames.unwrap_or_else(|| match &self.synthetic {
            Some(s) => s.max_utterance_frames().min(MAX_FRAMES),
            None => MAX_FRAMES,
        })
    }

    pub fn is_synthetic(&self) -> bool {
        self.synthetic.is_some()
    }

    /// SHA-256 of everything except the model choice and output location,
    /// so all models of one experiment share a hash.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("model");
            map.remove("out_dir");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    /// Hash of the settings that determine a generated corpus.
    pub fn corpus_hash(&self) -> String {
        let value = serde_json::json!({
            "synthetic": self.synthetic,
        });
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}
