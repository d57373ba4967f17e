//! Utterance records, manifest ingestion, synthetic corpora and keyword selection.

mod keywords;
mod lexicon;
mod manifest;
mod synthetic;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FrameMatrix;

pub use keywords::select_keywords;
pub use lexicon::{TranslationLexicon, BUILTIN_LEXICON};
pub use manifest::{load_manifest, write_manifest};
pub use synthetic::{generate_synthetic, SplitCounts, SyntheticConfig, SyntheticCorpus, TaggerParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!(
                "unknown split {other:?}, expected train, dev or test"
            ))),
        }
    }
}

/// Where an utterance's acoustic frames come from.
#[derive(Debug, Clone, PartialEq)]
pub enum AudioSource {
    /// 39-dim frames already in memory (synthetic corpora).
    Frames(FrameMatrix),
    /// A `KWSF` frame file.
    FrameFile(PathBuf),
    /// A WAV file, featurized on load.
    Waveform(PathBuf),
}

/// One spoken caption.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub id: String,
    pub split: Split,
    pub audio: AudioSource,
    /// Concepts visible in the paired image (synthetic) or manual labels.
    pub concepts: Option<Vec<String>>,
    /// Tag-vector file holding this utterance's tagger output.
    pub tags_path: Option<PathBuf>,
    /// Query-language reference translation.
    pub translation: Option<Vec<String>>,
}

impl UtteranceRecord {
    pub fn has_tag_source(&self) -> bool {
        self.concepts.is_some() || self.tags_path.is_some()
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("utterance id must be non-empty".into()));
        }
        match self.split {
            Split::Train if !self.has_tag_source() => Err(Error::Validation(format!(
                "train utterance {} has neither concepts nor tags_path",
                self.id
            ))),
            Split::Dev | Split::Test if self.translation.is_none() => {
                Err(Error::Validation(format!(
                    "{} utterance {} has no reference translation",
                    self.split, self.id
                )))
            }
            _ => Ok(()),
        }
    }
}

/// A validated set of utterances, kept sorted by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    records: Vec<UtteranceRecord>,
}

impl Corpus {
    pub fn new(mut records: Vec<UtteranceRecord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &records {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate utterance id {:?}", r.id)));
            }
        }
        records.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self { records })
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of one split, ordered by id.
    pub fn split(&self, split: Split) -> Vec<&UtteranceRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn get(&self, id: &str) -> Option<&UtteranceRecord> {
        self.records
            .binary_search_by(|r| r.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.records[i])
    }
}
