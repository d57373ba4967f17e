//! JSON-lines manifests: one utterance per line with `id`, `split`,
//! `frames_path` or `wav_path`, `tags_path` and/or `concepts`, `translation`.
//! Relative paths resolve against the manifest's directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AudioSource, Corpus, Split, UtteranceRecord};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    id: String,
    split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frames_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wav_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tags_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    concepts: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    translation: Option<Vec<String>>,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn relativize(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned()
}

/// Reads a manifest. Referenced files are not opened here.
pub fn load_manifest(path: &Path) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let m: ManifestLine = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let audio = match (m.frames_path, m.wav_path) {
            (Some(f), None) => AudioSource::FrameFile(resolve(base, &f)),
            (None, Some(w)) => AudioSource::Waveform(resolve(base, &w)),
            _ => {
                return Err(parse_err(
                    "exactly one of frames_path or wav_path is required".into(),
                ))
            }
        };
        records.push(UtteranceRecord {
            id: m.id,
            split: m.split,
            audio,
            concepts: m.concepts,
            tags_path: m.tags_path.map(|t| resolve(base, &t)),
            translation: m.translation,
        });
    }
    if records.is_empty() {
        log::warn!("manifest {} contains no records", path.display());
    }
    Corpus::new(records)
}

/// Writes `corpus` as a manifest. Every record must reference its audio by path.
pub fn write_manifest(path: &Path, corpus: &Corpus) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for r in corpus.records() {
        let (frames_path, wav_path) = match &r.audio {
            AudioSource::FrameFile(p) => (Some(relativize(base, p)), None),
            AudioSource::Waveform(p) => (None, Some(relativize(base, p))),
            AudioSource::Frames(_) => {
                return Err(Error::Validation(format!(
                    "utterance {} has in-memory frames; write them to a frame file first",
                    r.id
                )))
            }
        };
        let line = ManifestLine {
            id: r.id.clone(),
            split: r.split,
            frames_path,
            wav_path,
            tags_path: r.tags_path.as_deref().map(|p| relativize(base, p)),
            concepts: r.concepts.clone(),
            translation: r.translation.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}
