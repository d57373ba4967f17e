//! Turns corpus records into fixed-length, normalized network inputs paired
//! with their tag vectors and references.

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::{AudioSource, Corpus, Split, UtteranceRecord};
use crate::error::{Error, Result};
use crate::features::{featurize, fit_length, read_frame_file, FeatureConfig, FrameMatrix, Standardizer, FEATURE_DIM};
use crate::network::Architecture;
use crate::spotting::Utterance;
use crate::targets::{load_tag_vectors, TargetVector, Vocabulary};

/// Reads a WAV file as mono samples in [-1, 1].
pub fn read_wav(path: &Path, expected_rate: u32) -> Result<Vec<f32>> {
    let format_err = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| format_err(e.to_string()))?;
    let spec = reader.spec();
    if spec.sample_rate != expected_rate {
        return Err(format_err(format!(
            "sample rate {} Hz, expected {expected_rate} Hz",
            spec.sample_rate
        )));
    }
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(e.to_string()))?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format_err(e.to_string()))?
        }
    };
    let channels = usize::from(spec.channels.max(1));
    Ok(interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f32>() / channels as f32)
        .collect())
}

/// Raw (unnormalized, unpadded) frames of one record.
pub fn load_audio(record: &UtteranceRecord, features: &FeatureConfig) -> Result<FrameMatrix> {
    let frames = match &record.audio {
        AudioSource::Frames(m) => m.clone(),
        AudioSource::FrameFile(p) => read_frame_file(p)?,
        AudioSource::Waveform(p) => featurize(&read_wav(p, features.sample_rate)?, features)?,
    };
    if frames.dim() != FEATURE_DIM {
        return Err(Error::Dimension(format!(
            "{} has {}-dim frames, expected {FEATURE_DIM}",
            record.id,
            frames.dim()
        )));
    }
    Ok(frames)
}

#[derive(Debug, Clone)]
pub struct LoadedUtterance {
    pub id: String,
    pub split: Split,
    /// Normalized and fitted to the dataset's fixed length.
    pub frames: FrameMatrix,
    pub concepts: Option<Vec<String>>,
    pub translation: Option<Vec<String>>,
    /// Tagger output for the paired image.
    pub tags: Option<TargetVector>,
}

#[derive(Debug, Clone)]
pub struct PrepareOptions {
    pub features: FeatureConfig,
    /// Every utterance is truncated or zero-padded to this many frames.
    pub pad_frames: usize,
    /// Reuse stored statistics instead of fitting on the train split.
    pub standardizer: Option<Standardizer>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub standardizer: Standardizer,
    pub pad_frames: usize,
    pub utterances: Vec<LoadedUtterance>,
}

/// Loads every record. Tag vectors come from `tags` (keyed by id) or from
/// each record's tag file, in that order of preference.
pub fn prepare(
    corpus: &Corpus,
    vocab: &Vocabulary,
    tags: &BTreeMap<String, TargetVector>,
    options: &PrepareOptions,
) -> Result<Dataset> {
    let min = Architecture::full(1).min_input_frames();
    if options.pad_frames < min {
        return Err(Error::Validation(format!(
            "pad_frames {} is below the network minimum of {min}",
            options.pad_frames
        )));
    }
    let raw: Vec<FrameMatrix> = corpus
        .records()
        .iter()
        .map(|r| load_audio(r, &options.features))
        .collect::<Result<_>>()?;

    let standardizer = match (&options.standardizer, options.features.standardize) {
        (Some(s), _) => s.clone(),
        (None, false) => Standardizer::identity(FEATURE_DIM),
        (None, true) => Standardizer::fit(
            corpus
                .records()
                .iter()
                .zip(&raw)
                .filter(|(r, _)| r.split == Split::Train)
                .map(|(_, m)| m),
        )?,
    };

    let mut tag_files: BTreeMap<&Path, BTreeMap<String, TargetVector>> = BTreeMap::new();
    let mut utterances = Vec::with_capacity(raw.len());
    for (record, frames) in corpus.records().iter().zip(raw) {
        let tag = match (tags.get(&record.id), &record.tags_path) {
            (Some(t), _) => Some(t.clone()),
            (None, Some(path)) => {
                if !tag_files.contains_key(path.as_path()) {
                    tag_files.insert(path, load_tag_vectors(path, vocab)?);
                }
                let t = tag_files[path.as_path()].get(&record.id).ok_or_else(|| Error::Missing {
                    what: "tag vector",
                    id: record.id.clone(),
                })?;
                Some(t.clone())
            }
            (None, None) => None,
        };
        if let Some(t) = &tag {
            if t.len() != vocab.len() {
                return Err(Error::Dimension(format!(
                    "tag vector for {} has {} entries, vocabulary has {}",
                    record.id,
                    t.len(),
                    vocab.len()
                )));
            }
        }
        let normalized = standardizer.apply(&frames)?;
        utterances.push(LoadedUtterance {
            id: record.id.clone(),
            split: record.split,
            frames: fit_length(&normalized, options.pad_frames, options.pad_frames),
            concepts: record.concepts.clone(),
            translation: record.translation.clone(),
            tags: tag,
        });
    }
    Ok(Dataset {
        standardizer,
        pad_frames: options.pad_frames,
        utterances,
    })
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &LoadedUtterance> {
        self.utterances.iter().filter(move |u| u.split == split)
    }

    /// Reference translations of one split, keyed by id.
    pub fn references(&self, split: Split) -> Result<BTreeMap<String, Vec<String>>> {
        self.split(split)
            .map(|u| {
                let t = u.translation.clone().ok_or_else(|| Error::Missing {
                    what: "reference translation",
                    id: u.id.clone(),
                })?;
                Ok((u.id.clone(), t))
            })
            .collect()
    }

    /// The split as a search collection for scorers.
    pub fn search_collection(&self, split: Split) -> Vec<Utterance> {
        self.split(split)
            .map(|u| Utterance {
                id: u.id.clone(),
                frames: Some(u.frames.clone()),
                reference: u.translation.clone().unwrap_or_default(),
            })
            .collect()
    }

    /// Tag vectors of one split, keyed by id.
    pub fn tags(&self, split: Split) -> BTreeMap<String, TargetVector> {
        self.split(split)
            .filter_map(|u| Some((u.id.clone(), u.tags.clone()?)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SplitCounts, SyntheticConfig};

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            utterances_per_split: SplitCounts { train: 6, dev: 3, test: 4 },
            ..SyntheticConfig::default()
        }
    }

    fn options(pad: usize) -> PrepareOptions {
        PrepareOptions {
            features: FeatureConfig::default(),
            pad_frames: pad,
            standardizer: None,
        }
    }

    #[test]
    fn fixed_length_and_train_statistics() {
        let syn = generate_synthetic(&small()).unwrap();
        let ds = prepare(&syn.corpus, &syn.vocab, &syn.true_tags, &options(200)).unwrap();
        assert_eq!(ds.utterances.len(), 13);
        assert!(ds.utterances.iter().all(|u| u.frames.num_frames() == 200 && u.tags.is_some()));
        let train: Vec<_> = syn.corpus.split(Split::Train).iter().map(|r| load_audio(r, &FeatureConfig::default()).unwrap()).collect();
        assert_eq!(ds.standardizer, Standardizer::fit(&train).unwrap());
        assert_eq!(ds.references(Split::Test).unwrap().len(), 4);
        assert_eq!(ds.search_collection(Split::Dev).len(), 3);
    }

    #[test]
    fn stored_standardizer_is_reused() {
        let syn = generate_synthetic(&small()).unwrap();
        let mut opts = options(220);
        opts.standardizer = Some(Standardizer::identity(FEATURE_DIM));
        let ds = prepare(&syn.corpus, &syn.vocab, &syn.true_tags, &opts).unwrap();
        let rec = &syn.corpus.records()[0];
        let raw = load_audio(rec, &FeatureConfig::default()).unwrap();
        assert_eq!(ds.utterances[0].frames.row(0), raw.row(0));
    }

    #[test]
    fn short_padding_rejected() {
        let syn = generate_synthetic(&small()).unwrap();
        assert!(prepare(&syn.corpus, &syn.vocab, &syn.true_tags, &options(100)).is_err());
    }

    #[test]
    fn wav_input_is_featurized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for i in 0..16_000 {
            w.write_sample(((i as f32 * 0.07).sin() * 8000.0) as i16).unwrap();
        }
        w.finalize().unwrap();
        let samples = read_wav(&path, 16_000).unwrap();
        assert_eq!(samples.len(), 16_000);
        assert!(samples.iter().all(|s| s.abs() <= 1.0));
        assert!(read_wav(&path, 8_000).is_err());
        let rec = UtteranceRecord {
            id: "a".into(),
            split: Split::Test,
            audio: AudioSource::Waveform(path),
            concepts: None,
            tags_path: None,
            translation: Some(vec!["Hund".into()]),
        };
        let m = load_audio(&rec, &FeatureConfig::default()).unwrap();
        assert_eq!((m.num_frames(), m.dim()), (98, 39));
    }
}
