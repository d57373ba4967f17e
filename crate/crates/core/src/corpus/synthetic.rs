//! Desk-scale stand-in for a spoken-caption corpus with a visual tagger.
//!
//! Each search-language word owns a fixed random sequence of 39-dim frames.
//! An utterance concatenates the templates of a few distinct words and adds
//! Gaussian noise; its "image" is the set of those words. The simulated
//! tagger sees each concept with probability `tagger_hit_prob` and scores all
//! of its translations (synonyms included), while the reference translation
//! uses only the primary translation of each word.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AudioSource, Corpus, Split, TranslationLexicon, UtteranceRecord, BUILTIN_LEXICON};
use crate::error::{Error, Result};
use crate::features::{FrameMatrix, FEATURE_DIM};
use crate::network::Architecture;
use crate::seed;
use crate::targets::{build_vocabulary, simulate_visual_tags, TargetVector, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 500,
            dev: 150,
            test: 250,
        }
    }
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggerParams {
    pub p_hi: f64,
    pub p_lo: f64,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_search_words: usize,
    /// Search words plus synonyms; the excess over `num_search_words` is the
    /// number of words that receive a second translation.
    pub num_query_words: usize,
    pub utterances_per_split: SplitCounts,
    /// Inclusive range.
    pub words_per_utterance: [usize; 2],
    /// Inclusive range.
    pub frames_per_word: [usize; 2],
    pub template_noise_std: f64,
    pub tagger_hit_prob: f64,
    pub tagger_p_hi: f64,
    pub tagger_p_lo: f64,
    pub tag_noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_search_words: 40,
            num_query_words: 50,
            utterances_per_split: SplitCounts::default(),
            words_per_utterance: [3, 4],
            frames_per_word: [45, 55],
            template_noise_std: 0.2,
            tagger_hit_prob: 0.9,
            tagger_p_hi: 0.9,
            tagger_p_lo: 0.05,
            tag_noise_std: 0.1,
            seed: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn tagger(&self) -> TaggerParams {
        TaggerParams {
            p_hi: self.tagger_p_hi,
            p_lo: self.tagger_p_lo,
            noise_std: self.tag_noise_std,
        }
    }

    /// Longest utterance the generator can produce, in frames.
    pub fn max_utterance_frames(&self) -> usize {
        self.words_per_utterance[1] * self.frames_per_word[1]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        let [wmin, wmax] = self.words_per_utterance;
        let [fmin, fmax] = self.frames_per_word;
        if self.num_search_words == 0 {
            return bad("num_search_words must be positive".into());
        }
        if self.num_query_words < self.num_search_words {
            return bad("num_query_words must be at least num_search_words".into());
        }
        if wmin == 0 || wmin > wmax || wmax > self.num_search_words {
            return bad(format!(
                "words_per_utterance {:?} must satisfy 1 <= min <= max <= num_search_words",
                self.words_per_utterance
            ));
        }
        if fmin == 0 || fmin > fmax {
            return bad(format!("frames_per_word {:?} is not a valid range", self.frames_per_word));
        }
        let min_frames = Architecture::full(1).min_input_frames();
        if wmin * fmin < min_frames {
            return bad(format!(
                "shortest utterance ({wmin} x {fmin} frames) is below the network minimum of {min_frames}"
            ));
        }
        for (name, p) in [
            ("tagger_hit_prob", self.tagger_hit_prob),
            ("tagger_p_hi", self.tagger_p_hi),
            ("tagger_p_lo", self.tagger_p_lo),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if !(self.tagger_p_lo < self.tagger_p_hi) {
            return bad("tagger_p_lo must be below tagger_p_hi".into());
        }
        for (name, s) in [
            ("template_noise_std", self.template_noise_std),
            ("tag_noise_std", self.tag_noise_std),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub lexicon: TranslationLexicon,
    /// The simulated tagger's output vocabulary (all query-language words).
    pub vocab: Vocabulary,
    /// Simulated tagger output for every utterance, keyed by id.
    pub true_tags: BTreeMap<String, TargetVector>,
}

fn build_lexicon(config: &SyntheticConfig) -> Result<(Vec<String>, TranslationLexicon)> {
    let mut synonyms_left = config.num_query_words - config.num_search_words;
    let mut words = Vec::with_capacity(config.num_search_words);
    let mut entries = BTreeMap::new();
    for i in 0..config.num_search_words {
        let (search, mut translations) = match BUILTIN_LEXICON.get(i) {
            Some((en, de)) => (en.to_string(), de.iter().map(|s| s.to_string()).collect()),
            None => (format!("word{i:03}"), vec![format!("wort{i:03}")]),
        };
        translations.truncate(if synonyms_left > 0 { 2 } else { 1 });
        if translations.len() == 2 {
            synonyms_left -= 1;
        }
        words.push(search.clone());
        entries.insert(search, translations);
    }
    if synonyms_left > 0 {
        return Err(Error::Validation(format!(
            "cannot provide {} query words from {} search words: only {} synonyms available",
            config.num_query_words,
            config.num_search_words,
            config.num_query_words - config.num_search_words - synonyms_left
        )));
    }
    Ok((words, TranslationLexicon::new(entries)?))
}

/// Generates a corpus, its lexicon and the tagger's output. A pure function of `config`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let (words, lexicon) = build_lexicon(config)?;
    let vocab = build_vocabulary(&[lexicon.query_words()], config.num_query_words, &BTreeSet::new())?;

    let mut template_rng = seed::rng(seed::derive(config.seed, "templates"));
    let unit = Normal::new(0.0f32, 1.0).expect("unit normal");
    let templates: Vec<Vec<f32>> = words
        .iter()
        .map(|_| {
            let len = template_rng.random_range(config.frames_per_word[0]..=config.frames_per_word[1]);
            (0..len * FEATURE_DIM).map(|_| unit.sample(&mut template_rng)).collect()
        })
        .collect();

    let noise = Normal::new(0.0f32, config.template_noise_std as f32).expect("validated std");
    let tagger_seed = seed::derive(config.seed, "tagger");
    let tagger = config.tagger();
    let mut records = Vec::new();
    let mut true_tags = BTreeMap::new();
    let mut global = 0u64;
    for split in Split::ALL {
        let mut rng = seed::rng(seed::derive(config.seed, split.as_str()));
        for i in 0..config.utterances_per_split.get(split) {
            let id = format!("{split}_{i:05}");
            let n = rng.random_range(config.words_per_utterance[0]..=config.words_per_utterance[1]);
            // Random order, no repeats.
            let picked: Vec<usize> = sample(&mut rng, words.len(), n).into_vec();

            let mut data = Vec::new();
            for &w in &picked {
                data.extend(templates[w].iter().map(|v| {
                    if config.template_noise_std > 0.0 {
                        v + noise.sample(&mut rng)
                    } else {
                        *v
                    }
                }));
            }
            let frames = FrameMatrix::new(data.clone(), data.len() / FEATURE_DIM, FEATURE_DIM)?;

            let mut concepts: Vec<String> = picked.iter().map(|&w| words[w].clone()).collect();
            concepts.sort();
            let translation = picked
                .iter()
                .map(|&w| lexicon.primary(&words[w]).expect("lexicon covers every word").to_string())
                .collect();

            let utt_seed = seed::derive_indexed(tagger_seed, global);
            let mut hit_rng = seed::rng(seed::derive(utt_seed, "hits"));
            let visible: Vec<&String> = concepts
                .iter()
                .filter(|_| hit_rng.random_bool(config.tagger_hit_prob))
                .collect();
            let tags = simulate_visual_tags(
                &visible,
                &lexicon,
                &vocab,
                tagger.p_hi,
                tagger.p_lo,
                tagger.noise_std,
                seed::derive(utt_seed, "noise"),
            )?;
            true_tags.insert(id.clone(), tags);

            records.push(UtteranceRecord {
                id,
                split,
                audio: AudioSource::Frames(frames),
                concepts: Some(concepts),
                tags_path: None,
                translation: Some(translation),
            });
            global += 1;
        }
    }
    Ok(SyntheticCorpus {
        corpus: Corpus::new(records)?,
        lexicon,
        vocab,
        true_tags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            num_search_words: 6,
            num_query_words: 8,
            utterances_per_split: SplitCounts {
                train: 12,
                dev: 5,
                test: 5,
            },
            words_per_utterance: [2, 3],
            frames_per_word: [70, 80],
            seed: 7,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn same_seed_gives_identical_corpus() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.corpus, c.corpus);
    }

    #[test]
    fn one_word_utterances_have_one_token_references() {
        let cfg = SyntheticConfig {
            num_search_words: 2,
            num_query_words: 2,
            words_per_utterance: [1, 1],
            frames_per_word: [140, 150],
            ..small()
        };
        let s = generate_synthetic(&cfg).unwrap();
        for r in s.corpus.records() {
            assert_eq!(r.translation.as_ref().unwrap().len(), 1);
        }
    }

    #[test]
    fn noiseless_tags_are_p_hi_on_present_concepts() {
        let cfg = SyntheticConfig {
            tag_noise_std: 0.0,
            tagger_hit_prob: 1.0,
            ..small()
        };
        let s = generate_synthetic(&cfg).unwrap();
        for r in s.corpus.records() {
            let concepts = r.concepts.as_ref().unwrap();
            let expected: BTreeSet<&str> = concepts
                .iter()
                .flat_map(|c| s.lexicon.translations(c))
                .map(String::as_str)
                .collect();
            let tags = &s.true_tags[&r.id];
            for (w, &v) in s.vocab.words().iter().zip(tags.values()) {
                let want = if expected.contains(w.as_str()) { 0.9f32 } else { 0.05f32 };
                assert_eq!(v, (want as f64) as f32, "{} {w}", r.id);
            }
        }
    }

    #[test]
    fn references_use_lexicon_query_side() {
        let s = generate_synthetic(&small()).unwrap();
        let query: BTreeSet<String> = s.lexicon.query_words().into_iter().collect();
        for r in s.corpus.records() {
            for t in r.translation.as_ref().unwrap() {
                assert!(query.contains(t));
            }
            let AudioSource::Frames(f) = &r.audio else { panic!() };
            assert!(f.num_frames() >= 134);
        }
        assert_eq!(s.vocab.len(), 8);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let too_short = SyntheticConfig {
            frames_per_word: [10, 20],
            ..small()
        };
        assert!(generate_synthetic(&too_short).is_err());
        let probs = SyntheticConfig {
            tagger_p_lo: 0.95,
            ..small()
        };
        assert!(generate_synthetic(&probs).is_err());
        let synonyms = SyntheticConfig {
            num_query_words: 40,
            ..small()
        };
        assert!(generate_synthetic(&synonyms).is_err());
    }
}
