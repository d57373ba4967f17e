//! Comparison systems: a text prior, the visual tagger itself, and the
//! trainable speech-network variants that differ only in their targets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Split, TranslationLexicon};
use crate::dataset::{Dataset, LoadedUtterance};
use crate::error::{Error, Result};
use crate::features::FrameMatrix;
use crate::network::{forward_batch, Architecture, NetworkParams};
use crate::spotting::{RelevanceJudge, Scorer, Utterance};
use crate::targets::{build_bow_target, concept_indicator, TargetVector, Vocabulary};
use crate::trainer::{train, Example, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    /// Unigram keyword probabilities; ignores the speech.
    DeTextPrior,
    /// The visual tagger applied to the paired image.
    DeVisionCnn,
    /// Speech network trained on soft visual tags.
    XVisionSpeechCnn,
    /// Speech network trained on bag-of-words targets from translations.
    XBowCnn,
    /// Soft visual tags restricted to the keywords.
    KeyXVisionSpeechCnn,
    /// Visual tags replaced by true annotations.
    OracleXVisionSpeechCnn,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 6] = [
        ScorerKind::DeTextPrior,
        ScorerKind::DeVisionCnn,
        ScorerKind::XVisionSpeechCnn,
        ScorerKind::XBowCnn,
        ScorerKind::KeyXVisionSpeechCnn,
        ScorerKind::OracleXVisionSpeechCnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::DeTextPrior => "de_text_prior",
            ScorerKind::DeVisionCnn => "de_vision_cnn",
            ScorerKind::XVisionSpeechCnn => "x_vision_speech_cnn",
            ScorerKind::XBowCnn => "x_bow_cnn",
            ScorerKind::KeyXVisionSpeechCnn => "key_x_vision_speech_cnn",
            ScorerKind::OracleXVisionSpeechCnn => "oracle_x_vision_speech_cnn",
        }
    }

    /// Name used in comparison tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ScorerKind::DeTextPrior => "DETextPrior",
            ScorerKind::DeVisionCnn => "DEVisionCNN",
            ScorerKind::XVisionSpeechCnn => "XVisionSpeechCNN",
            ScorerKind::XBowCnn => "XBoWCNN",
            ScorerKind::KeyXVisionSpeechCnn => "KeyXVisionSpeechCNN",
            ScorerKind::OracleXVisionSpeechCnn => "OracleXVisionSpeechCNN",
        }
    }

    /// Whether the kind is a speech network built by [`train_variant`].
    pub fn is_trainable(self) -> bool {
        !matches!(self, ScorerKind::DeTextPrior | ScorerKind::DeVisionCnn)
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScorerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<_> = ScorerKind::ALL.iter().map(|k| k.as_str()).collect();
                Error::Validation(format!("unknown scorer kind {s:?}; expected one of {}", known.join(", ")))
            })
    }
}

/// Scores every utterance with the fraction of training references that
/// contain each word.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorScorer {
    labels: Vec<String>,
    probabilities: Vec<f64>,
}

impl PriorScorer {
    pub fn fit<S: AsRef<str>>(train_references: &[Vec<S>], vocab: &Vocabulary, judge: &RelevanceJudge) -> Self {
        let stems: Vec<String> = vocab.words().iter().map(|w| judge.keyword_stem(w)).collect();
        let mut counts = vec![0usize; vocab.len()];
        for reference in train_references {
            let present = judge.reference_stems(reference);
            for (c, s) in counts.iter_mut().zip(&stems) {
                *c += present.contains(s) as usize;
            }
        }
        let n = train_references.len().max(1) as f64;
        Self {
            labels: vocab.words().to_vec(),
            probabilities: counts.into_iter().map(|c| c as f64 / n).collect(),
        }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }
}

impl Scorer for PriorScorer {
    fn name(&self) -> &str {
        ScorerKind::DeTextPrior.as_str()
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn score(&self, _utterance: &Utterance) -> Result<Vec<f64>> {
        Ok(self.probabilities.clone())
    }
}

/// Returns the tagger output for each utterance's paired image.
#[derive(Debug, Clone)]
pub struct VisionScorer {
    labels: Vec<String>,
    tags: BTreeMap<String, TargetVector>,
}

impl VisionScorer {
    pub fn new(vocab: &Vocabulary, tags: BTreeMap<String, TargetVector>) -> Result<Self> {
        if let Some((id, t)) = tags.iter().find(|(_, t)| t.len() != vocab.len()) {
            return Err(Error::Dimension(format!(
                "tag vector for {id} has {} entries, vocabulary has {}",
                t.len(),
                vocab.len()
            )));
        }
        Ok(Self {
            labels: vocab.words().to_vec(),
            tags,
        })
    }
}

impl Scorer for VisionScorer {
    fn name(&self) -> &str {
        ScorerKind::DeVisionCnn.as_str()
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn score(&self, utterance: &Utterance) -> Result<Vec<f64>> {
        let t = self.tags.get(&utterance.id).ok_or_else(|| Error::Missing {
            what: "tag vector",
            id: utterance.id.clone(),
        })?;
        Ok(t.values().iter().map(|&v| f64::from(v)).collect())
    }
}

/// A trained speech network. Inputs must already be normalized and fitted
/// to a common length.
#[derive(Debug, Clone)]
pub struct NetworkScorer {
    kind: ScorerKind,
    labels: Vec<String>,
    params: NetworkParams<f32>,
}

impl NetworkScorer {
    pub fn new(kind: ScorerKind, labels: Vec<String>, params: NetworkParams<f32>) -> Result<Self> {
        if labels.len() != params.outputs() {
            return Err(Error::Dimension(format!(
                "{} labels for a network with {} outputs",
                labels.len(),
                params.outputs()
            )));
        }
        Ok(Self { kind, labels, params })
    }

    pub fn params(&self) -> &NetworkParams<f32> {
        &self.params
    }

    pub fn kind(&self) -> ScorerKind {
        self.kind
    }

    fn frames(u: &Utterance) -> Result<&FrameMatrix> {
        u.frames.as_ref().ok_or_else(|| Error::Missing {
            what: "acoustic frames",
            id: u.id.clone(),
        })
    }
}

impl Scorer for NetworkScorer {
    fn name(&self) -> &str {
        self.kind.as_str()
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn score(&self, utterance: &Utterance) -> Result<Vec<f64>> {
        Ok(self.score_batch(&[utterance])?.remove(0))
    }

    fn score_batch(&self, utterances: &[&Utterance]) -> Result<Vec<Vec<f64>>> {
        let frames: Vec<&FrameMatrix> = utterances.iter().map(|u| Self::frames(u)).collect::<Result<_>>()?;
        let trace = forward_batch(&self.params, &frames)?;
        Ok(trace
            .scores()
            .into_iter()
            .map(|row| row.into_iter().map(f64::from).collect())
            .collect())
    }
}

/// Everything [`train_variant`] needs besides the data.
#[derive(Debug, Clone)]
pub struct VariantSpec<'a> {
    pub vocab: &'a Vocabulary,
    pub keywords: &'a [String],
    /// Maps annotated concepts to vocabulary words for oracle targets.
    pub lexicon: Option<&'a TranslationLexicon>,
    pub judge: &'a RelevanceJudge,
    /// Output size is overridden per variant.
    pub architecture: Architecture,
    pub train: &'a TrainConfig,
}

#[derive(Debug, Clone)]
pub struct TrainedVariant {
    pub scorer: NetworkScorer,
    pub history: TrainHistory,
}

/// Output labels of a trainable variant.
pub fn variant_labels(kind: ScorerKind, vocab: &Vocabulary, keywords: &[String]) -> Result<Vec<String>> {
    match kind {
        ScorerKind::KeyXVisionSpeechCnn => {
            if keywords.is_empty() {
                return Err(Error::Validation(format!("{kind} needs a non-empty keyword list")));
            }
            if let Some(k) = keywords.iter().find(|k| !vocab.contains(k)) {
                return Err(Error::Validation(format!("keyword {k:?} is not in the vocabulary")));
            }
            Ok(keywords.to_vec())
        }
        k if k.is_trainable() => Ok(vocab.words().to_vec()),
        k => Err(Error::Validation(format!("{k} is not a trainable variant"))),
    }
}

/// Training target of one utterance under `kind`.
pub fn variant_target(kind: ScorerKind, utterance: &LoadedUtterance, spec: &VariantSpec<'_>) -> Result<TargetVector> {
    let tags = || {
        utterance.tags.as_ref().ok_or_else(|| Error::Missing {
            what: "tag vector",
            id: utterance.id.clone(),
        })
    };
    match kind {
        ScorerKind::XVisionSpeechCnn => Ok(tags()?.clone()),
        ScorerKind::XBowCnn => {
            let translation = utterance.translation.as_ref().ok_or_else(|| Error::Missing {
                what: "reference translation",
                id: utterance.id.clone(),
            })?;
            Ok(build_bow_target(translation, spec.vocab, spec.judge.stemmer()))
        }
        ScorerKind::KeyXVisionSpeechCnn => {
            let dims: Vec<usize> = variant_labels(kind, spec.vocab, spec.keywords)?
                .iter()
                .map(|k| spec.vocab.index(k).expect("checked by variant_labels"))
                .collect();
            Ok(tags()?.select(&dims))
        }
        ScorerKind::OracleXVisionSpeechCnn => match (&utterance.concepts, spec.lexicon) {
            (Some(concepts), Some(lexicon)) => Ok(concept_indicator(concepts, lexicon, spec.vocab)),
            _ => Ok(tags()?.binarize(0.5)),
        },
        k => Err(Error::Validation(format!("{k} is not a trainable variant"))),
    }
}

fn examples(kind: ScorerKind, dataset: &Dataset, split: Split, spec: &VariantSpec<'_>) -> Result<Vec<Example>> {
    dataset
        .split(split)
        .map(|u| {
            Ok(Example {
                id: u.id.clone(),
                frames: u.frames.clone(),
                target: variant_target(kind, u, spec)?,
            })
        })
        .collect()
}

/// Trains one speech-network variant on the train split, early-stopping on dev.
pub fn train_variant(kind: ScorerKind, dataset: &Dataset, spec: &VariantSpec<'_>) -> Result<TrainedVariant> {
    let labels = variant_labels(kind, spec.vocab, spec.keywords)?;
    let train_set = examples(kind, dataset, Split::Train, spec)?;
    let dev_set = examples(kind, dataset, Split::Dev, spec)?;
    let arch = spec.architecture.with_outputs(labels.len());
    log::info!(
        "training {kind}: {} train / {} dev utterances, {} outputs",
        train_set.len(),
        dev_set.len(),
        labels.len()
    );
    let (params, history) = train(&train_set, &dev_set, arch, spec.train)?;
    Ok(TrainedVariant {
        scorer: NetworkScorer::new(kind, labels, params)?,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SplitCounts, SyntheticConfig};
    use crate::dataset::{prepare, PrepareOptions};
    use crate::features::FeatureConfig;
    use crate::spotting::{evaluate, score_collection, EvalOptions};
    use crate::targets::TargetKind;

    fn dataset() -> (crate::corpus::SyntheticCorpus, Dataset) {
        let syn = generate_synthetic(&SyntheticConfig {
            utterances_per_split: SplitCounts { train: 8, dev: 4, test: 6 },
            ..SyntheticConfig::default()
        })
        .unwrap();
        let ds = prepare(
            &syn.corpus,
            &syn.vocab,
            &syn.true_tags,
            &PrepareOptions {
                features: FeatureConfig::default(),
                pad_frames: 140,
                standardizer: None,
            },
        )
        .unwrap();
        (syn, ds)
    }

    #[test]
    fn kinds_round_trip() {
        for k in ScorerKind::ALL {
            assert_eq!(k.as_str().parse::<ScorerKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
        assert!("x_vision".parse::<ScorerKind>().is_err());
        assert_eq!(ScorerKind::ALL.iter().filter(|k| k.is_trainable()).count(), 4);
    }

    #[test]
    fn prior_is_reference_frequency() {
        let vocab = Vocabulary::new(vec!["Hund".into(), "Katze".into()], Default::default()).unwrap();
        let mut refs = vec![vec!["ein", "Hund"]; 120];
        refs.extend(vec![vec!["ein", "Baum"]; 880]);
        let p = PriorScorer::fit(&refs, &vocab, &RelevanceJudge::default());
        assert_eq!(p.probabilities(), [0.12, 0.0]);
    }

    #[test]
    fn prior_eer_is_one_half() {
        let (syn, ds) = dataset();
        let judge = RelevanceJudge::default();
        let train_refs: Vec<Vec<String>> = ds.split(Split::Train).map(|u| u.translation.clone().unwrap()).collect();
        let prior = PriorScorer::fit(&train_refs, &syn.vocab, &judge);
        let m = score_collection(&prior, &ds.search_collection(Split::Test)).unwrap();
        let report = evaluate(&m, &ds.references(Split::Test).unwrap(), syn.vocab.words(), &judge, EvalOptions::default()).unwrap();
        assert!(report.keywords.iter().filter_map(|k| k.eer).all(|e| e == 0.5));
        assert_eq!(report.macro_eer, Some(0.5));
    }

    #[test]
    fn vision_scorer_requires_tags() {
        let (syn, ds) = dataset();
        let scorer = VisionScorer::new(&syn.vocab, ds.tags(Split::Test)).unwrap();
        let test = ds.search_collection(Split::Test);
        assert_eq!(scorer.score(&test[0]).unwrap().len(), syn.vocab.len());
        let stranger = Utterance { id: "zzz".into(), frames: None, reference: vec![] };
        assert!(scorer.score(&stranger).unwrap_err().to_string().contains("zzz"));
    }

    #[test]
    fn variant_targets_and_labels() {
        let (syn, ds) = dataset();
        let judge = RelevanceJudge::default();
        let keywords: Vec<String> = syn.vocab.words()[..10].to_vec();
        let cfg = TrainConfig::default();
        let spec = VariantSpec {
            vocab: &syn.vocab,
            keywords: &keywords,
            lexicon: Some(&syn.lexicon),
            judge: &judge,
            architecture: Architecture::miniature(1),
            train: &cfg,
        };
        let u = ds.split(Split::Train).next().unwrap();
        let key = variant_target(ScorerKind::KeyXVisionSpeechCnn, u, &spec).unwrap();
        assert_eq!(key.len(), 10);
        assert_eq!(key.kind(), TargetKind::Soft);
        let oracle = variant_target(ScorerKind::OracleXVisionSpeechCnn, u, &spec).unwrap();
        assert_eq!(oracle.kind(), TargetKind::Binary);
        assert!(oracle.values().iter().all(|&v| v == 0.0 || v == 1.0));
        let bow = variant_target(ScorerKind::XBowCnn, u, &spec).unwrap();
        assert_eq!(bow.len(), syn.vocab.len());
        assert!(variant_target(ScorerKind::DeTextPrior, u, &spec).is_err());
        assert!(variant_labels(ScorerKind::KeyXVisionSpeechCnn, &syn.vocab, &[]).is_err());
        assert!(variant_labels(ScorerKind::DeVisionCnn, &syn.vocab, &keywords).is_err());
    }

    #[test]
    fn oracle_thresholds_loaded_tags_without_concepts() {
        let (syn, ds) = dataset();
        let judge = RelevanceJudge::default();
        let cfg = TrainConfig::default();
        let spec = VariantSpec {
            vocab: &syn.vocab,
            keywords: &[],
            lexicon: None,
            judge: &judge,
            architecture: Architecture::miniature(1),
            train: &cfg,
        };
        let u = ds.split(Split::Train).next().unwrap();
        let t = variant_target(ScorerKind::OracleXVisionSpeechCnn, u, &spec).unwrap();
        assert_eq!(t, u.tags.as_ref().unwrap().binarize(0.5));
    }

    #[test]
    fn key_variant_trains_with_keyword_outputs() {
        let (syn, ds) = dataset();
        let judge = RelevanceJudge::default();
        let keywords: Vec<String> = syn.vocab.words()[..10].to_vec();
        let cfg = TrainConfig { max_epochs: 1, patience: 0, ..TrainConfig::default() };
        let spec = VariantSpec {
            vocab: &syn.vocab,
            keywords: &keywords,
            lexicon: Some(&syn.lexicon),
            judge: &judge,
            architecture: Architecture::miniature(1),
            train: &cfg,
        };
        let trained = train_variant(ScorerKind::KeyXVisionSpeechCnn, &ds, &spec).unwrap();
        assert_eq!(trained.scorer.params().outputs(), 10);
        assert_eq!(trained.scorer.labels(), keywords.as_slice());
        let m = score_collection(&trained.scorer, &ds.search_collection(Split::Test)).unwrap();
        assert!(m.ids().iter().enumerate().all(|(i, _)| m.row(i).iter().all(|&s| s > 0.0 && s < 1.0)));
    }
}
