//! Supervision vectors: the output vocabulary, binary cross-lingual
//! bag-of-words targets and soft visual-tag targets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::TranslationLexicon;
use crate::error::{Error, Result};
use crate::features::{read_frame_file, write_frame_file, FrameMatrix};
use crate::seed;
use crate::spotting::Stemmer;

/// Ordered query-language word types; position is the output dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    stop_list: BTreeSet<String>,
}

impl Vocabulary {
    pub fn new(words: Vec<String>, stop_list: BTreeSet<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if stop_list.contains(w) {
                return Err(Error::Validation(format!("stop word {w:?} in vocabulary")));
            }
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Self {
            words,
            index,
            stop_list,
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn stop_list(&self) -> &BTreeSet<String> {
        &self.stop_list
    }

    /// Hex SHA-256 over the newline-joined words.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// One word per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.words.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let words = read_word_list(path)?;
        Self::new(words, BTreeSet::new())
    }
}

/// Reads a plain-text word list, one word per line, ignoring blank lines.
pub fn read_word_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// The `size` most frequent non-stop word types; ties break lexicographically.
pub fn build_vocabulary<S: AsRef<str>>(
    token_lists: &[Vec<S>],
    size: usize,
    stop_list: &BTreeSet<String>,
) -> Result<Vocabulary> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for tok in token_lists.iter().flatten() {
        let t = tok.as_ref();
        if !stop_list.contains(t) {
            *counts.entry(t).or_default() += 1;
        }
    }
    if counts.len() < size {
        return Err(Error::Validation(format!(
            "asked for {size} vocabulary words but only {} non-stop types exist",
            counts.len()
        )));
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    // BTreeMap iteration is already lexicographic; a stable sort keeps it for ties.
    ranked.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
    let words = ranked.into_iter().take(size).map(|(w, _)| w.to_string()).collect();
    Vocabulary::new(words, stop_list.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Soft,
    Binary,
}

/// Per-utterance supervision in `[0, 1]^W`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    values: Vec<f32>,
    kind: TargetKind,
}

impl TargetVector {
    pub fn soft(values: Vec<f32>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("soft target value {v} outside [0, 1]")));
        }
        Ok(Self {
            values,
            kind: TargetKind::Soft,
        })
    }

    pub fn binary(values: Vec<f32>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::Validation(format!("binary target value {v} is not 0 or 1")));
        }
        Ok(Self {
            values,
            kind: TargetKind::Binary,
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps only the given dimensions, in the given order.
    pub fn select(&self, dims: &[usize]) -> TargetVector {
        TargetVector {
            values: dims.iter().map(|&d| self.values[d]).collect(),
            kind: self.kind,
        }
    }

    /// Entries `>= threshold` become 1, the rest 0.
    pub fn binarize(&self, threshold: f32) -> TargetVector {
        TargetVector {
            values: self
                .values
                .iter()
                .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
                .collect(),
            kind: TargetKind::Binary,
        }
    }
}

/// Multi-hot vector marking vocabulary words whose stem occurs in `translation`.
pub fn build_bow_target<S: AsRef<str>>(
    translation: &[S],
    vocab: &Vocabulary,
    stemmer: &Stemmer,
) -> TargetVector {
    let present: BTreeSet<String> = translation.iter().map(|t| stemmer.stem(t.as_ref())).collect();
    let values = vocab
        .words()
        .iter()
        .map(|w| if present.contains(&stemmer.stem(w)) { 1.0 } else { 0.0 })
        .collect();
    TargetVector {
        values,
        kind: TargetKind::Binary,
    }
}

/// Vocabulary indicator of all lexicon translations of `concepts`.
pub fn concept_indicator<S: AsRef<str>>(
    concepts: &[S],
    lexicon: &TranslationLexicon,
    vocab: &Vocabulary,
) -> TargetVector {
    let mut values = vec![0.0; vocab.len()];
    for c in concepts {
        for t in lexicon.translations(c.as_ref()) {
            if let Some(i) = vocab.index(t) {
                values[i] = 1.0;
            }
        }
    }
    TargetVector {
        values,
        kind: TargetKind::Binary,
    }
}

/// Stand-in for an external visual tagger: `p_hi` on translations of the
/// visible concepts, `p_lo` elsewhere, plus clipped Gaussian noise.
pub fn simulate_visual_tags<S: AsRef<str>>(
    concepts: &[S],
    lexicon: &TranslationLexicon,
    vocab: &Vocabulary,
    p_hi: f64,
    p_lo: f64,
    noise_std: f64,
    seed: u64,
) -> Result<TargetVector> {
    if !(p_lo < p_hi) {
        return Err(Error::Validation(format!("tagger needs p_lo < p_hi, got {p_lo} and {p_hi}")));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::Validation("tag noise std must be finite and non-negative".into()));
    }
    let hits = concept_indicator(concepts, lexicon, vocab);
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, noise_std).expect("validated std");
    let values = hits
        .values
        .iter()
        .map(|&h| {
            let base = if h == 1.0 { p_hi } else { p_lo };
            let v = if noise_std > 0.0 { base + noise.sample(&mut rng) } else { base };
            v.clamp(0.0, 1.0) as f32
        })
        .collect();
    Ok(TargetVector {
        values,
        kind: TargetKind::Soft,
    })
}

#[derive(Serialize, Deserialize)]
struct IndexLine {
    row: usize,
    id: String,
}

/// Sidecar path mapping rows of a tag-vector file to utterance ids.
pub fn tag_index_path(path: &Path) -> PathBuf {
    path.with_extension("index.jsonl")
}

/// Writes soft targets as a `KWSF` matrix (one row per id, in map order)
/// plus its JSON-lines row index.
pub fn write_tag_vectors(path: &Path, tags: &BTreeMap<String, TargetVector>) -> Result<()> {
    let dim = tags.values().next().map_or(0, TargetVector::len);
    let mut data = Vec::with_capacity(tags.len() * dim);
    let mut index = Vec::new();
    for (row, (id, t)) in tags.iter().enumerate() {
        if t.len() != dim {
            return Err(Error::Dimension(format!("tag vector for {id} has length {}", t.len())));
        }
        data.extend_from_slice(&t.values);
        serde_json::to_writer(&mut index, &IndexLine { row, id: id.clone() })?;
        index.push(b'\n');
    }
    let matrix = FrameMatrix::new(data, tags.len(), dim.max(1))?;
    write_frame_file(path, &matrix)?;
    let ipath = tag_index_path(path);
    let mut f = fs::File::create(&ipath).map_err(|e| Error::io(&ipath, e))?;
    f.write_all(&index).map_err(|e| Error::io(&ipath, e))
}

/// Loads tagger outputs for a vocabulary of size `W`.
pub fn load_tag_vectors(path: &Path, vocab: &Vocabulary) -> Result<BTreeMap<String, TargetVector>> {
    let matrix = read_frame_file(path)?;
    if matrix.dim() != vocab.len() {
        return Err(Error::Dimension(format!(
            "{} has {} columns but the vocabulary has {} words",
            path.display(),
            matrix.dim(),
            vocab.len()
        )));
    }
    let ipath = tag_index_path(path);
    let text = fs::read_to_string(&ipath).map_err(|e| Error::io(&ipath, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let entry: IndexLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: ipath.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if entry.row >= matrix.num_frames() {
            return Err(Error::Format {
                path: ipath.clone(),
                message: format!("row {} out of range for {}", entry.row, entry.id),
            });
        }
        let row = matrix.row(entry.row).to_vec();
        let t = TargetVector::soft(row).map_err(|e| {
            Error::Validation(format!("tag vector for {}: {e}", entry.id))
        })?;
        if out.insert(entry.id.clone(), t).is_some() {
            return Err(Error::Validation(format!("duplicate id {:?} in {}", entry.id, ipath.display())));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    fn lexicon() -> TranslationLexicon {
        let mut m = BTreeMap::new();
        m.insert("dog".to_string(), toks(&["Hund"]));
        m.insert("field".to_string(), toks(&["Feld", "Wiese"]));
        m.insert("ball".to_string(), toks(&["Ball"]));
        TranslationLexicon::new(m).unwrap()
    }

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::new(toks(words), BTreeSet::new()).unwrap()
    }

    #[test]
    fn vocabulary_is_frequency_ordered() {
        let lists = vec![toks(&["a", "a", "a", "b", "c"]), toks(&["a", "a", "b", "b"])];
        let none = BTreeSet::new();
        assert_eq!(build_vocabulary(&lists, 2, &none).unwrap().words(), &["a", "b"]);
        let stop: BTreeSet<String> = ["a".to_string()].into();
        assert_eq!(build_vocabulary(&lists, 2, &stop).unwrap().words(), &["b", "c"]);
        let tie = vec![toks(&["y", "x", "y", "x"])];
        assert_eq!(build_vocabulary(&tie, 1, &none).unwrap().words(), &["x"]);
        assert!(matches!(build_vocabulary(&tie, 3, &none), Err(Error::Validation(_))));
    }

    #[test]
    fn vocabulary_indices_are_a_bijection() {
        let v = vocab(&["c", "a", "b"]);
        for (i, w) in v.words().iter().enumerate() {
            assert_eq!(v.index(w), Some(i));
        }
        assert!(Vocabulary::new(toks(&["a", "a"]), BTreeSet::new()).is_err());
    }

    #[test]
    fn bow_target_ignores_counts_and_oov() {
        let v = vocab(&["Hund", "Ball", "Feld"]);
        let t = build_bow_target(&toks(&["Hund", "Hund", "Hund", "Katze"]), &v, &Stemmer::Identity);
        assert_eq!(t.values(), &[1.0, 0.0, 0.0]);
        assert_eq!(t.kind(), TargetKind::Binary);
        let empty = build_bow_target(&toks(&["Katze"]), &v, &Stemmer::Identity);
        assert!(empty.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn bow_target_matches_inflections_through_stemmer() {
        let v = vocab(&["groß", "Hund"]);
        let t = build_bow_target(&toks(&["ein", "großen", "Hunde"]), &v, &Stemmer::GermanSuffix);
        assert_eq!(t.values(), &[1.0, 1.0]);
        let t = build_bow_target(&toks(&["ein", "großen"]), &v, &Stemmer::Identity);
        assert_eq!(t.values(), &[0.0, 0.0]);
    }

    #[test]
    fn noiseless_tags_are_exactly_two_level() {
        let v = vocab(&["Ball", "Feld", "Hund", "Wiese"]);
        let t = simulate_visual_tags(&["dog"], &lexicon(), &v, 0.9, 0.05, 0.0, 3).unwrap();
        assert_eq!(t.values(), &[0.05, 0.05, 0.9, 0.05]);
        // Synonyms are all activated.
        let t = simulate_visual_tags(&["field"], &lexicon(), &v, 0.9, 0.05, 0.0, 3).unwrap();
        assert_eq!(t.values(), &[0.05, 0.9, 0.05, 0.9]);
    }

    #[test]
    fn noisy_tags_stay_in_unit_interval_and_are_seeded() {
        let v = vocab(&["Ball", "Feld", "Hund", "Wiese"]);
        for s in 0..200 {
            let t = simulate_visual_tags(&["dog", "ball"], &lexicon(), &v, 0.9, 0.05, 0.3, s).unwrap();
            assert!(t.values().iter().all(|x| (0.0..=1.0).contains(x)));
        }
        let a = simulate_visual_tags(&["dog"], &lexicon(), &v, 0.9, 0.05, 0.3, 11).unwrap();
        let b = simulate_visual_tags(&["dog"], &lexicon(), &v, 0.9, 0.05, 0.3, 11).unwrap();
        assert_eq!(a, b);
        assert!(simulate_visual_tags(&["dog"], &lexicon(), &v, 0.1, 0.5, 0.0, 1).is_err());
    }

    #[test]
    fn ideal_tagger_binarizes_to_bow_target() {
        // Identity lexicon without synonyms: concepts equal translation words.
        let words = ["Ball", "Hund", "Feld"];
        let mut m = BTreeMap::new();
        for w in words {
            m.insert(w.to_string(), toks(&[w]));
        }
        let lex = TranslationLexicon::new(m).unwrap();
        let v = vocab(&words);
        for tr in [vec!["Hund"], vec!["Ball", "Feld"], vec![]] {
            let tags = simulate_visual_tags(&tr, &lex, &v, 0.9, 0.05, 0.0, 0).unwrap();
            assert_eq!(tags.binarize(0.5), build_bow_target(&tr, &v, &Stemmer::Identity));
        }
    }

    #[test]
    fn tag_files_round_trip_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tags.kwsf");
        let v = vocab(&["a", "b"]);
        let mut tags = BTreeMap::new();
        tags.insert("u2".to_string(), TargetVector::soft(vec![0.5, 0.25]).unwrap());
        tags.insert("u1".to_string(), TargetVector::soft(vec![1.0, 0.0]).unwrap());
        write_tag_vectors(&path, &tags).unwrap();
        assert_eq!(load_tag_vectors(&path, &v).unwrap(), tags);

        let wrong = vocab(&["a", "b", "c"]);
        assert!(matches!(load_tag_vectors(&path, &wrong), Err(Error::Dimension(_))));

        let bad = FrameMatrix::new(vec![1.2, 0.0], 1, 2).unwrap();
        write_frame_file(&path, &bad).unwrap();
        fs::write(tag_index_path(&path), "{\"row\":0,\"id\":\"u9\"}\n").unwrap();
        let err = load_tag_vectors(&path, &v).unwrap_err();
        assert!(err.to_string().contains("u9"), "{err}");
    }

    #[test]
    fn thousand_word_tag_file_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tags.kwsf");
        let words: Vec<String> = (0..1000).map(|i| format!("w{i:04}")).collect();
        let v = Vocabulary::new(words, BTreeSet::new()).unwrap();
        let mut tags = BTreeMap::new();
        tags.insert("u1".to_string(), TargetVector::soft(vec![0.1; 1000]).unwrap());
        write_tag_vectors(&path, &tags).unwrap();
        assert_eq!(load_tag_vectors(&path, &v).unwrap()["u1"].len(), 1000);
    }
}
