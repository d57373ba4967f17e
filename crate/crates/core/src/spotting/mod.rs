//! Scoring a search collection and judging retrievals against stemmed
//! reference translations.

mod metrics;
mod stem;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::FrameMatrix;

pub use metrics::{average_precision, eer, p_at_n, precision_at_k, ranking_order, PrPoint};
pub use stem::{Stemmer, StemmerKind};

/// Utterances scored per `score_batch` call.
pub const SCORE_BATCH: usize = 16;

/// One search-collection item as seen by a scorer.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    /// Length-normalized features; `None` for scorers that ignore speech.
    pub frames: Option<FrameMatrix>,
    /// Reference translation tokens in the query language.
    pub reference: Vec<String>,
}

/// Maps an utterance to one score per label.
pub trait Scorer {
    fn name(&self) -> &str;

    fn labels(&self) -> &[String];

    fn score(&self, utterance: &Utterance) -> Result<Vec<f64>>;

    fn score_batch(&self, utterances: &[&Utterance]) -> Result<Vec<Vec<f64>>> {
        utterances
            .iter()
            .map(|u| {
                self.score(u).map_err(|e| Error::Scoring {
                    id: u.id.clone(),
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

/// Utterance-by-label scores with rows sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    ids: Vec<String>,
    labels: Vec<String>,
    scores: Vec<f64>,
    scorer: String,
}

impl ScoreMatrix {
    /// Rows may arrive in any order; they are sorted by id.
    pub fn new(scorer: impl Into<String>, labels: Vec<String>, rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut rows = rows;
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Validation(format!("duplicate utterance id {}", w[0].0)));
        }
        let mut ids = Vec::with_capacity(rows.len());
        let mut scores = Vec::with_capacity(rows.len() * labels.len());
        for (id, row) in rows {
            if row.len() != labels.len() {
                return Err(Error::Dimension(format!(
                    "{id} has {} scores for {} labels",
                    row.len(),
                    labels.len()
                )));
            }
            if row.iter().any(|s| !s.is_finite()) {
                return Err(Error::NonFinite(format!("scores for {id}")));
            }
            scores.extend(row);
            ids.push(id);
        }
        Ok(Self {
            ids,
            labels,
            scores,
            scorer: scorer.into(),
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn scorer(&self) -> &str {
        &self.scorer
    }

    pub fn num_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.labels.len();
        &self.scores[i * w..(i + 1) * w]
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.ids.len()).map(|i| self.row(i)[j]).collect()
    }

    /// Same matrix with `f` applied to every entry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            scores: self.scores.iter().map(|&s| f(s)).collect(),
            ..self.clone()
        }
    }
}

/// Scores every utterance, batching calls to the scorer.
pub fn score_collection(scorer: &dyn Scorer, utterances: &[Utterance]) -> Result<ScoreMatrix> {
    let mut sorted: Vec<&Utterance> = utterances.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rows = Vec::with_capacity(sorted.len());
    for chunk in sorted.chunks(SCORE_BATCH) {
        let batch = match scorer.score_batch(chunk) {
            Ok(b) => b,
            Err(e @ Error::Scoring { .. }) => return Err(e),
            Err(_) => chunk
                .iter()
                .map(|u| {
                    scorer.score(u).map_err(|e| Error::Scoring {
                        id: u.id.clone(),
                        source: Box::new(e),
                    })
                })
                .collect::<Result<_>>()?,
        };
        rows.extend(chunk.iter().map(|u| u.id.clone()).zip(batch));
    }
    ScoreMatrix::new(scorer.name(), scorer.labels().to_vec(), rows)
}

/// Decides whether a reference translation contains a keyword after stemming.
#[derive(Debug, Default)]
pub struct RelevanceJudge {
    stemmer: Stemmer,
    cache: Mutex<HashMap<String, String>>,
}

impl RelevanceJudge {
    pub fn new(stemmer: Stemmer) -> Self {
        Self {
            stemmer,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn stemmer(&self) -> &Stemmer {
        &self.stemmer
    }

    pub fn keyword_stem(&self, keyword: &str) -> String {
        let mut cache = self.cache.lock().unwrap_or_else(|p| p.into_inner());
        cache
            .entry(keyword.to_string())
            .or_insert_with(|| self.stemmer.stem(keyword))
            .clone()
    }

    pub fn reference_stems<S: AsRef<str>>(&self, reference: &[S]) -> BTreeSet<String> {
        reference.iter().map(|t| self.stemmer.stem(t.as_ref())).collect()
    }
}

pub fn relevance<S: AsRef<str>>(reference: &[S], keyword: &str, judge: &RelevanceJudge) -> bool {
    let k = judge.keyword_stem(keyword);
    reference.iter().any(|t| judge.stemmer.stem(t.as_ref()) == k)
}

/// Utterance ids with their scores, best first.
pub fn rank(scores: &ScoreMatrix, keyword: &str) -> Result<Vec<(String, f64)>> {
    let j = scores
        .label_index(keyword)
        .ok_or_else(|| Error::Validation(format!("keyword {keyword:?} is not scored by {}", scores.scorer)))?;
    let column = scores.column(j);
    Ok(ranking_order(&column, &scores.ids)
        .into_iter()
        .map(|i| (scores.ids[i].clone(), column[i]))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalOptions {
    /// The k of P@k.
    pub k: usize,
    /// Also compute EER over all keyword-utterance pairs at once.
    pub pooled_eer: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { k: 10, pooled_eer: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeywordMetrics {
    pub keyword: String,
    /// Utterances whose reference contains the keyword.
    pub n: usize,
    pub p_at_k: f64,
    pub p_at_n: Option<f64>,
    pub eer: Option<f64>,
}

impl KeywordMetrics {
    /// Whether the keyword counts towards macro averages.
    pub fn included(&self) -> bool {
        self.n >= 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub scorer: String,
    pub k: usize,
    pub num_utterances: usize,
    pub keywords: Vec<KeywordMetrics>,
    /// Keywords with no relevant utterance, excluded from macro averages.
    pub absent: Vec<String>,
    pub macro_p_at_k: Option<f64>,
    pub macro_p_at_n: Option<f64>,
    pub macro_eer: Option<f64>,
    pub pooled_ap: Option<f64>,
    pub pooled_eer: Option<f64>,
    pub pr_curve: Vec<PrPoint>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Full protocol: per-keyword P@k, P@N and EER with macro averages, plus
/// pooled AP over the keyword columns.
pub fn evaluate<S: AsRef<str>>(
    scores: &ScoreMatrix,
    references: &BTreeMap<String, Vec<String>>,
    keywords: &[S],
    judge: &RelevanceJudge,
    options: EvalOptions,
) -> Result<MetricsReport> {
    let mut stems = Vec::with_capacity(scores.num_rows());
    for id in scores.ids() {
        let reference = references.get(id).ok_or_else(|| Error::Missing {
            what: "reference translation",
            id: id.clone(),
        })?;
        stems.push(judge.reference_stems(reference));
    }

    let mut per_keyword = Vec::with_capacity(keywords.len());
    let mut absent = Vec::new();
    let mut pooled_scores = Vec::new();
    let mut pooled_relevance = Vec::new();
    for keyword in keywords {
        let keyword = keyword.as_ref();
        let j = scores
            .label_index(keyword)
            .ok_or_else(|| Error::Validation(format!("keyword {keyword:?} is not scored by {}", scores.scorer)))?;
        let column = scores.column(j);
        let stem = judge.keyword_stem(keyword);
        let relevant: Vec<bool> = stems.iter().map(|s| s.contains(&stem)).collect();
        let ranked: Vec<bool> = ranking_order(&column, scores.ids())
            .into_iter()
            .map(|i| relevant[i])
            .collect();
        let n = relevant.iter().filter(|&&r| r).count();
        if n == 0 {
            absent.push(keyword.to_string());
        }
        per_keyword.push(KeywordMetrics {
            keyword: keyword.to_string(),
            n,
            p_at_k: precision_at_k(&ranked, options.k)?,
            p_at_n: p_at_n(&ranked),
            eer: eer(&column, &relevant)?,
        });
        pooled_scores.extend(column);
        pooled_relevance.extend(relevant);
    }
    if !absent.is_empty() {
        log::warn!("keywords with no relevant test utterance: {}", absent.join(", "));
    }

    let included = || per_keyword.iter().filter(|m| m.included());
    let (pooled_ap, pr_curve) = match average_precision(&pooled_scores, &pooled_relevance) {
        Ok((ap, curve)) => (Some(ap), curve),
        Err(Error::Undefined(_)) => (None, Vec::new()),
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        scorer: scores.scorer.clone(),
        k: options.k,
        num_utterances: scores.num_rows(),
        macro_p_at_k: mean(included().map(|m| m.p_at_k)),
        macro_p_at_n: mean(included().filter_map(|m| m.p_at_n)),
        macro_eer: mean(included().filter_map(|m| m.eer)),
        pooled_ap,
        pooled_eer: if options.pooled_eer {
            eer(&pooled_scores, &pooled_relevance)?
        } else {
            None
        },
        pr_curve,
        keywords: per_keyword,
        absent,
    })
}

impl MetricsReport {
    /// One row per keyword followed by `macro` and `pooled` rows. Missing
    /// values are left empty.
    pub fn to_csv(&self) -> String {
        let mut s = format!("keyword,n,p_at_{},p_at_n,eer,ap\n", self.k);
        for m in &self.keywords {
            s.push_str(&format!(
                "{},{},{:.6},{},{},\n",
                m.keyword,
                m.n,
                m.p_at_k,
                fmt_opt(m.p_at_n),
                fmt_opt(m.eer)
            ));
        }
        let included = self.keywords.iter().filter(|m| m.included()).count();
        s.push_str(&format!(
            "macro,{included},{},{},{},\n",
            fmt_opt(self.macro_p_at_k),
            fmt_opt(self.macro_p_at_n),
            fmt_opt(self.macro_eer)
        ));
        let relevant: usize = self.keywords.iter().map(|m| m.n).sum();
        s.push_str(&format!(
            "pooled,{relevant},,,{},{}\n",
            fmt_opt(self.pooled_eer),
            fmt_opt(self.pooled_ap)
        ));
        s
    }

    pub fn pr_curve_csv(&self) -> String {
        let mut s = String::from("threshold,precision,recall\n");
        for p in &self.pr_curve {
            s.push_str(&format!("{:.6},{:.6},{:.6}\n", p.threshold, p.precision, p.recall));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `metrics.csv`, `metrics.json` and `pr_curve.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [
            ("metrics.csv", self.to_csv()),
            ("metrics.json", self.to_json()?),
            ("pr_curve.csv", self.pr_curve_csv()),
        ] {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Top-`k` retrievals per keyword with their references, for inspection.
pub fn ranked_lists_csv<S: AsRef<str>>(
    scores: &ScoreMatrix,
    references: &BTreeMap<String, Vec<String>>,
    keywords: &[S],
    judge: &RelevanceJudge,
    k: usize,
) -> Result<String> {
    let mut s = String::from("keyword,rank,id,score,relevant,reference\n");
    for keyword in keywords {
        let keyword = keyword.as_ref();
        for (r, (id, score)) in rank(scores, keyword)?.into_iter().take(k).enumerate() {
            let reference = references.get(&id).ok_or_else(|| Error::Missing {
                what: "reference translation",
                id: id.clone(),
            })?;
            let hit = relevance(reference, keyword, judge);
            s.push_str(&format!(
                "{keyword},{},{id},{score:.6},{},{}\n",
                r + 1,
                hit as u8,
                reference.join(" ")
            ));
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<String>, BTreeMap<String, Vec<f64>>);

    impl Scorer for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn labels(&self) -> &[String] {
            &self.0
        }
        fn score(&self, u: &Utterance) -> Result<Vec<f64>> {
            self.1
                .get(&u.id)
                .cloned()
                .ok_or_else(|| Error::Validation("unknown".into()))
        }
    }

    fn utt(id: &str, reference: &[&str]) -> Utterance {
        Utterance {
            id: id.into(),
            frames: None,
            reference: reference.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn refs(utts: &[Utterance]) -> BTreeMap<String, Vec<String>> {
        utts.iter().map(|u| (u.id.clone(), u.reference.clone())).collect()
    }

    #[test]
    fn relevance_examples() {
        let plain = RelevanceJudge::default();
        assert!(relevance(&["ein", "Hund"], "Hund", &plain));
        assert!(!relevance(&["ein", "Hund"], "Katze", &plain));
        let german = RelevanceJudge::new(Stemmer::GermanSuffix);
        assert!(relevance(&["ein", "groß", "Hund"], "großen", &german));
        assert!(!relevance(&["ein", "groß", "Hund"], "großen", &plain));
    }

    #[test]
    fn score_collection_sorts_and_names_failures() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let table: BTreeMap<_, _> = [("u2".to_string(), vec![0.1, 0.2]), ("u1".to_string(), vec![0.3, 0.4])].into();
        let scorer = Fixed(labels, table);
        let m = score_collection(&scorer, &[utt("u2", &[]), utt("u1", &[])]).unwrap();
        assert_eq!(m.ids(), ["u1", "u2"]);
        assert_eq!(m.row(0), [0.3, 0.4]);
        let err = score_collection(&scorer, &[utt("u1", &[]), utt("u9", &[])]).unwrap_err();
        assert!(err.to_string().contains("u9"), "{err}");
    }

    #[test]
    fn rank_examples() {
        let labels = vec!["k".to_string()];
        let m = ScoreMatrix::new("s", labels.clone(), vec![("u2".into(), vec![0.1]), ("u1".into(), vec![0.9])]).unwrap();
        let ids: Vec<_> = rank(&m, "k").unwrap().into_iter().map(|(id, _)| id).collect();
        assert_eq!(ids, ["u1", "u2"]);
        let tied = ScoreMatrix::new("s", labels, vec![("u2".into(), vec![0.5]), ("u1".into(), vec![0.5])]).unwrap();
        let ids: Vec<_> = rank(&tied, "k").unwrap().into_iter().map(|(id, _)| id).collect();
        assert_eq!(ids, ["u1", "u2"]);
        assert!(rank(&tied, "zz").is_err());
    }

    #[test]
    fn perfect_scorer_report() {
        let utts: Vec<_> = (0..12)
            .map(|i| utt(&format!("u{i:02}"), if i % 3 == 0 { &["Hund", "Feld"] } else { &["Feld"] }))
            .collect();
        let labels = vec!["Hund".to_string(), "Feld".to_string(), "Katze".to_string()];
        let rows = utts
            .iter()
            .map(|u| {
                let r: Vec<f64> = labels.iter().map(|l| u.reference.contains(l) as u8 as f64).collect();
                (u.id.clone(), r)
            })
            .collect();
        let m = ScoreMatrix::new("oracle", labels.clone(), rows).unwrap();
        let judge = RelevanceJudge::default();
        let report = evaluate(&m, &refs(&utts), &labels, &judge, EvalOptions::default()).unwrap();
        assert_eq!(report.absent, ["Katze"]);
        assert_eq!(report.keywords[0].n, 4);
        assert_eq!(report.keywords[0].p_at_n, Some(1.0));
        assert_eq!(report.keywords[0].eer, Some(0.0));
        // Feld is relevant everywhere, so its EER is undefined.
        assert_eq!(report.keywords[1].eer, None);
        assert_eq!(report.macro_p_at_n, Some(1.0));
        assert_eq!(report.macro_eer, Some(0.0));
        assert_eq!(report.pooled_ap, Some(1.0));
        // P@10 of Hund is 4/10: only four relevant utterances exist.
        assert_eq!(report.macro_p_at_k, Some((0.4 + 1.0) / 2.0));
        let csv = report.to_csv();
        assert!(csv.starts_with("keyword,n,p_at_10,p_at_n,eer,ap\nHund,4,0.400000,1.000000,0.000000,\n"));
        assert!(csv.contains("Katze,0,0.000000,,,\n"));
        assert!(csv.ends_with("pooled,16,,,,1.000000\n"));
    }

    #[test]
    fn evaluate_rejects_missing_reference_and_keyword() {
        let m = ScoreMatrix::new("s", vec!["k".into()], vec![("u1".into(), vec![0.5])]).unwrap();
        let judge = RelevanceJudge::default();
        let err = evaluate(&m, &BTreeMap::new(), &["k"], &judge, EvalOptions::default()).unwrap_err();
        assert!(err.to_string().contains("u1"));
        let r: BTreeMap<_, _> = [("u1".to_string(), vec!["k".to_string()])].into();
        assert!(evaluate(&m, &r, &["x"], &judge, EvalOptions::default()).is_err());
    }

    #[test]
    fn score_matrix_validation() {
        assert!(ScoreMatrix::new("s", vec!["k".into()], vec![("u".into(), vec![f64::NAN])]).is_err());
        assert!(ScoreMatrix::new("s", vec!["k".into()], vec![("u".into(), vec![0.1, 0.2])]).is_err());
        assert!(ScoreMatrix::new("s", vec!["k".into()], vec![("u".into(), vec![0.1]), ("u".into(), vec![0.2])]).is_err());
    }
}
