//! The commands behind `kws`: artifact layout, locking and each pipeline step.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use kws_core::baselines::{train_variant, NetworkScorer, PriorScorer, ScorerKind, VariantSpec, VisionScorer};
use kws_core::corpus::{
    generate_synthetic, load_manifest, select_keywords, write_manifest, AudioSource, Corpus, Split,
    TranslationLexicon, UtteranceRecord,
};
use kws_core::dataset::{load_audio, prepare, Dataset, PrepareOptions};
use kws_core::features::{write_frame_file, Standardizer};
use kws_core::network::{read_checkpoint, write_checkpoint, CheckpointMeta};
use kws_core::spotting::{
    evaluate as evaluate_scores, rank, ranked_lists_csv, relevance, score_collection, EvalOptions, RelevanceJudge,
    Scorer, Stemmer,
};
use kws_core::targets::{write_tag_vectors, Vocabulary};

use crate::config::RunConfig;

/// Where every artifact lives under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn manifest(&self) -> PathBuf {
        self.corpus_dir().join("manifest.jsonl")
    }

    pub fn corpus_meta(&self) -> PathBuf {
        self.corpus_dir().join("corpus.json")
    }

    pub fn tags(&self) -> PathBuf {
        self.corpus_dir().join("tags.kwsf")
    }

    pub fn lexicon(&self) -> PathBuf {
        self.corpus_dir().join("lexicon.json")
    }

    pub fn vocab(&self) -> PathBuf {
        self.corpus_dir().join("vocab.txt")
    }

    pub fn features_dir(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn model_dir(&self, kind: ScorerKind) -> PathBuf {
        self.root.join("models").join(kind.as_str())
    }

    pub fn checkpoint(&self, kind: ScorerKind) -> PathBuf {
        self.model_dir(kind).join("checkpoint.kwsm")
    }

    pub fn history(&self, kind: ScorerKind) -> PathBuf {
        self.model_dir(kind).join("history.csv")
    }

    pub fn eval_root(&self, split: Split) -> PathBuf {
        self.root.join("eval").join(split.as_str())
    }

    pub fn eval_dir(&self, split: Split, kind: ScorerKind) -> PathBuf {
        self.eval_root(split).join(kind.as_str())
    }

    pub fn report(&self, split: Split) -> PathBuf {
        self.root.join(format!("report_{split}.csv"))
    }

    pub fn lock(&self) -> PathBuf {
        self.root.join(".lock")
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(layout: &Layout) -> Result<Self> {
        fs::create_dir_all(layout.root()).with_context(|| format!("creating {}", layout.root().display()))?;
        let path = layout.lock();
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id()).ok();
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "{} is in use by another run (delete {} if that run is gone)",
                layout.root().display(),
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub config_hash: String,
    pub corpus_hash: String,
    pub utterances: usize,
    pub vocab_hash: String,
}

/// Sidecar of one evaluation, carrying the headline numbers for `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMeta {
    pub config_hash: String,
    pub model: ScorerKind,
    pub split: Split,
    pub keywords: Vec<String>,
    pub k: usize,
    pub p_at_k: Option<f64>,
    pub p_at_n: Option<f64>,
    pub eer: Option<f64>,
    pub ap: Option<f64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Corpus, vocabulary and judge shared by all commands.
pub struct Experiment {
    pub config: RunConfig,
    pub layout: Layout,
    pub corpus: Corpus,
    pub vocab: Vocabulary,
    pub lexicon: Option<TranslationLexicon>,
    pub judge: RelevanceJudge,
}

impl Experiment {
    /// Loads the configured corpus. A synthetic corpus is generated first if
    /// the output directory does not hold one yet.
    pub fn load(config: &RunConfig, out: &mut dyn Write) -> Result<Self> {
        let layout = Layout::new(&config.out_dir);
        let judge = RelevanceJudge::new(Stemmer::from(config.stemmer));
        if let Some(manifest) = &config.manifest {
            let vocab_path = config.vocab.as_ref().expect("validated by RunConfig");
            let corpus = load_manifest(manifest)?;
            let vocab = Vocabulary::load(vocab_path)?;
            let lexicon = config.lexicon.as_deref().map(TranslationLexicon::load).transpose()?;
            return Ok(Self {
                config: config.clone(),
                layout,
                corpus,
                vocab,
                lexicon,
                judge,
            });
        }
        match read_json::<CorpusMeta>(&layout.corpus_meta()) {
            Ok(meta) if meta.corpus_hash == config.corpus_hash() => {}
            Ok(_) => bail!(
                "{} was generated from different synthetic settings; run `kws generate` again",
                layout.corpus_dir().display()
            ),
            Err(_) => {
                log::info!("no generated corpus in {}; generating", layout.corpus_dir().display());
                write_synthetic(config, &layout, out)?;
            }
        }
        Ok(Self {
            config: config.clone(),
            corpus: load_manifest(&layout.manifest())?,
            vocab: Vocabulary::load(&layout.vocab())?,
            lexicon: Some(TranslationLexicon::load(&layout.lexicon())?),
            layout,
            judge,
        })
    }

    pub fn dataset(&self, standardizer: Option<Standardizer>, pad_frames: usize) -> Result<Dataset> {
        Ok(prepare(
            &self.corpus,
            &self.vocab,
            &BTreeMap::new(),
            &PrepareOptions {
                features: self.config.features.clone(),
                pad_frames,
                standardizer,
            },
        )?)
    }

    /// Configured keywords, or a seeded draw from words frequent in the test references.
    pub fn keywords(&self) -> Result<Vec<String>> {
        let cfg = &self.config.keywords;
        if let Some(list) = &cfg.list {
            if list.is_empty() {
                bail!("keywords.list is empty");
            }
            if let Some(k) = list.iter().find(|k| !self.vocab.contains(k)) {
                bail!("keyword {k:?} is not in the vocabulary");
            }
            return Ok(list.clone());
        }
        let references: Vec<Vec<String>> = self
            .corpus
            .split(Split::Test)
            .iter()
            .filter_map(|r| r.translation.clone())
            .collect();
        Ok(select_keywords(
            &self.vocab,
            &references,
            cfg.count,
            cfg.min_occurrences,
            self.judge.stemmer(),
            kws_core::seed::derive(self.config.seed, "keywords"),
        )?)
    }
}

fn write_synthetic(config: &RunConfig, layout: &Layout, out: &mut dyn Write) -> Result<()> {
    let synthetic = config
        .synthetic
        .as_ref()
        .ok_or_else(|| anyhow!("`generate` needs a synthetic corpus; this configuration reads a manifest"))?;
    let syn = generate_synthetic(synthetic)?;
    let dir = layout.corpus_dir();
    if dir.exists() {
        fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).with_context(|| format!("creating {}", frames_dir.display()))?;

    let tags_path = layout.tags();
    write_tag_vectors(&tags_path, &syn.true_tags)?;
    let mut records = Vec::with_capacity(syn.corpus.len());
    for r in syn.corpus.records() {
        let AudioSource::Frames(frames) = &r.audio else {
            unreachable!("synthetic records hold frames")
        };
        let path = frames_dir.join(format!("{}.kwsf", r.id));
        write_frame_file(&path, frames)?;
        records.push(UtteranceRecord {
            audio: AudioSource::FrameFile(path),
            tags_path: Some(tags_path.clone()),
            ..r.clone()
        });
    }
    write_manifest(&layout.manifest(), &Corpus::new(records)?)?;
    syn.lexicon.save(&layout.lexicon())?;
    syn.vocab.save(&layout.vocab())?;
    write_json(
        &layout.corpus_meta(),
        &CorpusMeta {
            config_hash: config.hash(),
            corpus_hash: config.corpus_hash(),
            utterances: syn.corpus.len(),
            vocab_hash: syn.vocab.hash(),
        },
    )?;
    let counts: Vec<String> = Split::ALL
        .iter()
        .map(|&s| format!("{} {s}", syn.corpus.split(s).len()))
        .collect();
    writeln!(
        out,
        "generated {} utterances ({}), {} tagger words -> {}",
        syn.corpus.len(),
        counts.join(", "),
        syn.vocab.len(),
        dir.display()
    )?;
    Ok(())
}

pub fn generate(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    write_synthetic(config, &Layout::new(&config.out_dir), out)
}

/// Converts every waveform in the manifest to a frame file and writes a
/// manifest that points at them.
pub fn featurize(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let Some(manifest) = &config.manifest else {
        writeln!(out, "synthetic corpora are generated as frames; nothing to featurize")?;
        return Ok(());
    };
    let layout = Layout::new(&config.out_dir);
    let corpus = load_manifest(manifest)?;
    let dir = layout.features_dir();
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).with_context(|| format!("creating {}", frames_dir.display()))?;
    let mut converted = 0;
    let mut records = Vec::with_capacity(corpus.len());
    for r in corpus.records() {
        let audio = match &r.audio {
            AudioSource::Waveform(_) => {
                let frames = load_audio(r, &config.features).with_context(|| format!("featurizing {}", r.id))?;
                let path = frames_dir.join(format!("{}.kwsf", r.id));
                write_frame_file(&path, &frames)?;
                converted += 1;
                AudioSource::FrameFile(path)
            }
            other => other.clone(),
        };
        records.push(UtteranceRecord { audio, ..r.clone() });
    }
    let out_manifest = dir.join("manifest.jsonl");
    write_manifest(&out_manifest, &Corpus::new(records)?)?;
    writeln!(
        out,
        "featurized {converted} of {} utterances; point `manifest` at {}",
        corpus.len(),
        out_manifest.display()
    )?;
    Ok(())
}

fn feature_hash(config: &RunConfig) -> String {
    let json = serde_json::to_string(&config.features).expect("features serialize");
    hex::encode(Sha256::digest(json.as_bytes()))
}

pub fn train(config: &RunConfig, kind: ScorerKind, out: &mut dyn Write) -> Result<()> {
    if !kind.is_trainable() {
        bail!("{kind} has no trainable parameters; evaluate it directly");
    }
    let exp = Experiment::load(config, out)?;
    let dataset = exp.dataset(None, config.pad_frames())?;
    let keywords = exp.keywords()?;
    let spec = VariantSpec {
        vocab: &exp.vocab,
        keywords: &keywords,
        lexicon: exp.lexicon.as_ref(),
        judge: &exp.judge,
        architecture: config.network.architecture(),
        train: &config.train,
    };
    let trained = train_variant(kind, &dataset, &spec)?;
    let dir = exp.layout.model_dir(kind);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let meta = CheckpointMeta {
        kind: kind.as_str().to_string(),
        labels: trained.scorer.labels().to_vec(),
        vocab_hash: exp.vocab.hash(),
        feature_config_hash: feature_hash(config),
        config_hash: config.hash(),
        seed: config.seed,
        pad_frames: dataset.pad_frames,
        standardizer: Some(dataset.standardizer.clone()),
        best_epoch: trained.history.best_epoch,
    };
    let path = exp.layout.checkpoint(kind);
    write_checkpoint(&path, trained.scorer.params(), &meta)?;
    trained.history.write_csv(&exp.layout.history(kind))?;
    let best = trained.history.best().expect("at least one epoch");
    writeln!(
        out,
        "trained {kind} for {} epochs; best epoch {} (dev loss {:.4}) -> {}",
        trained.history.epochs.len(),
        best.epoch,
        best.dev_loss,
        path.display()
    )?;
    Ok(())
}

/// A model named by kind, or a checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelRef {
    Kind(ScorerKind),
    Checkpoint(PathBuf),
}

impl ModelRef {
    pub fn parse(s: &str) -> Self {
        match s.parse::<ScorerKind>() {
            Ok(kind) => ModelRef::Kind(kind),
            Err(_) => ModelRef::Checkpoint(PathBuf::from(s)),
        }
    }
}

/// Builds the scorer and the dataset it should read.
fn load_scorer(exp: &Experiment, model: &ModelRef) -> Result<(Box<dyn Scorer>, ScorerKind, Dataset)> {
    let path = match model {
        ModelRef::Kind(ScorerKind::DeTextPrior) => {
            let dataset = exp.dataset(None, exp.config.pad_frames())?;
            let references: Vec<Vec<String>> = dataset.references(Split::Train)?.into_values().collect();
            let scorer = PriorScorer::fit(&references, &exp.vocab, &exp.judge);
            return Ok((Box::new(scorer), ScorerKind::DeTextPrior, dataset));
        }
        ModelRef::Kind(ScorerKind::DeVisionCnn) => {
            let dataset = exp.dataset(None, exp.config.pad_frames())?;
            let tags = dataset.utterances.iter().filter_map(|u| Some((u.id.clone(), u.tags.clone()?))).collect();
            let scorer = VisionScorer::new(&exp.vocab, tags)?;
            return Ok((Box::new(scorer), ScorerKind::DeVisionCnn, dataset));
        }
        ModelRef::Kind(kind) => exp.layout.checkpoint(*kind),
        ModelRef::Checkpoint(p) => p.clone(),
    };
    let (params, meta) =
        read_checkpoint(&path).with_context(|| format!("loading {} (has it been trained?)", path.display()))?;
    let kind: ScorerKind = meta.kind.parse()?;
    if meta.config_hash != exp.config.hash() {
        bail!(
            "{} was trained under configuration {} but the current one is {}; refusing to mix runs",
            path.display(),
            &meta.config_hash[..12],
            &exp.config.hash()[..12]
        );
    }
    if meta.vocab_hash != exp.vocab.hash() {
        bail!("{} was trained against a different vocabulary", path.display());
    }
    let dataset = exp.dataset(meta.standardizer.clone(), meta.pad_frames)?;
    let scorer = NetworkScorer::new(kind, meta.labels, params)?;
    Ok((Box::new(scorer), kind, dataset))
}

pub fn evaluate(config: &RunConfig, model: &ModelRef, split: Split, out: &mut dyn Write) -> Result<EvalMeta> {
    let exp = Experiment::load(config, out)?;
    let keywords = exp.keywords()?;
    let (scorer, kind, dataset) = load_scorer(&exp, model)?;
    let collection = dataset.search_collection(split);
    if collection.is_empty() {
        bail!("the {split} split is empty");
    }
    let references = dataset.references(split)?;
    let scores = score_collection(scorer.as_ref(), &collection)?;
    let options = EvalOptions {
        k: config.eval.k,
        pooled_eer: config.eval.pooled_eer,
    };
    let report = evaluate_scores(&scores, &references, &keywords, &exp.judge, options)?;
    let dir = exp.layout.eval_dir(split, kind);
    report.write(&dir)?;
    let ranked = ranked_lists_csv(&scores, &references, &keywords, &exp.judge, config.eval.ranked_top)?;
    fs::write(dir.join("ranked.csv"), ranked).with_context(|| format!("writing ranked list in {}", dir.display()))?;
    let meta = EvalMeta {
        config_hash: config.hash(),
        model: kind,
        split,
        keywords,
        k: report.k,
        p_at_k: report.macro_p_at_k,
        p_at_n: report.macro_p_at_n,
        eer: report.macro_eer,
        ap: report.pooled_ap,
    };
    write_json(&dir.join("eval.json"), &meta)?;
    writeln!(
        out,
        "{kind} on {split} ({} utterances, {} keywords): P@{} {}  P@N {}  EER {}  AP {} -> {}",
        report.num_utterances,
        meta.keywords.len(),
        report.k,
        percent(meta.p_at_k),
        percent(meta.p_at_n),
        percent(meta.eer),
        percent(meta.ap),
        dir.display()
    )?;
    Ok(meta)
}

fn percent(v: Option<f64>) -> String {
    v.map(|x| format!("{:.1}", 100.0 * x)).unwrap_or_else(|| "-".into())
}

/// Ranked retrievals for one keyword, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
    pub relevant: bool,
    pub reference: Vec<String>,
}

pub fn search(
    config: &RunConfig,
    model: &ModelRef,
    keyword: &str,
    top: usize,
    split: Split,
    out: &mut dyn Write,
) -> Result<Vec<SearchHit>> {
    let exp = Experiment::load(config, out)?;
    let (scorer, kind, dataset) = load_scorer(&exp, model)?;
    let collection = dataset.search_collection(split);
    let scores = score_collection(scorer.as_ref(), &collection)?;
    let references = dataset.references(split)?;
    let hits: Vec<SearchHit> = rank(&scores, keyword)?
        .into_iter()
        .take(top)
        .map(|(id, score)| {
            let reference = references[&id].clone();
            SearchHit {
                relevant: relevance(&reference, keyword, &exp.judge),
                id,
                score,
                reference,
            }
        })
        .collect();
    writeln!(out, "{keyword} ({kind}, {split} split)")?;
    writeln!(out, "{:>4}  {:<12}  {:>8}  {:<3}  reference", "rank", "utterance", "score", "hit")?;
    for (i, h) in hits.iter().enumerate() {
        writeln!(
            out,
            "{:>4}  {:<12}  {:>8.4}  {:<3}  {}",
            i + 1,
            h.id,
            h.score,
            if h.relevant { "yes" } else { "no" },
            h.reference.join(" ")
        )?;
    }
    Ok(hits)
}

/// Side-by-side table of every evaluation of `split`, optionally limited to
/// `models`. Evaluations from different configurations are refused.
pub fn report(config: &RunConfig, models: &[ScorerKind], split: Split, out: &mut dyn Write) -> Result<Vec<EvalMeta>> {
    let layout = Layout::new(&config.out_dir);
    let mut rows = Vec::new();
    for kind in ScorerKind::ALL {
        if !models.is_empty() && !models.contains(&kind) {
            continue;
        }
        let path = layout.eval_dir(split, kind).join("eval.json");
        if path.exists() {
            rows.push(read_json::<EvalMeta>(&path)?);
        } else if models.contains(&kind) {
            bail!("{kind} has not been evaluated on the {split} split");
        }
    }
    if rows.is_empty() {
        bail!("no evaluations found under {}", layout.eval_root(split).display());
    }
    if let Some(other) = rows.iter().find(|r| r.config_hash != rows[0].config_hash) {
        bail!(
            "{} and {} come from different configurations ({} vs {}); refusing to mix them",
            rows[0].model,
            other.model,
            &rows[0].config_hash[..12],
            &other.config_hash[..12]
        );
    }
    if let Some(other) = rows.iter().find(|r| r.keywords != rows[0].keywords || r.k != rows[0].k) {
        bail!("{} and {} were scored on different keyword sets", rows[0].model, other.model);
    }
    let k = rows[0].k;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut csv = format!("model,P@{k},P@N,EER,AP\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model.display_name(),
            fmt(r.p_at_k),
            fmt(r.p_at_n),
            fmt(r.eer),
            fmt(r.ap)
        ));
    }
    let path = layout.report(split);
    fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;

    writeln!(out, "{:<24} {:>6} {:>6} {:>6} {:>6}", "model", format!("P@{k}"), "P@N", "EER", "AP")?;
    for r in &rows {
        writeln!(
            out,
            "{:<24} {:>6} {:>6} {:>6} {:>6}",
            r.model.display_name(),
            percent(r.p_at_k),
            percent(r.p_at_n),
            percent(r.eer),
            percent(r.ap)
        )?;
    }
    writeln!(out, "({split} split, {} keywords, values in %) -> {}", rows[0].keywords.len(), path.display())?;
    Ok(rows)
}
