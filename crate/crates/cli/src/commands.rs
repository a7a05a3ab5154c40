use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use hazardtm::classifier::{
    classify, partition_topics, select_variants, sweep, ClassifierConfig, ClassifyInput, PartitionRule,
    PredictionSet, SweepInput, SweepRow, Variant,
};
use hazardtm::corpus::{self, HazardConfig, KeywordList, RawDocument};
use hazardtm::dedup::{group_duplicates_banded, sign_all, write_signatures, DuplicateGroups};
use hazardtm::eval::{
    self, baseline, evaluate, majority_vote, theta_sensitivity, write_theta_sensitivity, EvalReport, GoldLabel, Split,
};
use hazardtm::features::{
    build_feature_space, count_row, default_stopwords, normalize_tokens, parse_word_list, vectorize, DocTermMatrix,
    FeatureConfig, FeatureSpace, KeywordMatch, TokenizedDocument, Weighting,
};
use hazardtm::synth::{generate, SynthConfig};
use hazardtm::topicmodel::{fit_counts, write_top_terms, ModelKind, TopicModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::LoadedConfig;

pub const VARIANT_NAMES: [&str; 3] = ["tm-f1", "tm-b", "tm-p"];

/// Where a hazard's artifacts live.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn ingested(&self) -> PathBuf {
        self.root.join("ingest/corpus.jsonl")
    }
    pub fn rejections(&self) -> PathBuf {
        self.root.join("ingest/rejections.csv")
    }
    pub fn signatures(&self) -> PathBuf {
        self.root.join("dedup/signatures.bin")
    }
    pub fn groups(&self) -> PathBuf {
        self.root.join("dedup/groups.csv")
    }
    pub fn features(&self) -> PathBuf {
        self.root.join("features/features.txt")
    }
    pub fn counts(&self) -> PathBuf {
        self.root.join("features/counts.bin")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model/model.bin")
    }
    pub fn top_terms(&self) -> PathBuf {
        self.root.join("model/top_terms.csv")
    }
    pub fn sweep_table(&self) -> PathBuf {
        self.root.join("sweep/results.csv")
    }
    pub fn sweep_models(&self) -> PathBuf {
        self.root.join("sweep/models")
    }
    pub fn variants(&self) -> PathBuf {
        self.root.join("variants")
    }
    pub fn variant(&self, name: &str) -> PathBuf {
        self.variants().join(format!("{name}.toml"))
    }
    pub fn predictions(&self, name: &str) -> PathBuf {
        self.root.join("predictions").join(format!("{name}.csv"))
    }
    pub fn topics(&self) -> PathBuf {
        self.root.join("topics")
    }
    pub fn eval(&self, split: Split) -> PathBuf {
        self.root.join(format!("eval/{split}.json"))
    }
    fn manifest(&self, command: &str) -> PathBuf {
        self.root.join(format!("manifests/{command}.json"))
    }
}

/// One subcommand run for one hazard.
pub struct Run<'a> {
    pub cfg: &'a LoadedConfig,
    pub hazard: String,
    pub layout: Layout,
    pub debug: bool,
    pub args: Vec<String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
struct FileRecord {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    hazard: &'a str,
    version: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a str,
    args: &'a [String],
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

impl<'a> Run<'a> {
    pub fn new(cfg: &'a LoadedConfig, hazard: &str, output_root: &Path, debug: bool, args: Vec<String>) -> Self {
        Run {
            cfg,
            hazard: hazard.to_string(),
            layout: Layout { root: output_root.join(hazard) },
            debug,
            args,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn input(&mut self, p: PathBuf) -> PathBuf {
        self.inputs.push(p.clone());
        p
    }

    fn output(&mut self, p: PathBuf) -> Result<BufWriter<File>> {
        let w = create(&p)?;
        self.outputs.push(p);
        Ok(w)
    }

    pub fn write_manifest(&self, command: &str) -> Result<()> {
        let record = |p: &PathBuf| -> Result<FileRecord> {
            let shown = p.strip_prefix(&self.layout.root).unwrap_or(p);
            Ok(FileRecord { path: shown.display().to_string(), sha256: sha256_file(p)? })
        };
        let manifest = Manifest {
            command,
            hazard: &self.hazard,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.cfg.config.seed,
            config_sha256: format!("{:x}", Sha256::digest(self.cfg.raw.as_bytes())),
            config: &self.cfg.raw,
            args: &self.args,
            inputs: self.inputs.iter().map(record).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(record).collect::<Result<_>>()?,
        };
        let mut w = create(&self.layout.manifest(command))?;
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn hazard_config(&mut self) -> Result<HazardConfig> {
        let path = self.cfg.resolve(&self.cfg.hazard(&self.hazard)?.keywords);
        self.input(path);
        self.cfg.hazard_config(&self.hazard)
    }

    fn keywords(&mut self) -> Result<KeywordList> {
        Ok(self.hazard_config()?.keyword_list()?)
    }

    fn stopwords(&mut self) -> Result<BTreeSet<String>> {
        match &self.cfg.config.stopwords {
            Some(p) => {
                let p = self.input(self.cfg.resolve(p));
                Ok(parse_word_list(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?))
            }
            None => Ok(default_stopwords()),
        }
    }

    fn gold(&mut self) -> Result<Vec<GoldLabel>> {
        let Some(p) = &self.cfg.hazard(&self.hazard)?.gold else {
            bail!("hazard {} has no gold file configured", self.hazard);
        };
        let p = self.input(self.cfg.resolve(p));
        Ok(eval::load_gold(&p)?)
    }

    fn ingested(&mut self) -> Result<Vec<RawDocument>> {
        let p = self.input(self.layout.ingested());
        Ok(corpus::read_jsonl(open(&p)?)?)
    }

    fn tokenized(&mut self) -> Result<Vec<TokenizedDocument>> {
        let stop = self.stopwords()?;
        Ok(self.ingested()?.iter().map(|d| normalize_tokens(d, None, &stop)).collect())
    }

    fn groups(&mut self) -> Result<DuplicateGroups> {
        let p = self.input(self.layout.groups());
        Ok(DuplicateGroups::read_csv(open(&p)?)?)
    }

    /// Ingested documents that represent their near-duplicate group.
    fn training_docs(&mut self, docs: &[TokenizedDocument]) -> Result<Vec<TokenizedDocument>> {
        let groups = self.groups()?;
        let reps = groups.representatives();
        Ok(docs.iter().filter(|d| reps.contains(d.doc_id.as_str())).cloned().collect())
    }

    fn feature_space(&mut self, path: PathBuf) -> Result<FeatureSpace> {
        let p = self.input(path);
        FeatureSpace::read_from(open(&p)?).with_context(|| format!("reading {}", p.display()))
    }

    fn topic_model(&mut self, path: PathBuf) -> Result<TopicModel> {
        let p = self.input(path);
        TopicModel::read_binary(open(&p)?).with_context(|| format!("reading {}", p.display()))
    }

    fn lda_debug(&self) -> LoadedConfig {
        let mut cfg = self.cfg.clone();
        cfg.config.lda.verify_counts |= self.debug;
        cfg
    }
}

/// Files a subcommand reads from earlier stages, checked before any work.
pub fn stage_inputs(command: &str, layout: &Layout, variants: &[String]) -> Vec<PathBuf> {
    let variant_files = || variants.iter().map(|v| layout.variant(v)).collect::<Vec<_>>();
    match command {
        "dedup" => vec![layout.ingested()],
        "featurize" | "sweep" => vec![layout.ingested(), layout.groups()],
        "train" => vec![layout.ingested(), layout.groups(), layout.features(), layout.counts()],
        "select" => vec![layout.ingested(), layout.groups(), layout.sweep_table()],
        "classify" | "dump-topics" => {
            let mut v = vec![layout.ingested()];
            v.extend(variant_files());
            v
        }
        _ => Vec::new(),
    }
}

pub fn ingest(run: &mut Run) -> Result<()> {
    let cfg = run.hazard_config()?;
    let src = run.input(run.cfg.resolve(&run.cfg.hazard(&run.hazard)?.corpus));
    let docs = corpus::read_jsonl(open(&src)?).with_context(|| format!("reading {}", src.display()))?;
    let n = docs.len();
    let out = corpus::ingest(docs, &cfg)?;
    let mut w = run.output(run.layout.ingested())?;
    corpus::write_jsonl(&mut w, &out.kept)?;
    w.flush()?;
    let w = run.output(run.layout.rejections())?;
    corpus::write_rejections(w, &out.rejected)?;
    log::info!(
        "{}: {n} records, {} exact duplicates, {} kept, {} rejected",
        run.hazard,
        out.exact_duplicates,
        out.kept.len(),
        out.rejected.len()
    );
    Ok(())
}

pub fn dedup(run: &mut Run) -> Result<()> {
    let docs = run.ingested()?;
    let p = &run.cfg.config.dedup;
    let tokens: Vec<(String, Vec<String>)> = docs
        .iter()
        .map(|d| (d.id.clone(), corpus::document_tokens(d).into_iter().map(|t| t.to_lowercase()).collect()))
        .collect();
    let sigs = sign_all(&tokens, p.shingle_size, p.num_hashes, run.cfg.config.seed)?;
    let groups = group_duplicates_banded(&sigs, p.threshold, p.rows_per_band)?;
    let mut w = run.output(run.layout.signatures())?;
    write_signatures(&mut w, &sigs)?;
    w.flush()?;
    groups.write_csv(run.output(run.layout.groups())?)?;
    let dup_docs: usize = groups.non_trivial().map(|g| g.members.len() - 1).sum();
    log::info!("{}: {} groups, {dup_docs} documents set aside as near-duplicates", run.hazard, groups.groups.len());
    Ok(())
}

pub fn featurize(run: &mut Run) -> Result<()> {
    let kw = run.keywords()?;
    let docs = run.tokenized()?;
    let train = run.training_docs(&docs)?;
    let fs = build_feature_space(&train, &kw, &run.cfg.config.features)?;
    if fs.keyword_indices().is_empty() {
        log::warn!("{}: no keyword is a feature term; the partition rules will select nothing", run.hazard);
    }
    let counts = vectorize(&docs, &fs, Weighting::Counts);
    let mut w = run.output(run.layout.features())?;
    fs.write_to(&mut w)?;
    w.flush()?;
    let mut w = run.output(run.layout.counts())?;
    counts.write_binary(&mut w)?;
    w.flush()?;
    log::info!("{}: {} feature terms, {} documents, {} non-zeros", run.hazard, fs.len(), counts.num_docs(), counts.nnz());
    Ok(())
}

pub fn train(run: &mut Run) -> Result<()> {
    let fs = run.feature_space(run.layout.features())?;
    let p = run.input(run.layout.counts());
    let counts = DocTermMatrix::read_binary(open(&p)?).with_context(|| format!("reading {}", p.display()))?;
    let groups = run.groups()?;
    let reps = groups.representatives();
    let train = counts.select_rows(|id| reps.contains(id));
    let t = &run.cfg.config.train;
    let model_cfg = run.lda_debug().model_config(t.kind, t.num_topics);
    let model = fit_counts(&train, &fs, &model_cfg)?;
    let mut w = run.output(run.layout.model())?;
    model.write_binary(&mut w)?;
    w.flush()?;
    write_top_terms(&model, &fs, run.cfg.config.output.top_terms, run.output(run.layout.top_terms())?)?;
    log::info!("{}: {} with {} topics on {} documents", run.hazard, t.kind.as_str(), t.num_topics, train.num_docs());
    Ok(())
}

fn parse_pos_label(label: &str) -> BTreeSet<String> {
    if label == "any" {
        BTreeSet::new()
    } else {
        label.split('+').map(str::to_string).collect()
    }
}

pub fn run_sweep(run: &mut Run) -> Result<()> {
    let kw = run.keywords()?;
    let gold = run.gold()?;
    let docs = run.tokenized()?;
    let groups = run.groups()?;
    let reps: BTreeSet<String> = groups.representatives().into_iter().map(str::to_string).collect();
    let cfg = run.lda_debug();
    let keep = cfg.config.output.keep_all_sweep_models;
    let input = SweepInput {
        docs: &docs,
        train_ids: Some(&reps),
        keywords: &kw,
        gold: &gold,
        keyword_match: cfg.config.features.keyword_match,
        lda: cfg.config.lda.clone(),
        nmf: cfg.config.nmf.clone(),
        keep_models: keep,
    };
    let grid = &cfg.config.sweep;
    log::info!("{}: sweeping {} cells", run.hazard, grid.num_cells());
    let out = sweep(&input, grid)?;
    if out.rows.is_empty() {
        bail!("no grid combination could be fitted: {:?}", out.skipped);
    }
    SweepRow::write_csv(run.output(run.layout.sweep_table())?, &out.rows)?;
    if !out.skipped.is_empty() {
        let mut csv = csv::Writer::from_writer(run.output(run.layout.root.join("sweep/skipped.csv"))?);
        csv.write_record(["model_key", "reason"])?;
        for (key, reason) in &out.skipped {
            csv.write_record([key, reason])?;
        }
        csv.flush()?;
    }
    for m in &out.models {
        let dir = run.layout.sweep_models();
        let mut w = run.output(dir.join(format!("{}.bin", m.key)))?;
        m.model.write_binary(&mut w)?;
        w.flush()?;
        let mut w = run.output(dir.join(format!("{}.features", m.key)))?;
        m.feature_space.write_to(&mut w)?;
        w.flush()?;
    }
    log::info!("{}: {} cells evaluated, {} combinations skipped", run.hazard, out.rows.len(), out.skipped.len());
    Ok(())
}

/// A selected configuration: enough to refit its model and to classify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantManifest {
    pub name: String,
    pub hazard: String,
    pub seed: u64,
    pub theta: f64,
    pub model_key: String,
    pub kind: ModelKind,
    pub min_doc_freq: usize,
    pub pos_tags: BTreeSet<String>,
    pub num_topics: usize,
    pub keyword_match: KeywordMatch,
    /// Relative to the variants directory.
    pub model: String,
    pub features: String,
    pub model_sha256: String,
    /// No sweep cell reached the recall floor.
    pub below_recall_floor: bool,
    pub rule: PartitionRule,
    /// The sweep cell, scored on the train split.
    pub train: SweepRow,
}

impl VariantManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn select(run: &mut Run) -> Result<()> {
    let p = run.input(run.layout.sweep_table());
    let rows = SweepRow::read_csv(open(&p)?)?;
    let variants = select_variants(&rows, &run.cfg.config.selection)?;
    let kw = run.keywords()?;
    let docs = run.tokenized()?;
    let train = run.training_docs(&docs)?;
    let gold = run.gold()?;
    let cfg = run.lda_debug();

    let mut fitted: HashMap<String, (FeatureSpace, TopicModel)> = HashMap::new();
    for v in variants.all() {
        let row = &v.row;
        if !fitted.contains_key(&row.model_key) {
            let stored = run.layout.sweep_models().join(format!("{}.bin", row.model_key));
            let pair = if stored.exists() {
                let fs = run.feature_space(stored.with_extension("features"))?;
                (fs, run.topic_model(stored)?)
            } else {
                log::info!("{}: refitting {}", run.hazard, row.model_key);
                let fcfg = FeatureConfig {
                    min_doc_freq: row.min_doc_freq,
                    allowed_pos: parse_pos_label(&row.pos_tags),
                    keyword_match: cfg.config.features.keyword_match,
                };
                let fs = build_feature_space(&train, &kw, &fcfg)?;
                let counts = vectorize(&train, &fs, Weighting::Counts);
                let model = fit_counts(&counts, &fs, &cfg.model_config(row.kind, row.num_topics))?;
                (fs, model)
            };
            fitted.insert(row.model_key.clone(), pair);
        }
        let (fs, model) = &fitted[&row.model_key];
        check_against_row(v, fs, model, &docs, &gold)?;
    }

    for v in variants.all() {
        let (fs, model) = &fitted[&v.row.model_key];
        let model_file = format!("models/{}.bin", v.row.model_key);
        let features_file = format!("models/{}.features", v.row.model_key);
        let model_path = run.layout.variants().join(&model_file);
        let mut w = run.output(model_path.clone())?;
        model.write_binary(&mut w)?;
        w.flush()?;
        let mut w = run.output(run.layout.variants().join(&features_file))?;
        fs.write_to(&mut w)?;
        w.flush()?;
        let manifest = VariantManifest {
            name: v.name.clone(),
            hazard: run.hazard.clone(),
            seed: run.cfg.config.seed,
            theta: v.row.theta,
            model_key: v.row.model_key.clone(),
            kind: v.row.kind,
            min_doc_freq: v.row.min_doc_freq,
            pos_tags: parse_pos_label(&v.row.pos_tags),
            num_topics: v.row.num_topics,
            keyword_match: cfg.config.features.keyword_match,
            model: model_file,
            features: features_file,
            model_sha256: sha256_file(&model_path)?,
            below_recall_floor: v.name == "tm-p" && variants.tm_p_below_floor,
            rule: v.row.rule()?,
            train: v.row.clone(),
        };
        let mut w = run.output(run.layout.variant(&v.name))?;
        w.write_all(toml::to_string_pretty(&manifest)?.as_bytes())?;
        w.flush()?;
        log::info!(
            "{}: {} = {} {} {} theta {} (train P {:.3} R {:.3} F1 {:.3})",
            run.hazard,
            v.name,
            v.row.model_key,
            v.row.method,
            v.row.parameter,
            v.row.theta,
            v.row.precision,
            v.row.recall,
            v.row.f1
        );
    }
    Ok(())
}

/// Re-scores a variant's model on the train split; a mismatch means the
/// model is not the one the sweep evaluated.
fn check_against_row(
    v: &Variant,
    fs: &FeatureSpace,
    model: &TopicModel,
    docs: &[TokenizedDocument],
    gold: &[GoldLabel],
) -> Result<()> {
    let train_ids: BTreeSet<&str> =
        gold.iter().filter(|g| g.split == Split::Train).map(|g| g.doc_id.as_str()).collect();
    let subset: Vec<TokenizedDocument> = docs.iter().filter(|d| train_ids.contains(d.doc_id.as_str())).cloned().collect();
    let preds = predict(model, fs, v.row.rule()?, v.row.theta, &subset, &v.name)?;
    let report = evaluate(&preds, gold, Split::Train)?;
    ensure!(
        report.scores.confusion == v.row.confusion(),
        "{} ({}) does not reproduce its sweep cell: {:?} vs {:?}",
        v.name,
        v.row.model_key,
        report.scores.confusion,
        v.row.confusion()
    );
    Ok(())
}

fn predict(
    model: &TopicModel,
    fs: &FeatureSpace,
    rule: PartitionRule,
    theta: f64,
    docs: &[TokenizedDocument],
    source: &str,
) -> Result<PredictionSet> {
    let rows: Vec<Vec<(u32, f64)>> = docs.iter().map(|d| count_row(&d.kept_terms, fs)).collect();
    let inputs: Vec<ClassifyInput> =
        docs.iter().zip(&rows).map(|(d, r)| ClassifyInput { doc_id: &d.doc_id, counts: r }).collect();
    let partition = partition_topics(model, fs, &rule)?;
    let cfg = ClassifierConfig { theta, rule, model_ref: model.checksum() };
    Ok(classify(model, &partition, &cfg, &inputs, source)?)
}

/// Rule given on the command line for the model fitted by `train`.
#[derive(Debug, Clone, Copy)]
pub struct TrainedRule {
    pub theta: f64,
    pub rule: PartitionRule,
}

pub fn classify_variants(run: &mut Run, names: &[String], trained: Option<TrainedRule>) -> Result<()> {
    let docs = run.tokenized()?;
    for name in names {
        let path = run.input(run.layout.variant(name));
        let v = VariantManifest::load(&path)?;
        let model_path = run.layout.variants().join(&v.model);
        ensure!(
            sha256_file(&model_path)? == v.model_sha256,
            "{} does not match the checksum in {}",
            model_path.display(),
            path.display()
        );
        let fs = run.feature_space(run.layout.variants().join(&v.features))?;
        let model = run.topic_model(model_path)?;
        let preds = predict(&model, &fs, v.rule, v.theta, &docs, name)?;
        write_predictions(run, name, &preds)?;
    }
    if let Some(t) = trained {
        let fs = run.feature_space(run.layout.features())?;
        let model = run.topic_model(run.layout.model())?;
        let preds = predict(&model, &fs, t.rule, t.theta, &docs, "trained")?;
        write_predictions(run, "trained", &preds)?;
    }
    Ok(())
}

fn write_predictions(run: &mut Run, name: &str, preds: &PredictionSet) -> Result<()> {
    preds.write_csv(run.output(run.layout.predictions(name))?)?;
    log::info!("{}: {name} labels {} of {} documents relevant", run.hazard, preds.positives().count(), preds.len());
    Ok(())
}

pub fn evaluate_predictions(run: &mut Run, files: &[PathBuf], split: Split) -> Result<Vec<EvalReport>> {
    let gold = run.gold()?;
    let files: Vec<PathBuf> = if files.is_empty() {
        let dir = run.layout.root.join("predictions");
        let mut found: Vec<PathBuf> = match fs::read_dir(&dir) {
            Ok(entries) => entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect(),
            Err(_) => Vec::new(),
        };
        found.sort();
        found
    } else {
        files.to_vec()
    };
    let mut reports = vec![baseline(&gold, split)?];
    for f in files {
        let f = run.input(f);
        let source = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let preds = eval::import_external(&f, &source)?;
        reports.push(evaluate(&preds, &gold, split)?);
    }
    let mut w = run.output(run.layout.eval(split))?;
    serde_json::to_writer_pretty(&mut w, &reports)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(reports)
}

pub fn ensemble(run: &mut Run, inputs: &[PathBuf]) -> Result<()> {
    let paths: Vec<PathBuf> = if inputs.is_empty() {
        VARIANT_NAMES.iter().map(|n| run.layout.predictions(n)).collect()
    } else {
        inputs.to_vec()
    };
    ensure!(paths.len() == 3, "majority vote needs exactly three prediction files, got {}", paths.len());
    let mut sets = Vec::new();
    for p in paths {
        let p = run.input(p);
        let source = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        sets.push(PredictionSet::load(&p, source)?);
    }
    let mut vote = majority_vote([&sets[0], &sets[1], &sets[2]])?;
    vote.source = "ensemble".into();
    write_predictions(run, "ensemble", &vote)
}

pub struct DumpOptions {
    pub variants: Vec<String>,
    pub trained: Option<PartitionRule>,
    pub include_trained: bool,
    pub theta_topic: Option<usize>,
    pub split: Split,
}

pub fn dump_topics(run: &mut Run, opts: &DumpOptions) -> Result<String> {
    let mut sources: Vec<(String, FeatureSpace, TopicModel, Option<PartitionRule>)> = Vec::new();
    for name in &opts.variants {
        let path = run.input(run.layout.variant(name));
        let v = VariantManifest::load(&path)?;
        let fs = run.feature_space(run.layout.variants().join(&v.features))?;
        let model = run.topic_model(run.layout.variants().join(&v.model))?;
        sources.push((name.clone(), fs, model, Some(v.rule)));
    }
    if opts.include_trained {
        let fs = run.feature_space(run.layout.features())?;
        let model = run.topic_model(run.layout.model())?;
        sources.push(("trained".into(), fs, model, opts.trained));
    }
    let n = run.cfg.config.output.top_terms;
    let mut report = String::new();
    let docs = if opts.theta_topic.is_some() { run.tokenized()? } else { Vec::new() };
    let gold = if opts.theta_topic.is_some() { run.gold()? } else { Vec::new() };
    for (name, fs, model, rule) in &sources {
        write_top_terms(model, fs, n, run.output(run.layout.topics().join(format!("{name}-top-terms.csv")))?)?;
        if let Some(rule) = rule {
            let partition = partition_topics(model, fs, rule)?;
            let mut w = run.output(run.layout.topics().join(format!("{name}-relevant.csv")))?;
            let mut csv = csv::Writer::from_writer(&mut w);
            csv.write_record(["topic_id", "keyword", "probability", "rank", "top_terms"])?;
            report.push_str(&format!("{name}: {} of {} topics relevant\n", partition.relevant_topics.len(), model.num_topics()));
            for (topic, evidence) in &partition.evidence {
                let terms: Vec<&str> = model.top_terms(*topic, n.min(10)).iter().map(|&(t, _)| fs.term(t)).collect();
                report.push_str(&format!("  topic {topic:>3}: {}\n", terms.join(" ")));
                for e in evidence {
                    csv.write_record([
                        topic.to_string(),
                        e.keyword.clone(),
                        format!("{}", e.probability),
                        e.rank.to_string(),
                        terms.join(" "),
                    ])?;
                }
            }
            csv.flush()?;
            drop(csv);
            w.flush()?;
        }
        if let Some(topic) = opts.theta_topic {
            let counts: HashMap<String, Vec<(u32, f64)>> =
                docs.iter().map(|d| (d.doc_id.clone(), count_row(&d.kept_terms, fs))).collect();
            let points = theta_sensitivity(model, topic, &gold, opts.split, &counts)?;
            let w = run.output(run.layout.topics().join(format!("{name}-theta-topic{topic}-{}.csv", opts.split)))?;
            write_theta_sensitivity(w, &points)?;
        }
    }
    Ok(report)
}

/// Writes a synthetic corpus, its hazard config, gold labels and a pipeline
/// config into `dir`.
pub fn synth(dir: &Path, cfg: &SynthConfig) -> Result<Vec<PathBuf>> {
    let corpus = generate(cfg);
    let mut written = Vec::new();
    let mut out = |name: &str| -> Result<BufWriter<File>> {
        let p = dir.join(name);
        written.push(p.clone());
        create(&p)
    };
    let mut w = out("corpus.jsonl")?;
    corpus::write_jsonl(&mut w, &corpus.docs)?;
    w.flush()?;
    let mut w = out("hazard.toml")?;
    w.write_all(corpus.config.to_toml_string().as_bytes())?;
    w.flush()?;
    eval::write_gold(out("gold.csv")?, &corpus.gold)?;
    let mut w = out("duplicates.csv")?;
    writeln!(w, "original_id,copy_id")?;
    for (a, b) in &corpus.duplicate_pairs {
        writeln!(w, "{a},{b}")?;
    }
    w.flush()?;
    let mut w = out("pipeline.toml")?;
    w.write_all(synth_pipeline(cfg).as_bytes())?;
    w.flush()?;
    let mut w = out("synth.toml")?;
    w.write_all(toml::to_string_pretty(cfg)?.as_bytes())?;
    w.flush()?;
    Ok(written)
}

fn synth_pipeline(cfg: &SynthConfig) -> String {
    format!(
        r#"seed = {seed}
output_dir = "output"

[hazards.{hazard:?}]
corpus = "corpus.jsonl"
keywords = "hazard.toml"
gold = "gold.csv"

[features]
min_doc_freq = 5

[train]
kind = "lda"
num_topics = 9

[lda]
passes = 5
iterations = 40
burn_in = 20
fold_in_samples = 20

[sweep]
kinds = ["lda", "nmf"]
min_doc_freq = [5, 20]
pos_sets = [[]]
num_topics = [5, 9, 12]
"#,
        seed = cfg.seed,
        hazard = cfg.hazard,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use hazardtm::classifier::pos_label;

    #[test]
    fn pos_labels_round_trip() {
        for tags in [BTreeSet::new(), ["NOUN".to_string()].into(), ["ADJ".to_string(), "NOUN".to_string()].into()] {
            assert_eq!(parse_pos_label(&pos_label(&tags)), tags);
        }
    }
}
