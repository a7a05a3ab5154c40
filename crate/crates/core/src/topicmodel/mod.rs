//! LDA and NMF topic models over a document-term matrix.
//!
//! Both model kinds are reduced to the same pair of row-stochastic matrices:
//! `p_feat` (num_topics × num_terms), the probability of each feature term
//! under a topic, and `p_topic` (num_docs × num_topics), the proportion of
//! each topic in a training document. The classifier only ever looks at
//! these two.

mod lda;
mod nmf;

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::features::{apply_idf, inverse_document_frequency, DocTermMatrix, FeatureSpace};
use crate::io::*;

pub use lda::{fit_lda, fit_lda_with_report, LdaFitReport, LdaTrainer};
pub use nmf::{fit_nmf, fit_nmf_with_trace, NmfTrace};

#[derive(Debug, thiserror::Error)]
pub enum TopicModelError {
    #[error("only {non_empty} non-empty documents for {num_topics} topics")]
    DegenerateCorpus { non_empty: usize, num_topics: usize },
    #[error("negative or non-finite factor entry after NMF update")]
    NonNegativityViolation,
    #[error("feature space mismatch: {0}")]
    FeatureSpaceMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("matrix is not suitable: {0}")]
    InvalidMatrix(String),
    #[error("Gibbs count conservation violated: {0}")]
    ConservationViolated(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lda,
    Nmf,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lda => "lda",
            ModelKind::Nmf => "nmf",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lda" => Ok(ModelKind::Lda),
            "nmf" => Ok(ModelKind::Nmf),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

/// Dirichlet prior: learned from the data, or a fixed symmetric value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorRepr", into = "PriorRepr")]
pub enum Prior {
    Auto,
    Symmetric(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PriorRepr {
    Value(f64),
    Name(String),
}

impl TryFrom<PriorRepr> for Prior {
    type Error = String;
    fn try_from(r: PriorRepr) -> Result<Self, String> {
        match r {
            PriorRepr::Value(v) if v > 0.0 && v.is_finite() => Ok(Prior::Symmetric(v)),
            PriorRepr::Value(v) => Err(format!("prior must be positive, got {v}")),
            PriorRepr::Name(n) if n == "auto" => Ok(Prior::Auto),
            PriorRepr::Name(n) => Err(format!("unknown prior {n:?}")),
        }
    }
}

impl From<Prior> for PriorRepr {
    fn from(p: Prior) -> Self {
        match p {
            Prior::Auto => PriorRepr::Name("auto".into()),
            Prior::Symmetric(v) => PriorRepr::Value(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub num_topics: usize,
    pub alpha: Prior,
    pub eta: Prior,
    /// Gibbs sweeps per pass.
    pub iterations: usize,
    /// Outer passes; `auto` priors are re-estimated after each one.
    pub passes: usize,
    pub seed: u64,
    /// Discarded fold-in sweeps when inferring topics of unseen documents.
    pub burn_in: usize,
    /// Fold-in sweeps averaged after the burn-in.
    pub fold_in_samples: usize,
    /// Recount all Gibbs tables after every sweep. Always on in debug builds.
    /// A diagnostic only, so it is not stored with fitted models.
    #[serde(skip_serializing)]
    pub verify_counts: bool,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            num_topics: 10,
            alpha: Prior::Auto,
            eta: Prior::Auto,
            iterations: 400,
            passes: 20,
            seed: 123,
            burn_in: 50,
            fold_in_samples: 50,
            verify_counts: false,
        }
    }
}

impl LdaConfig {
    pub fn with_topics(num_topics: usize) -> Self {
        LdaConfig { num_topics, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), TopicModelError> {
        if self.num_topics == 0 {
            return Err(TopicModelError::InvalidConfig("num_topics must be at least 1".into()));
        }
        if self.iterations == 0 || self.passes == 0 {
            return Err(TopicModelError::InvalidConfig("iterations and passes must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfConfig {
    pub num_topics: usize,
    pub max_iters: usize,
    /// Stop once the relative decrease of the Frobenius objective falls below this.
    pub tol: f64,
    pub seed: u64,
    /// Multiplicative-update iterations when projecting unseen documents.
    pub infer_iters: usize,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig { num_topics: 10, max_iters: 200, tol: 1e-4, seed: 123, infer_iters: 200 }
    }
}

impl NmfConfig {
    pub fn with_topics(num_topics: usize) -> Self {
        NmfConfig { num_topics, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), TopicModelError> {
        if self.num_topics == 0 {
            return Err(TopicModelError::InvalidConfig("num_topics must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(TopicModelError::InvalidConfig("tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(TopicModelError::InvalidConfig("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Lda(LdaConfig),
    Nmf(NmfConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Lda(_) => ModelKind::Lda,
            ModelConfig::Nmf(_) => ModelKind::Nmf,
        }
    }

    pub fn num_topics(&self) -> usize {
        match self {
            ModelConfig::Lda(c) => c.num_topics,
            ModelConfig::Nmf(c) => c.num_topics,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelConfig::Lda(c) => c.seed,
            ModelConfig::Nmf(c) => c.seed,
        }
    }
}

/// A fitted topic model.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub(crate) num_topics: usize,
    pub(crate) num_terms: usize,
    pub(crate) p_feat: Vec<f64>,
    pub(crate) p_topic: Vec<f64>,
    pub(crate) doc_ids: Vec<String>,
    pub(crate) empty_docs: Vec<bool>,
    pub(crate) feature_checksum: String,
    pub(crate) config: ModelConfig,
    /// Final LDA document-topic prior (empty for NMF).
    pub(crate) alpha: Vec<f64>,
    /// Final LDA topic-term prior (zero for NMF).
    pub(crate) eta: f64,
    /// NMF: per-term weights applied to count rows before projection.
    pub(crate) idf: Vec<f64>,
    /// NMF: row sums of the unnormalized topic-term factor.
    pub(crate) topic_scale: Vec<f64>,
    pub(crate) doc_index: HashMap<String, usize>,
}

/// Topic distribution of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicInference {
    pub distribution: Vec<f64>,
    /// The document had no usable feature terms; the distribution is uniform.
    pub empty: bool,
}

impl TopicModel {
    pub fn kind(&self) -> ModelKind {
        self.config.kind()
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn num_terms(&self) -> usize {
        self.num_terms
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn feature_checksum(&self) -> &str {
        &self.feature_checksum
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Term distribution of topic `t`.
    pub fn p_feat_row(&self, t: usize) -> &[f64] {
        &self.p_feat[t * self.num_terms..(t + 1) * self.num_terms]
    }

    pub fn p_feat(&self, topic: usize, term: usize) -> f64 {
        self.p_feat[topic * self.num_terms + term]
    }

    /// Topic distribution of training document `d`.
    pub fn p_topic_row(&self, d: usize) -> &[f64] {
        &self.p_topic[d * self.num_topics..(d + 1) * self.num_topics]
    }

    pub fn is_empty_doc(&self, d: usize) -> bool {
        self.empty_docs[d]
    }

    /// Per-term weights applied to count rows before NMF projection,
    /// normally the training IDF. Without them counts are used as-is.
    pub fn set_input_weights(&mut self, idf: Vec<f64>) {
        self.idf = idf;
    }

    pub fn input_weights(&self) -> &[f64] {
        &self.idf
    }

    /// Stored distribution of a training document.
    pub fn doc_topics(&self, doc_id: &str) -> Option<TopicInference> {
        self.doc_index.get(doc_id).map(|&d| TopicInference {
            distribution: self.p_topic_row(d).to_vec(),
            empty: self.empty_docs[d],
        })
    }

    pub fn check_feature_space(&self, fs: &FeatureSpace) -> Result<(), TopicModelError> {
        if fs.len() != self.num_terms {
            return Err(TopicModelError::FeatureSpaceMismatch(format!(
                "model has {} terms, feature space {}",
                self.num_terms,
                fs.len()
            )));
        }
        let sum = fs.checksum();
        if sum != self.feature_checksum {
            return Err(TopicModelError::FeatureSpaceMismatch(format!(
                "checksum {} differs from the model's {}",
                sum, self.feature_checksum
            )));
        }
        Ok(())
    }

    /// The `n` most probable terms of topic `t` as `(term_index, probability)`,
    /// ties broken by lower term index.
    pub fn top_terms(&self, t: usize, n: usize) -> Vec<(usize, f64)> {
        let row = self.p_feat_row(t);
        let mut idx: Vec<usize> = (0..row.len()).collect();
        let by_rank = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
        let n = n.min(idx.len());
        if n == 0 {
            return Vec::new();
        }
        if n < idx.len() {
            idx.select_nth_unstable_by(n - 1, by_rank);
            idx.truncate(n);
        }
        idx.sort_by(by_rank);
        idx.into_iter().map(|i| (i, row[i])).collect()
    }

    pub(crate) fn build(
        config: ModelConfig,
        num_terms: usize,
        p_feat: Vec<f64>,
        p_topic: Vec<f64>,
        doc_ids: Vec<String>,
        empty_docs: Vec<bool>,
        feature_checksum: String,
    ) -> Self {
        let doc_index = doc_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        TopicModel {
            num_topics: config.num_topics(),
            num_terms,
            p_feat,
            p_topic,
            doc_ids,
            empty_docs,
            feature_checksum,
            config,
            alpha: Vec::new(),
            eta: 0.0,
            idf: Vec::new(),
            topic_scale: Vec::new(),
            doc_index,
        }
    }

    /// Wraps distributions estimated elsewhere. `p_feat` has one row per
    /// topic over the terms of `fs`, `p_topic` one row per document. Rows
    /// must be non-negative and sum to 1 within 1e-6. LDA models get a
    /// symmetric prior of `1 / num_topics` for folding in new documents.
    pub fn from_distributions(
        kind: ModelKind,
        fs: &FeatureSpace,
        p_feat: Vec<Vec<f64>>,
        p_topic: Vec<Vec<f64>>,
        doc_ids: Vec<String>,
    ) -> Result<Self, TopicModelError> {
        let k = p_feat.len();
        let v = fs.len();
        let invalid = |m: String| Err(TopicModelError::InvalidMatrix(m));
        if k == 0 {
            return invalid("no topics".into());
        }
        if p_topic.len() != doc_ids.len() {
            return invalid(format!("{} topic rows for {} documents", p_topic.len(), doc_ids.len()));
        }
        for (name, rows, width) in [("p_feat", &p_feat, v), ("p_topic", &p_topic, k)] {
            for (i, row) in rows.iter().enumerate() {
                if row.len() != width {
                    return invalid(format!("{name} row {i} has {} entries, expected {width}", row.len()));
                }
                if row.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return invalid(format!("{name} row {i} has a negative or non-finite entry"));
                }
                if (row.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
                    return invalid(format!("{name} row {i} does not sum to 1"));
                }
            }
        }
        let config = match kind {
            ModelKind::Lda => ModelConfig::Lda(LdaConfig::with_topics(k)),
            ModelKind::Nmf => ModelConfig::Nmf(NmfConfig::with_topics(k)),
        };
        let n = doc_ids.len();
        let mut model = TopicModel::build(
            config,
            v,
            p_feat.concat(),
            p_topic.concat(),
            doc_ids,
            vec![false; n],
            fs.checksum(),
        );
        if model.doc_index.len() != n {
            return invalid("duplicate document id".into());
        }
        match kind {
            ModelKind::Lda => model.alpha = vec![1.0 / k as f64; k],
            ModelKind::Nmf => model.topic_scale = vec![1.0; k],
        }
        Ok(model)
    }

    /// Largest deviation of any `p_feat` or `p_topic` row sum from 1.
    pub fn max_row_sum_error(&self) -> f64 {
        let k = self.num_topics;
        let feat = self.p_feat.chunks(self.num_terms.max(1)).map(|r| (r.iter().sum::<f64>() - 1.0).abs());
        let topic = self.p_topic.chunks(k).map(|r| (r.iter().sum::<f64>() - 1.0).abs());
        feat.chain(topic).fold(0.0, f64::max)
    }

    /// Binary model file. Layout (little-endian): `HZTM`, u16 version, u8
    /// kind, u32 topics, u32 terms, u32 docs, u64 seed, config as JSON
    /// string, feature-space checksum string, alpha, eta, idf, topic scale,
    /// doc ids, empty flags, then `p_feat` and `p_topic` row-major.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"HZTM")?;
        write_u16(&mut w, 1)?;
        write_u8(&mut w, match self.kind() {
            ModelKind::Lda => 0,
            ModelKind::Nmf => 1,
        })?;
        write_u32(&mut w, len_u32(self.num_topics)?)?;
        write_u32(&mut w, len_u32(self.num_terms)?)?;
        write_u32(&mut w, len_u32(self.doc_ids.len())?)?;
        write_u64(&mut w, self.config.seed())?;
        write_str(&mut w, &serde_json::to_string(&self.config).expect("config serializes"))?;
        write_str(&mut w, &self.feature_checksum)?;
        write_f64s(&mut w, &self.alpha)?;
        write_f64(&mut w, self.eta)?;
        write_f64s(&mut w, &self.idf)?;
        write_f64s(&mut w, &self.topic_scale)?;
        for id in &self.doc_ids {
            write_str(&mut w, id)?;
        }
        for &e in &self.empty_docs {
            write_u8(&mut w, u8::from(e))?;
        }
        for &v in self.p_feat.iter().chain(&self.p_topic) {
            write_f64(&mut w, v)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> std::io::Result<Self> {
        expect_magic(&mut r, b"HZTM")?;
        let version = read_u16(&mut r)?;
        if version != 1 {
            return Err(invalid(format!("unsupported model version {version}")));
        }
        let kind = read_u8(&mut r)?;
        let k = read_u32(&mut r)? as usize;
        let v = read_u32(&mut r)? as usize;
        let n = read_u32(&mut r)? as usize;
        let _seed = read_u64(&mut r)?;
        let config: ModelConfig =
            serde_json::from_str(&read_str(&mut r)?).map_err(|e| invalid(format!("model config: {e}")))?;
        if config.num_topics() != k || u8::from(config.kind() == ModelKind::Nmf) != kind {
            return Err(invalid("model header disagrees with its config"));
        }
        let feature_checksum = read_str(&mut r)?;
        let alpha = read_f64s(&mut r)?;
        let eta = read_f64(&mut r)?;
        let idf = read_f64s(&mut r)?;
        let topic_scale = read_f64s(&mut r)?;
        let doc_ids = (0..n).map(|_| read_str(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let empty_docs = (0..n).map(|_| read_u8(&mut r).map(|b| b != 0)).collect::<Result<Vec<_>, _>>()?;
        let p_feat = (0..k * v).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let p_topic = (0..n * k).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let mut model = TopicModel::build(config, v, p_feat, p_topic, doc_ids, empty_docs, feature_checksum);
        model.alpha = alpha;
        model.eta = eta;
        model.idf = idf;
        model.topic_scale = topic_scale;
        Ok(model)
    }

    /// Hex SHA-256 of the binary serialization; identifies the model.
    pub fn checksum(&self) -> String {
        let mut buf = Vec::new();
        self.write_binary(&mut buf).expect("writing to a Vec cannot fail");
        sha256_hex(&buf)
    }
}

pub(crate) fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Normalizes `row` in place to sum to one; all-zero rows become uniform.
/// Returns false for rows that had no mass.
pub(crate) fn normalize_row(row: &mut [f64]) -> bool {
    let s: f64 = row.iter().sum();
    if s > 0.0 && s.is_finite() {
        row.iter_mut().for_each(|x| *x /= s);
        true
    } else {
        let u = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|x| *x = u);
        false
    }
}

/// Topic distribution of a document given as a sparse count row.
///
/// LDA folds the document in by Gibbs sampling with the topic-term
/// distributions frozen; NMF solves a non-negative least-squares problem
/// against the topic-term factor. A document without feature terms gets a
/// uniform distribution flagged as empty.
pub fn infer_topics(model: &TopicModel, counts: &[(u32, f64)]) -> Result<TopicInference, TopicModelError> {
    if let Some(&(t, _)) = counts.iter().find(|&&(t, _)| t as usize >= model.num_terms) {
        return Err(TopicModelError::FeatureSpaceMismatch(format!(
            "term index {t} outside a model with {} terms",
            model.num_terms
        )));
    }
    match model.config.kind() {
        ModelKind::Lda => lda::fold_in(model, counts),
        ModelKind::Nmf => nmf::project(model, counts),
    }
}

/// Topic distribution for a document id: the stored row for training
/// documents, otherwise [`infer_topics`] on `counts`.
pub fn topics_for(
    model: &TopicModel,
    doc_id: &str,
    counts: &[(u32, f64)],
) -> Result<TopicInference, TopicModelError> {
    match model.doc_topics(doc_id) {
        Some(inf) => Ok(inf),
        None => infer_topics(model, counts),
    }
}

/// Fits the model kind named by `config`.
pub fn fit(
    m: &DocTermMatrix,
    config: &ModelConfig,
    feature_checksum: &str,
) -> Result<TopicModel, TopicModelError> {
    match config {
        ModelConfig::Lda(c) => fit_lda(m, c, feature_checksum),
        ModelConfig::Nmf(c) => fit_nmf(m, c, feature_checksum),
    }
}

/// Fits `config` on a raw count matrix over `fs`. NMF is fitted on tf-idf
/// weights, which the model keeps for projecting unseen count rows.
pub fn fit_counts(
    counts: &DocTermMatrix,
    fs: &FeatureSpace,
    config: &ModelConfig,
) -> Result<TopicModel, TopicModelError> {
    let checksum = fs.checksum();
    match config {
        ModelConfig::Lda(_) => fit(counts, config, &checksum),
        ModelConfig::Nmf(_) => {
            let idf = inverse_document_frequency(counts);
            let mut model = fit(&apply_idf(counts, &idf), config, &checksum)?;
            model.set_input_weights(idf);
            Ok(model)
        }
    }
}

/// CSV of the top `n` terms per topic: `topic_id,rank,term,probability`,
/// rank starting at 1.
pub fn write_top_terms<W: Write>(
    model: &TopicModel,
    fs: &FeatureSpace,
    n: usize,
    w: W,
) -> Result<(), TopicModelError> {
    model.check_feature_space(fs)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["topic_id", "rank", "term", "probability"])?;
    for t in 0..model.num_topics {
        for (rank, (term, p)) in model.top_terms(t, n).into_iter().enumerate() {
            csv.write_record([t.to_string(), (rank + 1).to_string(), fs.term(term).to_string(), format!("{p}")])?;
        }
    }
    csv.flush()?;
    Ok(())
}
