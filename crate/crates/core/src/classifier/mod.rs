//! From a fitted topic model to a binary relevance classifier.
//!
//! Topics are first split into relevant and irrelevant ones with a
//! [`PartitionRule`] that looks only at where the hazard keywords sit in
//! each topic's term distribution. A document is then relevant iff at least
//! one relevant topic makes up a share of at least `theta` of it. Every
//! positive prediction can therefore be traced back to a topic and to the
//! keyword that made that topic relevant.

mod partition;
mod select;
mod sweep;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::topicmodel::{TopicModel, TopicModelError};

pub use partition::{partition_topics, KeywordEvidence, KeywordProfile, TopicPartition};
pub use select::{select_variants, BalanceCriterion, SelectionSettings, Variant, Variants};
pub use sweep::{model_key, pos_label, sweep, SweepGrid, SweepInput, SweepModel, SweepOutput, SweepRow};

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("the feature space contains none of the hazard keywords")]
    NoKeywordsInFeatureSpace,
    #[error(transparent)]
    Model(#[from] TopicModelError),
    #[error("sweep grid has no cells")]
    EmptyGrid,
    #[error("no grid results to select from")]
    NoResults,
    #[error("invalid classifier setting: {0}")]
    InvalidConfig(String),
    #[error("partition does not belong to this model: {0}")]
    PartitionMismatch(String),
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("gold documents missing from the corpus: {}", .0.join(", "))]
    MissingDocuments(Vec<String>),
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Features(#[from] crate::features::FeatureError),
}

/// How topics are assigned to the relevant class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum PartitionRule {
    /// Relevant iff some keyword has probability strictly above `gamma`.
    KeywordProximity { gamma: f64 },
    /// Relevant iff some keyword is among the `k` most probable terms.
    TopTerms { k: usize },
}

impl PartitionRule {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        match *self {
            PartitionRule::KeywordProximity { gamma } if !(gamma > 0.0 && gamma < 1.0) => {
                Err(ClassifierError::InvalidConfig(format!("gamma must lie in (0, 1), got {gamma}")))
            }
            PartitionRule::TopTerms { k: 0 } => Err(ClassifierError::InvalidConfig("k must be at least 1".into())),
            _ => Ok(()),
        }
    }

    pub fn method_name(&self) -> &'static str {
        match self {
            PartitionRule::KeywordProximity { .. } => "keyword_proximity",
            PartitionRule::TopTerms { .. } => "top_terms",
        }
    }

    /// `gamma` or `k` as a number, for tables.
    pub fn parameter(&self) -> f64 {
        match *self {
            PartitionRule::KeywordProximity { gamma } => gamma,
            PartitionRule::TopTerms { k } => k as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub theta: f64,
    pub rule: PartitionRule,
    /// Checksum of the model the classifier was built from.
    pub model_ref: String,
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(ClassifierError::InvalidConfig(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        self.rule.validate()
    }
}

/// Binary labels for a set of documents, with the topics that triggered
/// each positive label when known.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub source: String,
    pub predictions: BTreeMap<String, bool>,
    #[serde(default)]
    pub explanations: BTreeMap<String, Vec<usize>>,
}

impl PredictionSet {
    pub fn new(source: impl Into<String>) -> Self {
        PredictionSet { source: source.into(), ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn positives(&self) -> impl Iterator<Item = &str> {
        self.predictions.iter().filter(|(_, &p)| p).map(|(id, _)| id.as_str())
    }

    pub fn get(&self, id: &str) -> Option<bool> {
        self.predictions.get(id).copied()
    }

    /// CSV with header `doc_id,label,topics`; topics are space-separated
    /// indices of the relevant topics that fired.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ClassifierError> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["doc_id", "label", "topics"])?;
        for (id, &label) in &self.predictions {
            let topics = self
                .explanations
                .get(id)
                .map(|ts| ts.iter().map(usize::to_string).collect::<Vec<_>>().join(" "))
                .unwrap_or_default();
            csv.write_record([id.as_str(), if label { "1" } else { "0" }, &topics])?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Reads `doc_id,label[,topics]` CSV. Labels must be `0` or `1`;
    /// duplicate ids are rejected. Errors carry 1-based file line numbers.
    pub fn read_csv<R: Read>(r: R, source: impl Into<String>, path_label: &str) -> Result<Self, ClassifierError> {
        let parse_err =
            |line: usize, message: String| ClassifierError::Parse { path: path_label.to_string(), line, message };
        let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(r);
        let headers = csv.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let (Some(id_col), Some(label_col)) = (col("doc_id"), col("label")) else {
            return Err(parse_err(1, "header must contain doc_id and label".into()));
        };
        let topic_col = col("topics");
        let mut out = PredictionSet::new(source);
        for rec in csv.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let id = rec.get(id_col).map(str::trim).filter(|s| !s.is_empty());
            let Some(id) = id else {
                return Err(parse_err(line, "missing doc_id".into()));
            };
            let label = match rec.get(label_col).map(str::trim) {
                Some("1") => true,
                Some("0") => false,
                other => return Err(parse_err(line, format!("label must be 0 or 1, got {:?}", other.unwrap_or("")))),
            };
            if out.predictions.insert(id.to_string(), label).is_some() {
                return Err(ClassifierError::DuplicateId(id.to_string()));
            }
            if let Some(field) = topic_col.and_then(|c| rec.get(c)) {
                let topics = field
                    .split_whitespace()
                    .map(|t| t.parse::<usize>().map_err(|_| parse_err(line, format!("bad topic index {t:?}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                if !topics.is_empty() {
                    out.explanations.insert(id.to_string(), topics);
                }
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path, source: impl Into<String>) -> Result<Self, ClassifierError> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), source, &path.display().to_string())
    }
}

/// Labels one document from its topic distribution: the relevant topics
/// whose share reaches `theta`, in increasing order.
pub fn triggering_topics(distribution: &[f64], relevant: &BTreeSet<usize>, theta: f64) -> Vec<usize> {
    relevant.iter().copied().filter(|&t| distribution.get(t).is_some_and(|&p| p >= theta)).collect()
}

/// A document to classify: its id and, for documents the model was not
/// trained on, its sparse count row over the model's feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyInput<'a> {
    pub doc_id: &'a str,
    pub counts: &'a [(u32, f64)],
}

/// Classifies documents: relevant iff some relevant topic has proportion
/// at least `theta`. Training documents use their stored distribution,
/// others are inferred. Documents without feature terms are never relevant.
pub fn classify(
    model: &TopicModel,
    partition: &TopicPartition,
    cfg: &ClassifierConfig,
    docs: &[ClassifyInput<'_>],
    source: &str,
) -> Result<PredictionSet, ClassifierError> {
    cfg.validate()?;
    if partition.num_topics != model.num_topics() {
        return Err(ClassifierError::PartitionMismatch(format!(
            "partition over {} topics, model has {}",
            partition.num_topics,
            model.num_topics()
        )));
    }
    let mut out = PredictionSet::new(source);
    for doc in docs {
        let inf = crate::topicmodel::topics_for(model, doc.doc_id, doc.counts)?;
        let fired = if inf.empty {
            Vec::new()
        } else {
            triggering_topics(&inf.distribution, &partition.relevant_topics, cfg.theta)
        };
        if out.predictions.insert(doc.doc_id.to_string(), !fired.is_empty()).is_some() {
            return Err(ClassifierError::DuplicateId(doc.doc_id.to_string()));
        }
        if !fired.is_empty() {
            out.explanations.insert(doc.doc_id.to_string(), fired);
        }
    }
    Ok(out)
}

/// Classifies every training document of `model`.
pub fn classify_training(
    model: &TopicModel,
    partition: &TopicPartition,
    cfg: &ClassifierConfig,
    source: &str,
) -> Result<PredictionSet, ClassifierError> {
    let inputs: Vec<ClassifyInput<'_>> =
        model.doc_ids().iter().map(|id| ClassifyInput { doc_id: id, counts: &[] }).collect();
    classify(model, partition, cfg, &inputs, source)
}
