//! Keyword-guided topic models as binary relevance classifiers.
//!
//! A collection retrieved by keyword search for some climate hazard (flood,
//! drought, wildfire, ...) contains many documents that merely *mention* a
//! keyword. This crate refines such a collection into relevant and
//! irrelevant documents without supervised training:
//!
//! 1. [`corpus`] cleans raw news items and applies rule-based inclusion
//!    filters, including the intruder-keyword rule.
//! 2. [`dedup`] finds near-duplicates with MinHash so that topic models are
//!    not trained on repeated texts.
//! 3. [`features`] turns documents into feature terms and sparse
//!    document-term matrices.
//! 4. [`topicmodel`] fits LDA (collapsed Gibbs) or NMF (multiplicative
//!    updates) and exposes the term-given-topic and topic-given-document
//!    distributions.
//! 5. [`classifier`] partitions topics into relevant and irrelevant ones using
//!    the hazard keywords, and labels a document relevant when a relevant
//!    topic's proportion reaches a threshold. It also runs the
//!    hyperparameter sweep and picks the F1, balanced and precision variants.
//! 6. [`eval`] computes precision, recall, F1, the all-positive baseline,
//!    Cohen's kappa and majority-vote ensembles.
//!
//! [`synth`] generates a synthetic hazard corpus with a planted relevant
//! topic, which the test suites and the guide use end to end.

pub mod classifier;
pub mod corpus;
pub mod dedup;
pub mod eval;
pub mod features;
mod io;
pub mod synth;
pub mod topicmodel;

pub use classifier::{
    classify, partition_topics, select_variants, sweep, ClassifierConfig, PartitionRule,
    PredictionSet, TopicPartition,
};
pub use corpus::{apply_filters, FilterRules, FilterVerdict, KeywordList, RawDocument};
pub use dedup::{group_duplicates, DuplicateGroups, MinHashSignature};
pub use eval::{baseline, cohen_kappa, evaluate, majority_vote, EvalReport, GoldLabel};
pub use features::{build_feature_space, vectorize, DocTermMatrix, FeatureSpace, TokenizedDocument};
pub use topicmodel::{fit_lda, fit_nmf, infer_topics, LdaConfig, NmfConfig, TopicModel};

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Dedup(#[from] dedup::DedupError),
    #[error(transparent)]
    Features(#[from] features::FeatureError),
    #[error(transparent)]
    TopicModel(#[from] topicmodel::TopicModelError),
    #[error(transparent)]
    Classifier(#[from] classifier::ClassifierError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
}

// The guide's code blocks run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/dedup.md")]
    mod dedup {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/topic-models.md")]
    mod topic_models {}
    #[doc = include_str!("../../../book/src/classification.md")]
    mod classification {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
