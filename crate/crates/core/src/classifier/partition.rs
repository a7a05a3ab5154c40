use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ClassifierError, PartitionRule};
use crate::features::FeatureSpace;
use crate::topicmodel::TopicModel;

/// A keyword's standing inside one topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordEvidence {
    pub term_index: usize,
    pub keyword: String,
    pub probability: f64,
    /// 1-based position in the topic's terms sorted by descending
    /// probability, ties broken by lower term index.
    pub rank: usize,
}

/// Relevant topics and, for each, the keywords that made it relevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicPartition {
    pub num_topics: usize,
    pub relevant_topics: BTreeSet<usize>,
    /// Witnessing keywords per relevant topic, best rank first.
    pub evidence: BTreeMap<usize, Vec<KeywordEvidence>>,
}

impl TopicPartition {
    pub fn is_relevant(&self, topic: usize) -> bool {
        self.relevant_topics.contains(&topic)
    }
}

/// Probability and rank of every keyword in every topic. Computed once per
/// model and reused for all partition rules of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordProfile {
    num_topics: usize,
    per_topic: Vec<Vec<KeywordEvidence>>,
}

impl KeywordProfile {
    pub fn new(model: &TopicModel, fs: &FeatureSpace) -> Result<Self, ClassifierError> {
        model.check_feature_space(fs)?;
        Self::unchecked(model, fs)
    }

    pub(crate) fn unchecked(model: &TopicModel, fs: &FeatureSpace) -> Result<Self, ClassifierError> {
        if fs.keyword_indices().is_empty() {
            return Err(ClassifierError::NoKeywordsInFeatureSpace);
        }
        let per_topic = (0..model.num_topics())
            .map(|t| {
                let row = model.p_feat_row(t);
                let mut ev: Vec<KeywordEvidence> = fs
                    .keyword_indices()
                    .iter()
                    .map(|&w| {
                        let p = row[w];
                        let above = row
                            .iter()
                            .enumerate()
                            .filter(|&(u, &q)| q > p || (q == p && u < w))
                            .count();
                        KeywordEvidence { term_index: w, keyword: fs.term(w).to_string(), probability: p, rank: above + 1 }
                    })
                    .collect();
                ev.sort_by_key(|e| e.rank);
                ev
            })
            .collect();
        Ok(KeywordProfile { num_topics: model.num_topics(), per_topic })
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    /// All keywords of topic `t`, best rank first.
    pub fn keywords_of(&self, t: usize) -> &[KeywordEvidence] {
        &self.per_topic[t]
    }

    /// Highest keyword probability in topic `t`.
    pub fn max_keyword_probability(&self, t: usize) -> f64 {
        self.per_topic[t].iter().map(|e| e.probability).fold(0.0, f64::max)
    }

    /// Best (smallest) keyword rank in topic `t`.
    pub fn best_keyword_rank(&self, t: usize) -> usize {
        self.per_topic[t].first().map_or(usize::MAX, |e| e.rank)
    }

    pub fn partition(&self, rule: &PartitionRule) -> TopicPartition {
        let mut relevant_topics = BTreeSet::new();
        let mut evidence = BTreeMap::new();
        for (t, kws) in self.per_topic.iter().enumerate() {
            let witnesses: Vec<KeywordEvidence> = kws
                .iter()
                .filter(|e| match *rule {
                    PartitionRule::KeywordProximity { gamma } => e.probability > gamma,
                    PartitionRule::TopTerms { k } => e.rank <= k,
                })
                .cloned()
                .collect();
            if !witnesses.is_empty() {
                relevant_topics.insert(t);
                evidence.insert(t, witnesses);
            }
        }
        TopicPartition { num_topics: self.num_topics, relevant_topics, evidence }
    }
}

/// Splits the topics of `model` with `rule`. Keyword proximity compares
/// strictly (`p > gamma`); top terms keeps ranks `1..=k`.
pub fn partition_topics(
    model: &TopicModel,
    fs: &FeatureSpace,
    rule: &PartitionRule,
) -> Result<TopicPartition, ClassifierError> {
    rule.validate()?;
    Ok(KeywordProfile::new(model, fs)?.partition(rule))
}
