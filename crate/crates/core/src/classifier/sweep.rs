use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, KeywordProfile, PartitionRule};
use crate::corpus::KeywordList;
use crate::eval::{Confusion, GoldLabel, Split};
use crate::features::{
    build_feature_space, count_row, DocTermMatrix, FeatureConfig,
    FeatureSpace, KeywordMatch, TokenizedDocument, Weighting,
};
use crate::topicmodel::{fit_counts, topics_for, LdaConfig, ModelConfig, ModelKind, NmfConfig, TopicModel};

/// Hyperparameter grid. Every combination of the feature and model axes is
/// fitted once; every rule and theta is then evaluated on that fit. A
/// partition method is skipped when its parameter list is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub kinds: Vec<ModelKind>,
    pub min_doc_freq: Vec<usize>,
    /// Allowed POS tag sets; an empty set disables the POS criterion.
    pub pos_sets: Vec<BTreeSet<String>>,
    pub num_topics: Vec<usize>,
    pub thetas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub ks: Vec<usize>,
}

fn stepped(from: u32, to: u32, step: u32, scale: f64) -> Vec<f64> {
    (from..=to).step_by(step as usize).map(|i| i as f64 / scale).collect()
}

impl Default for SweepGrid {
    fn default() -> Self {
        let tags = |ts: &[&str]| ts.iter().map(|t| t.to_string()).collect::<BTreeSet<_>>();
        SweepGrid {
            kinds: vec![ModelKind::Lda, ModelKind::Nmf],
            min_doc_freq: vec![50, 100, 500, 1000, 5000, 10000],
            pos_sets: vec![
                tags(&["NOUN"]),
                tags(&["NOUN", "PROPN"]),
                tags(&["ADJ", "NOUN", "VERB"]),
                tags(&["ADJ", "NOUN", "PROPN", "VERB"]),
            ],
            num_topics: vec![50, 100, 300, 500],
            thetas: stepped(4, 200, 2, 1000.0),
            gammas: stepped(18, 198, 18, 1000.0),
            ks: (1..=5).collect(),
        }
    }
}

impl SweepGrid {
    pub fn rules(&self) -> Vec<PartitionRule> {
        let kp = self.gammas.iter().map(|&gamma| PartitionRule::KeywordProximity { gamma });
        let tt = self.ks.iter().map(|&k| PartitionRule::TopTerms { k });
        kp.chain(tt).collect()
    }

    pub fn num_cells(&self) -> usize {
        self.kinds.len()
            * self.min_doc_freq.len()
            * self.pos_sets.len()
            * self.num_topics.len()
            * self.rules().len()
            * self.thetas.len()
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.num_cells() == 0 {
            return Err(ClassifierError::EmptyGrid);
        }
        for rule in self.rules() {
            rule.validate()?;
        }
        if let Some(t) = self.thetas.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(ClassifierError::InvalidConfig(format!("theta {t} outside [0, 1]")));
        }
        if self.num_topics.contains(&0) {
            return Err(ClassifierError::InvalidConfig("num_topics must be at least 1".into()));
        }
        Ok(())
    }
}

pub struct SweepInput<'a> {
    /// Every ingested document; gold documents are looked up here.
    pub docs: &'a [TokenizedDocument],
    /// Documents the models are fitted on, normally one per near-duplicate
    /// group. `None` fits on all of `docs`.
    pub train_ids: Option<&'a BTreeSet<String>>,
    pub keywords: &'a KeywordList,
    /// Only labels of the train split are used.
    pub gold: &'a [GoldLabel],
    pub keyword_match: KeywordMatch,
    /// Base LDA settings; `num_topics` is taken from the grid.
    pub lda: LdaConfig,
    /// Base NMF settings; `num_topics` is taken from the grid.
    pub nmf: NmfConfig,
    /// Return the fitted models alongside the result table.
    pub keep_models: bool,
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model_key: String,
    pub kind: ModelKind,
    pub min_doc_freq: usize,
    pub pos_tags: String,
    pub num_topics: usize,
    pub method: String,
    /// `gamma` for keyword proximity, `k` for top terms.
    pub parameter: f64,
    pub theta: f64,
    pub n_relevant_topics: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SweepRow {
    pub fn rule(&self) -> Result<PartitionRule, ClassifierError> {
        let rule = match self.method.as_str() {
            "keyword_proximity" => PartitionRule::KeywordProximity { gamma: self.parameter },
            "top_terms" if self.parameter.fract() == 0.0 && self.parameter >= 1.0 => {
                PartitionRule::TopTerms { k: self.parameter as usize }
            }
            other => return Err(ClassifierError::InvalidConfig(format!("bad rule {other} {}", self.parameter))),
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn confusion(&self) -> Confusion {
        Confusion { tp: self.tp, fp: self.fp, fn_: self.fn_, tn: self.tn }
    }

    pub fn write_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<(), ClassifierError> {
        let mut csv = csv::Writer::from_writer(w);
        for r in rows {
            csv.serialize(r)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Vec<SweepRow>, ClassifierError> {
        let mut csv = csv::Reader::from_reader(r);
        Ok(csv.deserialize().collect::<Result<Vec<SweepRow>, _>>()?)
    }
}

/// A model fitted during the sweep, kept for later classification.
#[derive(Debug, Clone)]
pub struct SweepModel {
    pub key: String,
    pub feature_space: FeatureSpace,
    pub model: TopicModel,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    /// All cells in grid order: kind, min_doc_freq, POS set, num_topics,
    /// then rules (keyword proximity before top terms), then theta.
    pub rows: Vec<SweepRow>,
    pub models: Vec<SweepModel>,
    /// Feature/model combinations that could not be fitted, with the reason.
    pub skipped: Vec<(String, String)>,
}

pub fn pos_label(tags: &BTreeSet<String>) -> String {
    if tags.is_empty() {
        "any".into()
    } else {
        tags.iter().cloned().collect::<Vec<_>>().join("+")
    }
}

pub fn model_key(kind: ModelKind, min_doc_freq: usize, pos: &BTreeSet<String>, num_topics: usize) -> String {
    format!("{}-df{}-{}-k{}", kind.as_str(), min_doc_freq, pos_label(pos), num_topics)
}

struct Combo<'g> {
    kind: ModelKind,
    min_doc_freq: usize,
    pos: &'g BTreeSet<String>,
    num_topics: usize,
    space: usize,
}

struct Space {
    fs: FeatureSpace,
    counts: DocTermMatrix,
}

/// Fits one model per feature/model combination on the training documents
/// and scores every (rule, theta) cell on the train split of `gold`.
///
/// Fits run in parallel; the returned table is in grid order regardless of
/// thread count. Combinations whose feature space is empty, whose corpus is
/// too small for the topic count, or whose features contain no keyword are
/// skipped and reported in [`SweepOutput::skipped`].
pub fn sweep(input: &SweepInput<'_>, grid: &SweepGrid) -> Result<SweepOutput, ClassifierError> {
    grid.validate()?;
    let by_id: HashMap<&str, &TokenizedDocument> = input.docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let gold: Vec<&GoldLabel> = input.gold.iter().filter(|g| g.split == Split::Train).collect();
    let missing: Vec<String> =
        gold.iter().filter(|g| !by_id.contains_key(g.doc_id.as_str())).map(|g| g.doc_id.clone()).collect();
    if !missing.is_empty() {
        return Err(ClassifierError::MissingDocuments(missing));
    }
    let train: Vec<TokenizedDocument> = match input.train_ids {
        Some(ids) => input.docs.iter().filter(|d| ids.contains(&d.doc_id)).cloned().collect(),
        None => input.docs.to_vec(),
    };

    let feature_axes: Vec<(usize, &BTreeSet<String>)> =
        grid.min_doc_freq.iter().flat_map(|&m| grid.pos_sets.iter().map(move |p| (m, p))).collect();
    let spaces: Vec<Result<Space, String>> = feature_axes
        .par_iter()
        .map(|&(min_doc_freq, pos)| {
            let cfg = FeatureConfig {
                min_doc_freq,
                allowed_pos: pos.clone(),
                keyword_match: input.keyword_match,
            };
            let fs = build_feature_space(&train, input.keywords, &cfg).map_err(|e| e.to_string())?;
            if fs.keyword_indices().is_empty() {
                return Err(ClassifierError::NoKeywordsInFeatureSpace.to_string());
            }
            let counts = crate::features::vectorize(&train, &fs, Weighting::Counts);
            Ok(Space { fs, counts })
        })
        .collect();

    let mut combos = Vec::new();
    for &kind in &grid.kinds {
        for (space, &(min_doc_freq, pos)) in feature_axes.iter().enumerate() {
            for &num_topics in &grid.num_topics {
                combos.push(Combo { kind, min_doc_freq, pos, num_topics, space });
            }
        }
    }

    let rules = grid.rules();
    let results: Vec<Result<(Vec<SweepRow>, Option<SweepModel>), (String, String)>> = combos
        .par_iter()
        .map(|c| {
            let key = model_key(c.kind, c.min_doc_freq, c.pos, c.num_topics);
            let space = spaces[c.space].as_ref().map_err(|e| (key.clone(), e.clone()))?;
            let model = fit_combo(input, c, space).map_err(|e| (key.clone(), e.to_string()))?;
            let rows = score_model(&model, &space.fs, &gold, &by_id, &rules, &grid.thetas, c, &key)
                .map_err(|e| (key.clone(), e.to_string()))?;
            let kept = input.keep_models.then(|| SweepModel { key: key.clone(), feature_space: space.fs.clone(), model });
            Ok((rows, kept))
        })
        .collect();

    let mut out = SweepOutput::default();
    for r in results {
        match r {
            Ok((rows, model)) => {
                out.rows.extend(rows);
                out.models.extend(model);
            }
            Err((key, reason)) => {
                log::warn!("skipping {key}: {reason}");
                out.skipped.push((key, reason));
            }
        }
    }
    Ok(out)
}

fn fit_combo(input: &SweepInput<'_>, c: &Combo<'_>, space: &Space) -> Result<TopicModel, ClassifierError> {
    let config = match c.kind {
        ModelKind::Lda => ModelConfig::Lda(LdaConfig { num_topics: c.num_topics, ..input.lda.clone() }),
        ModelKind::Nmf => ModelConfig::Nmf(NmfConfig { num_topics: c.num_topics, ..input.nmf.clone() }),
    };
    Ok(fit_counts(&space.counts, &space.fs, &config)?)
}

/// Largest share of a relevant topic per document, `None` for documents
/// without feature terms.
fn peak_relevant_share(distribution: &[Option<Vec<f64>>], relevant: &BTreeSet<usize>) -> Vec<Option<f64>> {
    distribution
        .iter()
        .map(|d| {
            let d = d.as_ref()?;
            relevant.iter().map(|&t| d[t]).reduce(f64::max)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn score_model(
    model: &TopicModel,
    fs: &FeatureSpace,
    gold: &[&GoldLabel],
    by_id: &HashMap<&str, &TokenizedDocument>,
    rules: &[PartitionRule],
    thetas: &[f64],
    c: &Combo<'_>,
    key: &str,
) -> Result<Vec<SweepRow>, ClassifierError> {
    let profile = KeywordProfile::unchecked(model, fs)?;
    let distributions = gold
        .iter()
        .map(|g| {
            let counts = count_row(&by_id[g.doc_id.as_str()].kept_terms, fs);
            let inf = topics_for(model, &g.doc_id, &counts)?;
            Ok((!inf.empty).then_some(inf.distribution))
        })
        .collect::<Result<Vec<_>, ClassifierError>>()?;

    let mut rows = Vec::with_capacity(rules.len() * thetas.len());
    for rule in rules {
        let partition = profile.partition(rule);
        let peaks = peak_relevant_share(&distributions, &partition.relevant_topics);
        for &theta in thetas {
            let mut conf = Confusion::default();
            for (g, peak) in gold.iter().zip(&peaks) {
                conf.add(peak.is_some_and(|p| p >= theta), g.relevant);
            }
            rows.push(SweepRow {
                model_key: key.to_string(),
                kind: c.kind,
                min_doc_freq: c.min_doc_freq,
                pos_tags: pos_label(c.pos),
                num_topics: c.num_topics,
                method: rule.method_name().to_string(),
                parameter: rule.parameter(),
                theta,
                n_relevant_topics: partition.relevant_topics.len(),
                tp: conf.tp,
                fp: conf.fp,
                fn_: conf.fn_,
                tn: conf.tn,
                precision: conf.precision(),
                recall: conf.recall(),
                f1: conf.f1(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{classify, partition_topics, ClassifierConfig, ClassifyInput};
    use crate::eval::{evaluate, Prominence};

    fn toy() -> (Vec<TokenizedDocument>, Vec<GoldLabel>, KeywordList) {
        let flood = ["flut", "hochwasser", "damm", "pegel", "regen"];
        let other = ["wahl", "partei", "minister", "debatte", "gesetz"];
        let sport = ["spiel", "trainer", "tor", "liga", "saison"];
        let mut docs = Vec::new();
        let mut gold = Vec::new();
        for i in 0..60 {
            let relevant = i % 3 == 0;
            let vocab = if relevant { &flood } else if i % 3 == 1 { &other } else { &sport };
            let mut terms: Vec<String> = (0..30).map(|j| vocab[(i + j * 7) % 5].to_string()).collect();
            if !relevant && i % 2 == 0 {
                terms.push("flut".into());
            }
            let id = format!("d{i:02}");
            docs.push(TokenizedDocument {
                doc_id: id.clone(),
                tokens: Vec::new(),
                kept_pos: vec![None; terms.len()],
                kept_terms: terms,
            });
            gold.push(GoldLabel {
                doc_id: id,
                relevant,
                prominence: if relevant { Prominence::Main } else { Prominence::None },
                hazard: "flood".into(),
                split: if i < 40 { Split::Train } else { Split::Test },
            });
        }
        (docs, gold, KeywordList::new("flood", ["flut", "hochwasser"], Vec::<String>::new()).unwrap())
    }

    fn small_grid() -> SweepGrid {
        SweepGrid {
            kinds: vec![ModelKind::Nmf],
            min_doc_freq: vec![2],
            pos_sets: vec![BTreeSet::new()],
            num_topics: vec![3],
            thetas: vec![0.1, 0.3],
            gammas: vec![0.05],
            ks: vec![2],
        }
    }

    fn input<'a>(docs: &'a [TokenizedDocument], gold: &'a [GoldLabel], kw: &'a KeywordList) -> SweepInput<'a> {
        SweepInput {
            docs,
            train_ids: None,
            keywords: kw,
            gold,
            keyword_match: KeywordMatch::Exact,
            lda: LdaConfig { iterations: 20, passes: 2, burn_in: 5, fold_in_samples: 5, ..Default::default() },
            nmf: NmfConfig::default(),
            keep_models: true,
        }
    }

    #[test]
    fn default_grid_values() {
        let g = SweepGrid::default();
        assert_eq!(g.thetas.len(), 99);
        assert_eq!(g.thetas[0], 0.004);
        assert_eq!(*g.thetas.last().unwrap(), 0.2);
        assert_eq!(g.gammas, vec![0.018, 0.036, 0.054, 0.072, 0.09, 0.108, 0.126, 0.144, 0.162, 0.18, 0.198]);
        assert_eq!(g.ks, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn single_cell_matches_direct_classification() {
        let (docs, gold, kw) = toy();
        let grid = SweepGrid { thetas: vec![0.2], ks: vec![], ..small_grid() };
        let out = sweep(&input(&docs, &gold, &kw), &grid).unwrap();
        assert_eq!(out.rows.len(), 1);
        let row = &out.rows[0];
        let m = &out.models[0];
        let rule = row.rule().unwrap();
        let partition = partition_topics(&m.model, &m.feature_space, &rule).unwrap();
        let cfg = ClassifierConfig { theta: row.theta, rule, model_ref: m.model.checksum() };
        let counts: Vec<Vec<(u32, f64)>> = docs.iter().map(|d| count_row(&d.kept_terms, &m.feature_space)).collect();
        let inputs: Vec<ClassifyInput<'_>> =
            docs.iter().zip(&counts).map(|(d, c)| ClassifyInput { doc_id: &d.doc_id, counts: c }).collect();
        let preds = classify(&m.model, &partition, &cfg, &inputs, "direct").unwrap();
        let report = evaluate(&preds, &gold, Split::Train).unwrap();
        assert_eq!(row.confusion(), report.scores.confusion);
        assert_eq!(row.f1, report.scores.f1);
    }

    #[test]
    fn theta_zero_recalls_everything() {
        let (docs, gold, kw) = toy();
        let grid = SweepGrid { thetas: vec![0.0], ..small_grid() };
        let out = sweep(&input(&docs, &gold, &kw), &grid).unwrap();
        let selecting: Vec<&SweepRow> = out.rows.iter().filter(|r| r.n_relevant_topics > 0).collect();
        assert!(!selecting.is_empty());
        for row in selecting {
            assert_eq!(row.recall, 1.0);
        }
    }

    #[test]
    fn separable_toy_is_solved() {
        let (docs, gold, kw) = toy();
        let mut grid = small_grid();
        grid.kinds = vec![ModelKind::Lda, ModelKind::Nmf];
        let out = sweep(&input(&docs, &gold, &kw), &grid).unwrap();
        assert_eq!(out.rows.len(), grid.num_cells());
        let best = out.rows.iter().map(|r| r.f1).fold(0.0, f64::max);
        assert!(best >= 0.9, "best F1 {best}");
    }

    #[test]
    fn order_and_skips_are_deterministic() {
        let (docs, gold, kw) = toy();
        let grid = SweepGrid { min_doc_freq: vec![2, 1000], num_topics: vec![2, 3], ..small_grid() };
        let a = sweep(&input(&docs, &gold, &kw), &grid).unwrap();
        let b = sweep(&input(&docs, &gold, &kw), &grid).unwrap();
        assert_eq!(a.rows, b.rows);
        // min_doc_freq 1000 keeps only the keywords, which still fit
        assert!(a.rows.iter().any(|r| r.min_doc_freq == 1000));
        let keys: Vec<&str> = a.rows.iter().map(|r| r.model_key.as_str()).collect();
        let mut dedup = keys.clone();
        dedup.dedup();
        assert_eq!(dedup, ["nmf-df2-any-k2", "nmf-df2-any-k3", "nmf-df1000-any-k2", "nmf-df1000-any-k3"]);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let (docs, gold, kw) = toy();
        let out = sweep(&input(&docs, &gold, &kw), &small_grid()).unwrap();
        let mut buf = Vec::new();
        SweepRow::write_csv(&mut buf, &out.rows).unwrap();
        assert_eq!(SweepRow::read_csv(&buf[..]).unwrap(), out.rows);

        let empty = SweepGrid { thetas: vec![], ..small_grid() };
        assert!(matches!(sweep(&input(&docs, &gold, &kw), &empty), Err(ClassifierError::EmptyGrid)));
        let mut gold = gold;
        gold[0].doc_id = "nowhere".into();
        assert!(matches!(
            sweep(&input(&docs, &gold, &kw), &small_grid()),
            Err(ClassifierError::MissingDocuments(_))
        ));
    }
}
