//! Binary relevance metrics, the all-positive baseline, Cohen's kappa and
//! majority voting over prediction sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierError, PredictionSet};
use crate::topicmodel::{topics_for, TopicModel, TopicModelError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no prediction for {} gold document(s): {}", .0.len(), .0.join(", "))]
    MissingPrediction(Vec<String>),
    #[error("the {0} split has no gold labels")]
    EmptySplit(Split),
    #[error("no labels to compare")]
    NoLabels,
    #[error("kappa is undefined: both raters use a single, identical class")]
    DegenerateMarginals,
    #[error("label sets cover different documents: {0}")]
    IdMismatch(String),
    #[error("prediction sets cover different documents: {0}")]
    IdSetMismatch(String),
    #[error("invalid gold label for {doc_id:?}: {message}")]
    InvalidLabel { doc_id: String, message: String },
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("duplicate gold label for {0:?}")]
    DuplicateId(String),
    #[error(transparent)]
    Predictions(#[from] ClassifierError),
    #[error(transparent)]
    Model(#[from] TopicModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prominence {
    Main,
    Mention,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

impl FromStr for Prominence {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "main" => Ok(Prominence::Main),
            "mention" => Ok(Prominence::Mention),
            "none" | "" => Ok(Prominence::None),
            other => Err(format!("unknown prominence {other:?}")),
        }
    }
}

/// A human relevance judgement for one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub doc_id: String,
    pub relevant: bool,
    pub prominence: Prominence,
    pub hazard: String,
    pub split: Split,
}

impl GoldLabel {
    /// Relevant documents are `main` or `mention`, irrelevant ones `none`.
    pub fn validate(&self) -> Result<(), EvalError> {
        let invalid = |message: &str| EvalError::InvalidLabel { doc_id: self.doc_id.clone(), message: message.into() };
        if self.doc_id.is_empty() {
            return Err(invalid("empty doc_id"));
        }
        match (self.relevant, self.prominence) {
            (true, Prominence::None) => Err(invalid("relevant document needs prominence main or mention")),
            (false, Prominence::Main | Prominence::Mention) => Err(invalid("irrelevant document must have prominence none")),
            _ => Ok(()),
        }
    }
}

/// Reads gold CSV with header `doc_id,relevant,prominence,hazard,split`.
pub fn read_gold<R: Read>(r: R, path_label: &str) -> Result<Vec<GoldLabel>, EvalError> {
    let parse_err = |line: usize, message: String| EvalError::Parse { path: path_label.to_string(), line, message };
    let mut csv = csv::Reader::from_reader(r);
    let headers = csv.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| parse_err(1, format!("missing column {name}")))
    };
    let cols = [col("doc_id")?, col("relevant")?, col("prominence")?, col("hazard")?, col("split")?];
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for rec in csv.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(cols[i]).unwrap_or("").trim();
        let relevant = match field(1) {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(line, format!("relevant must be 0 or 1, got {other:?}"))),
        };
        let label = GoldLabel {
            doc_id: field(0).to_string(),
            relevant,
            prominence: field(2).parse().map_err(|m| parse_err(line, m))?,
            hazard: field(3).to_string(),
            split: field(4).parse().map_err(|m| parse_err(line, m))?,
        };
        label.validate()?;
        if !seen.insert(label.doc_id.clone()) {
            return Err(EvalError::DuplicateId(label.doc_id));
        }
        out.push(label);
    }
    Ok(out)
}

pub fn load_gold(path: &Path) -> Result<Vec<GoldLabel>, EvalError> {
    let file = std::fs::File::open(path)?;
    read_gold(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn write_gold<W: Write>(w: W, gold: &[GoldLabel]) -> Result<(), EvalError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["doc_id", "relevant", "prominence", "hazard", "split"])?;
    for g in gold {
        let prominence = match g.prominence {
            Prominence::Main => "main",
            Prominence::Mention => "mention",
            Prominence::None => "none",
        };
        csv.write_record([g.doc_id.as_str(), if g.relevant { "1" } else { "0" }, prominence, &g.hazard, &g.split.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// Confusion counts of a binary predictor against gold labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `tp / (tp + fp)`, or 0 when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `tp / (tp + fn)`, or 0 when there are no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall, 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Which metrics fell back to 0 because their denominator was 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degeneracy {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl Degeneracy {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

/// Confusion counts with the derived scores, overall or for one hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    #[serde(flatten)]
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: Degeneracy,
    /// Gold documents with prominence `main`.
    pub n_main: usize,
    /// Of those, how many were predicted relevant.
    pub n_main_correct: usize,
}

impl Scores {
    pub fn from_confusion(confusion: Confusion, n_main: usize, n_main_correct: usize) -> Self {
        let degenerate = Degeneracy {
            precision: confusion.tp + confusion.fp == 0,
            recall: confusion.tp + confusion.fn_ == 0,
            f1: confusion.precision() + confusion.recall() == 0.0,
        };
        Scores {
            confusion,
            precision: confusion.precision(),
            recall: confusion.recall(),
            f1: confusion.f1(),
            degenerate,
            n_main,
            n_main_correct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source: String,
    pub split: Split,
    pub scores: Scores,
    pub per_hazard: BTreeMap<String, Scores>,
}

impl EvalReport {
    /// Plain-text table, scores rounded to three decimals.
    pub fn render(&self) -> String {
        let mut out = format!("source: {}  split: {}\n", self.source, self.split);
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7} {:>7} {:>8}",
            "hazard", "tp", "fp", "fn", "tn", "P", "R", "F1", "n main"
        );
        let mut line = |name: &str, s: &Scores| {
            let c = &s.confusion;
            let flag = if s.degenerate.any() { " *" } else { "" };
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>6} {:>6} {:>6} {:>7.3} {:>7.3} {:>7.3} {:>4}/{:<3}{}",
                name, c.tp, c.fp, c.fn_, c.tn, s.precision, s.recall, s.f1, s.n_main_correct, s.n_main, flag
            );
        };
        for (hazard, s) in &self.per_hazard {
            line(hazard, s);
        }
        line("all", &self.scores);
        if self.scores.degenerate.any() || self.per_hazard.values().any(|s| s.degenerate.any()) {
            out.push_str("* a metric had a zero denominator and was set to 0\n");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores `pred` against the gold labels of `split`. Predictions for
/// documents without a gold label in that split are ignored.
pub fn evaluate(pred: &PredictionSet, gold: &[GoldLabel], split: Split) -> Result<EvalReport, EvalError> {
    let in_split: Vec<&GoldLabel> = gold.iter().filter(|g| g.split == split).collect();
    let missing: Vec<String> =
        in_split.iter().filter(|g| pred.get(&g.doc_id).is_none()).map(|g| g.doc_id.clone()).collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPrediction(missing));
    }
    let mut overall = (Confusion::default(), 0, 0);
    let mut per_hazard: BTreeMap<String, (Confusion, usize, usize)> = BTreeMap::new();
    for g in in_split {
        let p = pred.get(&g.doc_id).unwrap_or(false);
        let main = g.prominence == Prominence::Main;
        for acc in [&mut overall, per_hazard.entry(g.hazard.clone()).or_default()] {
            acc.0.add(p, g.relevant);
            acc.1 += main as usize;
            acc.2 += (main && p) as usize;
        }
    }
    Ok(EvalReport {
        source: pred.source.clone(),
        split,
        scores: Scores::from_confusion(overall.0, overall.1, overall.2),
        per_hazard: per_hazard.into_iter().map(|(h, (c, m, mc))| (h, Scores::from_confusion(c, m, mc))).collect(),
    })
}

/// Report of the all-positive predictor, i.e. of keyword retrieval alone.
pub fn baseline(gold: &[GoldLabel], split: Split) -> Result<EvalReport, EvalError> {
    let mut pred = PredictionSet::new("baseline");
    for g in gold.iter().filter(|g| g.split == split) {
        pred.predictions.insert(g.doc_id.clone(), true);
    }
    if pred.is_empty() {
        return Err(EvalError::EmptySplit(split));
    }
    evaluate(&pred, gold, split)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    /// Share of documents both raters labelled alike.
    pub agreement: f64,
    pub kappa: f64,
}

/// Cohen's kappa of two raters over the same documents.
pub fn cohen_kappa(a: &BTreeMap<String, bool>, b: &BTreeMap<String, bool>) -> Result<Agreement, EvalError> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        let only_a: Vec<&str> = a.keys().filter(|k| !b.contains_key(*k)).map(String::as_str).collect();
        let only_b: Vec<&str> = b.keys().filter(|k| !a.contains_key(*k)).map(String::as_str).collect();
        return Err(EvalError::IdMismatch(format!("only in first: {only_a:?}; only in second: {only_b:?}")));
    }
    let xs: Vec<bool> = a.values().copied().collect();
    let ys: Vec<bool> = b.values().copied().collect();
    cohen_kappa_labels(&xs, &ys)
}

/// Cohen's kappa over two aligned label vectors.
pub fn cohen_kappa_labels(a: &[bool], b: &[bool]) -> Result<Agreement, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::IdMismatch(format!("{} labels against {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(EvalError::NoLabels);
    }
    let n = a.len() as u128;
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count() as u128;
    let a1 = a.iter().filter(|&&x| x).count() as u128;
    let b1 = b.iter().filter(|&&x| x).count() as u128;
    // p_e = 1 exactly when both raters put everything in the same class.
    let expected = a1 * b1 + (n - a1) * (n - b1);
    if expected == n * n {
        return Err(EvalError::DegenerateMarginals);
    }
    let p_o = same as f64 / n as f64;
    let p_e = expected as f64 / (n * n) as f64;
    Ok(Agreement { agreement: p_o, kappa: (p_o - p_e) / (1.0 - p_e) })
}

/// Per-document label chosen by at least two of the three sets.
pub fn majority_vote(sets: [&PredictionSet; 3]) -> Result<PredictionSet, EvalError> {
    let ids = |p: &PredictionSet| p.predictions.keys().cloned().collect::<BTreeSet<_>>();
    let first = ids(sets[0]);
    for s in &sets[1..] {
        let other = ids(s);
        if other != first {
            let diff: Vec<&String> = first.symmetric_difference(&other).take(10).collect();
            return Err(EvalError::IdSetMismatch(format!(
                "{:?} and {:?} differ on {diff:?}",
                sets[0].source, s.source
            )));
        }
    }
    let mut out = PredictionSet::new("majority");
    for id in first {
        let votes = sets.iter().filter(|s| s.get(&id) == Some(true)).count();
        out.predictions.insert(id, votes >= 2);
    }
    Ok(out)
}

/// Loads predictions produced outside this crate (`doc_id,label` CSV).
pub fn import_external(path: &Path, source: &str) -> Result<PredictionSet, EvalError> {
    Ok(PredictionSet::load(path, source)?)
}

/// One point for a theta-sensitivity plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub doc_id: String,
    pub topic_probability: f64,
    pub gold_label: bool,
}

/// Proportion of `topic` in every gold document of `split`, next to its
/// gold label. Documents the model was not trained on are inferred from
/// their count rows in `counts`.
pub fn theta_sensitivity(
    model: &TopicModel,
    topic: usize,
    gold: &[GoldLabel],
    split: Split,
    counts: &HashMap<String, Vec<(u32, f64)>>,
) -> Result<Vec<ThetaPoint>, EvalError> {
    if topic >= model.num_topics() {
        return Err(EvalError::Model(TopicModelError::InvalidConfig(format!(
            "topic {topic} outside a model with {} topics",
            model.num_topics()
        ))));
    }
    let mut missing = Vec::new();
    let mut out = Vec::new();
    for g in gold.iter().filter(|g| g.split == split) {
        let row = match (model.doc_topics(&g.doc_id), counts.get(&g.doc_id)) {
            (Some(inf), _) => inf,
            (None, Some(c)) => topics_for(model, &g.doc_id, c)?,
            (None, None) => {
                missing.push(g.doc_id.clone());
                continue;
            }
        };
        let p = if row.empty { 0.0 } else { row.distribution[topic] };
        out.push(ThetaPoint { doc_id: g.doc_id.clone(), topic_probability: p, gold_label: g.relevant });
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingPrediction(missing));
    }
    Ok(out)
}

pub fn write_theta_sensitivity<W: Write>(w: W, points: &[ThetaPoint]) -> Result<(), EvalError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["doc_id", "topic_probability", "gold_label"])?;
    for p in points {
        csv.write_record([p.doc_id.clone(), format!("{}", p.topic_probability), (p.gold_label as u8).to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gold(id: &str, relevant: bool, hazard: &str, split: Split) -> GoldLabel {
        GoldLabel {
            doc_id: id.into(),
            relevant,
            prominence: if relevant { Prominence::Main } else { Prominence::None },
            hazard: hazard.into(),
            split,
        }
    }

    fn preds(source: &str, labels: &[(&str, bool)]) -> PredictionSet {
        let mut p = PredictionSet::new(source);
        for (id, l) in labels {
            p.predictions.insert(id.to_string(), *l);
        }
        p
    }

    #[test]
    fn hand_confusion() {
        let c = Confusion { tp: 3, fp: 1, fn_: 2, tn: 0 };
        assert_eq!(c.precision(), 0.75);
        assert_eq!(c.recall(), 0.6);
        assert!((c.f1() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_on_positive_rate() {
        let gold: Vec<GoldLabel> =
            (0..100).map(|i| gold(&format!("d{i:03}"), i < 35, "flood", Split::Test)).collect();
        let r = baseline(&gold, Split::Test).unwrap();
        assert_eq!(format!("{:.3}", r.scores.precision), "0.350");
        assert_eq!(r.scores.recall, 1.0);
        assert_eq!(format!("{:.3}", r.scores.f1), "0.519");
        assert_eq!(r.scores.n_main, 35);
        assert_eq!(r.scores.n_main_correct, 35);
        assert!(matches!(baseline(&gold, Split::Train), Err(EvalError::EmptySplit(Split::Train))));
    }

    #[test]
    fn zero_positive_split_is_flagged() {
        let gold = vec![gold("a", false, "h", Split::Test), gold("b", false, "h", Split::Test)];
        let r = baseline(&gold, Split::Test).unwrap();
        assert_eq!(r.scores.precision, 0.0);
        assert_eq!(r.scores.f1, 0.0);
        assert!(r.scores.degenerate.recall && r.scores.degenerate.f1);
        assert!(r.render().contains('*'));
    }

    #[test]
    fn missing_predictions_listed() {
        let gold = vec![gold("a", true, "h", Split::Test), gold("b", false, "h", Split::Test)];
        let err = evaluate(&preds("x", &[("a", true)]), &gold, Split::Test).unwrap_err();
        assert!(matches!(err, EvalError::MissingPrediction(ref ids) if ids == &["b".to_string()]));
    }

    #[test]
    fn per_hazard_breakdown_sums_to_overall() {
        let gold = vec![
            gold("a", true, "flood", Split::Test),
            gold("b", false, "flood", Split::Test),
            gold("c", true, "storm", Split::Test),
            gold("d", true, "storm", Split::Train),
        ];
        let p = preds("x", &[("a", true), ("b", true), ("c", false)]);
        let r = evaluate(&p, &gold, Split::Test).unwrap();
        assert_eq!(r.scores.confusion, Confusion { tp: 1, fp: 1, fn_: 1, tn: 0 });
        assert_eq!(r.per_hazard["flood"].confusion, Confusion { tp: 1, fp: 1, fn_: 0, tn: 0 });
        assert_eq!(r.per_hazard["storm"].confusion, Confusion { tp: 0, fp: 0, fn_: 1, tn: 0 });
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["scores"]["fn"], 1);
    }

    #[test]
    fn kappa_examples() {
        let k = cohen_kappa_labels(&[true, true, false, false], &[true, false, true, false]).unwrap();
        assert_eq!(k.agreement, 0.5);
        assert_eq!(k.kappa, 0.0);
        let same = [true, false, true];
        assert_eq!(cohen_kappa_labels(&same, &same).unwrap().kappa, 1.0);
        assert!(matches!(cohen_kappa_labels(&[true, true], &[true, true]), Err(EvalError::DegenerateMarginals)));
        assert!(matches!(cohen_kappa_labels(&[], &[]), Err(EvalError::NoLabels)));
        let a: BTreeMap<String, bool> = [("x".into(), true)].into();
        let b: BTreeMap<String, bool> = [("y".into(), true)].into();
        assert!(matches!(cohen_kappa(&a, &b), Err(EvalError::IdMismatch(_))));
    }

    #[test]
    fn majority_vote_examples() {
        let a = preds("a", &[("1", true), ("2", false)]);
        let b = preds("b", &[("1", true), ("2", false)]);
        let c = preds("c", &[("1", false), ("2", false)]);
        let m = majority_vote([&a, &b, &c]).unwrap();
        assert_eq!(m.source, "majority");
        assert_eq!(m.get("1"), Some(true));
        assert_eq!(m.get("2"), Some(false));
        let short = preds("c", &[("1", false)]);
        assert!(matches!(majority_vote([&a, &b, &short]), Err(EvalError::IdSetMismatch(_))));
    }

    #[test]
    fn gold_csv_round_trip_and_validation() {
        let labels = vec![gold("a", true, "flood", Split::Train), gold("b", false, "flood", Split::Test)];
        let mut buf = Vec::new();
        write_gold(&mut buf, &labels).unwrap();
        assert_eq!(read_gold(&buf[..], "mem").unwrap(), labels);
        let bad = "doc_id,relevant,prominence,hazard,split\na,1,none,flood,train\n";
        assert!(matches!(read_gold(bad.as_bytes(), "g"), Err(EvalError::InvalidLabel { .. })));
        let bad = "doc_id,relevant,prominence,hazard,split\na,1,main,flood,dev\n";
        assert!(matches!(read_gold(bad.as_bytes(), "g"), Err(EvalError::Parse { line: 2, .. })));
    }

    fn kappa_oracle(a: &[bool], b: &[bool]) -> f64 {
        let mut table = [[0f64; 2]; 2];
        for (&x, &y) in a.iter().zip(b) {
            table[x as usize][y as usize] += 1.0;
        }
        let n = a.len() as f64;
        let po = (table[0][0] + table[1][1]) / n;
        let pe: f64 = (0..2).map(|c| (table[c][0] + table[c][1]) / n * (table[0][c] + table[1][c]) / n).sum();
        (po - pe) / (1.0 - pe)
    }

    proptest! {
        #[test]
        fn kappa_matches_contingency_table(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 100)) {
            let (a, b): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
            if let Ok(k) = cohen_kappa_labels(&a, &b) {
                prop_assert!((k.kappa - kappa_oracle(&a, &b)).abs() < 1e-12);
                let na: Vec<bool> = a.iter().map(|x| !x).collect();
                let nb: Vec<bool> = b.iter().map(|x| !x).collect();
                let swapped = cohen_kappa_labels(&na, &nb).unwrap();
                prop_assert!((k.kappa - swapped.kappa).abs() < 1e-12);
            }
        }

        #[test]
        fn all_ones_equals_baseline(labels in prop::collection::vec(any::<bool>(), 1..60)) {
            let gold: Vec<GoldLabel> = labels.iter().enumerate()
                .map(|(i, &r)| gold(&format!("d{i}"), r, "h", Split::Test)).collect();
            let mut ones = PredictionSet::new("baseline");
            for g in &gold { ones.predictions.insert(g.doc_id.clone(), true); }
            prop_assert_eq!(evaluate(&ones, &gold, Split::Test).unwrap(), baseline(&gold, Split::Test).unwrap());
        }

        #[test]
        fn vote_is_permutation_invariant(votes in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..30)) {
            let mk = |name: &str, f: &dyn Fn(&(bool, bool, bool)) -> bool| {
                let mut p = PredictionSet::new(name);
                for (i, v) in votes.iter().enumerate() { p.predictions.insert(format!("d{i}"), f(v)); }
                p
            };
            let (a, b, c) = (mk("a", &|v| v.0), mk("b", &|v| v.1), mk("c", &|v| v.2));
            let base = majority_vote([&a, &b, &c]).unwrap();
            for perm in [[&a, &c, &b], [&b, &a, &c], [&b, &c, &a], [&c, &a, &b], [&c, &b, &a]] {
                prop_assert_eq!(&majority_vote(perm).unwrap(), &base);
            }
            let same = majority_vote([&a, &a, &a]).unwrap();
            prop_assert_eq!(same.predictions, a.predictions.clone());
        }
    }
}
