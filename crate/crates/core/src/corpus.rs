//! Raw news documents, cleaning, and the rule-based inclusion filters.
//!
//! Documents arrive as JSON Lines. Each one is stripped of leftover markup,
//! split where several agency items were concatenated into one record, and
//! then checked against the inclusion rules in [`apply_filters`]. A document
//! that fails any rule is rejected with one [`RejectReason`] per failed rule
//! so that recall loss can be audited afterwards.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::OnceLock;

use chrono::NaiveDate;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::features;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("location filter is enabled but the gazetteer has no entries")]
    MissingGazetteer,
    #[error("invalid document {id:?}: {reason}")]
    InvalidDocument { id: String, reason: String },
    #[error("document id {0:?} occurs more than once with different content")]
    DuplicateId(String),
    #[error("invalid keyword list: {0}")]
    InvalidKeywords(String),
    #[error("invalid filter rules: {0}")]
    InvalidRules(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One news item as retrieved by the keyword query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
    pub outlet: String,
    pub date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ressort: Option<String>,
    pub hazard: String,
    /// Optional pre-annotated token layer, one token per line with
    /// tab-separated `form`, `lemma` and `pos` columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conll: Option<String>,
}

impl RawDocument {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.id.is_empty() {
            return Err(CorpusError::InvalidDocument { id: self.id.clone(), reason: "empty id".into() });
        }
        if self.text.trim().is_empty() {
            return Err(CorpusError::InvalidDocument { id: self.id.clone(), reason: "empty text".into() });
        }
        Ok(())
    }
}

/// Hazard keywords and their known intruders, both lowercase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordList {
    pub hazard: String,
    pub keywords: BTreeSet<String>,
    #[serde(default)]
    pub intruders: BTreeSet<String>,
}

impl KeywordList {
    pub fn new<K, I>(hazard: impl Into<String>, keywords: K, intruders: I) -> Result<Self, CorpusError>
    where
        K: IntoIterator,
        K::Item: AsRef<str>,
        I: IntoIterator,
        I::Item: AsRef<str>,
    {
        let list = KeywordList {
            hazard: hazard.into(),
            keywords: keywords.into_iter().map(|k| k.as_ref().trim().to_lowercase()).collect(),
            intruders: intruders.into_iter().map(|k| k.as_ref().trim().to_lowercase()).collect(),
        };
        list.validate()?;
        Ok(list)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.keywords.is_empty() || self.keywords.iter().any(|k| k.is_empty()) {
            return Err(CorpusError::InvalidKeywords("keyword set must be non-empty".into()));
        }
        if let Some(both) = self.keywords.intersection(&self.intruders).next() {
            return Err(CorpusError::InvalidKeywords(format!("{both:?} is both keyword and intruder")));
        }
        Ok(())
    }

    /// True if `token` (lowercase) contains any hazard keyword.
    pub fn contains_keyword(&self, token: &str) -> bool {
        self.keywords.iter().any(|k| token.contains(k.as_str()))
    }

    pub fn is_intruder(&self, token: &str) -> bool {
        self.intruders.contains(token)
    }
}

/// Place names used by the location requirement and the dateline rule.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gazetteer {
    #[serde(default)]
    pub countries: BTreeSet<String>,
    #[serde(default)]
    pub nationalities: BTreeSet<String>,
    #[serde(default)]
    pub cities: BTreeSet<String>,
    /// German cities, checked against the first token of a document. Falls
    /// back to `cities` when empty.
    #[serde(default)]
    pub german_cities: BTreeSet<String>,
}

impl Gazetteer {
    pub fn is_empty(&self) -> bool {
        self.countries.is_empty() && self.nationalities.is_empty() && self.cities.is_empty()
    }

    fn dateline_cities(&self) -> &BTreeSet<String> {
        if self.german_cities.is_empty() {
            &self.cities
        } else {
            &self.german_cities
        }
    }

    /// True if any entry (possibly multi-word) occurs in the lowercase token
    /// sequence.
    pub fn mentions_location(&self, tokens: &[String]) -> bool {
        let entries = self.countries.iter().chain(&self.nationalities).chain(&self.cities);
        let mut single: HashSet<String> = HashSet::new();
        let mut multi: Vec<Vec<String>> = Vec::new();
        for e in entries {
            let parts: Vec<String> = features::tokenize(e).into_iter().map(|p| p.to_lowercase()).collect();
            match parts.len() {
                0 => {}
                1 => {
                    single.insert(parts.into_iter().next().unwrap());
                }
                _ => multi.push(parts),
            }
        }
        let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
        if lower.iter().any(|t| single.contains(t)) {
            return true;
        }
        multi.iter().any(|m| lower.windows(m.len()).any(|w| w == m.as_slice()))
    }
}

/// Thresholds of the inclusion filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterRules {
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub max_nonalpha_ratio: f64,
    pub forbidden_ressort_substrings: Vec<String>,
    pub require_location: bool,
    pub gazetteer: Gazetteer,
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            min_tokens: 30,
            max_tokens: 1700,
            max_nonalpha_ratio: 0.11,
            forbidden_ressort_substrings: vec!["lokal".to_string()],
            require_location: true,
            gazetteer: Gazetteer::default(),
        }
    }
}

impl FilterRules {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(0 < self.min_tokens && self.min_tokens < self.max_tokens) {
            return Err(CorpusError::InvalidRules(format!(
                "need 0 < min_tokens < max_tokens, got {} and {}",
                self.min_tokens, self.max_tokens
            )));
        }
        if !(self.max_nonalpha_ratio > 0.0 && self.max_nonalpha_ratio < 1.0) {
            return Err(CorpusError::InvalidRules(format!(
                "max_nonalpha_ratio must lie in (0, 1), got {}",
                self.max_nonalpha_ratio
            )));
        }
        if self.require_location && self.gazetteer.is_empty() {
            return Err(CorpusError::MissingGazetteer);
        }
        Ok(())
    }
}

/// Why a document was excluded. One code per failed rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NoKeyword,
    IntruderOnly,
    LocalRessort,
    TooShort,
    TooLong,
    NonAlphaRatio,
    NoLocation,
    CityDateline,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::NoKeyword => "no_keyword",
            RejectReason::IntruderOnly => "intruder_only",
            RejectReason::LocalRessort => "local_ressort",
            RejectReason::TooShort => "too_short",
            RejectReason::TooLong => "too_long",
            RejectReason::NonAlphaRatio => "nonalpha_ratio",
            RejectReason::NoLocation => "no_location",
            RejectReason::CityDateline => "city_dateline",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        use RejectReason::*;
        [NoKeyword, IntruderOnly, LocalRessort, TooShort, TooLong, NonAlphaRatio, NoLocation, CityDateline]
            .into_iter()
            .find(|r| r.code() == code)
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub keep: bool,
    pub reasons: Vec<RejectReason>,
}

impl FilterVerdict {
    fn from_reasons(reasons: Vec<RejectReason>) -> Self {
        FilterVerdict { keep: reasons.is_empty(), reasons }
    }
}

fn markup_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new("<.*?>").expect("static pattern"))
}

/// Removes every `<...>` span (shortest match, not crossing line breaks).
pub fn strip_markup(text: &str) -> String {
    markup_pattern().replace_all(text, "").into_owned()
}

pub const DEFAULT_AGENCY_MARKERS: [&str; 6] = ["dpa", "afp", "ap", "rtr", "epd", "kna"];

/// Splits a record made of several agency items. A segment ends right after
/// each parenthesized agency marker, e.g. `(dpa)`; matching ignores case.
/// The segments concatenate back to the input.
pub fn split_concatenated<S: AsRef<str>>(text: &str, agency_markers: &[S]) -> Vec<String> {
    let alternatives: Vec<String> = agency_markers
        .iter()
        .map(|m| m.as_ref().trim())
        .filter(|m| !m.is_empty())
        .map(regex::escape)
        .collect();
    if alternatives.is_empty() {
        return vec![text.to_string()];
    }
    let re = Regex::new(&format!(r"(?i)\((?:{})\)", alternatives.join("|"))).expect("escaped markers");
    let mut out = Vec::new();
    let mut start = 0;
    for m in re.find_iter(text) {
        out.push(text[start..m.end()].to_string());
        start = m.end();
    }
    if start < text.len() || out.is_empty() {
        out.push(text[start..].to_string());
    }
    out
}

/// True iff the tokens contain an intruder and no token carries a valid
/// (non-intruder) keyword. Keywords match as substrings, intruders as whole
/// tokens.
pub fn intruder_only<S: AsRef<str>>(tokens: &[S], kw: &KeywordList) -> bool {
    let mut has_intruder = false;
    for t in tokens {
        let t = t.as_ref();
        if kw.is_intruder(t) {
            has_intruder = true;
        } else if kw.contains_keyword(t) {
            return false;
        }
    }
    has_intruder
}

/// Share of non-alphabetic characters among the non-whitespace characters.
pub fn nonalpha_ratio(text: &str) -> f64 {
    let (mut total, mut nonalpha) = (0usize, 0usize);
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        total += 1;
        if !c.is_alphabetic() {
            nonalpha += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        nonalpha as f64 / total as f64
    }
}

/// The leading word of `text` when it is immediately followed by a full stop.
fn dateline_word(text: &str) -> Option<String> {
    let trimmed = text.trim_start();
    let end = trimmed
        .char_indices()
        .find(|&(_, c)| !(c.is_alphabetic() || c == '-'))
        .map(|(i, _)| i)
        .unwrap_or(trimmed.len());
    if end == 0 {
        return None;
    }
    trimmed[end..].starts_with('.').then(|| trimmed[..end].to_lowercase())
}

/// Checks one document against every inclusion rule.
///
/// `tokens` are the surface tokens of `doc.text` as produced by
/// [`features::tokenize`]; case does not matter.
pub fn apply_filters<S: AsRef<str>>(
    doc: &RawDocument,
    tokens: &[S],
    kw: &KeywordList,
    rules: &FilterRules,
) -> Result<FilterVerdict, CorpusError> {
    if rules.require_location && rules.gazetteer.is_empty() {
        return Err(CorpusError::MissingGazetteer);
    }
    let lower: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
    let mut reasons = Vec::new();

    if !lower.iter().any(|t| kw.contains_keyword(t) || kw.is_intruder(t)) {
        reasons.push(RejectReason::NoKeyword);
    }
    if intruder_only(&lower, kw) {
        reasons.push(RejectReason::IntruderOnly);
    }
    if let Some(ressort) = &doc.ressort {
        let ressort = ressort.to_lowercase();
        if rules.forbidden_ressort_substrings.iter().any(|s| ressort.contains(&s.to_lowercase())) {
            reasons.push(RejectReason::LocalRessort);
        }
    }
    if lower.len() < rules.min_tokens {
        reasons.push(RejectReason::TooShort);
    }
    if lower.len() > rules.max_tokens {
        reasons.push(RejectReason::TooLong);
    }
    if nonalpha_ratio(&doc.text) >= rules.max_nonalpha_ratio {
        reasons.push(RejectReason::NonAlphaRatio);
    }
    if rules.require_location && !rules.gazetteer.mentions_location(&lower) {
        reasons.push(RejectReason::NoLocation);
    }
    let cities = rules.gazetteer.dateline_cities();
    if !cities.is_empty() {
        if let Some(word) = dateline_word(&doc.text) {
            if cities.contains(&word) {
                reasons.push(RejectReason::CityDateline);
            }
        }
    }
    Ok(FilterVerdict::from_reasons(reasons))
}

/// Per-hazard configuration file: keywords, intruders, agency markers and
/// filter rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardConfig {
    pub hazard: String,
    pub keywords: Vec<String>,
    #[serde(default)]
    pub intruders: Vec<String>,
    #[serde(default = "default_agency_markers")]
    pub agency_markers: Vec<String>,
    #[serde(default)]
    pub filters: FilterRules,
}

fn default_agency_markers() -> Vec<String> {
    DEFAULT_AGENCY_MARKERS.iter().map(|s| s.to_string()).collect()
}

impl HazardConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, CorpusError> {
        let cfg: HazardConfig = toml::from_str(s).map_err(|e| CorpusError::Config(e.to_string()))?;
        cfg.keyword_list()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("hazard config serializes")
    }

    pub fn keyword_list(&self) -> Result<KeywordList, CorpusError> {
        KeywordList::new(&self.hazard, &self.keywords, &self.intruders)
    }
}

/// Result of [`ingest`]: kept documents sorted by id, and the rejection log.
#[derive(Debug, Clone, Default)]
pub struct IngestOutput {
    pub kept: Vec<RawDocument>,
    pub rejected: Vec<(String, Vec<RejectReason>)>,
    pub exact_duplicates: usize,
}

/// Cleans, splits and filters a batch of raw documents.
///
/// Exact duplicates (identical in every field) are dropped first. Records
/// carrying a token annotation layer are not split, since the layer would
/// no longer line up with the segments.
pub fn ingest(
    docs: Vec<RawDocument>,
    cfg: &HazardConfig,
) -> Result<IngestOutput, CorpusError> {
    let kw = cfg.keyword_list()?;
    cfg.filters.validate()?;
    if cfg.filters.gazetteer.dateline_cities().is_empty() {
        log::warn!("no city list configured; the dateline rule is skipped");
    }

    let mut seen_hashes = HashSet::new();
    let mut seen_ids: BTreeMap<String, ()> = BTreeMap::new();
    let mut unique = Vec::with_capacity(docs.len());
    let mut exact_duplicates = 0;
    for doc in docs {
        doc.validate()?;
        let record = serde_json::to_vec(&doc).expect("documents serialize");
        if !seen_hashes.insert(crate::io::sha256_hex(&record)) {
            exact_duplicates += 1;
            continue;
        }
        if seen_ids.insert(doc.id.clone(), ()).is_some() {
            return Err(CorpusError::DuplicateId(doc.id));
        }
        unique.push(doc);
    }

    let results: Vec<(RawDocument, FilterVerdict)> = unique
        .into_par_iter()
        .map(|doc| clean_and_split(doc, &cfg.agency_markers))
        .flatten_iter()
        .map(|doc| {
            let tokens = document_tokens(&doc);
            apply_filters(&doc, &tokens, &kw, &cfg.filters).map(|v| (doc, v))
        })
        .collect::<Result<_, _>>()?;

    let mut out = IngestOutput { exact_duplicates, ..Default::default() };
    for (doc, verdict) in results {
        if verdict.keep {
            out.kept.push(doc);
        } else {
            out.rejected.push((doc.id, verdict.reasons));
        }
    }
    out.kept.sort_by(|a, b| a.id.cmp(&b.id));
    out.rejected.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

fn clean_and_split(mut doc: RawDocument, markers: &[String]) -> Vec<RawDocument> {
    doc.text = strip_markup(&doc.text);
    if doc.conll.is_some() {
        return vec![doc];
    }
    let segments: Vec<String> = split_concatenated(&doc.text, markers)
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if segments.len() <= 1 {
        return vec![doc];
    }
    segments
        .into_iter()
        .enumerate()
        .map(|(i, text)| RawDocument { id: format!("{}-{}", doc.id, i + 1), text, ..doc.clone() })
        .collect()
}

/// Surface tokens of a document: from the annotation layer when present,
/// otherwise from the text.
pub fn document_tokens(doc: &RawDocument) -> Vec<String> {
    match &doc.conll {
        Some(layer) => features::parse_conll(layer).into_iter().map(|t| t.surface).collect(),
        None => features::tokenize(&doc.text),
    }
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<RawDocument>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: RawDocument = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(doc);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut w: W, docs: &[RawDocument]) -> Result<(), CorpusError> {
    for d in docs {
        serde_json::to_writer(&mut w, d).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Rejection log: `id,reasons` with reason codes joined by `;`.
pub fn write_rejections<W: Write>(w: W, rejected: &[(String, Vec<RejectReason>)]) -> Result<(), CorpusError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["id", "reasons"])?;
    for (id, reasons) in rejected {
        let codes: Vec<&str> = reasons.iter().map(|r| r.code()).collect();
        csv.write_record([id.as_str(), &codes.join(";")])?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flood() -> KeywordList {
        KeywordList::new("flood", ["flut"], ["flutlicht"]).unwrap()
    }

    fn doc(text: &str) -> RawDocument {
        RawDocument {
            id: "d1".into(),
            text: text.into(),
            outlet: "Zeitung".into(),
            date: NaiveDate::from_ymd_opt(2021, 7, 15).unwrap(),
            ressort: Some("Politik".into()),
            hazard: "drought".into(),
            conll: None,
        }
    }

    fn rules() -> FilterRules {
        let mut r = FilterRules::default();
        r.gazetteer.countries.insert("spanien".into());
        r.gazetteer.cities.insert("berlin".into());
        r
    }

    #[test]
    fn strip_markup_examples() {
        assert_eq!(strip_markup("<b>Flut</b> in Ahrtal"), "Flut in Ahrtal");
        assert_eq!(strip_markup("no markup here"), "no markup here");
        assert_eq!(strip_markup("a<x>b<y>c"), "abc");
        // shortest match: the text between two tags survives
        assert_eq!(strip_markup("<p>x</p>"), "x");
    }

    #[test]
    fn split_examples() {
        let m = DEFAULT_AGENCY_MARKERS;
        let input = "Storm hits coast. (dpa) Markets rose. (afp)";
        let parts = split_concatenated(input, &m);
        assert_eq!(parts, vec!["Storm hits coast. (dpa)", " Markets rose. (afp)"]);
        assert_eq!(parts.concat(), input);
        assert_eq!(split_concatenated("No agency anywhere.", &m), vec!["No agency anywhere."]);
        assert_eq!(split_concatenated("(dpa)", &m), vec!["(dpa)"]);
        assert_eq!(split_concatenated("A (DPA) b", &m), vec!["A (DPA)", " b"]);
    }

    #[test]
    fn intruder_examples() {
        let kw = flood();
        assert!(intruder_only(&["flutlicht", "spiel"], &kw));
        assert!(!intruder_only(&["flut", "flutlicht"], &kw));
        assert!(!intruder_only(&["spiel"], &kw));
        // compounds of a valid keyword count as valid
        assert!(!intruder_only(&["flutlicht", "flutwelle"], &kw));
    }

    #[test]
    fn keyword_list_rejects_overlap() {
        assert!(KeywordList::new("x", ["Flut"], ["flut"]).is_err());
        assert!(KeywordList::new("x", Vec::<String>::new(), ["a"]).is_err());
    }

    fn words(n: usize, extra: &str) -> String {
        let mut s = String::from(extra);
        for i in 0..n {
            s.push_str(if i % 2 == 0 { " wasser" } else { " land" });
        }
        s
    }

    #[test]
    fn too_short_document() {
        let d = doc(&words(16, "Die Flut in Spanien"));
        let tokens = features::tokenize(&d.text);
        assert_eq!(tokens.len(), 20);
        let v = apply_filters(&d, &tokens, &flood(), &rules()).unwrap();
        assert!(!v.keep);
        assert_eq!(v.reasons, vec![RejectReason::TooShort]);
    }

    #[test]
    fn intruder_only_document() {
        let kw = KeywordList::new("drought", ["dürre"], ["dürrenmatt"]).unwrap();
        let d = doc(&words(100, "Ein Stück von Dürrenmatt in Spanien."));
        let tokens = features::tokenize(&d.text);
        let v = apply_filters(&d, &tokens, &kw, &rules()).unwrap();
        assert_eq!(v.reasons, vec![RejectReason::IntruderOnly]);
    }

    #[test]
    fn missing_gazetteer_is_an_error() {
        let d = doc("Flut");
        let err = apply_filters(&d, &["flut"], &flood(), &FilterRules::default()).unwrap_err();
        assert!(matches!(err, CorpusError::MissingGazetteer));
    }

    #[test]
    fn dateline_rule() {
        let kw = flood();
        let d = doc(&words(40, "Berlin. Die Flut in Spanien"));
        let tokens = features::tokenize(&d.text);
        let v = apply_filters(&d, &tokens, &kw, &rules()).unwrap();
        assert_eq!(v.reasons, vec![RejectReason::CityDateline]);
        let d = doc(&words(40, "Berlin: Die Flut in Spanien"));
        let tokens = features::tokenize(&d.text);
        assert!(apply_filters(&d, &tokens, &kw, &rules()).unwrap().keep);
    }

    #[test]
    fn ingest_splits_dedups_and_sorts() {
        let body = words(40, "Die Flut in Spanien.");
        let mut a = doc(&format!("<p>{body}</p> (dpa) {body} (afp)"));
        a.id = "b".into();
        let mut b = doc(&body);
        b.id = "a".into();
        let mut short = doc("Flut in Spanien");
        short.id = "c".into();
        let cfg = HazardConfig {
            hazard: "flood".into(),
            keywords: vec!["flut".into()],
            intruders: vec![],
            agency_markers: default_agency_markers(),
            filters: rules(),
        };
        let out = ingest(vec![a.clone(), b, a, short], &cfg).unwrap();
        assert_eq!(out.exact_duplicates, 1);
        let ids: Vec<&str> = out.kept.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["a", "b-1", "b-2"]);
        assert!(out.kept[1].text.ends_with("(dpa)"));
        assert!(!out.kept[1].text.contains("<p>"));
        assert_eq!(out.rejected, vec![("c".to_string(), vec![RejectReason::TooShort])]);
    }

    #[test]
    fn reason_codes_round_trip() {
        for r in [RejectReason::NoKeyword, RejectReason::CityDateline, RejectReason::NonAlphaRatio] {
            assert_eq!(RejectReason::from_code(r.code()), Some(r));
        }
    }

    proptest! {
        #[test]
        fn strip_markup_is_idempotent(s in "[a-z<>/ ]{0,40}") {
            let once = strip_markup(&s);
            prop_assert_eq!(strip_markup(&once), once);
        }

        #[test]
        fn split_reconcatenates(s in "[a-z .()]{0,30}(\\((dpa|afp)\\)[a-z .]{0,20}){0,3}") {
            let parts = split_concatenated(&s, &DEFAULT_AGENCY_MARKERS);
            prop_assert_eq!(parts.concat(), s);
        }

        #[test]
        fn valid_keyword_blocks_intruder_reason(extra in proptest::collection::vec("[a-z]{1,8}", 0..10)) {
            let kw = flood();
            let mut tokens = extra.clone();
            tokens.push("flutwelle".into());
            tokens.push("flutlicht".into());
            prop_assert!(!intruder_only(&tokens, &kw));
        }
    }
}
