//! Tokenization, feature selection and sparse document-term matrices.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{KeywordList, RawDocument};
use crate::io::*;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("no term qualifies as a feature (min_doc_freq={min_doc_freq})")]
    EmptyFeatureSpace { min_doc_freq: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("feature file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_de.txt");

/// The bundled German stopword list.
pub fn default_stopwords() -> BTreeSet<String> {
    parse_word_list(DEFAULT_STOPWORDS)
}

/// One lowercase word per line; blank lines and `#` comments are skipped.
pub fn parse_word_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Splits text into maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedToken {
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<String>,
}

impl AnnotatedToken {
    pub fn plain(surface: impl Into<String>) -> Self {
        AnnotatedToken { surface: surface.into(), lemma: None, pos: None }
    }
}

/// Parses a tab-separated token layer. Accepts `form lemma pos` rows and
/// CoNLL-U rows (`id form lemma upos ...`); `_` marks a missing value.
pub fn parse_conll(layer: &str) -> Vec<AnnotatedToken> {
    let opt = |s: Option<&str>| s.map(str::trim).filter(|s| !s.is_empty() && *s != "_").map(str::to_string);
    layer
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|line| {
            let cols: Vec<&str> = line.split('\t').collect();
            let conllu = cols.len() >= 4 && cols[0].trim().chars().all(|c| c.is_ascii_digit() || c == '-' || c == '.');
            let (form, lemma, pos) = if conllu {
                (cols[1], cols.get(2).copied(), cols.get(3).copied())
            } else {
                (cols[0], cols.get(1).copied(), cols.get(2).copied())
            };
            let form = form.trim();
            (!form.is_empty()).then(|| AnnotatedToken { surface: form.to_string(), lemma: opt(lemma), pos: opt(pos) })
        })
        .collect()
}

/// A document after normalization. `kept_terms` and `kept_pos` are parallel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub doc_id: String,
    pub tokens: Vec<AnnotatedToken>,
    pub kept_terms: Vec<String>,
    pub kept_pos: Vec<Option<String>>,
}

fn keep_term(term: &str, surface: &str, stopwords: &BTreeSet<String>) -> bool {
    term.chars().count() >= 3
        && term.chars().all(char::is_alphabetic)
        && !stopwords.contains(term)
        && !stopwords.contains(&surface.to_lowercase())
}

/// Lowercases (lemma if present, else surface) and drops tokens shorter than
/// three characters, tokens with non-alphabetic characters, and stopwords.
///
/// Token source, in order of preference: `annotations`, the document's own
/// annotation layer, plain tokenization of the text.
pub fn normalize_tokens(
    doc: &RawDocument,
    annotations: Option<&[AnnotatedToken]>,
    stopwords: &BTreeSet<String>,
) -> TokenizedDocument {
    let tokens: Vec<AnnotatedToken> = match (annotations, &doc.conll) {
        (Some(a), _) => a.to_vec(),
        (None, Some(layer)) => parse_conll(layer),
        (None, None) => tokenize(&doc.text).into_iter().map(AnnotatedToken::plain).collect(),
    };
    let mut kept_terms = Vec::new();
    let mut kept_pos = Vec::new();
    for t in &tokens {
        let term = t.lemma.as_deref().unwrap_or(&t.surface).to_lowercase();
        if keep_term(&term, &t.surface, stopwords) {
            kept_terms.push(term);
            kept_pos.push(t.pos.as_ref().map(|p| p.to_uppercase()));
        }
    }
    TokenizedDocument { doc_id: doc.id.clone(), tokens, kept_terms, kept_pos }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordMatch {
    /// A term is a keyword feature iff it equals a keyword.
    #[default]
    Exact,
    /// A term is a keyword feature iff it contains a keyword and is not an
    /// intruder.
    Substring,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub min_doc_freq: usize,
    /// Upper-case POS tags. Empty means no POS criterion.
    #[serde(default)]
    pub allowed_pos: BTreeSet<String>,
    #[serde(default)]
    pub keyword_match: KeywordMatch,
}

impl FeatureConfig {
    pub fn new<I, S>(min_doc_freq: usize, allowed_pos: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        FeatureConfig {
            min_doc_freq,
            allowed_pos: allowed_pos.into_iter().map(|s| s.as_ref().to_uppercase()).collect(),
            keyword_match: KeywordMatch::Exact,
        }
    }
}

/// The selected feature terms, with the keyword subset marked by index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpace {
    terms: Vec<String>,
    keyword_indices: BTreeSet<usize>,
    doc_freq: Vec<usize>,
    config: FeatureConfig,
    index: HashMap<String, usize>,
}

impl FeatureSpace {
    /// Builds a feature space directly from its parts. Terms must be unique.
    pub fn from_parts(
        terms: Vec<String>,
        keyword_indices: BTreeSet<usize>,
        doc_freq: Vec<usize>,
        config: FeatureConfig,
    ) -> Result<Self, FeatureError> {
        let invalid = |message: String| FeatureError::Parse { line: 0, message };
        if doc_freq.len() != terms.len() {
            return Err(invalid("doc_freq length differs from term count".into()));
        }
        if keyword_indices.iter().any(|&i| i >= terms.len()) {
            return Err(invalid("keyword index out of range".into()));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(invalid(format!("duplicate term {t:?}")));
            }
        }
        Ok(FeatureSpace { terms, keyword_indices, doc_freq, config, index })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn keyword_indices(&self) -> &BTreeSet<usize> {
        &self.keyword_indices
    }

    pub fn is_keyword(&self, idx: usize) -> bool {
        self.keyword_indices.contains(&idx)
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, idx: usize) -> &str {
        &self.terms[idx]
    }

    /// Hex SHA-256 over the serialized feature space.
    pub fn checksum(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        sha256_hex(&buf)
    }

    /// Versioned text format: a header line, `key=value` config lines, then
    /// one `term<TAB>doc_freq<TAB>keyword_flag` line per term in index order.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# hazardtm feature space v1")?;
        writeln!(w, "min_doc_freq={}", self.config.min_doc_freq)?;
        let pos: Vec<&str> = self.config.allowed_pos.iter().map(String::as_str).collect();
        writeln!(w, "allowed_pos={}", pos.join(","))?;
        let mode = match self.config.keyword_match {
            KeywordMatch::Exact => "exact",
            KeywordMatch::Substring => "substring",
        };
        writeln!(w, "keyword_match={mode}")?;
        writeln!(w, "terms={}", self.terms.len())?;
        for (i, t) in self.terms.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}", t, self.doc_freq[i], u8::from(self.is_keyword(i)))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, FeatureError> {
        let err = |line: usize, message: &str| FeatureError::Parse { line, message: message.to_string() };
        let mut lines = r.lines().enumerate();
        match lines.next() {
            Some((_, Ok(h))) if h.trim() == "# hazardtm feature space v1" => {}
            _ => return Err(err(1, "missing or unsupported header")),
        }
        let mut config = FeatureConfig::default();
        let mut expected = None;
        for (i, line) in lines.by_ref() {
            let line = line?;
            let (key, value) = line.split_once('=').ok_or_else(|| err(i + 1, "expected key=value"))?;
            match key {
                "min_doc_freq" => config.min_doc_freq = value.parse().map_err(|_| err(i + 1, "bad min_doc_freq"))?,
                "allowed_pos" => {
                    config.allowed_pos =
                        value.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect()
                }
                "keyword_match" => {
                    config.keyword_match = match value {
                        "exact" => KeywordMatch::Exact,
                        "substring" => KeywordMatch::Substring,
                        _ => return Err(err(i + 1, "bad keyword_match")),
                    }
                }
                "terms" => {
                    expected = Some(value.parse::<usize>().map_err(|_| err(i + 1, "bad term count"))?);
                    break;
                }
                _ => return Err(err(i + 1, "unknown key")),
            }
        }
        let expected = expected.ok_or_else(|| err(0, "missing terms= line"))?;
        let mut terms = Vec::with_capacity(expected);
        let mut doc_freq = Vec::with_capacity(expected);
        let mut keyword_indices = BTreeSet::new();
        for (i, line) in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(err(i + 1, "expected three tab-separated columns"));
            }
            let df = cols[1].parse().map_err(|_| err(i + 1, "bad doc_freq"))?;
            match cols[2] {
                "1" => {
                    keyword_indices.insert(terms.len());
                }
                "0" => {}
                _ => return Err(err(i + 1, "keyword flag must be 0 or 1")),
            }
            terms.push(cols[0].to_string());
            doc_freq.push(df);
        }
        if terms.len() != expected {
            return Err(err(0, "term count does not match header"));
        }
        Self::from_parts(terms, keyword_indices, doc_freq, config)
    }
}

fn majority_tag(counts: &BTreeMap<String, usize>) -> Option<&str> {
    // max count, ties to the lexicographically smallest tag
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(tag, _)| tag.as_str())
}

/// Selects the feature terms.
///
/// A term qualifies when its document frequency reaches `min_doc_freq` and,
/// if POS tags are available and `allowed_pos` is non-empty, its most
/// frequent tag is allowed. Every keyword seen at least once is added
/// regardless. Terms are ordered by descending document frequency, then
/// lexicographically.
pub fn build_feature_space(
    corpus: &[TokenizedDocument],
    keywords: &KeywordList,
    config: &FeatureConfig,
) -> Result<FeatureSpace, FeatureError> {
    if corpus.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let mut df: HashMap<&str, usize> = HashMap::new();
    let mut tags: HashMap<&str, BTreeMap<String, usize>> = HashMap::new();
    for doc in corpus {
        let mut seen = BTreeSet::new();
        for (term, pos) in doc.kept_terms.iter().zip(&doc.kept_pos) {
            if seen.insert(term.as_str()) {
                *df.entry(term).or_default() += 1;
            }
            if let Some(p) = pos {
                *tags.entry(term).or_default().entry(p.to_uppercase()).or_default() += 1;
            }
        }
    }

    let allowed = |term: &str| -> bool {
        if config.allowed_pos.is_empty() {
            return true;
        }
        match tags.get(term).and_then(majority_tag) {
            Some(tag) => config.allowed_pos.contains(tag),
            None => true,
        }
    };

    let mut selected: Vec<(&str, usize)> = df
        .iter()
        .filter(|(term, &n)| {
            keywords.keywords.contains(**term) || (n >= config.min_doc_freq && allowed(term))
        })
        .map(|(t, &n)| (*t, n))
        .collect();
    if selected.is_empty() {
        return Err(FeatureError::EmptyFeatureSpace { min_doc_freq: config.min_doc_freq });
    }
    selected.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let is_kw = |t: &str| match config.keyword_match {
        KeywordMatch::Exact => keywords.keywords.contains(t),
        KeywordMatch::Substring => !keywords.is_intruder(t) && keywords.contains_keyword(t),
    };
    let keyword_indices = selected.iter().enumerate().filter(|(_, (t, _))| is_kw(t)).map(|(i, _)| i).collect();
    let (terms, doc_freq): (Vec<String>, Vec<usize>) =
        selected.into_iter().map(|(t, n)| (t.to_string(), n)).unzip();
    FeatureSpace::from_parts(terms, keyword_indices, doc_freq, config.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Counts,
    TfIdf,
}

/// Sparse row-major matrix; each row holds `(term_index, value)` pairs in
/// increasing term order with non-zero values.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTermMatrix {
    pub doc_ids: Vec<String>,
    pub num_terms: usize,
    pub rows: Vec<Vec<(u32, f64)>>,
    pub weighting: Weighting,
}

impl DocTermMatrix {
    pub fn num_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.num_terms)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Indices of rows with no entries.
    pub fn empty_rows(&self) -> Vec<usize> {
        self.rows.iter().enumerate().filter(|(_, r)| r.is_empty()).map(|(i, _)| i).collect()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, v)| v).sum()
    }

    /// Keeps the rows whose id satisfies `keep`, in order.
    pub fn select_rows(&self, mut keep: impl FnMut(&str) -> bool) -> DocTermMatrix {
        let (doc_ids, rows) = self
            .doc_ids
            .iter()
            .zip(&self.rows)
            .filter(|(id, _)| keep(id))
            .map(|(id, r)| (id.clone(), r.clone()))
            .unzip();
        DocTermMatrix { doc_ids, num_terms: self.num_terms, rows, weighting: self.weighting }
    }

    /// Binary triplet format: `HZDT`, u16 version, u8 weighting, u64 docs,
    /// u64 terms, the doc ids, u64 nnz, then `(u32 doc, u32 term, f64 value)`
    /// records. All integers little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"HZDT")?;
        write_u16(&mut w, 1)?;
        write_u8(&mut w, match self.weighting {
            Weighting::Counts => 0,
            Weighting::TfIdf => 1,
        })?;
        write_u64(&mut w, self.rows.len() as u64)?;
        write_u64(&mut w, self.num_terms as u64)?;
        for id in &self.doc_ids {
            write_str(&mut w, id)?;
        }
        write_u64(&mut w, self.nnz() as u64)?;
        for (d, row) in self.rows.iter().enumerate() {
            for &(t, v) in row {
                write_u32(&mut w, len_u32(d)?)?;
                write_u32(&mut w, t)?;
                write_f64(&mut w, v)?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> std::io::Result<Self> {
        expect_magic(&mut r, b"HZDT")?;
        let version = read_u16(&mut r)?;
        if version != 1 {
            return Err(invalid(format!("unsupported matrix version {version}")));
        }
        let weighting = match read_u8(&mut r)? {
            0 => Weighting::Counts,
            1 => Weighting::TfIdf,
            w => return Err(invalid(format!("unknown weighting {w}"))),
        };
        let num_docs = read_u64(&mut r)? as usize;
        let num_terms = read_u64(&mut r)? as usize;
        let doc_ids = (0..num_docs).map(|_| read_str(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let nnz = read_u64(&mut r)?;
        let mut rows = vec![Vec::new(); num_docs];
        for _ in 0..nnz {
            let d = read_u32(&mut r)? as usize;
            let t = read_u32(&mut r)?;
            let v = read_f64(&mut r)?;
            if d >= num_docs || t as usize >= num_terms {
                return Err(invalid("triplet index out of range"));
            }
            rows[d].push((t, v));
        }
        for row in &mut rows {
            row.sort_by_key(|&(t, _)| t);
        }
        Ok(DocTermMatrix { doc_ids, num_terms, rows, weighting })
    }
}

/// Counts of feature terms per document; terms outside `fs` are ignored.
pub fn count_row(kept_terms: &[String], fs: &FeatureSpace) -> Vec<(u32, f64)> {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for t in kept_terms {
        if let Some(i) = fs.index_of(t) {
            *counts.entry(i as u32).or_default() += 1.0;
        }
    }
    counts.into_iter().collect()
}

/// `ln(N / df)` per term over the rows of a count matrix; zero for terms
/// that never occur.
pub fn inverse_document_frequency(counts: &DocTermMatrix) -> Vec<f64> {
    let mut df = vec![0usize; counts.num_terms];
    for row in &counts.rows {
        for &(t, _) in row {
            df[t as usize] += 1;
        }
    }
    let n = counts.num_docs() as f64;
    df.into_iter().map(|d| if d == 0 { 0.0 } else { (n / d as f64).ln() }).collect()
}

/// Multiplies counts by per-term weights, dropping entries that become zero.
pub fn apply_idf(counts: &DocTermMatrix, idf: &[f64]) -> DocTermMatrix {
    let rows = counts
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|&(t, c)| (t, c * idf[t as usize]))
                .filter(|&(_, v)| v != 0.0)
                .collect()
        })
        .collect();
    DocTermMatrix { doc_ids: counts.doc_ids.clone(), num_terms: counts.num_terms, rows, weighting: Weighting::TfIdf }
}

/// Builds the document-term matrix. TF-IDF is raw count times
/// `ln(N / df)` with `N` and `df` taken from `corpus`, rows unnormalized.
pub fn vectorize(corpus: &[TokenizedDocument], fs: &FeatureSpace, weighting: Weighting) -> DocTermMatrix {
    let counts = DocTermMatrix {
        doc_ids: corpus.iter().map(|d| d.doc_id.clone()).collect(),
        num_terms: fs.len(),
        rows: corpus.iter().map(|d| count_row(&d.kept_terms, fs)).collect(),
        weighting: Weighting::Counts,
    };
    match weighting {
        Weighting::Counts => counts,
        Weighting::TfIdf => {
            let idf = inverse_document_frequency(&counts);
            apply_idf(&counts, &idf)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn raw(id: &str, text: &str) -> RawDocument {
        RawDocument {
            id: id.into(),
            text: text.into(),
            outlet: "o".into(),
            date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            ressort: None,
            hazard: "h".into(),
            conll: None,
        }
    }

    fn tdoc(id: &str, terms: &[&str]) -> TokenizedDocument {
        TokenizedDocument {
            doc_id: id.into(),
            tokens: terms.iter().map(|t| AnnotatedToken::plain(*t)).collect(),
            kept_terms: terms.iter().map(|t| t.to_string()).collect(),
            kept_pos: vec![None; terms.len()],
        }
    }

    #[test]
    fn normalize_examples() {
        let stop: BTreeSet<String> = ["die".to_string()].into();
        let d = normalize_tokens(&raw("a", "Die Dürre 2018!"), None, &stop);
        assert_eq!(d.kept_terms, ["dürre"]);
        let d = normalize_tokens(&raw("b", "ab zu im"), None, &default_stopwords());
        assert!(d.kept_terms.is_empty());
        let ann = [AnnotatedToken {
            surface: "Überschwemmungen".into(),
            lemma: Some("Überschwemmung".into()),
            pos: Some("NOUN".into()),
        }];
        let d = normalize_tokens(&raw("c", "x"), Some(&ann), &stop);
        assert_eq!(d.kept_terms, ["überschwemmung"]);
        assert_eq!(d.kept_pos, [Some("NOUN".to_string())]);
    }

    #[test]
    fn conll_layouts() {
        let plain = parse_conll("Die\tder\tDET\nFlut\tFlut\tNOUN\n\n");
        assert_eq!(plain.len(), 2);
        assert_eq!(plain[1].lemma.as_deref(), Some("Flut"));
        let u = parse_conll("# sent\n1\tDie\tder\tDET\t_\n2\tFlut\t_\tNOUN\t_\n");
        assert_eq!(u[0].surface, "Die");
        assert_eq!(u[1].lemma, None);
        assert_eq!(u[1].pos.as_deref(), Some("NOUN"));
    }

    #[test]
    fn forced_keyword_survives_frequency_cut() {
        let kw = KeywordList::new("wildfire", ["waldbrand"], Vec::<String>::new()).unwrap();
        let mut corpus: Vec<TokenizedDocument> = (0..60).map(|i| tdoc(&format!("d{i}"), &["feuer"])).collect();
        corpus[0].kept_terms.push("waldbrand".into());
        corpus[0].kept_pos.push(None);
        corpus[1].kept_terms.push("waldbrand".into());
        corpus[1].kept_pos.push(None);
        let fs = build_feature_space(&corpus, &kw, &FeatureConfig::new(50, Vec::<String>::new())).unwrap();
        assert_eq!(fs.terms(), ["feuer", "waldbrand"]);
        assert_eq!(fs.keyword_indices().iter().copied().collect::<Vec<_>>(), [1]);
        assert_eq!(fs.doc_freq(), [60, 2]);
    }

    #[test]
    fn pos_filter_excludes_verbs() {
        let kw = KeywordList::new("h", ["flut"], Vec::<String>::new()).unwrap();
        let mut d = tdoc("a", &["gehen", "haus"]);
        d.kept_pos = vec![Some("VERB".into()), Some("NOUN".into())];
        let fs = build_feature_space(&[d], &kw, &FeatureConfig::new(1, ["NOUN"])).unwrap();
        assert_eq!(fs.terms(), ["haus"]);
    }

    #[test]
    fn toy_corpus_doc_freq_cut() {
        let kw = KeywordList::new("h", ["zzz"], Vec::<String>::new()).unwrap();
        let corpus = [tdoc("a", &["aaa", "bbb", "bbb"]), tdoc("b", &["bbb", "ccc"]), tdoc("c", &["aaa", "ddd"])];
        let fs = build_feature_space(&corpus, &kw, &FeatureConfig::new(2, Vec::<String>::new())).unwrap();
        // brute force: document frequency of every term
        let mut expect: Vec<(String, usize)> = Vec::new();
        for t in ["aaa", "bbb", "ccc", "ddd"] {
            let n = corpus.iter().filter(|d| d.kept_terms.iter().any(|x| x == t)).count();
            if n >= 2 {
                expect.push((t.into(), n));
            }
        }
        let got: Vec<(String, usize)> = fs.terms().iter().cloned().zip(fs.doc_freq().iter().copied()).collect();
        assert_eq!(got, expect);
        assert!(fs.keyword_indices().is_empty());
    }

    #[test]
    fn empty_feature_space_is_an_error() {
        let kw = KeywordList::new("h", ["zzz"], Vec::<String>::new()).unwrap();
        let err = build_feature_space(&[tdoc("a", &["aaa"])], &kw, &FeatureConfig::new(5, Vec::<String>::new()));
        assert!(matches!(err, Err(FeatureError::EmptyFeatureSpace { .. })));
    }

    #[test]
    fn substring_keyword_mode() {
        let kw = KeywordList::new("h", ["dürre"], ["dürrenmatt"]).unwrap();
        let corpus = [tdoc("a", &["dürregebieten", "dürrenmatt", "dürre"])];
        let mut cfg = FeatureConfig::new(1, Vec::<String>::new());
        let fs = build_feature_space(&corpus, &kw, &cfg).unwrap();
        let kws: Vec<&str> = fs.keyword_indices().iter().map(|&i| fs.term(i)).collect();
        assert_eq!(kws, ["dürre"]);
        cfg.keyword_match = KeywordMatch::Substring;
        let fs = build_feature_space(&corpus, &kw, &cfg).unwrap();
        let kws: BTreeSet<&str> = fs.keyword_indices().iter().map(|&i| fs.term(i)).collect();
        assert_eq!(kws, ["dürre", "dürregebieten"].into());
    }

    #[test]
    fn vectorize_counts_and_tfidf() {
        let kw = KeywordList::new("h", ["flut"], Vec::<String>::new()).unwrap();
        let corpus = [tdoc("a", &["flut", "flut", "damm", "xyz"]), tdoc("b", &["damm"])];
        let fs = FeatureSpace::from_parts(
            vec!["flut".into(), "damm".into()],
            [0].into(),
            vec![1, 2],
            FeatureConfig::new(1, Vec::<String>::new()),
        )
        .unwrap();
        let _ = kw;
        let m = vectorize(&corpus, &fs, Weighting::Counts);
        assert_eq!(m.rows[0], vec![(0, 2.0), (1, 1.0)]);
        let t = vectorize(&corpus, &fs, Weighting::TfIdf);
        // damm occurs in every document: ln(2/2) = 0 and the entry vanishes
        assert_eq!(t.rows[0], vec![(0, 2.0 * 2f64.ln())]);
        assert!(t.rows[1].is_empty());
        assert_eq!(t.empty_rows(), vec![1]);
    }

    #[test]
    fn feature_space_text_round_trip() {
        let kw = KeywordList::new("h", ["flut"], Vec::<String>::new()).unwrap();
        let corpus = [tdoc("a", &["flut", "damm"]), tdoc("b", &["damm", "regen"])];
        let mut cfg = FeatureConfig::new(1, ["NOUN", "VERB"]);
        cfg.keyword_match = KeywordMatch::Substring;
        let fs = build_feature_space(&corpus, &kw, &cfg).unwrap();
        let mut buf = Vec::new();
        fs.write_to(&mut buf).unwrap();
        let back = FeatureSpace::read_from(&buf[..]).unwrap();
        assert_eq!(back, fs);
        assert_eq!(back.checksum(), fs.checksum());
    }

    #[test]
    fn matrix_binary_round_trip() {
        let m = DocTermMatrix {
            doc_ids: vec!["a".into(), "b".into(), "c".into()],
            num_terms: 4,
            rows: vec![vec![(0, 1.5), (3, 2.0)], vec![], vec![(2, 0.25)]],
            weighting: Weighting::TfIdf,
        };
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        assert_eq!(DocTermMatrix::read_binary(&buf[..]).unwrap(), m);
        assert!(DocTermMatrix::read_binary(&buf[1..]).is_err());
    }

    proptest! {
        #[test]
        fn normalized_terms_are_clean(text in "[A-Za-zÄÖÜäöüß0-9 .,!-]{0,80}") {
            let d = normalize_tokens(&raw("x", &text), None, &default_stopwords());
            for t in &d.kept_terms {
                prop_assert!(t.chars().count() >= 3);
                prop_assert!(t.chars().all(char::is_alphabetic));
                prop_assert_eq!(t.to_lowercase(), t.clone());
                prop_assert!(!default_stopwords().contains(t));
            }
        }

        #[test]
        fn count_rows_sum_to_restricted_length(
            docs in proptest::collection::vec(proptest::collection::vec("(aaa|bbb|ccc|ddd|flut)", 0..12), 1..8),
            min_df in 1usize..4,
        ) {
            let kw = KeywordList::new("h", ["flut"], Vec::<String>::new()).unwrap();
            let corpus: Vec<TokenizedDocument> = docs
                .iter()
                .enumerate()
                .map(|(i, d)| tdoc(&i.to_string(), &d.iter().map(String::as_str).collect::<Vec<_>>()))
                .collect();
            let Ok(fs) = build_feature_space(&corpus, &kw, &FeatureConfig::new(min_df, Vec::<String>::new())) else {
                return Ok(());
            };
            if corpus.iter().any(|d| d.kept_terms.iter().any(|t| t == "flut")) {
                prop_assert!(fs.index_of("flut").is_some());
            }
            let m = vectorize(&corpus, &fs, Weighting::Counts);
            for (i, d) in corpus.iter().enumerate() {
                let expect = d.kept_terms.iter().filter(|t| fs.index_of(t).is_some()).count();
                prop_assert_eq!(m.row_sum(i), expect as f64);
            }
            let again = build_feature_space(&corpus, &kw, &FeatureConfig::new(min_df, Vec::<String>::new())).unwrap();
            prop_assert_eq!(again, fs);
        }
    }
}
