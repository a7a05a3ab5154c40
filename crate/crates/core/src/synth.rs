//! Synthetic hazard corpus with known relevance labels.
//!
//! Documents are drawn from a topic mixture. One planted hazard topic puts
//! most of its mass on the hazard keywords and a hazard vocabulary; a
//! document is relevant iff it was generated with a share of that topic.
//! Irrelevant documents come from background topics but still mention a
//! keyword in passing, as every keyword-retrieved document does. A few
//! near-duplicate copies and intruder-only documents are planted as well.

use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{FilterRules, Gazetteer, HazardConfig, RawDocument, DEFAULT_AGENCY_MARKERS};
use crate::eval::{GoldLabel, Prominence, Split};
use crate::features::default_stopwords;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub hazard: String,
    pub keywords: Vec<String>,
    pub intruders: Vec<String>,
    /// Labelled documents, near-duplicate copies included.
    pub num_docs: usize,
    pub relevant_fraction: f64,
    pub background_topics: usize,
    pub words_per_topic: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Range of the hazard topic's share in relevant documents.
    pub hazard_share: (f64, f64),
    /// Copies of existing documents with a few tokens changed.
    pub near_duplicate_pairs: usize,
    /// Share of tokens replaced in a near-duplicate copy.
    pub duplicate_noise: f64,
    /// Extra unlabelled documents that only contain intruders.
    pub intruder_docs: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            hazard: "flood".into(),
            keywords: vec!["hochwasser".into(), "flut".into(), "überschwemmung".into()],
            intruders: vec!["flutlicht".into()],
            num_docs: 1000,
            relevant_fraction: 0.3,
            background_topics: 8,
            words_per_topic: 60,
            min_len: 80,
            max_len: 200,
            hazard_share: (0.35, 0.8),
            near_duplicate_pairs: 10,
            duplicate_noise: 0.015,
            intruder_docs: 20,
            train_fraction: 0.5,
            seed: 123,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub docs: Vec<RawDocument>,
    /// Keywords, intruders and filter rules matching the generated texts.
    pub config: HazardConfig,
    /// Labels for every document except the intruder-only ones.
    pub gold: Vec<GoldLabel>,
    /// `(original, copy)` ids of the planted near-duplicates.
    pub duplicate_pairs: Vec<(String, String)>,
    /// Vocabulary of the planted hazard topic, keywords first.
    pub hazard_vocabulary: Vec<String>,
}

const COUNTRIES: [&str; 6] = ["deutschland", "frankreich", "italien", "polen", "spanien", "österreich"];
const NATIONALITIES: [&str; 3] = ["deutsche", "französische", "italienische"];
const CITIES: [&str; 5] = ["berlin", "hamburg", "münchen", "köln", "dresden"];
const OUTLETS: [&str; 4] = ["Tagesblatt", "Rundschau", "Kurier", "Allgemeine"];
const RESSORTS: [&str; 4] = ["Politik", "Wirtschaft", "Panorama", "Wissen"];
const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "w", "sch", "st", "br"];
const VOWELS: [&str; 7] = ["a", "e", "i", "o", "u", "ei", "au"];
const CODAS: [&str; 8] = ["", "n", "r", "l", "s", "t", "ng", "ch"];

fn gazetteer() -> Gazetteer {
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    Gazetteer {
        countries: set(&COUNTRIES),
        nationalities: set(&NATIONALITIES),
        cities: set(&CITIES),
        german_cities: set(&CITIES),
    }
}

/// Pronounceable lowercase words that are not stopwords, place names, and
/// do not contain any keyword or intruder.
fn make_words(rng: &mut ChaCha8Rng, n: usize, forbidden: &[String], taken: &mut BTreeSet<String>) -> Vec<String> {
    let stop = default_stopwords();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(VOWELS.choose(rng).unwrap());
            w.push_str(CODAS.choose(rng).unwrap());
        }
        let clash = stop.contains(&w)
            || forbidden.iter().any(|f| w.contains(f.as_str()) || f.contains(w.as_str()))
            || COUNTRIES.contains(&w.as_str())
            || NATIONALITIES.contains(&w.as_str())
            || CITIES.contains(&w.as_str());
        if !clash && taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Topic {
    words: Vec<String>,
    dist: WeightedIndex<f64>,
}

impl Topic {
    /// Zipf-like weights over `words` in the given order.
    fn new(words: Vec<String>) -> Topic {
        let weights: Vec<f64> = (0..words.len()).map(|r| 1.0 / (r as f64 + 2.0).powf(0.8)).collect();
        Topic { words, dist: WeightedIndex::new(weights).expect("positive weights") }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> &str {
        &self.words[self.dist.sample(rng)]
    }
}

fn render(tokens: &[String], rng: &mut ChaCha8Rng) -> String {
    let mut text = String::new();
    let mut i = 0;
    while i < tokens.len() {
        let len = rng.random_range(8..=14).min(tokens.len() - i);
        let sentence = &tokens[i..i + len];
        for (j, t) in sentence.iter().enumerate() {
            if j > 0 {
                text.push(' ');
            }
            if j == 0 {
                let mut cs = t.chars();
                let first: String = cs.next().map(|c| c.to_uppercase().collect()).unwrap_or_default();
                text.push_str(&first);
                text.push_str(cs.as_str());
            } else {
                text.push_str(t);
            }
        }
        text.push_str(". ");
        i += len;
    }
    text.trim_end().to_string()
}

/// Generates a labelled corpus. Output is fully determined by `cfg`.
pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let keywords: Vec<String> = cfg.keywords.iter().map(|k| k.to_lowercase()).collect();
    let intruders: Vec<String> = cfg.intruders.iter().map(|k| k.to_lowercase()).collect();
    let forbidden: Vec<String> = keywords.iter().chain(&intruders).cloned().collect();
    let mut taken = BTreeSet::new();

    let mut hazard_words = keywords.clone();
    hazard_words.extend(make_words(&mut rng, cfg.words_per_topic.saturating_sub(keywords.len()).max(1), &forbidden, &mut taken));
    let hazard = Topic::new(hazard_words.clone());
    let background: Vec<Topic> = (0..cfg.background_topics.max(1))
        .map(|_| Topic::new(make_words(&mut rng, cfg.words_per_topic, &forbidden, &mut taken)))
        .collect();
    let general = Topic::new(make_words(&mut rng, 30, &forbidden, &mut taken));
    let places: Vec<&str> = COUNTRIES.iter().chain(&NATIONALITIES).copied().collect();

    let originals = cfg.num_docs.saturating_sub(cfg.near_duplicate_pairs);
    let start = NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date");
    let mut docs = Vec::with_capacity(cfg.num_docs + cfg.intruder_docs);
    let mut gold = Vec::with_capacity(cfg.num_docs);
    let mut token_lists = Vec::with_capacity(originals);

    let meta = |rng: &mut ChaCha8Rng, id: String, text: String, hazard_id: &str| RawDocument {
        id,
        text,
        outlet: OUTLETS.choose(rng).unwrap().to_string(),
        date: start + Days::new(rng.random_range(0..365)),
        ressort: Some(RESSORTS.choose(rng).unwrap().to_string()),
        hazard: hazard_id.to_string(),
        conll: None,
    };
    let split = |rng: &mut ChaCha8Rng| if rng.random::<f64>() < cfg.train_fraction { Split::Train } else { Split::Test };

    let num_relevant = (originals as f64 * cfg.relevant_fraction).round() as usize;
    let mut relevant_flags: Vec<bool> = (0..originals).map(|i| i < num_relevant).collect();
    // Fisher-Yates so relevant documents are spread over the id range.
    for i in (1..relevant_flags.len()).rev() {
        let j = rng.random_range(0..=i);
        relevant_flags.swap(i, j);
    }

    for (i, &relevant) in relevant_flags.iter().enumerate() {
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let share = if relevant { rng.random_range(cfg.hazard_share.0..=cfg.hazard_share.1) } else { 0.0 };
        let b1 = rng.random_range(0..background.len());
        let b2 = rng.random_range(0..background.len());
        let mut tokens: Vec<String> = (0..len)
            .map(|_| {
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                let topic = if u < share {
                    &hazard
                } else if v < 0.1 {
                    &general
                } else if v < 0.65 {
                    &background[b1]
                } else {
                    &background[b2]
                };
                topic.draw(&mut rng).to_string()
            })
            .collect();
        // Every retrieved document mentions a keyword; irrelevant ones only in passing.
        let mentions = if relevant { usize::from(!tokens.iter().any(|t| keywords.contains(t))) } else { rng.random_range(1..=2) };
        for _ in 0..mentions {
            let pos = rng.random_range(1..tokens.len());
            tokens[pos] = keywords.choose(&mut rng).unwrap().clone();
        }
        let free: Vec<usize> = (1..tokens.len()).filter(|&p| !keywords.contains(&tokens[p])).collect();
        let pos = *free.choose(&mut rng).unwrap();
        tokens[pos] = places.choose(&mut rng).unwrap().to_string();

        let id = format!("syn-{:04}", i + 1);
        let text = render(&tokens, &mut rng);
        docs.push(meta(&mut rng, id.clone(), text, &cfg.hazard));
        gold.push(GoldLabel {
            doc_id: id,
            relevant,
            prominence: match (relevant, share >= 0.5) {
                (false, _) => Prominence::None,
                (true, true) => Prominence::Main,
                (true, false) => Prominence::Mention,
            },
            hazard: cfg.hazard.clone(),
            split: split(&mut rng),
        });
        token_lists.push((tokens, b1));
    }

    let mut duplicate_pairs = Vec::new();
    for p in 0..cfg.near_duplicate_pairs.min(originals) {
        let src = rng.random_range(0..originals);
        let (tokens, b1) = &token_lists[src];
        let mut copy = tokens.clone();
        let changes = ((copy.len() as f64 * cfg.duplicate_noise).round() as usize).max(1);
        for _ in 0..changes {
            let pos = rng.random_range(1..copy.len());
            if !keywords.contains(&copy[pos]) && !places.contains(&copy[pos].as_str()) {
                copy[pos] = background[*b1].draw(&mut rng).to_string();
            }
        }
        let id = format!("syn-{:04}", originals + p + 1);
        let text = render(&copy, &mut rng);
        docs.push(meta(&mut rng, id.clone(), text, &cfg.hazard));
        let mut label = gold[src].clone();
        label.doc_id = id.clone();
        label.split = split(&mut rng);
        gold.push(label);
        duplicate_pairs.push((docs[src].id.clone(), id));
    }

    for i in 0..cfg.intruder_docs {
        let b = rng.random_range(0..background.len());
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let mut tokens: Vec<String> = (0..len).map(|_| background[b].draw(&mut rng).to_string()).collect();
        if let Some(intruder) = intruders.choose(&mut rng) {
            let pos = rng.random_range(1..tokens.len());
            tokens[pos] = intruder.clone();
        }
        let free: Vec<usize> = (1..tokens.len()).filter(|&p| !keywords.contains(&tokens[p])).collect();
        let pos = *free.choose(&mut rng).unwrap();
        tokens[pos] = places.choose(&mut rng).unwrap().to_string();
        let text = render(&tokens, &mut rng);
        docs.push(meta(&mut rng, format!("syn-x{:03}", i + 1), text, &cfg.hazard));
    }

    let config = HazardConfig {
        hazard: cfg.hazard.clone(),
        keywords,
        intruders,
        agency_markers: DEFAULT_AGENCY_MARKERS.iter().map(|s| s.to_string()).collect(),
        filters: FilterRules { gazetteer: gazetteer(), ..FilterRules::default() },
    };
    SynthCorpus { docs, config, gold, duplicate_pairs, hazard_vocabulary: hazard_words }
}
