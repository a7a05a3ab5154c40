//! Collapsed Gibbs sampling for LDA.
//!
//! Each token carries a topic assignment `z`. A sweep resamples every
//! assignment from
//!
//! ```text
//! p(z = k | rest) ∝ (n_dk + alpha_k) · (n_kw + eta) / (n_k + V·eta)
//! ```
//!
//! with the token's own assignment removed from the counts. Training runs
//! `passes` rounds of `iterations` sweeps; with `auto` priors the asymmetric
//! `alpha` and symmetric `eta` are re-estimated after each round by Minka's
//! fixed-point iteration.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::digamma;

use super::{normalize_row, uniform, LdaConfig, ModelConfig, Prior, TopicInference, TopicModel, TopicModelError};
use crate::features::DocTermMatrix;

const MIN_PRIOR: f64 = 1e-10;
const MINKA_ITERS: usize = 50;
const MINKA_TOL: f64 = 1e-8;

/// Summary of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaFitReport {
    pub sweeps: usize,
    /// Number of sweeps after which all count tables were recounted and
    /// found consistent.
    pub conservation_checks: usize,
    /// `alpha` after each pass.
    pub alpha_trace: Vec<Vec<f64>>,
    /// `eta` after each pass.
    pub eta_trace: Vec<f64>,
}

/// Sampler state for one training run.
pub struct LdaTrainer {
    k: usize,
    v: usize,
    /// Token term ids per non-empty document.
    docs: Vec<Vec<u32>>,
    z: Vec<Vec<u32>>,
    /// `n_dk[d * k + t]`
    n_dk: Vec<u32>,
    /// `n_wk[w * k + t]`, word-major for the sampling loop.
    n_wk: Vec<u32>,
    n_k: Vec<u64>,
    alpha: Vec<f64>,
    eta: f64,
    rng: ChaCha8Rng,
    probs: Vec<f64>,
}

fn expand_counts(row: &[(u32, f64)]) -> Result<Vec<u32>, TopicModelError> {
    let mut tokens = Vec::new();
    for &(t, c) in row {
        if !(c >= 0.0 && c.fract() == 0.0 && c.is_finite()) {
            return Err(TopicModelError::InvalidMatrix(format!(
                "LDA needs integer counts, found {c} for term {t}"
            )));
        }
        tokens.extend(std::iter::repeat(t).take(c as usize));
    }
    Ok(tokens)
}

impl LdaTrainer {
    /// Builds the sampler over the non-empty rows of `m` and draws the
    /// initial assignments uniformly.
    pub fn new(m: &DocTermMatrix, cfg: &LdaConfig) -> Result<Self, TopicModelError> {
        cfg.validate()?;
        let k = cfg.num_topics;
        let v = m.num_terms;
        let docs: Vec<Vec<u32>> = m
            .rows
            .iter()
            .map(|r| expand_counts(r))
            .filter(|r| !matches!(r, Ok(t) if t.is_empty()))
            .collect::<Result<_, _>>()?;
        if docs.len() < k {
            return Err(TopicModelError::DegenerateCorpus { non_empty: docs.len(), num_topics: k });
        }
        let initial = 1.0 / k as f64;
        let alpha = vec![
            match cfg.alpha {
                Prior::Auto => initial,
                Prior::Symmetric(a) => a,
            };
            k
        ];
        let eta = match cfg.eta {
            Prior::Auto => initial,
            Prior::Symmetric(e) => e,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut n_dk = vec![0u32; docs.len() * k];
        let mut n_wk = vec![0u32; v * k];
        let mut n_k = vec![0u64; k];
        let mut z = Vec::with_capacity(docs.len());
        for (d, doc) in docs.iter().enumerate() {
            let zd: Vec<u32> = doc.iter().map(|_| rng.random_range(0..k as u32)).collect();
            for (&w, &t) in doc.iter().zip(&zd) {
                n_dk[d * k + t as usize] += 1;
                n_wk[w as usize * k + t as usize] += 1;
                n_k[t as usize] += 1;
            }
            z.push(zd);
        }
        Ok(LdaTrainer { k, v, docs, z, n_dk, n_wk, n_k, alpha, eta, rng, probs: vec![0.0; k] })
    }

    pub fn num_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// One full Gibbs sweep over every token.
    pub fn sweep(&mut self) {
        let k = self.k;
        let v_eta = self.v as f64 * self.eta;
        for d in 0..self.docs.len() {
            let doc = &self.docs[d];
            let zd = &mut self.z[d];
            let ndk = &mut self.n_dk[d * k..(d + 1) * k];
            for (i, &w) in doc.iter().enumerate() {
                let old = zd[i] as usize;
                let nwk = &mut self.n_wk[w as usize * k..(w as usize + 1) * k];
                ndk[old] -= 1;
                nwk[old] -= 1;
                self.n_k[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    total += (f64::from(ndk[t]) + self.alpha[t]) * (f64::from(nwk[t]) + self.eta)
                        / (self.n_k[t] as f64 + v_eta);
                    self.probs[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.probs.iter().position(|&c| u < c).unwrap_or(k - 1);

                zd[i] = new as u32;
                ndk[new] += 1;
                nwk[new] += 1;
                self.n_k[new] += 1;
            }
        }
    }

    /// Recounts every table from the assignments and compares. Also checks
    /// that document-topic rows sum to document lengths and topic totals to
    /// the topic-term column sums.
    pub fn check_conservation(&self) -> Result<(), TopicModelError> {
        let k = self.k;
        let mut n_dk = vec![0u32; self.n_dk.len()];
        let mut n_wk = vec![0u32; self.n_wk.len()];
        let mut n_k = vec![0u64; k];
        for (d, (doc, zd)) in self.docs.iter().zip(&self.z).enumerate() {
            let row_sum: u64 = self.n_dk[d * k..(d + 1) * k].iter().map(|&c| u64::from(c)).sum();
            if row_sum != doc.len() as u64 {
                return Err(TopicModelError::ConservationViolated(format!(
                    "document {d}: topic counts sum to {row_sum}, length is {}",
                    doc.len()
                )));
            }
            for (&w, &t) in doc.iter().zip(zd) {
                n_dk[d * k + t as usize] += 1;
                n_wk[w as usize * k + t as usize] += 1;
                n_k[t as usize] += 1;
            }
        }
        if n_dk != self.n_dk {
            return Err(TopicModelError::ConservationViolated("document-topic table drifted".into()));
        }
        if n_wk != self.n_wk {
            return Err(TopicModelError::ConservationViolated("topic-term table drifted".into()));
        }
        for t in 0..k {
            let col: u64 = (0..self.v).map(|w| u64::from(self.n_wk[w * k + t])).sum();
            if col != self.n_k[t] || n_k[t] != self.n_k[t] {
                return Err(TopicModelError::ConservationViolated(format!(
                    "topic {t}: total {} but term counts sum to {col}",
                    self.n_k[t]
                )));
            }
        }
        Ok(())
    }

    /// One Minka fixed-point re-estimation of the asymmetric `alpha`.
    pub fn update_alpha(&mut self) {
        let k = self.k;
        // histograms: document lengths, and per topic the non-zero n_dk values
        let mut len_hist: BTreeMap<usize, f64> = BTreeMap::new();
        for doc in &self.docs {
            *len_hist.entry(doc.len()).or_default() += 1.0;
        }
        let mut topic_hist: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); k];
        for d in 0..self.docs.len() {
            for t in 0..k {
                let c = self.n_dk[d * k + t];
                if c > 0 {
                    *topic_hist[t].entry(c).or_default() += 1.0;
                }
            }
        }
        for _ in 0..MINKA_ITERS {
            let sum: f64 = self.alpha.iter().sum();
            let psi_sum = digamma(sum);
            let denom: f64 = len_hist.iter().map(|(&n, &cnt)| cnt * (digamma(n as f64 + sum) - psi_sum)).sum();
            if !(denom > 0.0) {
                return;
            }
            let mut change: f64 = 0.0;
            for t in 0..k {
                let a = self.alpha[t];
                let psi_a = digamma(a);
                let num: f64 = topic_hist[t].iter().map(|(&c, &cnt)| cnt * (digamma(f64::from(c) + a) - psi_a)).sum();
                let updated = (a * num / denom).max(MIN_PRIOR);
                change = change.max((updated - a).abs() / a);
                self.alpha[t] = updated;
            }
            if change < MINKA_TOL {
                break;
            }
        }
    }

    /// One Minka fixed-point re-estimation of the symmetric `eta`.
    pub fn update_eta(&mut self) {
        let k = self.k;
        let v = self.v as f64;
        let mut hist: BTreeMap<u32, f64> = BTreeMap::new();
        for &c in &self.n_wk {
            if c > 0 {
                *hist.entry(c).or_default() += 1.0;
            }
        }
        for _ in 0..MINKA_ITERS {
            let eta = self.eta;
            let psi_eta = digamma(eta);
            let num: f64 = hist.iter().map(|(&c, &cnt)| cnt * (digamma(f64::from(c) + eta) - psi_eta)).sum();
            let psi_veta = digamma(v * eta);
            let denom: f64 = v * (0..k).map(|t| digamma(self.n_k[t] as f64 + v * eta) - psi_veta).sum::<f64>();
            if !(denom > 0.0) {
                return;
            }
            let updated = (eta * num / denom).max(MIN_PRIOR);
            self.eta = updated;
            if (updated - eta).abs() / eta < MINKA_TOL {
                break;
            }
        }
    }

    /// `p_feat(t, w) = (n_kw + eta) / (n_k + V·eta)`, row-major by topic.
    pub fn p_feat(&self) -> Vec<f64> {
        let (k, v) = (self.k, self.v);
        let mut out = vec![0.0; k * v];
        for t in 0..k {
            let denom = self.n_k[t] as f64 + v as f64 * self.eta;
            for w in 0..v {
                out[t * v + w] = (f64::from(self.n_wk[w * k + t]) + self.eta) / denom;
            }
        }
        out
    }

    /// `p_topic(d, t) = (n_dt + alpha_t) / (n_d + Σ alpha)` for each
    /// non-empty document in training order.
    pub fn p_topic(&self) -> Vec<Vec<f64>> {
        let k = self.k;
        let sum: f64 = self.alpha.iter().sum();
        self.docs
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                let denom = doc.len() as f64 + sum;
                (0..k).map(|t| (f64::from(self.n_dk[d * k + t]) + self.alpha[t]) / denom).collect()
            })
            .collect()
    }
}

/// Fits LDA by collapsed Gibbs sampling. Deterministic for a fixed seed.
pub fn fit_lda(m: &DocTermMatrix, cfg: &LdaConfig, feature_checksum: &str) -> Result<TopicModel, TopicModelError> {
    fit_lda_with_report(m, cfg, feature_checksum).map(|(model, _)| model)
}

pub fn fit_lda_with_report(
    m: &DocTermMatrix,
    cfg: &LdaConfig,
    feature_checksum: &str,
) -> Result<(TopicModel, LdaFitReport), TopicModelError> {
    let mut trainer = LdaTrainer::new(m, cfg)?;
    let verify = cfg.verify_counts || cfg!(debug_assertions);
    let mut report = LdaFitReport { sweeps: 0, conservation_checks: 0, alpha_trace: Vec::new(), eta_trace: Vec::new() };
    if verify {
        trainer.check_conservation()?;
        report.conservation_checks += 1;
    }
    for pass in 0..cfg.passes {
        for _ in 0..cfg.iterations {
            trainer.sweep();
            report.sweeps += 1;
            if verify {
                trainer.check_conservation()?;
                report.conservation_checks += 1;
            }
        }
        if matches!(cfg.alpha, Prior::Auto) {
            trainer.update_alpha();
        }
        if matches!(cfg.eta, Prior::Auto) {
            trainer.update_eta();
        }
        report.alpha_trace.push(trainer.alpha.clone());
        report.eta_trace.push(trainer.eta);
        log::debug!("lda pass {}/{}: eta={:.5} alpha_sum={:.5}", pass + 1, cfg.passes, trainer.eta, trainer.alpha.iter().sum::<f64>());
    }

    let k = cfg.num_topics;
    let trained = trainer.p_topic();
    let mut trained = trained.into_iter();
    let mut p_topic = Vec::with_capacity(m.num_docs() * k);
    let mut empty_docs = Vec::with_capacity(m.num_docs());
    for row in &m.rows {
        if row.is_empty() {
            p_topic.extend(uniform(k));
            empty_docs.push(true);
        } else {
            p_topic.extend(trained.next().expect("one sampled row per non-empty document"));
            empty_docs.push(false);
        }
    }
    let mut model = TopicModel::build(
        ModelConfig::Lda(cfg.clone()),
        m.num_terms,
        trainer.p_feat(),
        p_topic,
        m.doc_ids.clone(),
        empty_docs,
        feature_checksum.to_string(),
    );
    model.alpha = trainer.alpha.clone();
    model.eta = trainer.eta;
    Ok((model, report))
}

fn row_seed(seed: u64, counts: &[(u32, f64)]) -> u64 {
    let mut h = seed ^ 0x51_7c_c1_b7_27_22_0a_95;
    for &(t, c) in counts {
        h = (h ^ u64::from(t)).wrapping_mul(0x0100_0000_01b3);
        h = (h ^ c.to_bits()).wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Folds an unseen document into a fitted LDA model.
pub(super) fn fold_in(model: &TopicModel, counts: &[(u32, f64)]) -> Result<TopicInference, TopicModelError> {
    let k = model.num_topics;
    let tokens = expand_counts(counts)?;
    if tokens.is_empty() {
        return Ok(TopicInference { distribution: uniform(k), empty: true });
    }
    let ModelConfig::Lda(cfg) = &model.config else {
        unreachable!("fold_in called on a non-LDA model")
    };
    let mut rng = ChaCha8Rng::seed_from_u64(row_seed(cfg.seed, counts));
    let alpha = &model.alpha;
    let mut n_dk = vec![0u32; k];
    let mut z: Vec<usize> = tokens
        .iter()
        .map(|_| {
            let t = rng.random_range(0..k);
            n_dk[t] += 1;
            t
        })
        .collect();
    let mut probs = vec![0.0; k];
    let mut acc = vec![0.0; k];
    let samples = cfg.fold_in_samples.max(1);
    let denom = tokens.len() as f64 + alpha.iter().sum::<f64>();
    for sweep in 0..cfg.burn_in + samples {
        for (i, &w) in tokens.iter().enumerate() {
            n_dk[z[i]] -= 1;
            let mut total = 0.0;
            for t in 0..k {
                total += (f64::from(n_dk[t]) + alpha[t]) * model.p_feat(t, w as usize);
                probs[t] = total;
            }
            let u = rng.random::<f64>() * total;
            let new = probs.iter().position(|&c| u < c).unwrap_or(k - 1);
            z[i] = new;
            n_dk[new] += 1;
        }
        if sweep >= cfg.burn_in {
            for t in 0..k {
                acc[t] += (f64::from(n_dk[t]) + alpha[t]) / denom;
            }
        }
    }
    normalize_row(&mut acc);
    Ok(TopicInference { distribution: acc, empty: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Weighting;

    fn two_communities(n_docs: usize) -> DocTermMatrix {
        // terms 0..5 belong to community A, 5..10 to community B
        let rows = (0..n_docs)
            .map(|d| {
                let base = if d % 2 == 0 { 0 } else { 5 };
                (0..5).map(|i| ((base + i) as u32, 1.0 + ((d + i) % 3) as f64)).collect()
            })
            .collect();
        DocTermMatrix {
            doc_ids: (0..n_docs).map(|d| format!("d{d:03}")).collect(),
            num_terms: 10,
            rows,
            weighting: Weighting::Counts,
        }
    }

    fn small_cfg(k: usize) -> LdaConfig {
        LdaConfig { num_topics: k, iterations: 25, passes: 4, ..Default::default() }
    }

    #[test]
    fn separable_communities_split_cleanly() {
        let m = two_communities(40);
        let model = fit_lda(&m, &small_cfg(2), "").unwrap();
        let mut purity = 0.0;
        for t in 0..2 {
            let top: Vec<usize> = model.top_terms(t, 5).into_iter().map(|(w, _)| w).collect();
            let a = top.iter().filter(|&&w| w < 5).count();
            purity += a.max(5 - a) as f64 / 5.0;
        }
        assert!(purity / 2.0 >= 0.95);
        // every document is dominated by the topic of its community
        let topic_of_a = if model.p_feat(0, 0) > model.p_feat(1, 0) { 0 } else { 1 };
        for d in 0..40 {
            let row = model.p_topic_row(d);
            let expected = if d % 2 == 0 { topic_of_a } else { 1 - topic_of_a };
            assert!(row[expected] > 0.8, "doc {d}: {row:?}");
        }
    }

    #[test]
    fn single_topic_is_degenerate_but_valid() {
        let model = fit_lda(&two_communities(6), &small_cfg(1), "").unwrap();
        for d in 0..6 {
            assert_eq!(model.p_topic_row(d), &[1.0]);
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let m = two_communities(20);
        let a = fit_lda(&m, &small_cfg(3), "").unwrap();
        let b = fit_lda(&m, &small_cfg(3), "").unwrap();
        assert_eq!(a.p_feat, b.p_feat);
        assert_eq!(a.p_topic, b.p_topic);
        let c = fit_lda(&m, &LdaConfig { seed: 7, ..small_cfg(3) }, "").unwrap();
        assert_ne!(a.p_topic, c.p_topic);
    }

    #[test]
    fn too_few_documents() {
        let err = fit_lda(&two_communities(3), &small_cfg(5), "").unwrap_err();
        assert!(matches!(err, TopicModelError::DegenerateCorpus { non_empty: 3, num_topics: 5 }));
    }

    #[test]
    fn non_integer_counts_rejected() {
        let mut m = two_communities(4);
        m.rows[0][0].1 = 0.5;
        assert!(matches!(fit_lda(&m, &small_cfg(2), ""), Err(TopicModelError::InvalidMatrix(_))));
    }

    #[test]
    fn conservation_holds_across_sweeps_and_detects_tampering() {
        let m = two_communities(10);
        let (_, report) = fit_lda_with_report(&m, &LdaConfig { verify_counts: true, ..small_cfg(3) }, "").unwrap();
        assert_eq!(report.sweeps, 100);
        assert_eq!(report.conservation_checks, 101);
        let mut trainer = LdaTrainer::new(&m, &small_cfg(3)).unwrap();
        trainer.sweep();
        trainer.check_conservation().unwrap();
        trainer.n_dk[0] += 1;
        assert!(trainer.check_conservation().is_err());
    }

    #[test]
    fn auto_priors_move_and_stay_positive() {
        let m = two_communities(30);
        let (model, report) = fit_lda_with_report(&m, &small_cfg(4), "").unwrap();
        assert_eq!(report.alpha_trace.len(), 4);
        assert!(model.alpha().iter().all(|&a| a > 0.0));
        assert!(model.eta() > 0.0);
        assert_ne!(model.alpha(), &[0.25; 4]);
    }

    #[test]
    fn fold_in_recovers_dominant_topic() {
        let m = two_communities(40);
        let model = fit_lda(&m, &small_cfg(2), "").unwrap();
        for t in 0..2 {
            let row: Vec<(u32, f64)> = model.top_terms(t, 3).into_iter().map(|(w, _)| (w as u32, 4.0)).collect();
            let mut row = row;
            row.sort_by_key(|&(w, _)| w);
            let inf = super::super::infer_topics(&model, &row).unwrap();
            let argmax = (0..2).max_by(|&a, &b| inf.distribution[a].total_cmp(&inf.distribution[b])).unwrap();
            assert_eq!(argmax, t);
            assert!((inf.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(super::super::infer_topics(&model, &row).unwrap(), inf);
        }
    }
}
