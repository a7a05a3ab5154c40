//! NMF by multiplicative Frobenius updates.
//!
//! Factorizes the (documents × terms) matrix `M ≈ W·H` with
//!
//! ```text
//! H ← H ∘ (Wᵀ M) / (Wᵀ W H)
//! W ← W ∘ (M Hᵀ) / (W H Hᵀ)
//! ```
//!
//! which never increases `‖M − W H‖²_F`. `M` stays sparse; only the
//! `k × k` Gram matrices are formed densely.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{normalize_row, uniform, ModelConfig, NmfConfig, TopicInference, TopicModel, TopicModelError};
use crate::features::DocTermMatrix;

const EPS: f64 = 1e-12;

/// Objective values recorded during a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfTrace {
    /// `‖M − W H‖²_F` after initialization and after every iteration.
    pub objective: Vec<f64>,
    /// `‖M‖²_F`, the scale of the objective.
    pub data_norm_sq: f64,
    pub converged: bool,
}

impl NmfTrace {
    /// Largest increase of the objective between consecutive iterations.
    pub fn max_increase(&self) -> f64 {
        self.objective.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn gram_rows(a: &[f64], rows: usize, k: usize) -> Vec<f64> {
    // aᵀa for a row-major (rows × k) matrix
    let mut g = vec![0.0; k * k];
    for r in 0..rows {
        let row = &a[r * k..(r + 1) * k];
        for i in 0..k {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for j in 0..k {
                g[i * k + j] += ri * row[j];
            }
        }
    }
    g
}

fn gram_cols(h: &[f64], k: usize, v: usize) -> Vec<f64> {
    // h hᵀ for a row-major (k × v) matrix
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let s: f64 = h[i * v..(i + 1) * v].iter().zip(&h[j * v..(j + 1) * v]).map(|(a, b)| a * b).sum();
            g[i * k + j] = s;
            g[j * k + i] = s;
        }
    }
    g
}

struct Factorization<'a> {
    m: &'a DocTermMatrix,
    k: usize,
    v: usize,
    w: Vec<f64>,
    h: Vec<f64>,
    norm_sq: f64,
}

impl Factorization<'_> {
    /// `‖M‖² − 2⟨W, M Hᵀ⟩ + ⟨WᵀW, H Hᵀ⟩`
    fn objective(&self) -> f64 {
        let (k, v) = (self.k, self.v);
        let mut cross = 0.0;
        for (d, row) in self.m.rows.iter().enumerate() {
            let wd = &self.w[d * k..(d + 1) * k];
            for &(t, x) in row {
                let t = t as usize;
                let mut wh = 0.0;
                for j in 0..k {
                    wh += wd[j] * self.h[j * v + t];
                }
                cross += x * wh;
            }
        }
        let wtw = gram_rows(&self.w, self.m.num_docs(), k);
        let hht = gram_cols(&self.h, k, v);
        let quad: f64 = wtw.iter().zip(&hht).map(|(a, b)| a * b).sum();
        (self.norm_sq - 2.0 * cross + quad).max(0.0)
    }

    fn update_h(&mut self) {
        let (k, v) = (self.k, self.v);
        let mut wtm = vec![0.0; k * v];
        for (d, row) in self.m.rows.iter().enumerate() {
            let wd = &self.w[d * k..(d + 1) * k];
            for &(t, x) in row {
                for j in 0..k {
                    wtm[j * v + t as usize] += wd[j] * x;
                }
            }
        }
        let wtw = gram_rows(&self.w, self.m.num_docs(), k);
        let mut denom = vec![0.0; v];
        for i in 0..k {
            denom.iter_mut().for_each(|x| *x = 0.0);
            for j in 0..k {
                let g = wtw[i * k + j];
                if g == 0.0 {
                    continue;
                }
                for (dv, hv) in denom.iter_mut().zip(&self.h[j * v..(j + 1) * v]) {
                    *dv += g * hv;
                }
            }
            let hi = &mut self.h[i * v..(i + 1) * v];
            for t in 0..v {
                hi[t] *= wtm[i * v + t] / (denom[t] + EPS);
            }
        }
    }

    fn update_w(&mut self) {
        let (k, v) = (self.k, self.v);
        let hht = gram_cols(&self.h, k, v);
        let mut mht = vec![0.0; k];
        for (d, row) in self.m.rows.iter().enumerate() {
            mht.iter_mut().for_each(|x| *x = 0.0);
            for &(t, x) in row {
                for j in 0..k {
                    mht[j] += x * self.h[j * v + t as usize];
                }
            }
            let wd = &mut self.w[d * k..(d + 1) * k];
            let old = wd.to_vec();
            for i in 0..k {
                let denom: f64 = (0..k).map(|j| old[j] * hht[j * k + i]).sum();
                wd[i] = old[i] * mht[i] / (denom + EPS);
            }
        }
    }

    fn check(&self) -> Result<(), TopicModelError> {
        if self.w.iter().chain(&self.h).any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(TopicModelError::NonNegativityViolation);
        }
        Ok(())
    }
}

/// Fits NMF from a seeded non-negative random start.
pub fn fit_nmf(m: &DocTermMatrix, cfg: &NmfConfig, feature_checksum: &str) -> Result<TopicModel, TopicModelError> {
    fit_nmf_with_trace(m, cfg, feature_checksum).map(|(model, _)| model)
}

pub fn fit_nmf_with_trace(
    m: &DocTermMatrix,
    cfg: &NmfConfig,
    feature_checksum: &str,
) -> Result<(TopicModel, NmfTrace), TopicModelError> {
    cfg.validate()?;
    let k = cfg.num_topics;
    let v = m.num_terms;
    let n = m.num_docs();
    let mut norm_sq = 0.0;
    let mut total = 0.0;
    for row in &m.rows {
        for &(_, x) in row {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(TopicModelError::InvalidMatrix(format!("negative or non-finite entry {x}")));
            }
            norm_sq += x * x;
            total += x;
        }
    }
    let non_empty = m.rows.iter().filter(|r| r.iter().any(|&(_, x)| x > 0.0)).count();
    if non_empty < k {
        return Err(TopicModelError::DegenerateCorpus { non_empty, num_topics: k });
    }

    let mean = total / (n * v).max(1) as f64;
    let scale = (mean / k as f64).sqrt().max(EPS);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| scale * (0.5 + rng.random::<f64>())).collect() };
    let w = draw(n * k);
    let h = draw(k * v);
    let mut f = Factorization { m, k, v, w, h, norm_sq };

    let mut objective = vec![f.objective()];
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        f.update_h();
        f.update_w();
        f.check()?;
        let prev = *objective.last().unwrap();
        let cur = f.objective();
        objective.push(cur);
        if prev <= 0.0 || (prev - cur) / prev < cfg.tol {
            converged = true;
            break;
        }
    }

    let mut p_feat = f.h.clone();
    let mut topic_scale = Vec::with_capacity(k);
    for t in 0..k {
        let row = &mut p_feat[t * v..(t + 1) * v];
        topic_scale.push(row.iter().sum());
        normalize_row(row);
    }
    let mut p_topic = f.w.clone();
    let mut empty_docs = Vec::with_capacity(n);
    for d in 0..n {
        let has_mass = normalize_row(&mut p_topic[d * k..(d + 1) * k]);
        empty_docs.push(!has_mass);
    }
    let mut model = TopicModel::build(
        ModelConfig::Nmf(cfg.clone()),
        v,
        p_feat,
        p_topic,
        m.doc_ids.clone(),
        empty_docs,
        feature_checksum.to_string(),
    );
    model.topic_scale = topic_scale;
    Ok((model, NmfTrace { objective, data_norm_sq: norm_sq, converged }))
}

/// Non-negative least squares of one row against the fitted `H`.
pub(super) fn project(model: &TopicModel, counts: &[(u32, f64)]) -> Result<TopicInference, TopicModelError> {
    let k = model.num_topics;
    let v = model.num_terms;
    let ModelConfig::Nmf(cfg) = &model.config else {
        unreachable!("project called on a non-NMF model")
    };
    let x: Vec<(usize, f64)> = counts
        .iter()
        .map(|&(t, c)| {
            let weight = model.idf.get(t as usize).copied().unwrap_or(1.0);
            (t as usize, c * weight)
        })
        .filter(|&(_, val)| val > 0.0)
        .collect();
    if x.is_empty() {
        return Ok(TopicInference { distribution: uniform(k), empty: true });
    }
    let h = |t: usize, w: usize| model.topic_scale[t] * model.p_feat(t, w);
    let mut hht = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let s: f64 = (0..v).map(|w| h(i, w) * h(j, w)).sum();
            hht[i * k + j] = s;
            hht[j * k + i] = s;
        }
    }
    let hx: Vec<f64> = (0..k).map(|t| x.iter().map(|&(w, val)| val * h(t, w)).sum()).collect();
    let mut coef = vec![1.0; k];
    for _ in 0..cfg.infer_iters.max(1) {
        let old = coef.clone();
        for i in 0..k {
            let denom: f64 = (0..k).map(|j| hht[i * k + j] * old[j]).sum();
            coef[i] = old[i] * hx[i] / (denom + EPS);
        }
    }
    let empty = !normalize_row(&mut coef);
    Ok(TopicInference { distribution: coef, empty })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Weighting;

    fn dense(rows: &[Vec<f64>]) -> DocTermMatrix {
        DocTermMatrix {
            doc_ids: (0..rows.len()).map(|i| format!("d{i}")).collect(),
            num_terms: rows[0].len(),
            rows: rows
                .iter()
                .map(|r| r.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(i, &x)| (i as u32, x)).collect())
                .collect(),
            weighting: Weighting::TfIdf,
        }
    }

    fn reconstruction_error(m: &DocTermMatrix, model: &TopicModel) -> f64 {
        // direct elementwise residual, independent of the trace formula
        let (k, v) = (model.num_topics, model.num_terms);
        let mut err = 0.0;
        let mut norm = 0.0;
        for (d, row) in m.rows.iter().enumerate() {
            let mut dense_row = vec![0.0; v];
            for &(t, x) in row {
                dense_row[t as usize] = x;
            }
            let inf = model.doc_topics(&m.doc_ids[d]).unwrap().distribution;
            // rescale the normalized row back with a least-squares fit of the row mass
            let recon: Vec<f64> = (0..v)
                .map(|t| (0..k).map(|j| inf[j] * model.topic_scale[j] * model.p_feat(j, t)).sum())
                .collect();
            let num: f64 = dense_row.iter().zip(&recon).map(|(a, b)| a * b).sum();
            let den: f64 = recon.iter().map(|b| b * b).sum();
            let c = if den > 0.0 { num / den } else { 0.0 };
            for t in 0..v {
                err += (dense_row[t] - c * recon[t]).powi(2);
                norm += dense_row[t].powi(2);
            }
        }
        (err / norm).sqrt()
    }

    #[test]
    fn rank_one_matrix_is_recovered() {
        let a = [1.0, 2.0, 0.5, 3.0, 1.5, 0.2];
        let b = [0.3, 1.0, 2.0, 0.1, 0.7, 1.2, 0.4];
        let rows: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| x * y).collect()).collect();
        let m = dense(&rows);
        let cfg = NmfConfig { num_topics: 2, max_iters: 2000, tol: 1e-12, ..Default::default() };
        let (model, trace) = fit_nmf_with_trace(&m, &cfg, "").unwrap();
        let rel = (trace.objective.last().unwrap() / trace.data_norm_sq).sqrt();
        assert!(rel < 1e-3, "relative residual {rel}");
        assert!(reconstruction_error(&m, &model) < 1e-2);
    }

    #[test]
    fn objective_never_increases() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|d| (0..9).map(|t| ((d * 7 + t * 3) % 5) as f64 * if (d + t) % 4 == 0 { 0.0 } else { 1.0 }).collect())
            .collect();
        let m = dense(&rows);
        for seed in 0..5 {
            let cfg = NmfConfig { num_topics: 3, seed, max_iters: 300, tol: 1e-9, ..Default::default() };
            let (_, trace) = fit_nmf_with_trace(&m, &cfg, "").unwrap();
            assert!(trace.max_increase() <= 1e-10 * trace.data_norm_sq.max(1.0), "{:?}", trace.max_increase());
        }
    }

    #[test]
    fn planted_blocks_recovered() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|d| (0..8).map(|t| if (d < 10) == (t < 4) { 1.0 + ((d + t) % 3) as f64 } else { 0.0 }).collect())
            .collect();
        let m = dense(&rows);
        let model = fit_nmf(&m, &NmfConfig::with_topics(2), "").unwrap();
        for t in 0..2 {
            let top: Vec<usize> = model.top_terms(t, 4).into_iter().map(|(w, _)| w).collect();
            let left = top.iter().filter(|&&w| w < 4).count();
            assert!(left == 0 || left == 4, "topic {t}: {top:?}");
        }
        assert!(model.max_row_sum_error() < 1e-9);
    }

    #[test]
    fn empty_rows_are_uniform_and_flagged() {
        let mut rows: Vec<Vec<f64>> = (0..6).map(|d| (0..4).map(|t| ((d + t) % 3) as f64).collect()).collect();
        rows.push(vec![0.0; 4]);
        let m = dense(&rows);
        let model = fit_nmf(&m, &NmfConfig::with_topics(2), "").unwrap();
        assert!(model.is_empty_doc(6));
        assert_eq!(model.p_topic_row(6), &[0.5, 0.5]);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let m = dense(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(
            fit_nmf(&m, &NmfConfig::with_topics(2), ""),
            Err(TopicModelError::DegenerateCorpus { non_empty: 1, .. })
        ));
        let mut neg = dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        neg.rows[0][0].1 = -1.0;
        assert!(matches!(fit_nmf(&neg, &NmfConfig::with_topics(2), ""), Err(TopicModelError::InvalidMatrix(_))));
    }

    #[test]
    fn projection_recovers_dominant_topic() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|d| (0..8).map(|t| if (d < 10) == (t < 4) { 1.0 + ((d + t) % 3) as f64 } else { 0.0 }).collect())
            .collect();
        let m = dense(&rows);
        let model = fit_nmf(&m, &NmfConfig::with_topics(2), "").unwrap();
        for t in 0..2 {
            let mut row: Vec<(u32, f64)> = model.top_terms(t, 2).into_iter().map(|(w, _)| (w as u32, 3.0)).collect();
            row.sort_by_key(|&(w, _)| w);
            let inf = super::super::infer_topics(&model, &row).unwrap();
            assert!(inf.distribution[t] > 0.9, "{inf:?}");
        }
    }
}
