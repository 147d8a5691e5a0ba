use crate::embedding::{dist_sq, dot, norm_sq, EmbeddingMatrix};
use crate::error::{Error, Result};

use super::{check_paired, MetricConfig, SetDistanceResult, Similarity};

/// Log-probabilities of the temperature-scaled softmax of every anchor's
/// similarities to the rest of the set. Row `i` covers `j = 0..n`, skipping
/// `j = i` when `cfg.exclude_self` is set.
fn log_relational_rows(s: &EmbeddingMatrix, cfg: &MetricConfig) -> Result<Vec<Vec<f64>>> {
    let n = s.n_rows();
    let min = if cfg.exclude_self { 2 } else { 1 };
    if n < min {
        return Err(Error::InsufficientPoints {
            required: min,
            found: n,
        });
    }
    let norms: Vec<f64> = s.rows().map(|r| norm_sq(r).sqrt()).collect();
    if cfg.similarity == Similarity::Cosine && norms.contains(&0.0) {
        return Err(Error::ZeroNormVector);
    }

    let mut sim = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = match cfg.similarity {
                Similarity::Cosine => (dot(s.row(i), s.row(j)) / (norms[i] * norms[j])).clamp(-1.0, 1.0),
                Similarity::NegL2 => -dist_sq(s.row(i), s.row(j)).sqrt(),
            };
            sim[i * n + j] = v;
            sim[j * n + i] = v;
        }
    }

    let t = cfg.temperature;
    Ok((0..n)
        .map(|i| {
            let logits: Vec<f64> = (0..n)
                .filter(|&j| !(cfg.exclude_self && j == i))
                .map(|j| sim[i * n + j] / t)
                .collect();
            log_softmax(&logits)
        })
        .collect())
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

/// Relational distribution of anchor `anchor` over the set `s`:
/// `p(j) = exp(sim(s_i, s_j) / T) / sum_k exp(sim(s_i, s_k) / T)`.
pub fn nt_softmax_row(anchor: usize, s: &EmbeddingMatrix, cfg: &MetricConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if anchor >= s.n_rows() {
        return Err(Error::IndexError {
            index: anchor,
            len: s.n_rows(),
        });
    }
    let rows = log_relational_rows(s, cfg)?;
    Ok(rows[anchor].iter().map(|l| l.exp()).collect())
}

/// Per-anchor `KL(p(p_i | P) || p(q_i | Q))`.
pub fn kl_divergence_rows(p: &EmbeddingMatrix, q: &EmbeddingMatrix, cfg: &MetricConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_paired(p, q)?;
    let lp = log_relational_rows(p, cfg)?;
    let lq = log_relational_rows(q, cfg)?;
    Ok(lp
        .iter()
        .zip(&lq)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(la, lb)| {
                    let pa = la.exp();
                    if pa == 0.0 {
                        0.0
                    } else {
                        pa * (la - lb)
                    }
                })
                .sum()
        })
        .collect())
}

/// Mean over anchors of the row-wise KL divergence between the relational
/// distributions of the two index-paired sets. Rounding can leave a tiny
/// negative value; it is clamped to zero.
pub fn kl_divergence(p: &EmbeddingMatrix, q: &EmbeddingMatrix, cfg: &MetricConfig) -> Result<SetDistanceResult> {
    let rows = kl_divergence_rows(p, q, cfg)?;
    let mean = rows.iter().sum::<f64>() / rows.len() as f64;
    SetDistanceResult::new(mean.max(0.0), cfg, p.n_rows(), q.n_rows())
}
