use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::embedding::{norm_sq, EmbeddingMatrix};
use crate::error::{Error, Result};

use super::{check_same_dim, CovarianceMode, MahalanobisReference, MetricConfig, SetDistanceResult, VARIANCE_FLOOR};

enum Whitener {
    /// `1 / sqrt(var_j)` per dimension.
    Diagonal(Vec<f64>),
    Full(Cholesky<f64, Dyn>),
}

/// Mean and regularized covariance of a reference set, kept in a form that
/// maps a point `x` to `z` with `|z|^2 = (x - mu)^T Sigma^-1 (x - mu)`.
///
/// Sample covariance uses the `n - 1` denominator.
pub struct CovarianceModel {
    mean: Vec<f64>,
    whitener: Whitener,
    notes: String,
}

impl CovarianceModel {
    pub fn fit(set: &EmbeddingMatrix, cfg: &MetricConfig) -> Result<Self> {
        let n = set.n_rows();
        let d = set.dim();
        if n < 2 {
            return Err(Error::InsufficientPoints { required: 2, found: n });
        }
        let mut mean = vec![0.0; d];
        for row in set.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let denom = (n - 1) as f64;

        match cfg.covariance_mode {
            CovarianceMode::Diagonal => {
                let mut var = vec![0.0; d];
                for row in set.rows() {
                    for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                        let c = x - m;
                        *v += c * c;
                    }
                }
                let mut floored = 0;
                let inv_sd = var
                    .into_iter()
                    .map(|v| {
                        let v = v / denom;
                        if v < VARIANCE_FLOOR {
                            floored += 1;
                        }
                        1.0 / v.max(VARIANCE_FLOOR).sqrt()
                    })
                    .collect();
                Ok(Self {
                    mean,
                    whitener: Whitener::Diagonal(inv_sd),
                    notes: format!(
                        "covariance=diagonal; variance floor {VARIANCE_FLOOR:e} applied to {floored} of {d} dims"
                    ),
                })
            }
            CovarianceMode::FullShrinkage => {
                let centered = DMatrix::from_fn(n, d, |i, j| set.row(i)[j] - mean[j]);
                let mut cov = centered.transpose() * &centered / denom;
                let lambda = cfg.shrinkage_lambda;
                let target = cov.trace() / d as f64;
                cov *= 1.0 - lambda;
                for j in 0..d {
                    cov[(j, j)] += lambda * target;
                }
                let chol = Cholesky::new(cov).ok_or_else(|| {
                    Error::SingularCovariance(format!(
                        "full covariance with shrinkage {lambda} (trace/d = {target:e}) is not positive definite"
                    ))
                })?;
                Ok(Self {
                    mean,
                    whitener: Whitener::Full(chol),
                    notes: format!("covariance=full_shrinkage; lambda={lambda}; shrink target trace/d={target:e}"),
                })
            }
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn notes(&self) -> &str {
        &self.notes
    }

    /// Whitened, centered coordinates of `x`.
    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let centered = x.iter().zip(&self.mean).map(|(a, m)| a - m);
        match &self.whitener {
            Whitener::Diagonal(inv_sd) => centered.zip(inv_sd).map(|(c, s)| c * s).collect(),
            Whitener::Full(chol) => {
                let mut z = DVector::from_iterator(x.len(), centered);
                chol.l_dirty().solve_lower_triangular_mut(&mut z);
                z.iter().copied().collect()
            }
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        norm_sq(&self.whiten(x)).sqrt()
    }
}

/// Mean Mahalanobis distance of the probe set's points under the reference
/// set's mean and regularized covariance. By default `q` is the reference and
/// `p` supplies the probes; `cfg.mahalanobis_reference` flips this.
pub fn mahalanobis_inter(p: &EmbeddingMatrix, q: &EmbeddingMatrix, cfg: &MetricConfig) -> Result<SetDistanceResult> {
    cfg.validate()?;
    check_same_dim(p, q)?;
    let (probe, reference) = match cfg.mahalanobis_reference {
        MahalanobisReference::Second => (p, q),
        MahalanobisReference::First => (q, p),
    };
    let model = CovarianceModel::fit(reference, cfg)?;
    let total: f64 = probe.rows().map(|x| model.distance(x)).sum();
    let value = total / probe.n_rows() as f64;
    Ok(SetDistanceResult::new(value, cfg, p.n_rows(), q.n_rows())?.with_notes(model.notes))
}

/// `(1/n^2) sum_i sum_j sqrt((p_i - p_j)^T Sigma_P^-1 (p_i - p_j))`.
///
/// Points are whitened once; the pairwise distances are then plain Euclidean
/// distances in whitened space.
pub fn mahalanobis_intra(p: &EmbeddingMatrix, cfg: &MetricConfig) -> Result<SetDistanceResult> {
    cfg.validate()?;
    let model = CovarianceModel::fit(p, cfg)?;
    let z: Vec<Vec<f64>> = p.rows().map(|x| model.whiten(x)).collect();
    let n = z.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += crate::embedding::dist_sq(&z[i], &z[j]).sqrt();
        }
    }
    let value = 2.0 * sum / (n * n) as f64;
    Ok(SetDistanceResult::new(value, cfg, n, n)?.with_notes(model.notes))
}
