//! Grid evaluation over the rotation factor and scaling factor.
//!
//! For every `(alpha, beta)` the learned set is adjusted row by row toward the
//! reference set (rows are index-paired) and the chosen set distance between
//! the adjusted set and the reference is recorded.

use serde::{Deserialize, Serialize};

use crate::adjust::{adjust_prompt, AdjustParams};
use crate::embedding::{EmbeddingMatrix, PromptEmbedding};
use crate::error::{Error, Result};
use crate::metrics::{set_distance, MetricConfig};

/// Rotation factors evaluated when none are given.
pub const DEFAULT_SWEEP_ALPHAS: [f64; 4] = [0.20, 0.25, 0.30, 0.35];
/// Scaling factors evaluated when none are given.
pub const DEFAULT_SWEEP_BETAS: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 5.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub beta: f64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResults {
    pub points: Vec<SweepPoint>,
}

impl SweepResults {
    pub fn get(&self, alpha: f64, beta: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.alpha == alpha && p.beta == beta)
    }
}

/// Evaluates the grid in row-major order (alphas outer, betas inner).
/// `base` supplies the tolerances and zero-norm policy.
pub fn sweep(
    input: &EmbeddingMatrix,
    reference: &EmbeddingMatrix,
    alphas: &[f64],
    betas: &[f64],
    base: &AdjustParams,
    cfg: &MetricConfig,
) -> Result<SweepResults> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(Error::InvalidParameter(
            "sweep needs at least one alpha and one beta".into(),
        ));
    }
    let p_star = PromptEmbedding::new(input.clone());
    let p_c = PromptEmbedding::new(reference.clone());
    let mut points = Vec::with_capacity(alphas.len() * betas.len());
    for &alpha in alphas {
        for &beta in betas {
            let params = AdjustParams { alpha, beta, ..*base };
            let adjusted = adjust_prompt(&p_star, &p_c, &params)?;
            let d = set_distance(adjusted.positions(), reference, cfg)?;
            points.push(SweepPoint {
                alpha,
                beta,
                metric: cfg.metric.name().to_string(),
                value: d.value,
            });
        }
    }
    Ok(SweepResults { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::MatrixKind;
    use crate::metrics::Metric;

    fn sets() -> (EmbeddingMatrix, EmbeddingMatrix) {
        let p = EmbeddingMatrix::from_rows(
            vec![vec![3.0, 1.0, 0.0], vec![0.0, 4.0, 1.0], vec![1.0, -1.0, 5.0]],
            MatrixKind::EmbeddingSet,
        )
        .unwrap();
        let q = EmbeddingMatrix::from_rows(
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            MatrixKind::EmbeddingSet,
        )
        .unwrap();
        (p, q)
    }

    #[test]
    fn default_grid_contains_default_params() {
        let (p, q) = sets();
        let r = sweep(
            &p,
            &q,
            &DEFAULT_SWEEP_ALPHAS,
            &DEFAULT_SWEEP_BETAS,
            &AdjustParams::default(),
            &MetricConfig::for_metric(Metric::L2),
        )
        .unwrap();
        assert_eq!(r.points.len(), 20);
        assert!(r.get(0.2, 1.5).is_some());
    }

    #[test]
    fn full_rotation_at_unit_beta_reaches_reference() {
        let (p, q) = sets();
        let r = sweep(
            &p,
            &q,
            &[0.0, 1.0],
            &[1.0],
            &AdjustParams::default(),
            &MetricConfig::default(),
        )
        .unwrap();
        assert!(r.get(1.0, 1.0).unwrap().value < 1e-24);
        assert!(r.get(0.0, 1.0).unwrap().value > 0.05);
    }

    #[test]
    fn invalid_alpha_propagates() {
        let (p, q) = sets();
        assert!(sweep(
            &p,
            &q,
            &[1.5],
            &[1.0],
            &AdjustParams::default(),
            &MetricConfig::default()
        )
        .is_err());
        assert!(sweep(&p, &q, &[], &[1.0], &AdjustParams::default(), &MetricConfig::default()).is_err());
    }
}
