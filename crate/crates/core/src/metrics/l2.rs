use crate::embedding::{dist_sq, EmbeddingMatrix};
use crate::error::Result;

use super::{check_paired, MetricConfig, SetDistanceResult};

/// Mean over index-paired rows of `|p_i - q_i|^2` (or `|p_i - q_i|` when
/// `cfg.squared_l2` is off).
pub fn l2_inter(p: &EmbeddingMatrix, q: &EmbeddingMatrix, cfg: &MetricConfig) -> Result<SetDistanceResult> {
    check_paired(p, q)?;
    let n = p.n_rows();
    let sum: f64 = p
        .rows()
        .zip(q.rows())
        .map(|(a, b)| pair_term(a, b, cfg.squared_l2))
        .sum();
    SetDistanceResult::new(sum / n as f64, cfg, n, n)
}

/// Mean over all ordered pairs `(i, j)`, diagonal included, of
/// `|p_i - p_j|^2` (or unsquared).
pub fn l2_intra(p: &EmbeddingMatrix, cfg: &MetricConfig) -> Result<SetDistanceResult> {
    let n = p.n_rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += pair_term(p.row(i), p.row(j), cfg.squared_l2);
        }
    }
    let value = 2.0 * sum / (n * n) as f64;
    SetDistanceResult::new(value, cfg, n, n)
}

fn pair_term(a: &[f64], b: &[f64], squared: bool) -> f64 {
    let d2 = dist_sq(a, b);
    if squared {
        d2
    } else {
        d2.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::MatrixKind;
    use crate::error::Error;

    fn set(rows: &[&[f64]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect(), MatrixKind::EmbeddingSet).unwrap()
    }

    fn unsquared() -> MetricConfig {
        MetricConfig {
            squared_l2: false,
            ..MetricConfig::default()
        }
    }

    #[test]
    fn inter_cases() {
        let p = set(&[&[0.0, 0.0]]);
        let q = set(&[&[3.0, 4.0]]);
        assert_eq!(l2_inter(&p, &q, &MetricConfig::default()).unwrap().value, 25.0);
        assert_eq!(l2_inter(&p, &q, &unsquared()).unwrap().value, 5.0);
        assert_eq!(l2_inter(&q, &q, &MetricConfig::default()).unwrap().value, 0.0);
    }

    #[test]
    fn inter_requires_pairing() {
        let p = set(&[&[0.0], &[1.0]]);
        let q = set(&[&[0.0]]);
        assert!(matches!(
            l2_inter(&p, &q, &MetricConfig::default()),
            Err(Error::PairingMismatch { left: 2, right: 1 })
        ));
    }

    #[test]
    fn intra_cases() {
        assert_eq!(
            l2_intra(&set(&[&[0.0, 0.0], &[3.0, 4.0]]), &MetricConfig::default())
                .unwrap()
                .value,
            12.5
        );
        assert_eq!(
            l2_intra(&set(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]), &MetricConfig::default())
                .unwrap()
                .value,
            0.0
        );
        assert_eq!(
            l2_intra(&set(&[&[0.0, 0.0], &[3.0, 4.0]]), &unsquared()).unwrap().value,
            2.5
        );
    }
}
