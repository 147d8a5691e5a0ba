use crate::embedding::{dist_sq, EmbeddingMatrix};
use crate::error::{Error, Result};

use super::{check_same_dim, Metric, MetricConfig, SetDistanceResult};

/// `max_{a in A} min_{b in B} |a - b|`.
///
/// Minimisation runs over squared distances and takes a single square root at
/// the end; `sqrt` is monotone so the result is identical to comparing
/// unsquared distances.
pub fn directed_hausdorff(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    let worst = a
        .rows()
        .map(|pa| b.rows().map(|pb| dist_sq(pa, pb)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Ok(worst.sqrt())
}

/// Symmetric Hausdorff distance between two point sets of possibly different
/// sizes.
pub fn hausdorff(p: &EmbeddingMatrix, q: &EmbeddingMatrix) -> Result<SetDistanceResult> {
    let value = directed_hausdorff(p, q)?.max(directed_hausdorff(q, p)?);
    SetDistanceResult::new(
        value,
        &MetricConfig::for_metric(Metric::Hausdorff),
        p.n_rows(),
        q.n_rows(),
    )
}

/// Largest nearest-neighbour distance within one set, each point's own index
/// excluded from its neighbour search.
pub fn hausdorff_intra(p: &EmbeddingMatrix) -> Result<SetDistanceResult> {
    let n = p.n_rows();
    if n < 2 {
        return Err(Error::InsufficientPoints { required: 2, found: n });
    }
    let mut nearest = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist_sq(p.row(i), p.row(j));
            nearest[i] = nearest[i].min(d);
            nearest[j] = nearest[j].min(d);
        }
    }
    let value = nearest.into_iter().fold(0.0, f64::max).sqrt();
    SetDistanceResult::new(value, &MetricConfig::for_metric(Metric::Hausdorff), n, n)
}
