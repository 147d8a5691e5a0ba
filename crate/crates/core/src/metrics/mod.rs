//! Set-level distances between index-paired prompt-embedding sets.
//!
//! Four families are provided, each with an inter-set form `d(P, Q)` and an
//! intra-set form `d(P, P)` measuring dispersion inside one set:
//!
//! | metric      | inter-set                               | intra-set                                  |
//! |-------------|-----------------------------------------|--------------------------------------------|
//! | L2          | mean over pairs of `|p_i - q_i|^2`      | mean over all `(i, j)` of `|p_i - p_j|^2`  |
//! | Hausdorff   | symmetric Hausdorff distance            | largest nearest-neighbour distance         |
//! | Mahalanobis | mean distance of probes to reference    | mean pairwise whitened distance            |
//! | KL          | mean row KL of relational softmaxes     | `KL(P, P) = 0`                             |

mod hausdorff;
mod kl;
mod l2;
mod mahalanobis;

pub use hausdorff::{directed_hausdorff, hausdorff, hausdorff_intra};
pub use kl::{kl_divergence, kl_divergence_rows, nt_softmax_row};
pub use l2::{l2_inter, l2_intra};
pub use mahalanobis::{mahalanobis_inter, mahalanobis_intra, CovarianceModel};

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L2,
    Hausdorff,
    Mahalanobis,
    Kl,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::L2, Metric::Hausdorff, Metric::Mahalanobis, Metric::Kl];

    pub fn name(self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::Hausdorff => "hausdorff",
            Metric::Mahalanobis => "mahalanobis",
            Metric::Kl => "kl",
        }
    }

    pub fn is_symmetric(self) -> bool {
        matches!(self, Metric::L2 | Metric::Hausdorff)
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    /// `(1 - lambda) S + lambda (tr S / d) I`, inverted through Cholesky.
    FullShrinkage,
    /// Per-dimension variances with a floor of [`VARIANCE_FLOOR`].
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    Cosine,
    /// Negative (unsquared) Euclidean distance.
    NegL2,
}

/// Which argument of `mahalanobis_inter(P, Q)` supplies the mean and
/// covariance. The other argument supplies the probe points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MahalanobisReference {
    First,
    Second,
}

pub const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub metric: Metric,
    pub temperature: f64,
    pub covariance_mode: CovarianceMode,
    pub shrinkage_lambda: f64,
    pub similarity: Similarity,
    pub exclude_self: bool,
    pub squared_l2: bool,
    pub mahalanobis_reference: MahalanobisReference,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            metric: Metric::L2,
            temperature: 1.0,
            covariance_mode: CovarianceMode::Diagonal,
            shrinkage_lambda: 0.1,
            similarity: Similarity::Cosine,
            exclude_self: true,
            squared_l2: true,
            mahalanobis_reference: MahalanobisReference::Second,
        }
    }
}

impl MetricConfig {
    pub fn for_metric(metric: Metric) -> Self {
        Self {
            metric,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.shrinkage_lambda) {
            return Err(Error::InvalidParameter(format!(
                "shrinkage lambda must lie in [0, 1], got {}",
                self.shrinkage_lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetDistanceResult {
    pub value: f64,
    pub metric: MetricConfig,
    pub n_p: usize,
    pub n_q: usize,
    pub notes: String,
}

impl SetDistanceResult {
    pub(crate) fn new(value: f64, cfg: &MetricConfig, n_p: usize, n_q: usize) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidVector(format!("{} produced {value}", cfg.metric.name())));
        }
        Ok(Self {
            value: value.max(0.0),
            metric: *cfg,
            n_p,
            n_q,
            notes: String::new(),
        })
    }

    pub(crate) fn with_notes(mut self, notes: impl Into<String>) -> Self {
        self.notes = notes.into();
        self
    }
}

pub(crate) fn check_same_dim(p: &EmbeddingMatrix, q: &EmbeddingMatrix) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    Ok(())
}

pub(crate) fn check_paired(p: &EmbeddingMatrix, q: &EmbeddingMatrix) -> Result<()> {
    if p.n_rows() != q.n_rows() {
        return Err(Error::PairingMismatch {
            left: p.n_rows(),
            right: q.n_rows(),
        });
    }
    check_same_dim(p, q)
}

/// Inter-set distance `d(P, Q)` for the metric selected in `cfg`.
pub fn set_distance(p: &EmbeddingMatrix, q: &EmbeddingMatrix, cfg: &MetricConfig) -> Result<SetDistanceResult> {
    match cfg.metric {
        Metric::L2 => l2_inter(p, q, cfg),
        Metric::Hausdorff => hausdorff(p, q).map(|r| SetDistanceResult { metric: *cfg, ..r }),
        Metric::Mahalanobis => mahalanobis_inter(p, q, cfg),
        Metric::Kl => kl_divergence(p, q, cfg),
    }
}

/// Intra-set distance `d(P, P)` for the metric selected in `cfg`.
pub fn intra_distance(p: &EmbeddingMatrix, cfg: &MetricConfig) -> Result<SetDistanceResult> {
    match cfg.metric {
        Metric::L2 => l2_intra(p, cfg),
        Metric::Hausdorff => hausdorff_intra(p).map(|r| SetDistanceResult { metric: *cfg, ..r }),
        Metric::Mahalanobis => mahalanobis_intra(p, cfg),
        Metric::Kl => kl_divergence(p, p, cfg),
    }
}

/// A cell either holds a distance or the message of the error that
/// prevented computing it.
pub type SetDistanceCell = std::result::Result<SetDistanceResult, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMatrix {
    pub config: MetricConfig,
    cells: Vec<Vec<SetDistanceCell>>,
}

impl PairwiseMatrix {
    pub fn size(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, i: usize, j: usize) -> &SetDistanceCell {
        &self.cells[i][j]
    }

    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.cells[i][j].as_ref().ok().map(|r| r.value)
    }

    pub fn rows(&self) -> &[Vec<SetDistanceCell>] {
        &self.cells
    }
}

/// Distances between every ordered pair of sets. The diagonal holds the
/// intra-set variant. Symmetric metrics are computed once per unordered pair
/// and mirrored.
pub fn pairwise_set_matrix(sets: &[EmbeddingMatrix], cfg: &MetricConfig) -> Result<PairwiseMatrix> {
    cfg.validate()?;
    let k = sets.len();
    if k < 2 {
        return Err(Error::InsufficientPoints { required: 2, found: k });
    }

    let cell = |i: usize, j: usize| -> SetDistanceCell {
        let r = if i == j {
            intra_distance(&sets[i], cfg)
        } else {
            set_distance(&sets[i], &sets[j], cfg)
        };
        r.map_err(|e| e.to_string())
    };

    // Cells are independent; fan them out over scoped threads.
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .filter(|&(i, j)| !cfg.metric.is_symmetric() || i <= j)
        .collect();
    let computed: Vec<((usize, usize), SetDistanceCell)> = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .iter()
            .map(|&(i, j)| s.spawn(move || ((i, j), cell(i, j))))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("metric worker panicked"))
            .collect()
    });

    let mut cells: Vec<Vec<Option<SetDistanceCell>>> = vec![vec![None; k]; k];
    for ((i, j), c) in computed {
        if cfg.metric.is_symmetric() && i != j {
            let mirrored = c.clone().map(|r| SetDistanceResult {
                n_p: r.n_q,
                n_q: r.n_p,
                ..r
            });
            cells[j][i] = Some(mirrored);
        }
        cells[i][j] = Some(c);
    }
    let cells = cells
        .into_iter()
        .map(|row| row.into_iter().map(|c| c.expect("every cell computed")).collect())
        .collect();
    Ok(PairwiseMatrix { config: *cfg, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::MatrixKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingMatrix {
        let rows = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        EmbeddingMatrix::from_rows(rows, MatrixKind::EmbeddingSet).unwrap()
    }

    #[test]
    fn identical_sets_have_zero_off_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_set(&mut rng, 6, 3);
        for metric in [Metric::L2, Metric::Hausdorff, Metric::Kl] {
            let m = pairwise_set_matrix(&[a.clone(), a.clone()], &MetricConfig::for_metric(metric)).unwrap();
            assert_eq!(m.value(0, 1), Some(0.0), "{metric:?}");
            assert_eq!(m.value(1, 0), Some(0.0), "{metric:?}");
        }
    }

    #[test]
    fn translated_copy_is_farthest() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_set(&mut rng, 8, 4);
        let b = EmbeddingMatrix::from_rows(
            a.rows().map(|r| r.iter().map(|x| x + 0.05).collect()).collect(),
            MatrixKind::EmbeddingSet,
        )
        .unwrap();
        let far = EmbeddingMatrix::from_rows(
            a.rows().map(|r| r.iter().map(|x| x + 3.0).collect()).collect(),
            MatrixKind::EmbeddingSet,
        )
        .unwrap();
        let m = pairwise_set_matrix(&[a, b, far], &MetricConfig::for_metric(Metric::L2)).unwrap();
        let off: Vec<((usize, usize), f64)> = [(0, 1), (0, 2), (1, 2)]
            .into_iter()
            .map(|(i, j)| ((i, j), m.value(i, j).unwrap()))
            .collect();
        let best = off.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(best.0, (0, 2));
    }

    #[test]
    fn hausdorff_matrix_is_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sets: Vec<_> = (0..4).map(|i| random_set(&mut rng, 5 + i, 3)).collect();
        let m = pairwise_set_matrix(&sets, &MetricConfig::for_metric(Metric::Hausdorff)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.value(i, j), m.value(j, i));
            }
        }
    }

    #[test]
    fn per_cell_errors_are_recorded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_set(&mut rng, 5, 3);
        let b = random_set(&mut rng, 4, 3);
        let m = pairwise_set_matrix(&[a, b], &MetricConfig::for_metric(Metric::L2)).unwrap();
        assert!(m.cell(0, 1).is_err());
        assert!(m.cell(0, 0).is_ok());
    }

    #[test]
    fn needs_two_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_set(&mut rng, 5, 3);
        assert!(pairwise_set_matrix(&[a], &MetricConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let c = MetricConfig {
            temperature: 0.0,
            ..MetricConfig::default()
        };
        assert!(c.validate().is_err());
        let c = MetricConfig {
            shrinkage_lambda: 1.5,
            ..MetricConfig::default()
        };
        assert!(c.validate().is_err());
        assert_eq!("kl".parse::<Metric>().unwrap(), Metric::Kl);
        assert!("cosine".parse::<Metric>().is_err());
    }
}
