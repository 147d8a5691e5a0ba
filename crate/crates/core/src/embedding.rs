//! Embedding containers and elementary geometry.
//!
//! Everything is held as `f64` in memory. The on-disk interchange format is
//! `f32`, but set metrics accumulate over hundreds of rows with hundreds of
//! dimensions, and single precision visibly drifts there.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single finite, non-empty embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_values(&values)?;
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&x| f64::from(x)).collect())
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|x| x * factor).collect())
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidVector("dimension must be at least 1".into()));
    }
    if let Some(i) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidVector(format!(
            "non-finite value {} at index {i}",
            values[i]
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    /// The vocabulary embedding table of a text encoder.
    VocabMatrix,
    /// A set of per-prompt vectors (one row per prompt).
    EmbeddingSet,
}

/// Row-major `n x d` matrix with optional unique row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Vec<f64>,
    n_rows: usize,
    dim: usize,
    labels: Option<Vec<String>>,
    kind: MatrixKind,
}

impl EmbeddingMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, kind: MatrixKind) -> Result<Self> {
        let n_rows = rows.len();
        if n_rows == 0 {
            return Err(Error::EmptySet);
        }
        let dim = rows[0].len();
        let mut data = Vec::with_capacity(n_rows * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend(row);
        }
        Self::from_flat(data, n_rows, dim, kind)
    }

    pub fn from_vectors(rows: &[EmbeddingVector], kind: MatrixKind) -> Result<Self> {
        Self::from_rows(rows.iter().map(|r| r.0.clone()).collect(), kind)
    }

    pub fn from_flat(data: Vec<f64>, n_rows: usize, dim: usize, kind: MatrixKind) -> Result<Self> {
        if n_rows == 0 {
            return Err(Error::EmptySet);
        }
        if dim == 0 {
            return Err(Error::InvalidVector("dimension must be at least 1".into()));
        }
        if data.len() != n_rows * dim {
            return Err(Error::DimMismatch {
                expected: n_rows * dim,
                found: data.len(),
            });
        }
        check_values(&data)?;
        Ok(Self {
            data,
            n_rows,
            dim,
            labels: None,
            kind,
        })
    }

    pub fn with_labels<S: Into<String>>(mut self, labels: Vec<S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() != self.n_rows {
            return Err(Error::SequenceLengthMismatch {
                left: self.n_rows,
                right: labels.len(),
            });
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_kind(mut self, kind: MatrixKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn vector(&self, i: usize) -> Result<EmbeddingVector> {
        if i >= self.n_rows {
            return Err(Error::IndexError {
                index: i,
                len: self.n_rows,
            });
        }
        Ok(EmbeddingVector(self.row(i).to_vec()))
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.as_ref()?.iter().position(|l| l == label)
    }

    pub fn vector_by_label(&self, label: &str) -> Result<EmbeddingVector> {
        let i = self.index_of(label).ok_or_else(|| Error::LabelNotFound {
            label: label.to_string(),
            step: None,
        })?;
        self.vector(i)
    }

    /// Replaces row `i` with `v`.
    pub fn set_row(&mut self, i: usize, v: &EmbeddingVector) -> Result<()> {
        if i >= self.n_rows {
            return Err(Error::IndexError {
                index: i,
                len: self.n_rows,
            });
        }
        if v.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: v.dim(),
            });
        }
        self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(v.as_slice());
        Ok(())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_rows == other.n_rows && self.dim == other.dim
    }
}

/// Encoder output for one prompt: `L` per-position vectors of equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbedding {
    positions: EmbeddingMatrix,
    pub prompt_text: Option<String>,
}

impl PromptEmbedding {
    pub fn new(positions: EmbeddingMatrix) -> Self {
        Self {
            positions: positions.with_kind(MatrixKind::EmbeddingSet),
            prompt_text: None,
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Ok(Self::new(EmbeddingMatrix::from_rows(rows, MatrixKind::EmbeddingSet)?))
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.prompt_text = Some(text.into());
        self
    }

    pub fn len(&self) -> usize {
        self.positions.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.positions.dim()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        self.positions.row(i)
    }

    pub fn positions(&self) -> &EmbeddingMatrix {
        &self.positions
    }

    pub fn into_matrix(self) -> EmbeddingMatrix {
        self.positions
    }
}

/// Embeddings captured at increasing training steps. Every frame has the same
/// shape and the same labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSeries {
    steps: Vec<u64>,
    frames: Vec<EmbeddingMatrix>,
}

impl CheckpointSeries {
    pub fn new(steps: Vec<u64>, frames: Vec<EmbeddingMatrix>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptySet);
        }
        if steps.len() != frames.len() {
            return Err(Error::SequenceLengthMismatch {
                left: steps.len(),
                right: frames.len(),
            });
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "checkpoint steps must be strictly increasing".into(),
            ));
        }
        let first = &frames[0];
        for f in &frames[1..] {
            if !f.same_shape(first) {
                return Err(Error::DimMismatch {
                    expected: first.n_rows() * first.dim(),
                    found: f.n_rows() * f.dim(),
                });
            }
            if f.labels() != first.labels() {
                return Err(Error::InvalidParameter(
                    "all checkpoints must carry identical labels".into(),
                ));
            }
        }
        Ok(Self { steps, frames })
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn frames(&self) -> &[EmbeddingMatrix] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &EmbeddingMatrix)> + '_ {
        self.steps.iter().copied().zip(self.frames.iter())
    }

    /// Applies `f` to every frame, keeping the steps.
    pub fn try_map<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(u64, &EmbeddingMatrix) -> Result<EmbeddingMatrix>,
    {
        let frames = self.iter().map(|(s, m)| f(s, m)).collect::<Result<Vec<_>>>()?;
        Self::new(self.steps.clone(), frames)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub(crate) fn slice_cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let na = norm_sq(a).sqrt();
    let nb = norm_sq(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNormVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn l2_norm(v: &EmbeddingVector) -> f64 {
    norm_sq(&v.0).sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    slice_cosine(&a.0, &b.0)
}

/// Angle in radians, in `[0, pi]`.
///
/// Equal to `acos` of the cosine similarity, but evaluated as
/// `2 atan2(|a^ - b^|, |a^ + b^|)` on the unit vectors, which keeps full
/// precision near 0 and pi where `acos` loses about half the digits.
pub fn angle_between(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    slice_angle(&a.0, &b.0)
}

pub(crate) fn slice_angle(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let na = norm_sq(a).sqrt();
    let nb = norm_sq(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNormVector);
    }
    Ok(unit_angle(a, na, b, nb))
}

/// Angle between `a / na` and `b / nb`.
pub(crate) fn unit_angle(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Returns `target_norm * v / |v|`.
pub fn rescale_to(v: &EmbeddingVector, target_norm: f64) -> Result<EmbeddingVector> {
    if !(target_norm > 0.0 && target_norm.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target norm must be positive and finite, got {target_norm}"
        )));
    }
    let n = l2_norm(v);
    if n == 0.0 {
        return Err(Error::ZeroNormVector);
    }
    let k = target_norm / n;
    EmbeddingVector::new(v.0.iter().map(|x| x * k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn v(xs: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> EmbeddingVector {
        v(&(0..d).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>())
    }

    #[test]
    fn norm_basics() {
        assert_eq!(l2_norm(&v(&[3.0, 4.0])), 5.0);
        assert_eq!(l2_norm(&EmbeddingVector::zeros(8).unwrap()), 0.0);
    }

    #[test]
    fn norm_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = random_vec(&mut rng, 97);
            let mut acc = 0.0f64;
            for i in 0..x.dim() {
                acc += x.as_slice()[i] * x.as_slice()[i];
            }
            assert_relative_eq!(l2_norm(&x), acc.sqrt(), max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(
            EmbeddingVector::new(vec![1.0, f64::NAN]),
            Err(Error::InvalidVector(_))
        ));
        assert!(matches!(
            EmbeddingVector::new(vec![f64::INFINITY]),
            Err(Error::InvalidVector(_))
        ));
        assert!(matches!(EmbeddingVector::new(vec![]), Err(Error::InvalidVector(_))));
    }

    #[test]
    fn cosine_cases() {
        let a = v(&[1.0, 2.0, 3.0]);
        assert_relative_eq!(cosine_similarity(&a, &a).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[-1.0, 0.0])).unwrap(), -1.0);
        assert!(matches!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(Error::ZeroNormVector)
        ));
        assert!(matches!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn angle_cases() {
        assert_relative_eq!(
            angle_between(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(),
            FRAC_PI_2,
            epsilon = 1e-15
        );
        let a = v(&[0.3, -1.2, 4.0]);
        assert_eq!(angle_between(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn angle_matches_oracle_cosine() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a = random_vec(&mut rng, 16);
            let b = random_vec(&mut rng, 16);
            let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
            for i in 0..16 {
                let (x, y) = (a.as_slice()[i], b.as_slice()[i]);
                ab += x * y;
                aa += x * x;
                bb += y * y;
            }
            let oracle = (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0).acos();
            assert!((angle_between(&a, &b).unwrap() - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn rescale_cases() {
        assert_eq!(rescale_to(&v(&[3.0, 4.0]), 10.0).unwrap(), v(&[6.0, 8.0]));
        let a = v(&[0.6, 0.8]);
        let r = rescale_to(&a, 1.0).unwrap();
        for (x, y) in r.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!(matches!(rescale_to(&v(&[0.0, 0.0]), 1.0), Err(Error::ZeroNormVector)));
        assert!(matches!(rescale_to(&a, 0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(rescale_to(&a, -2.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn rescale_to_beta_times_concept_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = random_vec(&mut rng, 64);
            let c = random_vec(&mut rng, 64);
            let target = 1.5 * l2_norm(&c);
            let r = rescale_to(&x, target).unwrap();
            assert_relative_eq!(l2_norm(&r), target, max_relative = 1e-9);
            assert!((cosine_similarity(&r, &x).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn matrix_labels_must_be_unique() {
        let m = EmbeddingMatrix::from_rows(vec![vec![1.0], vec![2.0]], MatrixKind::VocabMatrix).unwrap();
        assert!(matches!(
            m.clone().with_labels(vec!["a", "a"]),
            Err(Error::DuplicateLabel(_))
        ));
        let m = m.with_labels(vec!["a", "b"]).unwrap();
        assert_eq!(m.index_of("b"), Some(1));
        assert_eq!(m.vector_by_label("b").unwrap(), v(&[2.0]));
        assert!(matches!(m.vector_by_label("zz"), Err(Error::LabelNotFound { .. })));
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(matches!(
            EmbeddingMatrix::from_rows(vec![vec![1.0, 2.0], vec![1.0]], MatrixKind::EmbeddingSet),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn series_requires_increasing_steps() {
        let f = EmbeddingMatrix::from_rows(vec![vec![1.0]], MatrixKind::EmbeddingSet).unwrap();
        assert!(CheckpointSeries::new(vec![0, 0], vec![f.clone(), f.clone()]).is_err());
        assert!(CheckpointSeries::new(vec![0, 5], vec![f.clone(), f]).is_ok());
    }
}
