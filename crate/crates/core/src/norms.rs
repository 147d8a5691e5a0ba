//! Vocabulary norm distribution and drift trajectories.
//!
//! A learned token that has drifted far from its initial concept typically
//! ends up with a norm far in the tail of the vocabulary's norm distribution.
//! [`norm_histogram`] places chosen tokens within that distribution, and the
//! trajectory functions follow magnitude and direction across checkpoints.

use serde::{Deserialize, Serialize};

use crate::embedding::{dist_sq, norm_sq, slice_cosine, CheckpointSeries, EmbeddingMatrix, MatrixKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightedToken {
    pub label: String,
    pub norm: f64,
    /// Percentile rank in `[0, 100]`.
    pub percentile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub highlighted: Vec<HighlightedToken>,
}

impl NormHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistogramOptions {
    pub bins: usize,
    /// Leave the highlighted rows out of the bin counts. Percentiles are
    /// always computed against the full vocabulary.
    pub exclude_highlighted: bool,
}

impl HistogramOptions {
    pub fn bins(bins: usize) -> Self {
        Self {
            bins,
            exclude_highlighted: false,
        }
    }
}

/// Percentile rank of `value` among `sorted` (ascending): the 1-based rank,
/// with ties sharing their average rank, divided by the population size.
pub fn percentile_rank(sorted: &[f64], value: f64) -> f64 {
    let less = sorted.partition_point(|&x| x < value);
    let less_eq = sorted.partition_point(|&x| x <= value);
    let equal = less_eq - less;
    let rank = less as f64 + (equal as f64 + 1.0) / 2.0;
    100.0 * rank / sorted.len() as f64
}

pub fn norm_histogram(m: &EmbeddingMatrix, highlight: &[&str], bins: usize) -> Result<NormHistogram> {
    norm_histogram_with(m, highlight, HistogramOptions::bins(bins))
}

pub fn norm_histogram_with(m: &EmbeddingMatrix, highlight: &[&str], opts: HistogramOptions) -> Result<NormHistogram> {
    if m.kind() != MatrixKind::VocabMatrix {
        return Err(Error::InvalidParameter(
            "norm histogram expects a vocabulary matrix".into(),
        ));
    }
    if opts.bins == 0 {
        return Err(Error::InvalidParameter("bins must be at least 1".into()));
    }

    let norms: Vec<f64> = m.rows().map(|r| norm_sq(r).sqrt()).collect();
    let highlight_idx = highlight
        .iter()
        .map(|&l| {
            m.index_of(l).ok_or_else(|| Error::LabelNotFound {
                label: l.to_string(),
                step: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sorted = norms.clone();
    sorted.sort_by(f64::total_cmp);
    let highlighted = highlight
        .iter()
        .zip(&highlight_idx)
        .map(|(&label, &i)| HighlightedToken {
            label: label.to_string(),
            norm: norms[i],
            percentile: percentile_rank(&sorted, norms[i]),
        })
        .collect();

    let (mut lo, mut hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / opts.bins as f64;
    let mut bin_edges: Vec<f64> = (0..opts.bins).map(|b| lo + width * b as f64).collect();
    bin_edges.push(hi);

    let mut counts = vec![0u64; opts.bins];
    for (i, &x) in norms.iter().enumerate() {
        if opts.exclude_highlighted && highlight_idx.contains(&i) {
            continue;
        }
        let b = (((x - lo) / width) as usize).min(opts.bins - 1);
        counts[b] += 1;
    }
    Ok(NormHistogram {
        bin_edges,
        counts,
        highlighted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryLevel {
    Token,
    Prompt,
}

/// Per-checkpoint magnitude and direction of a learned embedding relative to
/// its reference.
///
/// At token level `norm_ratio` is `|v*(t)| / |c(t)|`; at prompt level it is
/// the Frobenius norm of the difference between the two encoded prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTrajectory {
    pub level: TrajectoryLevel,
    pub steps: Vec<u64>,
    pub norm_ratio: Vec<f64>,
    pub cosine: Vec<f64>,
}

impl DriftTrajectory {
    pub fn empty(level: TrajectoryLevel) -> Self {
        Self {
            level,
            steps: Vec::new(),
            norm_ratio: Vec::new(),
            cosine: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

pub fn token_trajectory(series: &CheckpointSeries, v_star_label: &str, c_label: &str) -> Result<DriftTrajectory> {
    let mut out = DriftTrajectory::empty(TrajectoryLevel::Token);
    for (step, frame) in series.iter() {
        let find = |label: &str| {
            frame.index_of(label).ok_or_else(|| Error::LabelNotFound {
                label: label.to_string(),
                step: Some(step),
            })
        };
        let v = frame.row(find(v_star_label)?);
        let c = frame.row(find(c_label)?);
        let nc = norm_sq(c).sqrt();
        if nc == 0.0 {
            return Err(Error::ZeroNormVector);
        }
        out.steps.push(step);
        out.norm_ratio.push(norm_sq(v).sqrt() / nc);
        out.cosine.push(slice_cosine(v, c)?);
    }
    Ok(out)
}

/// Prompt-level drift between a drifting series and its reference series.
/// Positions where either side is the zero vector are left out of the mean
/// cosine.
pub fn prompt_trajectory(series_star: &CheckpointSeries, series_c: &CheckpointSeries) -> Result<DriftTrajectory> {
    if series_star.len() != series_c.len() {
        return Err(Error::SequenceLengthMismatch {
            left: series_star.len(),
            right: series_c.len(),
        });
    }
    if series_star.steps() != series_c.steps() {
        return Err(Error::StepMismatch);
    }
    let (a0, b0) = (&series_star.frames()[0], &series_c.frames()[0]);
    if a0.n_rows() != b0.n_rows() {
        return Err(Error::SequenceLengthMismatch {
            left: a0.n_rows(),
            right: b0.n_rows(),
        });
    }
    if a0.dim() != b0.dim() {
        return Err(Error::DimMismatch {
            expected: a0.dim(),
            found: b0.dim(),
        });
    }

    let mut out = DriftTrajectory::empty(TrajectoryLevel::Prompt);
    for ((step, a), b) in series_star.iter().zip(series_c.frames()) {
        let diff: f64 = a.rows().zip(b.rows()).map(|(x, y)| dist_sq(x, y)).sum();
        let mut cos_sum = 0.0;
        let mut counted = 0usize;
        for (x, y) in a.rows().zip(b.rows()) {
            match slice_cosine(x, y) {
                Ok(c) => {
                    cos_sum += c;
                    counted += 1;
                }
                Err(Error::ZeroNormVector) => {}
                Err(e) => return Err(e),
            }
        }
        if counted == 0 {
            return Err(Error::ZeroNormVector);
        }
        out.steps.push(step);
        out.norm_ratio.push(diff.sqrt());
        out.cosine.push(cos_sum / counted as f64);
    }
    Ok(out)
}
