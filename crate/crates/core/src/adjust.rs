//! Test-time embedding adjustment.
//!
//! A learned token embedding `v*` is pulled back toward its reference concept
//! `c` in two stages. Both vectors are first normalized onto the sphere of
//! radius `beta * |c|`:
//!
//! ```text
//! v~ = beta |c| v* / |v*|        c~ = beta |c| c / |c|
//! ```
//!
//! and the direction is then moved a fraction `alpha` of the way along the
//! great circle from `v~` to `c~`:
//!
//! ```text
//! v^ = sin((1 - alpha) theta) / sin(theta) * v~  +  sin(alpha theta) / sin(theta) * c~
//! ```
//!
//! with `theta` the angle between the two. `alpha = 0` keeps the learned
//! direction, `alpha = 1` lands exactly on the concept direction.
//!
//! For encoders where the token table is frozen (DreamBooth-style
//! fine-tuning), the same rule is applied independently to every position of
//! the encoded prompt, using the matching position of the prompt with the
//! concept word substituted in.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::embedding::{norm_sq, unit_angle, EmbeddingMatrix, EmbeddingVector, PromptEmbedding};
use crate::error::{Error, Result};

/// Norm below which a prompt position is treated as degenerate.
pub const ZERO_NORM_THRESHOLD: f64 = 1e-12;

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_BETA: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroNormPolicy {
    Error,
    /// Copy the learned vector through unchanged.
    #[default]
    Passthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustParams {
    /// Rotation factor in `[0, 1]`.
    pub alpha: f64,
    /// Target norm as a multiple of the concept norm.
    pub beta: f64,
    /// Below this angle (radians) SLERP degenerates to normalized LERP.
    pub parallel_tolerance: f64,
    /// Inputs closer than this to antipodal are rejected.
    pub antipodal_tolerance: f64,
    pub zero_norm_policy: ZeroNormPolicy,
}

impl Default for AdjustParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            parallel_tolerance: 1e-7,
            antipodal_tolerance: 1e-6,
            zero_norm_policy: ZeroNormPolicy::Passthrough,
        }
    }
}

impl AdjustParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_zero_norm_policy(mut self, policy: ZeroNormPolicy) -> Self {
        self.zero_norm_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.parallel_tolerance > 0.0 && self.antipodal_tolerance > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Adjusts a single learned token embedding toward its concept embedding.
pub fn adjust_token(v_star: &EmbeddingVector, c: &EmbeddingVector, params: &AdjustParams) -> Result<EmbeddingVector> {
    params.validate()?;
    let out = adjust_slice(v_star.as_slice(), c.as_slice(), params)?;
    EmbeddingVector::new(out)
}

fn adjust_slice(v_star: &[f64], c: &[f64], params: &AdjustParams) -> Result<Vec<f64>> {
    if v_star.len() != c.len() {
        return Err(Error::DimMismatch {
            expected: v_star.len(),
            found: c.len(),
        });
    }
    let nv = norm_sq(v_star).sqrt();
    let nc = norm_sq(c).sqrt();
    if nv < ZERO_NORM_THRESHOLD || nc < ZERO_NORM_THRESHOLD {
        return match params.zero_norm_policy {
            ZeroNormPolicy::Error => Err(Error::ZeroNormVector),
            ZeroNormPolicy::Passthrough => Ok(v_star.to_vec()),
        };
    }

    let radius = params.beta * nc;
    let theta = unit_angle(v_star, nv, c, nc);
    if theta > PI - params.antipodal_tolerance {
        return Err(Error::AntipodalVectors { angle: theta });
    }

    let alpha = params.alpha;
    if theta < params.parallel_tolerance {
        // sin(theta) is too small to divide by; interpolate the unit vectors
        // linearly and project back onto the sphere.
        let mut dir: Vec<f64> = v_star
            .iter()
            .zip(c)
            .map(|(a, b)| (1.0 - alpha) * a / nv + alpha * b / nc)
            .collect();
        let n = norm_sq(&dir).sqrt();
        let k = radius / n;
        dir.iter_mut().for_each(|x| *x *= k);
        return Ok(dir);
    }

    let sin_theta = theta.sin();
    let w_star = ((1.0 - alpha) * theta).sin() / sin_theta * radius / nv;
    let w_c = (alpha * theta).sin() / sin_theta * radius / nc;
    Ok(v_star.iter().zip(c).map(|(a, b)| w_star * a + w_c * b).collect())
}

/// Adjusts every position of an encoded prompt toward the matching position
/// of the concept prompt. Each position gets its own target radius
/// `beta * |p_c[i]|`.
///
/// Degenerate positions (norm below [`ZERO_NORM_THRESHOLD`]) follow
/// `params.zero_norm_policy`. Failures at individual positions are collected
/// and reported together with their indices.
pub fn adjust_prompt(
    p_star: &PromptEmbedding,
    p_c: &PromptEmbedding,
    params: &AdjustParams,
) -> Result<PromptEmbedding> {
    params.validate()?;
    if p_star.len() != p_c.len() {
        return Err(Error::SequenceLengthMismatch {
            left: p_star.len(),
            right: p_c.len(),
        });
    }
    if p_star.dim() != p_c.dim() {
        return Err(Error::DimMismatch {
            expected: p_star.dim(),
            found: p_c.dim(),
        });
    }

    let mut data = Vec::with_capacity(p_star.len() * p_star.dim());
    let mut failures = Vec::new();
    for i in 0..p_star.len() {
        match adjust_slice(p_star.position(i), p_c.position(i), params) {
            Ok(row) => data.extend(row),
            Err(e) => failures.push((i, e)),
        }
    }
    if !failures.is_empty() {
        return Err(Error::PositionErrors(failures));
    }

    let m = EmbeddingMatrix::from_flat(data, p_star.len(), p_star.dim(), p_star.positions().kind())?;
    let m = match p_star.positions().labels() {
        Some(l) => m.with_labels(l.to_vec())?,
        None => m,
    };
    let mut out = PromptEmbedding::new(m);
    out.prompt_text = p_star.prompt_text.clone();
    Ok(out)
}

/// The midpoint heuristic for `beta`: the norm halfway between `|c|` and
/// `|v*|`, expressed relative to `|c|`.
pub fn beta_heuristic(v_star: &EmbeddingVector, c: &EmbeddingVector) -> Result<f64> {
    let nv = norm_sq(v_star.as_slice()).sqrt();
    let nc = norm_sq(c.as_slice()).sqrt();
    if nv == 0.0 || nc == 0.0 {
        return Err(Error::ZeroNormVector);
    }
    Ok((nv + nc) / (2.0 * nc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{angle_between, cosine_similarity, l2_norm, rescale_to};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn v(xs: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> EmbeddingVector {
        v(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
    }

    fn params(alpha: f64, beta: f64) -> AdjustParams {
        AdjustParams::new(alpha, beta).unwrap()
    }

    fn assert_close(a: &EmbeddingVector, b: &EmbeddingVector, tol: f64) {
        let scale = l2_norm(b).max(1.0);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= tol * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn alpha_zero_is_rescaled_learned_vector() {
        let vs = v(&[2.0, 1.0, -0.5]);
        let c = v(&[0.3, 0.9, 0.1]);
        let out = adjust_token(&vs, &c, &params(0.0, 1.5)).unwrap();
        let expected = rescale_to(&vs, 1.5 * l2_norm(&c)).unwrap();
        assert_close(&out, &expected, 1e-12);
    }

    #[test]
    fn alpha_one_is_rescaled_concept() {
        let vs = v(&[2.0, 1.0, -0.5]);
        let c = v(&[0.3, 0.9, 0.1]);
        let out = adjust_token(&vs, &c, &params(1.0, 1.5)).unwrap();
        let expected = c.scaled(1.5).unwrap();
        assert_close(&out, &expected, 1e-12);
    }

    #[test]
    fn orthogonal_midpoint() {
        let out = adjust_token(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &params(0.5, 1.0)).unwrap();
        assert_relative_eq!(out.as_slice()[0], FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_relative_eq!(out.as_slice()[1], FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn high_dim_angle_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let vs = random_vec(&mut rng, 768);
        let c = random_vec(&mut rng, 768);
        let theta = angle_between(&vs, &c).unwrap();
        let out = adjust_token(&vs, &c, &params(0.2, 1.5)).unwrap();
        assert!((angle_between(&out, &c).unwrap() - 0.8 * theta).abs() < 1e-7);
        assert!((angle_between(&out, &vs).unwrap() - 0.2 * theta).abs() < 1e-7);
        assert_relative_eq!(l2_norm(&out), 1.5 * l2_norm(&c), max_relative = 1e-9);
    }

    #[test]
    fn near_parallel_falls_back_to_lerp() {
        let c = v(&[1.0, 0.0, 0.0]);
        let vs = v(&[3.0, 1e-9, 0.0]);
        let p = params(0.4, 2.0);
        let out = adjust_token(&vs, &c, &p).unwrap();
        assert_relative_eq!(l2_norm(&out), 2.0, max_relative = 1e-12);
        let u: Vec<f64> = vs.as_slice().iter().map(|x| x / l2_norm(&vs)).collect();
        let lerp = v(&u
            .iter()
            .zip(c.as_slice())
            .map(|(a, b)| 0.6 * a + 0.4 * b)
            .collect::<Vec<_>>());
        assert!((cosine_similarity(&out, &lerp).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_inputs() {
        let c = v(&[0.5, -0.5, 2.0]);
        let out = adjust_token(&c, &c, &params(0.3, 1.0)).unwrap();
        assert_close(&out, &c, 1e-12);
    }

    #[test]
    fn antipodal_rejected() {
        let r = adjust_token(&v(&[1.0, 0.0]), &v(&[-2.0, 0.0]), &params(0.5, 1.0));
        assert!(matches!(r, Err(Error::AntipodalVectors { .. })));
    }

    #[test]
    fn dim_mismatch_rejected() {
        let r = adjust_token(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0]), &params(0.5, 1.0));
        assert!(matches!(r, Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn zero_norm_policies() {
        let z = v(&[0.0, 0.0]);
        let c = v(&[1.0, 1.0]);
        let strict = params(0.5, 1.0).with_zero_norm_policy(ZeroNormPolicy::Error);
        assert!(matches!(adjust_token(&z, &c, &strict), Err(Error::ZeroNormVector)));
        assert!(matches!(adjust_token(&c, &z, &strict), Err(Error::ZeroNormVector)));
        let loose = params(0.5, 1.0).with_zero_norm_policy(ZeroNormPolicy::Passthrough);
        assert_eq!(adjust_token(&c, &z, &loose).unwrap(), c);
    }

    #[test]
    fn invalid_params() {
        assert!(AdjustParams::new(1.5, 1.0).is_err());
        assert!(AdjustParams::new(-0.1, 1.0).is_err());
        assert!(AdjustParams::new(0.5, 0.0).is_err());
        assert!(AdjustParams::new(0.5, f64::NAN).is_err());
    }

    #[test]
    fn defaults() {
        let p = AdjustParams::default();
        assert_eq!((p.alpha, p.beta), (0.2, 1.5));
        assert_eq!(p.zero_norm_policy, ZeroNormPolicy::Passthrough);
    }

    #[test]
    fn prompt_alpha_zero_at_target_norm_is_identity() {
        let pc = PromptEmbedding::from_rows(vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 4.0]]).unwrap();
        // same norms as pc, different directions
        let ps = PromptEmbedding::from_rows(vec![vec![0.0, 1.0], vec![2.0, 0.0], vec![4.0, 3.0]]).unwrap();
        let out = adjust_prompt(&ps, &pc, &params(0.0, 1.0)).unwrap();
        for i in 0..3 {
            for (a, b) in out.position(i).iter().zip(ps.position(i)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn prompt_alpha_one_hits_concept_positions() {
        let pc = PromptEmbedding::from_rows(vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let ps = PromptEmbedding::from_rows(vec![vec![1.0, 1.0], vec![-2.0, 5.0], vec![0.1, 0.2]]).unwrap();
        let out = adjust_prompt(&ps, &pc, &params(1.0, 2.0)).unwrap();
        for i in 0..3 {
            for (a, b) in out.position(i).iter().zip(pc.position(i)) {
                assert!((a - 2.0 * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn prompt_per_position_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows = |rng: &mut ChaCha8Rng| {
            (0..77)
                .map(|_| (0..768).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect::<Vec<Vec<f64>>>()
        };
        let ps = PromptEmbedding::from_rows(rows(&mut rng)).unwrap();
        let pc = PromptEmbedding::from_rows(rows(&mut rng)).unwrap();
        let out = adjust_prompt(&ps, &pc, &params(0.2, 1.5)).unwrap();
        for i in 0..77 {
            let target = 1.5 * norm_sq(pc.position(i)).sqrt();
            assert_relative_eq!(norm_sq(out.position(i)).sqrt(), target, max_relative = 1e-9);
        }
    }

    #[test]
    fn prompt_zero_positions() {
        let pc = PromptEmbedding::from_rows(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let ps = PromptEmbedding::from_rows(vec![vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let out = adjust_prompt(&ps, &pc, &params(0.5, 1.0)).unwrap();
        assert_eq!(out.position(1), ps.position(1));

        let strict = params(0.5, 1.0).with_zero_norm_policy(ZeroNormPolicy::Error);
        match adjust_prompt(&ps, &pc, &strict) {
            Err(Error::PositionErrors(errs)) => {
                assert_eq!(errs.len(), 1);
                assert_eq!(errs[0].0, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn prompt_length_mismatch() {
        let a = PromptEmbedding::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let b = PromptEmbedding::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            adjust_prompt(&a, &b, &AdjustParams::default()),
            Err(Error::SequenceLengthMismatch { .. })
        ));
    }

    #[test]
    fn beta_heuristic_values() {
        let c = v(&[3.0, 4.0]);
        assert_eq!(beta_heuristic(&v(&[6.0, 8.0]), &c).unwrap(), 1.5);
        assert_eq!(beta_heuristic(&v(&[0.0, 5.0]), &c).unwrap(), 1.0);
        assert!(matches!(
            beta_heuristic(&v(&[0.0, 0.0]), &c),
            Err(Error::ZeroNormVector)
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_vec(&mut rng, 10);
            let b = random_vec(&mut rng, 10);
            let na: f64 = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((beta_heuristic(&a, &b).unwrap() - (na + nb) / (2.0 * nb)).abs() < 1e-12);
        }
    }
}
