//! Synthetic drift trajectories.
//!
//! Unconstrained optimisation of a personalized token pushes its embedding
//! away from the concept it was initialised from, growing its norm and
//! rotating its direction. This module reproduces that phenomenology with
//! known parameters so every downstream metric has a closed-form expectation:
//!
//! ```text
//! v(t) = (1 + gamma t) (cos phi(t) base + sin phi(t) |base| u) + noise
//! phi(t) = min(phi_max, omega t)
//! ```
//!
//! where `u` is a seeded unit vector orthogonal to `base`, so the rotation
//! stays in the fixed plane `span{base, u}`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::embedding::{dot, norm_sq, CheckpointSeries, EmbeddingMatrix, EmbeddingVector, MatrixKind};
use crate::error::{Error, Result};

/// Label of the drifting row in token-level simulations.
pub const DRIFT_LABEL: &str = "v_star";
/// Label of the static reference row in token-level simulations.
pub const REFERENCE_LABEL: &str = "concept";

/// Hard ceiling on the rotation angle; keeps the result away from antipodal.
pub const ANGLE_CEILING: f64 = PI - 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    pub base: EmbeddingVector,
    /// Number of training steps; checkpoints are taken at `0..=steps`.
    pub steps: usize,
    pub norm_growth: f64,
    pub rotation_rate: f64,
    pub max_angle: f64,
    pub plane_seed: u64,
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl DriftSpec {
    pub fn new(base: EmbeddingVector, steps: usize, norm_growth: f64, rotation_rate: f64) -> Self {
        Self {
            base,
            steps,
            norm_growth,
            rotation_rate,
            max_angle: ANGLE_CEILING,
            plane_seed: 0,
            noise_sigma: 0.0,
            noise_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        for (name, x) in [
            ("norm_growth", self.norm_growth),
            ("rotation_rate", self.rotation_rate),
            ("max_angle", self.max_angle),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !x.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if self.scale(self.steps) <= 0.0 || self.scale(0) <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "norm scale 1 + {} t must stay positive up to t = {}",
                self.norm_growth, self.steps
            )));
        }
        if self.max_angle < 0.0 {
            return Err(Error::InvalidParameter("max_angle must be non-negative".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidParameter("noise_sigma must be non-negative".into()));
        }
        if norm_sq(self.base.as_slice()) == 0.0 {
            return Err(Error::ZeroNormVector);
        }
        if self.base.dim() < 2 && self.rotation_rate != 0.0 {
            return Err(Error::InvalidParameter("rotation needs at least two dimensions".into()));
        }
        Ok(())
    }

    pub fn scale(&self, t: usize) -> f64 {
        1.0 + self.norm_growth * t as f64
    }

    fn angle_limit(&self) -> f64 {
        self.max_angle.min(ANGLE_CEILING)
    }

    /// Rotation angle at step `t`, after clamping.
    pub fn angle(&self, t: usize) -> f64 {
        (self.rotation_rate * t as f64).min(self.angle_limit())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub series: CheckpointSeries,
    /// `phi(t)` for every checkpoint.
    pub angles: Vec<f64>,
    pub notes: Vec<String>,
}

/// Unit vector orthogonal to `base`, drawn from a seeded Gaussian.
fn orthogonal_direction(base: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = base.len();
    if d < 2 {
        return vec![0.0; d];
    }
    let nb = norm_sq(base).sqrt();
    let unit: Vec<f64> = base.iter().map(|x| x / nb).collect();
    loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let proj = dot(&g, &unit);
        let mut u: Vec<f64> = g.iter().zip(&unit).map(|(a, b)| a - proj * b).collect();
        // re-orthogonalise once more against cancellation
        let proj = dot(&u, &unit);
        u.iter_mut().zip(&unit).for_each(|(a, b)| *a -= proj * b);
        let n = norm_sq(&u).sqrt();
        if n > 1e-8 {
            return u.into_iter().map(|x| x / n).collect();
        }
    }
}

struct Drifter<'a> {
    base: &'a [f64],
    base_norm: f64,
    ortho: Vec<f64>,
}

impl Drifter<'_> {
    fn at(&self, scale: f64, phi: f64) -> Vec<f64> {
        let (s, c) = phi.sin_cos();
        self.base
            .iter()
            .zip(&self.ortho)
            .map(|(b, u)| scale * (c * b + s * self.base_norm * u))
            .collect()
    }
}

fn add_noise(v: &mut [f64], noise: &Option<Normal<f64>>, rng: &mut ChaCha8Rng) {
    if let Some(dist) = noise {
        v.iter_mut().for_each(|x| *x += dist.sample(rng));
    }
}

fn make_noise(spec: &DriftSpec) -> Result<Option<Normal<f64>>> {
    if spec.noise_sigma == 0.0 {
        return Ok(None);
    }
    Normal::new(0.0, spec.noise_sigma)
        .map(Some)
        .map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn clamp_notes(spec: &DriftSpec) -> Vec<String> {
    let unclamped = spec.rotation_rate * spec.steps as f64;
    if unclamped > spec.angle_limit() {
        let first = (0..=spec.steps)
            .find(|&t| spec.rotation_rate * t as f64 > spec.angle_limit())
            .unwrap_or(spec.steps);
        vec![format!(
            "rotation angle clamped to {:.6} rad from step {first}",
            spec.angle_limit()
        )]
    } else {
        Vec::new()
    }
}

/// Token-level drift: each checkpoint holds two labelled rows, the drifting
/// vector ([`DRIFT_LABEL`]) and the untouched base ([`REFERENCE_LABEL`]).
pub fn simulate_token(spec: &DriftSpec) -> Result<Simulation> {
    spec.validate()?;
    let base = spec.base.as_slice();
    let mut plane_rng = ChaCha8Rng::seed_from_u64(spec.plane_seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
    let noise = make_noise(spec)?;
    let drifter = Drifter {
        base,
        base_norm: norm_sq(base).sqrt(),
        ortho: orthogonal_direction(base, &mut plane_rng),
    };

    let mut frames = Vec::with_capacity(spec.steps + 1);
    let mut angles = Vec::with_capacity(spec.steps + 1);
    for t in 0..=spec.steps {
        let phi = spec.angle(t);
        let mut v = drifter.at(spec.scale(t), phi);
        add_noise(&mut v, &noise, &mut noise_rng);
        let frame = EmbeddingMatrix::from_rows(vec![v, base.to_vec()], MatrixKind::EmbeddingSet)?
            .with_labels(vec![DRIFT_LABEL, REFERENCE_LABEL])?;
        frames.push(frame);
        angles.push(phi);
    }
    Ok(Simulation {
        series: CheckpointSeries::new((0..=spec.steps as u64).collect(), frames)?,
        angles,
        notes: clamp_notes(spec),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSimulation {
    /// Sequence in which the selected positions drift.
    pub drifting: CheckpointSeries,
    /// The same sequence held fixed at every checkpoint.
    pub reference: CheckpointSeries,
    pub angles: Vec<f64>,
    pub notes: Vec<String>,
}

/// Prompt-level drift over an `L`-position sequence. Position 0 is
/// `spec.base`; the remaining positions are seeded Gaussian vectors of the
/// same norm. Each drifting position rotates in its own seeded plane by the
/// shared angle `phi(t)` and is scaled by the shared `1 + gamma t`.
pub fn simulate_prompt(spec: &DriftSpec, len: usize, drift_positions: &[usize]) -> Result<PromptSimulation> {
    spec.validate()?;
    if len == 0 {
        return Err(Error::InvalidParameter("sequence length must be at least 1".into()));
    }
    if let Some(&bad) = drift_positions.iter().find(|&&p| p >= len) {
        return Err(Error::IndexError { index: bad, len });
    }

    let d = spec.base.dim();
    let base_norm = norm_sq(spec.base.as_slice()).sqrt();
    let mut plane_rng = ChaCha8Rng::seed_from_u64(spec.plane_seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
    let noise = make_noise(spec)?;

    let mut positions: Vec<Vec<f64>> = Vec::with_capacity(len);
    positions.push(spec.base.as_slice().to_vec());
    for _ in 1..len {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut plane_rng)).collect();
        let k = base_norm / norm_sq(&g).sqrt();
        positions.push(g.into_iter().map(|x| x * k).collect());
    }
    let mut drifting_mask = vec![false; len];
    drift_positions.iter().for_each(|&p| drifting_mask[p] = true);
    let drifters: Vec<Option<Drifter>> = positions
        .iter()
        .zip(&drifting_mask)
        .map(|(p, &drift)| {
            drift.then(|| Drifter {
                base: p,
                base_norm: norm_sq(p).sqrt(),
                ortho: orthogonal_direction(p, &mut plane_rng),
            })
        })
        .collect();

    let labels: Vec<String> = (0..len).map(|i| format!("pos{i}")).collect();
    let reference_frame =
        EmbeddingMatrix::from_rows(positions.clone(), MatrixKind::EmbeddingSet)?.with_labels(labels.clone())?;

    let mut frames = Vec::with_capacity(spec.steps + 1);
    let mut angles = Vec::with_capacity(spec.steps + 1);
    for t in 0..=spec.steps {
        let phi = spec.angle(t);
        let scale = spec.scale(t);
        let rows = positions
            .iter()
            .zip(&drifters)
            .map(|(p, drifter)| match drifter {
                Some(dr) => {
                    let mut v = dr.at(scale, phi);
                    add_noise(&mut v, &noise, &mut noise_rng);
                    v
                }
                None => p.clone(),
            })
            .collect();
        frames.push(EmbeddingMatrix::from_rows(rows, MatrixKind::EmbeddingSet)?.with_labels(labels.clone())?);
        angles.push(phi);
    }

    let steps: Vec<u64> = (0..=spec.steps as u64).collect();
    Ok(PromptSimulation {
        drifting: CheckpointSeries::new(steps.clone(), frames)?,
        reference: CheckpointSeries::new(steps, vec![reference_frame; spec.steps + 1])?,
        angles,
        notes: clamp_notes(spec),
    })
}

/// Seeded standard-normal vector, used as a starting embedding.
pub fn gaussian_base(dim: usize, seed: u64) -> Result<EmbeddingVector> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dim must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EmbeddingVector::new((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::{prompt_trajectory, token_trajectory};
    use rand::Rng;

    fn random_base(seed: u64, d: usize) -> EmbeddingVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingVector::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn gaussian_base_is_seeded() {
        assert_eq!(gaussian_base(16, 3).unwrap(), gaussian_base(16, 3).unwrap());
        assert_ne!(gaussian_base(16, 3).unwrap(), gaussian_base(16, 4).unwrap());
        assert!(gaussian_base(0, 3).is_err());
    }

    #[test]
    fn static_spec_repeats_base() {
        let spec = DriftSpec::new(random_base(1, 8), 4, 0.0, 0.0);
        let sim = simulate_token(&spec).unwrap();
        for frame in sim.series.frames() {
            assert_eq!(frame.row(0), spec.base.as_slice());
        }
    }

    #[test]
    fn first_checkpoint_is_base_exactly() {
        let spec = DriftSpec::new(random_base(2, 16), 3, 0.3, 0.2);
        let sim = simulate_token(&spec).unwrap();
        assert_eq!(sim.series.frames()[0].row(0), spec.base.as_slice());
    }

    #[test]
    fn linear_norm_growth() {
        let spec = DriftSpec::new(random_base(3, 12), 5, 0.1, 0.0);
        let t = token_trajectory(&simulate_token(&spec).unwrap().series, DRIFT_LABEL, REFERENCE_LABEL).unwrap();
        let expected = [1.0, 1.1, 1.2, 1.3, 1.4, 1.5];
        for (r, e) in t.norm_ratio.iter().zip(expected) {
            assert!((r - e).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_rotation_rate() {
        let spec = DriftSpec::new(random_base(4, 32), 10, 0.0, 0.05);
        let t = token_trajectory(&simulate_token(&spec).unwrap().series, DRIFT_LABEL, REFERENCE_LABEL).unwrap();
        for (i, c) in t.cosine.iter().enumerate() {
            assert!((c - (0.05 * i as f64).cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn angle_is_clamped_and_noted() {
        let spec = DriftSpec::new(random_base(5, 4), 10, 0.0, 1.0);
        let sim = simulate_token(&spec).unwrap();
        assert_eq!(*sim.angles.last().unwrap(), ANGLE_CEILING);
        assert_eq!(sim.notes.len(), 1);
        let mut capped = DriftSpec::new(random_base(5, 4), 10, 0.0, 0.1);
        capped.max_angle = 0.5;
        let sim = simulate_token(&capped).unwrap();
        assert_eq!(sim.angles[10], 0.5);
        assert_eq!(sim.angles[3], 0.1 * 3.0);
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let mut spec = DriftSpec::new(random_base(6, 8), 3, 0.1, 0.1);
        spec.noise_sigma = 0.01;
        spec.noise_seed = 42;
        assert_eq!(simulate_token(&spec).unwrap(), simulate_token(&spec).unwrap());
        let mut other = spec.clone();
        other.noise_seed = 43;
        assert_ne!(simulate_token(&spec).unwrap(), simulate_token(&other).unwrap());
    }

    #[test]
    fn invalid_specs() {
        assert!(simulate_token(&DriftSpec::new(random_base(7, 4), 0, 0.0, 0.0)).is_err());
        assert!(simulate_token(&DriftSpec::new(random_base(7, 4), 10, -0.2, 0.0)).is_err());
        assert!(simulate_token(&DriftSpec::new(EmbeddingVector::zeros(4).unwrap(), 3, 0.0, 0.0)).is_err());
        assert!(simulate_token(&DriftSpec::new(random_base(7, 1), 3, 0.0, 0.1)).is_err());
    }

    #[test]
    fn prompt_without_drift_positions_is_static() {
        let spec = DriftSpec::new(random_base(8, 6), 4, 0.2, 0.1);
        let sim = simulate_prompt(&spec, 5, &[]).unwrap();
        assert_eq!(sim.drifting, sim.reference);
    }

    #[test]
    fn prompt_position_out_of_range() {
        let spec = DriftSpec::new(random_base(9, 6), 4, 0.2, 0.1);
        assert!(matches!(
            simulate_prompt(&spec, 5, &[5]),
            Err(Error::IndexError { index: 5, len: 5 })
        ));
    }

    #[test]
    fn single_drifting_position_carries_whole_difference() {
        let spec = DriftSpec::new(random_base(10, 16), 6, 0.1, 0.07);
        let sim = simulate_prompt(&spec, 4, &[2]).unwrap();
        let traj = prompt_trajectory(&sim.drifting, &sim.reference).unwrap();
        for (t, frame) in sim.drifting.frames().iter().enumerate() {
            let r = sim.reference.frames()[t].row(2);
            let token_diff = crate::embedding::dist_sq(frame.row(2), r).sqrt();
            assert!((traj.norm_ratio[t] - token_diff).abs() < 1e-9);
        }
    }

    #[test]
    fn all_positions_share_angle() {
        let spec = DriftSpec::new(random_base(11, 24), 8, 0.05, 0.03);
        let sim = simulate_prompt(&spec, 6, &[0, 1, 2, 3, 4, 5]).unwrap();
        let traj = prompt_trajectory(&sim.drifting, &sim.reference).unwrap();
        for (t, c) in traj.cosine.iter().enumerate() {
            assert!((c - sim.angles[t].cos()).abs() < 1e-9);
        }
        assert!(traj.norm_ratio.windows(2).all(|w| w[0] < w[1]));
    }
}
