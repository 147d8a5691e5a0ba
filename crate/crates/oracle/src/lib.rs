//! Brute-force reference computations.
//!
//! Everything here is written as plain index loops over `Vec<Vec<f64>>`, with
//! no shared code with `realign-core`, so that agreement between the two is
//! evidence rather than tautology. Speed is irrelevant.

#![allow(clippy::needless_range_loop)]

pub type Set = Vec<Vec<f64>>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    (dot(a, b) / (norm(a) * norm(b))).clamp(-1.0, 1.0)
}

pub fn angle(a: &[f64], b: &[f64]) -> f64 {
    cosine(a, b).acos()
}

pub fn l2_inter(p: &Set, q: &Set, squared: bool) -> f64 {
    let n = p.len();
    let mut s = 0.0;
    for i in 0..n {
        let d = euclid(&p[i], &q[i]);
        s += if squared { d * d } else { d };
    }
    s / n as f64
}

pub fn l2_intra(p: &Set, squared: bool) -> f64 {
    let n = p.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = euclid(&p[i], &p[j]);
            s += if squared { d * d } else { d };
        }
    }
    s / (n * n) as f64
}

pub fn hausdorff(p: &Set, q: &Set) -> f64 {
    let directed = |a: &Set, b: &Set| {
        let mut worst: f64 = 0.0;
        for x in a {
            let mut best = f64::INFINITY;
            for y in b {
                best = best.min(euclid(x, y));
            }
            worst = worst.max(best);
        }
        worst
    };
    directed(p, q).max(directed(q, p))
}

pub fn hausdorff_intra(p: &Set) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let mut best = f64::INFINITY;
        for j in 0..p.len() {
            if i != j {
                best = best.min(euclid(&p[i], &p[j]));
            }
        }
        worst = worst.max(best);
    }
    worst
}

pub fn mean(p: &Set) -> Vec<f64> {
    let d = p[0].len();
    let mut m = vec![0.0; d];
    for row in p {
        for k in 0..d {
            m[k] += row[k];
        }
    }
    for x in &mut m {
        *x /= p.len() as f64;
    }
    m
}

/// Unbiased sample covariance.
pub fn covariance(p: &Set) -> Vec<Vec<f64>> {
    let d = p[0].len();
    let mu = mean(p);
    let mut c = vec![vec![0.0; d]; d];
    for row in p {
        for a in 0..d {
            for b in 0..d {
                c[a][b] += (row[a] - mu[a]) * (row[b] - mu[b]);
            }
        }
    }
    let denom = (p.len() - 1) as f64;
    for r in &mut c {
        for x in r.iter_mut() {
            *x /= denom;
        }
    }
    c
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for k in col..n {
                m[r][k] -= f * m[col][k];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for k in i + 1..n {
            s -= m[i][k] * x[k];
        }
        x[i] = s / m[i][i];
    }
    x
}

/// Lower-triangular `L` with `L L^T = a`.
pub fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = if i == j { s.sqrt() } else { s / l[j][j] };
        }
    }
    l
}

/// Affine image of `p` whose sample covariance is the identity: center, then
/// apply `L^-1` where `L` is the Cholesky factor of the sample covariance.
pub fn whiten_to_identity(p: &Set) -> Set {
    let l = cholesky(&covariance(p));
    let mu = mean(p);
    p.iter()
        .map(|row| {
            let c: Vec<f64> = (0..mu.len()).map(|k| row[k] - mu[k]).collect();
            let mut z = vec![0.0; c.len()];
            for i in 0..c.len() {
                let mut s = c[i];
                for k in 0..i {
                    s -= l[i][k] * z[k];
                }
                z[i] = s / l[i][i];
            }
            z
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub enum Covariance {
    /// Diagonal of the sample covariance, floored.
    Diagonal { floor: f64 },
    /// `(1 - lambda) S + lambda tr(S)/d I`.
    Shrunk { lambda: f64 },
}

pub fn regularized_covariance(reference: &Set, mode: Covariance) -> Vec<Vec<f64>> {
    let s = covariance(reference);
    let d = s.len();
    let mut out = vec![vec![0.0; d]; d];
    match mode {
        Covariance::Diagonal { floor } => {
            for k in 0..d {
                out[k][k] = s[k][k].max(floor);
            }
        }
        Covariance::Shrunk { lambda } => {
            let mut tr = 0.0;
            for k in 0..d {
                tr += s[k][k];
            }
            for a in 0..d {
                for b in 0..d {
                    out[a][b] = (1.0 - lambda) * s[a][b];
                }
                out[a][a] += lambda * tr / d as f64;
            }
        }
    }
    out
}

/// `sqrt(x^T Sigma^-1 x)` through an explicit linear solve.
pub fn mahalanobis_norm(sigma: &[Vec<f64>], x: &[f64]) -> f64 {
    let y = solve(sigma, x);
    dot(x, &y).sqrt()
}

/// Mean Mahalanobis distance of every probe to the reference set's mean.
pub fn mahalanobis_inter(probe: &Set, reference: &Set, mode: Covariance) -> f64 {
    let sigma = regularized_covariance(reference, mode);
    let mu = mean(reference);
    let mut s = 0.0;
    for x in probe {
        let c: Vec<f64> = (0..mu.len()).map(|k| x[k] - mu[k]).collect();
        s += mahalanobis_norm(&sigma, &c);
    }
    s / probe.len() as f64
}

pub fn mahalanobis_intra(p: &Set, mode: Covariance) -> f64 {
    let sigma = regularized_covariance(p, mode);
    let n = p.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c: Vec<f64> = (0..p[i].len()).map(|k| p[i][k] - p[j][k]).collect();
            s += mahalanobis_norm(&sigma, &c);
        }
    }
    s / (n * n) as f64
}

#[derive(Debug, Clone, Copy)]
pub enum Sim {
    Cosine,
    NegL2,
}

fn sim(kind: Sim, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        Sim::Cosine => cosine(a, b),
        Sim::NegL2 => -euclid(a, b),
    }
}

/// Direct `exp(s / T) / sum exp(s / T)` with no stabilization.
pub fn softmax_row(anchor: usize, s: &Set, t: f64, kind: Sim, exclude_self: bool) -> Vec<f64> {
    let mut weights = Vec::new();
    for j in 0..s.len() {
        if exclude_self && j == anchor {
            continue;
        }
        weights.push((sim(kind, &s[anchor], &s[j]) / t).exp());
    }
    let mut z = 0.0;
    for w in &weights {
        z += w;
    }
    weights.into_iter().map(|w| w / z).collect()
}

pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        if p[i] > 0.0 {
            s += p[i] * (p[i] / q[i]).ln();
        }
    }
    s
}

/// Mean over anchors of row-wise KL divergence.
pub fn kl_sets(p: &Set, q: &Set, t: f64, kind: Sim, exclude_self: bool) -> f64 {
    let n = p.len();
    let mut s = 0.0;
    for i in 0..n {
        s += kl(
            &softmax_row(i, p, t, kind, exclude_self),
            &softmax_row(i, q, t, kind, exclude_self),
        );
    }
    s / n as f64
}

/// Percentile of `values[idx]`: 1-based rank with ties averaged, over `n`.
pub fn percentile_by_sort(values: &[f64], idx: usize) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let v = values[idx];
    let first = sorted.iter().position(|&x| x == v).unwrap();
    let last = sorted.iter().rposition(|&x| x == v).unwrap();
    let rank = (first + 1 + last + 1) as f64 / 2.0;
    100.0 * rank / values.len() as f64
}
