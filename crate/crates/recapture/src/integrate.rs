//! Numerical evaluation of the probability that an individual is never
//! observed during the study.
//!
//! For the logit-normal model the integral is taken against the standard
//! Gaussian weight and evaluated with Gauss-Hermite quadrature,
//!
//!   1 - p* ~= sum_j w_j / (sqrt(pi) * [1 + exp(sqrt(2) sigma v_j + alpha)]^T),
//!
//! where (v_j, w_j) are the nodes and weights for the physicists' weight
//! exp(-v^2). For the spatial model the integral over activity centres is a
//! summation over the habitat mask. Slow brute-force oracles are provided
//! for both routes.

use crate::error::{Error, Result};
use crate::model::SurveyGeometry;

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Gauss-Hermite nodes and weights for the weight function exp(-v^2).
/// Nodes are strictly increasing and symmetric about zero; the weights sum
/// to sqrt(pi).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integral of f against exp(-v^2) over the real line.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| w * f(v))
            .sum()
    }
}

/// Orthonormal Hermite values at z: returns (h_q(z), h_{q-1}(z)).
fn hermite_pair(q: usize, z: f64) -> (f64, f64) {
    let mut p1 = std::f64::consts::PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=q {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

/// Number of Hermite roots (eigenvalues of the Jacobi matrix, with zero
/// diagonal and off-diagonals sqrt(j/2)) strictly below x, by the Sturm
/// LDL^T sign count.
fn roots_below(q: usize, x: f64) -> usize {
    let mut count = 0usize;
    let mut d = -x;
    if d < 0.0 {
        count += 1;
    }
    for j in 1..q {
        if d == 0.0 {
            d = 1e-300;
        }
        d = -x - (j as f64 / 2.0) / d;
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Build a Gauss-Hermite rule of the given order. Each root of H_q is
/// bracketed by Sturm-count bisection on the Jacobi matrix and polished by
/// Newton iteration on the orthonormal three-term recurrence; weights come
/// from the derivative identity w = 2 / (h'_q)^2. Stable up to q = 500.
pub fn gauss_hermite_rule(q: usize) -> Result<QuadratureRule> {
    if q < 1 || q > 500 {
        return Err(Error::InvalidArgument(format!(
            "quadrature order {q} outside 1..=500"
        )));
    }
    let n = q as f64;
    let m = (q + 1) / 2;
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    let bound = (2.0 * n + 1.0).sqrt() + 1.0;
    let deriv_scale = (2.0 * n).sqrt();
    // upper-half roots in ascending index order: k = q - m .. q - 1
    for i in 0..m {
        let k = q - 1 - i; // rank of the root among all q, ascending
        let mut z;
        let hi = q - 1 - i;
        if hi == i {
            // middle node of an odd-order rule is exactly zero
            z = 0.0;
        } else {
            let (mut lo_b, mut hi_b) = (0.0, bound);
            while hi_b - lo_b > 1e-13 * (1.0 + hi_b.abs()) {
                let mid = 0.5 * (lo_b + hi_b);
                if roots_below(q, mid) > k {
                    hi_b = mid;
                } else {
                    lo_b = mid;
                }
            }
            z = 0.5 * (lo_b + hi_b);
            // Newton polish on the recurrence
            for _ in 0..8 {
                let (p1, p2) = hermite_pair(q, z);
                let dz = p1 / (deriv_scale * p2);
                z -= dz;
                if dz.abs() < 1e-15 * (1.0 + z.abs()) {
                    break;
                }
            }
        }
        let (_, p2) = hermite_pair(q, z);
        let pp = deriv_scale * p2;
        let w = 2.0 / (pp * pp);
        if hi == i {
            nodes[i] = 0.0;
            weights[i] = w;
        } else {
            nodes[hi] = z;
            nodes[i] = -z;
            weights[hi] = w;
            weights[i] = w;
        }
    }
    let rule = QuadratureRule { nodes, weights };
    let sum: f64 = rule.weights.iter().sum();
    if ((sum - SQRT_PI) / SQRT_PI).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "quadrature weights sum to {sum}, expected sqrt(pi)"
        )));
    }
    if rule.nodes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "quadrature nodes not strictly increasing".into(),
        ));
    }
    Ok(rule)
}

/// ln(1 + e^z), stable across the whole real line.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Probability 1 - p* that an individual with logit-normal detection
/// heterogeneity is never observed over `t` occasions.
pub fn mh_prob_unobserved(alpha: f64, sigma: f64, t: u32, rule: &QuadratureRule) -> Result<f64> {
    if !alpha.is_finite() || !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "non-finite or negative inputs: alpha = {alpha}, sigma = {sigma}"
        )));
    }
    if t == 0 {
        return Err(Error::InvalidArgument("need at least one occasion".into()));
    }
    let tf = f64::from(t);
    let scale = std::f64::consts::SQRT_2 * sigma;
    let sum = rule.integrate(|v| (-tf * softplus(scale * v + alpha)).exp());
    Ok((sum / SQRT_PI).clamp(0.0, 1.0))
}

/// Brute-force check of `mh_prob_unobserved`: composite Simpson integration
/// of [1 + exp(alpha + sigma u)]^-T phi(u) over u in [-12, 12], where phi is
/// the standard normal density. The truncated tail mass is below 1e-32.
pub fn mh_prob_unobserved_oracle(alpha: f64, sigma: f64, t: u32, panels: usize) -> Result<f64> {
    if !alpha.is_finite() || !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidArgument(
            "non-finite or negative inputs".into(),
        ));
    }
    if panels < 10_000 {
        return Err(Error::InvalidArgument(
            "oracle needs at least 1e4 panels".into(),
        ));
    }
    let n = if panels % 2 == 0 { panels } else { panels + 1 };
    let (lo, hi) = (-12.0, 12.0);
    let h = (hi - lo) / n as f64;
    let tf = f64::from(t);
    let f = |u: f64| {
        (-tf * softplus(alpha + sigma * u)).exp() * (-0.5 * u * u).exp()
            / (2.0 * std::f64::consts::PI).sqrt()
    };
    let mut sum = f(lo) + f(hi);
    for i in 1..n {
        let u = lo + i as f64 * h;
        sum += f(u) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    Ok((sum * h / 3.0).clamp(0.0, 1.0))
}

// Detector terms with u * d^2 above this bound contribute less than 1e-12
// to a log detection-miss product and are dropped.
const LOG_TERM_CUTOFF: f64 = 27.631;
// Above this bound ln(1 - e^-x) = -e^-x to within e^-2x/2 < 3e-12.
const LN1M_EXP_SERIES: f64 = 13.0;

/// ln(1 - e^-x) for x > 0, stable near both ends.
pub(crate) fn ln1m_exp_neg(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else if x < std::f64::consts::LN_2 {
        (-(-x).exp_m1()).ln()
    } else {
        (-(-x).exp()).ln_1p()
    }
}

/// Precomputed per-mask-point detector distances for fast repeated
/// evaluation of the unobserved-probability summation. Distances are sorted
/// ascending so the scan can stop at the detection-range cutoff.
#[derive(Debug, Clone)]
pub struct SecrIntegrator {
    offsets: Vec<u32>,
    dist2: Vec<f64>,
    n_mask: usize,
}

impl SecrIntegrator {
    pub fn new(geometry: &SurveyGeometry) -> Self {
        let mask = geometry.mask();
        let dets = geometry.detectors();
        let mut offsets = Vec::with_capacity(mask.len() + 1);
        let mut dist2 = Vec::with_capacity(mask.len() * dets.len());
        offsets.push(0u32);
        let mut buf = Vec::with_capacity(dets.len());
        for g in mask {
            buf.clear();
            buf.extend(dets.iter().map(|u| u.dist2(g)));
            buf.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            dist2.extend_from_slice(&buf);
            offsets.push(dist2.len() as u32);
        }
        Self {
            offsets,
            dist2,
            n_mask: mask.len(),
        }
    }

    /// Probability 1 - p* that an individual with a uniformly distributed
    /// activity centre is missed by every detector on every occasion:
    /// (1/G) * sum over mask points of prod_{j,t} (1 - exp(-d^2 / 2 sigma^2)).
    ///
    /// The summation runs in log space per mask point and is exponentiated
    /// once. Scan order is fixed, so results are deterministic.
    pub fn prob_unobserved(&self, sigma: f64, t: u32) -> Result<f64> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma = {sigma} must be positive"
            )));
        }
        if t == 0 {
            return Err(Error::InvalidArgument("need at least one occasion".into()));
        }
        let u = 1.0 / (2.0 * sigma * sigma);
        let d2_cutoff = LOG_TERM_CUTOFF / u;
        let tf = f64::from(t);
        let mut total = 0.0;
        for g in 0..self.n_mask {
            let slice = &self.dist2[self.offsets[g] as usize..self.offsets[g + 1] as usize];
            let mut log_miss = 0.0;
            for &d2 in slice {
                if d2 > d2_cutoff {
                    break;
                }
                let x = u * d2;
                log_miss += if x > LN1M_EXP_SERIES {
                    -(-x).exp()
                } else {
                    ln1m_exp_neg(x)
                };
                if log_miss == f64::NEG_INFINITY {
                    break;
                }
            }
            total += (tf * log_miss).exp();
        }
        Ok((total / self.n_mask as f64).clamp(0.0, 1.0))
    }
}

/// One-shot wrapper around [`SecrIntegrator`]; build the integrator once
/// when evaluating repeatedly.
pub fn secr_prob_unobserved(sigma: f64, geometry: &SurveyGeometry, t: u32) -> Result<f64> {
    SecrIntegrator::new(geometry).prob_unobserved(sigma, t)
}
