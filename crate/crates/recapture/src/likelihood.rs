//! Log-density evaluation: semi-complete data likelihoods (both algebraic
//! forms), the complete-data likelihood used by the super-population
//! samplers, the collapsed marginal likelihood used as an oracle, and all
//! priors.
//!
//! Everything is computed in log space. A value of negative infinity
//! encodes zero density (out-of-support states); positive infinity is never
//! produced.

use crate::error::{Error, Result};
use crate::integrate::{
    ln1m_exp_neg, mh_prob_unobserved, softplus, QuadratureRule, SecrIntegrator,
};
use crate::model::{
    CaptureData, FrequencyCounts, MhState, NPrior, Point, PriorSpec, SecrCaptureData, SecrState,
    SuperPopState, SurveyGeometry,
};

/// Log density or log mass. Negative infinity encodes zero density.
pub type LogDensity = f64;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// ln of the falling factorial N! / (N-n)!, via log-gamma differences.
pub fn log_falling_factorial(n_total: u64, n_obs: u64) -> Result<f64> {
    if n_total < n_obs {
        return Err(Error::InvalidArgument(format!(
            "falling factorial needs N >= n, got N = {n_total}, n = {n_obs}"
        )));
    }
    Ok(libm::lgamma(n_total as f64 + 1.0) - libm::lgamma((n_total - n_obs) as f64 + 1.0))
}

/// ln logistic(z), stable for large |z|.
pub(crate) fn ln_logistic(z: f64) -> f64 {
    -softplus(-z)
}

pub(crate) fn normal_logpdf(x: f64, variance: f64) -> LogDensity {
    if !(variance > 0.0) {
        return f64::NEG_INFINITY;
    }
    -0.5 * (LN_2PI + variance.ln()) - x * x / (2.0 * variance)
}

/// Joint log density of `count` independent N(0, variance) values with the
/// given sum of squares.
pub(crate) fn normal_logpdf_sum(count: f64, sum_sq: f64, variance: f64) -> LogDensity {
    if !(variance > 0.0) || !variance.is_finite() {
        return f64::NEG_INFINITY;
    }
    -0.5 * count * (LN_2PI + variance.ln()) - sum_sq / (2.0 * variance)
}

pub(crate) fn inv_gamma_logpdf(x: f64, shape: f64, rate: f64) -> LogDensity {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - libm::lgamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

pub(crate) fn uniform_logpdf(x: f64, lower: f64, upper: f64) -> LogDensity {
    if x > lower && x <= upper {
        -(upper - lower).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Detection-history log likelihood for observed individuals conditional on
/// their random effects: sum_i [y_i ln p_i + (T - y_i) ln(1 - p_i)] with
/// logit p_i = alpha + eps_i.
pub fn mh_conditional_loglik(data: &CaptureData, alpha: f64, eps: &[f64]) -> Result<LogDensity> {
    if eps.len() != data.n() {
        return Err(Error::InvalidArgument(format!(
            "eps length {} != n = {}",
            eps.len(),
            data.n()
        )));
    }
    let y = data.counts();
    Ok(mh_conditional_loglik_counts(
        &y,
        data.occasions() as u32,
        alpha,
        eps,
    ))
}

/// Count-based form of the conditional log likelihood; `y` holds per-
/// individual detection totals out of `t` occasions.
pub fn mh_conditional_loglik_counts(y: &[u32], t: u32, alpha: f64, eps: &[f64]) -> LogDensity {
    debug_assert_eq!(y.len(), eps.len());
    let tf = f64::from(t);
    let mut ll = 0.0;
    for (&yi, &e) in y.iter().zip(eps) {
        let z = alpha + e;
        ll += f64::from(yi) * ln_logistic(z) + (tf - f64::from(yi)) * ln_logistic(-z);
    }
    ll
}

/// Per-individual contribution used by the samplers.
pub(crate) fn mh_individual_loglik(y: u32, t: u32, alpha: f64, eps: f64) -> LogDensity {
    let z = alpha + eps;
    f64::from(y) * ln_logistic(z) + f64::from(t - y) * ln_logistic(-z)
}

/// Spatial detection log likelihood conditional on activity centres:
/// sum over individuals, detectors and occasions of the half-normal
/// Bernoulli terms with p_ij = exp(-||u_j - c_i||^2 / (2 sigma^2)).
pub fn secr_conditional_loglik(
    data: &SecrCaptureData,
    geometry: &SurveyGeometry,
    sigma: f64,
    centres: &[Point],
) -> Result<LogDensity> {
    if centres.len() != data.n() {
        return Err(Error::InvalidArgument(format!(
            "centres length {} != n = {}",
            centres.len(),
            data.n()
        )));
    }
    if geometry.n_detectors() != data.n_detectors() {
        return Err(Error::InvalidArgument("detector count mismatch".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    let mut ll = 0.0;
    for (i, c) in centres.iter().enumerate() {
        ll += secr_individual_loglik(
            data.individual_counts(i),
            data.occasions() as u32,
            geometry,
            sigma,
            c,
        );
    }
    Ok(ll)
}

/// One individual's detection terms; `counts[j]` detections at detector j
/// out of `t` occasions. Miss terms whose magnitude falls below 1e-12
/// (detectors far outside the detection range) are dropped; detection terms
/// are always exact since ln p = -d^2 / (2 sigma^2).
pub(crate) fn secr_individual_loglik(
    counts: &[u32],
    t: u32,
    geometry: &SurveyGeometry,
    sigma: f64,
    centre: &Point,
) -> LogDensity {
    const MISS_TERM_CUTOFF: f64 = 27.631; // e^-x below 1e-12
    let u = 1.0 / (2.0 * sigma * sigma);
    let tf = f64::from(t);
    let mut ll = 0.0;
    for (j, det) in geometry.detectors().iter().enumerate() {
        let x = u * det.dist2(centre);
        let y = f64::from(counts[j]);
        // ln p = -x exactly under the half-normal form
        if y > 0.0 {
            ll -= y * x;
        }
        let misses = tf - y;
        if misses > 0.0 && x <= MISS_TERM_CUTOFF {
            ll += misses * ln1m_exp_neg(x);
        }
        if ll == f64::NEG_INFINITY {
            break;
        }
    }
    ll
}

/// Semi-complete data log likelihood for the logit-normal model:
/// conditional likelihood of the observed histories, the falling-factorial
/// ordering term, the unobserved block (N - n) ln(1 - p*) and the Gaussian
/// random-effect densities of the observed individuals.
pub fn mh_scd_loglik(
    data: &CaptureData,
    state: &MhState,
    rule: &QuadratureRule,
) -> Result<LogDensity> {
    let n = data.n() as u64;
    if state.n_total < n {
        return Ok(f64::NEG_INFINITY);
    }
    if !(state.sigma2 > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let one_minus_pstar = mh_prob_unobserved(
        state.alpha,
        state.sigma2.sqrt(),
        data.occasions() as u32,
        rule,
    )?;
    let mut lp = mh_conditional_loglik(data, state.alpha, &state.eps)?;
    lp += log_falling_factorial(state.n_total, n)?;
    lp += unobserved_block(state.n_total, n, one_minus_pstar);
    for &e in &state.eps {
        lp += normal_logpdf(e, state.sigma2);
    }
    Ok(lp)
}

fn unobserved_block(n_total: u64, n_obs: u64, one_minus_pstar: f64) -> f64 {
    if n_total == n_obs {
        0.0
    } else {
        (n_total - n_obs) as f64 * one_minus_pstar.ln()
    }
}

/// Semi-complete data log posterior for the logit-normal model.
pub fn mh_scd_logposterior(
    data: &CaptureData,
    state: &MhState,
    priors: &PriorSpec,
    rule: &QuadratureRule,
) -> Result<LogDensity> {
    let ll = mh_scd_loglik(data, state, rule)?;
    Ok(ll + mh_log_priors(state, priors))
}

fn mh_log_priors(state: &MhState, priors: &PriorSpec) -> LogDensity {
    normal_logpdf(state.alpha - priors.alpha.mean, priors.alpha.variance)
        + inv_gamma_logpdf(state.sigma2, priors.sigma2.shape, priors.sigma2.rate)
        + log_prior_n(state.n_total, &priors.n)
}

/// Algebraically identical rearrangement of the semi-complete posterior:
/// the conditional likelihood is renormalised by p*^-n and the population
/// term becomes the Binomial probability of observing n of N individuals.
/// Must agree with `mh_scd_logposterior` to floating-point roundoff.
pub fn mh_scd_logposterior_binomial_form(
    data: &CaptureData,
    state: &MhState,
    priors: &PriorSpec,
    rule: &QuadratureRule,
) -> Result<LogDensity> {
    let n = data.n() as u64;
    if state.n_total < n || !(state.sigma2 > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let one_minus_pstar = mh_prob_unobserved(
        state.alpha,
        state.sigma2.sqrt(),
        data.occasions() as u32,
        rule,
    )?;
    let ln_pstar = (-one_minus_pstar).ln_1p();
    if ln_pstar == f64::NEG_INFINITY && n > 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let nf = n as f64;
    // conditional likelihood of the histories given that each individual
    // was seen at least once
    let mut seen_given = mh_conditional_loglik(data, state.alpha, &state.eps)? - nf * ln_pstar;
    for &e in &state.eps {
        seen_given += normal_logpdf(e, state.sigma2);
    }
    // Binomial probability of observing n of the N individuals
    let binom = log_falling_factorial(state.n_total, n)?
        + nf * ln_pstar
        + unobserved_block(state.n_total, n, one_minus_pstar);
    Ok(seen_given + binom + mh_log_priors(state, priors))
}

/// Collapsed marginal log likelihood for the logit-normal model: the
/// frequency-count form with one Gauss-Hermite integral per detection
/// count, the zero-count class appearing N - n times. Used as an
/// independent oracle for the semi-complete form.
pub fn mh_marginal_loglik(
    freqs: &FrequencyCounts,
    n_total: u64,
    alpha: f64,
    sigma: f64,
    rule: &QuadratureRule,
) -> Result<LogDensity> {
    let n = freqs.n();
    if n_total < n {
        return Err(Error::InvalidArgument(format!(
            "N = {n_total} below number observed n = {n}"
        )));
    }
    if !(sigma >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument("invalid alpha or sigma".into()));
    }
    let t = freqs.max_count() as u32;
    let tf = f64::from(t);
    let scale = std::f64::consts::SQRT_2 * sigma;
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let class_integral = |k: f64| -> f64 {
        rule.integrate(|v| {
            let z = alpha + scale * v;
            (k * ln_logistic(z) + (tf - k) * ln_logistic(-z)).exp()
        }) / sqrt_pi
    };
    let mut lp = log_falling_factorial(n_total, n)?;
    if n_total > n {
        lp += (n_total - n) as f64 * class_integral(0.0).ln();
    }
    for k in 1..=t {
        let nk = freqs.count(k as usize);
        if nk > 0 {
            lp += nk as f64 * class_integral(f64::from(k)).ln();
        }
    }
    Ok(lp)
}

/// Gaussian pseudo-prior for the random effects of pseudo-individuals
/// currently excluded from the population (ordered-indicator sampler).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPseudoPrior {
    pub mean: f64,
    pub sd: f64,
}

impl GaussPseudoPrior {
    pub fn logpdf(&self, x: f64) -> LogDensity {
        let d = x - self.mean;
        -0.5 * (LN_2PI + 2.0 * self.sd.ln()) - d * d / (2.0 * self.sd * self.sd)
    }
}

/// Complete-data log likelihood over a super-population: observed
/// individuals contribute their conditional likelihood, included-but-
/// unobserved ones contribute T ln(1 - p_i), excluded ones contribute
/// nothing from the data. Random effects of included individuals are scored
/// under the model prior; excluded ones under `pseudo` when given (ordered
/// variant), otherwise also under the model prior (unordered variant).
///
/// The ordering/multinomial factor and parameter priors are not included.
pub fn mh_complete_data_loglik(
    superstate: &SuperPopState<f64>,
    data: &CaptureData,
    alpha: f64,
    sigma2: f64,
    pseudo: Option<&GaussPseudoPrior>,
) -> Result<LogDensity> {
    let n = data.n();
    if superstate.m() < n {
        return Err(Error::InvalidArgument("super-population below n".into()));
    }
    if superstate.z.iter().take(n).any(|&b| !b) {
        return Err(Error::InvalidArgument(
            "z = 0 for an observed individual".into(),
        ));
    }
    if superstate.eps.len() != superstate.m() {
        return Err(Error::InvalidArgument("eps length != M".into()));
    }
    if !(sigma2 > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let t = data.occasions() as u32;
    let y = data.counts();
    let tf = f64::from(t);
    let mut lp = 0.0;
    for i in 0..superstate.m() {
        let e = superstate.eps[i];
        if superstate.z[i] {
            let data_term = if i < n {
                mh_individual_loglik(y[i], t, alpha, e)
            } else {
                tf * ln_logistic(-(alpha + e))
            };
            lp += data_term + normal_logpdf(e, sigma2);
        } else {
            lp += match pseudo {
                Some(ps) => ps.logpdf(e),
                None => normal_logpdf(e, sigma2),
            };
        }
    }
    Ok(lp)
}

/// Spatial counterpart of [`mh_complete_data_loglik`]. Activity centres are
/// uniform over the region whether or not the individual is included, so
/// the pseudo-prior coincides with the model prior.
pub fn secr_complete_data_loglik(
    superstate: &SuperPopState<Point>,
    data: &SecrCaptureData,
    geometry: &SurveyGeometry,
    sigma: f64,
) -> Result<LogDensity> {
    let n = data.n();
    if superstate.m() < n {
        return Err(Error::InvalidArgument("super-population below n".into()));
    }
    if superstate.z.iter().take(n).any(|&b| !b) {
        return Err(Error::InvalidArgument(
            "z = 0 for an observed individual".into(),
        ));
    }
    if !(sigma > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let t = data.occasions() as u32;
    let ln_area_density = -geometry.area().ln();
    let zero_counts = vec![0u32; geometry.n_detectors()];
    let mut lp = 0.0;
    for i in 0..superstate.m() {
        let c = &superstate.eps[i];
        if !geometry.contains(c) {
            return Ok(f64::NEG_INFINITY);
        }
        lp += ln_area_density;
        if superstate.z[i] {
            let counts = if i < n {
                data.individual_counts(i)
            } else {
                &zero_counts
            };
            lp += secr_individual_loglik(counts, t, geometry, sigma, c);
        }
    }
    Ok(lp)
}

/// Semi-complete data log likelihood for the spatial model: detection terms
/// for observed individuals, the falling-factorial term, the unobserved
/// block with 1 - p* from the habitat-mask summation, and the uniform
/// activity-centre densities 1/A.
pub fn secr_scd_loglik(
    data: &SecrCaptureData,
    geometry: &SurveyGeometry,
    state: &SecrState,
    integrator: &SecrIntegrator,
) -> Result<LogDensity> {
    let n = data.n() as u64;
    if state.n_total < n || !(state.sigma > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    for c in &state.centres {
        if !geometry.contains(c) {
            return Ok(f64::NEG_INFINITY);
        }
    }
    let one_minus_pstar = integrator.prob_unobserved(state.sigma, data.occasions() as u32)?;
    let mut lp = secr_conditional_loglik(data, geometry, state.sigma, &state.centres)?;
    lp += log_falling_factorial(state.n_total, n)?;
    lp += unobserved_block(state.n_total, n, one_minus_pstar);
    lp -= state.centres.len() as f64 * geometry.area().ln();
    Ok(lp)
}

/// Semi-complete data log posterior for the spatial model.
pub fn secr_scd_logposterior(
    data: &SecrCaptureData,
    geometry: &SurveyGeometry,
    state: &SecrState,
    priors: &PriorSpec,
    integrator: &SecrIntegrator,
) -> Result<LogDensity> {
    let ll = secr_scd_loglik(data, geometry, state, integrator)?;
    Ok(ll
        + uniform_logpdf(state.sigma, priors.sigma.lower, priors.sigma.upper)
        + log_prior_n(state.n_total, &priors.n))
}

/// Log prior mass for the population size under the configured prior.
pub fn log_prior_n(n_total: u64, prior: &NPrior) -> LogDensity {
    let nf = n_total as f64;
    match *prior {
        NPrior::TruncatedJeffreys { m } => {
            if n_total >= 1 && n_total <= m {
                -nf.ln()
            } else {
                f64::NEG_INFINITY
            }
        }
        NPrior::Power { c, m } => {
            if n_total >= 1 && n_total <= m {
                -c * nf.ln()
            } else {
                f64::NEG_INFINITY
            }
        }
        NPrior::Poisson { lambda } => nf * lambda.ln() - lambda - libm::lgamma(nf + 1.0),
        NPrior::NegBinomial { r, p } => {
            libm::lgamma(nf + r) - libm::lgamma(nf + 1.0) - libm::lgamma(r)
                + r * p.ln()
                + nf * (-p).ln_1p()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::gauss_hermite_rule;
    use crate::model::derive_counts;

    fn hare_data() -> CaptureData {
        crate::cli::expand_frequencies(&FrequencyCounts::new(vec![25, 22, 13, 5, 1, 2]).unwrap(), 6)
            .unwrap()
    }

    #[test]
    fn falling_factorial_values() {
        assert!((log_falling_factorial(70, 2).unwrap() - 4830.0_f64.ln()).abs() < 1e-10);
        assert_eq!(log_falling_factorial(5, 0).unwrap(), 0.0);
        assert!((log_falling_factorial(3, 3).unwrap() - 6.0_f64.ln()).abs() < 1e-12);
        assert!(log_falling_factorial(2, 3).is_err());
    }

    #[test]
    fn conditional_loglik_single_individual() {
        // y = 3 of T = 6 at p = 1/2: likelihood 2^-6
        let data = CaptureData::from_rows(vec![vec![1, 1, 1, 0, 0, 0]]).unwrap();
        let ll = mh_conditional_loglik(&data, 0.0, &[0.0]).unwrap();
        assert!((ll - 0.015625_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn conditional_loglik_additive() {
        let one = CaptureData::from_rows(vec![vec![1, 0, 1, 0]]).unwrap();
        let two = CaptureData::from_rows(vec![vec![1, 0, 1, 0], vec![1, 0, 1, 0]]).unwrap();
        let a = mh_conditional_loglik(&one, -0.7, &[0.3]).unwrap();
        let b = mh_conditional_loglik(&two, -0.7, &[0.3, 0.3]).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
        assert!(mh_conditional_loglik(&two, -0.7, &[0.3]).is_err());
    }

    #[test]
    fn conditional_loglik_frequency_identity() {
        // with all eps = 0 the likelihood depends on the frequencies only
        let data = hare_data();
        let alpha: f64 = -1.2;
        let ll = mh_conditional_loglik(&data, alpha, &vec![0.0; data.n()]).unwrap();
        let (_, freqs) = derive_counts(&data);
        let p = 1.0 / (1.0 + (-alpha).exp());
        let mut expect = 0.0;
        for k in 1..=6u32 {
            let nk = freqs.count(k as usize) as f64;
            expect += nk * (f64::from(k) * p.ln() + (6.0 - f64::from(k)) * (1.0 - p).ln());
        }
        assert!((ll - expect).abs() < 1e-9, "{ll} vs {expect}");
    }

    #[test]
    fn secr_conditional_loglik_cases() {
        let geom = SurveyGeometry::new(vec![Point::new(0.5, 0.5)], vec![Point::new(0.5, 0.5)], 1.0)
            .unwrap();
        let data = SecrCaptureData::from_counts(vec![1], 1, 1).unwrap();
        // detected at a detector it sits on: p = 1, loglik = 0
        let ll = secr_conditional_loglik(&data, &geom, 0.4, &[Point::new(0.5, 0.5)]).unwrap();
        assert_eq!(ll, 0.0);
        // at the half-height distance: ln 1/2
        let sigma = 0.4;
        let d = sigma * (2.0 * 2.0_f64.ln()).sqrt();
        let ll = secr_conditional_loglik(&data, &geom, sigma, &[Point::new(0.5 + d, 0.5)]).unwrap();
        assert!((ll - 0.5_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn secr_conditional_two_detector_cross_check() {
        let dets = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
        let geom = SurveyGeometry::new(dets.clone(), vec![Point::new(0.5, 0.0)], 4.0).unwrap();
        let data = SecrCaptureData::from_counts(vec![1, 0], 2, 1).unwrap();
        let c = Point::new(0.3, 0.2);
        let sigma = 0.5;
        let ll = secr_conditional_loglik(&data, &geom, sigma, &[c]).unwrap();
        let p1 = (-c.dist2(&dets[0]) / (2.0 * sigma * sigma)).exp();
        let p2 = (-c.dist2(&dets[1]) / (2.0 * sigma * sigma)).exp();
        let expect = p1.ln() + (1.0 - p2).ln();
        assert!((ll - expect).abs() < 1e-12);
    }

    #[test]
    fn scd_term_by_term_assembly() {
        // n = 1, T = 1, y = 1, N = 1: conditional ln(1/2), no falling
        // factorial beyond ln 1! = 0, no unobserved block, plus ln phi(0|1)
        let data = CaptureData::from_rows(vec![vec![1]]).unwrap();
        let state = MhState {
            alpha: 0.0,
            sigma2: 1.0,
            eps: vec![0.0],
            n_total: 1,
        };
        let rule = gauss_hermite_rule(50).unwrap();
        let ll = mh_scd_loglik(&data, &state, &rule).unwrap();
        let expect = 0.5_f64.ln() + normal_logpdf(0.0, 1.0);
        assert!((ll - expect).abs() < 1e-12);
    }

    #[test]
    fn scd_telescopes_in_n() {
        let data = hare_data();
        let rule = gauss_hermite_rule(100).unwrap();
        let priors = PriorSpec::default();
        let base = MhState {
            alpha: -1.0,
            sigma2: 0.8,
            eps: vec![0.1; data.n()],
            n_total: 120,
        };
        let mut bumped = base.clone();
        bumped.n_total = 121;
        let a = mh_scd_logposterior(&data, &base, &priors, &rule).unwrap();
        let b = mh_scd_logposterior(&data, &bumped, &priors, &rule).unwrap();
        let omp = mh_prob_unobserved(base.alpha, base.sigma2.sqrt(), 6, &rule).unwrap();
        let n = data.n() as f64;
        let expect = (121.0_f64).ln() - (121.0 - n).ln() + omp.ln() + log_prior_n(121, &priors.n)
            - log_prior_n(120, &priors.n);
        assert!((b - a - expect).abs() < 1e-9, "{}", b - a - expect);
    }

    #[test]
    fn binomial_form_identity() {
        let data = hare_data();
        let rule = gauss_hermite_rule(100).unwrap();
        let priors = PriorSpec::default();
        let state = MhState {
            alpha: -1.2,
            sigma2: 1.1,
            eps: (0..data.n()).map(|i| (i as f64 * 0.37).sin()).collect(),
            n_total: 100,
        };
        let a = mh_scd_logposterior(&data, &state, &priors, &rule).unwrap();
        let b = mh_scd_logposterior_binomial_form(&data, &state, &priors, &rule).unwrap();
        assert!((a - b).abs() < 1e-10, "diff {}", a - b);
    }

    #[test]
    fn scd_unimodal_in_n_under_jeffreys() {
        let data = hare_data();
        let rule = gauss_hermite_rule(100).unwrap();
        let priors = PriorSpec::default();
        let mut state = MhState {
            alpha: -1.2,
            sigma2: 1.0,
            eps: vec![0.0; data.n()],
            n_total: 68,
        };
        let mut values = Vec::new();
        for n_total in 68..400 {
            state.n_total = n_total;
            values.push(mh_scd_logposterior(&data, &state, &priors, &rule).unwrap());
        }
        let mut sign_changes = 0;
        let mut prev_up = true;
        for w in values.windows(2) {
            let up = w[1] > w[0];
            if up != prev_up {
                sign_changes += 1;
            }
            prev_up = up;
        }
        assert!(sign_changes <= 1, "log posterior in N not unimodal");
    }

    #[test]
    fn marginal_degenerate_sigma_closed_form() {
        // sigma = 0 collapses every class integral to the Binomial kernel at
        // p = logistic(alpha)
        let freqs = FrequencyCounts::new(vec![2, 1, 0]).unwrap();
        let rule = gauss_hermite_rule(60).unwrap();
        let alpha = -0.4;
        let n_total = 7;
        let got = mh_marginal_loglik(&freqs, n_total, alpha, 0.0, &rule).unwrap();
        let p = 1.0 / (1.0 + (-alpha).exp());
        let t = 3.0;
        let mut expect = log_falling_factorial(n_total, 3).unwrap();
        expect += (n_total - 3) as f64 * (t * (1.0 - p).ln());
        expect += 2.0 * (p.ln() + (t - 1.0) * (1.0 - p).ln());
        expect += 1.0 * (2.0 * p.ln() + (t - 2.0) * (1.0 - p).ln());
        assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
    }

    #[test]
    fn marginal_consistent_with_prob_unobserved_when_nothing_seen() {
        // n = 0: likelihood is (1 - p*)^N
        let freqs = FrequencyCounts::new(vec![0, 0]).unwrap();
        let rule = gauss_hermite_rule(80).unwrap();
        let got = mh_marginal_loglik(&freqs, 11, -0.3, 0.9, &rule).unwrap();
        let omp = mh_prob_unobserved(-0.3, 0.9, 2, &rule).unwrap();
        assert!((got - 11.0 * omp.ln()).abs() < 1e-10);
    }

    #[test]
    fn marginal_stable_under_quadrature_refinement() {
        let freqs = FrequencyCounts::new(vec![25, 22, 13, 5, 1, 2]).unwrap();
        let a =
            mh_marginal_loglik(&freqs, 100, -1.2, 1.0, &gauss_hermite_rule(100).unwrap()).unwrap();
        let b =
            mh_marginal_loglik(&freqs, 100, -1.2, 1.0, &gauss_hermite_rule(200).unwrap()).unwrap();
        assert!(a.is_finite());
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn complete_data_reduces_to_conditional_when_m_equals_n() {
        let data = CaptureData::from_rows(vec![vec![1, 0, 1], vec![0, 1, 0]]).unwrap();
        let superstate = SuperPopState {
            z: vec![true, true],
            psi: None,
            eps: vec![0.2, -0.4],
        };
        let got = mh_complete_data_loglik(&superstate, &data, -0.3, 0.7, None).unwrap();
        let expect = mh_conditional_loglik(&data, -0.3, &superstate.eps).unwrap()
            + normal_logpdf(0.2, 0.7)
            + normal_logpdf(-0.4, 0.7);
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn complete_data_extra_included_individual() {
        let data = CaptureData::from_rows(vec![vec![1; 6]]).unwrap();
        let base = SuperPopState {
            z: vec![true, false],
            psi: None,
            eps: vec![0.0, 0.0],
        };
        let with_extra = SuperPopState {
            z: vec![true, true],
            psi: None,
            eps: vec![0.0, 0.0],
        };
        let a = mh_complete_data_loglik(&base, &data, 0.0, 1.0, None).unwrap();
        let b = mh_complete_data_loglik(&with_extra, &data, 0.0, 1.0, None).unwrap();
        // the added individual is unobserved: 6 ln(1/2); its phi term was
        // already present in both states
        assert!((b - a - 6.0 * 0.5_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn complete_data_term_wise_recomputation() {
        let data = hare_data();
        let m = 1000;
        let n = data.n();
        let eps: Vec<f64> = (0..m)
            .map(|i| ((i * 37 + 11) as f64 * 0.01).sin())
            .collect();
        let mut z = vec![true; m];
        for (i, zi) in z.iter_mut().enumerate().skip(n) {
            *zi = i % 7 == 0;
        }
        let superstate = SuperPopState {
            z: z.clone(),
            psi: Some(0.1),
            eps: eps.clone(),
        };
        let got = mh_complete_data_loglik(&superstate, &data, -1.1, 1.3, None).unwrap();
        let y = data.counts();
        let mut expect = 0.0;
        for i in 0..m {
            if z[i] {
                expect += if i < n {
                    mh_individual_loglik(y[i], 6, -1.1, eps[i])
                } else {
                    6.0 * ln_logistic(-(-1.1 + eps[i]))
                };
            }
            expect += normal_logpdf(eps[i], 1.3);
        }
        assert!(got.is_finite());
        assert!((got - expect).abs() < 1e-9);
    }

    #[test]
    fn complete_data_rejects_z_zero_for_observed() {
        let data = CaptureData::from_rows(vec![vec![1, 0]]).unwrap();
        let superstate = SuperPopState {
            z: vec![false, true],
            psi: None,
            eps: vec![0.0, 0.0],
        };
        assert!(mh_complete_data_loglik(&superstate, &data, 0.0, 1.0, None).is_err());
    }

    #[test]
    fn prior_n_menu() {
        assert!(
            (log_prior_n(100, &NPrior::TruncatedJeffreys { m: 1000 }) + 100.0_f64.ln()).abs()
                < 1e-12
        );
        assert_eq!(
            log_prior_n(1001, &NPrior::TruncatedJeffreys { m: 1000 }),
            f64::NEG_INFINITY
        );
        assert_eq!(
            log_prior_n(0, &NPrior::TruncatedJeffreys { m: 1000 }),
            f64::NEG_INFINITY
        );
        let c = 1.7;
        assert!((log_prior_n(9, &NPrior::Power { c, m: 100 }) + c * 9.0_f64.ln()).abs() < 1e-12);
        // Poisson pmf at N = 3, lambda = 2: e^-2 2^3 / 3!
        let expect = (-2.0_f64).exp() * 8.0 / 6.0;
        assert!((log_prior_n(3, &NPrior::Poisson { lambda: 2.0 }) - expect.ln()).abs() < 1e-12);
        // count-of-failures form at x = 0 is r ln p
        let lp = log_prior_n(0, &NPrior::NegBinomial { r: 5.0, p: 0.3 });
        assert!((lp - 5.0 * 0.3_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn binomial_form_degenerate_pstar() {
        // force 1 - p* = 1 by making detection impossible is not reachable
        // through the public API, so exercise the N = n edge directly: the
        // unobserved block vanishes and both forms stay finite
        let data = CaptureData::from_rows(vec![vec![1]]).unwrap();
        let rule = gauss_hermite_rule(30).unwrap();
        let priors = PriorSpec::default();
        let state = MhState {
            alpha: 0.0,
            sigma2: 0.5,
            eps: vec![0.0],
            n_total: 1,
        };
        let a = mh_scd_logposterior(&data, &state, &priors, &rule).unwrap();
        let b = mh_scd_logposterior_binomial_form(&data, &state, &priors, &rule).unwrap();
        assert!(a.is_finite() && (a - b).abs() < 1e-10);
    }

    #[test]
    fn secr_scd_outside_mask_is_rejected() {
        let geom = SurveyGeometry::new(
            vec![Point::new(0.5, 0.5)],
            SurveyGeometry::rectangular_mask(Point::new(0.0, 0.0), 4, 4, 0.5),
            0.25,
        )
        .unwrap();
        let data = SecrCaptureData::from_counts(vec![1], 1, 1).unwrap();
        let integrator = SecrIntegrator::new(&geom);
        let inside = SecrState {
            sigma: 0.4,
            centres: vec![Point::new(0.6, 0.6)],
            n_total: 3,
        };
        let outside = SecrState {
            sigma: 0.4,
            centres: vec![Point::new(5.0, 5.0)],
            n_total: 3,
        };
        assert!(secr_scd_loglik(&data, &geom, &inside, &integrator)
            .unwrap()
            .is_finite());
        assert_eq!(
            secr_scd_loglik(&data, &geom, &outside, &integrator).unwrap(),
            f64::NEG_INFINITY
        );
    }
}
