//! Samplers for the logit-normal heterogeneity model.
//!
//! A sweep updates, in order: the intercept alpha (random-walk MH), the
//! random-effect variance on the log scale (random-walk MH with Jacobian),
//! each random effect in index order, and finally the population size. The
//! unobserved-probability integral is re-evaluated whenever a proposal
//! moves alpha or sigma2 and the accepted value is cached for the N update.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::integrate::{gauss_hermite_rule, mh_prob_unobserved, QuadratureRule};
use crate::likelihood::{
    inv_gamma_logpdf, ln_logistic, log_falling_factorial, log_prior_n, mh_individual_loglik,
    normal_logpdf, normal_logpdf_sum, GaussPseudoPrior, LogDensity,
};
use crate::model::{CaptureData, NPrior, PriorSpec};

use super::adapt::{
    accept, mixture_step, rw_step, symmetric_discrete_offset, AdaptiveScale, AdaptiveStep,
};
use super::{
    chain_rng, gibbs_update_n_negbin, gibbs_update_psi, z_inclusion_probability, SamplerConfig,
    Trace,
};

struct Shared<'a> {
    y: Vec<u32>,
    n: usize,
    t: u32,
    rule: QuadratureRule,
    priors: &'a PriorSpec,
    cfg: &'a SamplerConfig,
}

impl<'a> Shared<'a> {
    fn new(data: &CaptureData, priors: &'a PriorSpec, cfg: &'a SamplerConfig) -> Result<Self> {
        cfg.validate(data.n())?;
        priors.validate()?;
        Ok(Self {
            y: data.counts(),
            n: data.n(),
            t: data.occasions() as u32,
            rule: gauss_hermite_rule(cfg.quadrature_order)?,
            priors,
            cfg,
        })
    }

    fn one_minus_pstar(&self, alpha: f64, sigma2: f64) -> LogDensity {
        if !(sigma2 > 0.0) || !sigma2.is_finite() || !alpha.is_finite() {
            return f64::NEG_INFINITY;
        }
        match mh_prob_unobserved(alpha, sigma2.sqrt(), self.t, &self.rule) {
            Ok(v) => v,
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

fn run_chains<F>(chains: usize, run_one: F) -> Result<Vec<Trace>>
where
    F: Fn(usize) -> Result<Trace> + Sync,
{
    std::thread::scope(|scope| {
        let run_one = &run_one;
        let handles: Vec<_> = (0..chains)
            .map(|c| scope.spawn(move || run_one(c)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .map_err(|_| Error::InvalidArgument("chain thread panicked".into()))?
            })
            .collect()
    })
}

/// Semi-complete sampler with the Negative-Binomial Gibbs step for N - n.
/// Requires a Jeffreys prior on N; the prior's truncation point is not
/// enforced, since the full conditional corresponds to the unbounded prior.
pub fn run_scd2(
    data: &CaptureData,
    priors: &PriorSpec,
    config: &SamplerConfig,
) -> Result<Vec<Trace>> {
    if !priors.n.is_jeffreys() {
        return Err(Error::InvalidConfig(
            "the Negative-Binomial Gibbs step for N requires a Jeffreys prior".into(),
        ));
    }
    let shared = Shared::new(data, priors, config)?;
    run_chains(config.chains, |chain| {
        run_chain_scd(&shared, NUpdate::NegBinGibbs, chain)
    })
}

/// Semi-complete sampler with an explicit prior on N, updated by adaptive
/// discrete Metropolis-Hastings.
pub fn run_scd1(
    data: &CaptureData,
    priors: &PriorSpec,
    config: &SamplerConfig,
) -> Result<Vec<Trace>> {
    let shared = Shared::new(data, priors, config)?;
    run_chains(config.chains, |chain| {
        run_chain_scd(&shared, NUpdate::DiscreteMh, chain)
    })
}

enum NUpdate {
    NegBinGibbs,
    DiscreteMh,
}

fn run_chain_scd(sh: &Shared, n_update: NUpdate, chain: usize) -> Result<Trace> {
    let cfg = sh.cfg;
    let n = sh.n;
    let nf = n as f64;
    let n_u64 = n as u64;
    let t = sh.t;
    let mut rng = chain_rng(cfg.seed, chain as u64);

    let mut alpha: f64 = StandardNormal.sample(&mut rng);
    let mut sigma2 = {
        let z: f64 = StandardNormal.sample(&mut rng);
        z.exp()
    };
    let sd0 = sigma2.sqrt();
    let mut eps: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sd0
        })
        .collect();
    let mut n_total: u64 = n_u64 + 1 + (rng.random::<f64>() * nf) as u64;
    if let Some(m) = sh.priors.n.upper_bound() {
        n_total = n_total.min(m);
    }

    let mut scale_alpha = AdaptiveScale::new(0.5, cfg.adapt_target, cfg.adapt_window);
    let mut scale_ln_s2 = AdaptiveScale::new(0.5, cfg.adapt_target, cfg.adapt_window);
    let mut scale_eps: Vec<AdaptiveScale> = (0..n)
        .map(|_| AdaptiveScale::new(1.0, cfg.adapt_target, cfg.adapt_window))
        .collect();
    let mut scale_shift = AdaptiveScale::new(0.3, cfg.adapt_target, cfg.adapt_window);
    let mut scale_group = AdaptiveScale::new(0.3, cfg.adapt_target, cfg.adapt_window);
    let mut step_n = AdaptiveStep::new(5, cfg.adapt_target, cfg.adapt_window);

    let mut omp = sh.one_minus_pstar(alpha, sigma2);
    let mut trace = Trace::new(
        chain,
        cfg.thin,
        &["N", "alpha", "sigma2"],
        cfg.stored_samples(),
    );

    for it in 0..cfg.iterations {
        if it == cfg.burn_in {
            scale_alpha.freeze();
            scale_ln_s2.freeze();
            scale_eps.iter_mut().for_each(AdaptiveScale::freeze);
            scale_shift.freeze();
            scale_group.freeze();
            step_n.freeze();
        }

        // alpha block: conditional likelihood + unobserved block + prior
        {
            let unobs = (n_total - n_u64) as f64;
            let target = |a: f64| -> LogDensity {
                let o = sh.one_minus_pstar(a, sigma2);
                if o <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let mut lp = 0.0;
                for (&yi, &e) in sh.y.iter().zip(&eps) {
                    lp += mh_individual_loglik(yi, t, a, e);
                }
                lp + unobs * o.ln()
                    + normal_logpdf(a - sh.priors.alpha.mean, sh.priors.alpha.variance)
            };
            let lp_cur = target(alpha);
            let (a_new, _, accepted) =
                rw_step(alpha, lp_cur, &target, scale_alpha.scale(), &mut rng);
            if accepted {
                alpha = a_new;
                omp = sh.one_minus_pstar(alpha, sigma2);
            }
            scale_alpha.record(accepted);
        }

        // variance block on the log scale (Jacobian term u)
        {
            let unobs = (n_total - n_u64) as f64;
            let sum_sq: f64 = eps.iter().map(|e| e * e).sum();
            let target = |u: f64| -> LogDensity {
                let s2 = u.exp();
                if !s2.is_finite() || s2 <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let o = sh.one_minus_pstar(alpha, s2);
                if o <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                normal_logpdf_sum(nf, sum_sq, s2)
                    + unobs * o.ln()
                    + inv_gamma_logpdf(s2, sh.priors.sigma2.shape, sh.priors.sigma2.rate)
                    + u
            };
            let u_cur = sigma2.ln();
            let lp_cur = target(u_cur);
            let (u_new, _, accepted) =
                rw_step(u_cur, lp_cur, &target, scale_ln_s2.scale(), &mut rng);
            if accepted {
                sigma2 = u_new.exp();
                omp = sh.one_minus_pstar(alpha, sigma2);
            }
            scale_ln_s2.record(accepted);
        }

        // Group moves along the posterior's ridge directions, repeated a
        // few times per sweep since they are cheap and dominate mixing.
        for _ in 0..3 {
            // ridge translation (alpha, eps) -> (alpha + d, eps - d): the
            // conditional likelihood depends on alpha + eps_i only, so just
            // the effect densities, the alpha prior and the unobserved
            // block move
            {
                let delta = mixture_step(scale_shift.scale(), &mut rng);
                let alpha_prop = alpha + delta;
                let omp_prop = sh.one_minus_pstar(alpha_prop, sigma2);
                let accepted = if omp_prop > 0.0 {
                    let unobs = (n_total - n_u64) as f64;
                    let mut log_ratio =
                        normal_logpdf(alpha_prop - sh.priors.alpha.mean, sh.priors.alpha.variance)
                            - normal_logpdf(alpha - sh.priors.alpha.mean, sh.priors.alpha.variance)
                            + unobs * (omp_prop.ln() - omp.ln());
                    let inv_2s2 = 1.0 / (2.0 * sigma2);
                    for e in &eps {
                        let shifted = e - delta;
                        log_ratio += (e * e - shifted * shifted) * inv_2s2;
                    }
                    accept(log_ratio, &mut rng)
                } else {
                    false
                };
                if accepted {
                    alpha += delta;
                    for e in &mut eps {
                        *e -= delta;
                    }
                    omp = sh.one_minus_pstar(alpha, sigma2);
                }
                scale_shift.record(accepted);
            }

            // joint scale move (sigma2, eps) -> (sigma2 e^s, eps e^{s/2}):
            // the Gaussian effect densities cancel against the proposal
            // Jacobian, leaving the conditional likelihood, the variance
            // prior and the unobserved block
            {
                let s = mixture_step(scale_group.scale(), &mut rng);
                let c = (0.5 * s).exp();
                let sigma2_prop = sigma2 * s.exp();
                let omp_prop = sh.one_minus_pstar(alpha, sigma2_prop);
                let accepted = if sigma2_prop.is_finite() && sigma2_prop > 0.0 && omp_prop > 0.0 {
                    let unobs = (n_total - n_u64) as f64;
                    let mut log_ratio =
                        inv_gamma_logpdf(
                            sigma2_prop,
                            sh.priors.sigma2.shape,
                            sh.priors.sigma2.rate,
                        ) - inv_gamma_logpdf(sigma2, sh.priors.sigma2.shape, sh.priors.sigma2.rate)
                            + s
                            + unobs * (omp_prop.ln() - omp.ln());
                    for (&yi, &e) in sh.y.iter().zip(&eps) {
                        log_ratio += mh_individual_loglik(yi, t, alpha, c * e)
                            - mh_individual_loglik(yi, t, alpha, e);
                    }
                    accept(log_ratio, &mut rng)
                } else {
                    false
                };
                if accepted {
                    sigma2 *= s.exp();
                    for e in &mut eps {
                        *e *= c;
                    }
                    omp = sh.one_minus_pstar(alpha, sigma2);
                }
                scale_group.record(accepted);
            }
        }

        // per-individual random effects
        for i in 0..n {
            let yi = sh.y[i];
            let target = |e: f64| mh_individual_loglik(yi, t, alpha, e) + normal_logpdf(e, sigma2);
            let lp_cur = target(eps[i]);
            let (e_new, _, accepted) =
                rw_step(eps[i], lp_cur, &target, scale_eps[i].scale(), &mut rng);
            eps[i] = e_new;
            scale_eps[i].record(accepted);
        }

        // population size
        let omp_for_n = if cfg.recompute_pstar_always {
            sh.one_minus_pstar(alpha, sigma2)
        } else {
            omp
        };
        match n_update {
            NUpdate::NegBinGibbs => {
                n_total = gibbs_update_n_negbin(n_u64, 1.0 - omp_for_n, &mut rng)?;
            }
            NUpdate::DiscreteMh => {
                if rng.random::<f64>() < 0.5 {
                    let ln_omp = omp_for_n.ln();
                    let target = |nt: u64| -> LogDensity {
                        match log_falling_factorial(nt, n_u64) {
                            Ok(ff) => {
                                ff + (nt - n_u64) as f64 * ln_omp + log_prior_n(nt, &sh.priors.n)
                            }
                            Err(_) => f64::NEG_INFINITY,
                        }
                    };
                    let (nt, accepted) =
                        update_n_discrete(n_total, n_u64, &target, &step_n, &mut rng);
                    n_total = nt;
                    step_n.record(accepted);
                } else {
                    n_total = update_n_negbin_independence(
                        n_total,
                        n_u64,
                        omp_for_n,
                        &sh.priors.n,
                        &mut rng,
                    )?;
                }
            }
        }

        if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
            trace.push_row(&[n_total as f64, alpha, sigma2]);
        }
    }

    let mut rates = vec![
        ("alpha".to_string(), scale_alpha.acceptance_rate()),
        ("sigma2".to_string(), scale_ln_s2.acceptance_rate()),
        (
            "eps".to_string(),
            scale_eps
                .iter()
                .map(AdaptiveScale::acceptance_rate)
                .sum::<f64>()
                / nf,
        ),
        ("shift".to_string(), scale_shift.acceptance_rate()),
        ("scale".to_string(), scale_group.acceptance_rate()),
    ];
    if matches!(n_update, NUpdate::DiscreteMh) {
        rates.push(("N".to_string(), step_n.acceptance_rate()));
    }
    trace.set_acceptance(rates);
    Ok(trace)
}

/// Independence Metropolis update of the population size, proposing
/// N - n from its Negative-Binomial conditional at the current detection
/// probability. The falling-factorial and miss-probability terms cancel
/// against the proposal, leaving the ratio N' p(N') / (N p(N)); under a
/// Jeffreys prior the move always accepts within the prior's support.
pub(crate) fn update_n_negbin_independence<R>(
    current: u64,
    n_obs: u64,
    one_minus_pstar: f64,
    prior: &NPrior,
    rng: &mut R,
) -> crate::error::Result<u64>
where
    R: Rng + ?Sized,
{
    let proposal = gibbs_update_n_negbin(n_obs, 1.0 - one_minus_pstar, rng)?;
    let lp_prop = log_prior_n(proposal, prior);
    if lp_prop == f64::NEG_INFINITY {
        return Ok(current);
    }
    let log_ratio =
        (proposal as f64).ln() + lp_prop - (current as f64).ln() - log_prior_n(current, prior);
    Ok(if accept(log_ratio, rng) {
        proposal
    } else {
        current
    })
}

/// Symmetric discrete-uniform Metropolis update of the population size.
/// Out-of-support proposals (below `min_n` or with zero prior mass) are
/// rejected and still count toward adaptation.
pub(crate) fn update_n_discrete<F, R>(
    current: u64,
    min_n: u64,
    log_target: &F,
    step: &AdaptiveStep,
    rng: &mut R,
) -> (u64, bool)
where
    F: Fn(u64) -> LogDensity,
    R: Rng + ?Sized,
{
    let offset = symmetric_discrete_offset(step.delta(), rng);
    let proposal = current as i64 + offset;
    if proposal < min_n as i64 {
        return (current, false);
    }
    let proposal = proposal as u64;
    let lp_prop = log_target(proposal);
    if lp_prop == f64::NEG_INFINITY {
        return (current, false);
    }
    let lp_cur = log_target(current);
    if accept(lp_prop - lp_cur, rng) {
        (proposal, true)
    } else {
        (current, false)
    }
}

/// Complete-data super-population sampler with unordered membership
/// indicators: Gibbs steps for z and psi, Metropolis updates elsewhere.
pub fn run_cdr(
    data: &CaptureData,
    priors: &PriorSpec,
    config: &SamplerConfig,
) -> Result<Vec<Trace>> {
    let shared = Shared::new(data, priors, config)?;
    run_chains(config.chains, |chain| run_chain_cdr(&shared, chain))
}

fn run_chain_cdr(sh: &Shared, chain: usize) -> Result<Trace> {
    let cfg = sh.cfg;
    let n = sh.n;
    let t = sh.t;
    let tf = f64::from(t);
    let m = cfg.m_upper as usize;
    let mut rng = chain_rng(cfg.seed, chain as u64);

    let mut alpha: f64 = StandardNormal.sample(&mut rng);
    let mut sigma2 = {
        let z: f64 = StandardNormal.sample(&mut rng);
        z.exp()
    };
    let sd0 = sigma2.sqrt();
    let mut eps: Vec<f64> = (0..m)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sd0
        })
        .collect();
    let mut psi: f64 = 0.05 + 0.45 * rng.random::<f64>();
    let mut z: Vec<bool> = (0..m).map(|i| i < n || rng.random::<f64>() < psi).collect();

    let mut scale_alpha = AdaptiveScale::new(0.5, cfg.adapt_target, cfg.adapt_window);
    let mut scale_ln_s2 = AdaptiveScale::new(0.5, cfg.adapt_target, cfg.adapt_window);
    // adaptive random-walk scales are only needed for observed individuals
    let mut scale_eps: Vec<AdaptiveScale> = (0..n)
        .map(|_| AdaptiveScale::new(1.0, cfg.adapt_target, cfg.adapt_window))
        .collect();
    let mut scale_shift = AdaptiveScale::new(0.3, cfg.adapt_target, cfg.adapt_window);
    let mut scale_group = AdaptiveScale::new(0.3, cfg.adapt_target, cfg.adapt_window);

    let mut trace = Trace::new(
        chain,
        cfg.thin,
        &["N", "alpha", "sigma2", "psi"],
        cfg.stored_samples(),
    );

    for it in 0..cfg.iterations {
        if it == cfg.burn_in {
            scale_alpha.freeze();
            scale_ln_s2.freeze();
            scale_eps.iter_mut().for_each(AdaptiveScale::freeze);
            scale_shift.freeze();
            scale_group.freeze();
        }

        // alpha: data terms of included individuals only
        {
            let target = |a: f64| -> LogDensity {
                let mut lp = normal_logpdf(a - sh.priors.alpha.mean, sh.priors.alpha.variance);
                for i in 0..m {
                    if z[i] {
                        lp += if i < n {
                            mh_individual_loglik(sh.y[i], t, a, eps[i])
                        } else {
                            tf * ln_logistic(-(a + eps[i]))
                        };
                    }
                }
                lp
            };
            let lp_cur = target(alpha);
            let (a_new, _, accepted) =
                rw_step(alpha, lp_cur, &target, scale_alpha.scale(), &mut rng);
            alpha = a_new;
            scale_alpha.record(accepted);
        }

        // variance: all super-population random effects are Gaussian
        {
            let sum_sq: f64 = eps.iter().map(|e| e * e).sum();
            let mf = m as f64;
            let target = |u: f64| -> LogDensity {
                let s2 = u.exp();
                if !s2.is_finite() || s2 <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                normal_logpdf_sum(mf, sum_sq, s2)
                    + inv_gamma_logpdf(s2, sh.priors.sigma2.shape, sh.priors.sigma2.rate)
                    + u
            };
            let u_cur = sigma2.ln();
            let lp_cur = target(u_cur);
            let (u_new, _, accepted) =
                rw_step(u_cur, lp_cur, &target, scale_ln_s2.scale(), &mut rng);
            if accepted {
                sigma2 = u_new.exp();
            }
            scale_ln_s2.record(accepted);
        }

        // group moves along the ridge directions, repeated as in the
        // semi-complete sweep
        for _ in 0..3 {
            // ridge translation (alpha, eps) -> (alpha + d, eps - d): data
            // terms are invariant, every super-population effect density moves
            {
                let delta = mixture_step(scale_shift.scale(), &mut rng);
                let alpha_prop = alpha + delta;
                let mut log_ratio =
                    normal_logpdf(alpha_prop - sh.priors.alpha.mean, sh.priors.alpha.variance)
                        - normal_logpdf(alpha - sh.priors.alpha.mean, sh.priors.alpha.variance);
                let inv_2s2 = 1.0 / (2.0 * sigma2);
                for e in &eps {
                    let shifted = e - delta;
                    log_ratio += (e * e - shifted * shifted) * inv_2s2;
                }
                let accepted = accept(log_ratio, &mut rng);
                if accepted {
                    alpha += delta;
                    for e in &mut eps {
                        *e -= delta;
                    }
                }
                scale_shift.record(accepted);
            }

            // joint scale move (sigma2, eps): effect densities cancel
            // against the Jacobian. The augmented indicators are summed out
            // of the acceptance ratio (each contributes psi q_i + 1 - psi),
            // so the move is not dragged by the current z configuration; z
            // is redrawn from its conditional right after the group moves.
            {
                let s = mixture_step(scale_group.scale(), &mut rng);
                let c = (0.5 * s).exp();
                let sigma2_prop = sigma2 * s.exp();
                let accepted = if sigma2_prop.is_finite() && sigma2_prop > 0.0 {
                    let mut log_ratio =
                        inv_gamma_logpdf(
                            sigma2_prop,
                            sh.priors.sigma2.shape,
                            sh.priors.sigma2.rate,
                        ) - inv_gamma_logpdf(sigma2, sh.priors.sigma2.shape, sh.priors.sigma2.rate)
                            + s;
                    for i in 0..n {
                        log_ratio += mh_individual_loglik(sh.y[i], t, alpha, c * eps[i])
                            - mh_individual_loglik(sh.y[i], t, alpha, eps[i]);
                    }
                    for e in &eps[n..] {
                        let q_prop = (tf * ln_logistic(-(alpha + c * e))).exp();
                        let q_cur = (tf * ln_logistic(-(alpha + e))).exp();
                        log_ratio += (psi * q_prop + 1.0 - psi).ln()
                            - (psi * q_cur + 1.0 - psi).ln();
                    }
                    accept(log_ratio, &mut rng)
                } else {
                    false
                };
                if accepted {
                    sigma2 *= s.exp();
                    for e in &mut eps {
                        *e *= c;
                    }
                }
                scale_group.record(accepted);
            }
        }

        // redraw the indicators immediately after the collapsed moves
        for i in n..m {
            let q = (tf * ln_logistic(-(alpha + eps[i]))).exp();
            z[i] = rng.random::<f64>() < z_inclusion_probability(psi, q);
        }

        // random effects: random-walk MH for observed individuals,
        // independence MH from the N(0, sigma2) prior for augmented ones
        // (the prior cancels, leaving the miss-probability ratio; an exact
        // conjugate draw when the individual is excluded)
        let sd_now = sigma2.sqrt();
        for i in 0..n {
            let yi = sh.y[i];
            let target = |e: f64| mh_individual_loglik(yi, t, alpha, e) + normal_logpdf(e, sigma2);
            let lp_cur = target(eps[i]);
            let (e_new, _, accepted) =
                rw_step(eps[i], lp_cur, &target, scale_eps[i].scale(), &mut rng);
            eps[i] = e_new;
            scale_eps[i].record(accepted);
        }
        for i in n..m {
            let zdraw: f64 = StandardNormal.sample(&mut rng);
            let proposal = sd_now * zdraw;
            if z[i] {
                let log_ratio =
                    tf * (ln_logistic(-(alpha + proposal)) - ln_logistic(-(alpha + eps[i])));
                if accept(log_ratio, &mut rng) {
                    eps[i] = proposal;
                }
            } else {
                eps[i] = proposal;
            }
        }

        // membership indicators and inclusion probability; the miss
        // probabilities depend only on alpha and eps, so the Gibbs pair is
        // iterated to cut through its mutual autocorrelation
        let q: Vec<f64> = eps[n..]
            .iter()
            .map(|e| (tf * ln_logistic(-(alpha + e))).exp())
            .collect();
        let mut sum_z = z.iter().filter(|&&b| b).count() as u64;
        for _ in 0..3 {
            for i in n..m {
                z[i] = rng.random::<f64>() < z_inclusion_probability(psi, q[i - n]);
            }
            sum_z = z.iter().filter(|&&b| b).count() as u64;
            psi = gibbs_update_psi(sh.priors.psi.a, sh.priors.psi.b, sum_z, m as u64, &mut rng)?;
        }

        if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
            trace.push_row(&[sum_z as f64, alpha, sigma2, psi]);
        }
    }

    trace.set_acceptance(vec![
        ("alpha".to_string(), scale_alpha.acceptance_rate()),
        ("sigma2".to_string(), scale_ln_s2.acceptance_rate()),
        (
            "eps".to_string(),
            scale_eps
                .iter()
                .map(AdaptiveScale::acceptance_rate)
                .sum::<f64>()
                / n as f64,
        ),
        ("shift".to_string(), scale_shift.acceptance_rate()),
        ("scale".to_string(), scale_group.acceptance_rate()),
    ]);
    Ok(trace)
}

/// Complete-data super-population sampler with ordered indicators: an
/// explicit prior on N (support truncated at M), discrete Metropolis
/// updates of N, and a Gaussian pseudo-prior for the random effects of
/// excluded pseudo-individuals, estimated from a pilot run of length
/// `burn_in`.
pub fn run_cdde(
    data: &CaptureData,
    priors: &PriorSpec,
    config: &SamplerConfig,
) -> Result<Vec<Trace>> {
    let shared = Shared::new(data, priors, config)?;
    let pseudo = estimate_pseudo_prior(&shared)?;
    run_chains(config.chains, |chain| {
        run_chain_cdde(&shared, &pseudo, chain)
    })
}

/// Pilot run for the pseudo-prior: a short ordered-indicator chain with the
/// pseudo-prior set to the model prior, collecting the random effects of
/// included-but-unobserved individuals. Falls back to a standard normal
/// when too few are collected to moment-match.
fn estimate_pseudo_prior(sh: &Shared) -> Result<GaussPseudoPrior> {
    let pilot_iters = sh.cfg.burn_in;
    if pilot_iters < 20 {
        return Ok(GaussPseudoPrior { mean: 0.0, sd: 1.0 });
    }
    let pilot_cfg = SamplerConfig {
        iterations: pilot_iters,
        burn_in: pilot_iters / 2,
        thin: 1,
        chains: 1,
        ..sh.cfg.clone()
    };
    let pilot_sh = Shared {
        y: sh.y.clone(),
        n: sh.n,
        t: sh.t,
        rule: sh.rule.clone(),
        priors: sh.priors,
        cfg: &pilot_cfg,
    };
    let mut samples = Vec::new();
    run_chain_cdde_inner(
        &pilot_sh,
        None,
        sh.cfg.chains, // first RNG stream not used by a main chain
        Some(&mut samples),
    )?;
    if samples.len() < 10 {
        return Ok(GaussPseudoPrior { mean: 0.0, sd: 1.0 });
    }
    let len = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / len;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (len - 1.0);
    Ok(GaussPseudoPrior {
        mean,
        sd: var.sqrt().max(1e-3),
    })
}

fn run_chain_cdde(sh: &Shared, pseudo: &GaussPseudoPrior, chain: usize) -> Result<Trace> {
    run_chain_cdde_inner(sh, Some(pseudo), chain, None)
}

/// Ordered-indicator chain. With `pseudo = None` the pseudo-prior tracks
/// the model prior N(0, sigma2); this mode is used by the pilot run, which
/// may also collect the random effects of included-but-unobserved
/// individuals through `collect`.
fn run_chain_cdde_inner(
    sh: &Shared,
    pseudo: Option<&GaussPseudoPrior>,
    rng_stream: usize,
    mut collect: Option<&mut Vec<f64>>,
) -> Result<Trace> {
    let cfg = sh.cfg;
    let n = sh.n;
    let n_u64 = n as u64;
    let t = sh.t;
    let tf = f64::from(t);
    let m = cfg.m_upper as usize;
    let mut rng = chain_rng(cfg.seed, rng_stream as u64);

    let mut alpha: f64 = StandardNormal.sample(&mut rng);
    let mut sigma2 = {
        let z: f64 = StandardNormal.sample(&mut rng);
        z.exp()
    };
    let sd0 = sigma2.sqrt();
    let mut eps: Vec<f64> = (0..m)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sd0
        })
        .collect();
    let mut n_total: u64 = (n_u64 + 1 + (rng.random::<f64>() * n as f64) as u64).min(m as u64);
    if let Some(bound) = sh.priors.n.upper_bound() {
        n_total = n_total.min(bound);
    }

    let mut scale_alpha = AdaptiveScale::new(0.5, cfg.adapt_target, cfg.adapt_window);
    let mut scale_ln_s2 = AdaptiveScale::new(0.5, cfg.adapt_target, cfg.adapt_window);
    // adaptive random-walk scales are only needed for observed individuals
    let mut scale_eps: Vec<AdaptiveScale> = (0..n)
        .map(|_| AdaptiveScale::new(1.0, cfg.adapt_target, cfg.adapt_window))
        .collect();
    let mut scale_shift = AdaptiveScale::new(0.3, cfg.adapt_target, cfg.adapt_window);
    let mut scale_group = AdaptiveScale::new(0.3, cfg.adapt_target, cfg.adapt_window);
    let mut step_n = AdaptiveStep::new(5, cfg.adapt_target, cfg.adapt_window);

    // pseudo-prior density and sampler; during the pilot these track the
    // current sigma2
    let ps_logpdf = |e: f64, sigma2_now: f64| -> LogDensity {
        match pseudo {
            Some(ps) => ps.logpdf(e),
            None => normal_logpdf(e, sigma2_now),
        }
    };

    let mut trace = Trace::new(
        rng_stream,
        cfg.thin,
        &["N", "alpha", "sigma2"],
        cfg.stored_samples(),
    );

    for it in 0..cfg.iterations {
        if it == cfg.burn_in {
            scale_alpha.freeze();
            scale_ln_s2.freeze();
            scale_eps.iter_mut().for_each(AdaptiveScale::freeze);
            scale_shift.freeze();
            scale_group.freeze();
            step_n.freeze();
        }
        let included = n_total as usize;
        // effects tied to the model prior N(0, sigma2): the included block,
        // or everything while the pilot's pseudo-prior tracks sigma2
        let gaussian_block = if pseudo.is_some() { included } else { m };

        // alpha
        {
            let target = |a: f64| -> LogDensity {
                let mut lp = normal_logpdf(a - sh.priors.alpha.mean, sh.priors.alpha.variance);
                for i in 0..included {
                    lp += if i < n {
                        mh_individual_loglik(sh.y[i], t, a, eps[i])
                    } else {
                        tf * ln_logistic(-(a + eps[i]))
                    };
                }
                lp
            };
            let lp_cur = target(alpha);
            let (a_new, _, accepted) =
                rw_step(alpha, lp_cur, &target, scale_alpha.scale(), &mut rng);
            alpha = a_new;
            scale_alpha.record(accepted);
        }

        // sigma2: only included individuals are scored under the model
        // prior; under the pilot's tracking pseudo-prior the excluded ones
        // follow it too
        {
            let count = gaussian_block as f64;
            let sum_sq: f64 = eps[..gaussian_block].iter().map(|e| e * e).sum();
            let target = |u: f64| -> LogDensity {
                let s2 = u.exp();
                if !s2.is_finite() || s2 <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                normal_logpdf_sum(count, sum_sq, s2)
                    + inv_gamma_logpdf(s2, sh.priors.sigma2.shape, sh.priors.sigma2.rate)
                    + u
            };
            let u_cur = sigma2.ln();
            let lp_cur = target(u_cur);
            let (u_new, _, accepted) =
                rw_step(u_cur, lp_cur, &target, scale_ln_s2.scale(), &mut rng);
            if accepted {
                sigma2 = u_new.exp();
            }
            scale_ln_s2.record(accepted);
        }

        // group moves along the ridge directions, repeated as in the
        // semi-complete sweep
        for _ in 0..3 {
            // ridge translation over the effects tied to the model prior
            {
                let delta = mixture_step(scale_shift.scale(), &mut rng);
                let alpha_prop = alpha + delta;
                let mut log_ratio =
                    normal_logpdf(alpha_prop - sh.priors.alpha.mean, sh.priors.alpha.variance)
                        - normal_logpdf(alpha - sh.priors.alpha.mean, sh.priors.alpha.variance);
                let inv_2s2 = 1.0 / (2.0 * sigma2);
                for e in &eps[..gaussian_block] {
                    let shifted = e - delta;
                    log_ratio += (e * e - shifted * shifted) * inv_2s2;
                }
                // excluded effects under a fixed pseudo-prior stay put, so data
                // terms of included individuals are invariant and nothing else
                // moves
                let accepted = accept(log_ratio, &mut rng);
                if accepted {
                    alpha += delta;
                    for e in &mut eps[..gaussian_block] {
                        *e -= delta;
                    }
                }
                scale_shift.record(accepted);
            }

            // joint scale move over the same block
            {
                let s = mixture_step(scale_group.scale(), &mut rng);
                let c = (0.5 * s).exp();
                let sigma2_prop = sigma2 * s.exp();
                let accepted = if sigma2_prop.is_finite() && sigma2_prop > 0.0 {
                    let mut log_ratio =
                        inv_gamma_logpdf(
                            sigma2_prop,
                            sh.priors.sigma2.shape,
                            sh.priors.sigma2.rate,
                        ) - inv_gamma_logpdf(sigma2, sh.priors.sigma2.shape, sh.priors.sigma2.rate)
                            + s;
                    for i in 0..included {
                        log_ratio += if i < n {
                            mh_individual_loglik(sh.y[i], t, alpha, c * eps[i])
                                - mh_individual_loglik(sh.y[i], t, alpha, eps[i])
                        } else {
                            tf * (ln_logistic(-(alpha + c * eps[i]))
                                - ln_logistic(-(alpha + eps[i])))
                        };
                    }
                    accept(log_ratio, &mut rng)
                } else {
                    false
                };
                if accepted {
                    sigma2 *= s.exp();
                    for e in &mut eps[..gaussian_block] {
                        *e *= c;
                    }
                }
                scale_group.record(accepted);
            }
        }

        // random effects: random-walk MH for observed individuals,
        // independence MH from the N(0, sigma2) prior for included-but-
        // unobserved ones, and exact draws from the pseudo-prior for
        // excluded ones
        let sd_now = sigma2.sqrt();
        for i in 0..m {
            if i < n {
                let yi = sh.y[i];
                let target = |e: f64| -> LogDensity {
                    mh_individual_loglik(yi, t, alpha, e) + normal_logpdf(e, sigma2)
                };
                let lp_cur = target(eps[i]);
                let (e_new, _, accepted) =
                    rw_step(eps[i], lp_cur, &target, scale_eps[i].scale(), &mut rng);
                eps[i] = e_new;
                scale_eps[i].record(accepted);
            } else if i < included {
                let zdraw: f64 = StandardNormal.sample(&mut rng);
                let proposal = sd_now * zdraw;
                let log_ratio =
                    tf * (ln_logistic(-(alpha + proposal)) - ln_logistic(-(alpha + eps[i])));
                if accept(log_ratio, &mut rng) {
                    eps[i] = proposal;
                }
            } else {
                let zdraw: f64 = StandardNormal.sample(&mut rng);
                eps[i] = match pseudo {
                    Some(ps) => ps.mean + ps.sd * zdraw,
                    None => sd_now * zdraw,
                };
            }
        }

        // population size: moving the boundary swaps individuals between
        // the model prior plus miss-likelihood and the pseudo-prior; the
        // walk is repeated since each step only touches the swapped block
        for _ in 0..3 {
            let delta = step_n.delta();
            let offset = symmetric_discrete_offset(delta, &mut rng);
            let proposal = n_total as i64 + offset;
            let accepted = if proposal < n_u64 as i64 || proposal > m as i64 {
                false
            } else {
                let proposal = proposal as u64;
                let mut log_ratio = log_falling_factorial(proposal, n_u64)?
                    - log_falling_factorial(n_total, n_u64)?
                    + log_prior_n(proposal, &sh.priors.n)
                    - log_prior_n(n_total, &sh.priors.n);
                if log_ratio > f64::NEG_INFINITY {
                    let (lo, hi, sign) = if proposal >= n_total {
                        (n_total as usize, proposal as usize, 1.0)
                    } else {
                        (proposal as usize, n_total as usize, -1.0)
                    };
                    for e in &eps[lo..hi] {
                        log_ratio += sign
                            * (tf * ln_logistic(-(alpha + e)) + normal_logpdf(*e, sigma2)
                                - ps_logpdf(*e, sigma2));
                    }
                }
                if accept(log_ratio, &mut rng) {
                    n_total = proposal;
                    true
                } else {
                    false
                }
            };
            step_n.record(accepted);
        }

        if it >= cfg.burn_in {
            if let Some(buf) = collect.as_deref_mut() {
                buf.extend_from_slice(&eps[n..n_total as usize]);
            }
            if (it - cfg.burn_in) % cfg.thin == 0 {
                trace.push_row(&[n_total as f64, alpha, sigma2]);
            }
        }
    }

    trace.set_acceptance(vec![
        ("alpha".to_string(), scale_alpha.acceptance_rate()),
        ("sigma2".to_string(), scale_ln_s2.acceptance_rate()),
        (
            "eps".to_string(),
            scale_eps[..n]
                .iter()
                .map(AdaptiveScale::acceptance_rate)
                .sum::<f64>()
                / n as f64,
        ),
        ("shift".to_string(), scale_shift.acceptance_rate()),
        ("scale".to_string(), scale_group.acceptance_rate()),
        ("N".to_string(), step_n.acceptance_rate()),
    ]);
    Ok(trace)
}
