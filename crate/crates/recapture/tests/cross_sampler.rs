//! Cross-sampler consistency: all four samplers target (essentially) the
//! same posterior, so their estimates must agree within Monte-Carlo error,
//! and the ordered-indicator sampler must match exhaustive enumeration on a
//! tiny instance.

mod common;

use common::{mc_standard_error, mean_of, pooled, serial_guard, simulate_mh};

use recapture::diagnostics::ess;
use recapture::integrate::{gauss_hermite_rule, mh_prob_unobserved};
use recapture::likelihood::{log_falling_factorial, log_prior_n};
use recapture::model::{BetaPrior, CaptureData, InvGammaPrior, NPrior, NormalPrior, PriorSpec};
use recapture::samplers::{run_cdde_mh, run_cdr_mh, run_scd1_mh, run_scd2_mh, SamplerConfig};

#[test]
fn four_samplers_agree_on_simulated_data() {
    let _guard = serial_guard();
    // about 30 observed individuals over 5 occasions
    let data = simulate_mh(40, 5, -1.2, 0.8, 2024);
    assert!((20..=40).contains(&data.n()), "n = {}", data.n());
    let priors = PriorSpec {
        n: NPrior::TruncatedJeffreys { m: 300 },
        ..Default::default()
    };
    let cfg = SamplerConfig {
        iterations: 30_000,
        burn_in: 5_000,
        thin: 1,
        chains: 3,
        seed: 5,
        m_upper: 300,
        ..Default::default()
    };

    let runs = [
        ("scd1", run_scd1_mh(&data, &priors, &cfg).unwrap()),
        ("scd2", run_scd2_mh(&data, &priors, &cfg).unwrap()),
        ("cdr", run_cdr_mh(&data, &priors, &cfg).unwrap()),
        ("cdde", run_cdde_mh(&data, &priors, &cfg).unwrap()),
    ];
    let estimates: Vec<(&str, f64, f64)> = runs
        .iter()
        .map(|(name, traces)| {
            (
                *name,
                mean_of(&pooled(traces, "N")),
                mc_standard_error(traces, "N"),
            )
        })
        .collect();
    for i in 0..estimates.len() {
        for j in i + 1..estimates.len() {
            let (na, ma, sa) = estimates[i];
            let (nb, mb, sb) = estimates[j];
            let diff = (ma - mb).abs();
            let combined = (sa * sa + sb * sb).sqrt();
            assert!(
                diff <= 3.0 * combined,
                "{na} mean {ma:.2} vs {nb} mean {mb:.2}: diff {diff:.2} > 3 x {combined:.2}"
            );
        }
    }
}

#[test]
fn cdr_matches_enumeration_on_tiny_instance() {
    let _guard = serial_guard();
    // same tiny setup, unordered indicators: the exact N margin is
    // proportional to C(M-n, N-n) (1-p*)^(N-n) B(N+a, M-N+b)
    let alpha0 = -0.4;
    let sigma0sq = 0.49;
    let (a_psi, b_psi) = (0.7, 1.3);
    let data = CaptureData::from_rows(vec![vec![1, 0, 1], vec![0, 1, 0]]).unwrap();
    let priors = PriorSpec {
        n: NPrior::TruncatedJeffreys { m: 4 },
        alpha: NormalPrior {
            mean: alpha0,
            variance: 1e-12,
        },
        sigma2: InvGammaPrior {
            shape: 1e8,
            rate: (1e8 + 1.0) * sigma0sq,
        },
        psi: BetaPrior { a: a_psi, b: b_psi },
        ..Default::default()
    };
    let cfg = SamplerConfig {
        iterations: 60_000,
        burn_in: 10_000,
        thin: 1,
        chains: 3,
        seed: 11,
        m_upper: 4,
        ..Default::default()
    };
    let traces = run_cdr_mh(&data, &priors, &cfg).unwrap();
    let samples = pooled(&traces, "N");

    let rule = gauss_hermite_rule(100).unwrap();
    let omp = mh_prob_unobserved(alpha0, sigma0sq.sqrt(), 3, &rule).unwrap();
    let ln_beta = |x: f64, y: f64| libm::lgamma(x) + libm::lgamma(y) - libm::lgamma(x + y);
    let choose = |n: u64, k: u64| {
        libm::lgamma(n as f64 + 1.0)
            - libm::lgamma(k as f64 + 1.0)
            - libm::lgamma((n - k) as f64 + 1.0)
    };
    let log_weights: Vec<f64> = (2..=4u64)
        .map(|n_total| {
            choose(2, n_total - 2)
                + (n_total - 2) as f64 * omp.ln()
                + ln_beta(n_total as f64 + a_psi, 4.0 - n_total as f64 + b_psi)
        })
        .collect();
    let max = log_weights
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let norm: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let exact: Vec<f64> = log_weights.iter().map(|w| (w - max).exp() / norm).collect();

    let ess_total: f64 = traces
        .iter()
        .map(|t| ess(t.column("N").unwrap()).unwrap().value)
        .sum();
    for (k, &p_exact) in exact.iter().enumerate() {
        let n_total = (k + 2) as f64;
        let p_hat = samples.iter().filter(|&&x| x == n_total).count() as f64 / samples.len() as f64;
        let se = (p_exact * (1.0 - p_exact) / ess_total).sqrt();
        assert!(
            (p_hat - p_exact).abs() <= 3.0 * se.max(1e-4),
            "P(N={n_total}): sampled {p_hat:.4}, exact {p_exact:.4}, 3se = {:.4}",
            3.0 * se.max(1e-4)
        );
    }
}

#[test]
fn cdde_matches_enumeration_on_tiny_instance() {
    let _guard = serial_guard();
    // n = 2 observed individuals, M = 4; detection parameters pinned by
    // near-degenerate priors so the N margin can be enumerated exactly
    let alpha0 = -0.4;
    let sigma0sq = 0.49;
    let data = CaptureData::from_rows(vec![vec![1, 0, 1], vec![0, 1, 0]]).unwrap();
    let priors = PriorSpec {
        n: NPrior::TruncatedJeffreys { m: 4 },
        alpha: NormalPrior {
            mean: alpha0,
            variance: 1e-12,
        },
        sigma2: InvGammaPrior {
            shape: 1e8,
            rate: (1e8 + 1.0) * sigma0sq,
        },
        ..Default::default()
    };
    let cfg = SamplerConfig {
        iterations: 60_000,
        burn_in: 10_000,
        thin: 1,
        chains: 3,
        seed: 7,
        m_upper: 4,
        ..Default::default()
    };
    let traces = run_cdde_mh(&data, &priors, &cfg).unwrap();
    let samples = pooled(&traces, "N");

    // enumeration over the ordered indicator configurations N = 2, 3, 4:
    // the terms involving the observed histories are common, leaving the
    // ordering factor, the never-observed integral per extra individual,
    // and the prior
    let rule = gauss_hermite_rule(100).unwrap();
    let omp = mh_prob_unobserved(alpha0, sigma0sq.sqrt(), 3, &rule).unwrap();
    let log_weights: Vec<f64> = (2..=4u64)
        .map(|n_total| {
            log_falling_factorial(n_total, 2).unwrap()
                + (n_total - 2) as f64 * omp.ln()
                + log_prior_n(n_total, &priors.n)
        })
        .collect();
    let max = log_weights
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let norm: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let exact: Vec<f64> = log_weights.iter().map(|w| (w - max).exp() / norm).collect();

    let ess_total: f64 = traces
        .iter()
        .map(|t| ess(t.column("N").unwrap()).unwrap().value)
        .sum();
    for (k, &p_exact) in exact.iter().enumerate() {
        let n_total = (k + 2) as f64;
        let p_hat = samples.iter().filter(|&&x| x == n_total).count() as f64 / samples.len() as f64;
        let se = (p_exact * (1.0 - p_exact) / ess_total).sqrt();
        assert!(
            (p_hat - p_exact).abs() <= 2.0 * se.max(1e-4),
            "P(N={n_total}): sampled {p_hat:.4}, exact {p_exact:.4}, 2se = {:.4}",
            2.0 * se.max(1e-4)
        );
    }
}
