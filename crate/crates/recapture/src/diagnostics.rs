//! Convergence diagnostics and posterior summaries: effective sample size
//! via Geyer's initial monotone positive sequence, the Brooks-Gelman-Rubin
//! potential scale reduction factor, and the tabular summary used in run
//! reports.

use serde::Serialize;

use crate::error::{Error, Result};

/// Effective sample size estimate. `degenerate` flags a constant input, for
/// which the ESS is reported as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssEstimate {
    pub value: f64,
    pub degenerate: bool,
}

/// Effective sample size of one chain: L / (1 + 2 sum rho_k), with the
/// autocorrelation sum truncated by Geyer's initial monotone positive
/// sequence on paired lags. Clamped to (0, 2L].
pub fn ess(samples: &[f64]) -> Result<EssEstimate> {
    let len = samples.len();
    if len < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 samples for an ESS estimate, got {len}"
        )));
    }
    let lf = len as f64;
    let mean = samples.iter().sum::<f64>() / lf;
    let var0 = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / lf;
    if var0 == 0.0 || !var0.is_finite() {
        return Ok(EssEstimate {
            value: 0.0,
            degenerate: true,
        });
    }
    let autocorr = |k: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..len - k {
            s += (samples[i] - mean) * (samples[i + k] - mean);
        }
        s / (lf * var0)
    };
    // paired-lag sums Gamma_m = rho_{2m} + rho_{2m+1}; keep while positive,
    // then enforce monotone non-increase
    let mut gamma_sum = 0.0;
    let mut prev_gamma = f64::INFINITY;
    let mut m = 0usize;
    loop {
        let lag0 = 2 * m;
        let lag1 = 2 * m + 1;
        if lag1 >= len {
            break;
        }
        let g = autocorr(lag0) + autocorr(lag1);
        if g <= 0.0 {
            break;
        }
        let g = g.min(prev_gamma);
        gamma_sum += g;
        prev_gamma = g;
        m += 1;
    }
    // tau = -1 + 2 * sum Gamma_m (Gamma_0 contains rho_0 = 1)
    let tau = (2.0 * gamma_sum - 1.0).max(0.5 / lf);
    let value = (lf / tau).clamp(f64::MIN_POSITIVE, 2.0 * lf);
    Ok(EssEstimate {
        value,
        degenerate: false,
    })
}

/// Brooks-Gelman-Rubin potential scale reduction factor over two or more
/// equal-length chains, with the (m+1)/m sampling-variability correction.
pub fn psrf(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "PSRF needs at least 2 chains".into(),
        ));
    }
    let len = chains[0].len();
    if len < 10 {
        return Err(Error::InvalidArgument(
            "PSRF needs chains of length >= 10".into(),
        ));
    }
    if chains.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidArgument(
            "PSRF needs equal-length chains".into(),
        ));
    }
    let lf = len as f64;
    let mf = m as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / lf).collect();
    let grand = means.iter().sum::<f64>() / mf;
    let b = lf / (mf - 1.0) * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, &mu)| c.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (lf - 1.0))
        .sum::<f64>()
        / mf;
    if w == 0.0 {
        return Ok(if b > 0.0 { f64::INFINITY } else { 1.0 });
    }
    let v_over_w = (lf - 1.0) / lf + b / (lf * w);
    let r2 = (mf + 1.0) / mf * v_over_w - (lf - 1.0) / (mf * lf);
    Ok(r2.max(0.0).sqrt())
}

/// Posterior summary of one monitored quantity in the reporting format of
/// the run report: moments, central 95% interval, ESS (summed over chains),
/// throughput and between-chain PSRF.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ess: f64,
    pub ess_per_second: f64,
    pub psrf: Option<f64>,
    pub degenerate: bool,
}

/// Linear interpolation between order statistics (the "type 7" rule);
/// `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Pool chains for one quantity and summarise. `wall_seconds` is the wall
/// time of the sampling run; ESS is the sum of per-chain estimates, and the
/// PSRF is reported when two or more chains are given.
pub fn summarize(chains: &[&[f64]], wall_seconds: f64) -> Result<Summary> {
    if chains.is_empty() || chains.iter().any(|c| c.is_empty()) {
        return Err(Error::InvalidArgument(
            "summarize needs non-empty traces".into(),
        ));
    }
    let mut pooled: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let lf = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / lf;
    let sd = if pooled.len() > 1 {
        (pooled.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (lf - 1.0)).sqrt()
    } else {
        0.0
    };
    pooled.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let median = quantile(&pooled, 0.5);
    let ci_low = quantile(&pooled, 0.025);
    let ci_high = quantile(&pooled, 0.975);

    let mut ess_total = 0.0;
    let mut degenerate = false;
    for c in chains {
        let e = ess(c)?;
        ess_total += e.value;
        degenerate |= e.degenerate;
    }
    let psrf_value = if chains.len() >= 2 && chains.iter().all(|c| c.len() == chains[0].len()) {
        psrf(&chains.iter().map(|c| c.to_vec()).collect::<Vec<_>>()).ok()
    } else {
        None
    };
    Ok(Summary {
        mean,
        median,
        sd,
        ci_low,
        ci_high,
        ess: ess_total,
        ess_per_second: if wall_seconds > 0.0 {
            ess_total / wall_seconds
        } else {
            f64::NAN
        },
        psrf: psrf_value,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn iid_normal(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn ess_of_iid_noise_near_length() {
        let samples = iid_normal(100_000, 1);
        let e = ess(&samples).unwrap();
        let ratio = e.value / samples.len() as f64;
        assert!((0.9..1.1).contains(&ratio), "ESS/L = {ratio}");
        assert!(!e.degenerate);
    }

    #[test]
    fn ess_of_ar1_matches_analytic_iact() {
        // AR(1) with coefficient rho has ESS = L (1 - rho) / (1 + rho)
        let rho: f64 = 0.9;
        let len = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let innovation_sd = (1.0 - rho * rho).sqrt();
        let mut x = 0.0;
        let samples: Vec<f64> = (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = rho * x + innovation_sd * z;
                x
            })
            .collect();
        let e = ess(&samples).unwrap();
        let expect = len as f64 * (1.0 - rho) / (1.0 + rho);
        assert!(
            (e.value / expect - 1.0).abs() < 0.2,
            "ESS = {}, analytic = {expect}",
            e.value
        );
    }

    #[test]
    fn ess_constant_input_degenerate() {
        let e = ess(&vec![3.5; 100]).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.degenerate);
        assert!(ess(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn ess_invariant_under_affine_transform() {
        let samples = iid_normal(20_000, 3);
        let shifted: Vec<f64> = samples.iter().map(|x| 100.0 - 7.0 * x).collect();
        let a = ess(&samples).unwrap().value;
        let b = ess(&shifted).unwrap().value;
        assert!((a / b - 1.0).abs() < 1e-10);
    }

    #[test]
    fn psrf_iid_chains_near_one() {
        let chains: Vec<Vec<f64>> = (0..4).map(|s| iid_normal(10_000, 10 + s)).collect();
        let r = psrf(&chains).unwrap();
        assert!((0.99..1.02).contains(&r), "psrf = {r}");
    }

    #[test]
    fn psrf_separated_constant_chains_large() {
        let chains = vec![vec![0.0; 100], vec![1.0; 100]];
        let r = psrf(&chains).unwrap();
        assert!(r > 1.1);
    }

    #[test]
    fn psrf_identical_chains_at_most_one() {
        let c = iid_normal(5_000, 4);
        let r = psrf(&[c.clone(), c]).unwrap();
        assert!(r <= 1.0 + 1e-6, "psrf = {r}");
    }

    #[test]
    fn psrf_invariant_under_common_affine_transform() {
        let chains: Vec<Vec<f64>> = (0..3).map(|s| iid_normal(5_000, 20 + s)).collect();
        let mapped: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|x| 2.5 * x - 4.0).collect())
            .collect();
        let a = psrf(&chains).unwrap();
        let b = psrf(&mapped).unwrap();
        assert!((a - b).abs() < 1e-10);
        assert!(psrf(&chains[..1].to_vec()).is_err());
    }

    #[test]
    fn summarize_small_example() {
        let samples = [1.0, 2.0, 3.0, 4.0, 5.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        // quantiles computed over the pooled, sorted values
        let s = summarize(&[&samples], 2.0).unwrap();
        assert!((s.mean - 3.0).abs() < 1e-12);
        assert!((s.median - 3.0).abs() < 1e-12);
        // direct type-7 check on the classic 5-point example
        let sorted = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((quantile(&sorted, 0.025) - 1.1).abs() < 1e-12);
        assert!((quantile(&sorted, 0.975) - 4.9).abs() < 1e-12);
        assert!((quantile(&sorted, 0.5) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn summarize_invariant_to_chain_order() {
        let a = iid_normal(2_000, 30);
        let b = iid_normal(2_000, 31);
        let s1 = summarize(&[&a, &b], 1.0).unwrap();
        let s2 = summarize(&[&b, &a], 1.0).unwrap();
        // quantiles work on the sorted pool, so they match exactly; moments
        // only up to summation order
        assert_eq!(s1.median, s2.median);
        assert_eq!(s1.ci_low, s2.ci_low);
        assert_eq!(s1.ci_high, s2.ci_high);
        assert!((s1.mean - s2.mean).abs() < 1e-12);
        assert!((s1.sd - s2.sd).abs() < 1e-12);
    }

    #[test]
    fn summarize_integer_median_lands_on_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<f64> = (0..10_001)
            .map(|_| rng.random_range(68..200) as f64)
            .collect();
        let s = summarize(&[&samples], 1.0).unwrap();
        assert_eq!(s.median.fract(), 0.0);
    }
}
