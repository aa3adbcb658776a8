//! MCMC samplers for the abundance models.
//!
//! Four samplers are provided for each model family:
//!
//! * `scd1` — semi-complete data likelihood with an explicit prior on the
//!   population size, updated by adaptive discrete Metropolis-Hastings;
//! * `scd2` — semi-complete data likelihood with a (truncation-free)
//!   Jeffreys prior, where N - n is drawn from its Negative-Binomial full
//!   conditional;
//! * `cdr` — complete-data super-population sampler with unordered
//!   membership indicators and an inclusion probability psi;
//! * `cdde` — complete-data super-population sampler with ordered
//!   indicators, an explicit prior on N and a pseudo-prior for the random
//!   effects of excluded pseudo-individuals.
//!
//! Chains are independent and reproducible: chain c uses a ChaCha8 stream
//! derived from (seed, c), so a (seed, config, data) triple fixes every
//! trace bit-exactly regardless of how chains are scheduled.

pub mod adapt;
mod mh;
mod secr;

pub use mh::{
    run_cdde as run_cdde_mh, run_cdr as run_cdr_mh, run_scd1 as run_scd1_mh,
    run_scd2 as run_scd2_mh,
};
pub use secr::{
    run_cdde as run_cdde_secr, run_cdr as run_cdr_secr, run_scd1 as run_scd1_secr,
    run_scd2 as run_scd2_secr,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Run-length, reproducibility and adaptation settings shared by all
/// samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub seed: u64,
    /// Super-population bound / prior truncation point where required.
    #[serde(default = "default_m_upper")]
    pub m_upper: u64,
    #[serde(default = "default_quadrature_order")]
    pub quadrature_order: usize,
    #[serde(default = "default_adapt_target")]
    pub adapt_target: f64,
    #[serde(default = "default_adapt_window")]
    pub adapt_window: u32,
    /// Validation toggle: recompute the unobserved-probability integral
    /// immediately before each N update instead of reusing the value cached
    /// at the last parameter change. Results must be identical.
    #[serde(default)]
    pub recompute_pstar_always: bool,
}

fn default_iterations() -> usize {
    10_000
}

fn default_burn_in() -> usize {
    1_000
}

fn default_thin() -> usize {
    1
}

fn default_chains() -> usize {
    3
}

fn default_m_upper() -> u64 {
    1000
}

fn default_quadrature_order() -> usize {
    100
}

fn default_adapt_target() -> f64 {
    0.44
}

fn default_adapt_window() -> u32 {
    50
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            burn_in: default_burn_in(),
            thin: default_thin(),
            chains: default_chains(),
            seed: 0,
            m_upper: default_m_upper(),
            quadrature_order: default_quadrature_order(),
            adapt_target: default_adapt_target(),
            adapt_window: default_adapt_window(),
            recompute_pstar_always: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, n_observed: usize) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidConfig(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::InvalidConfig("need at least one chain".into()));
        }
        if self.m_upper < n_observed as u64 {
            return Err(Error::InvalidConfig(format!(
                "upper bound M = {} below number observed n = {n_observed}",
                self.m_upper
            )));
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return Err(Error::InvalidConfig(
                "adapt_target must lie in (0, 1)".into(),
            ));
        }
        if self.adapt_window == 0 {
            return Err(Error::InvalidConfig(
                "adapt_window must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of stored samples per chain.
    pub fn stored_samples(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// Per-chain RNG: one ChaCha8 stream per chain id, derived from the run
/// seed. Stream 0..chains-1 belong to the chains; helpers (pilot runs) use
/// streams from `chains` upward.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stored samples of the monitored quantities for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    chain: usize,
    thin: usize,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    acceptance: Vec<(String, f64)>,
}

impl Trace {
    pub fn new(chain: usize, thin: usize, names: &[&str], capacity: usize) -> Self {
        Self {
            chain,
            thin,
            names: names.iter().map(|s| s.to_string()).collect(),
            columns: names.iter().map(|_| Vec::with_capacity(capacity)).collect(),
            acceptance: Vec::new(),
        }
    }

    pub fn from_columns(
        chain: usize,
        thin: usize,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::InvalidData(
                "trace name/column count mismatch".into(),
            ));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(Error::InvalidData(
                    "trace columns have unequal lengths".into(),
                ));
            }
        }
        Ok(Self {
            chain,
            thin,
            names,
            columns,
            acceptance: Vec::new(),
        })
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.columns.len());
        for (col, &v) in self.columns.iter_mut().zip(row) {
            col.push(v);
        }
    }

    pub fn set_acceptance(&mut self, rates: Vec<(String, f64)>) {
        self.acceptance = rates;
    }

    pub fn chain(&self) -> usize {
        self.chain
    }

    pub fn thin(&self) -> usize {
        self.thin
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn acceptance(&self) -> &[(String, f64)] {
        &self.acceptance
    }
}

/// Gibbs draw of the population size under a Jeffreys prior: N - n follows
/// a Negative Binomial with index n and success probability p*, in the
/// count-of-failures parameterisation f(x) = C(x+n-1, x) p*^n (1-p*)^x.
/// Sampled as a Gamma-Poisson mixture.
pub fn gibbs_update_n_negbin<R: Rng + ?Sized>(n_obs: u64, p_star: f64, rng: &mut R) -> Result<u64> {
    if n_obs == 0 {
        return Err(Error::InvalidArgument(
            "Negative-Binomial index n must be positive".into(),
        ));
    }
    if !(p_star > 0.0 && p_star <= 1.0) {
        return Err(Error::DegenerateFit(format!(
            "detection probability p* = {p_star}; expected unobserved count is unbounded"
        )));
    }
    let odds = (1.0 - p_star) / p_star;
    if odds == 0.0 {
        return Ok(n_obs);
    }
    let lambda: f64 = Gamma::new(n_obs as f64, odds)
        .map_err(|e| Error::DegenerateFit(format!("Gamma mixing draw failed: {e}")))?
        .sample(rng);
    if lambda == 0.0 {
        return Ok(n_obs);
    }
    let x: f64 = Poisson::new(lambda)
        .map_err(|e| Error::DegenerateFit(format!("Poisson draw failed at mean {lambda}: {e}")))?
        .sample(rng);
    Ok(n_obs + x as u64)
}

/// Conjugate Gibbs draw for the inclusion probability:
/// psi ~ Beta(a + sum z, b + M - sum z).
pub fn gibbs_update_psi<R: Rng + ?Sized>(
    a: f64,
    b: f64,
    sum_z: u64,
    m: u64,
    rng: &mut R,
) -> Result<f64> {
    let beta = Beta::new(a + sum_z as f64, b + (m - sum_z) as f64)
        .map_err(|e| Error::InvalidArgument(format!("Beta draw failed: {e}")))?;
    Ok(beta.sample(rng))
}

/// Full-conditional inclusion probability of a pseudo-individual whose
/// history is all-zero: psi q / (psi q + 1 - psi), with q the probability
/// of that all-zero history given its random effect.
pub(crate) fn z_inclusion_probability(psi: f64, q: f64) -> f64 {
    let num = psi * q;
    num / (num + (1.0 - psi))
}
