//! Helpers shared by the integration test suites.

use std::sync::{Mutex, OnceLock, PoisonError};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use recapture::diagnostics::ess;
use recapture::model::CaptureData;
use recapture::samplers::Trace;

/// Heavy suites run one test at a time so wall-clock comparisons are fair
/// and chain threads are not oversubscribed.
pub fn serial_guard() -> std::sync::MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(PoisonError::into_inner)
}

/// Simulate capture histories under the logit-normal model, dropping
/// never-detected individuals.
#[allow(dead_code)] // not every suite simulates
pub fn simulate_mh(n_true: usize, t: usize, alpha: f64, sigma: f64, seed: u64) -> CaptureData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for _ in 0..n_true {
        let z: f64 = StandardNormal.sample(&mut rng);
        let p = 1.0 / (1.0 + (-(alpha + sigma * z)).exp());
        let row: Vec<u8> = (0..t).map(|_| u8::from(rng.random::<f64>() < p)).collect();
        if row.iter().any(|&x| x == 1) {
            rows.push(row);
        }
    }
    CaptureData::from_rows(rows).expect("simulation produced data")
}

/// Pooled samples of one monitored quantity across chains.
pub fn pooled(traces: &[Trace], name: &str) -> Vec<f64> {
    traces
        .iter()
        .flat_map(|t| t.column(name).expect("monitored name").to_vec())
        .collect()
}

/// Monte-Carlo standard error of a posterior mean: sd / sqrt(total ESS).
pub fn mc_standard_error(traces: &[Trace], name: &str) -> f64 {
    let samples = pooled(traces, name);
    let len = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / len;
    let sd = (samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (len - 1.0)).sqrt();
    let ess_total: f64 = traces
        .iter()
        .map(|t| ess(t.column(name).unwrap()).expect("ess").value)
        .sum();
    sd / ess_total.max(1.0).sqrt()
}

pub fn mean_of(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}
