//! Domain types shared by the likelihoods and samplers: capture data,
//! survey geometry, parameter states and prior specifications.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary capture histories for a non-spatial study: one row per observed
/// individual, one column per occasion. Rows with no detection are rejected
/// at construction since only observed individuals are ever stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureData {
    histories: Vec<Vec<u8>>,
    occasions: usize,
}

impl CaptureData {
    pub fn from_rows(histories: Vec<Vec<u8>>) -> Result<Self> {
        if histories.is_empty() {
            return Err(Error::InvalidData("no capture histories".into()));
        }
        let occasions = histories[0].len();
        if occasions == 0 {
            return Err(Error::InvalidData("zero occasions".into()));
        }
        for (i, row) in histories.iter().enumerate() {
            if row.len() != occasions {
                return Err(Error::InvalidData(format!(
                    "row {i} has {} columns, expected {occasions}",
                    row.len()
                )));
            }
            if row.iter().any(|&x| x > 1) {
                return Err(Error::InvalidData(format!(
                    "row {i} has a non-binary entry"
                )));
            }
            if row.iter().all(|&x| x == 0) {
                return Err(Error::InvalidData(format!(
                    "row {i} is all-zero; only observed individuals may be stored"
                )));
            }
        }
        Ok(Self {
            histories,
            occasions,
        })
    }

    pub fn n(&self) -> usize {
        self.histories.len()
    }

    pub fn occasions(&self) -> usize {
        self.occasions
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.histories
    }

    /// Detection counts y_i, one per individual.
    pub fn counts(&self) -> Vec<u32> {
        self.histories
            .iter()
            .map(|row| row.iter().map(|&x| u32::from(x)).sum())
            .collect()
    }
}

/// Number of individuals observed exactly k times, for k = 1..=T.
/// The zero-count class is never stored; it is a function of the unknown
/// population size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyCounts {
    counts: Vec<u64>,
}

impl FrequencyCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidData("empty frequency vector".into()));
        }
        Ok(Self { counts })
    }

    /// Count of individuals seen exactly `k` times (1-based).
    pub fn count(&self, k: usize) -> u64 {
        if k >= 1 && k <= self.counts.len() {
            self.counts[k - 1]
        } else {
            0
        }
    }

    pub fn max_count(&self) -> usize {
        self.counts.len()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    /// Total number of observed individuals.
    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Total number of detections, sum over k of k * n_k.
    pub fn total_detections(&self) -> u64 {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &nk)| (i as u64 + 1) * nk)
            .sum()
    }
}

/// Row sums and frequency counts derived from capture histories.
///
/// Rejects malformed input through `CaptureData` construction; an all-zero
/// row can never reach this point.
pub fn derive_counts(data: &CaptureData) -> (Vec<u32>, FrequencyCounts) {
    let y = data.counts();
    let t = data.occasions();
    let mut counts = vec![0u64; t];
    for &yi in &y {
        debug_assert!(yi >= 1 && yi as usize <= t);
        counts[yi as usize - 1] += 1;
    }
    (y, FrequencyCounts { counts })
}

/// Spatial detection counts for an SECR study. Detection probabilities are
/// time-invariant, so the per-individual, per-detector detection counts
/// y_ij (out of T occasions) are sufficient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecrCaptureData {
    counts: Vec<u32>, // n * n_detectors, row-major
    n: usize,
    n_detectors: usize,
    occasions: usize,
}

impl SecrCaptureData {
    pub fn from_counts(counts: Vec<u32>, n_detectors: usize, occasions: usize) -> Result<Self> {
        if n_detectors == 0 || occasions == 0 {
            return Err(Error::InvalidData(
                "SECR data needs detectors and occasions".into(),
            ));
        }
        if counts.is_empty() || counts.len() % n_detectors != 0 {
            return Err(Error::InvalidData("count matrix shape mismatch".into()));
        }
        let n = counts.len() / n_detectors;
        for i in 0..n {
            let row = &counts[i * n_detectors..(i + 1) * n_detectors];
            if row.iter().any(|&c| c as usize > occasions) {
                return Err(Error::InvalidData(format!(
                    "individual {i} has more detections at a detector than occasions"
                )));
            }
            if row.iter().all(|&c| c == 0) {
                return Err(Error::InvalidData(format!(
                    "individual {i} has no detections; only observed individuals may be stored"
                )));
            }
        }
        Ok(Self {
            counts,
            n,
            n_detectors,
            occasions,
        })
    }

    /// Build from long-format records (individual, detector, occasion),
    /// all 0-based. Individuals must be numbered 0..n-1 densely.
    pub fn from_long_records(
        records: &[(usize, usize, usize)],
        n_detectors: usize,
        occasions: usize,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidData("no detection records".into()));
        }
        let n = 1 + records.iter().map(|r| r.0).max().unwrap();
        let mut counts = vec![0u32; n * n_detectors];
        let mut seen = std::collections::HashSet::new();
        for &(i, j, t) in records {
            if j >= n_detectors {
                return Err(Error::InvalidData(format!(
                    "detector index {j} out of range"
                )));
            }
            if t >= occasions {
                return Err(Error::InvalidData(format!(
                    "occasion index {t} out of range"
                )));
            }
            if !seen.insert((i, j, t)) {
                return Err(Error::InvalidData(format!(
                    "duplicate record ({i},{j},{t})"
                )));
            }
            counts[i * n_detectors + j] += 1;
        }
        Self::from_counts(counts, n_detectors, occasions)
    }

    /// Canonical long-format records: detections at a detector occupy
    /// occasions 0..y_ij-1.
    pub fn to_long_records(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n_detectors {
                for t in 0..self.count(i, j) as usize {
                    out.push((i, j, t));
                }
            }
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_detectors(&self) -> usize {
        self.n_detectors
    }

    pub fn occasions(&self) -> usize {
        self.occasions
    }

    /// Detections of individual `i` at detector `j`.
    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.n_detectors + j]
    }

    pub fn individual_counts(&self, i: usize) -> &[u32] {
        &self.counts[i * self.n_detectors..(i + 1) * self.n_detectors]
    }

    /// Total detections per individual.
    pub fn totals(&self) -> Vec<u32> {
        (0..self.n)
            .map(|i| self.individual_counts(i).iter().sum())
            .collect()
    }
}

/// Planar coordinates in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Detector coordinates plus a habitat mask: a set of grid points with one
/// uniform cell area whose union of cells approximates the survey region.
#[derive(Debug, Clone)]
pub struct SurveyGeometry {
    detectors: Vec<Point>,
    mask: Vec<Point>,
    cell_area: f64,
    cell_width: f64,
    origin: Point,
    cells: HashMap<(i64, i64), usize>,
    bbox: (Point, Point),
}

impl SurveyGeometry {
    pub fn new(detectors: Vec<Point>, mask: Vec<Point>, cell_area: f64) -> Result<Self> {
        if mask.is_empty() {
            return Err(Error::InvalidData("empty habitat mask".into()));
        }
        if detectors.is_empty() {
            return Err(Error::InvalidData("no detectors".into()));
        }
        if !(cell_area > 0.0) || !cell_area.is_finite() {
            return Err(Error::InvalidData("cell area must be positive".into()));
        }
        for p in detectors.iter().chain(mask.iter()) {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::InvalidData("non-finite coordinate".into()));
            }
        }
        let cell_width = cell_area.sqrt();
        let origin = Point::new(
            mask.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
            mask.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
        );
        let mut cells = HashMap::with_capacity(mask.len());
        for (idx, p) in mask.iter().enumerate() {
            let key = (
                ((p.x - origin.x) / cell_width).round() as i64,
                ((p.y - origin.y) / cell_width).round() as i64,
            );
            if cells.insert(key, idx).is_some() {
                return Err(Error::InvalidData(
                    "two mask points share a cell; mask must be a uniform grid".into(),
                ));
            }
        }
        let hi = Point::new(
            mask.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
            mask.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
        );
        Ok(Self {
            detectors,
            mask,
            cell_area,
            cell_width,
            origin,
            cells,
            bbox: (origin, hi),
        })
    }

    /// Rectangular nx-by-ny mask with the given cell width, anchored so the
    /// first cell centre sits half a cell in from `origin`.
    pub fn rectangular_mask(origin: Point, nx: usize, ny: usize, cell_width: f64) -> Vec<Point> {
        let mut mask = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                mask.push(Point::new(
                    origin.x + (i as f64 + 0.5) * cell_width,
                    origin.y + (j as f64 + 0.5) * cell_width,
                ));
            }
        }
        mask
    }

    pub fn detectors(&self) -> &[Point] {
        &self.detectors
    }

    pub fn n_detectors(&self) -> usize {
        self.detectors.len()
    }

    pub fn mask(&self) -> &[Point] {
        &self.mask
    }

    pub fn n_mask(&self) -> usize {
        self.mask.len()
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    /// Total region area A = G * a_cell.
    pub fn area(&self) -> f64 {
        self.mask.len() as f64 * self.cell_area
    }

    /// Whether a point falls inside the union of mask cells.
    pub fn contains(&self, p: &Point) -> bool {
        let half = self.cell_width / 2.0 + 1e-9;
        let key = (
            ((p.x - self.origin.x) / self.cell_width).round() as i64,
            ((p.y - self.origin.y) / self.cell_width).round() as i64,
        );
        match self.cells.get(&key) {
            Some(&idx) => {
                let m = self.mask[idx];
                (p.x - m.x).abs() <= half && (p.y - m.y).abs() <= half
            }
            None => false,
        }
    }

    /// Bounding box of the mask points expanded by one cell width.
    pub fn expanded_bbox(&self) -> (Point, Point) {
        let (lo, hi) = self.bbox;
        (
            Point::new(lo.x - self.cell_width, lo.y - self.cell_width),
            Point::new(hi.x + self.cell_width, hi.y + self.cell_width),
        )
    }

    /// Uniform draw over the mask region: uniform cell, then uniform within
    /// the cell.
    pub fn sample_point<R: Rng>(&self, rng: &mut R) -> Point {
        let idx = rng.random_range(0..self.mask.len());
        let half = self.cell_width / 2.0;
        let m = self.mask[idx];
        Point::new(
            m.x + rng.random_range(-half..half),
            m.y + rng.random_range(-half..half),
        )
    }

    pub fn nearest_mask_point(&self, p: &Point) -> Point {
        let mut best = self.mask[0];
        let mut best_d = f64::INFINITY;
        for m in &self.mask {
            let d = m.dist2(p);
            if d < best_d {
                best_d = d;
                best = *m;
            }
        }
        best
    }
}

/// Parameter state for the logit-normal heterogeneity model: logit-scale
/// intercept, random-effect variance, one random effect per observed
/// individual and the population size.
#[derive(Debug, Clone, PartialEq)]
pub struct MhState {
    pub alpha: f64,
    pub sigma2: f64,
    pub eps: Vec<f64>,
    pub n_total: u64,
}

/// Parameter state for the spatial model: half-normal detection scale (km),
/// activity centres of observed individuals and the population size.
#[derive(Debug, Clone, PartialEq)]
pub struct SecrState {
    pub sigma: f64,
    pub centres: Vec<Point>,
    pub n_total: u64,
}

/// Super-population state used by the complete-data samplers. `z[i]` flags
/// membership of pseudo-individual i in the population; `psi` is the
/// inclusion probability (unordered variant only).
#[derive(Debug, Clone, PartialEq)]
pub struct SuperPopState<E> {
    pub z: Vec<bool>,
    pub psi: Option<f64>,
    pub eps: Vec<E>,
}

impl<E> SuperPopState<E> {
    pub fn m(&self) -> usize {
        self.z.len()
    }

    pub fn n_total(&self) -> u64 {
        self.z.iter().filter(|&&b| b).count() as u64
    }

    /// True when all ones precede all zeros (ordered-indicator variant).
    pub fn is_prefix_ones(&self) -> bool {
        let first_zero = self.z.iter().position(|&b| !b).unwrap_or(self.z.len());
        self.z[first_zero..].iter().all(|&b| !b)
    }
}

/// Prior menu for the population size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NPrior {
    /// p(N) proportional to 1/N on 1..=m.
    TruncatedJeffreys {
        m: u64,
    },
    /// p(N) proportional to N^-c on 1..=m.
    Power {
        c: f64,
        m: u64,
    },
    Poisson {
        lambda: f64,
    },
    /// Count-of-failures form: f(x) = C(x+r-1, x) p^r (1-p)^x.
    NegBinomial {
        r: f64,
        p: f64,
    },
}

impl NPrior {
    pub fn upper_bound(&self) -> Option<u64> {
        match *self {
            NPrior::TruncatedJeffreys { m } | NPrior::Power { m, .. } => Some(m),
            _ => None,
        }
    }

    /// Whether the prior is (truncated) Jeffreys, as required by the
    /// Negative-Binomial Gibbs step for N.
    pub fn is_jeffreys(&self) -> bool {
        matches!(self, NPrior::TruncatedJeffreys { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NPrior::TruncatedJeffreys { m } => m >= 1,
            NPrior::Power { c, m } => c > 0.0 && c.is_finite() && m >= 1,
            NPrior::Poisson { lambda } => lambda > 0.0 && lambda.is_finite(),
            NPrior::NegBinomial { r, p } => r > 0.0 && r.is_finite() && p > 0.0 && p < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid N prior: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformPrior {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

/// Full prior specification. Defaults follow the standard weakly
/// informative choices for these models: alpha ~ N(0, 100),
/// sigma2 ~ Inv-Gamma(0.01, 0.01), sigma ~ U(0, 10), psi ~ Beta(0.001, 1)
/// and a truncated Jeffreys prior on N with bound 1000.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    #[serde(default = "default_n_prior")]
    pub n: NPrior,
    #[serde(default = "default_alpha_prior")]
    pub alpha: NormalPrior,
    #[serde(default = "default_sigma2_prior")]
    pub sigma2: InvGammaPrior,
    #[serde(default = "default_sigma_prior")]
    pub sigma: UniformPrior,
    #[serde(default = "default_psi_prior")]
    pub psi: BetaPrior,
}

fn default_n_prior() -> NPrior {
    NPrior::TruncatedJeffreys { m: 1000 }
}

fn default_alpha_prior() -> NormalPrior {
    NormalPrior {
        mean: 0.0,
        variance: 100.0,
    }
}

fn default_sigma2_prior() -> InvGammaPrior {
    InvGammaPrior {
        shape: 0.01,
        rate: 0.01,
    }
}

fn default_sigma_prior() -> UniformPrior {
    UniformPrior {
        lower: 0.0,
        upper: 10.0,
    }
}

fn default_psi_prior() -> BetaPrior {
    BetaPrior { a: 0.001, b: 1.0 }
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            n: default_n_prior(),
            alpha: default_alpha_prior(),
            sigma2: default_sigma2_prior(),
            sigma: default_sigma_prior(),
            psi: default_psi_prior(),
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        self.n.validate()?;
        if !(self.alpha.variance > 0.0) {
            return Err(Error::InvalidConfig(
                "alpha prior variance must be positive".into(),
            ));
        }
        if !(self.sigma2.shape > 0.0 && self.sigma2.rate > 0.0) {
            return Err(Error::InvalidConfig(
                "sigma2 prior hyperparameters must be positive".into(),
            ));
        }
        if !(self.sigma.upper > self.sigma.lower && self.sigma.lower >= 0.0) {
            return Err(Error::InvalidConfig("sigma prior bounds invalid".into()));
        }
        if !(self.psi.a > 0.0 && self.psi.b > 0.0) {
            return Err(Error::InvalidConfig(
                "psi prior hyperparameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Every violated invariant of a non-spatial state, empty when valid.
pub fn validate_mh_state(state: &MhState, data: &CaptureData, priors: &PriorSpec) -> Vec<String> {
    let mut v = Vec::new();
    if !(state.sigma2 > 0.0) {
        v.push("sigma2 <= 0".to_string());
    }
    if state.n_total < data.n() as u64 {
        v.push("N < n".to_string());
    }
    if state.eps.len() != data.n() {
        v.push(format!(
            "eps length {} != n = {}",
            state.eps.len(),
            data.n()
        ));
    }
    if !state.alpha.is_finite() {
        v.push("alpha not finite".to_string());
    }
    if let Some(m) = priors.n.upper_bound() {
        if state.n_total > m {
            v.push(format!("N = {} exceeds prior bound M = {m}", state.n_total));
        }
    }
    v
}

/// Every violated invariant of a spatial state, empty when valid.
pub fn validate_secr_state(
    state: &SecrState,
    data: &SecrCaptureData,
    geometry: &SurveyGeometry,
    priors: &PriorSpec,
) -> Vec<String> {
    let mut v = Vec::new();
    if !(state.sigma > 0.0) {
        v.push("sigma <= 0".to_string());
    }
    if state.n_total < data.n() as u64 {
        v.push("N < n".to_string());
    }
    if state.centres.len() != data.n() {
        v.push(format!(
            "centres length {} != n = {}",
            state.centres.len(),
            data.n()
        ));
    }
    let (lo, hi) = geometry.expanded_bbox();
    for (i, c) in state.centres.iter().enumerate() {
        if c.x < lo.x || c.x > hi.x || c.y < lo.y || c.y > hi.y {
            v.push(format!("centre {i} outside expanded mask bounding box"));
        }
    }
    if let Some(m) = priors.n.upper_bound() {
        if state.n_total > m {
            v.push(format!("N = {} exceeds prior bound M = {m}", state.n_total));
        }
    }
    v
}

/// Every violated invariant of a super-population state.
pub fn validate_superpop_state<E>(
    state: &SuperPopState<E>,
    n_observed: usize,
    require_ordered: bool,
) -> Vec<String> {
    let mut v = Vec::new();
    if state.z.len() < n_observed {
        v.push(format!("M = {} below n = {n_observed}", state.z.len()));
    }
    if state.z.iter().take(n_observed).any(|&b| !b) {
        v.push("z = 0 for an observed individual".to_string());
    }
    if state.eps.len() != state.z.len() {
        v.push("eps length != M".to_string());
    }
    if let Some(psi) = state.psi {
        if !(psi > 0.0 && psi < 1.0) {
            v.push("psi outside (0, 1)".to_string());
        }
    }
    if require_ordered && !state.is_prefix_ones() {
        v.push("indicator vector not ordered (ones must precede zeros)".to_string());
    }
    v
}
