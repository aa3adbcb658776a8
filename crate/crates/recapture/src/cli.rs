//! Run driver: configuration, data ingestion, sampler dispatch, trace
//! persistence and report generation. Also home of the bundled snowshoe
//! hare dataset helpers and the acoustic-array survey simulator.
//!
//! File formats are deliberately plain:
//! * capture histories — headerless CSV of 0/1, one row per individual;
//! * spatial detections — long-format CSV `individual,detector,occasion`
//!   with 0-based indices;
//! * detectors and masks — CSV `id,x_km,y_km` (a header row is skipped);
//! * traces — one CSV per chain with a header row of monitored names, plus
//!   a JSON sidecar carrying the config echo, seed, wall time and version.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{summarize, Summary};
use crate::error::{Error, Result};
use crate::model::{
    CaptureData, FrequencyCounts, NPrior, Point, PriorSpec, SecrCaptureData, SurveyGeometry,
};
use crate::samplers::{
    run_cdde_mh, run_cdde_secr, run_cdr_mh, run_cdr_secr, run_scd1_mh, run_scd1_secr, run_scd2_mh,
    run_scd2_secr, SamplerConfig, Trace,
};

/// Observed frequencies of the classic snowshoe hare live-trapping study:
/// counts of individuals captured exactly 1..6 times over 6 occasions.
pub fn snowshoe_hare_frequencies() -> FrequencyCounts {
    FrequencyCounts::new(vec![25, 22, 13, 5, 1, 2]).expect("static frequencies")
}

pub const SNOWSHOE_HARE_OCCASIONS: usize = 6;

/// Deterministic canonical expansion of frequency counts into capture
/// histories: for each k, n_k rows with detections in the first k columns.
/// The non-spatial likelihood depends on histories only through their row
/// sums, so any expansion with these row sums is likelihood-equivalent.
pub fn expand_frequencies(freqs: &FrequencyCounts, t: usize) -> Result<CaptureData> {
    if freqs.max_count() > t {
        return Err(Error::InvalidData(format!(
            "frequency class {} exceeds occasion count {t}",
            freqs.max_count()
        )));
    }
    let mut rows = Vec::new();
    for k in 1..=freqs.max_count() {
        let mut row = vec![0u8; t];
        row[..k].fill(1);
        for _ in 0..freqs.count(k) {
            rows.push(row.clone());
        }
    }
    CaptureData::from_rows(rows)
}

/// Survey geometry of the acoustic gibbon-style study: 13 replicate 3-post
/// linear arrays (posts 0.5 km apart) pooled over one region of 546 km^2,
/// with a rectangular 70 x 60 habitat mask of 4200 points.
pub fn gibbon_survey_geometry() -> SurveyGeometry {
    let cell_area: f64 = 546.0 / 4200.0;
    let w = cell_area.sqrt();
    let mask = SurveyGeometry::rectangular_mask(Point::new(0.0, 0.0), 70, 60, w);
    SurveyGeometry::new(gibbon_detectors(), mask, cell_area).expect("static geometry")
}

/// The 39 listening-post coordinates of [`gibbon_survey_geometry`]: array
/// centres on a 4 x 4 lattice with three positions unused.
pub fn gibbon_detectors() -> Vec<Point> {
    let cell_area: f64 = 546.0 / 4200.0;
    let w = cell_area.sqrt();
    let hull_x = 70.0 * w;
    let hull_y = 60.0 * w;
    let skip = [(3usize, 1usize), (3, 2), (3, 3)];
    let mut dets = Vec::with_capacity(39);
    for i in 0..4 {
        for j in 0..4 {
            if skip.contains(&(i, j)) {
                continue;
            }
            let cx = (i as f64 + 0.5) * hull_x / 4.0;
            let cy = (j as f64 + 0.5) * hull_y / 4.0;
            for dx in [-0.5, 0.0, 0.5] {
                dets.push(Point::new(cx + dx, cy));
            }
        }
    }
    dets
}

/// Simulate a spatial survey: `n_true` activity centres uniform over the
/// mask region, Bernoulli detections under the half-normal probability, and
/// individuals never detected dropped from the returned data.
pub fn simulate_secr(
    geometry: &SurveyGeometry,
    sigma_true: f64,
    n_true: u64,
    t: usize,
    seed: u64,
) -> Result<SecrCaptureData> {
    if !(sigma_true > 0.0) || t == 0 {
        return Err(Error::InvalidArgument(
            "need positive sigma and occasions".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = 1.0 / (2.0 * sigma_true * sigma_true);
    let n_det = geometry.n_detectors();
    let mut counts: Vec<u32> = Vec::new();
    for _ in 0..n_true {
        let centre = geometry.sample_point(&mut rng);
        let mut row = vec![0u32; n_det];
        let mut any = false;
        for (j, det) in geometry.detectors().iter().enumerate() {
            let p = (-u * det.dist2(&centre)).exp();
            for _ in 0..t {
                if rng.random::<f64>() < p {
                    row[j] += 1;
                    any = true;
                }
            }
        }
        if any {
            counts.extend_from_slice(&row);
        }
    }
    if counts.is_empty() {
        return Err(Error::InvalidData(
            "simulation produced no detected individuals".into(),
        ));
    }
    SecrCaptureData::from_counts(counts, n_det, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mh,
    Secr,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mh" => Ok(ModelKind::Mh),
            "secr" => Ok(ModelKind::Secr),
            other => Err(Error::InvalidConfig(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Scd1,
    Scd2,
    Cdr,
    Cdde,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scd1" => Ok(SamplerKind::Scd1),
            "scd2" => Ok(SamplerKind::Scd2),
            "cdr" => Ok(SamplerKind::Cdr),
            "cdde" => Ok(SamplerKind::Cdde),
            other => Err(Error::InvalidConfig(format!("unknown sampler '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskGrid {
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub origin_x: f64,
    #[serde(default)]
    pub origin_y: f64,
    pub cell_area_km2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSpec {
    pub sigma: f64,
    pub n_true: u64,
    #[serde(default)]
    pub seed: u64,
}

/// Data sources; which fields apply depends on the model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    // non-spatial
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histories_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub occasions: Option<usize>,
    // spatial
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detections_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detectors_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_area_km2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_grid: Option<MaskGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSpec>,
}

/// One self-contained run: model, sampler, data, priors, chain settings and
/// output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelKind,
    pub sampler: SamplerKind,
    pub data: DataConfig,
    #[serde(default)]
    pub priors: PriorSpec,
    #[serde(flatten)]
    pub sampler_config: SamplerConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Compatibility checks that do not need the data: the
    /// Negative-Binomial Gibbs sampler only exists under a Jeffreys prior.
    pub fn validate(&self) -> Result<()> {
        self.priors.validate()?;
        if self.sampler == SamplerKind::Scd2 && !self.priors.n.is_jeffreys() {
            return Err(Error::InvalidConfig(
                "sampler 'scd2' requires a (truncated) Jeffreys prior on N".into(),
            ));
        }
        Ok(())
    }

    /// Force the super-population / truncation bound everywhere it appears.
    pub fn set_upper_bound_m(&mut self, m: u64) {
        self.sampler_config.m_upper = m;
        match &mut self.priors.n {
            NPrior::TruncatedJeffreys { m: pm } => *pm = m,
            NPrior::Power { m: pm, .. } => *pm = m,
            _ => {}
        }
    }
}

/// Parse a config file; returns the config and the directory against which
/// its relative paths are resolved.
pub fn load_config(path: &Path) -> Result<(RunConfig, PathBuf)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("cannot parse {}: {e}", path.display())))?;
    let base = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    Ok((config, base))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Headerless binary matrix.
pub fn load_capture_csv(path: &Path) -> Result<CaptureData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row: Vec<u8> = record
            .iter()
            .map(|f| {
                f.parse::<u8>().map_err(|_| {
                    Error::InvalidData(format!("non-binary entry '{f}' in {}", path.display()))
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    CaptureData::from_rows(rows)
}

fn first_field_is_numeric(record: &csv::StringRecord) -> bool {
    record.get(0).is_some_and(|f| f.parse::<f64>().is_ok())
}

/// `id,x_km,y_km` rows; a non-numeric first row is treated as a header.
pub fn load_points_csv(path: &Path) -> Result<Vec<Point>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if i == 0 && !first_field_is_numeric(&record) {
            continue;
        }
        if record.len() < 3 {
            return Err(Error::InvalidData(format!(
                "expected id,x_km,y_km rows in {}",
                path.display()
            )));
        }
        let x: f64 = record[1]
            .parse()
            .map_err(|_| Error::InvalidData(format!("bad x coordinate '{}'", &record[1])))?;
        let y: f64 = record[2]
            .parse()
            .map_err(|_| Error::InvalidData(format!("bad y coordinate '{}'", &record[2])))?;
        points.push(Point::new(x, y));
    }
    if points.is_empty() {
        return Err(Error::InvalidData(format!(
            "no points in {}",
            path.display()
        )));
    }
    Ok(points)
}

/// Long-format detections `individual,detector,occasion`, 0-based; a
/// non-numeric first row is treated as a header.
pub fn load_detections_csv(path: &Path) -> Result<Vec<(usize, usize, usize)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut records = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if i == 0 && !first_field_is_numeric(&record) {
            continue;
        }
        if record.len() < 3 {
            return Err(Error::InvalidData(format!(
                "expected individual,detector,occasion rows in {}",
                path.display()
            )));
        }
        let parse = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::InvalidData(format!("bad index '{s}' in {}", path.display())))
        };
        records.push((parse(&record[0])?, parse(&record[1])?, parse(&record[2])?));
    }
    Ok(records)
}

fn load_mh_data(data: &DataConfig, base: &Path) -> Result<CaptureData> {
    if let Some(path) = &data.histories_csv {
        return load_capture_csv(&resolve(base, path));
    }
    if let Some(freqs) = &data.frequencies {
        let t = data.occasions.unwrap_or(freqs.len());
        return expand_frequencies(&FrequencyCounts::new(freqs.clone())?, t);
    }
    Err(Error::InvalidConfig(
        "model 'mh' needs either histories_csv or frequencies".into(),
    ))
}

fn load_secr_geometry(data: &DataConfig, base: &Path) -> Result<SurveyGeometry> {
    let detectors = match &data.detectors_csv {
        Some(path) => load_points_csv(&resolve(base, path))?,
        None => {
            return Err(Error::InvalidConfig(
                "model 'secr' needs detectors_csv".into(),
            ))
        }
    };
    if let Some(grid) = &data.mask_grid {
        let w = grid.cell_area_km2.sqrt();
        let mask = SurveyGeometry::rectangular_mask(
            Point::new(grid.origin_x, grid.origin_y),
            grid.nx,
            grid.ny,
            w,
        );
        return SurveyGeometry::new(detectors, mask, grid.cell_area_km2);
    }
    if let Some(path) = &data.mask_csv {
        let cell_area = data
            .cell_area_km2
            .ok_or_else(|| Error::InvalidConfig("mask_csv requires cell_area_km2".into()))?;
        let mask = load_points_csv(&resolve(base, path))?;
        return SurveyGeometry::new(detectors, mask, cell_area);
    }
    Err(Error::InvalidConfig(
        "model 'secr' needs mask_csv or mask_grid".into(),
    ))
}

fn load_secr_data(
    data: &DataConfig,
    geometry: &SurveyGeometry,
    base: &Path,
) -> Result<SecrCaptureData> {
    let t = data.occasions.unwrap_or(1);
    if let Some(sim) = &data.simulate {
        return simulate_secr(geometry, sim.sigma, sim.n_true, t, sim.seed);
    }
    if let Some(path) = &data.detections_csv {
        let records = load_detections_csv(&resolve(base, path))?;
        return SecrCaptureData::from_long_records(&records, geometry.n_detectors(), t);
    }
    Err(Error::InvalidConfig(
        "model 'secr' needs either detections_csv or a simulate block".into(),
    ))
}

/// Everything a finished run produces in memory.
#[derive(Debug)]
pub struct RunReport {
    pub parameters: Vec<String>,
    pub summaries: Vec<Summary>,
    pub wall_seconds: f64,
    pub traces: Vec<Trace>,
    pub written: Vec<PathBuf>,
}

impl RunReport {
    pub fn summary_for(&self, name: &str) -> Option<&Summary> {
        self.parameters
            .iter()
            .position(|p| p == name)
            .map(|i| &self.summaries[i])
    }

    /// Plain-text table in the reporting format: one row per monitored
    /// quantity.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<8} {:>10} {:>10} {:>10} {:>22} {:>10} {:>10} {:>8}\n",
            "param", "mean", "median", "sd", "95% CI", "ESS", "ESS/s", "PSRF"
        ));
        for (name, s) in self.parameters.iter().zip(&self.summaries) {
            let ci = format!("({:.6}, {:.6})", s.ci_low, s.ci_high);
            let psrf = s
                .psrf
                .map_or_else(|| "-".to_string(), |r| format!("{r:.3}"));
            out.push_str(&format!(
                "{:<8} {:>10.4} {:>10.4} {:>10.4} {:>22} {:>10.1} {:>10.3} {:>8}\n",
                name, s.mean, s.median, s.sd, ci, s.ess, s.ess_per_second, psrf
            ));
        }
        out
    }
}

/// Execute a run: load data, dispatch the sampler, summarise, and (when
/// `out_dir` is set) persist one CSV per chain, a JSON sidecar and the
/// summary table. Partial outputs are removed on failure.
pub fn run(config: &RunConfig, base: &Path) -> Result<RunReport> {
    config.validate()?;
    let cfg = &config.sampler_config;
    let started = Instant::now();
    let traces = match config.model {
        ModelKind::Mh => {
            let data = load_mh_data(&config.data, base)?;
            match config.sampler {
                SamplerKind::Scd1 => run_scd1_mh(&data, &config.priors, cfg)?,
                SamplerKind::Scd2 => run_scd2_mh(&data, &config.priors, cfg)?,
                SamplerKind::Cdr => run_cdr_mh(&data, &config.priors, cfg)?,
                SamplerKind::Cdde => run_cdde_mh(&data, &config.priors, cfg)?,
            }
        }
        ModelKind::Secr => {
            let geometry = load_secr_geometry(&config.data, base)?;
            let data = load_secr_data(&config.data, &geometry, base)?;
            match config.sampler {
                SamplerKind::Scd1 => run_scd1_secr(&data, &geometry, &config.priors, cfg)?,
                SamplerKind::Scd2 => run_scd2_secr(&data, &geometry, &config.priors, cfg)?,
                SamplerKind::Cdr => run_cdr_secr(&data, &geometry, &config.priors, cfg)?,
                SamplerKind::Cdde => run_cdde_secr(&data, &geometry, &config.priors, cfg)?,
            }
        }
    };
    let wall_seconds = started.elapsed().as_secs_f64();

    let parameters: Vec<String> = traces[0].names().to_vec();
    let mut summaries = Vec::with_capacity(parameters.len());
    for name in &parameters {
        let chains: Vec<&[f64]> = traces
            .iter()
            .map(|t| t.column(name).expect("all chains share monitored names"))
            .collect();
        summaries.push(summarize(&chains, wall_seconds)?);
    }

    let mut report = RunReport {
        parameters,
        summaries,
        wall_seconds,
        traces,
        written: Vec::new(),
    };

    if let Some(out_dir) = &config.out_dir {
        let out_dir = resolve(base, out_dir);
        if let Err(e) = write_outputs(config, &mut report, &out_dir) {
            for path in &report.written {
                let _ = fs::remove_file(path);
            }
            return Err(e);
        }
    }
    Ok(report)
}

fn write_outputs(config: &RunConfig, report: &mut RunReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    for trace in &report.traces {
        let path = out_dir.join(format!("chain_{}.csv", trace.chain()));
        write_trace_csv(trace, &path)?;
        report.written.push(path);
    }
    let meta_path = out_dir.join("meta.json");
    let acceptance: Vec<serde_json::Value> = report
        .traces
        .iter()
        .map(|t| {
            serde_json::json!({
                "chain": t.chain(),
                "rates": t.acceptance().iter().cloned().collect::<std::collections::BTreeMap<_, _>>(),
            })
        })
        .collect();
    let meta = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": config.sampler_config.seed,
        "chains": config.sampler_config.chains,
        "thin": config.sampler_config.thin,
        "wall_seconds": report.wall_seconds,
        "acceptance": acceptance,
        "config": config,
    });
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;
    report.written.push(meta_path);

    let summary_path = out_dir.join("summary.csv");
    let mut text = String::from("param,mean,median,sd,ci_low,ci_high,ess,ess_per_s,psrf\n");
    for (name, s) in report.parameters.iter().zip(&report.summaries) {
        let psrf = s.psrf.map_or_else(String::new, |r| format!("{r}"));
        text.push_str(&format!(
            "{name},{},{},{},{},{},{},{},{psrf}\n",
            s.mean, s.median, s.sd, s.ci_low, s.ci_high, s.ess, s.ess_per_second
        ));
    }
    fs::write(&summary_path, text)?;
    report.written.push(summary_path);
    Ok(())
}

/// One CSV per chain: a header row of monitored names, then samples. Floats
/// print in shortest round-trip form, so identical runs produce identical
/// bytes.
pub fn write_trace_csv(trace: &Trace, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(file, "{}", trace.names().join(","))?;
    let columns = trace.columns();
    for row in 0..trace.len() {
        let mut line = String::new();
        for (c, col) in columns.iter().enumerate() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&format!("{}", col[row]));
        }
        writeln!(file, "{line}")?;
    }
    Ok(())
}

/// Read back a trace written by [`write_trace_csv`]. The chain id is
/// recovered from the `chain_<id>.csv` file name when present.
pub fn read_trace_csv(path: &Path) -> Result<Trace> {
    let chain = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("chain_"))
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(0);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let names: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    let mut columns: Vec<Vec<f64>> = names.iter().map(|_| Vec::new()).collect();
    for record in reader.records() {
        let record = record?;
        if record.len() != names.len() {
            return Err(Error::InvalidData(format!(
                "ragged trace row in {}",
                path.display()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            columns[c].push(field.parse::<f64>().map_err(|_| {
                Error::InvalidData(format!("bad trace value '{field}' in {}", path.display()))
            })?);
        }
    }
    Trace::from_columns(chain, 1, names, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_counts;

    #[test]
    fn expand_frequencies_hare() {
        let data = expand_frequencies(&snowshoe_hare_frequencies(), 6).unwrap();
        assert_eq!(data.n(), 68);
        assert_eq!(data.occasions(), 6);
        // every canonical row starts with a detection
        let col1: u32 = data.rows().iter().map(|r| u32::from(r[0])).sum();
        assert_eq!(col1, 68);
        let total: u32 = data.counts().iter().sum();
        assert_eq!(total, 145);
    }

    #[test]
    fn expand_frequencies_inverse_of_derive_counts() {
        let freqs = FrequencyCounts::new(vec![3, 0, 2, 1]).unwrap();
        let data = expand_frequencies(&freqs, 4).unwrap();
        let (_, recovered) = derive_counts(&data);
        assert_eq!(recovered, freqs);
    }

    #[test]
    fn expand_frequencies_edge_cases() {
        // all-zero frequencies expand to an empty matrix, rejected downstream
        let zero = FrequencyCounts::new(vec![0, 0, 0]).unwrap();
        assert!(expand_frequencies(&zero, 3).is_err());
        // single individual observed the maximum number of times
        let full = FrequencyCounts::new(vec![0, 0, 1]).unwrap();
        let data = expand_frequencies(&full, 3).unwrap();
        assert_eq!(data.rows(), &[vec![1, 1, 1]]);
        // class above T
        assert!(expand_frequencies(&FrequencyCounts::new(vec![0, 1]).unwrap(), 1).is_err());
    }

    #[test]
    fn gibbon_geometry_matches_specified_survey() {
        let geom = gibbon_survey_geometry();
        assert_eq!(geom.n_detectors(), 39);
        assert_eq!(geom.n_mask(), 4200);
        assert!((geom.area() - 546.0).abs() < 1e-9);
        assert!((geom.cell_area() - 0.13).abs() < 1e-12);
        // posts within each array are 0.5 km apart
        let dets = geom.detectors();
        for array in dets.chunks(3) {
            assert!((array[0].dist2(&array[1]).sqrt() - 0.5).abs() < 1e-12);
            assert!((array[1].dist2(&array[2]).sqrt() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn simulate_secr_limits() {
        let geom = gibbon_survey_geometry();
        // vanishing range: nobody is detected
        assert!(simulate_secr(&geom, 1e-9, 50, 1, 1).is_err());
        // single detector on the sole mask point with a detection range far
        // wider than the cell: everyone is detected
        let tiny = SurveyGeometry::new(vec![Point::new(0.5, 0.5)], vec![Point::new(0.5, 0.5)], 1.0)
            .unwrap();
        let data = simulate_secr(&tiny, 50.0, 25, 1, 2).unwrap();
        assert_eq!(data.n(), 25);
    }

    #[test]
    fn simulate_secr_expected_sample_size_calibration() {
        // with sigma = 0.8 the survey detects about 19% of individuals, so
        // 406 true groups give an expected observed count near 77
        let geom = gibbon_survey_geometry();
        let omp = crate::integrate::secr_prob_unobserved(0.8, &geom, 1).unwrap();
        let expected_n = 406.0 * (1.0 - omp);
        assert!((expected_n - 77.0).abs() < 1.0, "E[n] = {expected_n}");
        let reps = 300usize;
        let mut total = 0usize;
        for seed in 0..reps {
            total += simulate_secr(&geom, 0.8, 406, 1, seed as u64).unwrap().n();
        }
        let mean_n = total as f64 / reps as f64;
        assert!((mean_n - expected_n).abs() < 1.5, "mean n = {mean_n}");
    }

    #[test]
    fn config_round_trip_and_compat() {
        let json = r#"{
            "model": "mh",
            "sampler": "scd2",
            "data": {"frequencies": [25, 22, 13, 5, 1, 2], "occasions": 6},
            "iterations": 2000,
            "burn_in": 500,
            "seed": 7
        }"#;
        let config: RunConfig = serde_json::from_str(json).unwrap();
        assert!(config.validate().is_ok());
        assert_eq!(config.sampler_config.iterations, 2000);
        assert_eq!(config.sampler_config.quadrature_order, 100);

        // scd2 with a non-Jeffreys prior is rejected before sampling
        let bad = r#"{
            "model": "mh",
            "sampler": "scd2",
            "data": {"frequencies": [5]},
            "priors": {"n": {"type": "poisson", "lambda": 10.0}}
        }"#;
        let config: RunConfig = serde_json::from_str(bad).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn upper_bound_override_reaches_prior() {
        let json = r#"{
            "model": "mh",
            "sampler": "scd1",
            "data": {"frequencies": [5]},
            "priors": {"n": {"type": "truncated_jeffreys", "m": 1000}}
        }"#;
        let mut config: RunConfig = serde_json::from_str(json).unwrap();
        config.set_upper_bound_m(5000);
        assert_eq!(config.sampler_config.m_upper, 5000);
        assert_eq!(config.priors.n, NPrior::TruncatedJeffreys { m: 5000 });
    }

    #[test]
    fn trace_csv_round_trip_exact() {
        let mut trace = Trace::new(2, 1, &["N", "alpha"], 4);
        trace.push_row(&[68.0, -1.2345678901234567]);
        trace.push_row(&[70.0, 0.1 + 0.2]);
        trace.push_row(&[1e-17, 3.0e300]);
        let dir = std::env::temp_dir().join("recapture_trace_rt_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("chain_2.csv");
        write_trace_csv(&trace, &path).unwrap();
        let back = read_trace_csv(&path).unwrap();
        assert_eq!(back.chain(), 2);
        assert_eq!(back.names(), trace.names());
        assert_eq!(back.columns(), trace.columns());
        fs::remove_file(&path).unwrap();
    }

    #[test]
    fn run_small_end_to_end_mh() {
        let dir = std::env::temp_dir().join("recapture_run_test_mh");
        let _ = fs::remove_dir_all(&dir);
        let config = RunConfig {
            model: ModelKind::Mh,
            sampler: SamplerKind::Scd2,
            data: DataConfig {
                frequencies: Some(vec![25, 22, 13, 5, 1, 2]),
                occasions: Some(6),
                ..Default::default()
            },
            priors: PriorSpec::default(),
            sampler_config: SamplerConfig {
                iterations: 600,
                burn_in: 100,
                chains: 2,
                seed: 3,
                ..Default::default()
            },
            out_dir: Some(dir.clone()),
        };
        let report = run(&config, Path::new(".")).unwrap();
        assert_eq!(report.parameters[0], "N");
        assert!(report.summary_for("N").unwrap().mean > 68.0);
        assert!(dir.join("chain_0.csv").exists());
        assert!(dir.join("chain_1.csv").exists());
        assert!(dir.join("meta.json").exists());
        assert!(dir.join("summary.csv").exists());
        let back = read_trace_csv(&dir.join("chain_0.csv")).unwrap();
        assert_eq!(back.columns(), report.traces[0].columns());
        assert!(!report.render_table().is_empty());
        fs::remove_dir_all(&dir).unwrap();
    }
}
