//! Declarative experiment configs, seeded runs and their persisted records.

pub mod studies;
pub mod suites;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::{monte_carlo_limit, write_limit_csv, LimitOptions, LimitSample};
use crate::error::{Error, Result};
use crate::estimation::{default_horizon, estimate_h_continuous, estimate_theta_discrete, EstimateResult, GateFailure};
use crate::linalg::{self, rowmajor, Mat};
use crate::models::{noise_variance_v, simulate, stream_rng, ModelSpec, Path, PathKind};
pub use suites::{run_suite, suite_names, CheckOutcome, SuiteReport};

fn default_rate() -> f64 {
    0.5
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Number of observations of a discrete model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
    /// Observation window `[0, t_end]` of a continuous model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Riccati horizon; discrete models default to the smallest `t ≤ 10`
    /// with theoretical `C_t, D_t` positive definite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_t: Option<f64>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default = "default_rate")]
    pub rate_exponent: f64,
    /// Burn-in steps for discrete simulation; 0 selects the model default.
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub checks: Vec<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.model.kind.is_discrete() {
            match self.sample_size {
                Some(n) if n >= 2 => {}
                _ => return Err(Error::Config("discrete models need sample_size ≥ 2".into())),
            }
            if let Some(t) = self.horizon_t {
                if t < 1.0 || t.fract() != 0.0 {
                    return Err(Error::Config(format!("discrete horizon_t must be a positive integer, got {t}")));
                }
            }
        } else {
            match (self.t_end, self.dt) {
                (Some(te), Some(dt)) if te > 0.0 && dt > 0.0 && dt < te => {}
                _ => return Err(Error::Config("continuous models need 0 < dt < t_end".into())),
            }
            if !matches!(self.horizon_t, Some(t) if t > 0.0) {
                return Err(Error::Config("continuous models need a positive horizon_t".into()));
            }
        }
        if !(self.rate_exponent > 0.0) {
            return Err(Error::Config("rate_exponent must be positive".into()));
        }
        for c in &self.checks {
            suites::find_suite(c).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn horizon(&self) -> Result<f64> {
        match self.horizon_t {
            Some(t) => Ok(t),
            None => Ok(default_horizon(&self.model)? as f64),
        }
    }

    /// Path of rep `rep`, drawn from stream `rep` of the config seed.
    pub fn simulate_rep(&self, rep: usize) -> Result<Path> {
        let mut rng = stream_rng(self.seed, rep as u64);
        if self.model.kind.is_discrete() {
            let n = self.sample_size.unwrap_or(2);
            simulate(&self.model, (n - 1) as f64, 1.0, self.burn_in, &mut rng)
        } else {
            simulate(&self.model, self.t_end.unwrap_or(0.0), self.dt.unwrap_or(0.0), 0, &mut rng)
        }
    }

    fn truth(&self) -> Result<Mat> {
        if self.model.kind.is_discrete() {
            self.model.theta()
        } else {
            self.model.h()
        }
    }

    fn path_kind(&self) -> PathKind {
        if self.model.kind.is_discrete() {
            PathKind::Discrete
        } else {
            PathKind::ContinuousSampled
        }
    }

    /// Estimate on one path with `v(t)` taken from the model.
    pub fn estimate_path(&self, path: &Path, horizon: f64) -> Result<EstimateResult> {
        let v_t = noise_variance_v(&self.model, horizon)?;
        if self.model.kind.is_discrete() {
            estimate_theta_discrete(path, &v_t, horizon as usize)
        } else {
            estimate_h_continuous(path, &v_t, horizon)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepSummary {
    pub rep: usize,
    pub stream: u64,
    pub gate_passed: bool,
    pub failure: Option<GateFailure>,
    /// `‖estimate − truth‖₂`.
    pub error_norm: f64,
    pub residual_norm: f64,
    #[serde(with = "rowmajor")]
    pub estimate: Mat,
    #[serde(with = "rowmajor::option", default)]
    pub h_recovered: Option<Mat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub reps: usize,
    pub median_error: f64,
    pub mean_error: f64,
    pub max_error: f64,
    pub gate_failures: usize,
    pub gate_failure_rate: f64,
    /// Componentwise mean of the estimates (row-major).
    pub mean_estimate: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub statcare: String,
    pub record_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Self { statcare: env!("CARGO_PKG_VERSION").to_string(), record_format: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub horizon_t: f64,
    pub reps: Vec<RepSummary>,
    pub aggregate: Aggregate,
    #[serde(default)]
    pub checks: Vec<SuiteReport>,
    pub wall_clock_secs: f64,
    pub versions: Versions,
}

fn aggregate(reps: &[RepSummary]) -> Aggregate {
    let errors: Vec<f64> = reps.iter().map(|r| r.error_norm).collect();
    let count = reps.len();
    let failures = reps.iter().filter(|r| !r.gate_passed).count();
    let mut mean_est = reps.first().map_or_else(|| Mat::zeros(0, 0), |r| r.estimate.clone() * 0.0);
    for r in reps {
        mean_est += &r.estimate / count as f64;
    }
    Aggregate {
        reps: count,
        median_error: studies::median(&errors),
        mean_error: errors.iter().sum::<f64>() / count as f64,
        max_error: errors.iter().copied().fold(0.0, f64::max),
        gate_failures: failures,
        gate_failure_rate: failures as f64 / count as f64,
        mean_estimate: rowmajor::to_rows(&mean_est),
    }
}

fn summarize(rep: usize, result: EstimateResult, truth: &Mat) -> RepSummary {
    RepSummary {
        rep,
        stream: rep as u64,
        gate_passed: result.gate_passed,
        failure: result.failure,
        error_norm: linalg::spectral_norm(&(&result.estimate - truth)),
        residual_norm: result.residual_norm,
        estimate: result.estimate,
        h_recovered: result.h_recovered,
    }
}

/// Run `f` on a pool of `jobs` threads (the global pool when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub rep: usize,
    pub stream: u64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateManifest {
    pub config_hash: String,
    pub seed: u64,
    pub kind: PathKind,
    pub paths: Vec<ManifestEntry>,
}

fn rep_file(rep: usize) -> String {
    format!("rep_{rep:05}.csv")
}

/// Write one path CSV per rep under `output_dir/paths` and a manifest.
pub fn cmd_simulate(config: &ExperimentConfig) -> Result<SimulateManifest> {
    config.validate()?;
    let dir = config.output_dir.join("paths");
    fs::create_dir_all(&dir)?;
    let paths = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let path = config.simulate_rep(rep)?;
            let file = rep_file(rep);
            path.write_csv(BufWriter::new(File::create(dir.join(&file))?))?;
            Ok(ManifestEntry { rep, stream: rep as u64, file: format!("paths/{file}") })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = SimulateManifest { config_hash: config.hash()?, seed: config.seed, kind: config.path_kind(), paths };
    write_json(&config.output_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn write_json<T: Serialize>(path: &FsPath, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn finish_record(config: &ExperimentConfig, horizon: f64, reps: Vec<RepSummary>, start: Instant) -> Result<RunRecord> {
    let checks = config.checks.iter().map(|c| run_suite(c)).collect::<Result<Vec<_>>>()?;
    let record = RunRecord {
        config_hash: config.hash()?,
        config: config.clone(),
        horizon_t: horizon,
        aggregate: aggregate(&reps),
        reps,
        checks,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        versions: Versions::default(),
    };
    fs::create_dir_all(&config.output_dir)?;
    write_json(&config.output_dir.join("run_record.json"), &record)?;
    write_estimates_csv(&config.output_dir.join("estimates.csv"), &record.reps)?;
    Ok(record)
}

/// Simulate and estimate every rep of the config.
pub fn cmd_estimate(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let start = Instant::now();
    let horizon = config.horizon()?;
    let truth = config.truth()?;
    let reps = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let path = config.simulate_rep(rep)?;
            Ok(summarize(rep, config.estimate_path(&path, horizon)?, &truth))
        })
        .collect::<Result<Vec<_>>>()?;
    finish_record(config, horizon, reps, start)
}

/// Estimate on existing path CSVs; the config supplies the model (for
/// `v(t)` and the error reference) and the horizon.
pub fn cmd_estimate_paths(config: &ExperimentConfig, files: &[PathBuf]) -> Result<RunRecord> {
    if files.is_empty() {
        return Err(Error::invalid("no path files given"));
    }
    let start = Instant::now();
    let horizon = config.horizon()?;
    let truth = config.truth()?;
    let kind = config.path_kind();
    let reps = files
        .par_iter()
        .enumerate()
        .map(|(rep, f)| {
            let file = File::open(f).map_err(|e| Error::invalid(format!("{}: {e}", f.display())))?;
            let path = Path::read_csv(BufReader::new(file), kind)?;
            Ok(summarize(rep, config.estimate_path(&path, horizon)?, &truth))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = config.clone();
    cfg.reps = files.len();
    finish_record(&cfg, horizon, reps, start)
}

fn write_estimates_csv(path: &FsPath, reps: &[RepSummary]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = reps.first().map_or(0, |r| r.estimate.nrows());
    let mut header = vec!["rep".to_string(), "gate_passed".into(), "error_norm".into(), "residual_norm".into()];
    for i in 1..=n {
        for j in 1..=n {
            header.push(format!("est_{i}{j}"));
        }
    }
    writeln!(w, "{}", header.join(","))?;
    for r in reps {
        let mut row = vec![
            r.rep.to_string(),
            r.gate_passed.to_string(),
            format!("{:.16e}", r.error_norm),
            format!("{:.16e}", r.residual_norm),
        ];
        row.extend(rowmajor::to_rows(&r.estimate).concat().iter().map(|v| format!("{v:.16e}")));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

/// Run the named suites (all when `names` is empty).
pub fn cmd_validate(names: &[String]) -> Result<ValidationReport> {
    let selected: Vec<String> = if names.is_empty() {
        suite_names().into_iter().map(String::from).collect()
    } else {
        for n in names {
            suites::find_suite(n)?;
        }
        names.to_vec()
    };
    let suites = selected.iter().map(|n| run_suite(n)).collect::<Result<Vec<_>>>()?;
    Ok(ValidationReport { passed: suites.iter().all(|s| s.passed), suites })
}

/// Monte Carlo limit sample for a discrete config; writes
/// `limit_draws.csv` and `limit_summary.json`.
pub fn cmd_asymptotics(config: &ExperimentConfig) -> Result<LimitSample> {
    config.validate()?;
    if !config.model.kind.is_discrete() {
        return Err(Error::Config("asymptotics runs on discrete models".into()));
    }
    let opts = LimitOptions {
        sample_size: config.sample_size.unwrap_or(2),
        horizon_t: config.horizon()? as usize,
        reps: config.reps,
        seed: config.seed,
        rate_exponent: config.rate_exponent,
    };
    let sample = monte_carlo_limit(&config.model, &opts)?;
    fs::create_dir_all(&config.output_dir)?;
    let mut w = BufWriter::new(File::create(config.output_dir.join("limit_draws.csv"))?);
    write_limit_csv(&sample, &mut w)?;
    w.flush()?;
    #[derive(Serialize)]
    struct Summary<'a> {
        config_hash: String,
        sample_size: usize,
        horizon_t: usize,
        rate_exponent: f64,
        reps: usize,
        gate_failures: usize,
        mean: &'a [f64],
        covariance: &'a [Vec<f64>],
        r_squared: Option<f64>,
    }
    write_json(
        &config.output_dir.join("limit_summary.json"),
        &Summary {
            config_hash: config.hash()?,
            sample_size: sample.sample_size,
            horizon_t: sample.horizon_t,
            rate_exponent: sample.rate_exponent,
            reps: sample.draws.len(),
            gate_failures: sample.gate_failures,
            mean: &sample.mean,
            covariance: &sample.covariance,
            r_squared: sample.r_squared,
        },
    )?;
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Driver;

    fn var1_config(dir: &FsPath) -> ExperimentConfig {
        ExperimentConfig {
            model: studies::reference_model(),
            sample_size: Some(500),
            t_end: None,
            dt: None,
            horizon_t: None,
            reps: 2,
            seed: 42,
            rate_exponent: 0.5,
            burn_in: 0,
            output_dir: dir.to_path_buf(),
            checks: vec![],
        }
    }

    #[test]
    fn config_round_trip() {
        let mut c = var1_config(FsPath::new("x"));
        c.horizon_t = Some(3.0);
        c.checks = vec!["care-analytic".into()];
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn config_validation() {
        let mut c = var1_config(FsPath::new("x"));
        c.reps = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = var1_config(FsPath::new("x"));
        c.checks = vec!["missing".into()];
        assert!(c.validate().is_err());
        let mut c = var1_config(FsPath::new("x"));
        c.horizon_t = Some(1.5);
        assert!(c.validate().is_err());
        let ou = ExperimentConfig {
            model: ModelSpec::ou(Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 1.0), Driver::Bm),
            sample_size: None,
            ..var1_config(FsPath::new("x"))
        };
        assert!(ou.validate().is_err());
        assert!(ExperimentConfig::from_json("{").is_err());
    }

    #[test]
    fn default_horizon_for_reference() {
        assert_eq!(var1_config(FsPath::new("x")).horizon().unwrap(), 3.0);
    }

    #[test]
    fn simulate_writes_files_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let c = var1_config(dir.path());
        let m = cmd_simulate(&c).unwrap();
        assert_eq!(m.paths.len(), 2);
        let first = fs::read(dir.path().join(&m.paths[0].file)).unwrap();
        cmd_simulate(&c).unwrap();
        assert_eq!(fs::read(dir.path().join(&m.paths[0].file)).unwrap(), first);
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn estimate_is_reproducible_and_reads_paths() {
        let dir = tempfile::tempdir().unwrap();
        let c = var1_config(dir.path());
        let a = cmd_estimate(&c).unwrap();
        let b = cmd_estimate(&c).unwrap();
        assert_eq!(a.aggregate, b.aggregate);
        assert_eq!(a.reps.len(), 2);
        let m = cmd_simulate(&c).unwrap();
        let files: Vec<PathBuf> = m.paths.iter().map(|e| dir.path().join(&e.file)).collect();
        let from_files = cmd_estimate_paths(&c, &files).unwrap();
        for (x, y) in from_files.reps.iter().zip(&a.reps) {
            assert!((&x.estimate - &y.estimate).amax() < 1e-12);
        }
        let text = fs::read_to_string(dir.path().join("run_record.json")).unwrap();
        let parsed: RunRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.aggregate, from_files.aggregate);
    }

    #[test]
    fn zero_noise_records_fallback() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = var1_config(dir.path());
        c.model.sigma = linalg::zeros(2);
        c.horizon_t = Some(3.0);
        let r = cmd_estimate(&c).unwrap();
        assert_eq!(r.aggregate.gate_failures, 2);
        assert!(r.reps.iter().all(|s| s.estimate.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn validate_unknown_suite() {
        assert!(matches!(cmd_validate(&["nope".into()]), Err(Error::UnknownSuite { .. })));
        let r = cmd_validate(&["care-analytic".into()]).unwrap();
        assert!(r.passed);
    }
}
