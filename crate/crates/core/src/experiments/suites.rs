//! Named validation suites. Every randomized threshold is defined here.

use serde::{Deserialize, Serialize};

use super::studies::{self, reference_model};
use crate::autocov::{AutocovSeq, Provenance};
use crate::error::{Error, Result};
use crate::estimation::{
    degeneracy_check, estimate_from_autocov_continuous, estimate_from_autocov_discrete, estimate_theta_discrete,
};
use crate::linalg::{self, Mat};
use crate::models::{noise_variance_v, simulate_var1, theoretical_gamma, Driver, ModelSpec};
use crate::riccati::{build_coeffs_continuous, build_coeffs_discrete};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "==")]
    Holds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub relation: Relation,
    /// Distance to the threshold, positive when passing.
    pub margin: f64,
}

impl CheckOutcome {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            relation: Relation::AtMost,
            margin: threshold - value,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= threshold,
            value,
            threshold,
            relation: Relation::AtLeast,
            margin: value - threshold,
        }
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Self { name: name.into(), passed: ok, value: v, threshold: 1.0, relation: Relation::Holds, margin: v - 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

pub struct Suite {
    pub name: &'static str,
    pub description: &'static str,
    run: fn() -> Result<Vec<CheckOutcome>>,
}

pub fn registry() -> &'static [Suite] {
    &SUITES
}

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|s| s.name).collect()
}

pub fn find_suite(name: &str) -> Result<&'static Suite> {
    SUITES
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::UnknownSuite { name: name.to_string(), available: suite_names().join(", ") })
}

pub fn run_suite(name: &str) -> Result<SuiteReport> {
    let suite = find_suite(name)?;
    let checks = (suite.run)()?;
    Ok(SuiteReport { name: suite.name.to_string(), passed: checks.iter().all(|c| c.passed), checks })
}

static SUITES: [Suite; 10] = [
    Suite { name: "care-analytic", description: "closed-form scalar AR(1) and OU pipelines", run: care_analytic },
    Suite {
        name: "care-solver",
        description: "random CARE instances: residual, PSD, two-start agreement",
        run: care_solver,
    },
    Suite {
        name: "theorem-residual",
        description: "true parameter solves the CARE for t = 1..8",
        run: theorem_residual,
    },
    Suite { name: "l1-identity", description: "exactness of the linear error map", run: l1_identity },
    Suite {
        name: "consistency",
        description: "median error decay, rate, and coefficient bounds on the reference model",
        run: consistency,
    },
    Suite {
        name: "limit-linearity",
        description: "linearity of the limiting law in the stacked autocovariance errors",
        run: limit_linearity,
    },
    Suite { name: "reconstruction", description: "moving-average reconstruction error decay", run: reconstruction },
    Suite { name: "ou-estimation", description: "scalar OU drift estimation from sampled paths", run: ou_estimation },
    Suite {
        name: "degeneracy",
        description: "degenerate univariate input flagged, generic input not",
        run: degeneracy,
    },
    Suite {
        name: "lamperti-fallback",
        description: "Lamperti roundtrip and zero-noise gate fallback",
        run: lamperti_fallback,
    },
];

fn scalar(x: f64) -> Mat {
    Mat::from_element(1, 1, x)
}

fn care_analytic() -> Result<Vec<CheckOutcome>> {
    const TOL: f64 = 1e-10;
    let spec = ModelSpec::var1(scalar(0.5), scalar(1.0));
    let g = theoretical_gamma(&spec, 3)?;
    let v = noise_variance_v(&spec, 3.0)?;
    let k = build_coeffs_discrete(&g, &v, 3)?;
    let e = estimate_from_autocov_discrete(&g, &v, 3)?;

    let dt = 1e-3;
    let ou = AutocovSeq::uniform(
        (0..=1000).map(|i| scalar((-(i as f64) * dt).exp() / 2.0)).collect(),
        dt,
        Provenance::Theoretical,
        None,
    );
    let kc = build_coeffs_continuous(&ou, &scalar(1.0), 1.0)?;
    let ec = estimate_from_autocov_continuous(&ou, &scalar(1.0), 1.0)?;
    let e1 = (-1f64).exp();
    Ok(vec![
        CheckOutcome::at_most("discrete B = 7/6", (k.b[(0, 0)] - 7.0 / 6.0).abs(), TOL),
        CheckOutcome::at_most("discrete C = 22/3", (k.c[(0, 0)] - 22.0 / 3.0).abs(), TOL),
        CheckOutcome::at_most("discrete D = 2/3", (k.d[(0, 0)] - 2.0 / 3.0).abs(), TOL),
        CheckOutcome::at_most("discrete theta = 1/2", (e.estimate[(0, 0)] - 0.5).abs(), TOL),
        CheckOutcome::at_most("continuous C = 1/e", (kc.c[(0, 0)] - e1).abs(), 1e-4),
        CheckOutcome::at_most("continuous D = 1/e", (kc.d[(0, 0)] - e1).abs(), 1e-4),
        CheckOutcome::at_most("continuous H = 1", (ec.estimate[(0, 0)] - 1.0).abs(), 1e-3),
    ])
}

fn care_solver() -> Result<Vec<CheckOutcome>> {
    let out = studies::care_random_study(100, 5, 20_240_601);
    let failures = out.iter().filter(|o| o.error.is_some()).count();
    Ok(vec![
        CheckOutcome::at_most("solver failures", failures as f64, 0.0),
        CheckOutcome::at_most(
            "max residual / max(1, ‖D‖)",
            out.iter().map(|o| o.scaled_residual).fold(0.0, f64::max),
            1e-8,
        ),
        CheckOutcome::holds("all symmetric PSD", out.iter().all(|o| o.symmetric && o.psd)),
        CheckOutcome::at_most("max two-start gap", out.iter().map(|o| o.two_start_gap).fold(0.0, f64::max), 1e-6),
    ])
}

fn theorem_residual() -> Result<Vec<CheckOutcome>> {
    let rows = studies::theorem_residual_study(&reference_model(), &[1, 2, 3, 4, 5, 6, 7, 8])?;
    Ok(rows.into_iter().map(|(t, r)| CheckOutcome::at_most(format!("residual at t = {t}"), r, 1e-9)).collect())
}

fn l1_identity() -> Result<Vec<CheckOutcome>> {
    let worst = studies::l1_random_study(1000, 7)?;
    Ok(vec![CheckOutcome::at_most("max discrepancy", worst, 1e-12)])
}

pub const CONSISTENCY_SIZES: [usize; 3] = [1000, 4000, 16000];
pub const CONSISTENCY_REPS: usize = 200;
pub const CONSISTENCY_SEED: u64 = 1;
/// Estimation example threshold: `‖Θ̂ − Θ‖ ≤ 0.1` in at least 90% of reps at
/// the largest sample size.
pub const ERROR_BAND: f64 = 0.1;
pub const ERROR_BAND_FRACTION: f64 = 0.9;

fn consistency() -> Result<Vec<CheckOutcome>> {
    let spec = reference_model();
    let t = crate::estimation::default_horizon(&spec)?;
    let s = studies::consistency_study(&spec, &CONSISTENCY_SIZES, t, CONSISTENCY_REPS, CONSISTENCY_SEED)?;
    let mut out = vec![CheckOutcome::holds("medians strictly decrease", s.medians_strictly_decrease())];
    for (i, r) in s.scaled_ratios().into_iter().enumerate() {
        out.push(CheckOutcome::at_least(format!("scaled ratio {i} lower"), r, 1.0 / 3.0));
        out.push(CheckOutcome::at_most(format!("scaled ratio {i} upper"), r, 3.0));
    }
    let violations: usize = s.levels.iter().map(|l| l.bound_violations).sum();
    out.push(CheckOutcome::at_most("coefficient bound violations", violations as f64, 0.0));
    let last = s.levels.last().expect("levels");
    let within = last.errors.iter().filter(|e| **e <= ERROR_BAND).count() as f64 / last.errors.len() as f64;
    out.push(CheckOutcome::at_least("fraction within error band at largest T", within, ERROR_BAND_FRACTION));
    Ok(out)
}

fn limit_linearity() -> Result<Vec<CheckOutcome>> {
    let spec = reference_model();
    let opts = crate::asymptotics::LimitOptions {
        sample_size: 16000,
        horizon_t: crate::estimation::default_horizon(&spec)?,
        reps: 200,
        seed: 2,
        rate_exponent: 0.5,
    };
    let s = crate::asymptotics::monte_carlo_limit(&spec, &opts)?;
    Ok(vec![CheckOutcome::at_least("R²", s.r_squared.unwrap_or(f64::NAN), 0.9)])
}

fn reconstruction() -> Result<Vec<CheckOutcome>> {
    let levels = studies::reconstruction_study(&reference_model(), 2000, &[5, 10, 20, 40], 3)?;
    let mut out: Vec<CheckOutcome> = levels
        .iter()
        .map(|l| CheckOutcome::at_most(format!("error at M = {}", l.truncation), l.max_error, l.bound))
        .collect();
    out.push(CheckOutcome::holds("error decreasing in M", levels.windows(2).all(|w| w[1].max_error < w[0].max_error)));
    Ok(out)
}

fn ou_estimation() -> Result<Vec<CheckOutcome>> {
    let spec = ModelSpec::ou(scalar(1.0), scalar(1.0), Driver::Bm);
    let s = studies::ou_study(&spec, 2000.0, 0.01, 1.0, 100, 4)?;
    Ok(vec![CheckOutcome::at_most("median |Ĥ − 1|", s.median_abs_error, 0.15)])
}

fn degeneracy() -> Result<Vec<CheckOutcome>> {
    let (g, r) = studies::cyclic_degenerate_input(0.3, 0.8, 12);
    let rep = degeneracy_check(&g, r, 0..=8, 1e-9)?;
    let ar1 = theoretical_gamma(&ModelSpec::var1(scalar(0.5), scalar(1.0)), 4)?;
    let generic = degeneracy_check(&ar1, |t| if t == 0 { 1.0 } else { 0.0 }, 0..=2, 1e-9)?;
    Ok(vec![
        CheckOutcome::holds("constructed input flagged", rep.degenerate),
        CheckOutcome::at_most(
            "quadratic residual of both roots",
            rep.max_quadratic2_residual.unwrap_or(f64::INFINITY),
            1e-8,
        ),
        CheckOutcome::holds("generic AR(1) not flagged", !generic.degenerate),
    ])
}

fn lamperti_fallback() -> Result<Vec<CheckOutcome>> {
    let spec = reference_model();
    let h = Mat::from_row_slice(2, 2, &[0.3, 0.05, 0.05, 0.25]);
    let roundtrip = studies::lamperti_roundtrip(&spec, &h, 40, 5)?;
    let zero = ModelSpec::var1(spec.phi_or_h.clone(), linalg::zeros(2));
    let path = simulate_var1(&zero, 500, 0, 6)?;
    let e = estimate_theta_discrete(&path, &linalg::zeros(2), 3)?;
    Ok(vec![
        CheckOutcome::at_most("roundtrip error", roundtrip, 1e-12),
        CheckOutcome::holds("zero noise: gate fails", !e.gate_passed),
        CheckOutcome::holds("zero noise: estimate is 0", e.estimate.iter().all(|v| *v == 0.0)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_suites_pass() {
        for name in ["care-analytic", "theorem-residual", "degeneracy", "lamperti-fallback", "reconstruction"] {
            let r = run_suite(name).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn unknown_suite_lists_available() {
        match run_suite("nope") {
            Err(Error::UnknownSuite { available, .. }) => assert!(available.contains("l1-identity")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn names_are_unique() {
        let mut names = suite_names();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), registry().len());
    }
}
