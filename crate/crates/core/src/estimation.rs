//! Riccati-based estimators of `Θ = I − e^{−H}` (discrete time) and `H`
//! (continuous time), plus the univariate quadratic-equation diagnostics.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::autocov::{sample_autocov, sample_autocov_sampled, AutocovSeq};
use crate::error::{Error, Result};
use crate::linalg::{self, rowmajor, DefinitenessReport, Mat};
use crate::models::{noise_variance_v, theoretical_gamma, ModelSpec, Path, PathKind};
use crate::riccati::{build_coeffs_continuous, build_coeffs_discrete, solve_care, CareCoefficients, CoeffProvenance};

/// Eigenvalue window for `I − Θ̂` before taking the logarithm.
pub const CLAMP_LO: f64 = 1e-6;
pub const CLAMP_HI: f64 = 1.0 - 1e-6;

/// Largest horizon searched by [`select_horizon`].
pub const MAX_DEFAULT_HORIZON: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateFailure {
    CNotPd,
    DNotPd,
    /// Both gates passed but no PSD solution was found.
    NoSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub provenance: CoeffProvenance,
    /// `Θ̂` for discrete data, `Ĥ` for continuous data.
    #[serde(with = "rowmajor")]
    pub estimate: Mat,
    /// `−log(I − Θ̂)` for discrete estimates.
    #[serde(with = "rowmajor::option", default)]
    pub h_recovered: Option<Mat>,
    #[serde(default)]
    pub h_clamped: bool,
    pub gate_passed: bool,
    pub failure: Option<GateFailure>,
    pub residual_norm: f64,
    pub horizon_t: f64,
    pub sample_size: Option<usize>,
    pub pd_report_c: DefinitenessReport,
    pub pd_report_d: DefinitenessReport,
}

/// Gates and solve; the fallback is the zero matrix.
pub fn estimate_from_coeffs(coeffs: &CareCoefficients, sample_size: Option<usize>) -> EstimateResult {
    let n = coeffs.dim();
    let failure = if !coeffs.pd_report_c.is_pd {
        Some(GateFailure::CNotPd)
    } else if !coeffs.pd_report_d.is_pd {
        Some(GateFailure::DNotPd)
    } else {
        None
    };
    let (estimate, residual_norm, failure) = match failure {
        Some(f) => (linalg::zeros(n), f64::NAN, Some(f)),
        None => match solve_care(coeffs) {
            Ok(sol) => (sol.x, sol.residual_norm, None),
            Err(Error::NoSolution { residual, .. }) => (linalg::zeros(n), residual, Some(GateFailure::NoSolution)),
            Err(_) => (linalg::zeros(n), f64::NAN, Some(GateFailure::NoSolution)),
        },
    };
    let (h_recovered, h_clamped) = match coeffs.provenance {
        CoeffProvenance::Discrete => {
            let r = recover_h(&estimate).expect("estimate is symmetric");
            (Some(r.h), r.clamped)
        }
        CoeffProvenance::Continuous => (None, false),
    };
    EstimateResult {
        provenance: coeffs.provenance,
        estimate,
        h_recovered,
        h_clamped,
        gate_passed: failure.is_none(),
        failure,
        residual_norm,
        horizon_t: coeffs.horizon_t,
        sample_size,
        pd_report_c: coeffs.pd_report_c,
        pd_report_d: coeffs.pd_report_d,
    }
}

/// Estimate from given (sample or theoretical) autocovariances.
pub fn estimate_from_autocov_discrete(gammas: &AutocovSeq, v_t: &Mat, t: usize) -> Result<EstimateResult> {
    let coeffs = build_coeffs_discrete(gammas, v_t, t)?;
    Ok(estimate_from_coeffs(&coeffs, gammas.sample_size))
}

pub fn estimate_from_autocov_continuous(gammas: &AutocovSeq, v_t: &Mat, t: f64) -> Result<EstimateResult> {
    let coeffs = build_coeffs_continuous(gammas, v_t, t)?;
    Ok(estimate_from_coeffs(&coeffs, gammas.sample_size))
}

/// `Θ̂_T` from a discrete path, using centered sample autocovariances at
/// lags `0..=t`.
pub fn estimate_theta_discrete(path: &Path, v_t: &Mat, t: usize) -> Result<EstimateResult> {
    if path.kind() != PathKind::Discrete {
        return Err(Error::invalid("estimate_theta_discrete needs a discrete path"));
    }
    if path.len() <= t {
        return Err(Error::invalid(format!("need T > t, have T = {} and t = {t}", path.len())));
    }
    let gammas = sample_autocov(path, t, true)?;
    estimate_from_autocov_discrete(&gammas, v_t, t)
}

/// `Ĥ_T` from a uniformly sampled continuous path.
pub fn estimate_h_continuous(path: &Path, v_t: &Mat, t: f64) -> Result<EstimateResult> {
    if path.kind() != PathKind::ContinuousSampled {
        return Err(Error::invalid("estimate_h_continuous needs a sampled continuous path"));
    }
    let gammas = sample_autocov_sampled(path, t)?;
    estimate_from_autocov_continuous(&gammas, v_t, t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredH {
    pub h: Mat,
    pub clamped: bool,
}

/// `H = −log(I − Θ̂)` with the spectrum of `I − Θ̂` clamped to
/// `[CLAMP_LO, CLAMP_HI]`.
pub fn recover_h(theta_hat: &Mat) -> Result<RecoveredH> {
    let n = theta_hat.nrows();
    let phi = linalg::identity(n) - linalg::symmetrize_checked(theta_hat)?;
    let eig = linalg::sym_eig(&phi)?;
    let clamped = eig.lambda.iter().any(|&l| !(CLAMP_LO..=CLAMP_HI).contains(&l));
    let h = eig.map(|l| -l.clamp(CLAMP_LO, CLAMP_HI).ln());
    Ok(RecoveredH { h, clamped })
}

/// Smallest `t ≤ max_t` whose coefficients pass both PD gates.
pub fn select_horizon(
    mut coeffs_at: impl FnMut(usize) -> Result<CareCoefficients>,
    max_t: usize,
) -> Result<Option<usize>> {
    for t in 1..=max_t {
        if coeffs_at(t)?.gates_pass() {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// Default horizon for a known discrete model, from its theoretical
/// coefficients.
pub fn default_horizon(spec: &ModelSpec) -> Result<usize> {
    if !spec.kind.is_discrete() {
        return Err(Error::invalid("default_horizon applies to discrete models"));
    }
    let gammas = theoretical_gamma(spec, MAX_DEFAULT_HORIZON)?;
    select_horizon(|t| build_coeffs_discrete(&gammas, &noise_variance_v(spec, t as f64)?, t), MAX_DEFAULT_HORIZON)?
        .ok_or_else(|| Error::invalid(format!("no horizon t ≤ {MAX_DEFAULT_HORIZON} with C_t, D_t positive definite")))
}

fn scalar_at(gamma: &AutocovSeq, k: i64) -> Result<f64> {
    if gamma.dim() != 1 {
        return Err(Error::invalid("univariate operation on a multivariate sequence"));
    }
    Ok(gamma.at(k)?[(0, 0)])
}

/// Real roots (ascending) of `γ(t)Φ² − (γ(t+1) + γ(t−1))Φ + γ(t) − r(t) = 0`.
pub fn univariate_quadratic_roots(gamma: &AutocovSeq, r_t: f64, t: i64) -> Result<(f64, f64)> {
    let a = scalar_at(gamma, t)?;
    let b = -(scalar_at(gamma, t + 1)? + scalar_at(gamma, t - 1)?);
    let c = a - r_t;
    if a == 0.0 {
        return Err(Error::Degenerate(format!("γ({t}) = 0, the equation is not quadratic")));
    }
    let mut disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        if disc.abs() <= 1e-12 * (b * b).max((4.0 * a * c).abs()) {
            disc = 0.0;
        } else {
            return Err(Error::NoRealSolution { radicand: disc });
        }
    }
    let sq = disc.sqrt();
    // cancellation-free pair
    let q = -0.5 * (b + b.signum() * sq);
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    Ok((r1.min(r2), r1.max(r2)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegeneracyEntry {
    pub t: i64,
    pub roots: (f64, f64),
    /// Largest `|C_tΘ² − 2B_tΘ − D_t|` over both `Θ = 1 − root`, when checked.
    pub quadratic2_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegeneracyReport {
    pub entries: Vec<DegeneracyEntry>,
    /// Root pairs agree across every `t` in range.
    pub roots_coincide: bool,
    /// The common pair consists of two distinct positive roots.
    pub two_positive_roots: bool,
    pub degenerate: bool,
    pub max_quadratic2_residual: Option<f64>,
}

/// Whether the quadratic in `Φ` has the same two positive roots at every `t`
/// in `t_range`; if so, checks that `1 − Φ` and `1 − Φ̃` both solve
/// `C_tΘ² − 2B_tΘ − D_t = 0` (for `t ≥ 1`), with
/// `v(t) = Σ_{k,j=1}^t r(k − j)`.
pub fn degeneracy_check(
    gamma: &AutocovSeq,
    r: impl Fn(i64) -> f64,
    t_range: RangeInclusive<i64>,
    tol: f64,
) -> Result<DegeneracyReport> {
    let mut entries = Vec::new();
    for t in t_range {
        let roots = univariate_quadratic_roots(gamma, r(t), t)?;
        entries.push(DegeneracyEntry { t, roots, quadratic2_residual: None });
    }
    let Some(first) = entries.first().map(|e| e.roots) else {
        return Ok(DegeneracyReport {
            entries,
            roots_coincide: true,
            two_positive_roots: false,
            degenerate: false,
            max_quadratic2_residual: None,
        });
    };
    let roots_coincide =
        entries.iter().all(|e| (e.roots.0 - first.0).abs() <= tol && (e.roots.1 - first.1).abs() <= tol);
    let two_positive_roots = first.0 > 0.0 && first.1 - first.0 > tol;
    let degenerate = roots_coincide && two_positive_roots;
    let mut max_res: Option<f64> = None;
    if degenerate {
        for e in entries.iter_mut().filter(|e| e.t >= 1) {
            let t = e.t;
            let v: f64 = (1..=t).flat_map(|k| (1..=t).map(move |j| (k, j))).map(|(k, j)| r(k - j)).sum();
            let k = build_coeffs_discrete(gamma, &Mat::from_element(1, 1, v), t as usize)?;
            let (b, c, d) = (k.b[(0, 0)], k.c[(0, 0)], k.d[(0, 0)]);
            let res = [e.roots.0, e.roots.1]
                .iter()
                .map(|phi| {
                    let th = 1.0 - phi;
                    (c * th * th - 2.0 * b * th - d).abs()
                })
                .fold(0.0, f64::max);
            e.quadratic2_residual = Some(res);
            max_res = Some(max_res.map_or(res, |m| m.max(res)));
        }
    }
    Ok(DegeneracyReport { entries, roots_coincide, two_positive_roots, degenerate, max_quadratic2_residual: max_res })
}

/// Composite trapezoid rule for `∫_a^b f` with `m` panels.
fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * f(a) + inner + 0.5 * f(b))
}

fn panels(delta: f64, dt: f64) -> Result<usize> {
    if !(delta > 0.0 && dt > 0.0) {
        return Err(Error::invalid("delta and dt must be positive"));
    }
    Ok(((delta / dt).round() as usize).max(1))
}

/// Univariate continuous-time estimator
/// `H = sqrt((r_δ(t) − 2γ(t) + γ(t+δ) + γ(t−δ)) / W)`, with the weighted
/// integral `W` evaluated by the trapezoid rule at step `dt`.
pub fn univariate_h_continuous(gamma: impl Fn(f64) -> f64, r_delta_t: f64, t: f64, delta: f64, dt: f64) -> Result<f64> {
    let m = panels(delta, dt)?;
    let w = trapezoid(|s| (s - t + delta) * gamma(s), t - delta, t, m)
        + trapezoid(|s| (t - s + delta) * gamma(s), t, t + delta, m);
    if !(w > 0.0) {
        return Err(Error::Degenerate(format!("weighted integral W = {w:e} is not positive")));
    }
    let num = r_delta_t - 2.0 * gamma(t) + gamma(t + delta) + gamma(t - delta);
    let radicand = num / w;
    if radicand < 0.0 {
        return Err(Error::NoRealSolution { radicand });
    }
    Ok(radicand.sqrt())
}

/// Right side of `r(t) = Φγ(t)Φᵀ − γ(t+1)Φᵀ − Φγ(t−1) + γ(t)`.
pub fn check_lemma_noncare(gamma: &AutocovSeq, phi: &Mat, t: i64) -> Result<Mat> {
    let g = gamma.at(t)?;
    let gp = gamma.at(t + 1)?;
    let gm = gamma.at(t - 1)?;
    if phi.shape() != g.shape() {
        return Err(Error::invalid("phi dimension does not match the autocovariances"));
    }
    Ok(phi * &g * phi.transpose() - gp * phi.transpose() - phi * gm + g)
}

/// Right side of the continuous-time increment identity
/// `r_δ(t) = 2γ(t) − γ(t+δ) − γ(t−δ) + (I₊ − I₋)H + H(I₋ − I₊) + H W H`,
/// where `I₋ = ∫_{t−δ}^t γ`, `I₊ = ∫_t^{t+δ} γ` and `W` is the tent-weighted
/// integral, all by the trapezoid rule on the grid of `gamma`.
pub fn check_lemma_noncare_cont(gamma: &AutocovSeq, h: &Mat, t: f64, delta: f64) -> Result<Mat> {
    let n = gamma.dim();
    if h.shape() != (n, n) {
        return Err(Error::invalid("H dimension does not match the autocovariances"));
    }
    let step = gamma.step();
    let k_t = gamma.index_of(t)?;
    let m = gamma.index_of(delta)?;
    if m < 1 {
        return Err(Error::invalid("delta must be at least one grid step"));
    }
    let mut i_minus = linalg::zeros(n);
    let mut i_plus = linalg::zeros(n);
    let mut w = linalg::zeros(n);
    for j in 0..=m {
        let edge = if j == 0 || j == m { 0.5 } else { 1.0 };
        let tent = (m - j) as f64 * step; // δ − |s − t|
        let gm = gamma.at(k_t - j)?;
        let gp = gamma.at(k_t + j)?;
        i_minus += &gm * (edge * step);
        i_plus += &gp * (edge * step);
        if j == 0 {
            w += &gm * (2.0 * edge * step * tent);
        } else {
            w += (gm + gp) * (edge * step * tent);
        }
    }
    let g = gamma.at(k_t)?;
    let lead = &g * 2.0 - gamma.at(k_t + m)? - gamma.at(k_t - m)?;
    Ok(lead + (&i_plus - &i_minus) * h + h * (&i_minus - &i_plus) + h * w * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autocov::Provenance;
    use crate::models::{simulate_var1, theoretical_gamma_var1, Driver};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn scalar(x: f64) -> Mat {
        Mat::from_element(1, 1, x)
    }

    fn reference() -> ModelSpec {
        ModelSpec::var1(Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]), linalg::identity(2))
    }

    fn ar1() -> ModelSpec {
        ModelSpec::var1(scalar(0.5), scalar(1.0))
    }

    fn ou_gamma(dt: f64, max: f64) -> AutocovSeq {
        let m = (max / dt).round() as usize;
        AutocovSeq::uniform(
            (0..=m).map(|k| scalar((-(k as f64) * dt).exp() / 2.0)).collect(),
            dt,
            Provenance::Theoretical,
            None,
        )
    }

    #[test]
    fn theoretical_injection_scalar() {
        let g = theoretical_gamma_var1(&ar1(), 3).unwrap();
        let e = estimate_from_autocov_discrete(&g, &scalar(3.0), 3).unwrap();
        assert!(e.gate_passed);
        assert_abs_diff_eq!(e.estimate[(0, 0)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(e.h_recovered.unwrap()[(0, 0)], 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn theoretical_injection_reference_model() {
        let spec = reference();
        let t = default_horizon(&spec).unwrap();
        assert_eq!(t, 3);
        let g = theoretical_gamma(&spec, t).unwrap();
        let e = estimate_from_autocov_discrete(&g, &noise_variance_v(&spec, t as f64).unwrap(), t).unwrap();
        assert!(e.gate_passed);
        assert!((&e.estimate - spec.theta().unwrap()).amax() < 1e-9);
    }

    #[test]
    fn zero_noise_falls_back_to_zero() {
        let spec = ModelSpec::var1(scalar(0.5), scalar(0.0));
        let path = simulate_var1(&spec, 100, 0, 1).unwrap();
        let e = estimate_theta_discrete(&path, &scalar(0.0), 3).unwrap();
        assert!(!e.gate_passed);
        assert_eq!(e.estimate, scalar(0.0));
        assert!(e.failure.is_some());
    }

    #[test]
    fn failing_d_gate_reports_reason() {
        let g = theoretical_gamma_var1(&ar1(), 1).unwrap();
        let e = estimate_from_autocov_discrete(&g, &scalar(1.0), 1).unwrap();
        assert_eq!(e.failure, Some(GateFailure::DNotPd));
        assert_eq!(e.estimate, scalar(0.0));
    }

    #[test]
    fn estimate_guards() {
        let path = simulate_var1(&ar1(), 2, 0, 1).unwrap();
        assert!(estimate_theta_discrete(&path, &scalar(3.0), 3).is_err());
    }

    #[test]
    fn long_path_estimate_is_close() {
        let spec = reference();
        let path = simulate_var1(&spec, 16000, 0, 11).unwrap();
        let e = estimate_theta_discrete(&path, &noise_variance_v(&spec, 3.0).unwrap(), 3).unwrap();
        assert!(e.gate_passed);
        assert!(linalg::spectral_norm(&(&e.estimate - spec.theta().unwrap())) < 0.2);
    }

    #[test]
    fn estimate_result_json() {
        let g = theoretical_gamma_var1(&ar1(), 3).unwrap();
        let e = estimate_from_autocov_discrete(&g, &scalar(3.0), 3).unwrap();
        let v = serde_json::to_value(&e).unwrap();
        assert!(v["estimate"].is_array());
        assert_eq!(v["gate_passed"], true);
        let back: EstimateResult = serde_json::from_value(v).unwrap();
        assert_eq!(back.estimate, e.estimate);
    }

    #[test]
    fn recover_h_examples() {
        let r = recover_h(&scalar(1.0 - (-1f64).exp())).unwrap();
        assert_abs_diff_eq!(r.h[(0, 0)], 1.0, epsilon = 1e-12);
        assert!(!r.clamped);
        let phi = reference().phi_or_h;
        let r = recover_h(&(linalg::identity(2) - &phi)).unwrap();
        assert!((linalg::expm_sym(&(-&r.h)).unwrap() - phi).amax() < 1e-9);
    }

    #[test]
    fn recover_h_of_zero_clamps() {
        let r = recover_h(&linalg::zeros(2)).unwrap();
        assert!(r.clamped);
        assert!(r.h.amax() < 1.1e-6);
    }

    #[test]
    fn continuous_theoretical_ou() {
        let g = ou_gamma(1e-3, 1.0);
        let e = estimate_from_autocov_continuous(&g, &scalar(1.0), 1.0).unwrap();
        assert!(e.gate_passed);
        assert!((e.estimate[(0, 0)] - 1.0).abs() < 1e-3);
        assert!(e.h_recovered.is_none());
    }

    #[test]
    fn continuous_path_estimate() {
        let spec = ModelSpec::ou(scalar(1.0), scalar(1.0), Driver::Bm);
        let path = crate::models::simulate_ou(&spec, 500.0, 0.01, 3).unwrap();
        let e = estimate_h_continuous(&path, &scalar(1.0), 1.0).unwrap();
        assert!(e.gate_passed);
        assert!((e.estimate[(0, 0)] - 1.0).abs() < 0.5);
    }

    #[test]
    fn quadratic_roots_examples() {
        let g = theoretical_gamma_var1(&ar1(), 3).unwrap();
        // AR(1) at t = 0 gives the double root 1/2
        let (a, b) = univariate_quadratic_roots(&g, 1.0, 0).unwrap();
        assert_abs_diff_eq!(a, 0.5, epsilon = 1e-7);
        assert_abs_diff_eq!(b, 0.5, epsilon = 1e-7);
        // t = 1, r(1) = 0: 2Φ² − 5Φ + 2 = 0
        let (a, b) = univariate_quadratic_roots(&g, 0.0, 1).unwrap();
        assert_abs_diff_eq!(a, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_roots_constructed() {
        let g = theoretical_gamma_var1(&ar1(), 4).unwrap();
        let phi0 = 0.37;
        for t in 0..3i64 {
            let gt = g.at(t).unwrap()[(0, 0)];
            let s = g.at(t + 1).unwrap()[(0, 0)] + g.at(t - 1).unwrap()[(0, 0)];
            let r = gt * (1.0 + phi0 * phi0) - s * phi0;
            let (a, b) = univariate_quadratic_roots(&g, r, t).unwrap();
            assert!((a - phi0).abs() < 1e-10 || (b - phi0).abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_roots_guards() {
        let g = AutocovSeq::integer_lags(vec![scalar(1.0), scalar(0.0), scalar(0.5)], Provenance::Theoretical, None);
        assert!(matches!(univariate_quadratic_roots(&g, 0.0, 1), Err(Error::Degenerate(_))));
        // 1·Φ² − 0·Φ + 1 − 0 has no real roots
        let g = AutocovSeq::integer_lags(vec![scalar(1.0), scalar(0.0)], Provenance::Theoretical, None);
        assert!(matches!(univariate_quadratic_roots(&g, 0.0, 0), Err(Error::NoRealSolution { .. })));
    }

    /// `γ(t) = cos(ωt)` with `2cos ω = Φ + Φ̃` and `r(t) = γ(t)(1 − ΦΦ̃)`
    /// satisfies the quadratic for both `Φ` and `Φ̃` at every `t`.
    fn cyclic(phi: f64, phi_t: f64, max_lag: usize) -> (AutocovSeq, impl Fn(i64) -> f64) {
        let omega = ((phi + phi_t) / 2.0).acos();
        let g = AutocovSeq::integer_lags(
            (0..=max_lag).map(|k| scalar((omega * k as f64).cos())).collect(),
            Provenance::Theoretical,
            None,
        );
        let r = move |t: i64| (omega * t as f64).cos() * (1.0 - phi * phi_t);
        (g, r)
    }

    #[test]
    fn degeneracy_flags_cyclic_input() {
        let (g, r) = cyclic(0.3, 0.8, 12);
        let rep = degeneracy_check(&g, r, 0..=8, 1e-9).unwrap();
        assert!(rep.degenerate);
        assert_abs_diff_eq!(rep.entries[0].roots.0, 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.entries[0].roots.1, 0.8, epsilon = 1e-10);
        assert!(rep.max_quadratic2_residual.unwrap() < 1e-8);
    }

    #[test]
    fn degeneracy_generic_ar1() {
        let g = theoretical_gamma_var1(&ar1(), 4).unwrap();
        let r = |t: i64| if t == 0 { 1.0 } else { 0.0 };
        let rep = degeneracy_check(&g, r, 0..=2, 1e-9).unwrap();
        assert!(!rep.degenerate);
        assert!(!rep.roots_coincide);
    }

    #[test]
    #[allow(clippy::reversed_empty_ranges)]
    fn degeneracy_empty_range() {
        let g = theoretical_gamma_var1(&ar1(), 2).unwrap();
        let rep = degeneracy_check(&g, |_| 0.0, 1..=0, 1e-9).unwrap();
        assert!(rep.entries.is_empty());
        assert!(!rep.degenerate);
    }

    #[test]
    fn univariate_continuous_examples() {
        let gamma = |s: f64| (-s.abs()).exp() / 2.0;
        let h = univariate_h_continuous(gamma, 1.0, 0.0, 1.0, 1e-3).unwrap();
        assert!((h - 1.0).abs() < 1e-3);
        let lead = 2.0 * gamma(0.5) - gamma(1.5) - gamma(-0.5);
        assert_eq!(univariate_h_continuous(gamma, lead, 0.5, 1.0, 1e-3).unwrap(), 0.0);
        assert!(matches!(univariate_h_continuous(|_| -1.0, 0.0, 0.0, 1.0, 1e-2), Err(Error::Degenerate(_))));
        assert!(matches!(univariate_h_continuous(gamma, -5.0, 0.0, 1.0, 1e-3), Err(Error::NoRealSolution { .. })));
    }

    #[test]
    fn noncare_examples() {
        let spec = reference();
        let g = theoretical_gamma(&spec, 4).unwrap();
        let r0 = check_lemma_noncare(&g, &spec.phi_or_h, 0).unwrap();
        assert!((r0 - &spec.sigma).amax() < 1e-10);
        let r2 = check_lemma_noncare(&g, &spec.phi_or_h, 2).unwrap();
        assert!(r2.amax() < 1e-10);
        let r1 = check_lemma_noncare(&g, &linalg::zeros(2), 1).unwrap();
        assert_eq!(r1, g.at(1).unwrap());
    }

    #[test]
    fn noncare_cont_examples() {
        // Brownian driver: r_δ(t) = max(0, δ − |t|)
        let g = ou_gamma(1e-3, 3.0);
        for (t, delta) in [(0.0, 1.0), (0.5, 1.0), (1.0, 0.5)] {
            let r = check_lemma_noncare_cont(&g, &scalar(1.0), t, delta).unwrap()[(0, 0)];
            let expected = (delta - f64::abs(t)).max(0.0);
            assert!((r - expected).abs() < 1e-3, "t={t} δ={delta}: {r} vs {expected}");
        }
        let flat = AutocovSeq::uniform(vec![scalar(2.0); 11], 0.1, Provenance::Theoretical, None);
        let r = check_lemma_noncare_cont(&flat, &linalg::zeros(1), 0.3, 0.2).unwrap();
        assert_abs_diff_eq!(r[(0, 0)], 0.0, epsilon = 1e-14);
        assert!(check_lemma_noncare_cont(&g, &scalar(1.0), 2.5, 1.0).is_err());
    }

    #[test]
    fn noncare_cont_matches_univariate_form() {
        let dt = 1e-3;
        let g = ou_gamma(dt, 3.0);
        let gamma = |s: f64| (-s.abs()).exp() / 2.0;
        for (t, delta) in [(0.0, 1.0), (0.7, 0.4)] {
            let full = check_lemma_noncare_cont(&g, &scalar(1.3), t, delta).unwrap()[(0, 0)];
            let h = univariate_h_continuous(gamma, full, t, delta, dt).unwrap();
            assert!((h - 1.3).abs() < 1e-9, "{h}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn recover_h_inverts_theta_map(
            l1 in 1e-5f64..10.0, l2 in 1e-5f64..10.0, angle in 0.0f64..std::f64::consts::PI,
        ) {
            let (c, s) = (angle.cos(), angle.sin());
            let q = Mat::from_row_slice(2, 2, &[c, -s, s, c]);
            let h = &q * Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![l1, l2])) * q.transpose();
            let h = linalg::symmetric_part(&h);
            let theta = linalg::identity(2) - linalg::expm_sym(&(-&h)).unwrap();
            let r = recover_h(&theta).unwrap();
            // at λ = 10 the spectrum of I − Θ is e^{−10} ≈ 4.5e−5, inside the window
            prop_assert!(!r.clamped);
            prop_assert!((r.h - h).amax() < 1e-8);
        }

        #[test]
        fn gate_soundness(seed in 0u64..1000, t_len in 30usize..400) {
            let spec = reference();
            let path = simulate_var1(&spec, t_len, 0, seed).unwrap();
            let e = estimate_theta_discrete(&path, &noise_variance_v(&spec, 3.0).unwrap(), 3).unwrap();
            if e.gate_passed {
                prop_assert!(linalg::definiteness_default(&e.estimate).is_psd);
                let d_norm = linalg::spectral_norm(
                    &build_coeffs_discrete(&sample_autocov(&path, 3, true).unwrap(), &noise_variance_v(&spec, 3.0).unwrap(), 3).unwrap().d,
                );
                prop_assert!(e.residual_norm <= 1e-8 * d_norm.max(1.0));
            } else {
                prop_assert_eq!(e.estimate, linalg::zeros(2));
            }
        }
    }
}
