//! The linear map from stacked autocovariance errors to coefficient errors,
//! and Monte Carlo sampling of the limiting law of `l(T)·vec(Θ̂_T − Θ)`.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::autocov::{max_deviation, sample_autocov, AutocovSeq};
use crate::error::{Error, Result};
use crate::estimation::estimate_from_autocov_discrete;
use crate::linalg::{self, Mat};
use crate::models::{noise_variance_v, simulate, stream_rng, theoretical_gamma, ModelSpec};
use crate::riccati::{build_coeffs_continuous, build_coeffs_discrete, trapezoid_weights, CareCoefficients};

pub use crate::linalg::transpose_permutation;

/// `vec(γ̂(0) − γ(0)) ‖ … ‖ vec(γ̂(t) − γ(t))`, column-major vec.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedCovError {
    pub z: DVector<f64>,
    pub n: usize,
    pub t: usize,
}

impl StackedCovError {
    pub fn new(z: DVector<f64>, n: usize, t: usize) -> Result<Self> {
        if z.len() != (t + 1) * n * n {
            return Err(Error::invalid(format!(
                "stacked error has length {}, expected (t+1)n² = {}",
                z.len(),
                (t + 1) * n * n
            )));
        }
        Ok(Self { z, n, t })
    }

    /// Stack the first `t + 1` lag errors of `est − truth`.
    pub fn from_autocov(truth: &AutocovSeq, est: &AutocovSeq, t: usize) -> Result<Self> {
        let n = truth.dim();
        if est.dim() != n || truth.max_index() < t || est.max_index() < t {
            return Err(Error::invalid(format!("both sequences must cover lags 0..={t} in dimension {n}")));
        }
        let nn = n * n;
        let mut z = DVector::zeros((t + 1) * nn);
        for k in 0..=t {
            let diff = &est.gammas[k] - &truth.gammas[k];
            z.rows_mut(k * nn, nn).copy_from(&linalg::vec(&diff));
        }
        Ok(Self { z, n, t })
    }

    pub fn block(&self, k: usize) -> Mat {
        let nn = self.n * self.n;
        linalg::unvec(self.z.rows(k * nn, nn).as_slice(), self.n)
    }

    /// `Z̃`: each block transposed.
    pub fn permuted(&self) -> Self {
        let nn = self.n * self.n;
        let p = transpose_permutation(self.n);
        let mut z = self.z.clone();
        for k in 0..=self.t {
            let b = &p * self.z.rows(k * nn, nn);
            z.rows_mut(k * nn, nn).copy_from(&b);
        }
        Self { z, ..*self }
    }
}

/// `3n² × (m+1)n²` matrix with row blocks `vec ΔC`, `vec ΔB`, `vec ΔD`.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Operator {
    pub matrix: Mat,
    pub n: usize,
    /// Number of lag blocks minus one.
    pub lags: usize,
    pub horizon_t: f64,
}

impl L1Operator {
    pub fn apply(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.matrix.ncols() {
            return Err(Error::invalid(format!(
                "operator takes vectors of length {}, got {}",
                self.matrix.ncols(),
                z.len()
            )));
        }
        Ok(&self.matrix * z)
    }

    /// Split an output vector into `(ΔC, ΔB, ΔD)`.
    pub fn split(&self, out: &DVector<f64>) -> (Mat, Mat, Mat) {
        let nn = self.n * self.n;
        let part = |i: usize| linalg::unvec(out.rows(i * nn, nn).as_slice(), self.n);
        (part(0), part(1), part(2))
    }
}

/// Column block `k` gets `a·I + b·P`, i.e. `a·Z_k + b·Z̃_k`.
fn add_block(m: &mut Mat, row_block: usize, k: usize, a: f64, b: f64, p: &Mat) {
    let nn = p.nrows();
    let mut view = m.view_mut((row_block * nn, k * nn), (nn, nn));
    view += p * b;
    for i in 0..nn {
        view[(i, i)] += a;
    }
}

/// Discrete-time operator at integer horizon `t ≥ 1`:
///
/// * ΔC block `Σ_{k=0}^{t−1}(t−k)Z_k + Σ_{k=1}^{t−1}(t−k)Z̃_k`
/// * ΔB block `Σ_{k=1}^t Z_{k−1} − Z̃_k`
/// * ΔD block `Z_t + Z̃_t − 2Z_0`
pub fn build_l1(n: usize, t: usize) -> Result<L1Operator> {
    if n == 0 || t == 0 {
        return Err(Error::invalid("build_l1 needs n ≥ 1 and t ≥ 1"));
    }
    let nn = n * n;
    let p = transpose_permutation(n);
    let mut m = Mat::zeros(3 * nn, (t + 1) * nn);
    for k in 0..t {
        let w = (t - k) as f64;
        add_block(&mut m, 0, k, w, if k >= 1 { w } else { 0.0 }, &p);
    }
    for k in 1..=t {
        add_block(&mut m, 1, k - 1, 1.0, 0.0, &p);
        add_block(&mut m, 1, k, 0.0, -1.0, &p);
    }
    add_block(&mut m, 2, t, 1.0, 1.0, &p);
    add_block(&mut m, 2, 0, -2.0, 0.0, &p);
    Ok(L1Operator { matrix: m, n, lags: t, horizon_t: t as f64 })
}

/// Continuous-time operator on the grid `0, dt, …, m·dt`, using the same
/// trapezoid weights as the continuous coefficient builder:
/// `∫₀ᵗ(t−s)(Y_s + Ỹ_s)ds`, `∫₀ᵗ(Y_s − Ỹ_s)ds`, `Y_t + Ỹ_t − 2Y_0`.
pub fn build_l1_continuous(n: usize, m: usize, dt: f64) -> Result<L1Operator> {
    if n == 0 || m == 0 || !(dt > 0.0) {
        return Err(Error::invalid("build_l1_continuous needs n ≥ 1, m ≥ 1 and dt > 0"));
    }
    let nn = n * n;
    let p = transpose_permutation(n);
    let (w, lag_w) = trapezoid_weights(m, dt);
    let mut mat = Mat::zeros(3 * nn, (m + 1) * nn);
    add_block(&mut mat, 0, 0, lag_w[0], 0.0, &p);
    for (l, &lw) in lag_w.iter().enumerate().skip(1) {
        add_block(&mut mat, 0, l, lw, lw, &p);
    }
    for (l, wl) in w.iter().enumerate() {
        add_block(&mut mat, 1, l, *wl, -*wl, &p);
    }
    add_block(&mut mat, 2, m, 1.0, 1.0, &p);
    add_block(&mut mat, 2, 0, -2.0, 0.0, &p);
    Ok(L1Operator { matrix: mat, n, lags: m, horizon_t: m as f64 * dt })
}

fn stack_deltas(est: &CareCoefficients, truth: &CareCoefficients) -> DVector<f64> {
    let nn = truth.dim() * truth.dim();
    let mut out = DVector::zeros(3 * nn);
    out.rows_mut(0, nn).copy_from(&linalg::vec(&(&est.c - &truth.c)));
    out.rows_mut(nn, nn).copy_from(&linalg::vec(&(&est.b - &truth.b)));
    out.rows_mut(2 * nn, nn).copy_from(&linalg::vec(&(&est.d - &truth.d)));
    out
}

/// `max |vec(ΔC, ΔB, ΔD) − L₁ z|` with the left side computed from the
/// coefficient builders. `v(t)` cancels in the difference and is set to zero.
pub fn verify_l1_identity(truth: &AutocovSeq, est: &AutocovSeq, t: usize) -> Result<f64> {
    let n = truth.dim();
    let v = linalg::zeros(n);
    let direct = stack_deltas(&build_coeffs_discrete(est, &v, t)?, &build_coeffs_discrete(truth, &v, t)?);
    let z = StackedCovError::from_autocov(truth, est, t)?;
    let via = build_l1(n, t)?.apply(&z.z)?;
    Ok((direct - via).amax())
}

/// Continuous analogue of [`verify_l1_identity`] at horizon `t` on the
/// shared lag grid.
pub fn verify_l1_identity_continuous(truth: &AutocovSeq, est: &AutocovSeq, t: f64) -> Result<f64> {
    let n = truth.dim();
    let v = linalg::zeros(n);
    let dt = truth.step();
    if (est.step() - dt).abs() > 1e-12 * dt {
        return Err(Error::invalid("lag grids differ"));
    }
    let m = truth.index_of(t)? as usize;
    let direct = stack_deltas(&build_coeffs_continuous(est, &v, t)?, &build_coeffs_continuous(truth, &v, t)?);
    let z = StackedCovError::from_autocov(truth, est, m)?;
    let via = build_l1_continuous(n, m, dt)?.apply(&z.z)?;
    Ok((direct - via).amax())
}

/// Coefficient errors against the deviation statistic `M_{t,T}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsCheck {
    pub m: f64,
    pub delta_b: f64,
    pub delta_c: f64,
    pub delta_d: f64,
    pub t: usize,
}

impl BoundsCheck {
    /// `‖ΔD‖ ≤ 4M`, `‖ΔC‖ ≤ t²M`, `‖ΔB‖ ≤ 2tM`, each with a relative
    /// rounding allowance.
    pub fn holds(&self) -> bool {
        let t = self.t as f64;
        let slack = |bound: f64| bound * (1.0 + 1e-12) + 1e-14;
        self.delta_d <= slack(4.0 * self.m)
            && self.delta_c <= slack(t * t * self.m)
            && self.delta_b <= slack(2.0 * t * self.m)
    }
}

pub fn coefficient_bounds(truth: &AutocovSeq, est: &AutocovSeq, t: usize) -> Result<BoundsCheck> {
    let n = truth.dim();
    let v = linalg::zeros(n);
    let kt = build_coeffs_discrete(truth, &v, t)?;
    let ke = build_coeffs_discrete(est, &v, t)?;
    Ok(BoundsCheck {
        m: max_deviation(&est.truncated(t)?, &truth.truncated(t)?)?,
        delta_b: linalg::spectral_norm(&(&ke.b - &kt.b)),
        delta_c: linalg::spectral_norm(&(&ke.c - &kt.c)),
        delta_d: linalg::spectral_norm(&(&ke.d - &kt.d)),
        t,
    })
}

/// One Monte Carlo replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitDraw {
    pub rep: usize,
    pub seed: u64,
    pub gate_passed: bool,
    /// `l(T)·vec(Θ̂ − Θ)`.
    pub theta_err: Vec<f64>,
    /// `l(T)·z`.
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitSample {
    pub sample_size: usize,
    pub horizon_t: usize,
    pub rate_exponent: f64,
    pub draws: Vec<LimitDraw>,
    /// Componentwise mean of `theta_err` over all draws.
    pub mean: Vec<f64>,
    /// Covariance of `theta_err` (row-major, `n² × n²`, divisor reps − 1).
    pub covariance: Vec<Vec<f64>>,
    /// Pooled `R²` of `theta_err` regressed on `L₁(l(T)·z)` over gated draws.
    pub r_squared: Option<f64>,
    pub gate_failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOptions {
    pub sample_size: usize,
    pub horizon_t: usize,
    pub reps: usize,
    pub seed: u64,
    pub rate_exponent: f64,
}

/// Draws of `T^a·vec(Θ̂_T − Θ)` and `T^a·z` for a discrete model observed at
/// `T = sample_size` time points; rep `i`
/// uses stream `i` of `seed`, so results do not depend on thread count.
pub fn monte_carlo_limit(spec: &ModelSpec, opts: &LimitOptions) -> Result<LimitSample> {
    if !spec.kind.is_discrete() {
        return Err(Error::invalid("monte_carlo_limit needs a discrete model"));
    }
    if opts.reps < 2 {
        return Err(Error::invalid("monte_carlo_limit needs at least 2 reps"));
    }
    if opts.sample_size < opts.horizon_t + 2 {
        return Err(Error::invalid("sample size must exceed the horizon by at least 2"));
    }
    spec.validate()?;
    let t = opts.horizon_t;
    let truth = theoretical_gamma(spec, t)?;
    let theta = spec.theta()?;
    let v_t = noise_variance_v(spec, t as f64)?;
    let l1 = build_l1(spec.dim(), t)?;

    let draws = (0..opts.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(opts.seed, rep as u64);
            let path = simulate(spec, (opts.sample_size - 1) as f64, 1.0, 0, &mut rng)?;
            let scale = (path.len() as f64).powf(opts.rate_exponent);
            let est = sample_autocov(&path, t, true)?;
            let result = estimate_from_autocov_discrete(&est, &v_t, t)?;
            let z = StackedCovError::from_autocov(&truth, &est, t)?;
            Ok(LimitDraw {
                rep,
                seed: opts.seed,
                gate_passed: result.gate_passed,
                theta_err: linalg::vec(&((&result.estimate - &theta) * scale)).iter().copied().collect(),
                z: (z.z * scale).iter().copied().collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (mean, covariance) = mean_and_cov(draws.iter().map(|d| d.theta_err.as_slice()));
    let gated: Vec<&LimitDraw> = draws.iter().filter(|d| d.gate_passed).collect();
    let r_squared = linearity_r_squared(&l1, &gated);
    Ok(LimitSample {
        sample_size: opts.sample_size,
        horizon_t: t,
        rate_exponent: opts.rate_exponent,
        gate_failures: draws.len() - gated.len(),
        draws,
        mean,
        covariance,
        r_squared,
    })
}

fn mean_and_cov<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone) -> (Vec<f64>, Vec<Vec<f64>>) {
    let count = rows.clone().count();
    let dim = rows.clone().next().map_or(0, <[f64]>::len);
    let mut mean = vec![0.0; dim];
    for r in rows.clone() {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / count as f64;
        }
    }
    let mut cov = vec![vec![0.0; dim]; dim];
    if count > 1 {
        for r in rows {
            for i in 0..dim {
                for j in 0..dim {
                    cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / (count - 1) as f64;
                }
            }
        }
    }
    (mean, cov)
}

/// Least squares with intercept of each `theta_err` component on the
/// features `L₁(z)`, pooled as `1 − Σ SS_res / Σ SS_tot`.
fn linearity_r_squared(l1: &L1Operator, draws: &[&LimitDraw]) -> Option<f64> {
    let reps = draws.len();
    let p = l1.matrix.nrows();
    if reps <= p + 1 {
        return None;
    }
    let mut x = Mat::zeros(reps, p + 1);
    for (i, d) in draws.iter().enumerate() {
        let feat = &l1.matrix * DVector::from_column_slice(&d.z);
        x[(i, 0)] = 1.0;
        x.view_mut((i, 1), (1, p)).copy_from(&feat.transpose());
    }
    let svd = x.clone().svd(true, true);
    let k = draws[0].theta_err.len();
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for c in 0..k {
        let y = DVector::from_iterator(reps, draws.iter().map(|d| d.theta_err[c]));
        let beta = svd.solve(&y, 1e-10).ok()?;
        let fitted = &x * beta;
        let ybar = y.mean();
        ss_res += (&y - fitted).norm_squared();
        ss_tot += y.iter().map(|v| (v - ybar).powi(2)).sum::<f64>();
    }
    if ss_tot == 0.0 {
        return None;
    }
    Some(1.0 - ss_res / ss_tot)
}

/// CSV with one row per rep: `rep,seed,theta_err_1..,z_1..`.
pub fn write_limit_csv<W: Write>(sample: &LimitSample, mut w: W) -> Result<()> {
    let (k, zl) = sample.draws.first().map_or((0, 0), |d| (d.theta_err.len(), d.z.len()));
    let mut header = vec!["rep".to_string(), "seed".to_string()];
    header.extend((1..=k).map(|i| format!("theta_err_{i}")));
    header.extend((1..=zl).map(|i| format!("z_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for d in &sample.draws {
        let mut row = vec![d.rep.to_string(), d.seed.to_string()];
        row.extend(d.theta_err.iter().chain(&d.z).map(|v| format!("{v:.16e}")));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autocov::Provenance;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn reference() -> ModelSpec {
        ModelSpec::var1(Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]), linalg::identity(2))
    }

    /// Perturbation with a symmetric lag-0 block, as every autocovariance
    /// estimate has.
    fn perturb(g: &AutocovSeq, rng: &mut impl Rng, scale: f64) -> AutocovSeq {
        let n = g.dim();
        let mut out = g.clone();
        for (k, m) in out.gammas.iter_mut().enumerate() {
            let e = Mat::from_fn(n, n, |_, _| rng.random_range(-scale..scale));
            *m += if k == 0 { linalg::symmetric_part(&e) } else { e };
        }
        out.provenance = Provenance::Sample;
        out
    }

    #[test]
    fn scalar_t1_map() {
        let l = build_l1(1, 1).unwrap();
        let out = l.apply(&DVector::from_vec(vec![0.3, 0.7])).unwrap();
        assert_abs_diff_eq!(out[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 0.3 - 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(out[2], 2.0 * 0.7 - 2.0 * 0.3, epsilon = 1e-15);
    }

    #[test]
    fn scalar_t3_lag0_only() {
        let l = build_l1(1, 3).unwrap();
        let eps = 0.01;
        let out = l.apply(&DVector::from_vec(vec![eps, 0.0, 0.0, 0.0])).unwrap();
        assert_abs_diff_eq!(out[0], 3.0 * eps, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], eps, epsilon = 1e-15);
        assert_abs_diff_eq!(out[2], -2.0 * eps, epsilon = 1e-15);
        let zero = l.apply(&DVector::zeros(4)).unwrap();
        assert_eq!(zero.amax(), 0.0);
        assert!(l.apply(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn t1_uses_only_lag0_for_c() {
        let l = build_l1(2, 1).unwrap();
        let c_rows = l.matrix.view((0, 4), (4, 4));
        assert_eq!(c_rows.amax(), 0.0);
    }

    #[test]
    fn identity_on_equal_sequences() {
        let g = theoretical_gamma(&reference(), 4).unwrap();
        assert_eq!(verify_l1_identity(&g, &g, 3).unwrap(), 0.0);
    }

    #[test]
    fn identity_single_lag_perturbation() {
        let g = theoretical_gamma(&reference(), 4).unwrap();
        let mut est = g.clone();
        est.gammas[2][(0, 1)] += 0.25;
        assert!(verify_l1_identity(&g, &est, 3).unwrap() <= 1e-12);
        assert!(verify_l1_identity(&g, &est, 5).is_err());
    }

    #[test]
    fn continuous_constant_example() {
        let m = 100;
        let l = build_l1_continuous(1, m, 1.0 / m as f64).unwrap();
        let out = l.apply(&DVector::from_element(m + 1, 1.0)).unwrap();
        assert_abs_diff_eq!(out[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn continuous_identity_on_perturbed_ou() {
        let dt = 1e-2;
        let g = AutocovSeq::uniform(
            (0..=100).map(|k| Mat::from_element(1, 1, (-(k as f64) * dt).exp() / 2.0)).collect(),
            dt,
            Provenance::Theoretical,
            None,
        );
        let est = perturb(&g, &mut stream_rng(3, 0), 1e-2);
        assert!(verify_l1_identity_continuous(&g, &est, 1.0).unwrap() <= 1e-6);
        let spec2 = reference();
        let g2 = theoretical_gamma(&spec2, 30).unwrap();
        let g2 = AutocovSeq::uniform(g2.gammas, 0.1, Provenance::Theoretical, None);
        let est2 = perturb(&g2, &mut stream_rng(4, 0), 1e-2);
        assert!(verify_l1_identity_continuous(&g2, &est2, 2.0).unwrap() <= 1e-12);
    }

    #[test]
    fn bounds_hold_on_perturbations() {
        let g = theoretical_gamma(&reference(), 6).unwrap();
        let mut rng = stream_rng(9, 0);
        for t in 1..=6 {
            let est = perturb(&g, &mut rng, 0.1);
            let b = coefficient_bounds(&g, &est, t).unwrap();
            assert!(b.holds(), "{b:?}");
        }
    }

    #[test]
    fn stacked_blocks_and_permutation() {
        let g = theoretical_gamma(&reference(), 2).unwrap();
        let est = perturb(&g, &mut stream_rng(1, 0), 0.5);
        let z = StackedCovError::from_autocov(&g, &est, 2).unwrap();
        assert_eq!(z.z.len(), 12);
        let zt = z.permuted();
        for k in 0..=2 {
            assert_eq!(zt.block(k), z.block(k).transpose());
            assert!((z.block(k) - (&est.gammas[k] - &g.gammas[k])).amax() < 1e-15);
        }
        assert!(StackedCovError::new(DVector::zeros(5), 2, 1).is_err());
    }

    #[test]
    fn zero_noise_limit_draws() {
        let spec = ModelSpec::var1(Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]), linalg::zeros(2));
        let opts = LimitOptions { sample_size: 200, horizon_t: 3, reps: 50, seed: 1, rate_exponent: 0.5 };
        let s = monte_carlo_limit(&spec, &opts).unwrap();
        assert!(s.draws.iter().all(|d| d.z.iter().all(|v| *v == 0.0)));
        assert_eq!(s.gate_failures, 50);
        assert!(s.draws.iter().all(|d| d.theta_err == s.draws[0].theta_err));
        assert!(s.r_squared.is_none());
    }

    #[test]
    fn limit_sample_is_reproducible_and_linear() {
        let opts = LimitOptions { sample_size: 4000, horizon_t: 3, reps: 60, seed: 5, rate_exponent: 0.5 };
        let a = monte_carlo_limit(&reference(), &opts).unwrap();
        let b = monte_carlo_limit(&reference(), &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.r_squared.unwrap() > 0.8);
        let mut buf = Vec::new();
        write_limit_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("rep,seed,theta_err_1"));
        assert_eq!(lines.count(), 60);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn l1_identity_is_exact(seed in 0u64..10_000, n in 1usize..=3, t in 1usize..=5) {
            let mut rng = stream_rng(seed, 0);
            let g = AutocovSeq::integer_lags(
                (0..=t).map(|k| {
                    let m = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                    if k == 0 { linalg::symmetric_part(&m) } else { m }
                }).collect(),
                Provenance::Theoretical,
                None,
            );
            let est = perturb(&g, &mut rng, 1.0);
            prop_assert!(verify_l1_identity(&g, &est, t).unwrap() <= 1e-12);
        }

        #[test]
        fn permutation_is_an_involution(n in 1usize..=5) {
            let p = transpose_permutation(n);
            prop_assert_eq!(&p * &p, linalg::identity(n * n));
        }
    }
}
