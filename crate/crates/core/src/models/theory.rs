//! Closed-form second-order structure of the generating models.

use super::{Driver, ModelKind, ModelSpec};
use crate::autocov::{AutocovSeq, Provenance};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, SymEig};

pub(crate) fn gamma0_var1(phi: &Mat, sigma: &Mat) -> Result<Mat> {
    linalg::solve_stein(phi, sigma)
}

fn discrete_only(spec: &ModelSpec) -> Result<()> {
    spec.validate()?;
    if !spec.kind.is_discrete() {
        return Err(Error::InvalidModel("expected a discrete-time model".into()));
    }
    Ok(())
}

/// `γ(0) = Φγ(0)Φᵀ + Σ`, `γ(k) = Φᵏγ(0)` for `k = 0..=t_max`.
pub fn theoretical_gamma_var1(spec: &ModelSpec, t_max: usize) -> Result<AutocovSeq> {
    discrete_only(spec)?;
    if !spec.ma_coeffs.is_empty() {
        return Err(Error::InvalidModel("model has MA terms; use theoretical_gamma".into()));
    }
    let phi = &spec.phi_or_h;
    let mut g = gamma0_var1(phi, &spec.sigma)?;
    let mut gammas = Vec::with_capacity(t_max + 1);
    for _ in 0..=t_max {
        gammas.push(g.clone());
        g = phi * g;
    }
    Ok(AutocovSeq::integer_lags(gammas, Provenance::Theoretical, None))
}

/// Autocovariances of VAR(1) and VARMA(1,q) models.
///
/// With `X_t = Σ_j Ψ_j ε_{t−j}`, `Ψ_j = Σ_{i≤min(j,q)} Φ^{j−i}θ_i` and
/// `Ψ_{q+m} = Φ^m Ψ_q`, the tail beyond lag `q` collapses to `Φᵏ S` where
/// `S = ΦAΦ + ΦSΦ`, `A = Ψ_qΣΨ_qᵀ`.
pub fn theoretical_gamma(spec: &ModelSpec, t_max: usize) -> Result<AutocovSeq> {
    discrete_only(spec)?;
    if spec.ma_coeffs.is_empty() {
        return theoretical_gamma_var1(spec, t_max);
    }
    let n = spec.dim();
    let q = spec.ma_coeffs.len();
    let phi = &spec.phi_or_h;
    let thetas: Vec<Mat> = std::iter::once(linalg::identity(n)).chain(spec.ma_coeffs.iter().cloned()).collect();

    let psi_len = q + t_max + 1;
    let mut psi: Vec<Mat> = Vec::with_capacity(psi_len);
    for j in 0..psi_len {
        if j <= q {
            let mut acc = linalg::zeros(n);
            for (i, theta) in thetas.iter().enumerate().take(j + 1) {
                acc += linalg::mat_pow(phi, (j - i) as u32) * theta;
            }
            psi.push(acc);
        } else {
            let next = phi * &psi[j - 1];
            psi.push(next);
        }
    }
    let a = &psi[q] * &spec.sigma * psi[q].transpose();
    let tail = linalg::solve_stein(phi, &(phi * &a * phi.transpose()))?;

    let gammas = (0..=t_max)
        .map(|k| {
            let mut g = linalg::mat_pow(phi, k as u32) * &tail;
            for j in 0..=q {
                g += &psi[j + k] * &spec.sigma * psi[j].transpose();
            }
            g
        })
        .collect();
    Ok(AutocovSeq::integer_lags(gammas, Provenance::Theoretical, None))
}

/// Autocovariance `r(k) = E ΔG_k ΔG_0ᵀ` of the noise increments of a
/// discrete model: `Σ_i θ_{i+k} Σ θ_iᵀ` (θ₀ = I), with `r(−k) = r(k)ᵀ`.
pub fn ma_increment_autocov(spec: &ModelSpec, k: i64) -> Mat {
    let n = spec.dim();
    let theta = |i: usize| -> Mat {
        if i == 0 {
            linalg::identity(n)
        } else {
            spec.ma_coeffs[i - 1].clone()
        }
    };
    let q = spec.ma_coeffs.len();
    let lag = k.unsigned_abs() as usize;
    let mut r = linalg::zeros(n);
    if lag <= q {
        for i in 0..=(q - lag) {
            r += theta(i + lag) * &spec.sigma * theta(i).transpose();
        }
    }
    if k < 0 {
        r.transpose()
    } else {
        r
    }
}

/// Exact step covariance `∫₀^dt e^{−Hs} Σ e^{−Hs} ds` and stationary
/// covariance `∫₀^∞ …`, both evaluated entrywise in the eigenbasis of H.
pub(crate) fn ou_step_and_stationary_cov(eig: &SymEig, sigma: &Mat, dt: f64) -> (Mat, Mat) {
    let n = eig.lambda.len();
    let s = eig.q.transpose() * sigma * &eig.q;
    let mut step = linalg::zeros(n);
    let mut stat = linalg::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let l = eig.lambda[i] + eig.lambda[j];
            step[(i, j)] = s[(i, j)] * (-(-l * dt).exp_m1()) / l;
            stat[(i, j)] = s[(i, j)] / l;
        }
    }
    let back = |m: Mat| linalg::symmetric_part(&(&eig.q * m * eig.q.transpose()));
    (back(step), back(stat))
}

/// Stationary OU autocovariance `γ(s) = e^{−Hs}γ(0)` on the grid
/// `s = k·dt ≤ max_lag_time` (Brownian driver only).
pub fn theoretical_gamma_ou(spec: &ModelSpec, dt: f64, max_lag_time: f64) -> Result<AutocovSeq> {
    spec.validate()?;
    if spec.kind != ModelKind::OuCont || spec.driver != Driver::Bm {
        return Err(Error::InvalidModel("closed-form γ is available for Brownian-driven OU only".into()));
    }
    if !(dt > 0.0) || max_lag_time < 0.0 {
        return Err(Error::invalid("bad lag grid"));
    }
    let eig = linalg::sym_eig(&spec.phi_or_h)?;
    let (_, g0) = ou_step_and_stationary_cov(&eig, &spec.sigma, dt);
    let m = (max_lag_time / dt + 1e-9).floor() as usize;
    let gammas = (0..=m).map(|k| eig.map(|l| (-l * k as f64 * dt).exp()) * &g0).collect();
    Ok(AutocovSeq::uniform(gammas, dt, Provenance::Theoretical, None))
}

/// Covariance `v(t) = E G_t G_tᵀ` of the cumulative noise.
///
/// VAR1 and Brownian OU: `tΣ`; VARMA(1,q): `Σ_{i,j} max(0, t−|i−j|) θ_iΣθ_jᵀ`;
/// fractional OU: `t^{2·hurst}Σ`. Discrete kinds require integer `t`.
pub fn noise_variance_v(spec: &ModelSpec, t: f64) -> Result<Mat> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("t must be nonnegative, got {t}")));
    }
    let n = spec.dim();
    match spec.kind {
        ModelKind::Var1 | ModelKind::Varma1q => {
            if t.fract() != 0.0 {
                return Err(Error::invalid(format!("discrete models need integer t, got {t}")));
            }
            let thetas: Vec<Mat> = std::iter::once(linalg::identity(n)).chain(spec.ma_coeffs.iter().cloned()).collect();
            let mut v = linalg::zeros(n);
            for (i, ti) in thetas.iter().enumerate() {
                for (j, tj) in thetas.iter().enumerate() {
                    let w = (t - i.abs_diff(j) as f64).max(0.0);
                    if w > 0.0 {
                        v += ti * &spec.sigma * tj.transpose() * w;
                    }
                }
            }
            Ok(v)
        }
        ModelKind::OuCont => match spec.driver {
            Driver::Fbm { hurst } => Ok(&spec.sigma * t.powf(2.0 * hurst)),
            _ => Ok(&spec.sigma * t),
        },
    }
}

/// Brute-force evaluation of
/// `γ(t) = e^{−tH} Σ_{k=t−M}^{t} Σ_{j=−M}^{0} e^{kH} r(k−j) e^{jH}`,
/// the doubly truncated series for the autocovariance in terms of the
/// noise-increment autocovariance `r`.
pub fn gamma_series_oracle(h: &Mat, r: impl Fn(i64) -> Mat, t: i64, m: usize) -> Result<Mat> {
    if m == 0 {
        return Err(Error::invalid("truncation M must be at least 1"));
    }
    let eig = linalg::sym_eig(h)?;
    let ekh = |k: i64| eig.map(|l| (l * k as f64).exp());
    let m = m as i64;
    let right: Vec<Mat> = (-m..=0).map(ekh).collect();
    let mut acc = linalg::zeros(h.nrows());
    for k in (t - m)..=t {
        let left = ekh(k);
        for (idx, j) in (-m..=0).enumerate() {
            let rk = r(k - j);
            if rk.iter().all(|x| *x == 0.0) {
                continue;
            }
            acc += &left * rk * &right[idx];
        }
    }
    Ok(ekh(-t) * acc)
}
