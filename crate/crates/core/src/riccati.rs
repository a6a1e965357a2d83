//! Covariance-based CARE coefficients and the symmetric CARE solver
//! `BᵀX + XB − XCX + D = 0`.

use serde::{Deserialize, Serialize};

use crate::autocov::AutocovSeq;
use crate::error::{Error, Result};
use crate::linalg::{self, rowmajor, DefinitenessReport, Mat};

/// Eigenvalues of the Hamiltonian closer than this to the imaginary axis
/// mean no stabilizing solution can be separated.
pub const IMAG_AXIS_TOL: f64 = 1e-10;
/// Newton refinement target, relative to `max(1, ‖D‖)`.
pub const REFINE_TOL: f64 = 1e-10;
/// Residual accepted for a returned solution, relative to `max(1, ‖D‖)`.
pub const ACCEPT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffProvenance {
    Discrete,
    Continuous,
}

/// `(B, C, D)` at horizon `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CoeffsWire", try_from = "CoeffsWire")]
pub struct CareCoefficients {
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub horizon_t: f64,
    pub provenance: CoeffProvenance,
    pub pd_report_c: DefinitenessReport,
    pub pd_report_d: DefinitenessReport,
}

impl CareCoefficients {
    /// Assemble coefficients, symmetrizing `D` and computing the PD reports.
    pub fn new(b: Mat, c: Mat, d: Mat, horizon_t: f64, provenance: CoeffProvenance) -> Result<Self> {
        let n = b.nrows();
        for (name, m) in [("b", &b), ("c", &c), ("d", &d)] {
            if m.shape() != (n, n) {
                return Err(Error::invalid(format!("coefficient {name} is not {n}x{n}")));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("coefficient {name} has non-finite entries")));
            }
        }
        let d = linalg::symmetric_part(&d);
        let pd_report_c = linalg::definiteness_default(&c);
        let pd_report_d = linalg::definiteness_default(&d);
        Ok(Self { b, c, d, horizon_t, provenance, pd_report_c, pd_report_d })
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// Both `C` and `D` positive definite.
    pub fn gates_pass(&self) -> bool {
        self.pd_report_c.is_pd && self.pd_report_d.is_pd
    }
}

#[derive(Serialize, Deserialize)]
struct CoeffsWire {
    #[serde(with = "rowmajor")]
    b: Mat,
    #[serde(with = "rowmajor")]
    c: Mat,
    #[serde(with = "rowmajor")]
    d: Mat,
    t: f64,
    provenance: CoeffProvenance,
}

impl From<CareCoefficients> for CoeffsWire {
    fn from(c: CareCoefficients) -> Self {
        Self { b: c.b, c: c.c, d: c.d, t: c.horizon_t, provenance: c.provenance }
    }
}

impl TryFrom<CoeffsWire> for CareCoefficients {
    type Error = Error;

    fn try_from(w: CoeffsWire) -> Result<Self> {
        CareCoefficients::new(w.b, w.c, w.d, w.t, w.provenance)
    }
}

fn check_v(v_t: &Mat, n: usize) -> Result<()> {
    if v_t.shape() != (n, n) {
        return Err(Error::invalid(format!("v(t) must be {n}x{n}")));
    }
    Ok(())
}

/// Discrete-time coefficients at integer horizon `t ≥ 1`:
///
/// * `B = Σ_{k=1}^t γ(k−1) − γ(k)ᵀ`
/// * `C = Σ_{l=0}^{t−1} (t−l)γ(l) + Σ_{l=1}^{t−1} (t−l)γ(l)ᵀ`
/// * `D = v(t) − 2γ(0) + γ(t) + γ(t)ᵀ`
pub fn build_coeffs_discrete(gammas: &AutocovSeq, v_t: &Mat, t: usize) -> Result<CareCoefficients> {
    if t == 0 {
        return Err(Error::invalid("horizon t must be at least 1"));
    }
    if gammas.max_index() < t {
        return Err(Error::invalid(format!("autocovariances cover lags 0..={}, need 0..={t}", gammas.max_index())));
    }
    let n = gammas.dim();
    check_v(v_t, n)?;
    let g = &gammas.gammas;
    let mut b = linalg::zeros(n);
    for k in 1..=t {
        b += &g[k - 1] - g[k].transpose();
    }
    let mut c = &g[0] * t as f64;
    for (l, gl) in g.iter().enumerate().take(t).skip(1) {
        let w = (t - l) as f64;
        c += (gl + gl.transpose()) * w;
    }
    let d = v_t - &g[0] * 2.0 + &g[t] + g[t].transpose();
    CareCoefficients::new(b, c, d, t as f64, CoeffProvenance::Discrete)
}

/// Composite trapezoid weights on `m + 1` grid points spaced `dt`, and the
/// lag weights of the two-dimensional trapezoid rule:
/// `Σ_{i,j} w_i w_j f(i − j) = Σ_l lag_w[|l|] f(l)` (lag `l ≥ 1` counted once
/// per sign).
pub fn trapezoid_weights(m: usize, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let w: Vec<f64> = (0..=m).map(|i| if i == 0 || i == m { 0.5 * dt } else { dt }).collect();
    let lag_w = (0..=m).map(|l| (0..=m - l).map(|j| w[j + l] * w[j]).sum()).collect();
    (w, lag_w)
}

/// Continuous-time coefficients at horizon `t` (a multiple of the lag step),
/// by the composite trapezoid rule on the autocovariance grid:
///
/// * `B = ∫₀ᵗ γ(s) − γ(s)ᵀ ds`
/// * `C = ∫₀ᵗ∫₀ᵗ γ(s − u) du ds`
/// * `D = v(t) − 2γ(0) + γ(t) + γ(t)ᵀ`
pub fn build_coeffs_continuous(gammas: &AutocovSeq, v_t: &Mat, t: f64) -> Result<CareCoefficients> {
    let dt = gammas.step();
    let m =
        gammas.index_of(t).map_err(|_| Error::invalid(format!("horizon {t} is not on the lag grid (step {dt})")))?;
    if m < 1 {
        return Err(Error::invalid("horizon t must be at least one grid step"));
    }
    let m = m as usize;
    if gammas.max_index() < m {
        return Err(Error::invalid(format!("autocovariances stop before horizon {t}")));
    }
    let n = gammas.dim();
    check_v(v_t, n)?;
    let g = &gammas.gammas;
    let (w, lag_w) = trapezoid_weights(m, dt);
    let mut b = linalg::zeros(n);
    let mut c = &g[0] * lag_w[0];
    for l in 0..=m {
        b += (&g[l] - g[l].transpose()) * w[l];
        if l > 0 {
            c += (&g[l] + g[l].transpose()) * lag_w[l];
        }
    }
    let d = v_t - &g[0] * 2.0 + &g[m] + g[m].transpose();
    CareCoefficients::new(b, c, d, t, CoeffProvenance::Continuous)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Stable invariant subspace of the Hamiltonian (matrix sign function),
    /// refined by Newton.
    InvariantSubspace,
    /// Newton–Kleinman from a caller-supplied stabilizing start.
    Newton,
    /// Closed-form positive root for `n = 1`.
    ScalarQuadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CareSolution {
    #[serde(with = "rowmajor")]
    pub x: Mat,
    pub residual_norm: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

/// `‖BᵀX + XB − XCX + D‖₂`.
pub fn care_residual(coeffs: &CareCoefficients, x: &Mat) -> f64 {
    linalg::spectral_norm(&care_lhs(coeffs, x))
}

fn care_lhs(k: &CareCoefficients, x: &Mat) -> Mat {
    k.b.transpose() * x + x * &k.b - x * &k.c * x + &k.d
}

fn scale(coeffs: &CareCoefficients) -> f64 {
    linalg::spectral_norm(&coeffs.d).max(1.0)
}

/// Solve for the positive semidefinite solution.
pub fn solve_care(coeffs: &CareCoefficients) -> Result<CareSolution> {
    let c = linalg::symmetrize_checked(&coeffs.c)?;
    linalg::symmetrize_checked(&coeffs.d)?;
    if coeffs.dim() == 1 {
        return solve_scalar(coeffs);
    }
    let x0 = sign_function_solution(&coeffs.b, &c, &coeffs.d)?;
    let sol = newton_refine(coeffs, &x0, 30)?;
    Ok(CareSolution { method: SolveMethod::InvariantSubspace, ..sol })
}

fn no_solution(residual: f64, reason: impl Into<String>) -> Error {
    Error::NoSolution { residual, reason: reason.into() }
}

/// `Cθ² − 2Bθ − D = 0`; the positive root when `C > 0`.
fn solve_scalar(coeffs: &CareCoefficients) -> Result<CareSolution> {
    let (b, c, d) = (coeffs.b[(0, 0)], coeffs.c[(0, 0)], coeffs.d[(0, 0)]);
    let root = if c != 0.0 {
        let mut disc = b * b + c * d;
        let scale = (b * b).max((c * d).abs()).max(f64::MIN_POSITIVE);
        if disc < 0.0 {
            if disc.abs() < 1e-12 * scale {
                disc = 0.0; // double root
            } else {
                return Err(no_solution(d.abs(), format!("negative discriminant {disc:e}")));
            }
        }
        let sq = disc.sqrt();
        let plus = if b >= 0.0 || (b - sq) == 0.0 { (b + sq) / c } else { -d / (b - sq) };
        let minus = if b <= 0.0 || (b + sq) == 0.0 { (b - sq) / c } else { -d / (b + sq) };
        if c > 0.0 {
            plus
        } else {
            plus.max(minus)
        }
    } else if b != 0.0 {
        -d / (2.0 * b)
    } else if d == 0.0 {
        0.0
    } else {
        return Err(no_solution(d.abs(), "C = B = 0 with D ≠ 0"));
    };
    let x = Mat::from_element(1, 1, root);
    let residual = care_residual(coeffs, &x);
    let tol = linalg::default_tolerance(&x);
    if root < -tol {
        return Err(no_solution(residual, format!("no nonnegative root (best {root:e})")));
    }
    let x = Mat::from_element(1, 1, root.max(0.0));
    Ok(CareSolution {
        residual_norm: care_residual(coeffs, &x),
        x,
        iterations: 0,
        method: SolveMethod::ScalarQuadratic,
    })
}

/// Stabilizing solution from the matrix sign of the Hamiltonian
/// `[[B, −C], [−D, −Bᵀ]]`: with `W = sign(Ham)`,
/// `[W₁₂; W₂₂ + I] X = −[W₁₁ + I; W₂₁]` (least squares).
fn sign_function_solution(b: &Mat, c: &Mat, d: &Mat) -> Result<Mat> {
    let n = b.nrows();
    let mut ham = Mat::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(b);
    ham.view_mut((0, n), (n, n)).copy_from(&(-c));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-d));
    ham.view_mut((n, n), (n, n)).copy_from(&(-b.transpose()));

    let eigs = ham.complex_eigenvalues();
    let closest = eigs.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    if closest < IMAG_AXIS_TOL {
        return Err(no_solution(
            f64::NAN,
            format!("Hamiltonian eigenvalue on the imaginary axis (|Re λ| = {closest:e})"),
        ));
    }

    let mut z = ham;
    let dim = (2 * n) as f64;
    let mut converged = false;
    for _ in 0..100 {
        let inv = z.clone().try_inverse().ok_or_else(|| no_solution(f64::NAN, "singular iterate in sign iteration"))?;
        let det = z.determinant().abs();
        let mu = if det.is_finite() && det > 0.0 { det.powf(-1.0 / dim) } else { 1.0 };
        let next = (&z * mu + inv / mu) * 0.5;
        let delta = (&next - &z).lp_norm(1);
        let size = next.lp_norm(1);
        z = next;
        if delta <= 1e-13 * size {
            converged = true;
            break;
        }
    }
    if !converged || z.iter().any(|v| !v.is_finite()) {
        return Err(no_solution(f64::NAN, "sign iteration did not converge"));
    }

    let eye = linalg::identity(n);
    let mut lhs = Mat::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(z.view((n, n), (n, n)) + &eye));
    let mut rhs = Mat::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(z.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-z.view((n, 0), (n, n))));
    let x = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| no_solution(f64::NAN, format!("subspace extraction failed: {e}")))?;
    Ok(linalg::symmetric_part(&x))
}

/// Newton–Kleinman iteration: with `A_k = B − CX_k`, solve
/// `A_kᵀX_{k+1} + X_{k+1}A_k = −(D + X_kCX_k)` until the residual reaches
/// `REFINE_TOL·max(1, ‖D‖)` or stops improving. The start must stabilize
/// `B − CX₀`.
pub fn newton_refine(coeffs: &CareCoefficients, x0: &Mat, max_iter: usize) -> Result<CareSolution> {
    let target = REFINE_TOL * scale(coeffs);
    let mut x = linalg::symmetric_part(x0);
    let mut res = care_residual(coeffs, &x);
    let mut iterations = 0;
    while res > target && iterations < max_iter {
        let a = &coeffs.b - &coeffs.c * &x;
        let q = &coeffs.d + &x * &coeffs.c * &x;
        let next = match linalg::solve_lyapunov(&a, &q) {
            Ok(m) => m,
            Err(_) => break,
        };
        let next_res = care_residual(coeffs, &next);
        iterations += 1;
        if !next_res.is_finite() {
            break;
        }
        // Newton is not monotone in the residual for the first step or two
        // from a rough start; only stop once it stalls near convergence.
        let stalled = next_res >= res && res < 1e-6 * scale(coeffs);
        if stalled {
            break;
        }
        x = next;
        res = next_res;
    }
    let accept = ACCEPT_TOL * scale(coeffs);
    if !(res <= accept) {
        return Err(no_solution(res, "Newton refinement did not reach the residual tolerance"));
    }
    let report = linalg::definiteness_default(&x);
    if !report.is_psd {
        return Err(no_solution(res, format!("solution is not PSD (min eigenvalue {:e})", report.min_eigenvalue)));
    }
    Ok(CareSolution { x, residual_norm: res, iterations, method: SolveMethod::Newton })
}

/// A stabilizing start `αI` for Newton with `C > 0`: α exceeds
/// `λ_max((B + Bᵀ)/2)/λ_min(C)`, making the symmetric part of `B − αC`
/// negative definite.
pub fn stabilizing_guess(coeffs: &CareCoefficients) -> Result<Mat> {
    let n = coeffs.dim();
    let c_min = linalg::sym_eig(&coeffs.c)?.min();
    if !(c_min > 0.0) {
        return Err(Error::invalid("stabilizing_guess needs C positive definite"));
    }
    let b_sym_max = linalg::sym_eig(&linalg::symmetric_part(&coeffs.b))?.max();
    let alpha = (b_sym_max.max(0.0) + 1.0) / c_min;
    Ok(linalg::identity(n) * alpha)
}
