//! Seeded validation studies shared by the `validate` command and the test
//! suites. Each returns raw measurements; pass/fail thresholds live with the
//! callers.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::{coefficient_bounds, verify_l1_identity, BoundsCheck};
use crate::autocov::{sample_autocov, AutocovSeq, Provenance};
use crate::error::{Error, Result};
use crate::estimation::{estimate_from_autocov_discrete, estimate_h_continuous, EstimateResult};
use crate::linalg::{self, Mat};
use crate::models::{
    lamperti_forward, lamperti_inverse, noise_variance_v, reconstruct_from_noise, recover_noise, simulate,
    simulate_ou_with, simulate_var1_traced, stream_rng, theoretical_gamma, ModelSpec,
};
use crate::riccati::{
    build_coeffs_discrete, care_residual, newton_refine, solve_care, stabilizing_guess, CareCoefficients,
    CoeffProvenance,
};

/// `Φ = [[0.5, 0.1], [0.1, 0.4]]`, `Σ = I`.
pub fn reference_model() -> ModelSpec {
    ModelSpec::var1(Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]), linalg::identity(2))
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Stream index for rep `rep` of level `level`; levels get disjoint streams.
pub fn level_stream(level: usize, rep: usize) -> u64 {
    ((level as u64) << 32) | rep as u64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyLevel {
    pub sample_size: usize,
    /// `‖Θ̂ − Θ‖₂` per rep (the fallback estimate counts as is).
    pub errors: Vec<f64>,
    pub median_error: f64,
    pub gate_failures: usize,
    pub bounds: Vec<BoundsCheck>,
    pub bound_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyStudy {
    pub horizon_t: usize,
    pub levels: Vec<ConsistencyLevel>,
}

impl ConsistencyStudy {
    pub fn medians_strictly_decrease(&self) -> bool {
        self.levels.windows(2).all(|w| w[1].median_error < w[0].median_error)
    }

    /// `√T₂·med₂ / (√T₁·med₁)` for successive levels.
    pub fn scaled_ratios(&self) -> Vec<f64> {
        self.levels
            .windows(2)
            .map(|w| {
                let a = (w[0].sample_size as f64).sqrt() * w[0].median_error;
                let b = (w[1].sample_size as f64).sqrt() * w[1].median_error;
                b / a
            })
            .collect()
    }
}

/// Estimate `Θ` on `reps` simulated discrete paths of each length, and
/// compare the coefficient errors against `M_{t,T}`.
pub fn consistency_study(
    spec: &ModelSpec,
    sample_sizes: &[usize],
    horizon_t: usize,
    reps: usize,
    seed: u64,
) -> Result<ConsistencyStudy> {
    let truth = theoretical_gamma(spec, horizon_t)?;
    let theta = spec.theta()?;
    let v_t = noise_variance_v(spec, horizon_t as f64)?;
    let mut levels = Vec::new();
    for (level, &size) in sample_sizes.iter().enumerate() {
        if size < horizon_t + 2 {
            return Err(Error::invalid(format!("sample size {size} too small for horizon {horizon_t}")));
        }
        let rows = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream_rng(seed, level_stream(level, rep));
                let path = simulate(spec, (size - 1) as f64, 1.0, 0, &mut rng)?;
                let est = sample_autocov(&path, horizon_t, true)?;
                let res = estimate_from_autocov_discrete(&est, &v_t, horizon_t)?;
                let bounds = coefficient_bounds(&truth, &est, horizon_t)?;
                Ok((linalg::spectral_norm(&(&res.estimate - &theta)), res.gate_passed, bounds))
            })
            .collect::<Result<Vec<_>>>()?;
        let errors: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let bounds: Vec<BoundsCheck> = rows.iter().map(|r| r.2).collect();
        levels.push(ConsistencyLevel {
            sample_size: size,
            median_error: median(&errors),
            gate_failures: rows.iter().filter(|r| !r.1).count(),
            bound_violations: bounds.iter().filter(|b| !b.holds()).count(),
            errors,
            bounds,
        });
    }
    Ok(ConsistencyStudy { horizon_t, levels })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuStudy {
    pub estimates: Vec<f64>,
    pub abs_errors: Vec<f64>,
    pub median_abs_error: f64,
    pub gate_failures: usize,
}

/// Scalar OU: `Ĥ` from simulated paths on `[0, t_end]` sampled every `dt`.
pub fn ou_study(spec: &ModelSpec, t_end: f64, dt: f64, horizon_t: f64, reps: usize, seed: u64) -> Result<OuStudy> {
    if spec.dim() != 1 {
        return Err(Error::invalid("ou_study expects a scalar model"));
    }
    let h = spec.h()?[(0, 0)];
    let v_t = noise_variance_v(spec, horizon_t)?;
    let results = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let path = simulate_ou_with(spec, t_end, dt, &mut stream_rng(seed, rep as u64))?;
            estimate_h_continuous(&path, &v_t, horizon_t)
        })
        .collect::<Result<Vec<EstimateResult>>>()?;
    let estimates: Vec<f64> = results.iter().map(|r| r.estimate[(0, 0)]).collect();
    let abs_errors: Vec<f64> = estimates.iter().map(|e| (e - h).abs()).collect();
    Ok(OuStudy {
        median_abs_error: median(&abs_errors),
        gate_failures: results.iter().filter(|r| !r.gate_passed).count(),
        estimates,
        abs_errors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReconstructionLevel {
    pub truncation: usize,
    /// `max_t ‖X_t − X̂_t‖` over the reconstructed window.
    pub max_error: f64,
    /// `‖e^{−(M+1)H}‖·max_t ‖X_t‖`.
    pub bound: f64,
}

/// Recover the noise of a simulated discrete path with the true `Φ` and
/// reconstruct the path from truncated moving averages.
pub fn reconstruction_study(
    spec: &ModelSpec,
    t_len: usize,
    truncations: &[usize],
    seed: u64,
) -> Result<Vec<ReconstructionLevel>> {
    let sim = simulate_var1_traced(spec, t_len, 0, &mut stream_rng(seed, 0))?;
    let path = &sim.path;
    let h = spec.h()?;
    let noise = recover_noise(path, &spec.phi_or_h)?;
    let max_x = (0..path.len()).map(|k| path.at(k).norm()).fold(0.0, f64::max);
    truncations
        .iter()
        .map(|&m| {
            let rec = reconstruct_from_noise(&noise, &h, m)?;
            let offset = (rec.t0() - path.t0()) as usize;
            let max_error = (0..rec.len()).map(|k| (path.at(k + offset) - rec.at(k)).norm()).fold(0.0, f64::max);
            let tail = linalg::expm_sym(&(-&h * (m as f64 + 1.0)))?;
            Ok(ReconstructionLevel { truncation: m, max_error, bound: linalg::spectral_norm(&tail) * max_x })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CareInstanceOutcome {
    pub n: usize,
    pub scaled_residual: f64,
    pub symmetric: bool,
    pub psd: bool,
    pub two_start_gap: f64,
    pub error: Option<String>,
}

fn random_spd(n: usize, rng: &mut impl Rng) -> Mat {
    let a = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() / n as f64 + linalg::identity(n) * 0.1
}

/// Random CAREs with `C, D` SPD and `B` Gaussian, `n` cycling through
/// `1..=max_n`; each solved by the default solver and by Newton from
/// [`stabilizing_guess`].
pub fn care_random_study(instances: usize, max_n: usize, seed: u64) -> Vec<CareInstanceOutcome> {
    (0..instances)
        .into_par_iter()
        .map(|i| {
            let n = 1 + i % max_n;
            let mut rng = stream_rng(seed, i as u64);
            let b = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let c = random_spd(n, &mut rng);
            let d = random_spd(n, &mut rng);
            let outcome = (|| -> Result<CareInstanceOutcome> {
                let k = CareCoefficients::new(b, c, d, 1.0, CoeffProvenance::Discrete)?;
                let scale = linalg::spectral_norm(&k.d).max(1.0);
                let s1 = solve_care(&k)?;
                let s2 = newton_refine(&k, &stabilizing_guess(&k)?, 100)?;
                Ok(CareInstanceOutcome {
                    n,
                    scaled_residual: care_residual(&k, &s1.x) / scale,
                    symmetric: (&s1.x - s1.x.transpose()).amax() <= 1e-12 * s1.x.amax().max(1.0),
                    psd: linalg::definiteness_default(&s1.x).is_psd,
                    two_start_gap: (&s1.x - &s2.x).amax(),
                    error: None,
                })
            })();
            outcome.unwrap_or_else(|e| CareInstanceOutcome {
                n,
                scaled_residual: f64::INFINITY,
                symmetric: false,
                psd: false,
                two_start_gap: f64::INFINITY,
                error: Some(e.to_string()),
            })
        })
        .collect()
}

/// Largest L₁ discrepancy over `count` random perturbations with
/// `n ∈ {1,2,3}`, `t ∈ {1,…,5}`. Lag-0 blocks are kept symmetric, as for any
/// autocovariance estimate.
pub fn l1_random_study(count: usize, seed: u64) -> Result<f64> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let n = 1 + i % 3;
            let t = 1 + (i / 3) % 5;
            let mut rng = stream_rng(seed, i as u64);
            let mut draw = |k: usize| {
                let m = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
                if k == 0 {
                    linalg::symmetric_part(&m)
                } else {
                    m
                }
            };
            let truth: Vec<Mat> = (0..=t).map(&mut draw).collect();
            let est: Vec<Mat> = (0..=t).map(&mut draw).collect();
            verify_l1_identity(
                &AutocovSeq::integer_lags(truth, Provenance::Theoretical, None),
                &AutocovSeq::integer_lags(est, Provenance::Sample, None),
                t,
            )
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// CARE residual of the true `Θ = I − Φ` at each horizon, from theoretical
/// autocovariances and `v(t)`.
pub fn theorem_residual_study(spec: &ModelSpec, horizons: &[usize]) -> Result<Vec<(usize, f64)>> {
    let max_t = horizons.iter().copied().max().unwrap_or(1);
    let g = theoretical_gamma(spec, max_t)?;
    let theta = spec.theta()?;
    horizons
        .iter()
        .map(|&t| {
            let k = build_coeffs_discrete(&g, &noise_variance_v(spec, t as f64)?, t)?;
            Ok((t, care_residual(&k, &theta)))
        })
        .collect()
}

/// `max |L⁻¹(L(X)) − X|` for the Lamperti pair on a short simulated path.
pub fn lamperti_roundtrip(spec: &ModelSpec, h: &Mat, t_len: usize, seed: u64) -> Result<f64> {
    let path = simulate(spec, t_len as f64, 1.0, 0, &mut stream_rng(seed, 0))?;
    let back = lamperti_inverse(&lamperti_forward(&path, h)?, h)?;
    Ok((back.values() - path.values()).amax())
}

/// Univariate input with `γ(t) = cos(ωt)`, `2cos ω = Φ + Φ̃` and
/// `r(t) = γ(t)(1 − ΦΦ̃)`, for which the quadratic in `Φ` has the roots
/// `Φ` and `Φ̃` at every `t`.
pub fn cyclic_degenerate_input(phi: f64, phi_tilde: f64, max_lag: usize) -> (AutocovSeq, impl Fn(i64) -> f64) {
    let omega = ((phi + phi_tilde) / 2.0).acos();
    let gammas = (0..=max_lag).map(|k| Mat::from_element(1, 1, (omega * k as f64).cos())).collect();
    let r = move |t: i64| (omega * t as f64).cos() * (1.0 - phi * phi_tilde);
    (AutocovSeq::integer_lags(gammas, Provenance::Theoretical, None), r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn streams_are_disjoint() {
        assert_ne!(level_stream(0, 1), level_stream(1, 0));
        assert_eq!(level_stream(0, 7), 7);
    }

    #[test]
    fn small_studies_run() {
        let c = consistency_study(&reference_model(), &[500, 2000], 3, 20, 1).unwrap();
        assert_eq!(c.levels.len(), 2);
        assert_eq!(c.levels[0].errors.len(), 20);
        assert_eq!(c.scaled_ratios().len(), 1);
        let r = care_random_study(10, 5, 2);
        assert!(r.iter().all(|o| o.error.is_none()), "{r:?}");
        assert!(l1_random_study(30, 3).unwrap() <= 1e-12);
        let rec = reconstruction_study(&reference_model(), 300, &[5, 10], 4).unwrap();
        assert!(rec[1].max_error < rec[0].max_error);
    }
}
