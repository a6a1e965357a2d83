use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{StandardNormal, Uniform};

use super::{fbm, theory, Driver, ModelKind, ModelSpec, Path};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Random stream for `(seed, stream)`. ChaCha20 keyed by `seed` with the
/// stream id selecting an independent keystream; Monte Carlo repetition `r`
/// uses stream `r`, so serial and parallel runs draw identical numbers.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A simulated discrete path together with the noise increments `ΔG_k`
/// (`k = 1..=T`) that generated it.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub path: Path,
    pub increments: Mat,
}

/// `10·⌈1/(1 − ‖Φ‖)⌉`.
pub fn default_burn_in(phi: &Mat) -> usize {
    let norm = linalg::spectral_norm(phi);
    10 * (1.0 / (1.0 - norm)).ceil().max(1.0) as usize
}

struct Innovations {
    sqrt_sigma: Mat,
    uniform: bool,
}

impl Innovations {
    fn new(spec: &ModelSpec) -> Result<Self> {
        Ok(Self { sqrt_sigma: linalg::sqrtm_psd(&spec.sigma)?, uniform: spec.driver == Driver::IidUniform })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.sqrt_sigma.nrows();
        let xi = if self.uniform {
            let a = 3f64.sqrt();
            let u = Uniform::new(-a, a).expect("valid range");
            DVector::from_fn(n, |_, _| rng.sample(u))
        } else {
            DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
        };
        &self.sqrt_sigma * xi
    }
}

fn require_kind(spec: &ModelSpec, kinds: &[ModelKind]) -> Result<()> {
    spec.validate()?;
    if !kinds.contains(&spec.kind) {
        return Err(Error::InvalidModel(format!("model kind {:?} not accepted here", spec.kind)));
    }
    Ok(())
}

/// Simulate `X_t = ΦX_{t−1} + ε_t` for `t = 1..=T` (T+1 points).
///
/// With `burn_in == 0` and Gaussian innovations the start is drawn from the
/// stationary law `N(0, γ(0))`; otherwise the chain starts at zero and the
/// first `burn_in` steps (or the default burn-in for non-Gaussian
/// innovations) are discarded.
pub fn simulate_var1_traced<R: Rng + ?Sized>(
    spec: &ModelSpec,
    t_len: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<Simulated> {
    require_kind(spec, &[ModelKind::Var1, ModelKind::Varma1q])?;
    if !spec.ma_coeffs.is_empty() {
        return Err(Error::InvalidModel("use simulate_varma1q for MA terms".into()));
    }
    if t_len == 0 {
        return Err(Error::invalid("T must be at least 1"));
    }
    let n = spec.dim();
    let phi = &spec.phi_or_h;
    let innov = Innovations::new(spec)?;

    let burn = if burn_in == 0 && innov.uniform { default_burn_in(phi) } else { burn_in };
    let mut x = if burn == 0 {
        let g0 = theory::gamma0_var1(phi, &spec.sigma)?;
        let root = linalg::sqrtm_psd(&g0)?;
        root * DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
    } else {
        let mut x = DVector::zeros(n);
        for _ in 0..burn {
            x = phi * x + innov.draw(rng);
        }
        x
    };

    let mut values = Mat::zeros(n, t_len + 1);
    let mut increments = Mat::zeros(n, t_len);
    values.set_column(0, &x);
    for k in 1..=t_len {
        let eps = innov.draw(rng);
        x = phi * x + &eps;
        values.set_column(k, &x);
        increments.set_column(k - 1, &eps);
    }
    Ok(Simulated { path: Path::discrete(values, 0)?, increments })
}

pub fn simulate_var1(spec: &ModelSpec, t_len: usize, burn_in: usize, seed: u64) -> Result<Path> {
    Ok(simulate_var1_traced(spec, t_len, burn_in, &mut stream_rng(seed, 0))?.path)
}

/// Simulate `X_t − ΦX_{t−1} = ε_t + θ₁ε_{t−1} + ⋯ + θ_qε_{t−q}`.
///
/// `q = 0` delegates to [`simulate_var1_traced`] and draws the identical
/// random sequence. For `q > 0` the MA recursion is seeded with `q`
/// pre-sample innovations and the chain is burnt in (`burn_in`, or the
/// default when zero).
pub fn simulate_varma1q_traced<R: Rng + ?Sized>(
    spec: &ModelSpec,
    t_len: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<Simulated> {
    require_kind(spec, &[ModelKind::Varma1q, ModelKind::Var1])?;
    if spec.ma_coeffs.is_empty() {
        return simulate_var1_traced(spec, t_len, burn_in, rng);
    }
    if t_len == 0 {
        return Err(Error::invalid("T must be at least 1"));
    }
    let n = spec.dim();
    let q = spec.ma_coeffs.len();
    let phi = &spec.phi_or_h;
    let innov = Innovations::new(spec)?;
    let burn = if burn_in == 0 { default_burn_in(phi) } else { burn_in };

    // history[0] = ε_{t}, history[i] = ε_{t−i}
    let mut history: std::collections::VecDeque<DVector<f64>> = (0..q).map(|_| innov.draw(rng)).collect();
    let mut step = |rng: &mut R| {
        let eps = innov.draw(rng);
        let mut u = eps.clone();
        for (theta, past) in spec.ma_coeffs.iter().zip(history.iter()) {
            u += theta * past;
        }
        history.push_front(eps);
        history.truncate(q);
        u
    };

    let mut x = DVector::zeros(n);
    for _ in 0..burn {
        x = phi * x + step(rng);
    }
    let mut values = Mat::zeros(n, t_len + 1);
    let mut increments = Mat::zeros(n, t_len);
    values.set_column(0, &x);
    for k in 1..=t_len {
        let u = step(rng);
        x = phi * x + &u;
        values.set_column(k, &x);
        increments.set_column(k - 1, &u);
    }
    Ok(Simulated { path: Path::discrete(values, 0)?, increments })
}

pub fn simulate_varma1q(spec: &ModelSpec, t_len: usize, burn_in: usize, seed: u64) -> Result<Path> {
    Ok(simulate_varma1q_traced(spec, t_len, burn_in, &mut stream_rng(seed, 0))?.path)
}

/// Sample the stationary solution of `dX = −HX dt + dG` on `0, dt, …, t_end`.
///
/// Brownian driver: exact transition `X_{k+1} = e^{−H dt}X_k + η_k` with the
/// exact step covariance and a stationary Gaussian start. Fractional driver:
/// Euler steps driven by exact fGn, started at zero and relaxed for
/// `⌈10/λ_min(H)⌉` time units before recording.
pub fn simulate_ou_with<R: Rng + ?Sized>(spec: &ModelSpec, t_end: f64, dt: f64, rng: &mut R) -> Result<Path> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= dt) {
        return Err(Error::invalid(format!("t_end {t_end} must be at least dt {dt}")));
    }
    require_kind(spec, &[ModelKind::OuCont])?;
    let n = spec.dim();
    let steps = (t_end / dt).round() as usize;
    let h = &spec.phi_or_h;
    let eig = linalg::sym_eig(h)?;
    let mut values = Mat::zeros(n, steps + 1);

    match spec.driver {
        Driver::Bm => {
            let transition = eig.map(|l| (-l * dt).exp());
            let (step_cov, gamma0) = theory::ou_step_and_stationary_cov(&eig, &spec.sigma, dt);
            let step_root = linalg::sqrtm_psd(&step_cov)?;
            let start_root = linalg::sqrtm_psd(&gamma0)?;
            let normal = |rng: &mut R| DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut x = start_root * normal(rng);
            values.set_column(0, &x);
            for k in 1..=steps {
                x = &transition * x + &step_root * normal(rng);
                values.set_column(k, &x);
            }
        }
        Driver::Fbm { hurst } => {
            let prefix = (10.0 / (eig.min() * dt)).ceil() as usize;
            let total = prefix + steps;
            let scale = dt.powf(hurst);
            let noise: Vec<Vec<f64>> = (0..n).map(|_| fbm::fgn_circulant(total, hurst, rng)).collect::<Result<_>>()?;
            let root = linalg::sqrtm_psd(&spec.sigma)?;
            let drift = linalg::identity(n) - h * dt;
            let mut x = DVector::zeros(n);
            #[allow(clippy::needless_range_loop)]
            for k in 0..total {
                if k >= prefix {
                    values.set_column(k - prefix, &x);
                }
                let dg = &root * DVector::from_fn(n, |i, _| noise[i][k] * scale);
                x = &drift * x + dg;
            }
            values.set_column(steps, &x);
        }
        _ => unreachable!("validated above"),
    }
    Path::sampled(values, 0.0, dt)
}

pub fn simulate_ou(spec: &ModelSpec, t_end: f64, dt: f64, seed: u64) -> Result<Path> {
    simulate_ou_with(spec, t_end, dt, &mut stream_rng(seed, 0))
}

/// Dispatch on the model kind. For discrete kinds `span` is the integer
/// sample size T; for the continuous kind it is `t_end` sampled every `dt`.
pub fn simulate<R: Rng + ?Sized>(spec: &ModelSpec, span: f64, dt: f64, burn_in: usize, rng: &mut R) -> Result<Path> {
    match spec.kind {
        ModelKind::Var1 | ModelKind::Varma1q => {
            if span < 1.0 || span.fract() != 0.0 {
                return Err(Error::invalid(format!("sample size must be a positive integer, got {span}")));
            }
            Ok(simulate_varma1q_traced(spec, span as usize, burn_in, rng)?.path)
        }
        ModelKind::OuCont => simulate_ou_with(spec, span, dt, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autocov::sample_autocov;

    fn scalar(x: f64) -> Mat {
        Mat::from_element(1, 1, x)
    }

    fn sample_var(p: &Path) -> f64 {
        sample_autocov(p, 0, true).unwrap().gammas[0][(0, 0)]
    }

    #[test]
    fn var1_stationary_variance() {
        let spec = ModelSpec::var1(scalar(0.5), scalar(1.0));
        let t = 100_000;
        let p = simulate_var1(&spec, t, 0, 7).unwrap();
        let g0 = 4.0 / 3.0;
        // asymptotic variance of the sample variance of a Gaussian AR(1)
        let se = (2.0 * g0 * g0 * (1.0 + 0.25) / (0.75 * t as f64)).sqrt();
        assert!((sample_var(&p) - g0).abs() < 3.0 * se, "{} vs {g0}", sample_var(&p));
    }

    #[test]
    fn zero_noise_gives_zero_path() {
        let spec = ModelSpec::var1(scalar(0.5), scalar(0.0));
        let p = simulate_var1(&spec, 50, 0, 1).unwrap();
        assert!(p.values().iter().all(|&x| x == 0.0));
        let spec = ModelSpec::varma1q(scalar(0.5), scalar(0.0), vec![scalar(0.3)]);
        let p = simulate_varma1q(&spec, 50, 0, 1).unwrap();
        assert!(p.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = ModelSpec::var1(Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]), linalg::identity(2));
        assert_eq!(simulate_var1(&spec, 200, 0, 3).unwrap(), simulate_var1(&spec, 200, 0, 3).unwrap());
        assert_ne!(simulate_var1(&spec, 200, 0, 3).unwrap(), simulate_var1(&spec, 200, 0, 4).unwrap());
        let ou = ModelSpec::ou(linalg::identity(1), linalg::identity(1), Driver::Bm);
        assert_eq!(simulate_ou(&ou, 5.0, 0.01, 9).unwrap(), simulate_ou(&ou, 5.0, 0.01, 9).unwrap());
    }

    #[test]
    fn varma_with_no_ma_terms_matches_var1() {
        let spec = ModelSpec::varma1q(scalar(0.5), scalar(1.0), vec![]);
        let a = simulate_varma1q(&spec, 300, 0, 21).unwrap();
        let b = simulate_var1(&ModelSpec::var1(scalar(0.5), scalar(1.0)), 300, 0, 21).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn arma11_variance() {
        let spec = ModelSpec::varma1q(scalar(0.5), scalar(1.0), vec![scalar(0.3)]);
        let t = 100_000;
        let p = simulate_varma1q(&spec, t, 0, 5).unwrap();
        let (phi, th): (f64, f64) = (0.5, 0.3);
        let g0 = (1.0 + 2.0 * phi * th + th * th) / (1.0 - phi * phi);
        // Bartlett: var(γ̂0) ≈ (2/T) Σ_k γ(k)²
        let g1 = phi * g0 + th;
        let sum_sq = g0 * g0 + 2.0 * g1 * g1 / (1.0 - phi * phi);
        let se = (2.0 * sum_sq / t as f64).sqrt();
        assert!((sample_var(&p) - g0).abs() < 3.0 * se, "{} vs {g0}", sample_var(&p));
    }

    #[test]
    fn traced_increments_are_the_innovations() {
        let spec = ModelSpec::var1(Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]), linalg::identity(2));
        let sim = simulate_var1_traced(&spec, 100, 0, &mut stream_rng(1, 0)).unwrap();
        for k in 1..=100 {
            let inc = sim.path.at(k) - &spec.phi_or_h * sim.path.at(k - 1);
            assert!((inc - sim.increments.column(k - 1)).amax() < 1e-12);
        }
    }

    #[test]
    fn uniform_innovations_have_right_variance() {
        let spec = ModelSpec::var1(scalar(0.5), scalar(1.0)).with_driver(Driver::IidUniform);
        let p = simulate_var1(&spec, 100_000, 0, 3).unwrap();
        assert!((sample_var(&p) - 4.0 / 3.0).abs() < 0.05);
    }

    #[test]
    fn ou_bm_variance() {
        let spec = ModelSpec::ou(scalar(1.0), scalar(1.0), Driver::Bm);
        let t_end = 5000.0;
        let p = simulate_ou(&spec, t_end, 0.01, 13).unwrap();
        assert_eq!(p.len(), 500_001);
        // var(γ̂0) ≈ (2/T)∫γ(s)² ds = 1/(2T) for θ = σ = 1
        let se = (0.5 / t_end).sqrt();
        assert!((sample_var(&p) - 0.5).abs() < 3.0 * se, "{}", sample_var(&p));
    }

    #[test]
    fn ou_fbm_half_matches_bm() {
        let spec = ModelSpec::ou(scalar(1.0), scalar(1.0), Driver::Fbm { hurst: 0.5 });
        let p = simulate_ou(&spec, 10_000.0, 0.01, 17).unwrap();
        let v = sample_var(&p);
        assert!((v - 0.5).abs() < 0.05 * 0.5, "{v}");
    }

    #[test]
    fn ou_rejects_bad_grid() {
        let spec = ModelSpec::ou(scalar(1.0), scalar(1.0), Driver::Bm);
        assert!(matches!(simulate_ou(&spec, 1.0, 0.0, 0), Err(Error::InvalidInput(_))));
        assert!(matches!(simulate_ou(&spec, 0.001, 0.01, 0), Err(Error::InvalidInput(_))));
        let bad = ModelSpec::ou(scalar(1.0), scalar(1.0), Driver::Fbm { hurst: 1.5 });
        assert!(matches!(simulate_ou(&bad, 1.0, 0.01, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn unstable_var1_is_rejected() {
        let spec = ModelSpec::var1(scalar(1.2), scalar(1.0));
        assert!(matches!(simulate_var1(&spec, 10, 0, 0), Err(Error::InvalidModel(_))));
    }
}
