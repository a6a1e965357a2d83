use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex64, FftPlanner};

use crate::error::{Error, Result};

/// Unit-step fractional Gaussian noise autocovariance.
fn fgn_autocov(k: usize, hurst: f64) -> f64 {
    let k = k as f64;
    let h2 = 2.0 * hurst;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Exact sample of `len` fractional Gaussian noise increments (unit step,
/// unit variance) by circulant embedding of the Toeplitz covariance.
pub fn fgn_circulant<R: Rng + ?Sized>(len: usize, hurst: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::invalid(format!("hurst {hurst} not in (0, 1)")));
    }
    if len == 0 {
        return Ok(Vec::new());
    }
    let m = 2 * len;
    let mut c: Vec<Complex64> = (0..m)
        .map(|j| {
            let lag = if j <= len { j } else { m - j };
            Complex64::new(fgn_autocov(lag, hurst), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut c);

    let max = c.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    let mut w: Vec<Complex64> = Vec::with_capacity(m);
    for z in &c {
        let lambda = z.re;
        if lambda < -1e-9 * max {
            return Err(Error::invalid(format!("circulant embedding not nonnegative (eigenvalue {lambda:e})")));
        }
        let s = (lambda.max(0.0) / m as f64).sqrt();
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        w.push(Complex64::new(s * a, s * b));
    }
    fft.process(&mut w);
    Ok(w.into_iter().take(len).map(|z| z.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn half_hurst_is_white_noise() {
        for k in 1..5 {
            assert!(fgn_autocov(k, 0.5).abs() < 1e-15);
        }
        assert_eq!(fgn_autocov(0, 0.5), 1.0);
    }

    #[test]
    fn empirical_autocov_matches_fgn() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for &h in &[0.3, 0.5, 0.8] {
            let n = 1 << 16;
            let x = fgn_circulant(n, h, &mut rng).unwrap();
            for lag in 0..3 {
                let est: f64 = x[lag..].iter().zip(&x[..n - lag]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                let truth = fgn_autocov(lag, h);
                // long memory inflates the error at h = 0.8; 0.05 is ~4 standard errors there
                assert!((est - truth).abs() < 0.05, "h={h} lag={lag}: {est} vs {truth}");
            }
        }
    }

    #[test]
    fn rejects_bad_hurst() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(fgn_circulant(8, 0.0, &mut rng).is_err());
        assert!(fgn_circulant(8, 1.0, &mut rng).is_err());
    }
}
