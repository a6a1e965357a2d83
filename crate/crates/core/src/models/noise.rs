use super::{Path, PathKind};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Noise `G` of the AR(1)-type representation, with `G` equal to zero at the
/// first grid point of the path it was recovered from.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    /// Column `k` is `ΔG` at time `t0 + k + 1`.
    pub increments: Mat,
    /// Column `k` is `G` at time `t0 + k`; column 0 is zero.
    pub cumulative: Mat,
    pub t0: f64,
}

impl NoisePath {
    pub fn from_increments(increments: Mat, t0: f64) -> Self {
        let (n, len) = increments.shape();
        let mut cumulative = Mat::zeros(n, len + 1);
        for k in 0..len {
            let next = cumulative.column(k) + increments.column(k);
            cumulative.set_column(k + 1, &next);
        }
        Self { increments, cumulative, t0 }
    }

    pub fn len(&self) -> usize {
        self.increments.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.ncols() == 0
    }
}

/// `ΔG_k = X_k − ΦX_{k−1}`.
pub fn recover_noise(path: &Path, phi: &Mat) -> Result<NoisePath> {
    if path.kind() != PathKind::Discrete {
        return Err(Error::invalid("noise recovery needs a discrete path"));
    }
    let n = path.dim();
    if phi.shape() != (n, n) {
        return Err(Error::invalid(format!("phi is {}x{}, path dimension is {n}", phi.nrows(), phi.ncols())));
    }
    let x = path.values();
    let len = path.len() - 1;
    let lagged = phi * x.columns(0, len);
    let increments = x.columns(1, len) - lagged;
    Ok(NoisePath::from_increments(increments, path.t0()))
}

/// Truncated moving-average reconstruction
/// `X̂_t = Σ_{k=t−M}^{t} e^{(k−t)H} ΔG_k`.
///
/// The returned path starts at the first time with a full window of `M + 1`
/// increments, i.e. `t0 + M + 1`.
pub fn reconstruct_from_noise(noise: &NoisePath, h: &Mat, m: usize) -> Result<Path> {
    let (n, len) = noise.increments.shape();
    if h.shape() != (n, n) {
        return Err(Error::invalid("H dimension does not match the noise"));
    }
    if m + 2 > len {
        return Err(Error::invalid(format!("truncation M = {m} needs at least M + 2 increments, have {len}")));
    }
    let phi = linalg::expm_sym(&(-h))?;
    let mut powers = Vec::with_capacity(m + 1);
    let mut p = linalg::identity(n);
    for _ in 0..=m {
        powers.push(p.clone());
        p = &phi * p;
    }
    let out_len = len - m;
    let mut values = Mat::zeros(n, out_len);
    for (col, i) in (m..len).enumerate() {
        let mut acc = nalgebra::DVector::zeros(n);
        for (l, pw) in powers.iter().enumerate() {
            acc += pw * noise.increments.column(i - l);
        }
        values.set_column(col, &acc);
    }
    Path::discrete(values, (noise.t0 as i64) + m as i64 + 1)
}

fn lamperti(path: &Path, h: &Mat, sign: f64) -> Result<Path> {
    let n = path.dim();
    if h.shape() != (n, n) {
        return Err(Error::invalid("H dimension does not match the path"));
    }
    let eig = linalg::sym_eig(h)?;
    let mut values = Mat::zeros(n, path.len());
    for k in 0..path.len() {
        let t = path.time(k);
        let e = eig.map(|l| (sign * t * l).exp());
        values.set_column(k, &(e * path.at(k)));
    }
    Path::new(values, path.t0(), path.dt(), path.kind())
}

/// `Y[t] = e^{tH} X_t`, indexed by the original time `t` (the point `e^t`
/// of the self-similar time axis).
pub fn lamperti_forward(path: &Path, h: &Mat) -> Result<Path> {
    lamperti(path, h, 1.0)
}

/// `X[t] = e^{−tH} Y[t]`.
pub fn lamperti_inverse(path: &Path, h: &Mat) -> Result<Path> {
    lamperti(path, h, -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{simulate_var1_traced, stream_rng, ModelSpec};
    use approx::assert_abs_diff_eq;

    fn reference() -> ModelSpec {
        ModelSpec::var1(Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]), linalg::identity(2))
    }

    #[test]
    fn recovered_noise_is_the_innovation_sequence() {
        let spec = reference();
        let sim = simulate_var1_traced(&spec, 200, 0, &mut stream_rng(5, 0)).unwrap();
        let noise = recover_noise(&sim.path, &spec.phi_or_h).unwrap();
        assert!((&noise.increments - &sim.increments).amax() < 1e-12);
        assert_eq!(noise.cumulative.column(0).amax(), 0.0);
        let partial: nalgebra::DVector<f64> = (0..10).map(|k| sim.increments.column(k).into_owned()).sum();
        assert!((noise.cumulative.column(10) - partial).amax() < 1e-12);
    }

    #[test]
    fn trivial_recoveries() {
        let x = Mat::from_fn(2, 6, |i, k| (i * 7 + k) as f64);
        let p = Path::discrete(x.clone(), 0).unwrap();
        let noise = recover_noise(&p, &linalg::zeros(2)).unwrap();
        assert_eq!(noise.increments, x.columns(1, 5).into_owned());

        let c = Path::discrete(Mat::from_element(2, 6, 3.5), 0).unwrap();
        let noise = recover_noise(&c, &linalg::identity(2)).unwrap();
        assert!(noise.increments.iter().all(|v| *v == 0.0));

        assert!(recover_noise(&p, &linalg::identity(3)).is_err());
    }

    #[test]
    fn reconstruction_error_is_the_geometric_tail() {
        let spec = reference();
        let sim = simulate_var1_traced(&spec, 400, 0, &mut stream_rng(8, 0)).unwrap();
        let noise = recover_noise(&sim.path, &spec.phi_or_h).unwrap();
        let h = spec.h().unwrap();
        for m in [5usize, 10, 20] {
            let rec = reconstruct_from_noise(&noise, &h, m).unwrap();
            assert_eq!(rec.t0(), (m + 1) as f64);
            // X_t − X̂_t = Φ^{M+1} X_{t−M−1}
            let tail = linalg::mat_pow(&spec.phi_or_h, (m + 1) as u32);
            for col in 0..rec.len() {
                let t = m + 1 + col;
                let expected = &tail * sim.path.at(t - m - 1);
                let err = sim.path.at(t) - rec.at(col);
                assert!((err - expected).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn reconstruction_guards() {
        let noise = NoisePath::from_increments(Mat::zeros(1, 5), 0.0);
        let rec = reconstruct_from_noise(&noise, &Mat::from_element(1, 1, 0.7), 3).unwrap();
        assert!(rec.values().iter().all(|v| *v == 0.0));
        assert!(reconstruct_from_noise(&noise, &Mat::from_element(1, 1, 0.7), 4).is_err());
    }

    #[test]
    fn lamperti_examples() {
        let h = Mat::from_element(1, 1, 0.3);
        let c = Path::discrete(Mat::from_element(1, 5, 2.0), 0).unwrap();
        let y = lamperti_forward(&c, &h).unwrap();
        for k in 0..5 {
            assert_abs_diff_eq!(y.at(k)[0], (0.3 * k as f64).exp() * 2.0, epsilon = 1e-13);
        }
        let p = Path::discrete(Mat::from_fn(2, 4, |i, k| (i + k) as f64 - 1.5), 0).unwrap();
        let same = lamperti_forward(&p, &linalg::zeros(2)).unwrap();
        assert_eq!(same.values(), p.values());
    }
}
