//! Generative models: AR(1)/VARMA(1,q) type discrete processes and
//! Langevin (Ornstein–Uhlenbeck) processes driven by Brownian or fractional
//! Brownian motion, plus the path containers they produce.

mod fbm;
mod noise;
mod path;
mod simulate;
mod theory;

pub use fbm::fgn_circulant;
pub use noise::{lamperti_forward, lamperti_inverse, reconstruct_from_noise, recover_noise, NoisePath};
pub use path::{Path, PathKind};
pub use simulate::{
    default_burn_in, simulate, simulate_ou, simulate_ou_with, simulate_var1, simulate_var1_traced, simulate_varma1q,
    simulate_varma1q_traced, stream_rng, Simulated,
};
pub use theory::{
    gamma_series_oracle, ma_increment_autocov, noise_variance_v, theoretical_gamma, theoretical_gamma_ou,
    theoretical_gamma_var1,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, rowmajor, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Var1,
    Varma1q,
    OuCont,
}

impl ModelKind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, ModelKind::OuCont)
    }
}

/// Noise driving the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Driver {
    /// iid Gaussian innovations (discrete kinds).
    IidGauss,
    /// iid innovations uniform on `[-√3, √3]` (unit variance), then scaled by `Σ^{1/2}`.
    IidUniform,
    /// Brownian motion with covariance `Σ` per unit time.
    Bm,
    /// Fractional Brownian motion with `v(t) = t^{2·hurst} Σ`.
    Fbm { hurst: f64 },
}

/// Parametric description of a stationary generating model.
///
/// `phi_or_h` is the autoregressive matrix Φ for the discrete kinds and the
/// drift matrix H of `dX = −HX dt + dG` for the continuous kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(with = "rowmajor", alias = "phi", alias = "h")]
    pub phi_or_h: Mat,
    #[serde(with = "rowmajor")]
    pub sigma: Mat,
    /// θ₁..θ_q (θ₀ = I is implicit). VARMA1Q only.
    #[serde(with = "rowmajor::list", default, skip_serializing_if = "Vec::is_empty")]
    pub ma_coeffs: Vec<Mat>,
    pub driver: Driver,
}

impl ModelSpec {
    pub fn var1(phi: Mat, sigma: Mat) -> Self {
        Self { kind: ModelKind::Var1, phi_or_h: phi, sigma, ma_coeffs: Vec::new(), driver: Driver::IidGauss }
    }

    pub fn varma1q(phi: Mat, sigma: Mat, ma_coeffs: Vec<Mat>) -> Self {
        Self { kind: ModelKind::Varma1q, phi_or_h: phi, sigma, ma_coeffs, driver: Driver::IidGauss }
    }

    pub fn ou(h: Mat, sigma: Mat, driver: Driver) -> Self {
        Self { kind: ModelKind::OuCont, phi_or_h: h, sigma, ma_coeffs: Vec::new(), driver }
    }

    pub fn with_driver(mut self, driver: Driver) -> Self {
        self.driver = driver;
        self
    }

    pub fn dim(&self) -> usize {
        self.phi_or_h.nrows()
    }

    /// Φ for discrete kinds, `e^{−H}` for the continuous kind.
    pub fn phi(&self) -> Result<Mat> {
        if self.kind.is_discrete() {
            Ok(self.phi_or_h.clone())
        } else {
            linalg::expm_sym(&(-&self.phi_or_h))
        }
    }

    /// H with Φ = e^{−H}.
    pub fn h(&self) -> Result<Mat> {
        if self.kind.is_discrete() {
            Ok(-linalg::logm_spd(&self.phi_or_h)?)
        } else {
            Ok(self.phi_or_h.clone())
        }
    }

    /// The parameter Θ = I − e^{−H} estimated in discrete time.
    pub fn theta(&self) -> Result<Mat> {
        Ok(linalg::identity(self.dim()) - self.phi()?)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::InvalidModel("dimension must be at least 1".into()));
        }
        let bad_shape = |m: &Mat| m.nrows() != n || m.ncols() != n;
        if bad_shape(&self.phi_or_h) || bad_shape(&self.sigma) {
            return Err(Error::InvalidModel(format!("matrices must all be {n}x{n}")));
        }
        let eig = linalg::sym_eig(&self.phi_or_h).map_err(|e| Error::InvalidModel(format!("phi_or_h: {e}")))?;
        let sig = linalg::symmetrize_checked(&self.sigma).map_err(|e| Error::InvalidModel(format!("sigma: {e}")))?;
        if !linalg::definiteness_default(&sig).is_psd {
            return Err(Error::InvalidModel("sigma is not positive semidefinite".into()));
        }
        match self.kind {
            ModelKind::Var1 | ModelKind::Varma1q => {
                if !(eig.min() > 0.0 && eig.max() < 1.0) {
                    return Err(Error::InvalidModel(format!(
                        "eigenvalues of phi must lie in (0, 1), got [{}, {}]",
                        eig.min(),
                        eig.max()
                    )));
                }
                if !matches!(self.driver, Driver::IidGauss | Driver::IidUniform) {
                    return Err(Error::InvalidModel("discrete models need an iid driver".into()));
                }
                if self.kind == ModelKind::Var1 && !self.ma_coeffs.is_empty() {
                    return Err(Error::InvalidModel("var1 takes no MA coefficients".into()));
                }
                if self.ma_coeffs.iter().any(bad_shape) {
                    return Err(Error::InvalidModel(format!("MA coefficients must be {n}x{n}")));
                }
            }
            ModelKind::OuCont => {
                if !(eig.min() > 0.0) {
                    return Err(Error::InvalidModel("H must be positive definite".into()));
                }
                match self.driver {
                    Driver::Bm => {}
                    Driver::Fbm { hurst } => {
                        if !(hurst > 0.0 && hurst < 1.0) {
                            return Err(Error::InvalidInput(format!("hurst {hurst} not in (0, 1)")));
                        }
                    }
                    _ => return Err(Error::InvalidModel("OU models need a bm or fbm driver".into())),
                }
                if !self.ma_coeffs.is_empty() {
                    return Err(Error::InvalidModel("ou_cont takes no MA coefficients".into()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_roundtrip_and_aliases() {
        let spec = ModelSpec::varma1q(
            Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]),
            linalg::identity(2),
            vec![Mat::from_row_slice(2, 2, &[0.3, 0.0, 0.1, 0.2])],
        );
        let text = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);

        let aliased: ModelSpec = serde_json::from_str(
            r#"{"kind":"ou_cont","h":[[1.0]],"sigma":[[1.0]],"driver":{"type":"fbm","hurst":0.7}}"#,
        )
        .unwrap();
        assert_eq!(aliased.driver, Driver::Fbm { hurst: 0.7 });
        aliased.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_models() {
        let unstable = ModelSpec::var1(Mat::from_element(1, 1, 1.0), linalg::identity(1));
        assert!(matches!(unstable.validate(), Err(Error::InvalidModel(_))));
        let bad_hurst = ModelSpec::ou(linalg::identity(1), linalg::identity(1), Driver::Fbm { hurst: 1.2 });
        assert!(matches!(bad_hurst.validate(), Err(Error::InvalidInput(_))));
        let neg_sigma = ModelSpec::var1(Mat::from_element(1, 1, 0.5), Mat::from_element(1, 1, -1.0));
        assert!(neg_sigma.validate().is_err());
    }

    #[test]
    fn theta_and_h_are_consistent() {
        let spec = ModelSpec::var1(Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]), linalg::identity(2));
        let h = spec.h().unwrap();
        let phi_back = linalg::expm_sym(&(-h)).unwrap();
        assert!((phi_back - &spec.phi_or_h).norm() < 1e-12);
        let theta = spec.theta().unwrap();
        assert!((theta + &spec.phi_or_h - linalg::identity(2)).norm() < 1e-15);
    }
}
