//! Sample autocovariances and the deviation statistic `M_{t,T}`.
//!
//! Only nonnegative lags are stored; consumers use `γ(−s) = γ(s)ᵀ`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::models::{Path, PathKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Sample,
    Theoretical,
}

/// Matrix autocovariances `γ(s) = E X_s X_0ᵀ` on a uniform lag grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocovSeq {
    pub lags: Vec<f64>,
    pub gammas: Vec<Mat>,
    pub provenance: Provenance,
    pub sample_size: Option<usize>,
}

impl AutocovSeq {
    pub fn uniform(gammas: Vec<Mat>, step: f64, provenance: Provenance, sample_size: Option<usize>) -> Self {
        let lags = (0..gammas.len()).map(|k| k as f64 * step).collect();
        Self { lags, gammas, provenance, sample_size }
    }

    pub fn integer_lags(gammas: Vec<Mat>, provenance: Provenance, sample_size: Option<usize>) -> Self {
        Self::uniform(gammas, 1.0, provenance, sample_size)
    }

    pub fn dim(&self) -> usize {
        self.gammas.first().map_or(0, Mat::nrows)
    }

    /// Largest stored lag index.
    pub fn max_index(&self) -> usize {
        self.gammas.len().saturating_sub(1)
    }

    /// Lag spacing (1 for a single-lag sequence).
    pub fn step(&self) -> f64 {
        if self.lags.len() >= 2 {
            self.lags[1] - self.lags[0]
        } else {
            1.0
        }
    }

    /// `γ(k·step)` for any integer `k` within range, transposing for negative `k`.
    pub fn at(&self, k: i64) -> Result<Mat> {
        let idx = k.unsigned_abs() as usize;
        let g = self
            .gammas
            .get(idx)
            .ok_or_else(|| Error::invalid(format!("lag index {k} outside 0..={}", self.max_index())))?;
        Ok(if k < 0 { g.transpose() } else { g.clone() })
    }

    /// Grid index of lag time `s`, which must lie on the grid.
    pub fn index_of(&self, s: f64) -> Result<i64> {
        let step = self.step();
        let k = (s / step).round();
        if (k * step - s).abs() > 1e-9 * step.max(s.abs()) {
            return Err(Error::invalid(format!("lag {s} is not a multiple of the grid step {step}")));
        }
        Ok(k as i64)
    }

    /// Keep lags `0..=max_index`.
    pub fn truncated(&self, max_index: usize) -> Result<Self> {
        if max_index > self.max_index() {
            return Err(Error::invalid(format!(
                "need lags up to index {max_index}, sequence stops at {}",
                self.max_index()
            )));
        }
        Ok(Self {
            lags: self.lags[..=max_index].to_vec(),
            gammas: self.gammas[..=max_index].to_vec(),
            provenance: self.provenance,
            sample_size: self.sample_size,
        })
    }

    fn validate_grid(&self) -> Result<()> {
        if self.gammas.is_empty() || self.lags.len() != self.gammas.len() {
            return Err(Error::invalid("autocovariance sequence is empty or lags/gammas mismatch"));
        }
        if self.lags[0] != 0.0 || self.lags.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("lag grid must start at 0 and increase strictly"));
        }
        Ok(())
    }

    /// CSV rows `lag,g11,g12,...,gnn` (each γ row-major).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.dim();
        let mut header = vec!["lag".to_string()];
        for i in 1..=n {
            for j in 1..=n {
                header.push(format!("g{i}{j}"));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for (lag, g) in self.lags.iter().zip(&self.gammas) {
            write!(w, "{lag}")?;
            for i in 0..n {
                for j in 0..n {
                    write!(w, ",{:.16e}", g[(i, j)])?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, provenance: Provenance) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::invalid("empty autocovariance CSV"))??;
        let ncols = header.trim().split(',').count();
        let n = ((ncols - 1) as f64).sqrt().round() as usize;
        if n == 0 || n * n + 1 != ncols {
            return Err(Error::invalid("autocovariance CSV header must be lag,g11,...,gnn"));
        }
        let mut lags = Vec::new();
        let mut gammas = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .trim()
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::invalid(e.to_string())))
                .collect::<Result<_>>()?;
            if vals.len() != ncols {
                return Err(Error::invalid("ragged autocovariance CSV row"));
            }
            lags.push(vals[0]);
            gammas.push(Mat::from_row_slice(n, n, &vals[1..]));
        }
        let seq = Self { lags, gammas, provenance, sample_size: None };
        seq.validate_grid()?;
        Ok(seq)
    }
}

fn centered_series(path: &Path, center: bool) -> Vec<Vec<f64>> {
    (0..path.dim())
        .map(|i| {
            let mut s = path.series(i);
            if center {
                let mean = s.iter().sum::<f64>() / s.len() as f64;
                s.iter_mut().for_each(|x| *x -= mean);
            }
            s
        })
        .collect()
}

fn divisor_t_autocov(series: &[Vec<f64>], max_lag: usize) -> Vec<Mat> {
    let n = series.len();
    let t = series[0].len();
    (0..=max_lag)
        .map(|s| {
            Mat::from_fn(n, n, |i, j| {
                let lead = &series[i][s..];
                let lag = &series[j][..t - s];
                lead.iter().zip(lag).map(|(a, b)| a * b).sum::<f64>() / t as f64
            })
        })
        .collect()
}

/// `γ̂_T(s) = (1/T) Σ_{k} (X_{k+s} − m)(X_k − m)ᵀ` for `s = 0..=max_lag`,
/// with `T` the number of observations and `m` the sample mean (or zero).
pub fn sample_autocov(path: &Path, max_lag: usize, center: bool) -> Result<AutocovSeq> {
    let t = path.len();
    if max_lag >= t {
        return Err(Error::invalid(format!("max_lag {max_lag} must be below the sample size {t}")));
    }
    let series = centered_series(path, center);
    let gammas = divisor_t_autocov(&series, max_lag);
    Ok(AutocovSeq::uniform(gammas, path.dt(), Provenance::Sample, Some(t)))
}

/// Divisor-T centred estimator on every grid lag `k·dt ≤ max_lag_time` of a
/// sampled continuous path.
pub fn sample_autocov_sampled(path: &Path, max_lag_time: f64) -> Result<AutocovSeq> {
    if path.kind() != PathKind::ContinuousSampled {
        return Err(Error::invalid("expected a sampled continuous-time path"));
    }
    let span = path.dt() * (path.len() - 1) as f64;
    if !(max_lag_time >= 0.0) || max_lag_time > span / 2.0 + 1e-12 * span {
        return Err(Error::invalid(format!("max lag time {max_lag_time} exceeds half the observation span {span}")));
    }
    let max_lag = (max_lag_time / path.dt() + 1e-9).floor() as usize;
    sample_autocov(path, max_lag, true)
}

/// `max_s ‖γ̂(s) − γ(s)‖` over the shared lags (spectral norm).
pub fn max_deviation(est: &AutocovSeq, truth: &AutocovSeq) -> Result<f64> {
    let shared = est.gammas.len().min(truth.gammas.len());
    if shared == 0 {
        return Err(Error::invalid("no shared lags"));
    }
    for k in 0..shared {
        if (est.lags[k] - truth.lags[k]).abs() > 1e-12 * est.lags[k].abs().max(1.0) {
            return Err(Error::invalid(format!("lag grids differ at index {k}")));
        }
    }
    Ok(est.gammas[..shared]
        .iter()
        .zip(&truth.gammas[..shared])
        .map(|(a, b)| linalg::spectral_norm(&(a - b)))
        .fold(0.0, f64::max))
}
