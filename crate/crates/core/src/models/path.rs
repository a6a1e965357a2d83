use std::io::{BufRead, Write};

use nalgebra::DVectorView;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Discrete,
    ContinuousSampled,
}

/// An `n`-dimensional sample path on a uniform grid `t0 + k·dt`, `k = 0..=N`.
///
/// Observations are stored column-wise: column `k` is the state at `time(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    values: Mat,
    t0: f64,
    dt: f64,
    kind: PathKind,
}

impl Path {
    pub fn new(values: Mat, t0: f64, dt: f64, kind: PathKind) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::invalid("path has zero dimension"));
        }
        if values.ncols() < 2 {
            return Err(Error::invalid("path needs at least two grid points"));
        }
        if !(dt > 0.0 && dt.is_finite()) || !t0.is_finite() {
            return Err(Error::invalid(format!("bad time grid t0={t0} dt={dt}")));
        }
        if kind == PathKind::Discrete && (dt != 1.0 || t0.fract() != 0.0) {
            return Err(Error::invalid("discrete paths live on an integer grid with dt = 1"));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("path has non-finite values"));
        }
        Ok(Self { values, t0, dt, kind })
    }

    pub fn discrete(values: Mat, t0: i64) -> Result<Self> {
        Self::new(values, t0 as f64, 1.0, PathKind::Discrete)
    }

    pub fn sampled(values: Mat, t0: f64, dt: f64) -> Result<Self> {
        Self::new(values, t0, dt, PathKind::ContinuousSampled)
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn into_values(self) -> Mat {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Number of grid points `N + 1`.
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn at(&self, k: usize) -> DVectorView<'_, f64> {
        self.values.column(k)
    }

    /// Component `i` as a contiguous series.
    pub fn series(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Write `t,x1,...,xn` CSV. Values use 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.dim();
        let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("x{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            match self.kind {
                PathKind::Discrete => write!(w, "{}", self.time(k) as i64)?,
                PathKind::ContinuousSampled => write!(w, "{:.16e}", self.time(k))?,
            }
            for x in self.values.column(k).iter() {
                write!(w, ",{x:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Parse the CSV layout produced by [`Path::write_csv`]. The grid spacing
    /// is taken from the first two rows and checked for uniformity.
    pub fn read_csv<R: BufRead>(r: R, kind: PathKind) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::invalid("empty path CSV"))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(Error::invalid("path CSV header must be t,x1,...,xn"));
        }
        let n = cols.len() - 1;
        let mut times = Vec::new();
        let mut data = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != n + 1 {
                return Err(Error::invalid(format!("row {}: expected {} fields", lineno + 2, n + 1)));
            }
            let parse =
                |s: &str| s.trim().parse::<f64>().map_err(|e| Error::invalid(format!("row {}: {e}", lineno + 2)));
            times.push(parse(fields[0])?);
            for f in &fields[1..] {
                data.push(parse(f)?);
            }
        }
        if times.len() < 2 {
            return Err(Error::invalid("path CSV needs at least two rows"));
        }
        let t0 = times[0];
        let dt = times[1] - times[0];
        for (k, t) in times.iter().enumerate() {
            let expected = t0 + k as f64 * dt;
            if (t - expected).abs() > 1e-9 * expected.abs().max(1.0) {
                return Err(Error::invalid(format!("non-uniform time grid at row {}", k + 2)));
            }
        }
        let values = Mat::from_column_slice(n, times.len(), &data);
        Self::new(values, t0, dt, kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_exact() {
        let values = Mat::from_fn(2, 5, |i, k| (i as f64 + 1.0) * (k as f64).sin() / 3.0);
        for p in [Path::discrete(values.clone(), -2).unwrap(), Path::sampled(values.clone(), 0.0, 0.01).unwrap()] {
            let mut buf = Vec::new();
            p.write_csv(&mut buf).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert!(text.starts_with("t,x1,x2\n"));
            let back = Path::read_csv(buf.as_slice(), p.kind()).unwrap();
            assert_eq!(back.values(), p.values());
            assert_eq!(back.len(), 5);
        }
    }

    #[test]
    fn rejects_degenerate_paths() {
        assert!(Path::discrete(Mat::zeros(1, 1), 0).is_err());
        assert!(Path::sampled(Mat::zeros(1, 3), 0.0, 0.0).is_err());
        assert!(Path::new(Mat::zeros(1, 3), 0.0, 0.5, PathKind::Discrete).is_err());
        let mut v = Mat::zeros(1, 3);
        v[(0, 1)] = f64::INFINITY;
        assert!(Path::discrete(v, 0).is_err());
    }
}
