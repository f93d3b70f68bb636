//! Information distances, the noise-distance bound and neighbourhoods.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::oracle::PairwisePmfSet;

/// Joint determinants at or below this are treated as zero.
pub const UNDERFLOW_DET: f64 = 1e-300;

/// `-log(|det P_ij| / sqrt(det P_i det P_j))`, or `+inf` when `|det P_ij|`
/// underflows.
pub fn info_distance(p_ij: &Matrix, p_i: &[f64], p_j: &[f64]) -> Result<f64> {
    if p_i.iter().chain(p_j).any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter("zero marginal entry".into()));
    }
    let det = linalg::det(p_ij).abs();
    if det <= UNDERFLOW_DET {
        return Ok(f64::INFINITY);
    }
    // Sum logs to stay clear of underflow in the marginal products for large k.
    let log_marg: f64 = p_i.iter().chain(p_j).map(|x| x.ln()).sum();
    Ok((-(det.ln() - 0.5 * log_marg)).max(0.0))
}

/// `(1 - k) log(1 - q_max) - (k / 2) log(k p_min)`.
pub fn eta_max(k: usize, q_max: f64, p_min: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q_max) {
        return Err(Error::InvalidParameter(format!(
            "q_max {q_max} outside [0, 1)"
        )));
    }
    let kf = k as f64;
    if !(p_min > 0.0 && p_min <= 1.0 / kf + 1e-15) {
        return Err(Error::InvalidParameter(format!(
            "p_min {p_min} outside (0, 1/k]"
        )));
    }
    let v = (1.0 - kf) * (1.0 - q_max).ln() - 0.5 * kf * (kf * p_min).ln();
    Ok(v.max(0.0))
}

/// Neighbourhood radius `scale * (4 d_max + 3 eta_max)`.
pub fn neighborhood_threshold(d_max: f64, eta_max: f64, scale: f64) -> f64 {
    scale * (4.0 * d_max + 3.0 * eta_max)
}

/// Symmetric table of pairwise distances with `kappa = exp(-d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    n: usize,
    d: Vec<f64>,
}

impl DistanceTable {
    /// From a full `n x n` row-major table; the diagonal is forced to 0.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        DistanceTable { n, d }
    }

    /// Distances of every pair in `pmfs`. Pairs touching a zero marginal, or
    /// with an underflowing determinant, get `+inf`.
    pub fn from_pmfs(pmfs: &PairwisePmfSet) -> Self {
        let marginals = pmfs.marginals();
        Self::from_fn(pmfs.n(), |i, j| {
            info_distance(&pmfs.get(i, j), &marginals[i], &marginals[j]).unwrap_or(f64::INFINITY)
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn kappa(&self, i: usize, j: usize) -> f64 {
        (-self.d(i, j)).exp()
    }

    /// Smallest off-diagonal distance.
    pub fn min_distance(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.n {
            for j in i + 1..self.n {
                m = m.min(self.d(i, j));
            }
        }
        m
    }

    /// Writes `i,j,d,kappa` rows for `i < j`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,d,kappa")?;
        for i in 0..self.n {
            for j in i + 1..self.n {
                writeln!(w, "{i},{j},{},{}", self.d(i, j), self.kappa(i, j))?;
            }
        }
        Ok(())
    }
}

/// Nodes within `threshold` of `i`, nearest first, ties by index.
pub fn neighborhood(dist: &DistanceTable, i: usize, threshold: f64) -> Vec<usize> {
    let mut out: Vec<usize> = (0..dist.n())
        .filter(|&j| j != i && dist.d(i, j).is_finite() && dist.d(i, j) <= threshold)
        .collect();
    out.sort_by(|&a, &b| dist.d(i, a).total_cmp(&dist.d(i, b)).then(a.cmp(&b)));
    out
}

/// Parameter bounds read off noisy data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundEstimates {
    pub d_max_upper: f64,
    pub d_min_lower: Option<f64>,
    pub p_min_lower: Option<f64>,
}

pub fn estimate_bounds(
    dist: &DistanceTable,
    eta_max: f64,
    q_max: f64,
    noisy_marginals: &[Vec<f64>],
) -> BoundEstimates {
    let n = dist.n();
    let nearest: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| dist.d(i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let d_max_upper = nearest.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let d_min = nearest.iter().copied().fold(f64::INFINITY, f64::min) - 2.0 * eta_max;
    let p_min = noisy_marginals
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min)
        - q_max;
    BoundEstimates {
        d_max_upper,
        d_min_lower: (d_min > 0.0).then_some(d_min),
        p_min_lower: (p_min > 0.0).then_some(p_min),
    }
}
