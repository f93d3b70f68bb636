//! The matrix quadratic in the noise level of a candidate center node, its
//! common root and its residual.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, SINGULAR_DET};
use crate::model::AlgoParams;
use crate::oracle::PairwisePmfSet;

/// Coefficients below this magnitude count as zero in root selection.
const DEGENERATE_COEFF: f64 = 1e-14;

/// `x^2 A + x B + C`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixQuadratic {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl MatrixQuadratic {
    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    pub fn eval(&self, x: f64) -> Matrix {
        &self.a * (x * x) + &self.b * x + &self.c
    }

    /// Frobenius norm of the quadratic at `x`.
    pub fn residual(&self, x: f64) -> f64 {
        self.eval(x).norm()
    }
}

/// `(O - k I) / k^2`.
pub fn a_matrix(k: usize) -> Matrix {
    let kf = k as f64;
    (linalg::ones(k) - linalg::identity(k) * kf) / (kf * kf)
}

/// `-(O P + P O - k P - I) / k` for the diagonal marginal matrix `P` of the center.
pub fn b_matrix(center_marginal: &[f64]) -> Matrix {
    let k = center_marginal.len();
    let kf = k as f64;
    let p = linalg::diag(center_marginal);
    let o = linalg::ones(k);
    -(&o * &p + &p * &o - &p * kf - linalg::identity(k)) / kf
}

/// Quadratic for the triplet `(a, b, c)` with `b` tested as the center:
/// `C = P_{b,c} P_{a,c}^{-1} P_{a,b} - P_b`.
pub fn quad_coefficients(
    pmfs: &PairwisePmfSet,
    triplet: (usize, usize, usize),
) -> Result<MatrixQuadratic> {
    let (a, b, c) = triplet;
    if a == b || b == c || a == c {
        return Err(Error::InvalidParameter(format!(
            "triplet {triplet:?} is not distinct"
        )));
    }
    let p_ac = pmfs.get(a, c);
    if linalg::det(&p_ac).abs() <= SINGULAR_DET {
        return Err(Error::SingularPair(a, c));
    }
    let inv = p_ac.try_inverse().ok_or(Error::SingularPair(a, c))?;
    let marginal = pmfs.marginal(b);
    let cm = pmfs.get(b, c) * inv * pmfs.get(a, b) - linalg::diag(&marginal);
    if cm.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularPair(a, c));
    }
    Ok(MatrixQuadratic {
        a: a_matrix(pmfs.k()),
        b: b_matrix(&marginal),
        c: cm,
    })
}

/// Root of `a x^2 + b x + c` chosen for the interval `[0, q_max]`:
/// the smaller root inside, else the real root nearest the interval, else the
/// clamped vertex. Linear when `|a|` is negligible; `None` when `b` is too.
pub fn select_root(a: f64, b: f64, c: f64, q_max: f64) -> Option<f64> {
    let inside = |x: f64| (0.0..=q_max).contains(&x);
    let gap = |x: f64| {
        if x < 0.0 {
            -x
        } else if x > q_max {
            x - q_max
        } else {
            0.0
        }
    };
    if a.abs() < DEGENERATE_COEFF {
        if b.abs() < DEGENERATE_COEFF {
            return None;
        }
        return Some(-c / b);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Some((-b / (2.0 * a)).clamp(0.0, q_max));
    }
    // Cancellation-free pair of roots.
    let s = disc.sqrt();
    let t = -0.5 * (b + b.signum() * s);
    let (r1, r2) = if t == 0.0 {
        (0.0, 0.0)
    } else {
        let x1 = t / a;
        let x2 = c / t;
        (x1.min(x2), x1.max(x2))
    };
    if inside(r1) {
        Some(r1)
    } else if inside(r2) {
        Some(r2)
    } else if gap(r1) <= gap(r2) {
        Some(r1)
    } else {
        Some(r2)
    }
}

/// Mean of the selected per-entry roots, with the per-entry roots in
/// row-major order (`None` for entries that contributed nothing).
pub fn mean_root(q: &MatrixQuadratic, q_max: f64) -> (f64, Vec<Option<f64>>) {
    let k = q.k();
    let mut roots = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            roots.push(select_root(q.a[(i, j)], q.b[(i, j)], q.c[(i, j)], q_max));
        }
    }
    let used: Vec<f64> = roots.iter().flatten().copied().collect();
    let mean = if used.is_empty() {
        0.0
    } else {
        used.iter().sum::<f64>() / used.len() as f64
    };
    (mean, roots)
}

/// What counts as a feasible root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootPolicy {
    pub q_max: f64,
    /// Feasible residuals sit below `t0 / 2` when this is known.
    pub t0: Option<f64>,
    /// Residual tolerance when `t0` is unknown.
    pub root_tol: f64,
}

impl From<&AlgoParams> for RootPolicy {
    fn from(p: &AlgoParams) -> Self {
        RootPolicy {
            q_max: p.q_max,
            t0: p.t0,
            root_tol: p.root_tol,
        }
    }
}

impl RootPolicy {
    pub fn residual_ok(&self, residual: f64) -> bool {
        match self.t0 {
            Some(t0) => residual < 0.5 * t0,
            None => residual < self.root_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootResult {
    pub center: usize,
    pub mean_root: f64,
    pub residual: f64,
    pub per_entry_roots: Vec<Option<f64>>,
    pub feasible: bool,
}

/// Root and residual of the quadratic for `triplet.1` as the center.
pub fn quadratic_error(
    pmfs: &PairwisePmfSet,
    triplet: (usize, usize, usize),
    policy: &RootPolicy,
) -> Result<RootResult> {
    let q = quad_coefficients(pmfs, triplet)?;
    Ok(root_result(&q, triplet.1, policy))
}

pub fn root_result(q: &MatrixQuadratic, center: usize, policy: &RootPolicy) -> RootResult {
    let (mean, per_entry_roots) = mean_root(q, policy.q_max);
    let residual = q.residual(mean);
    let feasible = (0.0..=policy.q_max).contains(&mean) && policy.residual_ok(residual);
    RootResult {
        center,
        mean_root: mean,
        residual,
        per_entry_roots,
        feasible,
    }
}

/// Minimum of the residual over `x` in `[lo, hi]`: a 1000-point grid followed
/// by golden-section refinement around the best grid point.
pub fn minimize_residual(q: &MatrixQuadratic, lo: f64, hi: f64) -> (f64, f64) {
    if hi <= lo {
        return (lo, q.residual(lo));
    }
    const GRID: usize = 1000;
    let step = (hi - lo) / (GRID - 1) as f64;
    let (mut best_x, mut best_r) = (lo, q.residual(lo));
    let mut best_i = 0;
    for i in 1..GRID {
        let x = if i == GRID - 1 {
            hi
        } else {
            lo + step * i as f64
        };
        let r = q.residual(x);
        if r < best_r {
            best_x = x;
            best_r = r;
            best_i = i;
        }
    }
    let mut a = lo + step * best_i.saturating_sub(1) as f64;
    let mut b = (lo + step * (best_i + 1) as f64).min(hi);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (q.residual(x1), q.residual(x2));
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = q.residual(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = q.residual(x2);
        }
    }
    for (x, r) in [(x1, f1), (x2, f2)] {
        if r < best_r {
            best_x = x;
            best_r = r;
        }
    }
    (best_x, best_r)
}

/// Smallest root of `x^2/4 - x/2 + s` for a binary joint, where
/// `s = P00 P10 / (P00 + P10) + P01 P11 / (P01 + P11)`. Always in `[0, 1]`.
pub fn binary_quadratic_check(p21: &Matrix) -> Result<f64> {
    if p21.nrows() != 2 || p21.ncols() != 2 {
        return Err(Error::InvalidParameter(
            "binary check needs a 2x2 joint".into(),
        ));
    }
    if linalg::det(p21).abs() <= SINGULAR_DET {
        return Err(Error::InvalidParameter("rank-deficient joint".into()));
    }
    let term = |x: f64, y: f64| x * y / (x + y);
    let s = term(p21[(0, 0)], p21[(1, 0)]) + term(p21[(0, 1)], p21[(1, 1)]);
    Ok(1.0 - (1.0 - 4.0 * s).max(0.0).sqrt())
}
