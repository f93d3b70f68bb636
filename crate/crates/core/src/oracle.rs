//! Exact marginals and pairwise joints of a tree model, clean and noisy, plus
//! a brute-force full-joint table for small instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{NoiseSpec, TreeModel};

/// Largest full joint table [`brute_force_joint`] will build.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PmfSource {
    Exact,
    Empirical,
}

/// Joint PMFs of every unordered pair, stored with the smaller index first:
/// `get(i, j)[(a, b)] = P(X_i = s_a, X_j = s_b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwisePmfSet {
    n: usize,
    k: usize,
    matrices: Vec<Matrix>,
    source: PmfSource,
    sample_count: Option<u64>,
}

/// Position of the pair `{i, j}` in the flat pair list (row-major upper triangle).
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

impl PairwisePmfSet {
    /// `matrices` must list pairs in [`pair_index`] order, min-index-first.
    pub fn new(
        n: usize,
        k: usize,
        matrices: Vec<Matrix>,
        source: PmfSource,
        sample_count: Option<u64>,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter("need at least 2 nodes".into()));
        }
        if matrices.len() != n * (n - 1) / 2 {
            return Err(Error::InvalidParameter(format!(
                "{} matrices for {n} nodes",
                matrices.len()
            )));
        }
        for m in &matrices {
            if m.nrows() != k || m.ncols() != k {
                return Err(Error::InvalidParameter(
                    "pair matrix has the wrong shape".into(),
                ));
            }
            if m.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidParameter(
                    "pair matrix has a negative entry".into(),
                ));
            }
            if (m.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "pair matrix sums to {}",
                    m.sum()
                )));
            }
        }
        Ok(PairwisePmfSet {
            n,
            k,
            matrices,
            source,
            sample_count,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn source(&self) -> PmfSource {
        self.source
    }

    pub fn sample_count(&self) -> Option<u64> {
        self.sample_count
    }

    /// Matrices in [`pair_index`] order.
    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    /// `P_{i,j}` with rows indexed by `X_i`.
    pub fn get(&self, i: usize, j: usize) -> Matrix {
        assert!(i != j, "pair matrix of a node with itself");
        let m = &self.matrices[pair_index(self.n, i, j)];
        if i < j {
            m.clone()
        } else {
            m.transpose()
        }
    }

    /// Marginal of node `i`, read off its pair with the nearest other index.
    pub fn marginal(&self, i: usize) -> Vec<f64> {
        let other = if i == 0 { 1 } else { i - 1 };
        linalg::row_sums(&self.get(i, other))
    }

    pub fn marginals(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.marginal(i)).collect()
    }
}

/// Marginals of every node, propagated from the root.
pub fn exact_marginals(model: &TreeModel) -> Vec<Vec<f64>> {
    let k = model.k();
    let mut out = vec![Vec::new(); model.n()];
    for &v in model.order() {
        out[v] = match model.parent(v) {
            None => model.root_marginal().to_vec(),
            Some(p) => {
                let m = model
                    .conditional(v)
                    .expect("non-root node has a conditional");
                (0..k)
                    .map(|i| (0..k).map(|j| m[(i, j)] * out[p][j]).sum())
                    .collect()
            }
        };
    }
    out
}

pub fn exact_marginal(model: &TreeModel, i: usize) -> Vec<f64> {
    exact_marginals(model).swap_remove(i)
}

/// `P(X_next = s_a | X_cur = s_b)` for adjacent nodes.
fn step_conditional(
    model: &TreeModel,
    marginals: &[Vec<f64>],
    cur: usize,
    next: usize,
) -> Result<Matrix> {
    if model.parent(next) == Some(cur) {
        return Ok(model.conditional(next).unwrap().clone());
    }
    // cur is the child: invert by Bayes.
    let m = model.conditional(cur).unwrap();
    let k = model.k();
    let mut out = Matrix::zeros(k, k);
    for b in 0..k {
        let pc = marginals[cur][b];
        if pc <= 0.0 {
            return Err(Error::ZeroMarginal {
                node: cur,
                symbol: b,
            });
        }
        for a in 0..k {
            out[(a, b)] = m[(b, a)] * marginals[next][a] / pc;
        }
    }
    Ok(out)
}

fn pairwise_with_marginals(
    model: &TreeModel,
    marginals: &[Vec<f64>],
    i: usize,
    j: usize,
) -> Result<Matrix> {
    if i == j {
        return Err(Error::InvalidParameter(
            "pairwise PMF needs two distinct nodes".into(),
        ));
    }
    let path = model.tree().path(i, j);
    let k = model.k();
    // cond[(b, a)] = P(X_j = s_b | X_i = s_a)
    let mut cond = linalg::identity(k);
    for w in path.windows(2) {
        cond = step_conditional(model, marginals, w[0], w[1])? * cond;
    }
    Ok(linalg::diag(&marginals[i]) * cond.transpose())
}

/// Clean joint `P_{i,j}` with rows indexed by `X_i`.
pub fn exact_pairwise_pmf(model: &TreeModel, i: usize, j: usize) -> Result<Matrix> {
    pairwise_with_marginals(model, &exact_marginals(model), i, j)
}

/// `E_i P_{i,j} E_j`.
pub fn noisy_pairwise_pmf(
    model: &TreeModel,
    noise: &NoiseSpec,
    i: usize,
    j: usize,
) -> Result<Matrix> {
    let k = model.k();
    let p = exact_pairwise_pmf(model, i, j)?;
    Ok(linalg::error_matrix(k, noise.q()[i]) * p * linalg::error_matrix(k, noise.q()[j]))
}

/// All pairwise joints, noisy when `noise` is given.
pub fn exact_pairwise_set(model: &TreeModel, noise: Option<&NoiseSpec>) -> Result<PairwisePmfSet> {
    let n = model.n();
    let k = model.k();
    if let Some(noise) = noise {
        if noise.q().len() != n {
            return Err(Error::InvalidParameter(format!(
                "noise has {} entries for {n} nodes",
                noise.q().len()
            )));
        }
    }
    let marginals = exact_marginals(model);
    let mut matrices = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let p = pairwise_with_marginals(model, &marginals, i, j)?;
            matrices.push(match noise {
                Some(noise) => {
                    linalg::error_matrix(k, noise.q()[i])
                        * p
                        * linalg::error_matrix(k, noise.q()[j])
                }
                None => p,
            });
        }
    }
    PairwisePmfSet::new(n, k, matrices, PmfSource::Exact, None)
}

/// Full joint table; assignment `x` sits at index `sum_v x_v k^v`.
pub fn brute_force_joint(model: &TreeModel) -> Result<Vec<f64>> {
    let n = model.n();
    let k = model.k();
    let cells = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if cells > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(cells));
    }
    let cells = cells as usize;
    let mut table = vec![0.0; cells];
    let mut x = vec![0usize; n];
    for (idx, slot) in table.iter_mut().enumerate() {
        let mut rest = idx;
        for v in x.iter_mut() {
            *v = rest % k;
            rest /= k;
        }
        let mut p = model.root_marginal()[x[model.root()]];
        for &v in &model.order()[1..] {
            let parent = model.parent(v).unwrap();
            p *= model.conditional(v).unwrap()[(x[v], x[parent])];
        }
        *slot = p;
    }
    Ok(table)
}

/// Sums a full joint table down to the pair `(i, j)`.
pub fn marginalize_pair(table: &[f64], n: usize, k: usize, i: usize, j: usize) -> Matrix {
    let mut out = Matrix::zeros(k, k);
    let (si, sj) = (k.pow(i as u32), k.pow(j as u32));
    debug_assert_eq!(table.len(), k.pow(n as u32));
    for (idx, &p) in table.iter().enumerate() {
        out[((idx / si) % k, (idx / sj) % k)] += p;
    }
    out
}
