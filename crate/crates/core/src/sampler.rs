//! Ancestral sampling, the k-ary symmetric channel and empirical joints.
//!
//! Every random draw comes from a ChaCha8 stream selected by the sample index,
//! positioned at a fixed offset per node. Sample `s` therefore depends only on
//! `(seed, s)`, not on `N` or on how the work is split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{NoiseSpec, TreeModel};
use crate::oracle::{PairwisePmfSet, PmfSource};

/// Words of keystream reserved per node in each sample's stream.
const WORDS_PER_NODE: u128 = 16;

/// `N x n` symbols, row-major by sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMatrix {
    n_samples: usize,
    n: usize,
    k: usize,
    values: Vec<u8>,
}

impl SampleMatrix {
    pub fn new(n_samples: usize, n: usize, k: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != n_samples * n {
            return Err(Error::InvalidParameter(format!(
                "{} values for a {n_samples} x {n} sample matrix",
                values.len()
            )));
        }
        if !(2..=crate::linalg::MAX_SUPPORT).contains(&k) {
            return Err(Error::InvalidParameter(format!(
                "support size {k} out of range"
            )));
        }
        if let Some(&bad) = values.iter().find(|&&v| v as usize >= k) {
            return Err(Error::InvalidParameter(format!(
                "symbol {bad} not below k = {k}"
            )));
        }
        Ok(SampleMatrix {
            n_samples,
            n,
            k,
            values,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn row(&self, s: usize) -> &[u8] {
        &self.values[s * self.n..(s + 1) * self.n]
    }

    pub fn get(&self, s: usize, node: usize) -> u8 {
        self.values[s * self.n + node]
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice(&self, start: usize, end: usize) -> SampleMatrix {
        SampleMatrix {
            n_samples: end - start,
            n: self.n,
            k: self.k,
            values: self.values[start * self.n..end * self.n].to_vec(),
        }
    }
}

fn stream_rng(base: &ChaCha8Rng, sample: usize) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(sample as u64);
    rng
}

/// Draws `n_samples` i.i.d. samples by ancestral sampling from the root.
pub fn sample_clean(model: &TreeModel, n_samples: usize, seed: u64) -> Result<SampleMatrix> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let n = model.n();
    let k = model.k();
    // Column cumulative sums of every conditional, laid out [node][parent value][child value].
    let mut cdf = vec![vec![0.0; k * k]; n];
    for v in 0..n {
        match model.conditional(v) {
            None => {
                let mut acc = 0.0;
                for i in 0..k {
                    acc += model.root_marginal()[i];
                    cdf[v][i] = acc;
                }
            }
            Some(m) => {
                for j in 0..k {
                    let mut acc = 0.0;
                    for i in 0..k {
                        acc += m[(i, j)];
                        cdf[v][j * k + i] = acc;
                    }
                }
            }
        }
    }
    let draw =
        |table: &[f64], u: f64| -> u8 { table.iter().position(|&c| u < c).unwrap_or(k - 1) as u8 };
    let base = ChaCha8Rng::seed_from_u64(seed);
    let order = model.order();
    let mut values = vec![0u8; n_samples * n];
    values.par_chunks_mut(n).enumerate().for_each(|(s, row)| {
        let mut rng = stream_rng(&base, s);
        for &v in order {
            rng.set_word_pos(v as u128 * WORDS_PER_NODE);
            let u: f64 = rng.random();
            row[v] = match model.parent(v) {
                None => draw(&cdf[v][..k], u),
                Some(p) => {
                    let j = row[p] as usize;
                    draw(&cdf[v][j * k..(j + 1) * k], u)
                }
            };
        }
    });
    SampleMatrix::new(n_samples, n, k, values)
}

/// Passes every cell through the channel: with probability `q_i` the symbol
/// is replaced by a uniform draw over all `k` symbols (possibly itself).
pub fn apply_noise(samples: &SampleMatrix, noise: &NoiseSpec, seed: u64) -> Result<SampleMatrix> {
    apply_noise_with_mask(samples, noise, seed).map(|(s, _)| s)
}

/// As [`apply_noise`], also returning which cells drew a replacement.
pub fn apply_noise_with_mask(
    samples: &SampleMatrix,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<(SampleMatrix, Vec<bool>)> {
    let n = samples.n();
    let k = samples.k();
    if noise.q().len() != n {
        return Err(Error::InvalidParameter(format!(
            "noise has {} entries for {n} nodes",
            noise.q().len()
        )));
    }
    let base = ChaCha8Rng::seed_from_u64(seed);
    let q = noise.q();
    let mut values = samples.values().to_vec();
    let mut mask = vec![false; values.len()];
    values
        .par_chunks_mut(n)
        .zip(mask.par_chunks_mut(n))
        .enumerate()
        .for_each(|(s, (row, hit))| {
            let mut rng = stream_rng(&base, s);
            for v in 0..n {
                if q[v] == 0.0 {
                    continue;
                }
                rng.set_word_pos(v as u128 * WORDS_PER_NODE);
                let u: f64 = rng.random();
                if u < q[v] {
                    hit[v] = true;
                    row[v] = rng.random_range(0..k) as u8;
                }
            }
        });
    Ok((SampleMatrix::new(samples.n_samples(), n, k, values)?, mask))
}

/// Empirical joint of every pair: counts divided by `N`.
pub fn empirical_pairwise(samples: &SampleMatrix) -> PairwisePmfSet {
    let n = samples.n();
    let k = samples.k();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let inv = 1.0 / samples.n_samples() as f64;
    let matrices: Vec<Matrix> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut counts = vec![0u64; k * k];
            for s in 0..samples.n_samples() {
                let row = samples.row(s);
                counts[row[i] as usize * k + row[j] as usize] += 1;
            }
            Matrix::from_fn(k, k, |a, b| counts[a * k + b] as f64 * inv)
        })
        .collect();
    PairwisePmfSet::new(
        n,
        k,
        matrices,
        PmfSource::Empirical,
        Some(samples.n_samples() as u64),
    )
    .expect("counts form valid joints")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::model::{build_symmetric_model, Tree};
    use crate::oracle::exact_pairwise_pmf;

    fn star4() -> TreeModel {
        build_symmetric_model(Tree::star(5, 0).unwrap(), 4, &[0.6, 0.5, 0.7, 0.4], None).unwrap()
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let m = star4();
        let a = sample_clean(&m, 500, 9).unwrap();
        let b = sample_clean(&m, 500, 9).unwrap();
        assert_eq!(a, b);
        let short = sample_clean(&m, 200, 9).unwrap();
        assert_eq!(short, a.slice(0, 200));
        assert_ne!(a, sample_clean(&m, 500, 10).unwrap());
    }

    #[test]
    fn thread_count_does_not_matter() {
        let m = star4();
        let a = sample_clean(&m, 2000, 4).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| sample_clean(&m, 2000, 4).unwrap());
        assert_eq!(a, b);
        let noise = NoiseSpec::new(vec![0.2; 5], 0.2).unwrap();
        let na = apply_noise(&a, &noise, 1).unwrap();
        let nb = pool.install(|| apply_noise(&b, &noise, 1).unwrap());
        assert_eq!(na, nb);
    }

    #[test]
    fn zero_noise_is_identity() {
        let m = star4();
        let s = sample_clean(&m, 300, 2).unwrap();
        assert_eq!(apply_noise(&s, &NoiseSpec::noiseless(5), 3).unwrap(), s);
    }

    #[test]
    fn binary_flip_rate_is_half_q() {
        let model = build_symmetric_model(Tree::chain(2).unwrap(), 2, &[0.5], None).unwrap();
        let n = 400_000;
        let s = sample_clean(&model, n, 1).unwrap();
        let noise = NoiseSpec::new(vec![0.3, 0.0], 0.3).unwrap();
        let noisy = apply_noise(&s, &noise, 2).unwrap();
        let flips = (0..n).filter(|&i| s.get(i, 0) != noisy.get(i, 0)).count() as f64 / n as f64;
        let se = (0.15f64 * 0.85 / n as f64).sqrt();
        assert!((flips - 0.15).abs() < 5.0 * se, "flip rate {flips}");
    }

    #[test]
    fn single_sample_joint() {
        let s = sample_clean(&star4(), 1, 0).unwrap();
        let pmfs = empirical_pairwise(&s);
        for m in pmfs.matrices() {
            assert_eq!(m.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(m.sum(), 1.0);
        }
    }

    #[test]
    fn halves_average_to_whole() {
        let s = sample_clean(&star4(), 1000, 5).unwrap();
        let whole = empirical_pairwise(&s);
        let a = empirical_pairwise(&s.slice(0, 500));
        let b = empirical_pairwise(&s.slice(500, 1000));
        for idx in 0..whole.matrices().len() {
            let avg = (&a.matrices()[idx] + &b.matrices()[idx]) * 0.5;
            assert!(linalg::max_abs_diff(&avg, &whole.matrices()[idx]) < 1e-15);
        }
    }

    #[test]
    fn empirical_converges_to_exact() {
        let m = star4();
        let n = 200_000;
        let s = sample_clean(&m, n, 8).unwrap();
        let pmfs = empirical_pairwise(&s);
        let exact = exact_pairwise_pmf(&m, 0, 3).unwrap();
        assert!(linalg::max_abs_diff(&pmfs.get(0, 3), &exact) < 5.0 / (n as f64).sqrt());
    }

    #[test]
    fn rejects_bad_symbols() {
        assert!(SampleMatrix::new(1, 2, 2, vec![0, 2]).is_err());
        assert!(SampleMatrix::new(1, 2, 2, vec![0]).is_err());
    }
}
