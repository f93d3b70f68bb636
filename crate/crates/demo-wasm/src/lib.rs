//! Browser demo: residual curves of the center test, a leaf-identifiability
//! map and an end-to-end recovery run on sampled data.
//!
//! Each export is a thin wrapper over a plain Rust function so the logic is
//! testable off the browser.

use noisytree::evalkit::{chow_liu, score_trial, TrialScore};
use noisytree::experiment::{make_tree, perturbed_leaf_floor, truth_flags, Shape};
use noisytree::metric::{self, DistanceTable};
use noisytree::model::{build_perturbed_symmetric_model, perturbed_edge_distance, PerturbedEdge};
use noisytree::oracle::exact_pairwise_set;
use noisytree::quadtest::{minimize_residual, quad_coefficients};
use noisytree::recovery::find_tree;
use noisytree::sampler::{apply_noise, empirical_pairwise, sample_clean};
use noisytree::{AlgoParams, Error, MatrixQuadratic, NoiseSpec, Tree};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Result<T> = std::result::Result<T, Error>;

/// Quadratic for the triplet of a 3-node chain `0 - 1 - 2` with every node
/// at noise level `q`. `leaf` puts node 0 in the center slot.
fn chain_quadratic(
    k: usize,
    alpha: f64,
    delta: f64,
    q: f64,
    leaf: bool,
) -> Result<MatrixQuadratic> {
    let e = PerturbedEdge {
        alpha,
        delta,
        offset: 1,
    };
    let model = build_perturbed_symmetric_model(Tree::chain(3)?, k, &[e, e])?;
    let noise = NoiseSpec::new(vec![q; 3], q)?;
    let pmfs = exact_pairwise_set(&model, Some(&noise))?;
    quad_coefficients(&pmfs, if leaf { (1, 0, 2) } else { (0, 1, 2) })
}

/// `points` residuals at evenly spaced `x` in `[0, 1]`.
pub fn residual_samples(
    k: usize,
    alpha: f64,
    delta: f64,
    q: f64,
    leaf: bool,
    points: usize,
) -> Result<Vec<f64>> {
    let quad = chain_quadratic(k, alpha, delta, q, leaf)?;
    let step = 1.0 / (points.max(2) - 1) as f64;
    Ok((0..points.max(2))
        .map(|i| quad.residual(i as f64 * step))
        .collect())
}

/// Minimum over `[0, 1]` of the leaf-as-center residual on an
/// `n_alpha x n_delta` grid, row-major by alpha. Invalid cells are NaN.
pub fn leaf_min_residual_grid(
    k: usize,
    q: f64,
    alpha: (f64, f64),
    delta: (f64, f64),
    n_alpha: usize,
    n_delta: usize,
) -> Vec<f64> {
    let at =
        |lo: f64, hi: f64, i: usize, m: usize| lo + (hi - lo) * i as f64 / (m.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(n_alpha * n_delta);
    for i in 0..n_alpha {
        let a = at(alpha.0, alpha.1, i, n_alpha);
        for j in 0..n_delta {
            let d = at(delta.0, delta.1, j, n_delta);
            let r =
                chain_quadratic(k, a, d, q, true).map(|quad| minimize_residual(&quad, 0.0, 1.0).1);
            out.push(r.unwrap_or(f64::NAN));
        }
    }
    out
}

#[derive(Debug, Serialize)]
pub struct RecoveryReport {
    pub truth: Vec<(usize, usize)>,
    pub ours: Option<Vec<(usize, usize)>>,
    pub ours_error: Option<String>,
    pub chow_liu: Vec<(usize, usize)>,
    pub ours_score: Option<Score>,
    pub chow_liu_score: Score,
    pub noise: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Score {
    pub exact: bool,
    pub eq_class: bool,
}

impl From<TrialScore> for Score {
    fn from(s: TrialScore) -> Self {
        Score {
            exact: s.exact,
            eq_class: s.eq_class,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DemoSetup {
    pub shape: Shape,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub delta: f64,
    pub q_max: f64,
    pub samples: usize,
    pub seed: u64,
}

pub fn run_recovery(s: &DemoSetup) -> Result<RecoveryReport> {
    if s.samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let tree = make_tree(s.shape, s.n, &mut rng)?;
    let edge = PerturbedEdge {
        alpha: s.alpha,
        delta: s.delta,
        offset: 1,
    };
    let model = build_perturbed_symmetric_model(tree, s.k, &vec![edge; s.n - 1])?;
    let noise = NoiseSpec::uniform(s.n, s.q_max, &mut rng)?;
    let clean = sample_clean(&model, s.samples, s.seed ^ 1)?;
    let pmfs = empirical_pairwise(&apply_noise(&clean, &noise, s.seed ^ 2)?);

    let d_min = perturbed_edge_distance(s.k, s.alpha, s.delta, 1);
    let p_min = 1.0 / s.k as f64;
    let eta = metric::eta_max(s.k, s.q_max, p_min).unwrap_or(0.0);
    let est = metric::estimate_bounds(
        &DistanceTable::from_pmfs(&pmfs),
        eta,
        s.q_max,
        &pmfs.marginals(),
    );
    let mut params = AlgoParams::new(
        d_min,
        est.d_max_upper.max(d_min * (1.0 + 1e-9)),
        s.q_max,
        p_min,
    );
    params.seed = s.seed;

    let flags = truth_flags(&model, &noise)?;
    let truth = model.tree();
    let ours = find_tree(&pmfs, &params).and_then(|r| r.tree());
    let cl = chow_liu(&pmfs);
    Ok(RecoveryReport {
        truth: truth.sorted_edges(),
        ours_score: ours
            .as_ref()
            .ok()
            .map(|t| score_trial(truth, &flags, t).into()),
        ours: ours.as_ref().ok().map(|t| t.sorted_edges()),
        ours_error: ours.err().map(|e| e.to_string()),
        chow_liu_score: score_trial(truth, &flags, &cl).into(),
        chow_liu: cl.sorted_edges(),
        noise: noise.q().to_vec(),
    })
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Residual of the center test along `x`, then the perturbed-leaf floor as
/// the last element.
#[wasm_bindgen]
pub fn residual_curve(
    k: usize,
    alpha: f64,
    delta: f64,
    q: f64,
    leaf: bool,
    points: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    let mut v = residual_samples(k, alpha, delta, q, leaf, points).map_err(js)?;
    v.push(if leaf {
        perturbed_leaf_floor(k, alpha, delta, q)
    } else {
        0.0
    });
    Ok(v)
}

#[wasm_bindgen]
pub fn identifiability_map(k: usize, q: f64, n_alpha: usize, n_delta: usize) -> Vec<f64> {
    leaf_min_residual_grid(k, q, (0.3, 0.9), (0.0, 0.15), n_alpha, n_delta)
}

/// JSON report of one sampled recovery. `shape` is `star`, `chain` or `random`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn recover_demo(
    shape: &str,
    n: usize,
    k: usize,
    alpha: f64,
    delta: f64,
    q_max: f64,
    samples: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    let shape = match shape {
        "star" => Shape::Star,
        "chain" => Shape::Chain,
        "random" => Shape::Random,
        other => return Err(JsError::new(&format!("unknown shape {other}"))),
    };
    let setup = DemoSetup {
        shape,
        n,
        k,
        alpha,
        delta,
        q_max,
        samples,
        seed: seed as u64,
    };
    let report = run_recovery(&setup).map_err(js)?;
    serde_json::to_string(&report).map_err(|e| JsError::new(&e.to_string()))
}
