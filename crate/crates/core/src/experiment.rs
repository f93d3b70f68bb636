//! Monte-Carlo sweeps of recovery accuracy and the identifiability grid.
//!
//! A sweep expands a [`SweepConfig`] into settings, runs `trials` independent
//! trials per setting and scores our recovery and Chow-Liu at every sample
//! size. Each trial draws one sample of the largest size and uses its
//! prefixes for the smaller sizes, so curves across `N` share randomness.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::{chow_liu, score_trial, TrialScore};
use crate::metric::{self, DistanceTable};
use crate::model::{
    alpha_for_distance, build_perturbed_symmetric_model, perturbed_edge_distance, AlgoParams,
    NoiseSpec, PerturbedEdge, Tree, TreeModel,
};
use crate::oracle::{exact_pairwise_set, PairwisePmfSet};
use crate::quadtest::{self, RootPolicy};
use crate::recovery::{expand_equivalence_class, find_tree, ClusterFlags, RecoveredStructure};
use crate::sampler::{apply_noise, empirical_pairwise, sample_clean};

/// Truth flags use this residual gap on exact noisy joints.
const TRUTH_T0: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Symmetric,
    Perturbed,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Chain,
    Star,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseRule {
    /// `q_max` on odd nodes, 0 on even nodes.
    Alternate,
    /// `q_i ~ U[0, q_max]`.
    Uniform,
}

/// How a configured edge distance `d` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceReading {
    /// The edge distance is `exp(-d)`.
    ExpNeg,
    /// The edge distance is `d`.
    Direct,
}

impl DistanceReading {
    pub fn edge_distance(self, d: f64) -> f64 {
        match self {
            DistanceReading::ExpNeg => (-d).exp(),
            DistanceReading::Direct => d,
        }
    }
}

/// Model grid. `alpha`, when nonempty, replaces the `distance` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelGrid {
    pub family: Family,
    #[serde(default = "default_shapes")]
    pub shape: Vec<Shape>,
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub k: usize,
    #[serde(default)]
    pub distance: Vec<f64>,
    #[serde(default = "default_reading")]
    pub distance_reading: DistanceReading,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: Vec<f64>,
    #[serde(default = "default_offset")]
    pub offset: usize,
    /// Model file for `family = "file"`.
    #[serde(default)]
    pub file: Option<String>,
}

fn default_shapes() -> Vec<Shape> {
    vec![Shape::Chain]
}
fn default_reading() -> DistanceReading {
    DistanceReading::ExpNeg
}
fn default_delta() -> Vec<f64> {
    vec![0.0]
}
fn default_offset() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseGrid {
    pub rule: NoiseRule,
    pub q_max: Vec<f64>,
}

/// What the algorithm is told. Absent bounds are filled per trial:
/// `d_min` with the true edge distance, `d_max` with the data-driven
/// estimate, `p_min` with `1/k`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoConfig {
    pub d_min: Option<f64>,
    pub d_max: Option<f64>,
    pub p_min: Option<f64>,
    pub t0: Option<f64>,
    pub threshold_scale: Option<f64>,
    #[serde(default)]
    pub random_init: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub seed: u64,
    pub trials: usize,
    #[serde(default)]
    pub sample_sizes: Vec<usize>,
    /// Run on exact noisy joints instead of samples.
    #[serde(default)]
    pub exact_pmf: bool,
    pub model: ModelGrid,
    pub noise: NoiseGrid,
    #[serde(default)]
    pub algo: AlgoConfig,
}

/// One grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub id: String,
    pub shape: Shape,
    /// Edge strength as `(alpha, delta)`; `None` for file models.
    pub edge: Option<(f64, f64)>,
    pub edge_distance: f64,
    pub q_max: f64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if !self.exact_pmf && self.sample_sizes.is_empty() {
            return bad("sample_sizes is empty");
        }
        if self.sample_sizes.contains(&0) {
            return bad("sample sizes must be positive");
        }
        if self.noise.q_max.is_empty() {
            return bad("noise.q_max is empty");
        }
        let m = &self.model;
        match m.family {
            Family::File => {
                if m.file.is_none() {
                    return bad("model.file is required for family = \"file\"");
                }
            }
            _ => {
                if m.shape.is_empty() || m.delta.is_empty() {
                    return bad("model grids must be nonempty");
                }
                if m.distance.is_empty() && m.alpha.is_empty() {
                    return bad("either model.distance or model.alpha must be nonempty");
                }
                if m.n < 2 || m.k < 2 {
                    return bad("model.n and model.k must be at least 2");
                }
                if m.family == Family::Symmetric && m.delta.iter().any(|&d| d != 0.0) {
                    return bad("symmetric family takes delta = 0 only");
                }
            }
        }
        Ok(())
    }

    /// Expands the grids in the order shape, strength, delta, q_max.
    pub fn settings(&self) -> Result<Vec<Setting>> {
        self.validate()?;
        let m = &self.model;
        let mut out = Vec::new();
        if m.family == Family::File {
            for &q in &self.noise.q_max {
                out.push(Setting {
                    id: format!("file_q{q}"),
                    shape: Shape::Random,
                    edge: None,
                    edge_distance: f64::NAN,
                    q_max: q,
                });
            }
            return Ok(out);
        }
        for &shape in &m.shape {
            let strengths: Vec<(String, Option<f64>, Option<f64>)> = if m.alpha.is_empty() {
                m.distance
                    .iter()
                    .map(|&d| {
                        (
                            format!("d{d}"),
                            None,
                            Some(m.distance_reading.edge_distance(d)),
                        )
                    })
                    .collect()
            } else {
                m.alpha
                    .iter()
                    .map(|&a| (format!("a{a}"), Some(a), None))
                    .collect()
            };
            for (label, alpha, dist) in &strengths {
                for &delta in &m.delta {
                    let (alpha, edge_distance) = match (alpha, dist) {
                        (Some(a), _) => (*a, perturbed_edge_distance(m.k, *a, delta, m.offset)),
                        (None, Some(d)) => (alpha_for_distance(m.k, delta, m.offset, *d)?, *d),
                        _ => unreachable!(),
                    };
                    for &q in &self.noise.q_max {
                        out.push(Setting {
                            id: format!("{}_{label}_delta{delta}_q{q}", shape_name(shape)),
                            shape,
                            edge: Some((alpha, delta)),
                            edge_distance,
                            q_max: q,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn shape_name(s: Shape) -> &'static str {
    match s {
        Shape::Chain => "chain",
        Shape::Star => "star",
        Shape::Random => "random",
    }
}

pub fn make_tree<R: Rng + ?Sized>(shape: Shape, n: usize, rng: &mut R) -> Result<Tree> {
    match shape {
        Shape::Chain => Tree::chain(n),
        Shape::Star => Tree::star(n, 0),
        Shape::Random => Tree::random(n, rng),
    }
}

pub fn make_noise<R: Rng + ?Sized>(
    rule: NoiseRule,
    n: usize,
    q_max: f64,
    rng: &mut R,
) -> Result<NoiseSpec> {
    match rule {
        NoiseRule::Alternate => NoiseSpec::alternate(n, q_max),
        NoiseRule::Uniform => NoiseSpec::uniform(n, q_max, rng),
    }
}

/// Deterministic 64-bit mixing (SplitMix64 finalizer).
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Ground truth drawn for one trial.
#[derive(Debug, Clone)]
pub struct TrialTruth {
    pub model: TreeModel,
    pub noise: NoiseSpec,
    pub flags: Vec<ClusterFlags>,
    pub d_min: f64,
}

/// Flags of the truth: members of each true leaf cluster whose center test
/// passes on exact noisy joints.
pub fn truth_flags(model: &TreeModel, noise: &NoiseSpec) -> Result<Vec<ClusterFlags>> {
    let pmfs = exact_pairwise_set(model, Some(noise))?;
    let dist = DistanceTable::from_pmfs(&pmfs);
    let tree = model.tree();
    let structure = RecoveredStructure {
        n: tree.n(),
        edges: tree.edges().to_vec(),
        parents: Vec::new(),
        leaf_cluster_flags: Vec::new(),
    };
    Ok(expand_equivalence_class(&structure, &pmfs, &dist, TRUTH_T0)?.leaf_cluster_flags)
}

fn min_edge_distance(model: &TreeModel) -> Result<f64> {
    let pmfs = exact_pairwise_set(model, None)?;
    let dist = DistanceTable::from_pmfs(&pmfs);
    Ok(model
        .tree()
        .edges()
        .iter()
        .map(|&(a, b)| dist.d(a, b))
        .fold(f64::INFINITY, f64::min))
}

pub fn draw_truth(
    cfg: &SweepConfig,
    setting: &Setting,
    file_model: Option<&TreeModel>,
    rng: &mut ChaCha8Rng,
) -> Result<TrialTruth> {
    let model = match (setting.edge, file_model) {
        (Some((alpha, delta)), _) => {
            let tree = make_tree(setting.shape, cfg.model.n, rng)?;
            let edges = vec![
                PerturbedEdge {
                    alpha,
                    delta,
                    offset: cfg.model.offset,
                };
                tree.edges().len()
            ];
            build_perturbed_symmetric_model(tree, cfg.model.k, &edges)?
        }
        (None, Some(m)) => m.clone(),
        (None, None) => return Err(Error::InvalidParameter("file model missing".into())),
    };
    let noise = make_noise(cfg.noise.rule, model.n(), setting.q_max, rng)?;
    let flags = truth_flags(&model, &noise)?;
    let d_min = if setting.edge_distance.is_finite() {
        setting.edge_distance
    } else {
        min_edge_distance(&model)?
    };
    Ok(TrialTruth {
        model,
        noise,
        flags,
        d_min,
    })
}

/// Parameters handed to the algorithm for one dataset.
pub fn algo_params(
    cfg: &SweepConfig,
    k: usize,
    q_max: f64,
    d_min: f64,
    pmfs: &PairwisePmfSet,
    seed: u64,
) -> AlgoParams {
    let a = &cfg.algo;
    let d_min = a.d_min.unwrap_or(d_min);
    let p_min = a.p_min.unwrap_or(1.0 / k as f64);
    let d_max = a.d_max.unwrap_or_else(|| {
        let dist = DistanceTable::from_pmfs(pmfs);
        let eta = metric::eta_max(k, q_max, p_min).unwrap_or(0.0);
        let est = metric::estimate_bounds(&dist, eta, q_max, &pmfs.marginals()).d_max_upper;
        // The estimate can dip below d_min under sampling noise.
        est.max(d_min * (1.0 + 1e-9))
    });
    let mut p = AlgoParams::new(d_min, d_max, q_max, p_min);
    p.t0 = a.t0;
    p.threshold_scale = a.threshold_scale.unwrap_or(1.0);
    p.random_init = a.random_init;
    p.seed = seed;
    p
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub setting: String,
    pub trial: usize,
    pub algorithm: &'static str,
    pub n_samples: usize,
    pub exact: bool,
    pub eq_class: bool,
    pub in_t_sub: bool,
    pub failed: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub setting: String,
    pub n_samples: usize,
    pub algorithm: &'static str,
    pub trials: usize,
    pub fraction_exact: f64,
    pub fraction_eq_class: f64,
    pub fraction_in_t_sub: f64,
    pub failures: usize,
}

pub const OURS: &str = "ours";
pub const CHOW_LIU: &str = "chow-liu";

fn score_or_fail(
    setting: &str,
    trial: usize,
    algorithm: &'static str,
    n_samples: usize,
    truth: &TrialTruth,
    run: impl FnOnce() -> Result<Tree>,
) -> TrialRecord {
    let start = Instant::now();
    let out = run();
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let (score, failed) = match out {
        Ok(t) => (score_trial(truth.model.tree(), &truth.flags, &t), false),
        Err(_) => (
            TrialScore {
                exact: false,
                eq_class: false,
                in_t_sub: false,
            },
            true,
        ),
    };
    TrialRecord {
        setting: setting.to_string(),
        trial,
        algorithm,
        n_samples,
        exact: score.exact,
        eq_class: score.eq_class,
        in_t_sub: score.in_t_sub,
        failed,
        wall_ms,
    }
}

fn run_trial(
    cfg: &SweepConfig,
    setting_idx: usize,
    setting: &Setting,
    file_model: Option<&TreeModel>,
    trial: usize,
) -> Result<Vec<TrialRecord>> {
    let trial_seed = mix_seed(&[cfg.seed, setting_idx as u64, trial as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let truth = draw_truth(cfg, setting, file_model, &mut rng)?;
    let k = truth.model.k();
    let mut records = Vec::new();
    let evaluate = |pmfs: &PairwisePmfSet, n_samples: usize, records: &mut Vec<TrialRecord>| {
        let params = algo_params(cfg, k, setting.q_max, truth.d_min, pmfs, trial_seed);
        records.push(score_or_fail(
            &setting.id,
            trial,
            OURS,
            n_samples,
            &truth,
            || find_tree(pmfs, &params)?.tree(),
        ));
        records.push(score_or_fail(
            &setting.id,
            trial,
            CHOW_LIU,
            n_samples,
            &truth,
            || Ok(chow_liu(pmfs)),
        ));
    };
    if cfg.exact_pmf {
        let pmfs = exact_pairwise_set(&truth.model, Some(&truth.noise))?;
        evaluate(&pmfs, 0, &mut records);
    } else {
        let n_max = *cfg.sample_sizes.iter().max().unwrap();
        let clean = sample_clean(&truth.model, n_max, mix_seed(&[trial_seed, 1]))?;
        let noisy = apply_noise(&clean, &truth.noise, mix_seed(&[trial_seed, 2]))?;
        for &n in &cfg.sample_sizes {
            let pmfs = empirical_pairwise(&noisy.slice(0, n));
            evaluate(&pmfs, n, &mut records);
        }
    }
    Ok(records)
}

/// Per-trial records, sorted by setting order, trial, sample size, algorithm.
pub fn run_sweep(cfg: &SweepConfig, file_model: Option<&TreeModel>) -> Result<Vec<TrialRecord>> {
    let settings = cfg.settings()?;
    let jobs: Vec<(usize, usize)> = (0..settings.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    let results: Vec<Result<Vec<TrialRecord>>> = jobs
        .par_iter()
        .map(|&(s, t)| run_trial(cfg, s, &settings[s], file_model, t))
        .collect();
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Aggregates per-trial records into one row per (setting, N, algorithm),
/// keeping first-seen order.
pub fn aggregate(records: &[TrialRecord]) -> Vec<SweepRow> {
    let mut keys: Vec<(String, usize, &'static str)> = Vec::new();
    for r in records {
        let key = (r.setting.clone(), r.n_samples, r.algorithm);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.sort_by(|a, b| {
        let pos =
            |k: &(String, usize, &str)| records.iter().position(|r| r.setting == k.0).unwrap();
        pos(a)
            .cmp(&pos(b))
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(b.2).reverse())
    });
    keys.into_iter()
        .map(|(setting, n_samples, algorithm)| {
            let rows: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| {
                    r.setting == setting && r.n_samples == n_samples && r.algorithm == algorithm
                })
                .collect();
            let frac = |f: &dyn Fn(&TrialRecord) -> bool| {
                rows.iter().filter(|r| f(r)).count() as f64 / rows.len() as f64
            };
            SweepRow {
                fraction_exact: frac(&|r| r.exact),
                fraction_eq_class: frac(&|r| r.eq_class),
                fraction_in_t_sub: frac(&|r| r.in_t_sub),
                failures: rows.iter().filter(|r| r.failed).count(),
                trials: rows.len(),
                setting,
                n_samples,
                algorithm,
            }
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(
        w,
        "setting,N,fraction_exact,fraction_eq_class,algorithm,fraction_in_t_sub,trials,failures"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.setting,
            r.n_samples,
            r.fraction_exact,
            r.fraction_eq_class,
            r.algorithm,
            r.fraction_in_t_sub,
            r.trials,
            r.failures
        )?;
    }
    Ok(())
}

/// `wall_ms` is the only column that differs between identical runs.
pub fn write_trials_csv<W: Write>(records: &[TrialRecord], mut w: W) -> Result<()> {
    writeln!(
        w,
        "setting,trial,algorithm,N,exact,eq_class,in_t_sub,failed,wall_ms"
    )?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{:.3}",
            r.setting,
            r.trial,
            r.algorithm,
            r.n_samples,
            r.exact,
            r.eq_class,
            r.in_t_sub,
            r.failed,
            r.wall_ms
        )?;
    }
    Ok(())
}

/// Identifiability grid on a 3-node chain `0 - 1 - 2` with every node at
/// noise level `q`; node 0 is the leaf, node 1 the true center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifiabilityConfig {
    pub k: Vec<usize>,
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
    pub q: Vec<f64>,
    #[serde(default = "default_offset")]
    pub offset: usize,
    /// Upper end of the root search interval.
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    /// Minimum residuals below this count as a root.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_x_max() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiabilityRow {
    pub k: usize,
    pub alpha: f64,
    pub delta: f64,
    pub q: f64,
    pub center_role: &'static str,
    pub mean_root: f64,
    pub residual: f64,
    pub min_residual: f64,
    pub argmin: f64,
    /// Closed-form floor of the leaf residual for perturbed models, `k >= 4`.
    pub lower_bound: f64,
    pub feasible: bool,
}

/// `|e| sqrt(2(k-3) / (k(k-1)))` with `e = delta'(alpha' - delta')` and the
/// primes scaled by `1 - q_leaf`; zero for `k < 4`.
pub fn perturbed_leaf_floor(k: usize, alpha: f64, delta: f64, q_leaf: f64) -> f64 {
    if k < 4 {
        return 0.0;
    }
    let s = 1.0 - q_leaf;
    let e = s * delta * (s * alpha - s * delta);
    let kf = k as f64;
    e.abs() * (2.0 * (kf - 3.0) / (kf * (kf - 1.0))).sqrt()
}

pub fn identifiability_point(
    k: usize,
    alpha: f64,
    delta: f64,
    q: f64,
    offset: usize,
    x_max: f64,
    tol: f64,
) -> Result<[IdentifiabilityRow; 2]> {
    let edge = PerturbedEdge {
        alpha,
        delta,
        offset,
    };
    let model = build_perturbed_symmetric_model(Tree::chain(3)?, k, &[edge, edge])?;
    let noise = NoiseSpec::new(vec![q; 3], q.max(0.0))?;
    let pmfs = exact_pairwise_set(&model, Some(&noise))?;
    let policy = RootPolicy {
        q_max: x_max,
        t0: None,
        root_tol: tol,
    };
    let row = |role: &'static str, triplet: (usize, usize, usize)| -> Result<IdentifiabilityRow> {
        let quad = quadtest::quad_coefficients(&pmfs, triplet)?;
        let r = quadtest::root_result(&quad, triplet.1, &policy);
        let (argmin, min_residual) = quadtest::minimize_residual(&quad, 0.0, x_max);
        Ok(IdentifiabilityRow {
            k,
            alpha,
            delta,
            q,
            center_role: role,
            mean_root: r.mean_root,
            residual: r.residual,
            min_residual,
            argmin,
            lower_bound: if role == "leaf" {
                perturbed_leaf_floor(k, alpha, delta, q)
            } else {
                0.0
            },
            feasible: min_residual.min(r.residual) < tol,
        })
    };
    Ok([row("leaf", (1, 0, 2))?, row("middle", (0, 1, 2))?])
}

pub fn run_identifiability(cfg: &IdentifiabilityConfig) -> Result<Vec<IdentifiabilityRow>> {
    if cfg.k.is_empty() || cfg.alpha.is_empty() || cfg.delta.is_empty() || cfg.q.is_empty() {
        return Err(Error::InvalidParameter(
            "identifiability grids must be nonempty".into(),
        ));
    }
    let mut points = Vec::new();
    for &k in &cfg.k {
        for &alpha in &cfg.alpha {
            for &delta in &cfg.delta {
                for &q in &cfg.q {
                    points.push((k, alpha, delta, q));
                }
            }
        }
    }
    let rows: Vec<Result<[IdentifiabilityRow; 2]>> = points
        .par_iter()
        .map(|&(k, a, d, q)| identifiability_point(k, a, d, q, cfg.offset, cfg.x_max, cfg.tol))
        .collect();
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

pub fn write_identifiability_csv<W: Write>(rows: &[IdentifiabilityRow], mut w: W) -> Result<()> {
    writeln!(
        w,
        "k,alpha,delta,q,center_role,mean_root,residual,feasible,min_residual,argmin,lower_bound"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.alpha,
            r.delta,
            r.q,
            r.center_role,
            r.mean_root,
            r.residual,
            r.feasible,
            r.min_residual,
            r.argmin,
            r.lower_bound
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SweepConfig {
        SweepConfig {
            seed: 3,
            trials: 4,
            sample_sizes: vec![500, 2000],
            exact_pmf: false,
            model: ModelGrid {
                family: Family::Perturbed,
                shape: vec![Shape::Star, Shape::Chain],
                n: 5,
                k: 4,
                distance: vec![0.7],
                distance_reading: DistanceReading::ExpNeg,
                alpha: vec![],
                delta: vec![0.0, 0.04],
                offset: 1,
                file: None,
            },
            noise: NoiseGrid {
                rule: NoiseRule::Uniform,
                q_max: vec![0.2],
            },
            algo: AlgoConfig::default(),
        }
    }

    #[test]
    fn settings_expand_in_order() {
        let s = small_cfg().settings().unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[0].id, "star_d0.7_delta0_q0.2");
        assert_eq!(s[3].id, "chain_d0.7_delta0.04_q0.2");
        for x in &s {
            assert!((x.edge_distance - (-0.7f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_trials_rejected() {
        let mut c = small_cfg();
        c.trials = 0;
        assert!(c.settings().is_err());
    }

    #[test]
    fn sweep_is_reproducible() {
        let c = small_cfg();
        let a = run_sweep(&c, None).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| run_sweep(&c, None).unwrap());
        let strip = |v: &[TrialRecord]| {
            v.iter()
                .map(|r| TrialRecord {
                    wall_ms: 0.0,
                    ..r.clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        let rows = aggregate(&a);
        assert_eq!(rows.len(), 4 * 2 * 2);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_sweep_csv(&rows, &mut buf_a).unwrap();
        write_sweep_csv(&aggregate(&b), &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn exact_mode_recovers_in_class() {
        let mut c = small_cfg();
        c.exact_pmf = true;
        let rows = aggregate(&run_sweep(&c, None).unwrap());
        for r in rows.iter().filter(|r| r.algorithm == OURS) {
            assert_eq!(r.fraction_eq_class, 1.0, "{}", r.setting);
        }
    }

    #[test]
    fn identifiability_rows() {
        let [leaf, middle] = identifiability_point(3, 0.6, 0.0, 0.1, 1, 1.0, 1e-8).unwrap();
        assert!(leaf.feasible && middle.feasible);
        assert!((leaf.mean_root - (1.0 - 0.9 * 0.6)).abs() < 1e-9);
        assert!((middle.mean_root - 0.1).abs() < 1e-9);
        let [leaf, _] = identifiability_point(5, 0.6, 0.1, 0.1, 1, 1.0, 1e-8).unwrap();
        assert!(!leaf.feasible);
        assert!(leaf.min_residual >= leaf.lower_bound - 1e-9);
    }
}
