//! Ground-truth tree models, the symmetric and perturbed-symmetric families,
//! noise specifications and algorithm parameters.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, MAX_SUPPORT, SINGULAR_DET};

const STOCHASTIC_TOL: f64 = 1e-12;

/// An undirected tree on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tree {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Tree {
    /// Validates `edges` as a spanning tree on `n >= 2` nodes. Each edge is
    /// stored as `(min, max)`; the input order is kept.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidTree(format!(
                "need at least 2 nodes, got {n}"
            )));
        }
        if edges.len() != n - 1 {
            return Err(Error::InvalidTree(format!(
                "{} edges for {n} nodes",
                edges.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidTree(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::InvalidTree(format!("self-loop at {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::InvalidTree(format!("duplicate edge {e:?}")));
            }
            normalized.push(e);
        }
        let tree = Tree {
            n,
            edges: normalized,
        };
        // n - 1 distinct edges plus connectivity implies acyclic.
        let reach = tree.bfs_order(0);
        if reach.len() != n {
            return Err(Error::InvalidTree("graph is not connected".into()));
        }
        Ok(tree)
    }

    pub fn chain(n: usize) -> Result<Self> {
        Tree::new(n, (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect())
    }

    pub fn star(n: usize, hub: usize) -> Result<Self> {
        Tree::new(n, (0..n).filter(|&i| i != hub).map(|i| (hub, i)).collect())
    }

    /// Decodes a Prüfer sequence of length `n - 2` with entries in `0..n`.
    pub fn from_prufer(seq: &[usize]) -> Result<Self> {
        let n = seq.len() + 2;
        if seq.iter().any(|&v| v >= n) {
            return Err(Error::InvalidTree("Prüfer entry out of range".into()));
        }
        let mut degree = vec![1usize; n];
        for &v in seq {
            degree[v] += 1;
        }
        let mut edges = Vec::with_capacity(n - 1);
        for &v in seq {
            let leaf = (0..n)
                .find(|&u| degree[u] == 1)
                .expect("a leaf always exists");
            edges.push((leaf, v));
            degree[leaf] -= 1;
            degree[v] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
        edges.push((rest[0], rest[1]));
        Tree::new(n, edges)
    }

    /// Uniformly random labeled tree.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        if n == 2 {
            return Tree::new(2, vec![(0, 1)]);
        }
        let seq: Vec<usize> = (0..n.saturating_sub(2))
            .map(|_| rng.random_range(0..n))
            .collect();
        Tree::from_prufer(&seq)
    }

    /// Every labeled tree on `n` nodes (n^(n-2) of them).
    pub fn enumerate(n: usize) -> Vec<Tree> {
        if n == 2 {
            return vec![Tree::new(2, vec![(0, 1)]).unwrap()];
        }
        let len = n - 2;
        let total = n.pow(len as u32);
        let mut out = Vec::with_capacity(total);
        let mut seq = vec![0usize; len];
        for mut code in 0..total {
            for slot in seq.iter_mut() {
                *slot = code % n;
                code /= n;
            }
            out.push(Tree::from_prufer(&seq).unwrap());
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Edges sorted lexicographically, for comparisons.
    pub fn sorted_edges(&self) -> Vec<(usize, usize)> {
        let mut e = self.edges.clone();
        e.sort_unstable();
        e
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }
        adj
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let e = (a.min(b), a.max(b));
        self.edges.contains(&e)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == v || b == v)
            .count()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.n).filter(|&v| self.degree(v) == 1).collect()
    }

    /// Breadth-first order from `root`.
    pub fn bfs_order(&self, root: usize) -> Vec<usize> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut order = Vec::with_capacity(self.n);
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        order
    }

    /// Parent pointers when the tree is rooted at `root`.
    pub fn parents_from(&self, root: usize) -> Vec<Option<usize>> {
        let adj = self.adjacency();
        let mut parent = vec![None; self.n];
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        parent
    }

    /// The unique path from `from` to `to`, both endpoints included.
    pub fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let parent = self.parents_from(to);
        let mut path = vec![from];
        let mut cur = from;
        while let Some(p) = parent[cur] {
            path.push(p);
            cur = p;
        }
        path
    }

    /// Hop distance between every pair.
    pub fn hop_distances(&self) -> Vec<Vec<usize>> {
        (0..self.n)
            .map(|s| {
                let adj = self.adjacency();
                let mut dist = vec![usize::MAX; self.n];
                dist[s] = 0;
                let mut queue = VecDeque::from([s]);
                while let Some(u) = queue.pop_front() {
                    for &v in &adj[u] {
                        if dist[v] == usize::MAX {
                            dist[v] = dist[u] + 1;
                            queue.push_back(v);
                        }
                    }
                }
                dist
            })
            .collect()
    }

    /// Applies a node relabeling `perm[old] = new`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Tree> {
        Tree::new(
            self.n,
            self.edges
                .iter()
                .map(|&(a, b)| (perm[a], perm[b]))
                .collect(),
        )
    }
}

/// A rooted tree model: root marginal plus one conditional per edge, directed
/// away from the root. `conditional(c)[(i, j)] = P(X_c = s_i | X_parent = s_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    tree: Tree,
    k: usize,
    root: usize,
    root_marginal: Vec<f64>,
    parent: Vec<Option<usize>>,
    conditionals: Vec<Option<Matrix>>,
    order: Vec<usize>,
}

impl TreeModel {
    /// `conditionals[c]` must be `Some` for every non-root node `c`.
    pub fn new(
        tree: Tree,
        k: usize,
        root: usize,
        root_marginal: Vec<f64>,
        conditionals: Vec<Option<Matrix>>,
    ) -> Result<Self> {
        if !(2..=MAX_SUPPORT).contains(&k) {
            return Err(Error::InvalidModel(format!(
                "support size {k} outside 2..={MAX_SUPPORT}"
            )));
        }
        let n = tree.n();
        if root >= n {
            return Err(Error::InvalidModel(format!("root {root} out of range")));
        }
        check_distribution(&root_marginal, k)
            .map_err(|m| Error::InvalidModel(format!("root marginal: {m}")))?;
        if conditionals.len() != n {
            return Err(Error::InvalidModel(
                "one conditional slot per node required".into(),
            ));
        }
        let parent = tree.parents_from(root);
        for c in 0..n {
            match (&parent[c], &conditionals[c]) {
                (None, None) => {}
                (None, Some(_)) => {
                    return Err(Error::InvalidModel(
                        "root must not carry a conditional".into(),
                    ))
                }
                (Some(p), None) => {
                    return Err(Error::InvalidModel(format!(
                        "missing conditional for edge {p}->{c}"
                    )))
                }
                (Some(p), Some(m)) => check_conditional(m, k)
                    .map_err(|msg| Error::InvalidModel(format!("edge {p}->{c}: {msg}")))?,
            }
        }
        let order = tree.bfs_order(root);
        Ok(TreeModel {
            tree,
            k,
            root,
            root_marginal,
            parent,
            conditionals,
            order,
        })
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn n(&self) -> usize {
        self.tree.n()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn root_marginal(&self) -> &[f64] {
        &self.root_marginal
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    /// Conditional of `child` given its parent; `None` for the root.
    pub fn conditional(&self, child: usize) -> Option<&Matrix> {
        self.conditionals[child].as_ref()
    }

    /// Nodes in breadth-first order from the root.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

fn check_distribution(p: &[f64], k: usize) -> std::result::Result<(), String> {
    if p.len() != k {
        return Err(format!("length {} != {k}", p.len()));
    }
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err("negative or non-finite entry".into());
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(format!("sums to {s}"));
    }
    Ok(())
}

fn check_conditional(m: &Matrix, k: usize) -> std::result::Result<(), String> {
    if m.nrows() != k || m.ncols() != k {
        return Err(format!("shape {}x{} != {k}x{k}", m.nrows(), m.ncols()));
    }
    if m.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err("negative or non-finite entry".into());
    }
    for (j, s) in linalg::col_sums(m).into_iter().enumerate() {
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(format!("column {j} sums to {s}"));
        }
    }
    if linalg::det(m).abs() <= SINGULAR_DET {
        return Err("singular conditional".into());
    }
    Ok(())
}

/// `alpha I + (1 - alpha) O / k`.
pub fn symmetric_conditional(k: usize, alpha: f64) -> Matrix {
    linalg::identity(k) * alpha + linalg::ones(k) * ((1.0 - alpha) / k as f64)
}

/// `(alpha - delta) I + (1 - alpha) O / k + Delta`, where `Delta` holds `delta`
/// at 1-indexed positions `(i, ((i - 1 + c) mod k) + 1)`, i.e. 0-indexed
/// `(i, (i + c) mod k)`.
pub fn perturbed_conditional(k: usize, alpha: f64, delta: f64, offset: usize) -> Matrix {
    let mut m =
        linalg::identity(k) * (alpha - delta) + linalg::ones(k) * ((1.0 - alpha) / k as f64);
    for i in 0..k {
        m[(i, (i + offset) % k)] += delta;
    }
    m
}

/// Per-edge parameters of a perturbed symmetric edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedEdge {
    pub alpha: f64,
    pub delta: f64,
    pub offset: usize,
}

/// Optional `(d_min, d_max)` check on symmetric edge strengths:
/// `exp(-d_max/(k-1)) < alpha < exp(-d_min/(k-1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceBounds {
    pub d_min: f64,
    pub d_max: f64,
}

/// Symmetric model, uniform root marginal at node 0. `alphas` follows
/// `tree.edges()` order.
pub fn build_symmetric_model(
    tree: Tree,
    k: usize,
    alphas: &[f64],
    bounds: Option<DistanceBounds>,
) -> Result<TreeModel> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k = {k} < 2")));
    }
    if alphas.len() != tree.edges().len() {
        return Err(Error::InvalidParameter(
            "one alpha per edge required".into(),
        ));
    }
    for &a in alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {a} outside (0, 1)")));
        }
        if let Some(b) = bounds {
            let km1 = (k - 1) as f64;
            let lo = (-b.d_max / km1).exp();
            let hi = (-b.d_min / km1).exp();
            if !(a > lo && a < hi) {
                return Err(Error::InvalidParameter(format!(
                    "alpha {a} outside ({lo}, {hi}) implied by the distance bounds"
                )));
            }
        }
    }
    let mats = alphas
        .iter()
        .map(|&a| symmetric_conditional(k, a))
        .collect();
    assemble_uniform_root(tree, k, mats)
}

/// Perturbed symmetric model, uniform root marginal at node 0.
pub fn build_perturbed_symmetric_model(
    tree: Tree,
    k: usize,
    edges: &[PerturbedEdge],
) -> Result<TreeModel> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k = {k} < 2")));
    }
    if edges.len() != tree.edges().len() {
        return Err(Error::InvalidParameter(
            "one parameter set per edge required".into(),
        ));
    }
    let mut mats = Vec::with_capacity(edges.len());
    for e in edges {
        if !(e.alpha > 0.0 && e.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha {} outside (0, 1)",
                e.alpha
            )));
        }
        if e.offset == 0 || e.offset >= k {
            return Err(Error::InvalidParameter(format!(
                "offset {} outside 0 < c < {k}",
                e.offset
            )));
        }
        if e.delta != 0.0 && e.alpha == e.delta {
            return Err(Error::InvalidParameter(
                "alpha must differ from delta".into(),
            ));
        }
        let m = perturbed_conditional(k, e.alpha, e.delta, e.offset);
        if m.iter().any(|&x| !(-1e-15..=1.0 + 1e-15).contains(&x)) {
            return Err(Error::InvalidParameter(format!(
                "alpha {} / delta {} produce entries outside [0, 1]",
                e.alpha, e.delta
            )));
        }
        mats.push(m);
    }
    assemble_uniform_root(tree, k, mats)
}

fn assemble_uniform_root(tree: Tree, k: usize, per_edge: Vec<Matrix>) -> Result<TreeModel> {
    let n = tree.n();
    let parent = tree.parents_from(0);
    let mut conditionals = vec![None; n];
    for (&(a, b), m) in tree.edges().iter().zip(per_edge) {
        let child = if parent[b] == Some(a) { b } else { a };
        conditionals[child] = Some(m);
    }
    TreeModel::new(tree, k, 0, vec![1.0 / k as f64; k], conditionals)
}

/// Distance `-log|det P_{a|b}|` of a perturbed symmetric edge under uniform
/// marginals.
pub fn perturbed_edge_distance(k: usize, alpha: f64, delta: f64, offset: usize) -> f64 {
    -linalg::det(&perturbed_conditional(k, alpha, delta, offset))
        .abs()
        .ln()
}

/// Solves for the `alpha` that gives a perturbed (or, with `delta = 0`,
/// symmetric) edge the information distance `distance`.
pub fn alpha_for_distance(k: usize, delta: f64, offset: usize, distance: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "distance {distance} must be positive"
        )));
    }
    if delta == 0.0 {
        return Ok((-distance / (k - 1) as f64).exp());
    }
    // Distance decreases in alpha on the valid branch above 2|delta|.
    let mut lo = (2.0 * delta.abs()).min(0.999);
    let mut hi = 1.0 - 1e-12;
    let f = |a: f64| perturbed_edge_distance(k, a, delta, offset) - distance;
    if f(lo) < 0.0 || f(hi) > 0.0 {
        return Err(Error::InvalidParameter(format!(
            "no alpha reaches distance {distance} with delta {delta}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Options for [`random_model`].
#[derive(Debug, Clone, Copy)]
pub struct RandomModelOptions {
    /// Weight of the identity in each conditional, drawn uniformly from this range.
    pub self_weight: (f64, f64),
    /// Every node marginal must put at least this much mass on each symbol.
    pub min_marginal: f64,
}

impl Default for RandomModelOptions {
    fn default() -> Self {
        RandomModelOptions {
            self_weight: (0.45, 0.8),
            min_marginal: 0.08,
        }
    }
}

/// A generic model on `tree`: random root marginal and conditionals
/// `w I + (1 - w) R` with `R` a random column-stochastic matrix.
pub fn random_model<R: Rng + ?Sized>(
    tree: Tree,
    k: usize,
    opts: RandomModelOptions,
    rng: &mut R,
) -> Result<TreeModel> {
    let n = tree.n();
    let parent = tree.parents_from(0);
    for _attempt in 0..1000 {
        let root_marginal = normalize((0..k).map(|_| 0.5 + rng.random::<f64>()).collect());
        let mut conditionals = vec![None; n];
        for c in 0..n {
            if parent[c].is_some() {
                let w = rng.random_range(opts.self_weight.0..=opts.self_weight.1);
                let mut m = linalg::identity(k) * w;
                for j in 0..k {
                    let col = normalize((0..k).map(|_| rng.random::<f64>() + 0.05).collect());
                    for i in 0..k {
                        m[(i, j)] += (1.0 - w) * col[i];
                    }
                }
                conditionals[c] = Some(m);
            }
        }
        let model = match TreeModel::new(tree.clone(), k, 0, root_marginal, conditionals) {
            Ok(m) => m,
            Err(_) => continue,
        };
        let marg = crate::oracle::exact_marginals(&model);
        if marg.iter().flatten().all(|&p| p >= opts.min_marginal) {
            return Ok(model);
        }
    }
    Err(Error::InvalidParameter(
        "could not draw a model meeting the marginal floor".into(),
    ))
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
    // Push rounding residue onto the largest entry so the sum is 1 to the last ulp or two.
    let s: f64 = v.iter().sum();
    let imax = (0..v.len())
        .max_by(|&a, &b| v[a].total_cmp(&v[b]))
        .unwrap_or(0);
    v[imax] += 1.0 - s;
    v
}

/// Per-node error probabilities of the k-ary symmetric channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    q: Vec<f64>,
    q_max: f64,
}

impl NoiseSpec {
    pub fn new(q: Vec<f64>, q_max: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&q_max) {
            return Err(Error::InvalidParameter(format!(
                "q_max {q_max} outside [0, 1)"
            )));
        }
        if let Some(&bad) = q.iter().find(|&&x| !(0.0..1.0).contains(&x)) {
            return Err(Error::InvalidParameter(format!(
                "error probability {bad} outside [0, 1)"
            )));
        }
        Ok(NoiseSpec { q, q_max })
    }

    pub fn noiseless(n: usize) -> Self {
        NoiseSpec {
            q: vec![0.0; n],
            q_max: 0.0,
        }
    }

    /// `q_i = q_max` on odd nodes, `0` on even nodes (0-indexed).
    pub fn alternate(n: usize, q_max: f64) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|i| if i % 2 == 1 { q_max } else { 0.0 })
                .collect(),
            q_max,
        )
    }

    /// `q_i ~ U[0, q_max]` independently.
    pub fn uniform<R: Rng + ?Sized>(n: usize, q_max: f64, rng: &mut R) -> Result<Self> {
        Self::new((0..n).map(|_| rng.random::<f64>() * q_max).collect(), q_max)
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn exceeds_bound(&self) -> bool {
        self.q.iter().any(|&x| x > self.q_max)
    }
}

/// Inputs to the recovery algorithm beyond the data itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    pub d_min: f64,
    pub d_max: f64,
    pub q_max: f64,
    pub p_min: f64,
    /// Residual gap separating "no root" from sampling noise, when known.
    pub t0: Option<f64>,
    /// Residual tolerance used for the `feasible` flag when `t0` is absent.
    pub root_tol: f64,
    pub seed: u64,
    /// Multiplier on the neighbourhood threshold `4 d_max + 3 eta_max`.
    pub threshold_scale: f64,
    /// Start the first leaf search at a random active node instead of the lowest index.
    pub random_init: bool,
}

impl AlgoParams {
    pub fn new(d_min: f64, d_max: f64, q_max: f64, p_min: f64) -> Self {
        AlgoParams {
            d_min,
            d_max,
            q_max,
            p_min,
            t0: None,
            root_tol: 1e-8,
            seed: 0,
            threshold_scale: 1.0,
            random_init: false,
        }
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = Some(t0);
        self
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.d_min > 0.0 && self.d_min < self.d_max) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < d_min < d_max, got {} and {}",
                self.d_min, self.d_max
            )));
        }
        if !(0.0..1.0).contains(&self.q_max) {
            return Err(Error::InvalidParameter(format!(
                "q_max {} outside [0, 1)",
                self.q_max
            )));
        }
        if !(self.p_min > 0.0 && self.p_min <= 1.0 / k as f64 + 1e-15) {
            return Err(Error::InvalidParameter(format!(
                "p_min {} outside (0, 1/k]",
                self.p_min
            )));
        }
        if let Some(t0) = self.t0 {
            if !(t0 > 0.0) {
                return Err(Error::InvalidParameter(format!("t0 {t0} must be positive")));
            }
        }
        if !(self.threshold_scale > 0.0) {
            return Err(Error::InvalidParameter(
                "threshold_scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One violated modelling assumption.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// A node puts less than `p_min` mass on some symbol.
    MarginalMass {
        node: usize,
        symbol: usize,
        mass: f64,
    },
    /// An edge distance falls outside `(d_min, d_max)`.
    EdgeDistance { a: usize, b: usize, distance: f64 },
    /// A node's error probability exceeds `q_max`.
    NoiseBound { node: usize, q: f64 },
    /// Noise vector length differs from the node count.
    NoiseLength { expected: usize, got: usize },
}

/// Lists every violated assumption; an empty report means all hold.
pub fn validate_assumptions(
    model: &TreeModel,
    noise: &NoiseSpec,
    params: &AlgoParams,
) -> Vec<Violation> {
    let mut report = Vec::new();
    let marginals = crate::oracle::exact_marginals(model);
    for (node, m) in marginals.iter().enumerate() {
        for (symbol, &mass) in m.iter().enumerate() {
            if mass < params.p_min - 1e-12 {
                report.push(Violation::MarginalMass { node, symbol, mass });
            }
        }
    }
    for &(a, b) in model.tree().edges() {
        let distance = crate::oracle::exact_pairwise_pmf(model, a, b)
            .map(|p| {
                crate::metric::info_distance(&p, &marginals[a], &marginals[b])
                    .unwrap_or(f64::INFINITY)
            })
            .unwrap_or(f64::INFINITY);
        if !(distance > params.d_min && distance < params.d_max) {
            report.push(Violation::EdgeDistance { a, b, distance });
        }
    }
    if noise.q().len() != model.n() {
        report.push(Violation::NoiseLength {
            expected: model.n(),
            got: noise.q().len(),
        });
    }
    for (node, &q) in noise.q().iter().enumerate() {
        if q > params.q_max {
            report.push(Violation::NoiseBound { node, q });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tree_rejects_cycles_and_duplicates() {
        assert!(Tree::new(3, vec![(0, 1), (1, 0)]).is_err());
        assert!(Tree::new(3, vec![(0, 0), (1, 2)]).is_err());
        assert!(Tree::new(4, vec![(0, 1), (1, 2), (2, 0)]).is_err());
        assert!(Tree::new(1, vec![]).is_err());
        assert!(Tree::new(3, vec![(0, 1), (1, 2)]).is_ok());
    }

    #[test]
    fn prufer_enumeration_counts() {
        assert_eq!(Tree::enumerate(4).len(), 16);
        assert_eq!(Tree::enumerate(5).len(), 125);
        let mut all: Vec<_> = Tree::enumerate(5)
            .iter()
            .map(|t| t.sorted_edges())
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 125);
    }

    #[test]
    fn path_walks_through_the_tree() {
        let t = Tree::chain(5).unwrap();
        assert_eq!(t.path(0, 3), vec![0, 1, 2, 3]);
        assert_eq!(t.path(4, 2), vec![4, 3, 2]);
        let s = Tree::star(5, 2).unwrap();
        assert_eq!(s.path(0, 4), vec![0, 2, 4]);
    }

    #[test]
    fn symmetric_edge_matrix_for_binary_half() {
        let model = build_symmetric_model(Tree::chain(2).unwrap(), 2, &[0.5], None).unwrap();
        let m = model.conditional(1).unwrap();
        assert!((m[(0, 0)] - 0.75).abs() < 1e-15);
        assert!((m[(0, 1)] - 0.25).abs() < 1e-15);
        assert!((m[(1, 0)] - 0.25).abs() < 1e-15);
        assert!((m[(1, 1)] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn symmetric_rejects_bad_inputs() {
        let t = Tree::chain(2).unwrap();
        assert!(build_symmetric_model(t.clone(), 2, &[1.0], None).is_err());
        assert!(build_symmetric_model(t.clone(), 2, &[0.0], None).is_err());
        assert!(build_symmetric_model(t.clone(), 1, &[0.5], None).is_err());
        let bounds = DistanceBounds {
            d_min: 0.5,
            d_max: 1.0,
        };
        assert!(build_symmetric_model(t.clone(), 2, &[(-0.7f64).exp()], Some(bounds)).is_ok());
        assert!(build_symmetric_model(t, 2, &[0.9], Some(bounds)).is_err());
    }

    #[test]
    fn perturbed_entries_match_hand_values() {
        let t = Tree::chain(2).unwrap();
        let e = PerturbedEdge {
            alpha: 0.6,
            delta: 0.1,
            offset: 1,
        };
        let model = build_perturbed_symmetric_model(t, 4, &[e]).unwrap();
        let m = model.conditional(1).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j {
                    0.6
                } else if j == (i + 1) % 4 {
                    0.2
                } else {
                    0.1
                };
                assert!(
                    (m[(i, j)] - expect).abs() < 1e-15,
                    "({i},{j}) = {}",
                    m[(i, j)]
                );
            }
        }
    }

    #[test]
    fn perturbed_with_zero_delta_is_symmetric() {
        let t = Tree::chain(4).unwrap();
        let alphas = [0.5, 0.7, 0.3];
        let sym = build_symmetric_model(t.clone(), 5, &alphas, None).unwrap();
        let edges: Vec<_> = alphas
            .iter()
            .map(|&alpha| PerturbedEdge {
                alpha,
                delta: 0.0,
                offset: 2,
            })
            .collect();
        let per = build_perturbed_symmetric_model(t, 5, &edges).unwrap();
        for c in 1..4 {
            let diff =
                linalg::max_abs_diff(sym.conditional(c).unwrap(), per.conditional(c).unwrap());
            assert!(diff <= 1e-15);
        }
    }

    #[test]
    fn perturbed_rejects_negative_diagonal() {
        let e = PerturbedEdge {
            alpha: 0.6,
            delta: 0.75,
            offset: 1,
        };
        assert!(build_perturbed_symmetric_model(Tree::chain(2).unwrap(), 4, &[e]).is_err());
    }

    #[test]
    fn alpha_for_distance_inverts_edge_distance() {
        for &(k, delta) in &[(4usize, 0.0), (4, 0.04), (3, 0.05), (6, 0.02)] {
            let d = (-0.7f64).exp();
            let a = alpha_for_distance(k, delta, 1, d).unwrap();
            assert!((perturbed_edge_distance(k, a, delta, 1) - d).abs() < 1e-9);
        }
    }

    #[test]
    fn assumption_report() {
        let alpha = (-0.7f64).exp();
        let model = build_symmetric_model(Tree::chain(4).unwrap(), 2, &[alpha; 3], None).unwrap();
        let params = AlgoParams::new(0.5, 1.0, 0.4, 0.5);
        let noise = NoiseSpec::new(vec![0.0, 0.1, 0.2, 0.3], 0.4).unwrap();
        assert!(validate_assumptions(&model, &noise, &params).is_empty());

        let noisy = NoiseSpec::new(vec![0.5, 0.0, 0.0, 0.0], 0.6).unwrap();
        let report = validate_assumptions(&model, &noisy, &params);
        assert_eq!(report, vec![Violation::NoiseBound { node: 0, q: 0.5 }]);

        let tight = AlgoParams::new(0.8, 1.0, 0.4, 0.5);
        assert_eq!(validate_assumptions(&model, &noise, &tight).len(), 3);
    }

    #[test]
    fn random_model_respects_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 2..=5 {
            let tree = Tree::random(8, &mut rng).unwrap();
            let m = random_model(tree, k, RandomModelOptions::default(), &mut rng).unwrap();
            let marg = crate::oracle::exact_marginals(&m);
            assert!(marg.iter().flatten().all(|&p| p >= 0.08));
        }
    }

    #[test]
    fn algo_params_domain() {
        assert!(AlgoParams::new(0.1, 1.0, 0.2, 0.25).validate(4).is_ok());
        assert!(AlgoParams::new(1.0, 1.0, 0.2, 0.25).validate(4).is_err());
        assert!(AlgoParams::new(0.1, 1.0, 1.0, 0.25).validate(4).is_err());
        assert!(AlgoParams::new(0.1, 1.0, 0.2, 0.3).validate(4).is_err());
        assert!(AlgoParams::new(0.1, 1.0, 0.2, 0.25)
            .with_t0(0.0)
            .validate(4)
            .is_err());
    }
}
