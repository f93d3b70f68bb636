//! Tree recovery from noisy pairwise joints: quartet tests, center finding,
//! leaf-cluster resolution, the leaf-peeling loop and the expansion of the
//! result into its identifiable equivalence class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::leaf_clusters;
use crate::metric::{self, DistanceTable};
use crate::model::{AlgoParams, Tree};
use crate::oracle::PairwisePmfSet;
use crate::quadtest::{quadratic_error, RootPolicy};

/// Outcome of the four-node split test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuartetVerdict {
    Star,
    /// The tree splits the four nodes into these two pairs.
    NonStar([usize; 2], [usize; 2]),
    Fail,
}

/// Positions of the three pairings `{01|23, 02|13, 03|12}` in the order
/// `kappa = [k01, k02, k03, k12, k13, k23]`.
const PAIRINGS: [([usize; 2], [usize; 2], usize, usize); 3] = [
    ([0, 1], [2, 3], 0, 5),
    ([0, 2], [1, 3], 1, 4),
    ([0, 3], [1, 2], 2, 3),
];

/// Classifies four nodes from their six `kappa = exp(-d)` values, given in the
/// order `[k12, k13, k14, k23, k24, k34]`. Partitions refer to positions 0..4.
pub fn classify_quartet(kappa: [f64; 6], kappa_max: f64) -> QuartetVerdict {
    if kappa.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return QuartetVerdict::Fail;
    }
    let margin = 0.5 * (1.0 + kappa_max * kappa_max);
    let prod: Vec<f64> = PAIRINGS.iter().map(|p| kappa[p.2] * kappa[p.3]).collect();
    // ratio_p = sqrt(prod of the other two pairings) / prod_p
    let ratio: Vec<f64> = (0..3)
        .map(|p| {
            let others: f64 = (0..3).filter(|&o| o != p).map(|o| prod[o]).product();
            others.sqrt() / prod[p]
        })
        .collect();
    for p in 0..3 {
        if ratio[p] <= margin && (0..3).filter(|&o| o != p).all(|o| ratio[o] >= 1.0) {
            return QuartetVerdict::NonStar(PAIRINGS[p].0, PAIRINGS[p].1);
        }
    }
    if ratio.iter().all(|&r| r >= margin) {
        return QuartetVerdict::Star;
    }
    QuartetVerdict::Fail
}

/// [`classify_quartet`] on four node ids; partitions are returned as node ids.
pub fn classify_nodes(dist: &DistanceTable, nodes: [usize; 4], kappa_max: f64) -> QuartetVerdict {
    let k = |a: usize, b: usize| dist.kappa(nodes[a], nodes[b]);
    let verdict = classify_quartet(
        [k(0, 1), k(0, 2), k(0, 3), k(1, 2), k(1, 3), k(2, 3)],
        kappa_max,
    );
    match verdict {
        QuartetVerdict::NonStar(a, b) => {
            QuartetVerdict::NonStar([nodes[a[0]], nodes[a[1]]], [nodes[b[0]], nodes[b[1]]])
        }
        v => v,
    }
}

/// Everything derived once from the data and the parameters.
#[derive(Debug, Clone)]
pub struct RecoveryContext<'a> {
    pub pmfs: &'a PairwisePmfSet,
    pub dist: DistanceTable,
    pub neighborhoods: Vec<Vec<usize>>,
    pub kappa_max: f64,
    pub eta_max: f64,
    pub params: AlgoParams,
    pub policy: RootPolicy,
}

impl<'a> RecoveryContext<'a> {
    pub fn new(pmfs: &'a PairwisePmfSet, params: &AlgoParams) -> Result<Self> {
        params.validate(pmfs.k())?;
        let dist = DistanceTable::from_pmfs(pmfs);
        let eta_max = metric::eta_max(pmfs.k(), params.q_max, params.p_min)?;
        let threshold =
            metric::neighborhood_threshold(params.d_max, eta_max, params.threshold_scale);
        let neighborhoods = (0..pmfs.n())
            .map(|i| metric::neighborhood(&dist, i, threshold))
            .collect();
        Ok(RecoveryContext {
            pmfs,
            dist,
            neighborhoods,
            kappa_max: (-params.d_min).exp(),
            eta_max,
            params: params.clone(),
            policy: RootPolicy::from(params),
        })
    }

    fn common_neighbors(&self, nodes: &[usize]) -> Vec<usize> {
        self.neighborhoods[nodes[0]]
            .iter()
            .copied()
            .filter(|j| !nodes.contains(j))
            .filter(|j| {
                nodes[1..]
                    .iter()
                    .all(|&m| self.neighborhoods[m].contains(j))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Vote {
    Star,
    Remove(usize),
}

fn vote(ctx: &RecoveryContext, triplet: [usize; 3], j: usize) -> Option<Vote> {
    match classify_nodes(
        &ctx.dist,
        [triplet[0], triplet[1], triplet[2], j],
        ctx.kappa_max,
    ) {
        QuartetVerdict::Fail => None,
        QuartetVerdict::Star => Some(Vote::Star),
        QuartetVerdict::NonStar(a, b) => {
            let side = if a.contains(&j) { a } else { b };
            let partner = if side[0] == j { side[1] } else { side[0] };
            debug_assert!(triplet.contains(&partner));
            Some(Vote::Remove(partner))
        }
    }
}

/// Center candidates among `triplet`. Nodes already joined to a triplet member
/// by a recovered edge vote as one bloc per member.
pub fn find_center(
    ctx: &RecoveryContext,
    triplet: [usize; 3],
    recovered: &[Vec<usize>],
) -> Vec<usize> {
    let mut cand = triplet.to_vec();
    let mut blocs: [Vec<usize>; 3] = Default::default();
    let apply = |v: Vote, cand: &mut Vec<usize>| {
        if let Vote::Remove(m) = v {
            cand.retain(|&c| c != m);
        }
    };
    for j in ctx.common_neighbors(&triplet) {
        match (0..3).find(|&m| recovered[triplet[m]].contains(&j)) {
            Some(m) => blocs[m].push(j),
            None => {
                if let Some(v) = vote(ctx, triplet, j) {
                    apply(v, &mut cand);
                }
            }
        }
    }
    for bloc in blocs.iter_mut() {
        if bloc.is_empty() {
            continue;
        }
        bloc.sort_unstable();
        let votes: Vec<(usize, Vote)> = bloc
            .iter()
            .filter_map(|&j| vote(ctx, triplet, j).map(|v| (j, v)))
            .collect();
        let count = |v: Vote| votes.iter().filter(|(_, w)| *w == v).count();
        let best = votes.iter().map(|&(_, v)| count(v)).max();
        if let Some(best) = best {
            // Among the most common votes, take the one cast by the lowest-index node.
            let (_, v) = votes
                .iter()
                .find(|&&(_, v)| count(v) == best)
                .copied()
                .unwrap();
            apply(v, &mut cand);
        }
    }
    cand
}

/// Picks a parent among members of one leaf cluster; returns `(leaf, parent)`.
pub fn leaf_cluster_resolution(
    ctx: &RecoveryContext,
    cluster: &[usize],
    parents: &[usize],
    active: &[usize],
    recovered: &[Vec<usize>],
) -> (usize, usize) {
    if let Some(&p) = cluster.iter().find(|c| parents.contains(c)) {
        let leaf = cluster.iter().copied().find(|&c| c != p).unwrap();
        return (leaf, p);
    }
    let guard = ctx.params.d_max + 2.0 * ctx.eta_max;
    // (residual, node)
    let mut best: Option<(f64, usize)> = None;
    let consider = |err: f64, node: usize, best: &mut Option<(f64, usize)>| {
        let better = match *best {
            None => true,
            Some((e, n)) => err < e || (err == e && node < n),
        };
        if better {
            *best = Some((err, node));
        }
    };
    for (x, &i1) in cluster.iter().enumerate() {
        for &i2 in &cluster[x + 1..] {
            for i3 in ctx.common_neighbors(&[i1, i2]) {
                if !active.contains(&i3) {
                    continue;
                }
                let same_cluster = find_center(ctx, [i1, i2, i3], recovered).contains(&i3)
                    && ctx.dist.d(i3, i1) <= guard
                    && ctx.dist.d(i3, i2) <= guard;
                let mut roles = vec![(i2, i1, i3), (i1, i2, i3)];
                if same_cluster {
                    roles.push((i1, i3, i2));
                }
                for triplet in roles {
                    if let Ok(r) = quadratic_error(ctx.pmfs, triplet, &ctx.policy) {
                        consider(r.residual, triplet.1, &mut best);
                    }
                }
            }
        }
    }
    let parent = match best {
        Some((_, p)) => p,
        // Nothing evaluable: fall back to the most central member.
        None => *cluster
            .iter()
            .min_by(|&&a, &&b| {
                let spread = |v: usize| {
                    cluster
                        .iter()
                        .map(|&u| ctx.dist.d(v, u))
                        .fold(0.0, f64::max)
                };
                spread(a).total_cmp(&spread(b)).then(a.cmp(&b))
            })
            .unwrap(),
    };
    let leaf = cluster.iter().copied().find(|&c| c != parent).unwrap();
    (leaf, parent)
}

/// Mutable state of the peeling loop.
#[derive(Debug, Clone)]
pub struct PeelState {
    /// Active nodes in increasing order.
    pub active: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    /// Chosen parents in the order they were found.
    pub parents: Vec<usize>,
    pub adjacency: Vec<Vec<usize>>,
}

impl PeelState {
    pub fn new(n: usize) -> Self {
        PeelState {
            active: (0..n).collect(),
            edges: Vec::new(),
            parents: Vec::new(),
            adjacency: vec![Vec::new(); n],
        }
    }

    fn join(&mut self, leaf: usize, parent: usize) {
        self.edges.push((leaf.min(parent), leaf.max(parent)));
        self.adjacency[leaf].push(parent);
        self.adjacency[parent].push(leaf);
        if !self.parents.contains(&parent) {
            self.parents.push(parent);
        }
        self.active.retain(|&a| a != leaf);
    }
}

/// Finds one leaf of the active subtree and its parent; returns `(leaf, parent)`.
pub fn get_leaf_parent<R: Rng>(
    ctx: &RecoveryContext,
    state: &PeelState,
    rng: &mut R,
) -> (usize, usize) {
    let active = &state.active;
    let is_active = |v: usize| active.binary_search(&v).is_ok();
    let mut r = match state.parents.iter().copied().find(|&p| is_active(p)) {
        Some(p) => p,
        None if ctx.params.random_init && state.edges.is_empty() => {
            active[rng.random_range(0..active.len())]
        }
        None => active[0],
    };
    let nearest_active = |v: usize| {
        ctx.neighborhoods[v]
            .iter()
            .copied()
            .find(|&u| is_active(u))
            .unwrap_or_else(|| {
                *active
                    .iter()
                    .filter(|&&u| u != v)
                    .min_by(|&&a, &&b| {
                        ctx.dist
                            .d(v, a)
                            .total_cmp(&ctx.dist.d(v, b))
                            .then(a.cmp(&b))
                    })
                    .unwrap()
            })
    };
    let mut l = nearest_active(r);
    let mut visited = vec![l, r];
    let mut l_r_order = false;
    let mut i = 1;
    while i < ctx.neighborhoods[r].len() {
        let z = ctx.neighborhoods[r][i];
        if visited.contains(&z) || !is_active(z) {
            i += 1;
            continue;
        }
        visited.push(z);
        let c = find_center(ctx, [l, r, z], &state.adjacency);
        if c.len() == 1 {
            l_r_order = true;
        }
        if c == [z] {
            l = z;
        } else if c == [r] {
            l = r;
            r = z;
            i = 0;
        } else if c.len() > 1 {
            if l_r_order && c.contains(&r) && c.contains(&l) {
                return (r, l);
            }
            return leaf_cluster_resolution(ctx, &c, &state.parents, active, &state.adjacency);
        }
    }
    if l_r_order {
        return (r, l);
    }
    // The walk never ordered l and r: the endpoint farther from the rest is the leaf.
    let reach = |v: usize| {
        active
            .iter()
            .map(|&u| ctx.dist.d(v, u))
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max)
    };
    if reach(l) > reach(r) {
        (l, r)
    } else {
        (r, l)
    }
}

/// A flagged leaf cluster of a recovered tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFlags {
    pub members: Vec<usize>,
    /// The member the other members hang off in the recovered tree.
    pub hub: usize,
    /// Members that pass the center test and can therefore act as the parent.
    pub flagged: Vec<usize>,
    pub undetermined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredStructure {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub parents: Vec<usize>,
    pub leaf_cluster_flags: Vec<ClusterFlags>,
}

impl RecoveredStructure {
    pub fn tree(&self) -> Result<Tree> {
        Tree::new(self.n, self.edges.clone())
    }
}

/// Runs the peeling loop until two nodes remain and joins them.
pub fn find_tree(pmfs: &PairwisePmfSet, params: &AlgoParams) -> Result<RecoveredStructure> {
    let ctx = RecoveryContext::new(pmfs, params)?;
    find_tree_with(&ctx)
}

pub fn find_tree_with(ctx: &RecoveryContext) -> Result<RecoveredStructure> {
    let n = ctx.pmfs.n();
    for i in 0..n {
        if (0..n).all(|j| j == i || !ctx.dist.d(i, j).is_finite()) {
            return Err(Error::SingularPair(i, if i == 0 { 1 } else { 0 }));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.params.seed);
    let mut state = PeelState::new(n);
    while state.active.len() > 2 {
        let (leaf, parent) = get_leaf_parent(ctx, &state, &mut rng);
        if leaf == parent || state.adjacency[leaf].contains(&parent) {
            return Err(Error::Recovery(format!(
                "degenerate leaf-parent pair ({leaf}, {parent})"
            )));
        }
        state.join(leaf, parent);
    }
    let (a, b) = (state.active[0], state.active[1]);
    state.edges.push((a, b));
    let structure = RecoveredStructure {
        n,
        edges: state.edges,
        parents: state.parents,
        leaf_cluster_flags: Vec::new(),
    };
    structure
        .tree()
        .map_err(|e| Error::Recovery(e.to_string()))?;
    Ok(structure)
}

/// Flags, in every leaf cluster of `structure`, the members whose center test
/// residual is below `t0 / 2`.
pub fn expand_equivalence_class(
    structure: &RecoveredStructure,
    pmfs: &PairwisePmfSet,
    dist: &DistanceTable,
    t0: f64,
) -> Result<RecoveredStructure> {
    let tree = structure.tree()?;
    let clusters = leaf_clusters(&tree);
    let policy = RootPolicy {
        q_max: 1.0,
        t0: Some(t0),
        root_tol: 0.0,
    };
    let mut flags = Vec::with_capacity(clusters.clusters.len());
    for (members, &hub) in clusters.clusters.iter().zip(&clusters.hubs) {
        let outside = (0..tree.n())
            .filter(|v| !members.contains(v))
            .min_by(|&a, &b| dist.d(hub, a).total_cmp(&dist.d(hub, b)).then(a.cmp(&b)));
        let mut flagged = Vec::new();
        let mut undetermined = false;
        for &m in members {
            let neighbor = if m == hub {
                *members.iter().find(|&&u| u != hub).unwrap()
            } else {
                hub
            };
            let third =
                outside.or_else(|| members.iter().copied().find(|&u| u != m && u != neighbor));
            let Some(third) = third else {
                undetermined = true;
                continue;
            };
            match quadratic_error(pmfs, (neighbor, m, third), &policy) {
                Ok(r) if r.residual < 0.5 * t0 => flagged.push(m),
                Ok(_) => {}
                Err(_) => undetermined = true,
            }
        }
        flags.push(ClusterFlags {
            members: members.clone(),
            hub,
            flagged,
            undetermined,
        });
    }
    Ok(RecoveredStructure {
        leaf_cluster_flags: flags,
        ..structure.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_symmetric_model, NoiseSpec};
    use crate::oracle::exact_pairwise_set;

    fn kappas_from(d: [f64; 6]) -> [f64; 6] {
        d.map(|x| (-x).exp())
    }

    #[test]
    fn chain_and_star_quartets() {
        // chain 1-2-3-4 with unit edges: d12 d13 d14 d23 d24 d34
        let v = classify_quartet(kappas_from([1.0, 2.0, 3.0, 1.0, 2.0, 1.0]), (-0.5f64).exp());
        assert_eq!(v, QuartetVerdict::NonStar([0, 1], [2, 3]));
        let v = classify_quartet(kappas_from([2.0; 6]), (-0.5f64).exp());
        assert_eq!(v, QuartetVerdict::Star);
        let v = classify_quartet([0.0, 0.5, 0.5, 0.5, 0.5, 0.5], 0.5);
        assert_eq!(v, QuartetVerdict::Fail);
    }

    #[test]
    fn perturbed_quartet_keeps_verdict() {
        // split 13|24: pendant edges 0.4, 0.6, 0.5, 0.6 and a middle edge of 0.8.
        let d = [1.8, 0.9, 1.8, 1.9, 1.2, 1.9];
        let eps = [0.05, -0.04, 0.03, -0.05, 0.02, 0.04];
        let mut noisy = d;
        for i in 0..6 {
            noisy[i] += eps[i];
        }
        let km = (-0.35f64).exp();
        assert_eq!(
            classify_quartet(kappas_from(d), km),
            QuartetVerdict::NonStar([0, 2], [1, 3])
        );
        assert_eq!(
            classify_quartet(kappas_from(noisy), km),
            QuartetVerdict::NonStar([0, 2], [1, 3])
        );
    }

    fn symmetric_chain(n: usize) -> (PairwisePmfSet, AlgoParams) {
        let alpha = (-0.7f64).exp();
        let model =
            build_symmetric_model(Tree::chain(n).unwrap(), 2, &vec![alpha; n - 1], None).unwrap();
        let pmfs = exact_pairwise_set(&model, None).unwrap();
        (pmfs, AlgoParams::new(0.6, 0.8, 0.0, 0.5))
    }

    #[test]
    fn center_of_chain_triplet() {
        let (pmfs, params) = symmetric_chain(9);
        let ctx = RecoveryContext::new(&pmfs, &params).unwrap();
        let none = vec![Vec::new(); 9];
        assert_eq!(find_center(&ctx, [2, 4, 6], &none), vec![4]);
        assert_eq!(find_center(&ctx, [6, 3, 5], &none), vec![5]);
        // 0 and 1 share a leaf cluster.
        assert!(find_center(&ctx, [0, 1, 3], &none).len() >= 2);
    }

    #[test]
    fn empty_common_neighborhood_keeps_all() {
        let (pmfs, mut params) = symmetric_chain(9);
        params.threshold_scale = 1e-3;
        let ctx = RecoveryContext::new(&pmfs, &params).unwrap();
        assert_eq!(
            find_center(&ctx, [0, 4, 8], &vec![Vec::new(); 9]),
            vec![0, 4, 8]
        );
    }

    #[test]
    fn known_parent_short_circuits() {
        let (pmfs, params) = symmetric_chain(5);
        let ctx = RecoveryContext::new(&pmfs, &params).unwrap();
        let adj = vec![Vec::new(); 5];
        assert_eq!(
            leaf_cluster_resolution(&ctx, &[3, 4], &[4], &[0, 1, 2, 3, 4], &adj),
            (3, 4)
        );
    }

    #[test]
    fn chain_peel_returns_true_leaf_pair() {
        let (pmfs, params) = symmetric_chain(12);
        let ctx = RecoveryContext::new(&pmfs, &params).unwrap();
        let state = PeelState::new(12);
        let (leaf, parent) = get_leaf_parent(&ctx, &state, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(
            [(0, 1), (1, 0), (11, 10), (10, 11)].contains(&(leaf, parent)),
            "got ({leaf}, {parent})"
        );
    }

    #[test]
    fn three_node_symmetric_chain_is_one_cluster() {
        let (pmfs, params) = symmetric_chain(3);
        let s = find_tree(&pmfs, &params).unwrap();
        assert!(crate::evalkit::same_equivalence_class(
            &s.tree().unwrap(),
            &Tree::chain(3).unwrap()
        ));
    }

    #[test]
    fn three_node_perturbed_chain_middle_is_parent() {
        let e = crate::model::PerturbedEdge {
            alpha: 0.55,
            delta: 0.08,
            offset: 1,
        };
        let model =
            crate::model::build_perturbed_symmetric_model(Tree::chain(3).unwrap(), 4, &[e, e])
                .unwrap();
        let pmfs = exact_pairwise_set(&model, None).unwrap();
        let params = AlgoParams::new(0.3, 2.0, 0.0, 0.25);
        let mut e = find_tree(&pmfs, &params).unwrap().edges;
        e.sort();
        assert_eq!(e, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn two_nodes_single_edge() {
        let (pmfs, params) = symmetric_chain(2);
        assert_eq!(find_tree(&pmfs, &params).unwrap().edges, vec![(0, 1)]);
    }

    #[test]
    fn symmetric_expansion_flags_everyone() {
        let alpha = (-0.7f64).exp();
        let model = build_symmetric_model(Tree::star(6, 2).unwrap(), 3, &[alpha; 5], None).unwrap();
        let noise = NoiseSpec::new(vec![0.1, 0.0, 0.15, 0.05, 0.0, 0.1], 0.2).unwrap();
        let pmfs = exact_pairwise_set(&model, Some(&noise)).unwrap();
        let params = AlgoParams::new(0.6, 0.8, 0.2, 1.0 / 3.0);
        let s = find_tree(&pmfs, &params).unwrap();
        let dist = DistanceTable::from_pmfs(&pmfs);
        let s = expand_equivalence_class(&s, &pmfs, &dist, 1e-6).unwrap();
        assert_eq!(s.leaf_cluster_flags.len(), 1);
        assert_eq!(s.leaf_cluster_flags[0].flagged, vec![0, 1, 2, 3, 4, 5]);
    }
}
