//! Leaf clusters, equivalence-class comparisons, recovery scores and the
//! Chow-Liu baseline.

use serde::Serialize;

use crate::linalg::{self, Matrix};
use crate::model::Tree;
use crate::oracle::PairwisePmfSet;
use crate::recovery::ClusterFlags;

/// Leaf clusters of a tree and the tree obtained by collapsing each cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafClusterSet {
    /// Sorted member lists, ordered by smallest member.
    pub clusters: Vec<Vec<usize>>,
    /// The member every other member hangs off (the lower index when the
    /// cluster is a whole 2-node tree).
    pub hubs: Vec<usize>,
    /// Edges between collapsed nodes, each labelled by its smallest member,
    /// sorted.
    pub quotient_edges: Vec<(usize, usize)>,
}

pub fn leaf_clusters(tree: &Tree) -> LeafClusterSet {
    let n = tree.n();
    let adj = tree.adjacency();
    let mut clusters: Vec<(usize, Vec<usize>)> = Vec::new();
    if n == 2 {
        clusters.push((0, vec![0, 1]));
    } else {
        for v in 0..n {
            if adj[v].len() == 1 {
                let p = adj[v][0];
                match clusters.iter_mut().find(|(h, _)| *h == p) {
                    Some((_, members)) => members.push(v),
                    None => clusters.push((p, vec![p, v])),
                }
            }
        }
    }
    for (_, m) in clusters.iter_mut() {
        m.sort_unstable();
    }
    clusters.sort_by_key(|(_, m)| m[0]);
    let mut label: Vec<usize> = (0..n).collect();
    for (_, m) in &clusters {
        for &v in m {
            label[v] = m[0];
        }
    }
    let mut quotient_edges: Vec<(usize, usize)> = tree
        .edges()
        .iter()
        .map(|&(a, b)| (label[a], label[b]))
        .filter(|(a, b)| a != b)
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    quotient_edges.sort_unstable();
    quotient_edges.dedup();
    LeafClusterSet {
        hubs: clusters.iter().map(|(h, _)| *h).collect(),
        clusters: clusters.into_iter().map(|(_, m)| m).collect(),
        quotient_edges,
    }
}

/// True iff `t2` is `t1` with nodes permuted inside `t1`'s leaf clusters.
pub fn same_equivalence_class(t1: &Tree, t2: &Tree) -> bool {
    if t1.n() != t2.n() {
        return false;
    }
    let a = leaf_clusters(t1);
    let b = leaf_clusters(t2);
    a.clusters == b.clusters && a.quotient_edges == b.quotient_edges
}

/// True iff `candidate` is in the equivalence class of `truth` and, in every
/// leaf cluster, the member acting as parent is the true parent or flagged.
pub fn in_t_sub(truth: &Tree, truth_flags: &[ClusterFlags], candidate: &Tree) -> bool {
    if !same_equivalence_class(truth, candidate) {
        return false;
    }
    if truth.n() == 2 {
        return true;
    }
    let truth_clusters = leaf_clusters(truth);
    let cand_clusters = leaf_clusters(candidate);
    for (members, &hub) in truth_clusters.clusters.iter().zip(&truth_clusters.hubs) {
        let cand_hub = cand_clusters
            .clusters
            .iter()
            .position(|m| m == members)
            .map(|i| cand_clusters.hubs[i])
            .expect("equal cluster partitions");
        if cand_hub == hub {
            continue;
        }
        let allowed = truth_flags
            .iter()
            .find(|f| &f.members == members)
            .is_some_and(|f| f.flagged.contains(&cand_hub));
        if !allowed {
            return false;
        }
    }
    true
}

/// `sum p log(p / (p_row p_col))`, natural log, `0 log 0 = 0`.
pub fn mutual_information(p: &Matrix) -> f64 {
    let rows = linalg::row_sums(p);
    let cols = linalg::col_sums(p);
    let mut mi = 0.0;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let v = p[(i, j)];
            if v > 0.0 {
                mi += v * (v / (rows[i] * cols[j])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Maximum-weight spanning tree on pairwise mutual information (Kruskal;
/// equal weights are taken in lexicographic edge order).
pub fn chow_liu(pmfs: &PairwisePmfSet) -> Tree {
    let n = pmfs.n();
    let mut weighted: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            weighted.push((mutual_information(&pmfs.get(i, j)), i, j));
        }
    }
    maximum_spanning_tree(n, weighted)
}

/// Kruskal on `(weight, a, b)` triples with `a < b`.
pub fn maximum_spanning_tree(n: usize, mut weighted: Vec<(f64, usize, usize)>) -> Tree {
    weighted.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    let mut edges = Vec::with_capacity(n - 1);
    for (_, a, b) in weighted {
        let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            edges.push((a, b));
            if edges.len() == n - 1 {
                break;
            }
        }
    }
    Tree::new(n, edges).expect("spanning tree of a complete graph")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialScore {
    pub exact: bool,
    pub eq_class: bool,
    pub in_t_sub: bool,
}

/// Scores one recovered tree against the truth.
pub fn score_trial(truth: &Tree, truth_flags: &[ClusterFlags], output: &Tree) -> TrialScore {
    TrialScore {
        exact: truth.sorted_edges() == output.sorted_edges(),
        eq_class: same_equivalence_class(truth, output),
        in_t_sub: in_t_sub(truth, truth_flags, output),
    }
}
