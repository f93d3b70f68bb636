//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code under test except to build inputs.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::Write;

use noisytree::model::{random_model, RandomModelOptions};
use noisytree::oracle::exact_pairwise_pmf;
use noisytree::{metric, oracle, AlgoParams, Tree, TreeModel};
use rand::seq::SliceRandom;
use rand::Rng;

/// Writes straight to the process stderr so the line survives output capture.
pub fn report(name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[{tag}] {name}: {detail}");
}

/// Decodes a Prüfer sequence with the textbook O(n^2) scan.
pub fn prufer_decode(seq: &[usize]) -> Vec<(usize, usize)> {
    let n = seq.len() + 2;
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
        edges.push((leaf.min(s), leaf.max(s)));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges.sort_unstable();
    edges
}

/// Every labelled tree on `n` nodes, as sorted edge lists.
pub fn all_labelled_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n == 2 {
        return vec![vec![(0, 1)]];
    }
    let len = n - 2;
    let total = n.pow(len as u32);
    (0..total)
        .map(|mut code| {
            let mut seq = vec![0; len];
            for s in seq.iter_mut() {
                *s = code % n;
                code /= n;
            }
            prufer_decode(&seq)
        })
        .collect()
}

fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    adj
}

fn rooted_code(adj: &[Vec<usize>], v: usize, parent: usize) -> String {
    let mut kids: Vec<String> = adj[v]
        .iter()
        .filter(|&&u| u != parent)
        .map(|&u| rooted_code(adj, u, v))
        .collect();
    kids.sort();
    format!("({})", kids.concat())
}

/// Rooting-independent canonical string of an unlabelled tree.
pub fn shape_code(n: usize, edges: &[(usize, usize)]) -> String {
    let adj = adjacency(n, edges);
    (0..n)
        .map(|r| rooted_code(&adj, r, usize::MAX))
        .min()
        .unwrap()
}

/// One representative per unlabelled tree shape on `n` nodes.
pub fn all_shapes(n: usize) -> Vec<Vec<(usize, usize)>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in all_labelled_trees(n) {
        if seen.insert(shape_code(n, &t)) {
            out.push(t);
        }
    }
    out
}

/// Component of `start` after deleting edge `cut`.
fn side_of(n: usize, edges: &[(usize, usize)], cut: (usize, usize), start: usize) -> Vec<bool> {
    let adj = adjacency(n, edges);
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if (v.min(u), v.max(u)) == cut || seen[u] {
                continue;
            }
            seen[u] = true;
            stack.push(u);
        }
    }
    seen
}

/// The 2|2 split of `q` induced by some edge of the tree, or `None` when no
/// edge separates the four nodes two against two.
pub fn split_of(
    n: usize,
    edges: &[(usize, usize)],
    q: [usize; 4],
) -> Option<([usize; 2], [usize; 2])> {
    for &e in edges {
        let side = side_of(n, edges, e, e.0);
        let left: Vec<usize> = q.iter().copied().filter(|&v| side[v]).collect();
        if left.len() == 2 {
            let mut a = [left[0], left[1]];
            let right: Vec<usize> = q.iter().copied().filter(|&v| !side[v]).collect();
            let mut b = [right[0], right[1]];
            a.sort_unstable();
            b.sort_unstable();
            return Some(if a[0] < b[0] { (a, b) } else { (b, a) });
        }
    }
    None
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Leaf clusters found by direct inspection: every non-leaf node with at
/// least one leaf neighbour, together with those leaves. A two-node tree is
/// one cluster.
pub fn naive_clusters(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let adj = adjacency(n, edges);
    if n == 2 {
        return vec![vec![0, 1]];
    }
    let mut out = Vec::new();
    for v in 0..n {
        if adj[v].len() > 1 {
            let mut c: Vec<usize> = adj[v]
                .iter()
                .copied()
                .filter(|&u| adj[u].len() == 1)
                .collect();
            if !c.is_empty() {
                c.push(v);
                c.sort_unstable();
                out.push(c);
            }
        }
    }
    out
}

/// Every tree reachable from `edges` by permuting node labels inside its
/// leaf clusters, as sorted edge lists.
pub fn cluster_permutation_images(
    n: usize,
    edges: &[(usize, usize)],
) -> BTreeSet<Vec<(usize, usize)>> {
    let clusters = naive_clusters(n, edges);
    let mut perms: Vec<Vec<usize>> = vec![(0..n).collect()];
    for c in &clusters {
        let mut next = Vec::new();
        for base in &perms {
            for p in permutations(c) {
                let mut m = base.clone();
                for (from, to) in c.iter().zip(&p) {
                    m[*from] = *to;
                }
                next.push(m);
            }
        }
        perms = next;
    }
    perms
        .into_iter()
        .map(|m| {
            let mut e: Vec<(usize, usize)> = edges
                .iter()
                .map(|&(a, b)| (m[a].min(m[b]), m[a].max(m[b])))
                .collect();
            e.sort_unstable();
            e
        })
        .collect()
}

/// Uniform random permutation of `0..n` applied to a tree.
pub fn shuffled<R: Rng>(tree: &Tree, rng: &mut R) -> Tree {
    let mut perm: Vec<usize> = (0..tree.n()).collect();
    perm.shuffle(rng);
    tree.relabel(&perm).unwrap()
}

/// A random labelled tree drawn through a uniform Prüfer sequence.
pub fn random_tree<R: Rng>(n: usize, rng: &mut R) -> Tree {
    if n == 2 {
        return Tree::chain(2).unwrap();
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    Tree::new(n, prufer_decode(&seq)).unwrap()
}

pub fn generic_model<R: Rng>(tree: Tree, k: usize, rng: &mut R) -> TreeModel {
    random_model(tree, k, RandomModelOptions::default(), rng).unwrap()
}

/// Information distance of every tree edge, from the exact clean joint.
pub fn edge_distance(model: &TreeModel, a: usize, b: usize) -> f64 {
    let p = exact_pairwise_pmf(model, a, b).unwrap();
    let m = oracle::exact_marginals(model);
    metric::info_distance(&p, &m[a], &m[b]).unwrap()
}

/// Sum of edge distances along the tree path from `i` to `j`.
pub fn path_distance(model: &TreeModel, i: usize, j: usize) -> f64 {
    let path = model.tree().path(i, j);
    path.windows(2)
        .map(|w| edge_distance(model, w[0], w[1]))
        .sum()
}

/// Bounds that hold for `model` on its clean edges, with `q_max` and the
/// smallest marginal mass.
pub fn params_for(model: &TreeModel, q_max: f64) -> AlgoParams {
    let d: Vec<f64> = model
        .tree()
        .edges()
        .iter()
        .map(|&(a, b)| edge_distance(model, a, b))
        .collect();
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.iter().copied().fold(0.0, f64::max);
    let p_min = oracle::exact_marginals(model)
        .iter()
        .flatten()
        .copied()
        .fold(1.0, f64::min)
        .min(1.0 / model.k() as f64);
    AlgoParams::new(lo * 0.999, hi * 1.001 + 1e-9, q_max, p_min)
}

/// Relabels `tree` by a random permutation inside each of its leaf clusters.
pub fn cluster_shuffle<R: Rng>(tree: &Tree, rng: &mut R) -> Tree {
    let mut perm: Vec<usize> = (0..tree.n()).collect();
    for c in naive_clusters(tree.n(), tree.edges()) {
        let mut target = c.clone();
        target.shuffle(rng);
        for (&from, &to) in c.iter().zip(&target) {
            perm[from] = to;
        }
    }
    tree.relabel(&perm).unwrap()
}
