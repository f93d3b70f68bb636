//! File formats: models, pairwise PMF sets, samples and recovered structures.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{Tree, TreeModel};
use crate::oracle::{PairwisePmfSet, PmfSource};
use crate::recovery::RecoveredStructure;
use crate::sampler::SampleMatrix;

const SAMPLES_MAGIC: &[u8; 4] = b"NTSM";
const PMFS_MAGIC: &[u8; 4] = b"NTPP";

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    k: usize,
    root: usize,
    root_marginal: Vec<f64>,
    edges: Vec<[usize; 2]>,
    /// Keyed `"parent-child"`, row-major `P(child | parent)`.
    conditionals: BTreeMap<String, Vec<f64>>,
}

pub fn model_to_json(model: &TreeModel) -> Result<String> {
    let mut conditionals = BTreeMap::new();
    for v in 0..model.n() {
        if let (Some(p), Some(m)) = (model.parent(v), model.conditional(v)) {
            conditionals.insert(format!("{p}-{v}"), linalg::to_row_major(m));
        }
    }
    let doc = ModelDoc {
        k: model.k(),
        root: model.root(),
        root_marginal: model.root_marginal().to_vec(),
        edges: model.tree().edges().iter().map(|&(a, b)| [a, b]).collect(),
        conditionals,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn model_from_json(text: &str) -> Result<TreeModel> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    let n = doc.edges.len() + 1;
    let tree = Tree::new(n, doc.edges.iter().map(|e| (e[0], e[1])).collect())?;
    let parent = tree.parents_from(doc.root.min(n - 1));
    let mut conditionals: Vec<Option<Matrix>> = vec![None; n];
    for (key, data) in &doc.conditionals {
        let (p, c) = key
            .split_once('-')
            .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
            .ok_or_else(|| Error::Format(format!("bad conditional key {key:?}")))?;
        if c >= n || parent[c] != Some(p) {
            return Err(Error::Format(format!(
                "conditional {key:?} is not a root-directed edge"
            )));
        }
        if data.len() != doc.k * doc.k {
            return Err(Error::Format(format!(
                "conditional {key:?} has {} entries",
                data.len()
            )));
        }
        conditionals[c] = Some(linalg::from_row_major(doc.k, data));
    }
    TreeModel::new(tree, doc.k, doc.root, doc.root_marginal, conditionals)
}

#[derive(Debug, Serialize, Deserialize)]
struct PairDoc {
    i: usize,
    j: usize,
    p: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PmfSetDoc {
    n: usize,
    k: usize,
    source: PmfSource,
    sample_count: Option<u64>,
    pairs: Vec<PairDoc>,
}

pub fn pmfs_to_json(pmfs: &PairwisePmfSet) -> Result<String> {
    let n = pmfs.n();
    let mut pairs = Vec::with_capacity(pmfs.matrices().len());
    for i in 0..n {
        for j in i + 1..n {
            pairs.push(PairDoc {
                i,
                j,
                p: linalg::to_row_major(&pmfs.get(i, j)),
            });
        }
    }
    Ok(serde_json::to_string(&PmfSetDoc {
        n,
        k: pmfs.k(),
        source: pmfs.source(),
        sample_count: pmfs.sample_count(),
        pairs,
    })?)
}

pub fn pmfs_from_json(text: &str) -> Result<PairwisePmfSet> {
    let doc: PmfSetDoc = serde_json::from_str(text)?;
    let mut slots: Vec<Option<Matrix>> = vec![None; doc.n * doc.n.saturating_sub(1) / 2];
    for pair in doc.pairs {
        if pair.i >= pair.j || pair.j >= doc.n || pair.p.len() != doc.k * doc.k {
            return Err(Error::Format(format!("bad pair ({}, {})", pair.i, pair.j)));
        }
        slots[crate::oracle::pair_index(doc.n, pair.i, pair.j)] =
            Some(linalg::from_row_major(doc.k, &pair.p));
    }
    let matrices = slots
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Format("missing pairs".into()))?;
    PairwisePmfSet::new(doc.n, doc.k, matrices, doc.source, doc.sample_count)
}

/// Binary layout, little-endian: magic `NTPP`, `n: u32`, `k: u32`,
/// `source: u8` (0 exact, 1 empirical), `sample_count: u64` (0 if none),
/// `pairs: u32`, then `(i: u32, j: u32)` per pair, then every pair's `k*k`
/// row-major `f64` values in header order.
pub fn write_pmfs_binary<W: Write>(pmfs: &PairwisePmfSet, mut w: W) -> Result<()> {
    let n = pmfs.n();
    w.write_all(PMFS_MAGIC)?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(pmfs.k() as u32).to_le_bytes())?;
    w.write_all(&[matches!(pmfs.source(), PmfSource::Empirical) as u8])?;
    w.write_all(&pmfs.sample_count().unwrap_or(0).to_le_bytes())?;
    w.write_all(&(pmfs.matrices().len() as u32).to_le_bytes())?;
    for i in 0..n {
        for j in i + 1..n {
            w.write_all(&(i as u32).to_le_bytes())?;
            w.write_all(&(j as u32).to_le_bytes())?;
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for x in linalg::to_row_major(&pmfs.get(i, j)) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_pmfs_binary<R: Read>(mut r: R) -> Result<PairwisePmfSet> {
    if &read_array::<4, _>(&mut r)? != PMFS_MAGIC {
        return Err(Error::Format("not a pairwise PMF file".into()));
    }
    let n = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let k = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let source = match read_array::<1, _>(&mut r)?[0] {
        0 => PmfSource::Exact,
        1 => PmfSource::Empirical,
        s => return Err(Error::Format(format!("unknown source tag {s}"))),
    };
    let count = u64::from_le_bytes(read_array(&mut r)?);
    let pairs = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if n < 2 || pairs != n * (n - 1) / 2 || k > linalg::MAX_SUPPORT {
        return Err(Error::Format("inconsistent header".into()));
    }
    let mut index = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let i = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let j = u32::from_le_bytes(read_array(&mut r)?) as usize;
        if i >= j || j >= n {
            return Err(Error::Format(format!("bad pair ({i}, {j})")));
        }
        index.push(crate::oracle::pair_index(n, i, j));
    }
    let mut slots: Vec<Option<Matrix>> = vec![None; pairs];
    for idx in index {
        let mut data = vec![0.0; k * k];
        for x in data.iter_mut() {
            *x = f64::from_le_bytes(read_array(&mut r)?);
        }
        slots[idx] = Some(linalg::from_row_major(k, &data));
    }
    let matrices = slots
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Format("duplicate pair in header".into()))?;
    let sample_count = matches!(source, PmfSource::Empirical).then_some(count);
    PairwisePmfSet::new(n, k, matrices, source, sample_count)
}

/// Binary layout, little-endian: magic `NTSM`, `N: u64`, `n: u32`, `k: u32`,
/// then `N * n` symbols as `u8`, row-major by sample.
pub fn write_samples_binary<W: Write>(s: &SampleMatrix, mut w: W) -> Result<()> {
    w.write_all(SAMPLES_MAGIC)?;
    w.write_all(&(s.n_samples() as u64).to_le_bytes())?;
    w.write_all(&(s.n() as u32).to_le_bytes())?;
    w.write_all(&(s.k() as u32).to_le_bytes())?;
    w.write_all(s.values())?;
    Ok(())
}

pub fn read_samples_binary<R: Read>(mut r: R) -> Result<SampleMatrix> {
    if &read_array::<4, _>(&mut r)? != SAMPLES_MAGIC {
        return Err(Error::Format("not a sample file".into()));
    }
    let n_samples = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let n = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let k = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut values = vec![0u8; n_samples * n];
    r.read_exact(&mut values)?;
    SampleMatrix::new(n_samples, n, k, values)
}

/// Header `x0,...,x{n-1}`, one sample per line.
pub fn write_samples_csv<W: Write>(s: &SampleMatrix, mut w: W) -> Result<()> {
    let header: Vec<String> = (0..s.n()).map(|v| format!("x{v}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..s.n_samples() {
        let row: Vec<String> = s.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn structure_to_json(s: &RecoveredStructure) -> Result<String> {
    Ok(serde_json::to_string_pretty(s)?)
}

pub fn structure_from_json(text: &str) -> Result<RecoveredStructure> {
    let s: RecoveredStructure = serde_json::from_str(text)?;
    s.tree()?;
    Ok(s)
}

/// One `a b` line per edge with `a < b`, sorted.
pub fn edge_list(tree: &Tree) -> String {
    tree.sorted_edges()
        .iter()
        .map(|(a, b)| format!("{a} {b}\n"))
        .collect()
}
