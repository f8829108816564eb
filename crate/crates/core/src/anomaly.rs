//! Isolation forest over embeddings.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::EmbeddingStore;
use crate::rng::{self, Stream};

pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_SUBSAMPLE: usize = 256;
pub const DEFAULT_THRESHOLD: f64 = 0.6;
const EULER_GAMMA: f64 = 0.5772156649;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Internal {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

/// Arena-allocated tree; node 0 is the root. Points with `x[dim] < value`
/// go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    nodes: Vec<Node>,
}

impl IsolationTree {
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Empty("isolation tree".into()));
        }
        for n in &nodes {
            if let Node::Internal { left, right, .. } = n {
                if *left >= nodes.len() || *right >= nodes.len() {
                    return Err(Error::InvalidConfig("tree child index out of range".into()));
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Edges traversed plus the leaf adjustment `c(size)`.
    pub fn path_length(&self, z: &[f64]) -> f64 {
        let mut at = 0;
        let mut edges = 0usize;
        loop {
            match self.nodes[at] {
                Node::Internal {
                    dim,
                    value,
                    left,
                    right,
                } => {
                    at = if z[dim] < value { left } else { right };
                    edges += 1;
                }
                Node::Leaf { size } => return edges as f64 + average_path(size),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Internal { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    fn grow(points: &[&[f64]], limit: usize, stream: &mut Stream) -> Self {
        let mut nodes = Vec::new();
        build(points.to_vec(), 0, limit, stream, &mut nodes);
        Self { nodes }
    }
}

fn build(
    points: Vec<&[f64]>,
    depth: usize,
    limit: usize,
    stream: &mut Stream,
    nodes: &mut Vec<Node>,
) -> usize {
    let at = nodes.len();
    nodes.push(Node::Leaf { size: points.len() });
    if depth >= limit || points.len() <= 1 {
        return at;
    }
    let dims = points[0].len();
    let spans: Vec<(usize, f64, f64)> = (0..dims)
        .filter_map(|d| {
            let lo = points.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
            let hi = points
                .iter()
                .map(|p| p[d])
                .fold(f64::NEG_INFINITY, f64::max);
            (hi > lo).then_some((d, lo, hi))
        })
        .collect();
    if spans.is_empty() {
        return at;
    }
    let (dim, lo, hi) = spans[stream.random_range(0..spans.len())];
    let value = loop {
        let v = stream.random_range(lo..hi);
        if v > lo {
            break v;
        }
    };
    let (l, r): (Vec<&[f64]>, Vec<&[f64]>) = points.into_iter().partition(|p| p[dim] < value);
    let left = build(l, depth + 1, limit, stream, nodes);
    let right = build(r, depth + 1, limit, stream, nodes);
    nodes[at] = Node::Internal {
        dim,
        value,
        left,
        right,
    };
    at
}

/// `c(m)`: average unsuccessful-search path length in a binary search tree
/// of `m` points, with `c(1) = 0` and `c(2) = 1`.
pub fn average_path(m: usize) -> f64 {
    match m {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = m as f64;
            2.0 * ((m - 1.0).ln() + EULER_GAMMA) - 2.0 * (m - 1.0) / m
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    pub trees: Vec<IsolationTree>,
    pub subsample: usize,
    pub training_count: usize,
    pub dim: usize,
    pub seed: u64,
}

impl IsolationForest {
    pub fn from_trees(trees: Vec<IsolationTree>, subsample: usize, dim: usize) -> Result<Self> {
        if trees.is_empty() || subsample < 2 {
            return Err(Error::InvalidConfig(
                "a forest needs at least one tree and subsample ≥ 2".into(),
            ));
        }
        Ok(Self {
            trees,
            subsample,
            training_count: subsample,
            dim,
            seed: 0,
        })
    }
}

/// Fits `trees` trees, each on its own uniform subsample of size
/// `subsample` drawn from `substream(seed, "tree", index)`.
pub fn fit_forest(
    embeddings: &[Vec<f64>],
    trees: usize,
    subsample: usize,
    seed: u64,
) -> Result<IsolationForest> {
    let n = embeddings.len();
    if n < 2 {
        return Err(Error::Empty(format!(
            "isolation forest needs at least 2 embeddings, got {n}"
        )));
    }
    if trees == 0 || subsample < 2 || subsample > n {
        return Err(Error::InvalidConfig(format!(
            "need trees ≥ 1 and 2 ≤ subsample ≤ {n}, got trees = {trees}, subsample = {subsample}"
        )));
    }
    let dim = embeddings[0].len();
    if embeddings.iter().any(|z| z.len() != dim) {
        return Err(Error::Shape("embeddings of unequal dimension".into()));
    }
    if embeddings.iter().all(|z| z == &embeddings[0]) {
        return Err(Error::Degenerate(
            "all embeddings are identical, no split exists; report without a threshold instead"
                .into(),
        ));
    }
    let limit = (subsample as f64).log2().ceil() as usize;
    let trees = (0..trees)
        .map(|t| {
            let mut s = rng::substream(seed, "tree", &t.to_string());
            let mut idx = sample(&mut s, n, subsample).into_vec();
            idx.sort_unstable();
            let points: Vec<&[f64]> = idx.iter().map(|&i| embeddings[i].as_slice()).collect();
            IsolationTree::grow(&points, limit, &mut s)
        })
        .collect();
    Ok(IsolationForest {
        trees,
        subsample,
        training_count: n,
        dim,
        seed,
    })
}

/// Mean path length `E(h(z))` over the trees.
pub fn expected_path_length(forest: &IsolationForest, z: &[f64]) -> Result<f64> {
    if z.len() != forest.dim {
        return Err(Error::Shape(format!(
            "point of dim {} for a forest of dim {}",
            z.len(),
            forest.dim
        )));
    }
    let total: f64 = forest.trees.iter().map(|t| t.path_length(z)).sum();
    Ok(total / forest.trees.len() as f64)
}

/// `2^(−E(h(z)) / c(ψ))`.
pub fn anomaly_score(forest: &IsolationForest, z: &[f64]) -> Result<f64> {
    Ok(score_from_path(
        expected_path_length(forest, z)?,
        forest.subsample,
    ))
}

pub fn score_from_path(path: f64, subsample: usize) -> f64 {
    2f64.powf(-path / average_path(subsample))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub cell_id: String,
    pub score: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub threshold: f64,
    /// Descending by score, then ascending by id.
    pub cells: Vec<CellScore>,
}

impl AnomalyReport {
    pub fn flagged(&self) -> Vec<&str> {
        self.cells
            .iter()
            .filter(|c| c.flagged)
            .map(|c| c.cell_id.as_str())
            .collect()
    }

    pub fn score_of(&self, cell_id: &str) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.cell_id == cell_id)
            .map(|c| c.score)
    }
}

pub fn score_network(
    store: &EmbeddingStore,
    forest: &IsolationForest,
    threshold: f64,
) -> Result<AnomalyReport> {
    let mut cells = store
        .records()
        .iter()
        .map(|r| {
            let score = anomaly_score(forest, &r.z)?;
            Ok(CellScore {
                cell_id: r.cell_id.clone(),
                score,
                flagged: score > threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    cells.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.cell_id.cmp(&b.cell_id))
    });
    Ok(AnomalyReport { threshold, cells })
}

/// Fits a forest with the default size on every stored embedding and scores
/// the same records.
pub fn detect(store: &EmbeddingStore, threshold: f64, seed: u64) -> Result<AnomalyReport> {
    let z: Vec<Vec<f64>> = store.records().iter().map(|r| r.z.clone()).collect();
    let forest = fit_forest(&z, DEFAULT_TREES, DEFAULT_SUBSAMPLE.min(z.len()), seed)?;
    score_network(store, &forest, threshold)
}
