//! One-hop subgraph extraction around each cell and dataset assembly.

use std::rc::Rc;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{vectorize, FeatureVectors, NormalizationStats, RanGraph};
use crate::numeric::Matrix;
use crate::rng::{self, Stream};

pub const DEFAULT_FANOUT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Maximum number of sampled neighbors.
    pub fanout: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(fanout: usize, seed: u64) -> Result<Self> {
        if fanout == 0 {
            return Err(Error::InvalidConfig("fanout must be at least 1".into()));
        }
        Ok(Self { fanout, seed })
    }

    /// Substream for one cell. `round` distinguishes per-epoch resamples;
    /// round 0 is the dataset build.
    pub fn cell_stream(&self, cell_id: &str, round: usize) -> Stream {
        rng::substream(self.seed, &format!("sampler/{round}"), cell_id)
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            fanout: DEFAULT_FANOUT,
            seed: 0,
        }
    }
}

/// A center cell, its sampled neighbors, and the induced edges.
///
/// Vertex 0 is always the center. `edges` hold local vertex indices
/// `(i, j)` with `i < j`; self-loops are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub center: String,
    pub neighbors: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    /// One predictor row per vertex, center first.
    pub features: Matrix,
}

impl Subgraph {
    pub fn vertex_count(&self) -> usize {
        1 + self.neighbors.len()
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.center.as_str()).chain(self.neighbors.iter().map(String::as_str))
    }

    /// Row-major `n×n` attention mask: induced edges plus self-loops.
    pub fn attention_mask(&self) -> Rc<[bool]> {
        let n = self.vertex_count();
        let mut mask = vec![false; n * n];
        for i in 0..n {
            mask[i * n + i] = true;
        }
        for &(i, j) in &self.edges {
            mask[i * n + j] = true;
            mask[j * n + i] = true;
        }
        mask.into()
    }

    /// Reorders the neighbor list; `order` is a permutation of
    /// `0..neighbors.len()`.
    pub fn permute_neighbors(&self, order: &[usize]) -> Subgraph {
        let n = self.vertex_count();
        // new local index of each old vertex
        let mut new_of_old = vec![0; n];
        for (new_pos, &old) in order.iter().enumerate() {
            new_of_old[old + 1] = new_pos + 1;
        }
        let mut rows = vec![self.features.row(0).to_vec()];
        rows.extend(order.iter().map(|&o| self.features.row(o + 1).to_vec()));
        let mut edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (new_of_old[i], new_of_old[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        edges.sort_unstable();
        Subgraph {
            center: self.center.clone(),
            neighbors: order.iter().map(|&o| self.neighbors[o].clone()).collect(),
            edges,
            features: Matrix::from_rows(&rows).expect("rows share a width"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub subgraph: Subgraph,
    /// Normalized config vector of the center.
    pub target: Vec<f64>,
}

/// Normalized vectors for every cell, in graph order.
pub fn featurize(graph: &RanGraph, stats: &NormalizationStats) -> Vec<FeatureVectors> {
    graph
        .cells()
        .iter()
        .map(|c| vectorize(c, stats, graph.schema()))
        .collect()
}

pub fn neighbors(graph: &RanGraph, cell_id: &str) -> Result<std::collections::BTreeSet<String>> {
    graph.neighbors(cell_id)
}

/// Samples `min(fanout, degree)` distinct neighbors of `center` uniformly
/// and returns the induced subgraph with predictor rows from `features`.
pub fn sample_subgraph(
    graph: &RanGraph,
    features: &[FeatureVectors],
    center: &str,
    cfg: &SamplerConfig,
    stream: &mut impl Rng,
) -> Result<Subgraph> {
    let c = graph.index_of(center)?;
    let adj = graph.adjacent(c);
    let k = cfg.fanout.min(adj.len());
    let mut picked: Vec<usize> = sample(stream, adj.len(), k)
        .into_iter()
        .map(|p| adj[p])
        .collect();
    picked.sort_unstable();

    let vertices: Vec<usize> = std::iter::once(c).chain(picked.iter().copied()).collect();
    let mut edges = Vec::new();
    for a in 0..vertices.len() {
        for b in a + 1..vertices.len() {
            if graph.has_edge(vertices[a], vertices[b]) {
                edges.push((a, b));
            }
        }
    }
    let width = features.first().map_or(0, |f| f.x.len());
    let mut data = Vec::with_capacity(vertices.len() * width);
    for &v in &vertices {
        data.extend_from_slice(&features[v].x);
    }
    Ok(Subgraph {
        center: center.to_string(),
        neighbors: picked
            .iter()
            .map(|&i| graph.cell(i).cell_id.clone())
            .collect(),
        edges,
        features: Matrix::new(vertices.len(), width, data)?,
    })
}

/// One entry per cell, in graph order.
pub fn build_dataset(
    graph: &RanGraph,
    stats: &NormalizationStats,
    cfg: &SamplerConfig,
) -> Result<Vec<DatasetEntry>> {
    build_dataset_round(graph, stats, cfg, 0)
}

/// [`build_dataset`] with the per-cell substreams of resample `round`.
pub fn build_dataset_round(
    graph: &RanGraph,
    stats: &NormalizationStats,
    cfg: &SamplerConfig,
    round: usize,
) -> Result<Vec<DatasetEntry>> {
    let features = featurize(graph, stats);
    graph
        .cells()
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let mut stream = cfg.cell_stream(&cell.cell_id, round);
            let subgraph = sample_subgraph(graph, &features, &cell.cell_id, cfg, &mut stream)?;
            Ok(DatasetEntry {
                subgraph,
                target: features[i].y.clone(),
            })
        })
        .collect()
}

/// Seeded shuffle split into `(train, test)`; each side keeps input order.
/// The test side gets `round(n·test_fraction)` items, kept within `1..n`
/// when `n ≥ 2`.
pub fn split<T: Clone>(items: &[T], test_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test fraction {test_fraction} is outside (0, 1)"
        )));
    }
    let n = items.len();
    let mut n_test = (n as f64 * test_fraction).round() as usize;
    if n >= 2 {
        n_test = n_test.clamp(1, n - 1);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::substream(seed, "split", ""));
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (item, t) in items.iter().zip(is_test) {
        if t {
            test.push(item.clone());
        } else {
            train.push(item.clone());
        }
    }
    Ok((train, test))
}
