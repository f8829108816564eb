//! Inductive recommendation by nearest neighbours in embedding space.

use std::collections::{HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::encoder::GnnModel;
use crate::error::{Error, Result};
use crate::graph::{Aggregation, AttributeSchema};
use crate::numeric::l2_distance;
use crate::sampler::Subgraph;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub cell_id: String,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

/// Append-only set of embedded cells plus the frozen encoder that made them.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    encoder: Option<GnnModel>,
    dim: usize,
    records: Vec<StoreRecord>,
    ids: HashSet<String>,
}

impl EmbeddingStore {
    pub fn with_encoder(encoder: GnnModel) -> Self {
        Self {
            dim: encoder.embedding_dim(),
            encoder: Some(encoder),
            records: Vec::new(),
            ids: HashSet::new(),
        }
    }

    /// A store without an encoder; only pre-computed embeddings can be added.
    pub fn detached(dim: usize) -> Self {
        Self {
            encoder: None,
            dim,
            records: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn encoder(&self) -> Option<&GnnModel> {
        self.encoder.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[StoreRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, cell_id: &str) -> bool {
        self.ids.contains(cell_id)
    }

    pub fn get(&self, cell_id: &str) -> Option<&StoreRecord> {
        self.records.iter().find(|r| r.cell_id == cell_id)
    }

    /// Copy without the record of `cell_id`, for leave-one-out queries.
    pub fn without(&self, cell_id: &str) -> Self {
        let mut out = Self {
            encoder: self.encoder.clone(),
            dim: self.dim,
            records: Vec::with_capacity(self.records.len()),
            ids: HashSet::with_capacity(self.records.len()),
        };
        for r in self.records.iter().filter(|r| r.cell_id != cell_id) {
            out.ids.insert(r.cell_id.clone());
            out.records.push(r.clone());
        }
        out
    }
}

/// Closest or majority recommendation, dispatching on `mode`.
pub fn recommend(
    store: &EmbeddingStore,
    z: &[f64],
    mode: RecommendMode,
    k: usize,
    schema: &AttributeSchema,
) -> Result<Recommendation> {
    match mode {
        RecommendMode::Closest => recommend_closest(store, z),
        RecommendMode::Majority => recommend_majority(store, z, k, schema),
    }
}

/// Center-vertex embedding of a new cell's subgraph. The store is unchanged.
pub fn embed_new_cell(store: &EmbeddingStore, subgraph: &Subgraph) -> Result<Vec<f64>> {
    let encoder = store
        .encoder
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("store has no encoder".into()))?;
    let z = encoder.encode_center(subgraph)?;
    if z.len() != store.dim {
        return Err(Error::Shape(format!(
            "embedding of dim {} for a store of dim {}",
            z.len(),
            store.dim
        )));
    }
    Ok(z)
}

pub fn add_to_store(
    store: &mut EmbeddingStore,
    cell_id: &str,
    z: Vec<f64>,
    y: Vec<f64>,
) -> Result<()> {
    if store.ids.contains(cell_id) {
        return Err(Error::DuplicateCell(cell_id.to_string()));
    }
    if z.len() != store.dim {
        return Err(Error::Shape(format!(
            "embedding of dim {} for a store of dim {}",
            z.len(),
            store.dim
        )));
    }
    if let Some(first) = store.records.first() {
        if first.y.len() != y.len() {
            return Err(Error::Shape(format!(
                "config vector of length {} for a store of length {}",
                y.len(),
                first.y.len()
            )));
        }
    }
    store.ids.insert(cell_id.to_string());
    store.records.push(StoreRecord {
        cell_id: cell_id.to_string(),
        z,
        y,
    });
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEntry {
    pub cell_id: String,
    pub distance: f64,
    /// Position of the record in the store.
    #[serde(skip)]
    pub record: usize,
}

/// Distances to every stored record, ascending by `(distance, cell_id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSet {
    entries: VecDeque<DistanceEntry>,
    removed: usize,
}

impl DistanceSet {
    pub fn entries(&self) -> impl Iterator<Item = &DistanceEntry> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn removed(&self) -> usize {
        self.removed
    }
}

pub fn distance_set(store: &EmbeddingStore, z: &[f64]) -> Result<DistanceSet> {
    if store.is_empty() {
        return Err(Error::Empty("embedding store".into()));
    }
    if z.len() != store.dim {
        return Err(Error::Shape(format!(
            "query of dim {} for a store of dim {}",
            z.len(),
            store.dim
        )));
    }
    let mut entries = store
        .records
        .iter()
        .enumerate()
        .map(|(record, r)| {
            Ok(DistanceEntry {
                cell_id: r.cell_id.clone(),
                distance: l2_distance(z, &r.z)?,
                record,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.cell_id.cmp(&b.cell_id))
    });
    Ok(DistanceSet {
        entries: entries.into(),
        removed: 0,
    })
}

/// Removes and returns the current minimum.
pub fn pop_min(mut set: DistanceSet) -> Result<(DistanceEntry, DistanceSet)> {
    let entry = set
        .entries
        .pop_front()
        .ok_or_else(|| Error::Empty("distance set".into()))?;
    set.removed += 1;
    Ok((entry, set))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommendMode {
    Closest,
    Majority,
}

impl std::str::FromStr for RecommendMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closest" => Ok(Self::Closest),
            "majority" => Ok(Self::Majority),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode `{other}`, expected closest or majority"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub cell_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    /// Normalized config vector.
    pub y_hat: Vec<f64>,
    pub mode: RecommendMode,
    pub sources: Vec<Source>,
    pub k: usize,
}

/// Config of the nearest stored record; distance ties go to the smaller id.
pub fn recommend_closest(store: &EmbeddingStore, z: &[f64]) -> Result<Recommendation> {
    let (best, _) = pop_min(distance_set(store, z)?)?;
    Ok(Recommendation {
        y_hat: store.records[best.record].y.clone(),
        mode: RecommendMode::Closest,
        sources: vec![Source {
            cell_id: best.cell_id,
            distance: best.distance,
        }],
        k: 1,
    })
}

/// Aggregates the `k` nearest records slot by slot with each config
/// attribute's policy.
pub fn recommend_majority(
    store: &EmbeddingStore,
    z: &[f64],
    k: usize,
    schema: &AttributeSchema,
) -> Result<Recommendation> {
    if k == 0 || k > store.len() {
        return Err(Error::KOutOfRange {
            k,
            size: store.len(),
        });
    }
    let mut set = distance_set(store, z)?;
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let (entry, rest) = pop_min(set)?;
        picked.push(entry);
        set = rest;
    }
    let dim = store.records[picked[0].record].y.len();
    if schema.config_dim() != dim {
        return Err(Error::Shape(format!(
            "schema has {} config slots, store vectors have {dim}",
            schema.config_dim()
        )));
    }
    let y_hat = schema
        .configs()
        .enumerate()
        .map(|(slot, entry)| {
            let values: Vec<f64> = picked
                .iter()
                .map(|p| store.records[p.record].y[slot])
                .collect();
            match entry.aggregation.unwrap_or(Aggregation::Median) {
                Aggregation::Mode => mode_nearest_first(&values),
                Aggregation::Median => median(&values),
                Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
            }
        })
        .collect();
    Ok(Recommendation {
        y_hat,
        mode: RecommendMode::Majority,
        sources: picked
            .into_iter()
            .map(|p| Source {
                cell_id: p.cell_id,
                distance: p.distance,
            })
            .collect(),
        k,
    })
}

/// Most frequent value; among equally frequent values, the one that
/// appears first (`values` is ordered nearest first).
pub fn mode_nearest_first(values: &[f64]) -> f64 {
    let mut best = values[0];
    let mut best_count = 0;
    for (i, &v) in values.iter().enumerate() {
        if values[..i].contains(&v) {
            continue;
        }
        let count = values.iter().filter(|&&w| w == v).count();
        if count > best_count {
            best = v;
            best_count = count;
        }
    }
    best
}

/// Middle value, or the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// On-disk store: the inference-only checkpoint plus all records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreFile {
    pub checkpoint: Checkpoint,
    pub records: Vec<StoreRecord>,
}

impl StoreFile {
    pub fn new(checkpoint: &Checkpoint, store: &EmbeddingStore) -> Self {
        Self {
            checkpoint: checkpoint.encoder_only(),
            records: store.records.clone(),
        }
    }

    pub fn into_store(self) -> Result<(Checkpoint, EmbeddingStore)> {
        let model = self.checkpoint.to_model()?;
        let mut store = EmbeddingStore::with_encoder(model);
        for r in self.records {
            add_to_store(&mut store, &r.cell_id, r.z, r.y)?;
        }
        Ok((self.checkpoint, store))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(Error::json)
    }
}
