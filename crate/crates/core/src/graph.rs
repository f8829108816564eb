//! The RAN as an undirected cell graph, plus the preprocessing that turns
//! raw LTE/NR attribute maps into normalized `[0, 1]` feature vectors.
//!
//! Vector layout follows the schema: all LTE attributes of a role first, in
//! schema order, then all NR attributes. A cell's slots for the other
//! technology are always 0.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Technology {
    #[serde(rename = "LTE")]
    Lte,
    #[serde(rename = "NR")]
    Nr,
}

impl std::fmt::Display for Technology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Technology::Lte => "LTE",
            Technology::Nr => "NR",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Predictor,
    Config,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Continuous,
    Discrete,
}

/// How [`crate::inference::recommend_majority`] combines neighbor values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mode,
    Median,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeEntry {
    pub name: String,
    pub technology: Technology,
    pub role: Role,
    pub kind: AttributeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<Aggregation>,
}

/// Ordered attribute list. Entry order fixes vector slot positions.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSchema {
    entries: Vec<AttributeEntry>,
    predictor_slots: Vec<usize>,
    config_slots: Vec<usize>,
}

impl AttributeSchema {
    pub fn new(entries: Vec<AttributeEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert((e.technology, e.role, e.name.as_str())) {
                return Err(Error::InvalidNetwork(format!(
                    "attribute `{}` declared twice for {} {:?}",
                    e.name, e.technology, e.role
                )));
            }
            if e.role == Role::Config && e.aggregation.is_none() {
                return Err(Error::InvalidNetwork(format!(
                    "config attribute `{}` has no aggregation policy",
                    e.name
                )));
            }
        }
        let slots = |role: Role| -> Vec<usize> {
            [Technology::Lte, Technology::Nr]
                .iter()
                .flat_map(|&t| {
                    entries
                        .iter()
                        .enumerate()
                        .filter(move |(_, e)| e.role == role && e.technology == t)
                        .map(|(i, _)| i)
                })
                .collect()
        };
        let predictor_slots = slots(Role::Predictor);
        let config_slots = slots(Role::Config);
        Ok(Self {
            entries,
            predictor_slots,
            config_slots,
        })
    }

    pub fn entries(&self) -> &[AttributeEntry] {
        &self.entries
    }

    /// Predictor attributes in vector-slot order.
    pub fn predictors(&self) -> impl Iterator<Item = &AttributeEntry> + '_ {
        self.predictor_slots.iter().map(|&i| &self.entries[i])
    }

    /// Config attributes in vector-slot order.
    pub fn configs(&self) -> impl Iterator<Item = &AttributeEntry> + '_ {
        self.config_slots.iter().map(|&i| &self.entries[i])
    }

    pub fn predictor_dim(&self) -> usize {
        self.predictor_slots.len()
    }

    pub fn config_dim(&self) -> usize {
        self.config_slots.len()
    }

    /// Hex SHA-256 of the canonical JSON encoding of the entries.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.entries).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell_id: String,
    pub node_id: String,
    pub technology: Technology,
    #[serde(default)]
    pub raw_predictors: BTreeMap<String, f64>,
    #[serde(default)]
    pub raw_configs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    IntraNode,
    InterNode,
}

/// On-disk network format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub schema: Vec<AttributeEntry>,
    pub cells: Vec<CellRecord>,
    #[serde(default)]
    pub edges: Vec<(String, String, EdgeKind)>,
}

/// Undirected cell graph. Immutable once built.
#[derive(Debug, Clone)]
pub struct RanGraph {
    schema: AttributeSchema,
    cells: Vec<CellRecord>,
    index: HashMap<String, usize>,
    /// Keyed by `(i, j)` with `i < j`.
    edges: BTreeMap<(usize, usize), EdgeKind>,
    adjacency: Vec<Vec<usize>>,
}

impl RanGraph {
    /// Validates cells and explicit edges, then adds an intra-node edge
    /// between every pair of cells sharing a `node_id`.
    pub fn new(
        schema: AttributeSchema,
        cells: Vec<CellRecord>,
        explicit_edges: &[(String, String, EdgeKind)],
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(cells.len());
        for (i, c) in cells.iter().enumerate() {
            if index.insert(c.cell_id.clone(), i).is_some() {
                return Err(Error::DuplicateCell(c.cell_id.clone()));
            }
            validate_cell_attributes(&schema, c)?;
        }

        let mut edges = BTreeMap::new();
        for (a, b, kind) in explicit_edges {
            let i = *index.get(a).ok_or_else(|| Error::UnknownCell(a.clone()))?;
            let j = *index.get(b).ok_or_else(|| Error::UnknownCell(b.clone()))?;
            if i == j {
                return Err(Error::InvalidNetwork(format!("self-loop on cell `{a}`")));
            }
            let same_node = cells[i].node_id == cells[j].node_id;
            if *kind == EdgeKind::IntraNode && !same_node {
                return Err(Error::InvalidNetwork(format!(
                    "intra_node edge between `{a}` and `{b}` on different nodes"
                )));
            }
            let kind = if same_node {
                EdgeKind::IntraNode
            } else {
                *kind
            };
            edges.insert((i.min(j), i.max(j)), kind);
        }

        let mut by_node: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, c) in cells.iter().enumerate() {
            by_node.entry(c.node_id.as_str()).or_default().push(i);
        }
        for members in by_node.values() {
            for (k, &i) in members.iter().enumerate() {
                for &j in &members[k + 1..] {
                    edges.insert((i, j), EdgeKind::IntraNode);
                }
            }
        }

        let mut adjacency = vec![Vec::new(); cells.len()];
        for &(i, j) in edges.keys() {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }

        Ok(Self {
            schema,
            cells,
            index,
            edges,
            adjacency,
        })
    }

    pub fn from_file_contents(file: NetworkFile) -> Result<Self> {
        let schema = AttributeSchema::new(file.schema)?;
        Self::new(schema, file.cells, &file.edges)
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            schema: self.schema.entries.clone(),
            cells: self.cells.clone(),
            edges: self
                .edges
                .iter()
                .map(|(&(i, j), &k)| {
                    (
                        self.cells[i].cell_id.clone(),
                        self.cells[j].cell_id.clone(),
                        k,
                    )
                })
                .collect(),
        }
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn cells(&self) -> &[CellRecord] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, idx: usize) -> &CellRecord {
        &self.cells[idx]
    }

    pub fn index_of(&self, cell_id: &str) -> Result<usize> {
        self.index
            .get(cell_id)
            .copied()
            .ok_or_else(|| Error::UnknownCell(cell_id.to_string()))
    }

    /// Number of LTE cells (N).
    pub fn lte_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.technology == Technology::Lte)
            .count()
    }

    /// Number of NR cells (M).
    pub fn nr_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.technology == Technology::Nr)
            .count()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, EdgeKind)> + '_ {
        self.edges.iter().map(|(&(i, j), &k)| (i, j, k))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains_key(&(i.min(j), i.max(j)))
    }

    /// Sorted neighbor indices of cell `idx`.
    pub fn adjacent(&self, idx: usize) -> &[usize] {
        &self.adjacency[idx]
    }

    /// Neighbor ids of a cell.
    pub fn neighbors(&self, cell_id: &str) -> Result<BTreeSet<String>> {
        let i = self.index_of(cell_id)?;
        Ok(self.adjacency[i]
            .iter()
            .map(|&j| self.cells[j].cell_id.clone())
            .collect())
    }
}

fn validate_cell_attributes(schema: &AttributeSchema, cell: &CellRecord) -> Result<()> {
    let check = |map: &BTreeMap<String, f64>, role: Role| -> Result<()> {
        for (name, v) in map {
            let known = schema
                .entries
                .iter()
                .any(|e| e.role == role && e.technology == cell.technology && &e.name == name);
            if !known {
                return Err(Error::InvalidNetwork(format!(
                    "cell `{}` ({}) carries `{name}`, which is not a {} {:?} attribute",
                    cell.cell_id, cell.technology, cell.technology, role
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "cell `{}` attribute `{name}` is not finite",
                    cell.cell_id
                )));
            }
        }
        Ok(())
    };
    check(&cell.raw_predictors, Role::Predictor)?;
    check(&cell.raw_configs, Role::Config)
}

pub fn parse_network(text: &str) -> Result<RanGraph> {
    let file: NetworkFile = serde_json::from_str(text).map_err(Error::json)?;
    RanGraph::from_file_contents(file)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<RanGraph> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    parse_network(&text)
}

/// Min/max of one attribute over the training cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRange {
    pub name: String,
    pub technology: Technology,
    pub min: f64,
    pub max: f64,
    /// Distinct observed training values, ascending. Kept for discrete
    /// config attributes only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observed: Vec<f64>,
}

impl AttributeRange {
    fn normalize(&self, v: f64) -> f64 {
        if self.max > self.min {
            ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    fn denormalize(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    /// One range per predictor slot.
    pub predictors: Vec<AttributeRange>,
    /// One range per config slot.
    pub configs: Vec<AttributeRange>,
}

/// Normalized predictor (`x`) and config (`y`) vectors of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVectors {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn fit_normalization(graph: &RanGraph, train_ids: &[String]) -> Result<NormalizationStats> {
    if train_ids.is_empty() {
        return Err(Error::Empty("training cell set".into()));
    }
    let train: Vec<&CellRecord> = train_ids
        .iter()
        .map(|id| graph.index_of(id).map(|i| graph.cell(i)))
        .collect::<Result<_>>()?;

    let fit = |entry: &AttributeEntry| -> Result<AttributeRange> {
        let values: Vec<f64> = train
            .iter()
            .filter(|c| c.technology == entry.technology)
            .filter_map(|c| match entry.role {
                Role::Predictor => c.raw_predictors.get(&entry.name),
                Role::Config => c.raw_configs.get(&entry.name),
            })
            .copied()
            .collect();
        if values.is_empty() {
            return Err(Error::UnobservedAttribute(format!(
                "{}/{}",
                entry.technology, entry.name
            )));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let observed = if entry.role == Role::Config && entry.kind == AttributeKind::Discrete {
            let mut v = values.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        } else {
            Vec::new()
        };
        Ok(AttributeRange {
            name: entry.name.clone(),
            technology: entry.technology,
            min,
            max,
            observed,
        })
    };

    let schema = graph.schema();
    Ok(NormalizationStats {
        predictors: schema.predictors().map(fit).collect::<Result<_>>()?,
        configs: schema.configs().map(fit).collect::<Result<_>>()?,
    })
}

/// Maps a cell to `[0, 1]` vectors. Values outside the training range
/// clamp, a constant attribute maps to 0, and absent values (including the
/// whole other-technology block) are 0.
pub fn vectorize(
    cell: &CellRecord,
    stats: &NormalizationStats,
    schema: &AttributeSchema,
) -> FeatureVectors {
    let block =
        |entries: Vec<&AttributeEntry>, ranges: &[AttributeRange], map: &BTreeMap<String, f64>| {
            entries
                .iter()
                .zip(ranges)
                .map(|(e, r)| {
                    if e.technology != cell.technology {
                        return 0.0;
                    }
                    map.get(&e.name).map_or(0.0, |&v| r.normalize(v))
                })
                .collect::<Vec<f64>>()
        };
    FeatureVectors {
        x: block(
            schema.predictors().collect(),
            &stats.predictors,
            &cell.raw_predictors,
        ),
        y: block(
            schema.configs().collect(),
            &stats.configs,
            &cell.raw_configs,
        ),
    }
}

/// Inverts the config normalization for the slots of one technology.
/// Discrete attributes snap to the nearest value observed in training
/// (ties go to the smaller value).
pub fn denormalize(
    y_hat: &[f64],
    stats: &NormalizationStats,
    schema: &AttributeSchema,
    technology: Technology,
) -> Result<BTreeMap<String, f64>> {
    if y_hat.len() != schema.config_dim() {
        return Err(Error::Shape(format!(
            "config vector of length {} for {} config slots",
            y_hat.len(),
            schema.config_dim()
        )));
    }
    let mut out = BTreeMap::new();
    for ((entry, range), &u) in schema.configs().zip(&stats.configs).zip(y_hat) {
        if entry.technology != technology {
            continue;
        }
        let raw = range.denormalize(u);
        let value = if entry.kind == AttributeKind::Discrete && !range.observed.is_empty() {
            nearest_observed(&range.observed, raw)
        } else {
            raw
        };
        out.insert(entry.name.clone(), value);
    }
    Ok(out)
}

fn nearest_observed(observed: &[f64], v: f64) -> f64 {
    let mut best = observed[0];
    for &o in &observed[1..] {
        if (o - v).abs() < (best - v).abs() {
            best = o;
        }
    }
    best
}
