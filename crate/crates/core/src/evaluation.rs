//! Accuracy, projections, model comparison and deployment scenarios.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::anomaly::{self, AnomalyReport};
use crate::checkpoint::Checkpoint;
use crate::encoder::{ArchConfig, GnnModel, ModelKind};
use crate::error::{Error, Result};
use crate::graph::{denormalize, fit_normalization, vectorize, NormalizationStats, RanGraph};
use crate::inference::{self, add_to_store, embed_new_cell, EmbeddingStore, RecommendMode, Source};
use crate::numeric::cosine;
use crate::sampler::{
    build_dataset_round, featurize, sample_subgraph, split, DatasetEntry, SamplerConfig,
};
use crate::synth::{self, GroundTruth, SynthSpec};
use crate::training::{train_gae_with, train_sgnn_with, ContrastiveConfig, EpochData, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub accuracy: f64,
    /// One cosine per input cell; `None` for excluded cells.
    pub cosines: Vec<Option<f64>>,
    /// Indices of cells with a zero vector on either side.
    pub excluded: Vec<usize>,
}

/// Mean cosine similarity between true and predicted config vectors.
pub fn accuracy(truth: &[Vec<f64>], predicted: &[Vec<f64>]) -> Result<AccuracyReport> {
    if truth.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} true vectors against {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut cosines = Vec::with_capacity(truth.len());
    let mut excluded = Vec::new();
    for (i, (y, y_hat)) in truth.iter().zip(predicted).enumerate() {
        match cosine(y, y_hat) {
            Ok(c) => cosines.push(Some(c)),
            Err(Error::UndefinedCosine) => {
                cosines.push(None);
                excluded.push(i);
            }
            Err(e) => return Err(e),
        }
    }
    let valid: Vec<f64> = cosines.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::Empty("no cell has a defined cosine".into()));
    }
    Ok(AccuracyReport {
        accuracy: valid.iter().sum::<f64>() / valid.len() as f64,
        cosines,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub components: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
    pub mean: Vec<f64>,
    pub points: Vec<[f64; 2]>,
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors as columns)`, unsorted.
pub fn symmetric_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i][i]).collect(), v)
}

/// Top-2 principal components of mean-centered rows. Each component's
/// first coordinate above 1e-12 in magnitude is made positive.
pub fn pca_project(embeddings: &[Vec<f64>]) -> Result<Projection2D> {
    let n = embeddings.len();
    if n < 3 {
        return Err(Error::Empty(format!(
            "PCA needs at least 3 points, got {n}"
        )));
    }
    let d = embeddings[0].len();
    if d < 2 || embeddings.iter().any(|r| r.len() != d) {
        return Err(Error::Shape(format!(
            "PCA needs rows of a common dim ≥ 2, got {d}"
        )));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| embeddings.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(a, m)| a - m).collect())
        .collect();
    if centered.iter().flatten().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("all points are identical".into()));
    }
    let cov: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| centered.iter().map(|r| r[a] * r[b]).sum::<f64>() / (n - 1) as f64)
                .collect()
        })
        .collect();
    let (values, vectors) = symmetric_eigen(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let component = |k: usize| -> Vec<f64> {
        let mut c: Vec<f64> = (0..d).map(|i| vectors[i][order[k]]).collect();
        if let Some(first) = c.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                c.iter_mut().for_each(|v| *v = -*v);
            }
        }
        c
    };
    let components = [component(0), component(1)];
    let points = centered
        .iter()
        .map(|r| {
            let dot = |c: &[f64]| r.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [dot(&components[0]), dot(&components[1])]
        })
        .collect();
    Ok(Projection2D {
        explained_variance: [values[order[0]].max(0.0), values[order[1]].max(0.0)],
        components,
        mean,
        points,
    })
}

/// Area under the ROC curve via the rank-sum statistic; tied scores
/// share their average rank.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            positive.len()
        )));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Empty(
            "ROC-AUC needs both positive and negative cases".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * avg_rank;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Settings for an end-to-end run; read from a flat TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub training: ContrastiveConfig,
    pub arch: ArchConfig,
    pub fanout: usize,
    pub test_fraction: f64,
    pub mode: RecommendMode,
    pub k: usize,
    pub threshold: f64,
    pub trees: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            training: ContrastiveConfig::default(),
            arch: ArchConfig::default(),
            fanout: crate::sampler::DEFAULT_FANOUT,
            test_fraction: 0.2,
            mode: RecommendMode::Closest,
            k: inference::DEFAULT_K,
            threshold: anomaly::DEFAULT_THRESHOLD,
            trees: anomaly::DEFAULT_TREES,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
            Error::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        self.arch.validate()?;
        SamplerConfig::new(self.fanout, self.training.seed)?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "test_fraction {} is outside (0, 1)",
                self.test_fraction
            )));
        }
        if self.k == 0 || self.trees == 0 {
            return Err(Error::InvalidConfig("k and trees must be positive".into()));
        }
        Ok(())
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            fanout: self.fanout,
            seed: self.training.seed,
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, column)
}

/// A network split into train and test cells with fitted normalization and
/// round-0 subgraphs for every cell.
#[derive(Debug, Clone)]
pub struct PreparedNetwork {
    pub graph: RanGraph,
    pub stats: NormalizationStats,
    pub sampler: SamplerConfig,
    /// One entry per cell, in graph order.
    pub entries: Vec<DatasetEntry>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl PreparedNetwork {
    pub fn new(graph: RanGraph, cfg: &ExperimentConfig) -> Result<Self> {
        let all: Vec<usize> = (0..graph.len()).collect();
        let (train, test) = split(&all, cfg.test_fraction, cfg.training.seed)?;
        let train_ids: Vec<String> = train
            .iter()
            .map(|&i| graph.cell(i).cell_id.clone())
            .collect();
        let stats = fit_normalization(&graph, &train_ids)?;
        let sampler = cfg.sampler();
        let entries = build_dataset_round(&graph, &stats, &sampler, 0)?;
        Ok(Self {
            graph,
            stats,
            sampler,
            entries,
            train,
            test,
        })
    }

    pub fn train_entries(&self) -> Vec<DatasetEntry> {
        self.train
            .iter()
            .map(|&i| self.entries[i].clone())
            .collect()
    }

    pub fn checkpoint(&self, model: &GnnModel) -> Checkpoint {
        Checkpoint::new(model, self.graph.schema(), &self.stats, &self.sampler)
    }

    /// Store of the given cells' embeddings and normalized configs.
    pub fn store(&self, model: &GnnModel, cells: &[usize]) -> Result<EmbeddingStore> {
        let mut store = EmbeddingStore::with_encoder(model.clone());
        for &i in cells {
            let e = &self.entries[i];
            add_to_store(
                &mut store,
                &e.subgraph.center,
                model.encode_center(&e.subgraph)?,
                e.target.clone(),
            )?;
        }
        Ok(store)
    }
}

/// Training entries, resampled per epoch when asked to.
struct TrainData<'a> {
    prepared: &'a PreparedNetwork,
    resample: bool,
    current: Vec<DatasetEntry>,
    round: usize,
}

impl<'a> TrainData<'a> {
    fn new(prepared: &'a PreparedNetwork, resample: bool) -> Self {
        Self {
            prepared,
            resample,
            current: prepared.train_entries(),
            round: 0,
        }
    }
}

impl EpochData for TrainData<'_> {
    fn entries(&mut self, epoch: usize) -> Result<&[DatasetEntry]> {
        if self.resample && epoch != self.round {
            let p = self.prepared;
            let all = build_dataset_round(&p.graph, &p.stats, &p.sampler, epoch)?;
            self.current = p.train.iter().map(|&i| all[i].clone()).collect();
            self.round = epoch;
        }
        Ok(&self.current)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Untrained,
    Gae,
    Sgnn,
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Untrained => "untrained",
            Self::Gae => "gae",
            Self::Sgnn => "sgnn",
        })
    }
}

pub fn train_model(
    tag: ModelTag,
    prepared: &PreparedNetwork,
    cfg: &ExperimentConfig,
) -> Result<(GnnModel, TrainReport)> {
    let mut data = TrainData::new(prepared, cfg.training.resample_per_epoch);
    match tag {
        ModelTag::Sgnn => train_sgnn_with(&mut data, &cfg.arch, &cfg.training),
        ModelTag::Gae => train_gae_with(&mut data, &cfg.arch, &cfg.training),
        ModelTag::Untrained => {
            let input_dim = prepared.graph.schema().predictor_dim();
            let model = GnnModel::init(ModelKind::Sgnn, &cfg.arch, input_dim, cfg.training.seed)?;
            Ok((
                model,
                TrainReport {
                    model: ModelKind::Sgnn,
                    epoch_losses: Vec::new(),
                    wall_time_secs: 0.0,
                    checkpoint: None,
                },
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: ModelTag,
    /// `train` or `test`.
    #[serde(rename = "type")]
    pub kind: String,
    pub split: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct ModelEvaluation {
    pub tag: ModelTag,
    pub model: GnnModel,
    pub report: TrainReport,
    pub train_accuracy: AccuracyReport,
    pub test_accuracy: AccuracyReport,
    /// Embedding of every cell, in graph order.
    pub embeddings: Vec<Vec<f64>>,
}

/// Train accuracy is leave-one-out over the training store; test accuracy
/// queries the training store with each test cell.
pub fn evaluate_model(
    tag: ModelTag,
    prepared: &PreparedNetwork,
    cfg: &ExperimentConfig,
) -> Result<ModelEvaluation> {
    let (model, report) = train_model(tag, prepared, cfg)?;
    let embeddings = prepared
        .entries
        .iter()
        .map(|e| model.encode_center(&e.subgraph))
        .collect::<Result<Vec<_>>>()?;
    let mut store = EmbeddingStore::with_encoder(model.clone());
    for &i in &prepared.train {
        add_to_store(
            &mut store,
            &prepared.entries[i].subgraph.center,
            embeddings[i].clone(),
            prepared.entries[i].target.clone(),
        )?;
    }
    let schema = prepared.graph.schema();
    let predict = |store: &EmbeddingStore, i: usize| -> Result<Vec<f64>> {
        let k = cfg.k.min(store.len());
        Ok(inference::recommend(store, &embeddings[i], cfg.mode, k, schema)?.y_hat)
    };
    let score = |cells: &[usize], loo: bool| -> Result<AccuracyReport> {
        let truth: Vec<Vec<f64>> = cells
            .iter()
            .map(|&i| prepared.entries[i].target.clone())
            .collect();
        let pred = cells
            .iter()
            .map(|&i| {
                if loo {
                    predict(&store.without(&prepared.entries[i].subgraph.center), i)
                } else {
                    predict(&store, i)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        accuracy(&truth, &pred)
    };
    let train_accuracy = score(&prepared.train, true)?;
    let test_accuracy = score(&prepared.test, false)?;
    Ok(ModelEvaluation {
        tag,
        model,
        report,
        train_accuracy,
        test_accuracy,
        embeddings,
    })
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub rows: Vec<TableRow>,
    pub evaluations: Vec<ModelEvaluation>,
    pub projections: Vec<(ModelTag, Projection2D)>,
    pub cell_ids: Vec<String>,
}

/// Untrained, GAE and S-GNN accuracy on both splits, plus 2-D projections
/// of each model's embeddings of every cell.
pub fn compare_models(
    graph: RanGraph,
    cfg: &ExperimentConfig,
    split_tag: &str,
) -> Result<ComparisonReport> {
    let prepared = PreparedNetwork::new(graph, cfg)?;
    let mut rows = Vec::new();
    let mut evaluations = Vec::new();
    let mut projections = Vec::new();
    for tag in [ModelTag::Untrained, ModelTag::Gae, ModelTag::Sgnn] {
        let ev = evaluate_model(tag, &prepared, cfg)?;
        log::info!(
            "{tag}: train {:.4}, test {:.4}",
            ev.train_accuracy.accuracy,
            ev.test_accuracy.accuracy
        );
        for (kind, acc) in [("train", &ev.train_accuracy), ("test", &ev.test_accuracy)] {
            rows.push(TableRow {
                model: tag,
                kind: kind.into(),
                split: split_tag.into(),
                accuracy: acc.accuracy,
            });
        }
        projections.push((tag, pca_project(&ev.embeddings)?));
        evaluations.push(ev);
    }
    Ok(ComparisonReport {
        rows,
        evaluations,
        projections,
        cell_ids: prepared
            .graph
            .cells()
            .iter()
            .map(|c| c.cell_id.clone())
            .collect(),
    })
}

/// ROC-AUC of isolation-forest scores over S-GNN embeddings of every cell
/// against the generator's corrupted set.
pub fn detection_auc(
    graph: RanGraph,
    truth: &GroundTruth,
    cfg: &ExperimentConfig,
) -> Result<(f64, AnomalyReport)> {
    let prepared = PreparedNetwork::new(graph, cfg)?;
    let (model, _) = train_model(ModelTag::Sgnn, &prepared, cfg)?;
    let all: Vec<usize> = (0..prepared.graph.len()).collect();
    let store = prepared.store(&model, &all)?;
    let report = anomaly::detect(&store, cfg.threshold, cfg.training.seed)?;
    let corrupted = truth.corrupted();
    let scores: Vec<f64> = report.cells.iter().map(|c| c.score).collect();
    let labels: Vec<bool> = report
        .cells
        .iter()
        .map(|c| corrupted.contains(&c.cell_id))
        .collect();
    Ok((roc_auc(&scores, &labels)?, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecommendation {
    pub cell_id: String,
    pub mode: RecommendMode,
    /// Denormalized attribute values of the cell's technology.
    pub y_hat: BTreeMap<String, f64>,
    pub sources: Vec<Source>,
    pub anomaly_score: f64,
    #[serde(skip)]
    pub y_hat_normalized: Vec<f64>,
}

/// Recommends configs for `new_ids` in order. Each recommendation is added
/// to the store before the next cell is processed. Anomaly scores come from
/// a forest fitted on the store as it was on entry.
pub fn recommend_new_cells(
    checkpoint: &Checkpoint,
    store: &mut EmbeddingStore,
    graph: &RanGraph,
    new_ids: &[String],
    mode: RecommendMode,
    k: usize,
    trees: usize,
) -> Result<Vec<CellRecommendation>> {
    checkpoint.verify_schema(graph.schema())?;
    let schema = graph.schema();
    let features = featurize(graph, &checkpoint.normalization);
    let z0: Vec<Vec<f64>> = store.records().iter().map(|r| r.z.clone()).collect();
    let forest = if z0.len() >= 2 {
        anomaly::fit_forest(
            &z0,
            trees,
            anomaly::DEFAULT_SUBSAMPLE.min(z0.len()),
            checkpoint.sampler.seed,
        )
        .ok()
    } else {
        None
    };
    let mut out = Vec::with_capacity(new_ids.len());
    for id in new_ids {
        if store.contains(id) {
            return Err(Error::DuplicateCell(id.clone()));
        }
        let idx = graph.index_of(id)?;
        let mut stream = checkpoint.sampler.cell_stream(id, 0);
        let sg = sample_subgraph(graph, &features, id, &checkpoint.sampler, &mut stream)?;
        let z = embed_new_cell(store, &sg)?;
        let rec = inference::recommend(store, &z, mode, k, schema)?;
        let y_hat = denormalize(
            &rec.y_hat,
            &checkpoint.normalization,
            schema,
            graph.cell(idx).technology,
        )?;
        let anomaly_score = match &forest {
            Some(f) => anomaly::anomaly_score(f, &z)?,
            None => 0.5,
        };
        add_to_store(store, id, z, rec.y_hat.clone())?;
        out.push(CellRecommendation {
            cell_id: id.clone(),
            mode,
            y_hat,
            sources: rec.sources,
            anomaly_score,
            y_hat_normalized: rec.y_hat,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Expansion,
    Greenfield,
    Modification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// New cells (expansion), new sites (greenfield) or cells to corrupt.
    pub count: usize,
    /// Offset size in attribute ranges; modification only.
    pub magnitude: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind == ScenarioKind::Modification && !(self.magnitude > 0.0) {
            return Err(Error::InvalidConfig(
                "modification needs a positive corruption magnitude".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub corrupted: Vec<String>,
    pub flagged: Vec<String>,
    pub flagged_corrupted: usize,
    /// `None` when the network has no corrupted or no clean cells.
    pub auc: Option<f64>,
    /// Leave-one-out closest-neighbour configs for the flagged cells.
    pub corrections: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub kind: ScenarioKind,
    pub new_cells: Vec<String>,
    pub accuracy: Option<f64>,
    pub recommendations: Vec<CellRecommendation>,
    pub detection: Option<DetectionSummary>,
}

/// Runs one deployment scenario against a trained checkpoint and its
/// training store on a generated network.
pub fn run_scenario(
    spec: &ScenarioSpec,
    checkpoint: &Checkpoint,
    store: &EmbeddingStore,
    graph: &RanGraph,
    truth: &GroundTruth,
    synth_spec: &SynthSpec,
    cfg: &ExperimentConfig,
) -> Result<ScenarioReport> {
    spec.validate()?;
    checkpoint.verify_schema(graph.schema())?;
    match spec.kind {
        ScenarioKind::Expansion | ScenarioKind::Greenfield => {
            let (grown, _, new_ids) = if spec.kind == ScenarioKind::Expansion {
                synth::expand(graph, truth, synth_spec, spec.count, spec.seed)?
            } else {
                synth::greenfield(graph, truth, synth_spec, spec.count, spec.seed)?
            };
            let mut store = store.clone();
            let k = cfg.k.min(store.len());
            let recs = recommend_new_cells(
                checkpoint, &mut store, &grown, &new_ids, cfg.mode, k, cfg.trees,
            )?;
            let accuracy = if recs.is_empty() {
                None
            } else {
                let schema = grown.schema();
                let truth_y: Vec<Vec<f64>> = new_ids
                    .iter()
                    .map(|id| {
                        Ok(vectorize(
                            grown.cell(grown.index_of(id)?),
                            &checkpoint.normalization,
                            schema,
                        )
                        .y)
                    })
                    .collect::<Result<_>>()?;
                let pred: Vec<Vec<f64>> = recs.iter().map(|r| r.y_hat_normalized.clone()).collect();
                Some(accuracy(&truth_y, &pred)?.accuracy)
            };
            Ok(ScenarioReport {
                kind: spec.kind,
                new_cells: new_ids,
                accuracy,
                recommendations: recs,
                detection: None,
            })
        }
        ScenarioKind::Modification => {
            let (modified, new_truth, _) =
                synth::corrupt_cells(graph, truth, spec.count, spec.magnitude, spec.seed)?;
            let model = checkpoint.to_model()?;
            let features = featurize(&modified, &checkpoint.normalization);
            let mut full = EmbeddingStore::with_encoder(model.clone());
            for (i, cell) in modified.cells().iter().enumerate() {
                let mut stream = checkpoint.sampler.cell_stream(&cell.cell_id, 0);
                let sg = sample_subgraph(
                    &modified,
                    &features,
                    &cell.cell_id,
                    &checkpoint.sampler,
                    &mut stream,
                )?;
                add_to_store(
                    &mut full,
                    &cell.cell_id,
                    model.encode_center(&sg)?,
                    features[i].y.clone(),
                )?;
            }
            let report = anomaly::detect(&full, cfg.threshold, spec.seed)?;
            let corrupted: BTreeSet<String> = new_truth
                .corrupted()
                .into_iter()
                .filter(|id| modified.index_of(id).is_ok())
                .collect();
            let scores: Vec<f64> = report.cells.iter().map(|c| c.score).collect();
            let labels: Vec<bool> = report
                .cells
                .iter()
                .map(|c| corrupted.contains(&c.cell_id))
                .collect();
            let auc = roc_auc(&scores, &labels).ok();
            let flagged: Vec<String> = report.flagged().into_iter().map(String::from).collect();
            let mut corrections = BTreeMap::new();
            for id in &flagged {
                let record = full.get(id).expect("scored cell is stored").z.clone();
                let rec = inference::recommend_closest(&full.without(id), &record)?;
                let tech = modified.cell(modified.index_of(id)?).technology;
                corrections.insert(
                    id.clone(),
                    denormalize(
                        &rec.y_hat,
                        &checkpoint.normalization,
                        modified.schema(),
                        tech,
                    )?,
                );
            }
            Ok(ScenarioReport {
                kind: spec.kind,
                new_cells: Vec::new(),
                accuracy: None,
                recommendations: Vec::new(),
                detection: Some(DetectionSummary {
                    flagged_corrupted: flagged.iter().filter(|id| corrupted.contains(*id)).count(),
                    corrupted: corrupted.into_iter().collect(),
                    flagged,
                    auc,
                    corrections,
                }),
            })
        }
    }
}
