use std::path::Path;

use serde::Serialize;

use ranrec_core::anomaly;
use ranrec_core::checkpoint::Checkpoint;
use ranrec_core::evaluation::{
    compare_models, pca_project, recommend_new_cells, train_model, ExperimentConfig, ModelTag,
    PreparedNetwork,
};
use ranrec_core::graph::{parse_network, RanGraph};
use ranrec_core::inference::{add_to_store, EmbeddingStore, RecommendMode, StoreFile};
use ranrec_core::sampler::build_dataset_round;
use ranrec_core::synth::{generate, learnability_check, SynthSpec};

use crate::error::CliError;
use crate::io::{read_text, sibling, write_atomic, write_csv, write_json, Run};
use crate::{ModeArg, ModelArg};

fn shown(path: &Path) -> String {
    path.display().to_string()
}

fn load_network(path: &Path) -> Result<RanGraph, CliError> {
    parse_network(&read_text(path)?).map_err(|e| CliError::core(&shown(path), e))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => {
            ExperimentConfig::from_toml(&read_text(p)?).map_err(|e| CliError::core(&shown(p), e))
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_store(path: &Path) -> Result<(Checkpoint, EmbeddingStore), CliError> {
    let file: StoreFile = serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", shown(path))))?;
    file.into_store()
        .map_err(|e| CliError::core(&shown(path), e))
}

fn validated(cfg: ExperimentConfig) -> Result<ExperimentConfig, CliError> {
    cfg.validate().map_err(|e| CliError::core("config", e))?;
    Ok(cfg)
}

pub fn synth(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let mut run = Run::start("synth");
    let mut spec = match config {
        Some(p) => {
            run.input(p);
            toml::from_str::<SynthSpec>(&read_text(p)?)
                .map_err(|e| CliError::Validation(format!("{}: {e}", shown(p))))?
        }
        None => SynthSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (graph, truth) = generate(&spec).map_err(|e| CliError::core("synth spec", e))?;
    let learn = learnability_check(&graph, &truth);
    log::info!(
        "{} cells, {} edges; cluster-mean oracle accuracy {:.4} (learnable: {})",
        graph.len(),
        graph.edge_count(),
        learn.oracle_accuracy,
        learn.learnable
    );
    let truth_path = out.with_extension("truth.json");
    write_json(out, &graph.to_file())?;
    write_json(&truth_path, &truth.sidecar())?;
    run.output(out);
    run.output(&truth_path);
    run.finish(out, spec.seed, &spec)
}

pub fn train(
    network: &Path,
    config: Option<&Path>,
    model: ModelArg,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let mut run = Run::start("train");
    run.input(network);
    if let Some(p) = config {
        run.input(p);
    }
    let graph = load_network(network)?;
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.training.seed = s;
    }
    let cfg = validated(cfg)?;
    let prepared =
        PreparedNetwork::new(graph, &cfg).map_err(|e| CliError::core(&shown(network), e))?;
    let tag = match model {
        ModelArg::Sgnn => ModelTag::Sgnn,
        ModelArg::Gae => ModelTag::Gae,
    };
    let (trained, mut report) =
        train_model(tag, &prepared, &cfg).map_err(|e| CliError::core("training", e))?;
    log::info!(
        "{tag}: {} epochs in {:.1}s, final loss {:?}",
        report.epoch_losses.len(),
        report.wall_time_secs,
        report.epoch_losses.last()
    );
    let checkpoint = prepared.checkpoint(&trained);
    let text = checkpoint
        .to_json()
        .map_err(|e| CliError::core("checkpoint", e))?;
    write_atomic(out, text.as_bytes())?;
    report.checkpoint = out.file_name().map(|n| n.to_string_lossy().into_owned());
    let report_path = sibling(out, ".report.json");
    write_json(&report_path, &report)?;
    run.output(out);
    run.output(&report_path);
    run.finish(out, cfg.training.seed, &cfg)
}

pub fn embed(
    network: &Path,
    checkpoint: &Path,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let mut run = Run::start("embed");
    run.input(network);
    run.input(checkpoint);
    let graph = load_network(network)?;
    let mut ckpt = Checkpoint::from_json(&read_text(checkpoint)?)
        .map_err(|e| CliError::core(&shown(checkpoint), e))?;
    ckpt.verify_schema(graph.schema())
        .map_err(|e| CliError::core(&shown(checkpoint), e))?;
    if let Some(s) = seed {
        ckpt.sampler.seed = s;
    }
    let model = ckpt
        .to_model()
        .map_err(|e| CliError::core(&shown(checkpoint), e))?;
    let entries = build_dataset_round(&graph, &ckpt.normalization, &ckpt.sampler, 0)
        .map_err(|e| CliError::core(&shown(network), e))?;
    let mut store = EmbeddingStore::with_encoder(model.clone());
    for e in entries {
        let z = model
            .encode_center(&e.subgraph)
            .map_err(|e| CliError::core("encoding", e))?;
        add_to_store(&mut store, &e.subgraph.center, z, e.target)
            .map_err(|e| CliError::core(&shown(network), e))?;
    }
    log::info!("embedded {} cells", store.len());
    write_json(out, &StoreFile::new(&ckpt, &store))?;
    run.output(out);
    run.finish(out, ckpt.sampler.seed, &ckpt.sampler)
}

pub struct RecommendArgs<'a> {
    pub store: &'a Path,
    pub cells: &'a Path,
    pub config: Option<&'a Path>,
    pub mode: Option<ModeArg>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub out: &'a Path,
}

#[derive(Serialize)]
struct RecommendSettings {
    mode: RecommendMode,
    k: usize,
    trees: usize,
    seed: u64,
}

pub fn recommend(args: &RecommendArgs) -> Result<(), CliError> {
    let mut run = Run::start("recommend");
    run.input(args.store);
    run.input(args.cells);
    if let Some(p) = args.config {
        run.input(p);
    }
    let cfg = load_config(args.config)?;
    let (mut ckpt, mut store) = load_store(args.store)?;
    let graph = load_network(args.cells)?;
    if let Some(s) = args.seed {
        ckpt.sampler.seed = s;
    }
    let mode = match args.mode {
        Some(ModeArg::Closest) => RecommendMode::Closest,
        Some(ModeArg::Majority) => RecommendMode::Majority,
        None => cfg.mode,
    };
    let k = args.k.unwrap_or(cfg.k);
    if k == 0 || k > store.len() {
        return Err(CliError::Validation(format!(
            "K = {k} is out of range for a store of {} records ({})",
            store.len(),
            shown(args.store)
        )));
    }
    let new_ids: Vec<String> = graph
        .cells()
        .iter()
        .filter(|c| !store.contains(&c.cell_id))
        .map(|c| c.cell_id.clone())
        .collect();
    if new_ids.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: every cell is already in the store",
            shown(args.cells)
        )));
    }
    let recs = recommend_new_cells(&ckpt, &mut store, &graph, &new_ids, mode, k, cfg.trees)
        .map_err(|e| CliError::core(&shown(args.cells), e))?;
    log::info!("{} recommendations ({mode:?}, K = {k})", recs.len());
    write_json(args.out, &recs)?;
    run.output(args.out);
    let settings = RecommendSettings {
        mode,
        k,
        trees: cfg.trees,
        seed: ckpt.sampler.seed,
    };
    run.finish(args.out, ckpt.sampler.seed, &settings)
}

#[derive(Serialize)]
struct DetectSettings {
    threshold: f64,
    trees: usize,
    seed: u64,
}

pub fn detect(
    store: &Path,
    config: Option<&Path>,
    threshold: Option<f64>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let mut run = Run::start("detect");
    run.input(store);
    if let Some(p) = config {
        run.input(p);
    }
    let cfg = load_config(config)?;
    let threshold = threshold.unwrap_or(cfg.threshold);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::Validation(format!(
            "threshold {threshold} is outside [0, 1]"
        )));
    }
    let seed = seed.unwrap_or(cfg.training.seed);
    let (_, store) = load_store(store)?;
    let report =
        anomaly::detect(&store, threshold, seed).map_err(|e| CliError::core("detection", e))?;
    log::info!(
        "{} of {} cells flagged",
        report.flagged().len(),
        report.cells.len()
    );
    write_json(out, &report)?;
    run.output(out);
    let settings = DetectSettings {
        threshold,
        trees: anomaly::DEFAULT_TREES,
        seed,
    };
    run.finish(out, seed, &settings)
}

#[derive(Serialize)]
struct ProjectionRow<'a> {
    cell_id: &'a str,
    pc1: f64,
    pc2: f64,
}

pub fn evaluate(
    network: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let mut run = Run::start("evaluate");
    run.input(network);
    if let Some(p) = config {
        run.input(p);
    }
    let graph = load_network(network)?;
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.training.seed = s;
    }
    let cfg = validated(cfg)?;
    let split_tag = network
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "network".into());
    let report =
        compare_models(graph, &cfg, &split_tag).map_err(|e| CliError::core("evaluation", e))?;
    write_csv(out, &report.rows)?;
    run.output(out);
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    for (tag, projection) in &report.projections {
        let path = out.with_file_name(format!("{stem}.{tag}.projection.csv"));
        let rows: Vec<ProjectionRow> = report
            .cell_ids
            .iter()
            .zip(&projection.points)
            .map(|(id, p)| ProjectionRow {
                cell_id: id,
                pc1: p[0],
                pc2: p[1],
            })
            .collect();
        write_csv(&path, &rows)?;
        run.output(&path);
    }
    run.finish(out, cfg.training.seed, &cfg)
}

pub fn project(store: &Path, out: &Path) -> Result<(), CliError> {
    let mut run = Run::start("project");
    run.input(store);
    let (ckpt, store) = load_store(store)?;
    let z: Vec<Vec<f64>> = store.records().iter().map(|r| r.z.clone()).collect();
    let projection = pca_project(&z).map_err(|e| CliError::core("projection", e))?;
    let rows: Vec<ProjectionRow> = store
        .records()
        .iter()
        .zip(&projection.points)
        .map(|(r, p)| ProjectionRow {
            cell_id: &r.cell_id,
            pc1: p[0],
            pc2: p[1],
        })
        .collect();
    write_csv(out, &rows)?;
    run.output(out);
    run.finish(
        out,
        ckpt.seed,
        &serde_json::json!({ "explained_variance": projection.explained_variance }),
    )
}
