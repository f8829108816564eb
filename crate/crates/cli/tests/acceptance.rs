//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs under `cargo test` without the libtest harness so the report is
//! always printed. The process exits 0 unless `RANREC_ACCEPTANCE_STRICT`
//! is set, in which case any FAIL makes it exit 1. `RANREC_ACCEPTANCE_ONLY`
//! takes a comma-separated list of criterion numbers to run.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use ranrec_core::anomaly::{anomaly_score, fit_forest, DEFAULT_SUBSAMPLE, DEFAULT_TREES};
use ranrec_core::encoder::{ArchConfig, GnnModel, ModelKind};
use ranrec_core::evaluation::{
    compare_models, detection_auc, pca_project, ExperimentConfig, ModelTag,
};
use ranrec_core::graph::{
    fit_normalization, Aggregation, AttributeEntry, AttributeKind, AttributeSchema, CellRecord,
    EdgeKind, FeatureVectors, RanGraph, Role, Technology,
};
use ranrec_core::inference::{
    add_to_store, recommend_closest, recommend_majority, EmbeddingStore, Recommendation,
};
use ranrec_core::numeric::{compare_gradients, l2_distance, CoordinateCheck, Matrix};
use ranrec_core::rng::{self, Stream};
use ranrec_core::sampler::{build_dataset, sample_subgraph, SamplerConfig, Subgraph};
use ranrec_core::synth::{generate, learnability_check, SynthSpec, LEARNABILITY_THRESHOLD};
use ranrec_core::training::{
    config_similarity, contrastive_loss, contrastive_objective_on, contrastive_value,
    reconstruction_objective_on, LossForm,
};

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }

    fn detail(mut self, line: impl Into<String>) -> Self {
        self.details.push(line.into());
        self
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let criteria: [(u8, &str, fn() -> Outcome); 8] = [
        (1, "reproducibility statement", statement),
        (2, "gradient correctness", gradients),
        (3, "kNN oracle equivalence", knn_oracle),
        (4, "synthetic benchmark", benchmark),
        (5, "misconfiguration detection", detection),
        (6, "loss-form values", loss_values),
        (7, "structural invariants", invariants),
        (8, "determinism audit", determinism),
    ];
    // e.g. RANREC_ACCEPTANCE_ONLY=2,6 runs a subset
    let only: Option<Vec<u8>> = std::env::var("RANREC_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let outcome = run();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} criterion {id} ({name}): {} [{:.1}s]",
            outcome.summary,
            started.elapsed().as_secs_f64()
        );
        for d in &outcome.details {
            println!("       {d}");
        }
        failed += usize::from(!outcome.pass);
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 && std::env::var_os("RANREC_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

fn statement() -> Outcome {
    Outcome::new(
        true,
        "operator-network accuracies (0.888 to 0.991) need proprietary data and are not reproduced here; \
         criteria 2 to 8 use property checks and a synthetic benchmark instead",
    )
}

// ---- criterion 2 ----

fn gradcheck_arch() -> ArchConfig {
    ArchConfig {
        layers: 2,
        heads: 2,
        head_dim: 6,
        ffn_hidden: 12,
        hidden_dim: 8,
        embedding_dim: 6,
        slope: 0.2,
    }
}

const GRAD_INPUT_DIM: usize = 8;

/// Connected subgraph on 3 to 6 vertices: a random tree plus extra edges.
fn random_subgraph(s: &mut Stream, dim: usize, max_vertices: usize) -> Subgraph {
    let n = s.random_range(3..=max_vertices);
    let mut edges = BTreeSet::new();
    for v in 1..n {
        edges.insert((s.random_range(0..v), v));
    }
    for _ in 0..s.random_range(0..=n) {
        let (i, j) = (s.random_range(0..n), s.random_range(0..n));
        if i != j {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    Subgraph {
        center: "center".into(),
        neighbors: (1..n).map(|i| format!("n{i}")).collect(),
        edges: edges.into_iter().collect(),
        features: Matrix::new(
            n,
            dim,
            (0..n * dim).map(|_| s.random_range(0.0..1.0)).collect(),
        )
        .unwrap(),
    }
}

fn random_model(
    kind: ModelKind,
    arch: &ArchConfig,
    dim: usize,
    seed: u64,
    s: &mut Stream,
) -> GnnModel {
    let mut m = GnnModel::init(kind, arch, dim, seed).unwrap();
    for p in m.params.iter_mut().filter(|p| p.name.contains(".b")) {
        for v in p.value.data_mut() {
            *v = s.random_range(-0.5..0.5);
        }
    }
    m
}

struct GradSummary {
    cases_passing: usize,
    worst_relative: f64,
    coordinates: usize,
    coordinates_relative_ok: usize,
    coordinates_agreeing: usize,
    worst_absolute: f64,
    /// Coordinates at or above 1e-4 relative, by parameter kind.
    failing_by_kind: BTreeMap<String, usize>,
    /// Failing coordinates where both derivatives are below the 1e-8 floor.
    failing_below_floor: usize,
}

impl GradSummary {
    fn new() -> Self {
        Self {
            cases_passing: 0,
            worst_relative: 0.0,
            coordinates: 0,
            coordinates_relative_ok: 0,
            coordinates_agreeing: 0,
            worst_absolute: 0.0,
            failing_by_kind: BTreeMap::new(),
            failing_below_floor: 0,
        }
    }

    fn add(&mut self, checks: &[CoordinateCheck]) {
        let worst = checks
            .iter()
            .map(CoordinateCheck::relative_error)
            .fold(0.0, f64::max);
        self.worst_relative = self.worst_relative.max(worst);
        self.cases_passing += usize::from(worst < 1e-4);
        for c in checks {
            self.coordinates += 1;
            self.coordinates_relative_ok += usize::from(c.relative_error() < 1e-4);
            self.coordinates_agreeing += usize::from(
                c.absolute_error() <= 1e-4 * (c.analytic.abs() + c.numeric.abs()) + 1e-9,
            );
            self.worst_absolute = self.worst_absolute.max(c.absolute_error());
            if c.relative_error() >= 1e-4 {
                let kind = c.param.rsplit('.').next().unwrap_or(&c.param).to_string();
                *self.failing_by_kind.entry(kind).or_default() += 1;
                self.failing_below_floor += usize::from(c.analytic.abs() + c.numeric.abs() < 1e-8);
            }
        }
    }

    fn line(&self, name: &str, cases: usize) -> String {
        format!(
            "{name}: {}/{cases} cases with max relative error < 1e-4 (worst {:.2e}); \
             {}/{} coordinates < 1e-4 relative; {}/{} within 1e-4 relative + 1e-9 absolute (worst absolute {:.2e})",
            self.cases_passing,
            self.worst_relative,
            self.coordinates_relative_ok,
            self.coordinates,
            self.coordinates_agreeing,
            self.coordinates,
            self.worst_absolute
        )
    }

    fn failing_line(&self, name: &str) -> String {
        let kinds: Vec<String> = self
            .failing_by_kind
            .iter()
            .map(|(k, n)| format!("{k} {n}"))
            .collect();
        let failing: usize = self.failing_by_kind.values().sum();
        format!(
            "{name} coordinates at or above 1e-4 relative: {} ({failing}); {} of them have |g_ad| + |g_fd| < 1e-8",
            kinds.join(", "),
            self.failing_below_floor
        )
    }
}

fn gradients() -> Outcome {
    const CASES: u64 = 20;
    let started = Instant::now();
    let arch = gradcheck_arch();

    let mut sgnn = GradSummary::new();
    for case in 0..CASES {
        let mut s = rng::substream(case, "acceptance-gradcheck", "sgnn");
        let mut model = random_model(ModelKind::Sgnn, &arch, GRAD_INPUT_DIM, case, &mut s);
        let sgs: Vec<Subgraph> = (0..4)
            .map(|_| random_subgraph(&mut s, GRAD_INPUT_DIM, 6))
            .collect();
        let pairs = [
            (&sgs[0], &sgs[1], s.random_range(-1.0..1.0)),
            (&sgs[2], &sgs[3], s.random_range(-1.0..1.0)),
        ];
        let frozen = model.clone();
        // keep every negative pair inside the margin, away from the hinge kink
        let margin = 1.5
            * pairs
                .iter()
                .map(|(a, b, _)| {
                    l2_distance(
                        &frozen.encode_center(a).unwrap(),
                        &frozen.encode_center(b).unwrap(),
                    )
                    .unwrap()
                })
                .fold(0.0, f64::max);
        let checks = compare_gradients(&mut model.params, |t, v| {
            contrastive_objective_on(t, v, &frozen, &pairs, margin, LossForm::Standard)
        })
        .unwrap();
        sgnn.add(&checks);
    }

    let mut gae = GradSummary::new();
    for case in 0..CASES {
        let mut s = rng::substream(case, "acceptance-gradcheck", "gae");
        let mut model = random_model(ModelKind::Gae, &arch, GRAD_INPUT_DIM, case, &mut s);
        let sgs: Vec<Subgraph> = (0..2)
            .map(|_| random_subgraph(&mut s, GRAD_INPUT_DIM, 6))
            .collect();
        let refs: Vec<&Subgraph> = sgs.iter().collect();
        let frozen = model.clone();
        let checks = compare_gradients(&mut model.params, |t, v| {
            reconstruction_objective_on(t, v, &frozen, &refs)
        })
        .unwrap();
        gae.add(&checks);
    }

    let secs = started.elapsed().as_secs_f64();
    let pass =
        sgnn.cases_passing == CASES as usize && gae.cases_passing == CASES as usize && secs < 30.0;
    Outcome::new(
        pass,
        format!(
            "{}/{CASES} S-GNN and {}/{CASES} GAE cases below 1e-4 max relative error in {secs:.1}s (need all, < 30s)",
            sgnn.cases_passing, gae.cases_passing
        ),
    )
    .detail(sgnn.line("S-GNN contrastive objective", CASES as usize))
    .detail(gae.line("GAE reconstruction objective", CASES as usize))
    .detail(sgnn.failing_line("S-GNN"))
    .detail(gae.failing_line("GAE"))
    .detail(
        "failing coordinates have derivatives at or near zero: mostly GATv2 destination weights where softmax cancels \
         a uniform score shift, and, for S-GNN, FFN biases whose effect cancels in a pair's embedding difference. Central differences at h = 1e-6 return rounding noise \
         there (at most 1e-9 absolute above), which the pinned formula divides by its 1e-8 floor",
    )
}

// ---- criterion 3 ----

fn knn_schema() -> AttributeSchema {
    let entry = |name: &str, technology, aggregation| AttributeEntry {
        name: name.into(),
        technology,
        role: Role::Config,
        kind: if aggregation == Aggregation::Mode {
            AttributeKind::Discrete
        } else {
            AttributeKind::Continuous
        },
        aggregation: Some(aggregation),
    };
    AttributeSchema::new(vec![
        entry("power", Technology::Lte, Aggregation::Median),
        entry("band", Technology::Lte, Aggregation::Mode),
        entry("offset", Technology::Lte, Aggregation::Mean),
        entry("band", Technology::Nr, Aggregation::Mode),
        entry("tilt", Technology::Nr, Aggregation::Median),
    ])
    .unwrap()
}

struct OracleRecord {
    id: String,
    z: Vec<f64>,
    y: Vec<f64>,
}

/// Stable sort of all records by distance then id, nearest first.
fn oracle_scan<'a>(records: &'a [OracleRecord], q: &[f64]) -> Vec<(f64, &'a OracleRecord)> {
    let mut scored: Vec<(f64, &OracleRecord)> = records
        .iter()
        .map(|r| {
            let sq: f64 = r.z.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum();
            (sq.sqrt(), r)
        })
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.id.cmp(&b.1.id)));
    scored
}

fn oracle_mode(values: &[f64]) -> f64 {
    // (value, count, first position)
    let mut tally: Vec<(f64, usize, usize)> = Vec::new();
    for (pos, &v) in values.iter().enumerate() {
        match tally.iter_mut().find(|t| t.0 == v) {
            Some(t) => t.1 += 1,
            None => tally.push((v, 1, pos)),
        }
    }
    tally.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    tally[0].0
}

fn oracle_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn oracle_majority(nearest: &[(f64, &OracleRecord)], policies: &[Aggregation]) -> Vec<f64> {
    policies
        .iter()
        .enumerate()
        .map(|(slot, policy)| {
            let values: Vec<f64> = nearest.iter().map(|(_, r)| r.y[slot]).collect();
            match policy {
                Aggregation::Mode => oracle_mode(&values),
                Aggregation::Median => oracle_median(&values),
                Aggregation::Mean => {
                    let mut total = 0.0;
                    for v in &values {
                        total += v;
                    }
                    total / values.len() as f64
                }
            }
        })
        .collect()
}

fn same_sources(rec: &Recommendation, nearest: &[(f64, &OracleRecord)]) -> bool {
    rec.sources.len() == nearest.len()
        && rec
            .sources
            .iter()
            .zip(nearest)
            .all(|(s, (d, r))| s.cell_id == r.id && s.distance == *d)
}

fn knn_oracle() -> Outcome {
    let started = Instant::now();
    let mut s = rng::substream(3, "acceptance", "knn");
    let schema = knn_schema();
    let policies: Vec<Aggregation> = schema.configs().map(|e| e.aggregation.unwrap()).collect();
    let dim = 4;
    // coarse grid coordinates and values make distance and vote ties common
    let grid = |s: &mut Stream| s.random_range(0..4) as f64 * 0.5;
    let mut records: Vec<OracleRecord> = (0..200)
        .map(|i| OracleRecord {
            id: format!("cell-{:03}", (i * 37) % 200),
            z: (0..dim).map(|_| grid(&mut s)).collect(),
            y: (0..policies.len())
                .map(|_| s.random_range(0..5) as f64 * 0.25)
                .collect(),
        })
        .collect();
    records.shuffle(&mut s);
    let mut store = EmbeddingStore::detached(dim);
    for r in &records {
        add_to_store(&mut store, &r.id, r.z.clone(), r.y.clone()).unwrap();
    }

    let mut mismatches = Vec::new();
    for q in 0..1000 {
        let query: Vec<f64> = if q % 2 == 0 {
            (0..dim).map(|_| grid(&mut s)).collect()
        } else {
            (0..dim).map(|_| s.random_range(-0.5..2.0)).collect()
        };
        let k = if q % 100 == 0 {
            200
        } else {
            s.random_range(1..=25)
        };
        let scan = oracle_scan(&records, &query);

        let closest = recommend_closest(&store, &query).unwrap();
        if closest.y_hat != scan[0].1.y || !same_sources(&closest, &scan[..1]) {
            mismatches.push(format!("closest, query {q}"));
        }
        let majority = recommend_majority(&store, &query, k, &schema).unwrap();
        if majority.y_hat != oracle_majority(&scan[..k], &policies)
            || !same_sources(&majority, &scan[..k])
        {
            mismatches.push(format!("majority K = {k}, query {q}"));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let mut out = Outcome::new(
        mismatches.is_empty() && secs < 10.0,
        format!(
            "{} mismatches over 1000 queries x 2 modes against a 200-record store in {secs:.2}s (need 0, < 10s)",
            mismatches.len()
        ),
    );
    for m in mismatches.iter().take(5) {
        out = out.detail(m.clone());
    }
    out
}

// ---- criterion 4 ----

fn benchmark() -> Outcome {
    let started = Instant::now();
    let spec = SynthSpec::default();
    let clean = SynthSpec {
        config_noise: 0.0,
        ..spec.clone()
    };
    let (g0, t0) = generate(&clean).unwrap();
    let learn = learnability_check(&g0, &t0);

    let (graph, _) = generate(&spec).unwrap();
    let cfg = ExperimentConfig::default();
    let report = compare_models(graph, &cfg, "synthetic").unwrap();
    let test_acc = |tag: ModelTag| {
        report
            .evaluations
            .iter()
            .find(|e| e.tag == tag)
            .map(|e| e.test_accuracy.accuracy)
            .unwrap()
    };
    let (untrained, gae, sgnn) = (
        test_acc(ModelTag::Untrained),
        test_acc(ModelTag::Gae),
        test_acc(ModelTag::Sgnn),
    );
    let secs = started.elapsed().as_secs_f64();

    let checks = [
        (
            learn.oracle_accuracy >= LEARNABILITY_THRESHOLD,
            format!(
                "learnability oracle {:.4} >= 0.98 at zero noise",
                learn.oracle_accuracy
            ),
        ),
        (
            sgnn >= 0.95,
            format!("S-GNN test accuracy {sgnn:.4} >= 0.95"),
        ),
        (
            sgnn >= untrained + 0.03,
            format!("S-GNN - untrained = {:.4} >= 0.03", sgnn - untrained),
        ),
        (
            gae > untrained,
            format!("GAE {gae:.4} > untrained {untrained:.4}"),
        ),
        (secs < 300.0, format!("{secs:.1}s < 300s")),
    ];
    let mut out = Outcome::new(
        checks.iter().all(|c| c.0),
        format!(
            "test accuracy untrained {untrained:.4}, GAE {gae:.4}, S-GNN {sgnn:.4} on {} cells",
            spec.total_cells()
        ),
    );
    for (ok, line) in checks {
        out = out.detail(format!("[{}] {line}", if ok { "ok" } else { "no" }));
    }
    out
}

// ---- criterion 5 ----

fn detection() -> Outcome {
    let started = Instant::now();
    let mut aucs = Vec::new();
    for seed in 0..5 {
        let spec = SynthSpec {
            misconfig_rate: 0.05,
            misconfig_magnitude: 5.0,
            seed,
            ..Default::default()
        };
        let (graph, truth) = generate(&spec).unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.training.seed = seed;
        let (auc, _) = detection_auc(graph, &truth, &cfg).unwrap();
        aucs.push(auc);
    }
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    let secs = started.elapsed().as_secs_f64();
    let per_seed: Vec<String> = aucs.iter().map(|a| format!("{a:.3}")).collect();
    Outcome::new(
        mean >= 0.85 && secs < 120.0,
        format!("mean ROC-AUC {mean:.3} over 5 seeds in {secs:.1}s (need >= 0.85, < 120s)"),
    )
    .detail(format!("per seed: {}", per_seed.join(", ")))
    .detail(
        "embeddings are computed from predictor attributes and topology only, while corruption changes \
         config attributes only, so corrupted cells embed like their clean twins",
    )
}

// ---- criterion 6 ----

fn loss_values() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    let cases = [
        (
            "c=1, D=0.5",
            contrastive_value(1.0, 0.5, 1.0, LossForm::Standard),
            0.5,
        ),
        (
            "c=-1, D=0.2, M=1",
            contrastive_value(-1.0, 0.2, 1.0, LossForm::Standard),
            0.8,
        ),
        (
            "hinge saturated (c=-1, D=1.7, M=1)",
            contrastive_value(-1.0, 1.7, 1.0, LossForm::Standard),
            0.0,
        ),
        (
            "embedding pair at D=0.5, c=1",
            contrastive_loss(1.0, &[0.1, 0.1], &[0.4, 0.5], 1.0).unwrap(),
            0.5,
        ),
        (
            "identical configs",
            config_similarity(&[0.3, 0.9, 0.2], &[0.3, 0.9, 0.2]).unwrap(),
            1.0,
        ),
        (
            "orthogonal configs",
            config_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            -1.0,
        ),
        (
            // 0.41421356 written out exactly
            "(1,0) vs (1,1)",
            config_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap(),
            2f64.sqrt() - 1.0,
        ),
    ];
    let bad: Vec<String> = cases
        .iter()
        .filter(|(_, got, want)| !close(*got, *want))
        .map(|(name, got, want)| format!("{name}: got {got}, want {want}"))
        .collect();
    let mut out = Outcome::new(
        bad.is_empty(),
        format!(
            "{}/{} worked values within 1e-9",
            cases.len() - bad.len(),
            cases.len()
        ),
    );
    for b in bad {
        out = out.detail(b);
    }
    out
}

// ---- criterion 7 ----

fn star(degree: usize) -> RanGraph {
    let cell = |id: String, node: String| CellRecord {
        cell_id: id,
        node_id: node,
        technology: Technology::Lte,
        raw_predictors: Default::default(),
        raw_configs: Default::default(),
    };
    let mut cells = vec![cell("hub".into(), "hub-site".into())];
    let mut edges = Vec::new();
    for i in 0..degree {
        let id = format!("leaf{i:02}");
        cells.push(cell(id.clone(), format!("site{i}")));
        edges.push(("hub".to_string(), id, EdgeKind::InterNode));
    }
    RanGraph::new(AttributeSchema::new(vec![]).unwrap(), cells, &edges).unwrap()
}

/// Smallest and largest per-neighbor inclusion frequency over `draws`
/// independent resampling rounds.
fn inclusion_band(degree: usize, fanout: usize, draws: usize) -> (f64, f64) {
    let g = star(degree);
    let features = vec![
        FeatureVectors {
            x: vec![],
            y: vec![]
        };
        g.len()
    ];
    let cfg = SamplerConfig::new(fanout, 17).unwrap();
    let mut counts = vec![0usize; degree];
    for round in 0..draws {
        let sg = sample_subgraph(
            &g,
            &features,
            "hub",
            &cfg,
            &mut cfg.cell_stream("hub", round),
        )
        .unwrap();
        for n in &sg.neighbors {
            counts[n[4..].parse::<usize>().unwrap()] += 1;
        }
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
    (
        freq.iter().cloned().fold(1.0, f64::min),
        freq.iter().cloned().fold(0.0, f64::max),
    )
}

fn invariants() -> Outcome {
    let mut s = rng::substream(7, "acceptance", "invariants");
    let arch = ArchConfig::default();
    let mut checks: Vec<(bool, String)> = Vec::new();

    // encoder permutation invariance and attention rows
    let mut drift: f64 = 0.0;
    let mut row_error: f64 = 0.0;
    let mut masked_leak: f64 = 0.0;
    for case in 0..20 {
        let model = random_model(ModelKind::Sgnn, &arch, GRAD_INPUT_DIM, case, &mut s);
        let sg = random_subgraph(&mut s, GRAD_INPUT_DIM, 9);
        let z = model.encode_center(&sg).unwrap();
        for _ in 0..5 {
            let mut order: Vec<usize> = (0..sg.neighbors.len()).collect();
            order.shuffle(&mut s);
            let zp = model.encode_center(&sg.permute_neighbors(&order)).unwrap();
            drift = drift.max(
                z.iter()
                    .zip(&zp)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            );
        }
        let n = sg.vertex_count();
        let mask = sg.attention_mask();
        for alpha in model.attention(0, &sg, &sg.features).unwrap() {
            for i in 0..n {
                let row: f64 = (0..n).map(|j| alpha.get(i, j)).sum();
                row_error = row_error.max((row - 1.0).abs());
                for j in 0..n {
                    if !mask[i * n + j] {
                        masked_leak = masked_leak.max(alpha.get(i, j).abs());
                    }
                }
            }
        }
    }
    checks.push((
        drift <= 1e-12,
        format!("neighbor permutation drift {drift:.1e} <= 1e-12"),
    ));
    checks.push((
        row_error <= 1e-12 && masked_leak == 0.0,
        format!("attention rows sum to 1 within {row_error:.1e}; masked weight {masked_leak:.1e}"),
    ));

    // sampler determinism and uniformity
    let (net, _) = generate(&SynthSpec {
        sites: 12,
        ..Default::default()
    })
    .unwrap();
    let ids: Vec<String> = net.cells().iter().map(|c| c.cell_id.clone()).collect();
    let stats = fit_normalization(&net, &ids).unwrap();
    let cfg = SamplerConfig::new(3, 5).unwrap();
    let a = build_dataset(&net, &stats, &cfg).unwrap();
    let b = build_dataset(&net, &stats, &cfg).unwrap();
    let other = build_dataset(&net, &stats, &SamplerConfig::new(3, 6).unwrap()).unwrap();
    checks.push((
        a == b && a != other,
        "sampler repeats itself for a fixed seed and changes with the seed".to_string(),
    ));
    let (lo1, hi1) = inclusion_band(10, 1, 10_000);
    let (lo3, hi3) = inclusion_band(30, 3, 10_000);
    checks.push((
        lo1 >= 0.08 && hi1 <= 0.12 && lo3 >= 0.08 && hi3 <= 0.12,
        format!("inclusion frequency in [{lo1:.4}, {hi1:.4}] (fanout 1 of 10) and [{lo3:.4}, {hi3:.4}] (3 of 30) at 10,000 draws"),
    ));

    // PCA
    let mut ortho: f64 = 0.0;
    let mut recon: f64 = 0.0;
    let mut residual_variance: f64 = 0.0;
    for _ in 0..10 {
        let d = 6;
        let basis: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..d).map(|_| s.random_range(-1.0..1.0)).collect())
            .collect();
        let offset: Vec<f64> = (0..d).map(|_| s.random_range(-3.0..3.0)).collect();
        let points: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let (u, v) = (s.random_range(-2.0..2.0), s.random_range(-2.0..2.0));
                (0..d)
                    .map(|k| offset[k] + u * basis[0][k] + v * basis[1][k])
                    .collect()
            })
            .collect();
        let p = pca_project(&points).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let dot: f64 = p.components[i]
                    .iter()
                    .zip(&p.components[j])
                    .map(|(a, b)| a * b)
                    .sum();
                ortho = ortho.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        let total: f64 = (0..d)
            .map(|k| {
                points
                    .iter()
                    .map(|x| (x[k] - p.mean[k]).powi(2))
                    .sum::<f64>()
                    / (points.len() - 1) as f64
            })
            .sum();
        residual_variance = residual_variance
            .max((total - p.explained_variance[0] - p.explained_variance[1]).abs() / total);
        for (x, pt) in points.iter().zip(&p.points) {
            for k in 0..d {
                let back = p.mean[k] + pt[0] * p.components[0][k] + pt[1] * p.components[1][k];
                recon = recon.max((back - x[k]).abs());
            }
        }
    }
    checks.push((
        ortho <= 1e-10,
        format!("PCA components orthonormal within {ortho:.1e}"),
    ));
    checks.push((
        recon <= 1e-9 && residual_variance <= 1e-9,
        format!("rank-2 data reconstructed within {recon:.1e}; unexplained variance share {residual_variance:.1e}"),
    ));

    // isolation forest
    let mut in_range = true;
    let mut outlier_first = 0;
    for seed in 0..100 {
        let mut r = rng::substream(seed, "acceptance", "iforest");
        let mut points: Vec<Vec<f64>> = (0..255)
            .map(|_| (0..8).map(|_| r.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        points.push(vec![4.0; 8]);
        let forest = fit_forest(&points, DEFAULT_TREES, DEFAULT_SUBSAMPLE, seed).unwrap();
        let scores: Vec<f64> = points
            .iter()
            .map(|p| anomaly_score(&forest, p).unwrap())
            .collect();
        in_range &= scores.iter().all(|&v| v > 0.0 && v < 1.0);
        let outlier = scores[255];
        outlier_first += usize::from(scores[..255].iter().all(|&v| v < outlier));
    }
    checks.push((in_range, "every anomaly score lies in (0, 1)".to_string()));
    checks.push((
        outlier_first >= 95,
        format!("planted outlier ranked first in {outlier_first}/100 seeds (need >= 95)"),
    ));

    let passed = checks.iter().filter(|c| c.0).count();
    let mut out = Outcome::new(
        passed == checks.len(),
        format!("{passed}/{} invariant checks hold", checks.len()),
    );
    for (ok, line) in checks {
        out = out.detail(format!("[{}] {line}", if ok { "ok" } else { "no" }));
    }
    out
}

// ---- criterion 8 ----

fn determinism() -> Outcome {
    let synth = "seed = 0\n";
    // every stage runs, with a shortened schedule to bound the audit's runtime
    let run = "seed = 0\nepochs = 20\nk = 5\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    common::pipeline(a.path(), synth, run);
    common::pipeline(b.path(), synth, run);
    let (fa, fb) = (common::artifacts(a.path()), common::artifacts(b.path()));
    let differing: Vec<&String> = fa.keys().filter(|k| fb.get(*k) != fa.get(*k)).collect();
    let same_names = fa.keys().eq(fb.keys());
    let out = Outcome::new(
        same_names && differing.is_empty(),
        format!(
            "{} artifacts from two CLI runs of the full pipeline compared byte for byte, {} differ",
            fa.len(),
            differing.len()
        ),
    )
    .detail(format!(
        "artifacts: {}",
        fa.keys().cloned().collect::<Vec<_>>().join(", ")
    ));
    if differing.is_empty() {
        out
    } else {
        out.detail(format!("differing: {differing:?}"))
    }
}
