//! Training objectives and loops.
//!
//! The Siamese encoder minimizes a contrastive loss whose labels come from
//! configuration similarity `c = 2·cos(y_a, y_b) − 1`; the auto-encoder
//! minimizes the mean row-wise reconstruction error over each subgraph.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{ArchConfig, GnnModel, ModelKind};
use crate::error::{Error, Result};
use crate::numeric::{cosine, l2_distance, Matrix, Parameter, Tape, Var};
use crate::rng::{self, Stream};
use crate::sampler::{DatasetEntry, Subgraph};

/// Candidate pairs examined by the miner are capped at this many; above it
/// the pool is a uniform sample.
pub const MINING_POOL_CAP: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    /// `((1+c)/2)·D + ((1−c)/2)·max(0, M − D)`.
    Standard,
    /// `(1+c)·D + (1−c)·max(0, M) − D`, the expression read literally.
    /// Unbounded below; kept only for comparison runs.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    pub enabled: bool,
    pub hard_fraction: f64,
    /// Pairs with `c` above this count as positives.
    pub sim_high: f64,
    /// Pairs with `c` below this count as negatives.
    pub sim_low: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            hard_fraction: 0.5,
            sim_high: 0.5,
            sim_low: -0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub margin: f64,
    /// Defaults to 10 × the number of training entries.
    pub pairs_per_epoch: Option<usize>,
    pub mining: MiningConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub loss_form: LossForm,
    /// Pairs (S-GNN) or entries (GAE) per optimizer step. Unset means one
    /// full-batch step per epoch.
    pub batch_size: Option<usize>,
    /// Resample every subgraph at the start of each epoch.
    pub resample_per_epoch: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            pairs_per_epoch: None,
            mining: MiningConfig::default(),
            epochs: 200,
            learning_rate: 1e-2,
            seed: 0,
            loss_form: LossForm::Standard,
            batch_size: None,
            resample_per_epoch: false,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.margin > 0.0) {
            return bad(format!("margin {} must be positive", self.margin));
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if !(0.0..=1.0).contains(&self.mining.hard_fraction) {
            return bad(format!(
                "hard_fraction {} is outside [0, 1]",
                self.mining.hard_fraction
            ));
        }
        if !(self.mining.sim_low < self.mining.sim_high) {
            return bad(format!(
                "sim_low {} must be below sim_high {}",
                self.mining.sim_low, self.mining.sim_high
            ));
        }
        if self.batch_size == Some(0) || self.pairs_per_epoch == Some(0) {
            return bad("batch_size and pairs_per_epoch must be positive".into());
        }
        Ok(())
    }

    pub fn pairs_for(&self, train_size: usize) -> usize {
        self.pairs_per_epoch.unwrap_or(10 * train_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub a: usize,
    pub b: usize,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ModelKind,
    pub epoch_losses: Vec<f64>,
    #[serde(skip)]
    pub wall_time_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

/// `2·cos(y_a, y_b) − 1`. Fails for a zero vector.
pub fn config_similarity(y_a: &[f64], y_b: &[f64]) -> Result<f64> {
    Ok(2.0 * cosine(y_a, y_b)? - 1.0)
}

/// Scalar contrastive loss for a pair at embedding distance `distance`.
pub fn contrastive_value(c: f64, distance: f64, margin: f64, form: LossForm) -> f64 {
    match form {
        LossForm::Standard => {
            0.5 * (1.0 + c) * distance + 0.5 * (1.0 - c) * (margin - distance).max(0.0)
        }
        LossForm::Literal => (1.0 + c) * distance + (1.0 - c) * margin.max(0.0) - distance,
    }
}

pub fn contrastive_loss(c: f64, z_a: &[f64], z_b: &[f64], margin: f64) -> Result<f64> {
    Ok(contrastive_value(
        c,
        l2_distance(z_a, z_b)?,
        margin,
        LossForm::Standard,
    ))
}

/// Records the contrastive loss of two `1×d` embeddings on `tape`.
pub fn contrastive_on(
    tape: &mut Tape,
    c: f64,
    z_a: Var,
    z_b: Var,
    margin: f64,
    form: LossForm,
) -> Result<Var> {
    let diff = tape.sub(z_a, z_b)?;
    let dist = tape.row_norm(diff);
    Ok(match form {
        LossForm::Standard => {
            let pull = tape.scale(dist, 0.5 * (1.0 + c));
            let neg = tape.scale(dist, -1.0);
            let gap = tape.add_scalar(neg, margin);
            let hinge = tape.relu(gap);
            let push = tape.scale(hinge, 0.5 * (1.0 - c));
            tape.sum(&[pull, push])?
        }
        LossForm::Literal => {
            let weighted = tape.scale(dist, c);
            tape.add_scalar(weighted, (1.0 - c) * margin.max(0.0))
        }
    })
}

/// `(1/n)·Σ_j ‖x_j − x̂_j‖₂` over the `n` rows.
pub fn reconstruction_loss(x: &Matrix, x_hat: &Matrix) -> Result<f64> {
    if x.shape() != x_hat.shape() {
        return Err(Error::Shape(format!(
            "features {:?} against reconstruction {:?}",
            x.shape(),
            x_hat.shape()
        )));
    }
    let total: f64 = (0..x.rows())
        .map(|r| l2_distance(x.row(r), x_hat.row(r)))
        .sum::<Result<f64>>()?;
    Ok(total / x.rows() as f64)
}

/// Records encode → decode → reconstruction loss for one subgraph.
pub fn reconstruction_on(
    tape: &mut Tape,
    vars: &[Var],
    model: &GnnModel,
    sg: &Subgraph,
) -> Result<Var> {
    let z = model.encode_on(tape, vars, sg, false)?;
    let x_hat = model.decode_on(tape, vars, sg, z)?;
    let x = tape.input(sg.features.clone());
    let diff = tape.sub(x_hat, x)?;
    let norms = tape.row_norm(diff);
    Ok(tape.mean(norms))
}

/// Mean contrastive loss over `(subgraph_a, subgraph_b, c)` pairs, each
/// subgraph encoded independently.
pub fn contrastive_objective_on(
    tape: &mut Tape,
    vars: &[Var],
    model: &GnnModel,
    pairs: &[(&Subgraph, &Subgraph, f64)],
    margin: f64,
    form: LossForm,
) -> Result<Var> {
    let mut losses = Vec::with_capacity(pairs.len());
    for (a, b, c) in pairs {
        let za = model.encode_on(tape, vars, a, true)?;
        let zb = model.encode_on(tape, vars, b, true)?;
        losses.push(contrastive_on(tape, *c, za, zb, margin, form)?);
    }
    let total = tape.sum(&losses)?;
    Ok(tape.scale(total, 1.0 / pairs.len() as f64))
}

/// Mean reconstruction loss over subgraphs.
pub fn reconstruction_objective_on(
    tape: &mut Tape,
    vars: &[Var],
    model: &GnnModel,
    sgs: &[&Subgraph],
) -> Result<Var> {
    let losses = sgs
        .iter()
        .map(|sg| reconstruction_on(tape, vars, model, sg))
        .collect::<Result<Vec<_>>>()?;
    let total = tape.sum(&losses)?;
    Ok(tape.scale(total, 1.0 / sgs.len() as f64))
}

/// Every ambiguous pair among `candidates`: closer than the median
/// candidate distance yet `c < sim_low`, or farther than it yet
/// `c > sim_high`. Candidate order is preserved.
pub fn ambiguous_pairs(
    embeddings: &[Vec<f64>],
    targets: &[Vec<f64>],
    candidates: &[(usize, usize)],
    mining: &MiningConfig,
) -> Result<Vec<PairSample>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let scored = candidates
        .iter()
        .map(|&(a, b)| {
            Ok((
                a,
                b,
                l2_distance(&embeddings[a], &embeddings[b])?,
                config_similarity(&targets[a], &targets[b])?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut dists: Vec<f64> = scored.iter().map(|s| s.2).collect();
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    Ok(scored
        .into_iter()
        .filter(|&(_, _, d, c)| {
            (d < median && c < mining.sim_low) || (d > median && c > mining.sim_high)
        })
        .map(|(a, b, _, c)| PairSample { a, b, c })
        .collect())
}

/// Draws `pairs_per_epoch` training pairs: `hard_fraction` of them from the
/// ambiguous set (as many as exist), the rest uniformly at random. Entries
/// with a zero config vector never take part.
pub fn mine_informative_pairs(
    embeddings: &[Vec<f64>],
    targets: &[Vec<f64>],
    cfg: &ContrastiveConfig,
    stream: &mut Stream,
) -> Result<Vec<PairSample>> {
    if embeddings.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} embeddings for {} targets",
            embeddings.len(),
            targets.len()
        )));
    }
    let eligible: Vec<usize> = (0..targets.len())
        .filter(|&i| targets[i].iter().any(|&v| v != 0.0))
        .collect();
    let n = eligible.len();
    if n < 2 {
        return Err(Error::Empty(format!(
            "pair mining needs at least 2 entries with nonzero targets, found {n}"
        )));
    }
    let total = cfg.pairs_for(targets.len());
    let mut pairs = Vec::with_capacity(total);

    if cfg.mining.enabled && cfg.mining.hard_fraction > 0.0 {
        let pool = candidate_pool(&eligible, stream);
        let hard = ambiguous_pairs(embeddings, targets, &pool, &cfg.mining)?;
        let quota = ((cfg.mining.hard_fraction * total as f64).round() as usize).min(hard.len());
        for k in sample(stream, hard.len(), quota) {
            pairs.push(hard[k]);
        }
    }
    while pairs.len() < total {
        let i = stream.random_range(0..n);
        let mut j = stream.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (eligible[i], eligible[j]);
        pairs.push(PairSample {
            a,
            b,
            c: config_similarity(&targets[a], &targets[b])?,
        });
    }
    Ok(pairs)
}

fn candidate_pool(eligible: &[usize], stream: &mut Stream) -> Vec<(usize, usize)> {
    let n = eligible.len();
    let all = n * (n - 1) / 2;
    if all <= MINING_POOL_CAP {
        let mut pool = Vec::with_capacity(all);
        for i in 0..n {
            for j in i + 1..n {
                pool.push((eligible[i], eligible[j]));
            }
        }
        return pool;
    }
    (0..MINING_POOL_CAP)
        .map(|_| {
            let i = stream.random_range(0..n);
            let mut j = stream.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (eligible[i.min(j)], eligible[i.max(j)])
        })
        .collect()
}

/// Adam moment estimates, one pair per parameter.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl OptimState {
    pub fn adam(params: &[Parameter], learning_rate: f64) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect()
        };
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn update(&mut self, params: &mut [Parameter]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let g = p.grad.data();
            let w = p.value.data_mut();
            let (m, v) = (m.data_mut(), v.data_mut());
            for k in 0..w.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                w[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

fn backward_step(
    tape: &Tape,
    loss: Var,
    vars: &[Var],
    model: &mut GnnModel,
    opt: &mut OptimState,
) -> Result<()> {
    let grads = tape.backward(loss)?;
    for p in &mut model.params {
        p.zero_grad();
    }
    Tape::accumulate_param_grads(&grads, vars, &mut model.params);
    opt.update(&mut model.params);
    Ok(())
}

fn check_loss(value: f64, model: ModelKind, epoch: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!(
            "{model} loss {value} at epoch {epoch}"
        )))
    }
}

/// Source of training entries, possibly resampled per epoch.
pub trait EpochData {
    fn entries(&mut self, epoch: usize) -> Result<&[DatasetEntry]>;
}

impl EpochData for &[DatasetEntry] {
    fn entries(&mut self, _epoch: usize) -> Result<&[DatasetEntry]> {
        Ok(self)
    }
}

/// Trains the Siamese encoder on fixed subgraphs.
pub fn train_sgnn(
    dataset: &[DatasetEntry],
    arch: &ArchConfig,
    cfg: &ContrastiveConfig,
) -> Result<(GnnModel, TrainReport)> {
    train_sgnn_with(&mut { dataset }, arch, cfg)
}

pub fn train_sgnn_with(
    data: &mut dyn EpochData,
    arch: &ArchConfig,
    cfg: &ContrastiveConfig,
) -> Result<(GnnModel, TrainReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let first = data.entries(0)?;
    let nonzero = first
        .iter()
        .filter(|e| e.target.iter().any(|&v| v != 0.0))
        .count();
    if nonzero < 2 {
        return Err(Error::Empty(format!(
            "S-GNN training needs at least 2 entries with nonzero targets, found {nonzero}"
        )));
    }
    let input_dim = first[0].subgraph.features.cols();
    let mut model = GnnModel::init(ModelKind::Sgnn, arch, input_dim, cfg.seed)?;
    let mut opt = OptimState::adam(&model.params, cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let entries = data.entries(epoch)?;
        let targets: Vec<Vec<f64>> = entries.iter().map(|e| e.target.clone()).collect();

        let mut tape = Tape::new();
        let mut vars = tape.bind(&model.params);
        let mut encoded: HashMap<usize, Var> = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            encoded.insert(i, model.encode_on(&mut tape, &vars, &e.subgraph, true)?);
        }
        let embeddings: Vec<Vec<f64>> = (0..entries.len())
            .map(|i| tape.value(encoded[&i]).data().to_vec())
            .collect();

        let mut stream = rng::substream(cfg.seed, "mining", &epoch.to_string());
        let pairs = mine_informative_pairs(&embeddings, &targets, cfg, &mut stream)?;
        let batch = cfg.batch_size.unwrap_or(pairs.len()).max(1);

        let mut epoch_total = 0.0;
        for (k, chunk) in pairs.chunks(batch).enumerate() {
            if k > 0 {
                tape = Tape::new();
                vars = tape.bind(&model.params);
                encoded.clear();
                for p in chunk {
                    for idx in [p.a, p.b] {
                        if !encoded.contains_key(&idx) {
                            let z =
                                model.encode_on(&mut tape, &vars, &entries[idx].subgraph, true)?;
                            encoded.insert(idx, z);
                        }
                    }
                }
            }
            let terms = chunk
                .iter()
                .map(|p| {
                    contrastive_on(
                        &mut tape,
                        p.c,
                        encoded[&p.a],
                        encoded[&p.b],
                        cfg.margin,
                        cfg.loss_form,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let sum = tape.sum(&terms)?;
            let loss = tape.scale(sum, 1.0 / chunk.len() as f64);
            let value = tape.scalar(loss);
            check_loss(value, ModelKind::Sgnn, epoch)?;
            epoch_total += value * chunk.len() as f64;
            backward_step(&tape, loss, &vars, &mut model, &mut opt)?;
        }
        let mean = epoch_total / pairs.len() as f64;
        log::debug!("sgnn epoch {epoch}: loss {mean:.6}");
        losses.push(mean);
    }
    Ok((
        model,
        TrainReport {
            model: ModelKind::Sgnn,
            epoch_losses: losses,
            wall_time_secs: start.elapsed().as_secs_f64(),
            checkpoint: None,
        },
    ))
}

/// Trains the graph auto-encoder. `cfg` supplies epochs, learning rate,
/// seed, batching, and resampling; the contrastive fields are unused.
pub fn train_gae(
    dataset: &[DatasetEntry],
    arch: &ArchConfig,
    cfg: &ContrastiveConfig,
) -> Result<(GnnModel, TrainReport)> {
    train_gae_with(&mut { dataset }, arch, cfg)
}

pub fn train_gae_with(
    data: &mut dyn EpochData,
    arch: &ArchConfig,
    cfg: &ContrastiveConfig,
) -> Result<(GnnModel, TrainReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let first = data.entries(0)?;
    if first.is_empty() {
        return Err(Error::Empty("GAE training set".into()));
    }
    let input_dim = first[0].subgraph.features.cols();
    let mut model = GnnModel::init(ModelKind::Gae, arch, input_dim, cfg.seed)?;
    let mut opt = OptimState::adam(&model.params, cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let entries = data.entries(epoch)?;
        let batch = cfg.batch_size.unwrap_or(entries.len()).max(1);
        let mut epoch_total = 0.0;
        for chunk in entries.chunks(batch) {
            let mut tape = Tape::new();
            let vars = tape.bind(&model.params);
            let sgs: Vec<&Subgraph> = chunk.iter().map(|e| &e.subgraph).collect();
            let loss = reconstruction_objective_on(&mut tape, &vars, &model, &sgs)?;
            let value = tape.scalar(loss);
            check_loss(value, ModelKind::Gae, epoch)?;
            epoch_total += value * chunk.len() as f64;
            backward_step(&tape, loss, &vars, &mut model, &mut opt)?;
        }
        let mean = epoch_total / entries.len() as f64;
        log::debug!("gae epoch {epoch}: loss {mean:.6}");
        losses.push(mean);
    }
    Ok((
        model,
        TrainReport {
            model: ModelKind::Gae,
            epoch_losses: losses,
            wall_time_secs: start.elapsed().as_secs_f64(),
            checkpoint: None,
        },
    ))
}
