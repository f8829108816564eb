//! GATv2 multi-head attention layers with feed-forward head aggregation,
//! stacked into the embedding encoder and the auto-encoder's decoder.
//!
//! Parameters live in one flat `Vec<Parameter>` owned by [`GnnModel`];
//! layers refer to them by index. Declaration order is encoder first, then
//! decoder, layer by layer, and is the order used in checkpoints.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{leaky_relu_scalar, Matrix, Parameter, Tape, Var};
use crate::rng;
use crate::sampler::Subgraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub ffn_hidden: usize,
    /// Output width of every layer except the last.
    pub hidden_dim: usize,
    /// Embedding dimension `d`.
    pub embedding_dim: usize,
    pub slope: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 4,
            head_dim: 16,
            ffn_hidden: 64,
            hidden_dim: 32,
            embedding_dim: 14,
            slope: 0.2,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("layers", self.layers),
            ("heads", self.heads),
            ("head_dim", self.head_dim),
            ("ffn_hidden", self.ffn_hidden),
            ("hidden_dim", self.hidden_dim),
            ("embedding_dim", self.embedding_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if !(self.slope > 0.0 && self.slope < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "LeakyReLU slope {} is outside (0, 1)",
                self.slope
            )));
        }
        Ok(())
    }

    fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(std::iter::repeat_n(self.hidden_dim, self.layers - 1));
        w.push(output);
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Siamese encoder trained with the contrastive objective.
    Sgnn,
    /// Graph auto-encoder; only its encoder is used for inference.
    Gae,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Sgnn => "sgnn",
            ModelKind::Gae => "gae",
        })
    }
}

/// One attention head. Fields index into the model's parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct Gatv2Head {
    pub w_src: usize,
    pub w_dst: usize,
    /// Attention vector, stored as a `head_dim × 1` column.
    pub attn: usize,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadLayer {
    pub heads: Vec<Gatv2Head>,
    pub ffn: FeedForward,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Which rows a layer must produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rows {
    All,
    CenterOnly,
}

impl MultiHeadLayer {
    /// Returns the layer output and each head's attention matrix.
    fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        h: Var,
        mask: &Rc<[bool]>,
        n: usize,
        rows: Rows,
    ) -> Result<(Var, Vec<Var>)> {
        let (targets, dst_idx, src_idx, row_mask): (usize, Rc<[usize]>, Rc<[usize]>, Rc<[bool]>) =
            match rows {
                Rows::All => (
                    n,
                    (0..n * n).map(|k| k / n).collect(),
                    (0..n * n).map(|k| k % n).collect(),
                    mask.clone(),
                ),
                Rows::CenterOnly => (1, vec![0; n].into(), (0..n).collect(), mask[..n].into()),
            };
        let dst_input = match rows {
            Rows::All => h,
            Rows::CenterOnly => tape.select_rows(h, Rc::from([0usize]))?,
        };

        let mut head_outputs = Vec::with_capacity(self.heads.len());
        let mut attentions = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let src = tape.matmul(h, vars[head.w_src])?;
            let dst = tape.matmul(dst_input, vars[head.w_dst])?;
            let dst_pairs = tape.select_rows(dst, dst_idx.clone())?;
            let src_pairs = tape.select_rows(src, src_idx.clone())?;
            let pre = tape.add(dst_pairs, src_pairs)?;
            let act = tape.leaky_relu(pre, head.slope);
            let scores = tape.matmul(act, vars[head.attn])?;
            let scores = tape.reshape(scores, targets, n)?;
            let alpha = tape.masked_softmax(scores, row_mask.clone())?;
            head_outputs.push(tape.matmul(alpha, src)?);
            attentions.push(alpha);
        }
        let cat = tape.concat_cols(&head_outputs)?;
        let hidden = tape.matmul(cat, vars[self.ffn.w1])?;
        let hidden = tape.add_row(hidden, vars[self.ffn.b1])?;
        let hidden = tape.leaky_relu(hidden, self.ffn.slope);
        let out = tape.matmul(hidden, vars[self.ffn.w2])?;
        let out = tape.add_row(out, vars[self.ffn.b2])?;
        Ok((out, attentions))
    }
}

/// Ordered layers mapping `in_dim` features to `out_dim` per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub layers: Vec<MultiHeadLayer>,
}

impl LayerStack {
    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        input: Var,
        sg: &Subgraph,
        center_only: bool,
    ) -> Result<Var> {
        let n = sg.vertex_count();
        let mask = sg.attention_mask();
        let mut h = input;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let rows = if center_only && i == last {
                Rows::CenterOnly
            } else {
                Rows::All
            };
            h = layer.forward(tape, vars, h, &mask, n, rows)?.0;
        }
        Ok(h)
    }
}

/// Encoder stack: predictor features to `d`-dimensional embeddings.
pub type EncoderStack = LayerStack;
/// Decoder stack: embeddings back to predictor features.
pub type DecoderStack = LayerStack;

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub kind: ModelKind,
    pub arch: ArchConfig,
    pub input_dim: usize,
    pub seed: u64,
    pub params: Vec<Parameter>,
    pub encoder: EncoderStack,
    pub decoder: Option<DecoderStack>,
}

struct Builder<'a> {
    params: Vec<Parameter>,
    seed: u64,
    arch: &'a ArchConfig,
}

impl Builder<'_> {
    fn glorot(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let mut stream = rng::substream(self.seed, "init", &name);
        let data = (0..rows * cols)
            .map(|_| stream.random_range(-bound..=bound))
            .collect();
        self.push(name, Matrix::new(rows, cols, data).expect("finite init"))
    }

    fn zeros(&mut self, name: String, cols: usize) -> usize {
        self.push(name, Matrix::zeros(1, cols))
    }

    fn push(&mut self, name: String, m: Matrix) -> usize {
        self.params.push(Parameter::new(name, m));
        self.params.len() - 1
    }

    fn stack(&mut self, prefix: &str, widths: &[usize]) -> LayerStack {
        let a = self.arch.clone();
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let heads = (0..a.heads)
                    .map(|h| Gatv2Head {
                        w_src: self.glorot(format!("{prefix}.{l}.head{h}.w_src"), w[0], a.head_dim),
                        w_dst: self.glorot(format!("{prefix}.{l}.head{h}.w_dst"), w[0], a.head_dim),
                        attn: self.glorot(format!("{prefix}.{l}.head{h}.attn"), a.head_dim, 1),
                        slope: a.slope,
                    })
                    .collect();
                let ffn = FeedForward {
                    w1: self.glorot(
                        format!("{prefix}.{l}.ffn.w1"),
                        a.heads * a.head_dim,
                        a.ffn_hidden,
                    ),
                    b1: self.zeros(format!("{prefix}.{l}.ffn.b1"), a.ffn_hidden),
                    w2: self.glorot(format!("{prefix}.{l}.ffn.w2"), a.ffn_hidden, w[1]),
                    b2: self.zeros(format!("{prefix}.{l}.ffn.b2"), w[1]),
                    slope: a.slope,
                };
                MultiHeadLayer {
                    heads,
                    ffn,
                    in_dim: w[0],
                    out_dim: w[1],
                }
            })
            .collect();
        LayerStack { layers }
    }
}

impl GnnModel {
    /// Glorot-uniform weights and zero biases, each parameter drawn from
    /// its own named substream of `seed`.
    pub fn init(kind: ModelKind, arch: &ArchConfig, input_dim: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidConfig(
                "input dimension must be positive".into(),
            ));
        }
        let mut b = Builder {
            params: Vec::new(),
            seed,
            arch,
        };
        let encoder = b.stack("encoder", &arch.widths(input_dim, arch.embedding_dim));
        let decoder = match kind {
            ModelKind::Sgnn => None,
            ModelKind::Gae => Some(b.stack("decoder", &arch.widths(arch.embedding_dim, input_dim))),
        };
        Ok(Self {
            kind,
            arch: arch.clone(),
            input_dim,
            seed,
            params: b.params,
            encoder,
            decoder,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.arch.embedding_dim
    }

    /// Number of leading parameters that belong to the encoder.
    pub fn encoder_param_count(&self) -> usize {
        self.decoder
            .as_ref()
            .and_then(|d| d.layers.first())
            .and_then(|l| l.heads.first())
            .map_or(self.params.len(), |h| h.w_src)
    }

    fn check_features(&self, sg: &Subgraph) -> Result<()> {
        if sg.features.cols() != self.input_dim || sg.features.rows() != sg.vertex_count() {
            return Err(Error::Shape(format!(
                "subgraph features {}x{} for {} vertices and input dim {}",
                sg.features.rows(),
                sg.features.cols(),
                sg.vertex_count(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Records the encoder on `tape`. With `center_only`, the last layer is
    /// evaluated for vertex 0 alone, giving a `1×d` result equal to row 0
    /// of the full `n×d` output.
    pub fn encode_on(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        sg: &Subgraph,
        center_only: bool,
    ) -> Result<Var> {
        self.check_features(sg)?;
        let x = tape.input(sg.features.clone());
        self.encoder.forward(tape, vars, x, sg, center_only)
    }

    pub fn decode_on(&self, tape: &mut Tape, vars: &[Var], sg: &Subgraph, z: Var) -> Result<Var> {
        let decoder = self
            .decoder
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("model has no decoder".into()))?;
        let (rows, cols) = tape.value(z).shape();
        if rows != sg.vertex_count() || cols != self.embedding_dim() {
            return Err(Error::Shape(format!(
                "embeddings {rows}x{cols} for {} vertices and d = {}",
                sg.vertex_count(),
                self.embedding_dim()
            )));
        }
        decoder.forward(tape, vars, z, sg, false)
    }

    /// Per-vertex embeddings `Z_i` (`n×d`, center row first).
    pub fn encode(&self, sg: &Subgraph) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = tape.bind(&self.params);
        let z = self.encode_on(&mut tape, &vars, sg, false)?;
        Ok(tape.value(z).clone())
    }

    /// Embedding of the center vertex only.
    pub fn encode_center(&self, sg: &Subgraph) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = tape.bind(&self.params);
        let z = self.encode_on(&mut tape, &vars, sg, true)?;
        Ok(tape.value(z).data().to_vec())
    }

    /// Reconstruction `X̂_i` from embeddings `z` (`n×d`).
    pub fn decode(&self, sg: &Subgraph, z: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = tape.bind(&self.params);
        let zv = tape.input(z.clone());
        let x_hat = self.decode_on(&mut tape, &vars, sg, zv)?;
        Ok(tape.value(x_hat).clone())
    }

    /// Attention matrices (`n×n`, one per head) of encoder layer `layer`
    /// given that layer's input `h`.
    pub fn attention(&self, layer: usize, sg: &Subgraph, h: &Matrix) -> Result<Vec<Matrix>> {
        let l = self
            .encoder
            .layers
            .get(layer)
            .ok_or_else(|| Error::InvalidConfig(format!("no encoder layer {layer}")))?;
        let mut tape = Tape::new();
        let vars = tape.bind(&self.params);
        let hv = tape.input(h.clone());
        let (_, alphas) = l.forward(
            &mut tape,
            &vars,
            hv,
            &sg.attention_mask(),
            sg.vertex_count(),
            Rows::All,
        )?;
        Ok(alphas.into_iter().map(|a| tape.value(a).clone()).collect())
    }

    /// GATv2 score `aᵀ · LeakyReLU(W_src·h_j + W_dst·h_i)` for one head.
    pub fn attention_score(&self, head: &Gatv2Head, h_i: &[f64], h_j: &[f64]) -> Result<f64> {
        let w_src = &self.params[head.w_src].value;
        let w_dst = &self.params[head.w_dst].value;
        let a = &self.params[head.attn].value;
        if h_i.len() != w_dst.rows() || h_j.len() != w_src.rows() {
            return Err(Error::Shape(format!(
                "inputs of length {} and {} for a head with input dim {}",
                h_i.len(),
                h_j.len(),
                w_src.rows()
            )));
        }
        let s = Matrix::row_vector(h_j).matmul(w_src)?;
        let t = Matrix::row_vector(h_i).matmul(w_dst)?;
        Ok(s.data()
            .iter()
            .zip(t.data())
            .zip(a.data())
            .map(|((s, t), a)| a * leaky_relu_scalar(s + t, head.slope))
            .sum())
    }
}
