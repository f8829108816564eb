//! Reverse-mode differentiation over matrix-valued primitives.
//!
//! A [`Tape`] records each primitive application in evaluation order.
//! [`Tape::backward`] replays the records in reverse, applying each
//! primitive's backward rule and accumulating adjoints.

use std::rc::Rc;

use super::matrix::Matrix;
use super::{leaky_relu_derivative, leaky_relu_scalar, masked_softmax_into};
use crate::error::{Error, Result};

/// A trainable weight with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// `x + 1ᵀb` for a row vector `b`.
    AddRow(Var, Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    /// Row-wise masked softmax.
    MaskedSoftmax(Var, Rc<[bool]>),
    ConcatCols(Vec<Var>),
    SelectRows(Var, Rc<[usize]>),
    Reshape(Var),
    Sum(Vec<Var>),
    Mean(Var),
    /// Per-row Euclidean norm, `n×c -> n×1`.
    RowNorm(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// Records a constant.
    pub fn input(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Input)
    }

    /// Records every parameter as a differentiable leaf, in order.
    pub fn bind(&mut self, params: &[Parameter]) -> Vec<Var> {
        params
            .iter()
            .map(|p| self.push(p.value.clone(), Op::Param))
            .collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xm, bm) = (self.value(x), self.value(row));
        if bm.rows() != 1 || bm.cols() != xm.cols() {
            return Err(Error::Shape(format!(
                "bias {}x{} for a {}x{} input",
                bm.rows(),
                bm.cols(),
                xm.rows(),
                xm.cols()
            )));
        }
        let cols = xm.cols();
        let b = bm.data();
        let data = xm
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + b[i % cols])
            .collect();
        let v = Matrix::from_raw(xm.rows(), cols, data);
        Ok(self.push(v, Op::AddRow(x, row)))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).map(|x| leaky_relu_scalar(x, slope));
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    /// Row-wise softmax of `a` restricted to entries where `mask` is true.
    pub fn masked_softmax(&mut self, a: Var, mask: Rc<[bool]>) -> Result<Var> {
        let m = self.value(a);
        if mask.len() != m.data().len() {
            return Err(Error::Shape(format!(
                "mask of {} for a {}x{} score matrix",
                mask.len(),
                m.rows(),
                m.cols()
            )));
        }
        let cols = m.cols();
        let mut out = vec![0.0; m.data().len()];
        for r in 0..m.rows() {
            let span = r * cols..(r + 1) * cols;
            masked_softmax_into(&m.data()[span.clone()], &mask[span.clone()], &mut out[span])?;
        }
        let v = Matrix::from_raw(m.rows(), cols, out);
        Ok(self.push(v, Op::MaskedSoftmax(a, mask)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.value(p).rows(),
            None => return Err(Error::Shape("concat of nothing".into())),
        };
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::Shape("concat with differing row counts".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let v = Matrix::from_raw(rows, cols, data);
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    /// Gathers rows by index; indices may repeat.
    pub fn select_rows(&mut self, a: Var, idx: Rc<[usize]>) -> Result<Var> {
        let m = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m.rows()) {
            return Err(Error::Shape(format!(
                "row {bad} of a {}-row matrix",
                m.rows()
            )));
        }
        let mut data = Vec::with_capacity(idx.len() * m.cols());
        for &i in idx.iter() {
            data.extend_from_slice(m.row(i));
        }
        let v = Matrix::from_raw(idx.len(), m.cols(), data);
        Ok(self.push(v, Op::SelectRows(a, idx)))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let m = self.value(a);
        if m.data().len() != rows * cols {
            return Err(Error::Shape(format!(
                "reshape {}x{} to {rows}x{cols}",
                m.rows(),
                m.cols()
            )));
        }
        let v = Matrix::from_raw(rows, cols, m.data().to_vec());
        Ok(self.push(v, Op::Reshape(a)))
    }

    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        let first = match parts.first() {
            Some(&p) => self.value(p).clone(),
            None => return Err(Error::Shape("sum of nothing".into())),
        };
        let mut acc = first;
        for &p in &parts[1..] {
            acc = acc.add(self.value(p))?;
        }
        Ok(self.push(acc, Op::Sum(parts.to_vec())))
    }

    /// Mean of all entries, as a 1×1 value.
    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = m.sum() / m.data().len() as f64;
        self.push(Matrix::from_raw(1, 1, vec![v]), Op::Mean(a))
    }

    pub fn row_norm(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = (0..m.rows()).map(|r| super::l2_norm(m.row(r))).collect();
        let v = Matrix::from_raw(m.rows(), 1, data);
        self.push(v, Op::RowNorm(a))
    }

    /// Propagates adjoints from the scalar `out` to every recorded value.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let shape = self.value(out).shape();
        if shape != (1, 1) {
            return Err(Error::Shape(format!(
                "backward from a {}x{} value",
                shape.0, shape.1
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Matrix::filled(1, 1, 1.0));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                let da = g.matmul_t(self.value(*b))?;
                let db = self.value(*a).t_matmul(g)?;
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let da = g.hadamard(self.value(*b))?;
                let db = g.hadamard(self.value(*a))?;
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.scale(*s)),
            Op::AddScalar(a) => accumulate(grads, *a, g.clone()),
            Op::AddRow(x, row) => {
                let cols = g.cols();
                let mut db = vec![0.0; cols];
                for r in 0..g.rows() {
                    for (d, v) in db.iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                accumulate(grads, *x, g.clone());
                accumulate(grads, *row, Matrix::from_raw(1, cols, db));
            }
            Op::LeakyRelu(a, slope) => {
                let dx = g.zip_map(self.value(*a), |gv, x| {
                    gv * leaky_relu_derivative(x, *slope)
                })?;
                accumulate(grads, *a, dx);
            }
            Op::Relu(a) => {
                let dx = g.zip_map(self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 })?;
                accumulate(grads, *a, dx);
            }
            Op::MaskedSoftmax(a, mask) => {
                let y = &node.value;
                let cols = y.cols();
                let mut dx = vec![0.0; y.data().len()];
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        if mask[r * cols + c] {
                            dx[r * cols + c] = yr[c] * (gr[c] - dot);
                        }
                    }
                }
                accumulate(grads, *a, Matrix::from_raw(y.rows(), cols, dx));
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    let mut data = Vec::with_capacity(g.rows() * pc);
                    for r in 0..g.rows() {
                        data.extend_from_slice(&g.row(r)[offset..offset + pc]);
                    }
                    accumulate(grads, p, Matrix::from_raw(g.rows(), pc, data));
                    offset += pc;
                }
            }
            Op::SelectRows(a, idx) => {
                let src = self.value(*a);
                let mut dx = Matrix::zeros(src.rows(), src.cols());
                let cols = src.cols();
                for (k, &r) in idx.iter().enumerate() {
                    let target = &mut dx.data_mut()[r * cols..(r + 1) * cols];
                    for (t, v) in target.iter_mut().zip(g.row(k)) {
                        *t += v;
                    }
                }
                accumulate(grads, *a, dx);
            }
            Op::Reshape(a) => {
                let (r, c) = self.value(*a).shape();
                accumulate(grads, *a, Matrix::from_raw(r, c, g.data().to_vec()));
            }
            Op::Sum(parts) => {
                for &p in parts {
                    accumulate(grads, p, g.clone());
                }
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                let share = g.data()[0] / (r * c) as f64;
                accumulate(grads, *a, Matrix::filled(r, c, share));
            }
            Op::RowNorm(a) => {
                let x = self.value(*a);
                let cols = x.cols();
                let mut dx = vec![0.0; x.data().len()];
                for r in 0..x.rows() {
                    let norm = node.value.data()[r];
                    // subgradient 0 at the origin
                    if norm > 0.0 {
                        let scale = g.data()[r] / norm;
                        for c in 0..cols {
                            dx[r * cols + c] = scale * x.get(r, c);
                        }
                    }
                }
                accumulate(grads, *a, Matrix::from_raw(x.rows(), cols, dx));
            }
        }
        Ok(())
    }

    /// Adds the adjoints of the bound parameter leaves into `params[i].grad`.
    pub fn accumulate_param_grads(grads: &Gradients, vars: &[Var], params: &mut [Parameter]) {
        for (v, p) in vars.iter().zip(params.iter_mut()) {
            if let Some(g) = grads.get(*v) {
                p.grad.add_assign(g);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, contribution: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&contribution),
        slot @ None => *slot = Some(contribution),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_product_gradient() {
        // f = mean(A·B) over a 1x1 output
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let mut params = vec![Parameter::new("a", a), Parameter::new("b", b)];
        let mut tape = Tape::new();
        let vars = tape.bind(&params);
        let c = tape.matmul(vars[0], vars[1]).unwrap();
        let out = tape.mean(c);
        assert_eq!(tape.scalar(out), 11.0);
        let grads = tape.backward(out).unwrap();
        Tape::accumulate_param_grads(&grads, &vars, &mut params);
        assert_eq!(params[0].grad.data(), &[3.0, 4.0]);
        assert_eq!(params[1].grad.data(), &[1.0, 2.0]);
    }

    #[test]
    fn backward_requires_scalar_output() {
        let mut tape = Tape::new();
        let x = tape.input(Matrix::zeros(2, 2));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn row_norm_at_origin_has_zero_gradient() {
        let mut params = vec![Parameter::new("x", Matrix::zeros(1, 3))];
        let mut tape = Tape::new();
        let vars = tape.bind(&params);
        let n = tape.row_norm(vars[0]);
        let out = tape.mean(n);
        let grads = tape.backward(out).unwrap();
        Tape::accumulate_param_grads(&grads, &vars, &mut params);
        assert_eq!(params[0].grad.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn select_rows_scatters_repeated_indices() {
        let mut params = vec![Parameter::new(
            "x",
            Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap(),
        )];
        let mut tape = Tape::new();
        let vars = tape.bind(&params);
        let s = tape.select_rows(vars[0], Rc::from(vec![1, 1, 0])).unwrap();
        assert_eq!(tape.value(s).data(), &[2.0, 2.0, 1.0]);
        let out = tape.mean(s);
        let grads = tape.backward(out).unwrap();
        Tape::accumulate_param_grads(&grads, &vars, &mut params);
        let third = 1.0 / 3.0;
        assert_eq!(params[0].grad.data(), &[third, 2.0 * third]);
    }
}
