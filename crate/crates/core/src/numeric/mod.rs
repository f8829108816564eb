//! Dense linear algebra, a reverse-mode tape over a small closed set of
//! matrix primitives, and a central-difference gradient checker.

mod gradcheck;
mod matrix;
mod tape;

pub use gradcheck::{compare_gradients, grad_check, CoordinateCheck, FD_STEP};
pub use matrix::Matrix;
pub use tape::{Gradients, Parameter, Tape, Var};

use crate::error::{Error, Result};

/// Elementwise `max(x, slope·x)`.
pub fn leaky_relu(x: &Matrix, slope: f64) -> Matrix {
    x.map(|v| leaky_relu_scalar(v, slope))
}

pub fn leaky_relu_scalar(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

/// Derivative of [`leaky_relu_scalar`]; the subgradient at 0 is `slope`.
pub fn leaky_relu_derivative(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Softmax over the unmasked entries (`mask[i] == true` means the entry
/// participates). Masked entries come out as exactly 0.
pub fn masked_softmax(scores: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if scores.len() != mask.len() {
        return Err(Error::Shape(format!(
            "{} scores with {} mask entries",
            scores.len(),
            mask.len()
        )));
    }
    let mut out = vec![0.0; scores.len()];
    masked_softmax_into(scores, mask, &mut out)?;
    Ok(out)
}

pub(crate) fn masked_softmax_into(scores: &[f64], mask: &[bool], out: &mut [f64]) -> Result<()> {
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllMasked);
    }
    let mut total = 0.0;
    for ((o, &s), &m) in out.iter_mut().zip(scores).zip(mask) {
        *o = if m { (s - max).exp() } else { 0.0 };
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "distance between lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Cosine similarity, clamped to `[-1, 1]` against rounding.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine between lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedCosine);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
