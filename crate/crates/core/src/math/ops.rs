//! Slice-level kernels shared by the tape and the retrieval index.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[inline]
pub fn dot<T: Scalar>(u: &[T], v: &[T]) -> T {
    u.iter().zip(v).map(|(&a, &b)| a * b).sum()
}

#[inline]
pub fn norm<T: Scalar>(u: &[T]) -> T {
    dot(u, u).sqrt()
}

/// Cosine of the angle between `u` and `v`.
pub fn cosine_similarity<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "cosine of widths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::DegenerateVector("cosine similarity of a zero-norm vector".into()));
    }
    let c = dot(u, v) / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Max-shifted softmax.
pub fn softmax_probabilities<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: T = out.iter().copied().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

pub fn squared_distance<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "distance of widths {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(u.iter().zip(v).map(|(&a, &b)| (a - b) * (a - b)).sum())
}
