//! Skip-gram objective with negatives:
//!
//! ```text
//! L = -log sigma(h_v . h_u) - sum_m log sigma(-h_v . h_w_m)
//! ```
//!
//! Negatives stand in for the context `u` and are scored against the center
//! `v`. All logs go through `log1p` so no score overflows.

use rand::seq::index;

use crate::model::linalg::{axpy, dot, scaled};
use crate::model::Real;

pub fn score<T: Real>(h_v: &[T], h_u: &[T]) -> T {
    dot(h_v, h_u)
}

/// `log(1 + e^x)`
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn log_sigmoid<T: Real>(x: T) -> T {
    -softplus(-x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss<T> {
    pub loss: T,
    pub g_v: Vec<T>,
    pub g_u: Vec<T>,
    pub g_neg: Vec<Vec<T>>,
}

/// Loss of one positive pair against explicit negatives, with exact
/// gradients for every input.
pub fn loss_explicit<T: Real>(h_v: &[T], h_u: &[T], negatives: &[&[T]]) -> PairLoss<T> {
    let y = dot(h_v, h_u);
    let mut loss = softplus(-y);
    let gy = -sigmoid(-y);
    let mut g_v = scaled(gy, h_u);
    let g_u = scaled(gy, h_v);
    let mut g_neg = Vec::with_capacity(negatives.len());
    for w in negatives {
        let yn = dot(h_v, w);
        loss += softplus(yn);
        let gn = sigmoid(yn);
        axpy(gn, w, &mut g_v);
        g_neg.push(scaled(gn, h_v));
    }
    PairLoss { loss, g_v, g_u, g_neg }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss<T> {
    /// Mean over rows.
    pub loss: T,
    pub g_centers: Vec<Vec<T>>,
    pub g_contexts: Vec<Vec<T>>,
}

/// For each row `b`, `min(m, B - 1)` distinct other rows, uniformly.
pub fn sample_inbatch_negatives(batch: usize, m: usize, rng: &mut impl rand::Rng) -> Vec<Vec<usize>> {
    let m = m.min(batch.saturating_sub(1));
    (0..batch)
        .map(|b| index::sample(rng, batch - 1, m).into_iter().map(|i| if i >= b { i + 1 } else { i }).collect())
        .collect()
}

/// In-batch loss: row `b` uses the contexts of rows `neg_idx[b]` as its
/// negatives. A context used as a negative collects gradient from every row
/// that picked it.
pub fn loss_inbatch<T: Real>(centers: &[&[T]], contexts: &[&[T]], neg_idx: &[Vec<usize>]) -> BatchLoss<T> {
    let b = centers.len();
    assert_eq!(contexts.len(), b);
    assert_eq!(neg_idx.len(), b);
    let d = centers.first().map_or(0, |c| c.len());
    let inv = T::one() / T::of(b as f64);
    let mut g_centers = Vec::with_capacity(b);
    let mut g_contexts = vec![vec![T::zero(); d]; b];
    let mut loss = T::zero();
    for (row, idx) in neg_idx.iter().enumerate() {
        let negs: Vec<&[T]> = idx.iter().map(|&i| contexts[i]).collect();
        let pl = loss_explicit(centers[row], contexts[row], &negs);
        loss += pl.loss;
        g_centers.push(scaled(inv, &pl.g_v));
        axpy(inv, &pl.g_u, &mut g_contexts[row]);
        for (&i, g) in idx.iter().zip(&pl.g_neg) {
            axpy(inv, g, &mut g_contexts[i]);
        }
    }
    BatchLoss { loss: loss * inv, g_centers, g_contexts }
}
