//! Isotonic regression by pool-adjacent-violators, Euclidean projection onto
//! the permutahedron of reversed-negated GGF weights, and the Moreau envelope
//! of a negated GGF together with its gradient.
//!
//! For `h = -g_w`, `h` is the support function of `PH(w~)` with
//! `w~ = -(w_n, ..., w_1)`, so the gradient of its Moreau envelope at `z` is
//! the projection of `z / beta` onto `PH(w~)`.

use std::ops::Range;

use crate::error::{invalid, Result};
use crate::welfare::{ggf_value, GgfWeights};

/// Smallest smoothing parameter accepted; smaller values are clamped.
pub const MIN_BETA: f64 = 1e-12;

/// Result of a least-squares fit under a non-decreasing constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicFit {
    pub values: Vec<f64>,
    /// Contiguous pooled blocks, in order.
    pub blocks: Vec<Range<usize>>,
}

/// Non-decreasing least-squares fit of `s` with the block-merge stack.
pub fn pav_fit(s: &[f64]) -> IsotonicFit {
    // (start, sum, len)
    let mut stack: Vec<(usize, f64, usize)> = Vec::with_capacity(s.len());
    for (i, &x) in s.iter().enumerate() {
        let mut block = (i, x, 1usize);
        while let Some(&(start, sum, len)) = stack.last() {
            // merge while the previous block mean exceeds the current one
            if sum * block.2 as f64 > block.1 * len as f64 {
                stack.pop();
                block = (start, sum + block.1, len + block.2);
            } else {
                break;
            }
        }
        stack.push(block);
    }
    let mut values = vec![0.0; s.len()];
    let mut blocks = Vec::with_capacity(stack.len());
    for &(start, _, len) in &stack {
        let range = start..start + len;
        let mean = s[range.clone()].iter().sum::<f64>() / len as f64;
        values[range.clone()].fill(mean);
        blocks.push(range);
    }
    IsotonicFit { values, blocks }
}

/// `argmin_{x_1 <= ... <= x_n} ||x - s||^2 / 2`.
pub fn pav_nondecreasing(s: &[f64]) -> Vec<f64> {
    pav_fit(s).values
}

/// Projection onto `PH(w~)` plus the pooled index blocks (in original
/// coordinates) that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub y: Vec<f64>,
    pub active_blocks: Vec<Vec<usize>>,
}

/// The vertex generator `w~ = -(w_n, ..., w_1)`, sorted decreasingly.
pub fn reversed_negated(w: &GgfWeights) -> Vec<f64> {
    w.as_slice().iter().rev().map(|x| -x).collect()
}

/// Euclidean projection of `z` onto the permutahedron `PH(w~)`.
///
/// Sorts `z` decreasingly (ties by index), fits a non-decreasing sequence to
/// `w~ - z_sorted`, and adds the fit back to `z` in the original order.
pub fn permutahedron_project(w: &GgfWeights, z: &[f64]) -> Result<ProjectionResult> {
    if w.len() != z.len() {
        return invalid(format!("{} weights for a vector of length {}", w.len(), z.len()));
    }
    let wt = reversed_negated(w);
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b].total_cmp(&z[a]));
    let target: Vec<f64> = order.iter().zip(&wt).map(|(&i, &wk)| wk - z[i]).collect();
    let fit = pav_fit(&target);
    let mut y = vec![0.0; z.len()];
    for (pos, &i) in order.iter().enumerate() {
        y[i] = z[i] + fit.values[pos];
    }
    let active_blocks = fit
        .blocks
        .into_iter()
        .map(|r| r.map(|pos| order[pos]).collect())
        .collect();
    Ok(ProjectionResult { y, active_blocks })
}

/// Smoothing parameter of a Moreau envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoreauParams {
    beta: f64,
}

impl MoreauParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta <= 0.0 {
            return invalid(format!("smoothing parameter must be positive, got {beta}"));
        }
        Ok(Self {
            beta: beta.max(MIN_BETA),
        })
    }

    pub fn beta(self) -> f64 {
        self.beta
    }
}

/// Gradient of the Moreau envelope of `-g_w` at `z`: `proj_{PH(w~)}(z / beta)`.
pub fn moreau_grad_dual(w: &GgfWeights, z: &[f64], beta: f64) -> Result<Vec<f64>> {
    let beta = MoreauParams::new(beta)?.beta();
    let scaled: Vec<f64> = z.iter().map(|x| x / beta).collect();
    Ok(permutahedron_project(w, &scaled)?.y)
}

/// `h^beta(z) = min_p -g_w(p) + ||z - p||^2 / (2 beta)`, evaluated at the
/// proximal point `p = z - beta * y`.
pub fn moreau_envelope_value(w: &GgfWeights, z: &[f64], beta: f64) -> Result<f64> {
    let beta = MoreauParams::new(beta)?.beta();
    let y = moreau_grad_dual(w, z, beta)?;
    let p: Vec<f64> = z.iter().zip(&y).map(|(zi, yi)| zi - beta * yi).collect();
    let sq: f64 = y.iter().map(|v| v * v).sum();
    Ok(-ggf_value(w, &p)? + 0.5 * beta * sq)
}
