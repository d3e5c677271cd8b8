//! Triplet margin loss and its exact gradient through the shared encoder.

use crate::error::{check_dim, Result};
use crate::linalg::{self, euclidean_distance};
use crate::net::EmbeddingParams;

pub const DEFAULT_MARGIN: f64 = 0.2;

/// `max(D(a, p) - D(a, n) + margin, 0)` with Euclidean `D`.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> Result<f64> {
    let dap = euclidean_distance(a, p)?;
    let dan = euclidean_distance(a, n)?;
    Ok((dap - dan + margin).max(0.0))
}

/// How embeddings are compared inside the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions {
    pub margin: f64,
    /// Use `||u - v||^2` instead of `||u - v||`.
    pub squared_distance: bool,
    /// Compare L2-normalized embeddings.
    pub normalize_embeddings: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            squared_distance: false,
            normalize_embeddings: false,
        }
    }
}

/// Gradient of the loss with respect to an [`EmbeddingParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dim_in: usize,
    pub dim_out: usize,
    /// Row-major, shaped like the weight matrix.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &EmbeddingParams) -> Self {
        Self {
            dim_in: params.dim_in(),
            dim_out: params.dim_out(),
            weights: vec![0.0; params.weights().len()],
            bias: vec![0.0; params.dim_out()],
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            *v *= s;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|&v| v == 0.0)
    }

    pub fn first_non_finite(&self) -> Option<(&'static str, usize)> {
        if let Some(i) = self.weights.iter().position(|v| !v.is_finite()) {
            return Some(("weights", i));
        }
        self.bias.iter().position(|v| !v.is_finite()).map(|i| ("bias", i))
    }
}

/// Forward state of one branch, kept for the backward pass.
struct Branch {
    /// Pre-activation `Wx + b`.
    z: Vec<f64>,
    /// Embedding fed to the distance (ReLU output, optionally normalized).
    y: Vec<f64>,
    /// Norm of the ReLU output (only meaningful when normalizing).
    h_norm: f64,
}

fn forward_branch(params: &EmbeddingParams, x: &[f64], normalize: bool) -> Branch {
    let z = params.pre_activation_unchecked(x);
    let mut y: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
    let mut h_norm = 0.0;
    if normalize {
        h_norm = linalg::norm(&y);
        if h_norm > 0.0 {
            for v in &mut y {
                *v /= h_norm;
            }
        }
    }
    Branch { z, y, h_norm }
}

/// Pushes `dL/dy` of one branch back through normalization and ReLU, then
/// into the shared parameters.
fn backward_branch(branch: &Branch, x: &[f64], mut g: Vec<f64>, normalize: bool, grads: &mut Gradients) {
    if normalize {
        if branch.h_norm > 0.0 {
            let proj = linalg::dot(&branch.y, &g);
            for (gi, yi) in g.iter_mut().zip(&branch.y) {
                *gi = (*gi - yi * proj) / branch.h_norm;
            }
        } else {
            return;
        }
    }
    let d = x.len();
    for (r, (gr, zr)) in g.iter().zip(&branch.z).enumerate() {
        // ReLU derivative is 0 at exactly 0
        if *zr > 0.0 && *gr != 0.0 {
            grads.bias[r] += gr;
            linalg::axpy(*gr, x, &mut grads.weights[r * d..(r + 1) * d]);
        }
    }
}

/// Derivative of a distance term `D(a, b)` with respect to `a`; the
/// derivative with respect to `b` is its negation. The non-squared distance
/// has no gradient at `a = b`, where the subgradient 0 is used.
fn distance_grad(a: &[f64], b: &[f64], squared: bool) -> (f64, Vec<f64>) {
    let sq = linalg::squared_distance_unchecked(a, b);
    if squared {
        let g = a.iter().zip(b).map(|(x, y)| 2.0 * (x - y)).collect();
        (sq, g)
    } else {
        let d = sq.sqrt();
        if d > 0.0 {
            (d, a.iter().zip(b).map(|(x, y)| (x - y) / d).collect())
        } else {
            (0.0, vec![0.0; a.len()])
        }
    }
}

/// Loss of one raw triplet under `params`, adding its gradient into `grads`.
pub(crate) fn accumulate_triplet(
    params: &EmbeddingParams,
    xa: &[f64],
    xp: &[f64],
    xn: &[f64],
    opts: &LossOptions,
    grads: &mut Gradients,
) -> f64 {
    let norm = opts.normalize_embeddings;
    let a = forward_branch(params, xa, norm);
    let p = forward_branch(params, xp, norm);
    let n = forward_branch(params, xn, norm);
    let (dap, g_ap) = distance_grad(&a.y, &p.y, opts.squared_distance);
    let (dan, g_an) = distance_grad(&a.y, &n.y, opts.squared_distance);
    let loss = dap - dan + opts.margin;
    if loss <= 0.0 {
        return 0.0;
    }
    let ga: Vec<f64> = g_ap.iter().zip(&g_an).map(|(u, w)| u - w).collect();
    let gp: Vec<f64> = g_ap.iter().map(|u| -u).collect();
    backward_branch(&a, xa, ga, norm, grads);
    backward_branch(&p, xp, gp, norm, grads);
    backward_branch(&n, xn, g_an, norm, grads);
    loss
}

/// Triplet loss of raw inputs through the encoder, and its gradient with
/// respect to the shared weights and bias. A clamped triplet has zero
/// gradient.
pub fn loss_gradients(
    params: &EmbeddingParams,
    xa: &[f64],
    xp: &[f64],
    xn: &[f64],
    opts: &LossOptions,
) -> Result<(f64, Gradients)> {
    for x in [xa, xp, xn] {
        check_dim(params.dim_in(), x.len())?;
    }
    let mut grads = Gradients::zeros_like(params);
    let loss = accumulate_triplet(params, xa, xp, xn, opts, &mut grads);
    Ok((loss, grads))
}

/// Loss of a raw triplet through the encoder, without gradients.
pub fn encoded_triplet_loss(
    params: &EmbeddingParams,
    xa: &[f64],
    xp: &[f64],
    xn: &[f64],
    opts: &LossOptions,
) -> Result<f64> {
    for x in [xa, xp, xn] {
        check_dim(params.dim_in(), x.len())?;
    }
    let norm = opts.normalize_embeddings;
    let a = forward_branch(params, xa, norm);
    let p = forward_branch(params, xp, norm);
    let n = forward_branch(params, xn, norm);
    let dist = |u: &[f64], v: &[f64]| {
        let sq = linalg::squared_distance_unchecked(u, v);
        if opts.squared_distance {
            sq
        } else {
            sq.sqrt()
        }
    };
    Ok((dist(&a.y, &p.y) - dist(&a.y, &n.y) + opts.margin).max(0.0))
}
