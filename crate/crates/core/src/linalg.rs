//! Small dense-vector kernels shared by the network, trainer and classifiers.
//!
//! Summation order is fixed (eight interleaved accumulators combined in a
//! fixed tree), so results are bit-identical wherever the same kernel is used.

use crate::error::{check_dim, Result};

const LANES: usize = 8;

#[inline]
fn reduce_lanes(acc: [f64; LANES]) -> f64 {
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Inner product of two equal-length slices. Lengths are not checked.
#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = [0.0; LANES];
    let uc = u.chunks_exact(LANES);
    let vc = v.chunks_exact(LANES);
    let (ur, vr) = (uc.remainder(), vc.remainder());
    for (a, b) in uc.zip(vc) {
        for l in 0..LANES {
            acc[l] += a[l] * b[l];
        }
    }
    for (l, (a, b)) in ur.iter().zip(vr).enumerate() {
        acc[l] += a * b;
    }
    reduce_lanes(acc)
}

/// Squared Euclidean distance. Lengths are not checked.
#[inline]
pub fn squared_distance_unchecked(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = [0.0; LANES];
    let uc = u.chunks_exact(LANES);
    let vc = v.chunks_exact(LANES);
    let (ur, vr) = (uc.remainder(), vc.remainder());
    for (a, b) in uc.zip(vc) {
        for l in 0..LANES {
            let d = a[l] - b[l];
            acc[l] += d * d;
        }
    }
    for (l, (a, b)) in ur.iter().zip(vr).enumerate() {
        let d = a - b;
        acc[l] += d * d;
    }
    reduce_lanes(acc)
}

/// Euclidean distance `sqrt(sum (u_i - v_i)^2)`.
pub fn euclidean_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dim(u.len(), v.len())?;
    Ok(squared_distance_unchecked(u, v).sqrt())
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Returns `u / ||u||`, or `None` for a zero (or non-finite) norm.
pub fn normalized(u: &[f64]) -> Option<Vec<f64>> {
    let n = norm(u);
    if n > 0.0 && n.is_finite() {
        Some(u.iter().map(|x| x / n).collect())
    } else {
        None
    }
}
