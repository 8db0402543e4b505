//! Parallel vector kernels with thread-count independent results.
//!
//! Reductions sum fixed-size blocks in parallel, then add the block sums
//! sequentially in block order, so the rounding pattern depends only on the
//! vector length.

use rayon::prelude::*;

/// Elements per reduction block.
pub const REDUCTION_BLOCK: usize = 4096;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let partial: Vec<f64> = a
        .par_chunks(REDUCTION_BLOCK)
        .zip(b.par_chunks(REDUCTION_BLOCK))
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>())
        .collect();
    partial.iter().sum()
}

/// `(a . b, a . a)` in one pass.
pub fn dot_pair(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let partial: Vec<(f64, f64)> = a
        .par_chunks(REDUCTION_BLOCK)
        .zip(b.par_chunks(REDUCTION_BLOCK))
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .fold((0.0, 0.0), |(s, t), (u, v)| (s + u * v, t + u * u))
        })
        .collect();
    partial.iter().fold((0.0, 0.0), |(s, t), (u, v)| (s + u, t + v))
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), y.len());
    y.par_iter_mut().zip(x.par_iter()).for_each(|(y, x)| *y += alpha * x);
}

/// `y = x + beta * y`
pub fn xpby(x: &[f64], beta: f64, y: &mut [f64]) {
    assert_eq!(x.len(), y.len());
    y.par_iter_mut().zip(x.par_iter()).for_each(|(y, x)| *y = x + beta * *y);
}

/// `z = x / d` elementwise.
pub fn divide(x: &[f64], d: &[f64], z: &mut [f64]) {
    z.par_iter_mut()
        .zip(x.par_iter().zip(d.par_iter()))
        .for_each(|(z, (x, d))| *z = x / d);
}
