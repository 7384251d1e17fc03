//! Integration over the simplex `Δ_d` with its normalized Lebesgue measure.
//!
//! Sampling uses Dirichlet(1, …, 1) draws built from normalized standard
//! exponentials. Deterministic quadrature maps the unit cube onto the simplex
//! by stick-breaking (a Duffy-type collapse) and applies tensorized
//! Gauss-Legendre rules, doubling the degree until the result settles.
//!
//! Random streams are keyed by `(seed, stream)`: every block of
//! [`BLOCK_SIZE`] samples owns one ChaCha stream, so results do not depend on
//! how blocks are distributed over threads.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::{Error, Result};

/// Samples per independent random stream.
pub const BLOCK_SIZE: usize = 1 << 14;

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `(stream id, sample count)` for each block covering `samples` draws.
pub fn blocks(samples: usize) -> Vec<(u64, usize)> {
    (0..samples.div_ceil(BLOCK_SIZE))
        .map(|b| (b as u64, BLOCK_SIZE.min(samples - b * BLOCK_SIZE)))
        .collect()
}

/// Uniform point of `Δ_d` written into `p` (length `d + 1`).
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, p: &mut [f64]) {
    let mut total = 0.0;
    for x in p.iter_mut() {
        let e: f64 = Exp1.sample(rng);
        *x = e;
        total += e;
    }
    for x in p.iter_mut() {
        *x /= total;
    }
}

/// Independent uniform phases on `[0, 2π)`.
pub fn sample_phases<R: Rng + ?Sized>(rng: &mut R, theta: &mut [f64]) {
    for t in theta.iter_mut() {
        *t = rng.random::<f64>() * std::f64::consts::TAU;
    }
}

/// `d!`, the density of the normalized measure w.r.t. Lebesgue measure on
/// the coordinates `(p_1, …, p_d)`.
fn factorial(d: usize) -> f64 {
    (1..=d).map(|k| k as f64).product()
}

/// Result of a vector-valued simplex integration.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureResult {
    pub values: Vec<f64>,
    /// Per-component standard errors (zero for deterministic rules).
    pub std_errors: Vec<f64>,
    /// Largest relative change at the final refinement (NaN for Monte Carlo).
    pub relative_change: f64,
    /// Gauss-Legendre degree per axis, or 0 for Monte Carlo.
    pub degree: usize,
    pub evaluations: usize,
}

/// Settings for [`integrate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    pub start_degree: usize,
    /// Stop refining once `degree^d` would exceed this.
    pub max_points: usize,
    /// Beyond this dimension quadrature gives way to Monte Carlo.
    pub max_quadrature_d: usize,
    pub mc_samples: usize,
    pub mc_seed: u64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            start_degree: 4,
            max_points: 20_000_000,
            max_quadrature_d: 4,
            mc_samples: 1_000_000,
            mc_seed: 0x5eed,
        }
    }
}

/// Tensor Gauss-Legendre rule of the given degree mapped onto `Δ_d`.
pub fn gauss_simplex<F>(d: usize, degree: usize, outputs: usize, f: &F) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let rule = GaussLegendre::new(NonZeroUsize::new(degree).expect("degree >= 1"));
    let nodes: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    let norm = factorial(d);
    if d == 0 {
        let mut out = vec![0.0; outputs];
        f(&[1.0], &mut out);
        return out;
    }
    // Parallel over the first axis; partial sums are added in node order.
    let partials: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&(u1, w1)| {
            let mut acc = vec![0.0; outputs];
            let mut buf = vec![0.0; outputs];
            let mut p = vec![0.0; d + 1];
            let mut idx = vec![0usize; d - 1];
            loop {
                let mut remaining = 1.0;
                let mut weight = w1 * norm;
                for k in 0..d {
                    let (u, w) = if k == 0 { (u1, 1.0) } else { nodes[idx[k - 1]] };
                    weight *= w * remaining;
                    p[k + 1] = remaining * u;
                    remaining *= 1.0 - u;
                }
                p[0] = remaining;
                f(&p, &mut buf);
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += weight * b;
                }
                // odometer over the remaining axes
                let mut k = 0;
                loop {
                    if k == idx.len() {
                        return acc;
                    }
                    idx[k] += 1;
                    if idx[k] < nodes.len() {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
            }
        })
        .collect();
    let mut total = vec![0.0; outputs];
    for part in partials {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    total
}

/// Monte Carlo estimate of `∫ f dλ_d` with standard errors.
pub fn monte_carlo_simplex<F>(d: usize, samples: usize, seed: u64, outputs: usize, f: &F) -> Result<QuadratureResult>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    if samples < 2 {
        return Err(Error::invalid("Monte Carlo needs at least two samples"));
    }
    // (count, mean, m2) per block, merged in block order.
    let parts: Vec<(f64, Vec<f64>, Vec<f64>)> = blocks(samples)
        .par_iter()
        .map(|&(stream, count)| {
            let mut rng = stream_rng(seed, stream);
            let mut p = vec![0.0; d + 1];
            let mut buf = vec![0.0; outputs];
            let mut mean = vec![0.0; outputs];
            let mut m2 = vec![0.0; outputs];
            for i in 0..count {
                sample_simplex(&mut rng, &mut p);
                f(&p, &mut buf);
                let k = (i + 1) as f64;
                for j in 0..outputs {
                    let delta = buf[j] - mean[j];
                    mean[j] += delta / k;
                    m2[j] += delta * (buf[j] - mean[j]);
                }
            }
            (count as f64, mean, m2)
        })
        .collect();
    let mut iter = parts.into_iter();
    let (mut n, mut mean, mut m2) = iter.next().expect("at least one block");
    for (nb, mb, m2b) in iter {
        let tot = n + nb;
        for j in 0..outputs {
            let delta = mb[j] - mean[j];
            mean[j] += delta * nb / tot;
            m2[j] += m2b[j] + delta * delta * n * nb / tot;
        }
        n = tot;
    }
    let std_errors = m2.iter().map(|&s| (s / (n - 1.0) / n).sqrt()).collect();
    Ok(QuadratureResult {
        values: mean,
        std_errors,
        relative_change: f64::NAN,
        degree: 0,
        evaluations: samples,
    })
}

/// Integrates the vector-valued `f` over `Δ_d` against the normalized
/// measure, refining Gauss-Legendre degrees until every component changes by
/// at most `rel_tol` relative to itself; falls back to Monte Carlo when
/// `d > max_quadrature_d`.
pub fn integrate<F>(d: usize, outputs: usize, opts: &QuadratureOptions, f: F) -> Result<QuadratureResult>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    if d > opts.max_quadrature_d {
        return monte_carlo_simplex(d, opts.mc_samples, opts.mc_seed, outputs, &f);
    }
    let points = |deg: usize| (deg as f64).powi(d as i32);
    let mut degree = opts.start_degree.max(1);
    let mut prev = gauss_simplex(d, degree, outputs, &f);
    let mut evaluations = points(degree) as usize;
    loop {
        let next_degree = degree * 2;
        if points(next_degree) > opts.max_points as f64 {
            return Err(Error::Quadrature {
                achieved: f64::NAN,
                target: opts.rel_tol,
            });
        }
        let next = gauss_simplex(d, next_degree, outputs, &f);
        evaluations += points(next_degree) as usize;
        let change = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        degree = next_degree;
        if change <= opts.rel_tol {
            return Ok(QuadratureResult {
                std_errors: vec![0.0; outputs],
                values: next,
                relative_change: change,
                degree,
                evaluations,
            });
        }
        if points(degree * 2) > opts.max_points as f64 {
            return Err(Error::Quadrature { achieved: change, target: opts.rel_tol });
        }
        prev = next;
    }
}
