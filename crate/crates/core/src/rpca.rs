//! Robust PCA: split a nonnegative spectrogram into a low-rank part
//! (repeating accompaniment) and a sparse part (vocals) by minimizing
//! `||L||_* + lambda_hat ||S||_1` subject to `L + S = X`.
//!
//! The solver is the inexact augmented Lagrange multiplier method: one
//! singular value thresholding step and one soft thresholding step per
//! multiplier update, with a geometrically growing penalty `mu`.
//!
//! ```
//! use ndarray::array;
//! use vocalsep::rpca::svt;
//!
//! let m = array![[3.0, 0.0], [0.0, 1.0]];
//! let shrunk = svt(&m, 2.0).unwrap();
//! assert!((shrunk[[0, 0]] - 1.0).abs() < 1e-12);
//! assert!(shrunk[[1, 1]].abs() < 1e-12);
//! ```

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::svd::{self as faer_svd, ComputeSvdVectors};
use faer::{Mat, Par};
use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpcaConfig {
    /// Sparsity factor; the solver uses `lambda / sqrt(max(T, F))`.
    pub lambda: f64,
    /// Stop once `||X - L - S||_F / ||X||_F` drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// `mu_0 = mu_initial_scale / ||X||_2`.
    pub mu_initial_scale: f64,
    /// Per-iteration growth factor of `mu`; must exceed 1.
    pub mu_growth: f64,
    /// `mu` never exceeds `mu_cap_ratio * mu_0`.
    pub mu_cap_ratio: f64,
    /// Record residual, rank and support size at every iteration.
    pub record_trace: bool,
}

impl Default for RpcaConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tolerance: 1e-7,
            max_iterations: 1000,
            mu_initial_scale: 1.25,
            mu_growth: 1.5,
            mu_cap_ratio: 1e7,
            record_trace: false,
        }
    }
}

impl RpcaConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.mu_growth > 1.0) {
            return Err(Error::invalid("mu_growth must exceed 1"));
        }
        if !(self.mu_initial_scale > 0.0) || !(self.mu_cap_ratio >= 1.0) {
            return Err(Error::invalid("mu schedule scalars must be positive"));
        }
        Ok(())
    }

    /// `lambda / sqrt(max(T, F))`.
    pub fn scaled_lambda(&self, frames: usize, bins: usize) -> f64 {
        self.lambda / (frames.max(bins) as f64).sqrt()
    }
}

/// One solver iteration as recorded in the optional trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub rank: usize,
    pub nnz: usize,
}

#[derive(Clone, Debug)]
pub struct RpcaResult {
    pub low_rank: Array2<f64>,
    pub sparse: Array2<f64>,
    pub iterations: usize,
    /// Relative constraint residual at exit.
    pub final_residual: f64,
    pub converged: bool,
    /// Worker threads used by the SVD kernels; always 1.
    pub svd_threads: usize,
    pub trace: Vec<IterationRecord>,
}

/// Thin SVD `m = U diag(s) V^T` computed sequentially so repeated runs are
/// bitwise identical.
fn thin_svd(m: &Array2<f64>) -> Result<(Mat<f64>, Vec<f64>, Mat<f64>)> {
    let (rows, cols) = m.dim();
    let k = rows.min(cols);
    let a = Mat::<f64>::from_fn(rows, cols, |i, j| m[[i, j]]);
    let mut s = Diag::<f64>::zeros(k);
    let mut u = Mat::<f64>::zeros(rows, k);
    let mut v = Mat::<f64>::zeros(cols, k);
    let par = Par::Seq;
    let mut mem = MemBuffer::new(faer_svd::svd_scratch::<f64>(
        rows,
        cols,
        ComputeSvdVectors::Thin,
        ComputeSvdVectors::Thin,
        par,
        Default::default(),
    ));
    faer_svd::svd(
        a.as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        Some(v.as_mut()),
        par,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|_| Error::Svd)?;
    let sv = (0..k).map(|i| s.column_vector()[i]).collect();
    Ok((u, sv, v))
}

/// Largest singular value.
pub fn spectral_norm(m: &Array2<f64>) -> Result<f64> {
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Ok(0.0);
    }
    let a = Mat::<f64>::from_fn(rows, cols, |i, j| m[[i, j]]);
    let s = a.singular_values().map_err(|_| Error::Svd)?;
    Ok(s.first().copied().unwrap_or(0.0))
}

/// Singular value thresholding: `U shrink(S, threshold) V^T`. Returns the
/// result with its rank (number of singular values above `threshold`).
fn svt_with_rank(m: &Array2<f64>, threshold: f64) -> Result<(Array2<f64>, usize)> {
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Ok((m.clone(), 0));
    }
    let (u, s, v) = thin_svd(m)?;
    let kept: Vec<(usize, f64)> = s
        .iter()
        .enumerate()
        .filter_map(|(i, &sigma)| {
            let shrunk = sigma - threshold;
            (shrunk > 0.0).then_some((i, shrunk))
        })
        .collect();
    let rank = kept.len();
    let mut out = Array2::<f64>::zeros((rows, cols));
    if rank == 0 {
        return Ok((out, 0));
    }
    // U_r diag(s_r) V_r^T as a faer product.
    let us = Mat::<f64>::from_fn(rows, rank, |i, r| u[(i, kept[r].0)] * kept[r].1);
    let vr = Mat::<f64>::from_fn(cols, rank, |j, r| v[(j, kept[r].0)]);
    let product = us * vr.transpose();
    out.indexed_iter_mut()
        .for_each(|((i, j), o)| *o = product[(i, j)]);
    Ok((out, rank))
}

pub fn svt(m: &Array2<f64>, threshold: f64) -> Result<Array2<f64>> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid("threshold must be nonnegative"));
    }
    svt_with_rank(m, threshold).map(|(out, _)| out)
}

/// Element-wise shrinkage `sign(v) max(|v| - threshold, 0)`.
pub fn soft_threshold(m: &Array2<f64>, threshold: f64) -> Array2<f64> {
    m.mapv(|v| shrink(v, threshold))
}

#[inline]
fn shrink(v: f64, threshold: f64) -> f64 {
    if v > threshold {
        v - threshold
    } else if v < -threshold {
        v + threshold
    } else {
        0.0
    }
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solves the robust PCA problem for `x` with the inexact ALM method.
///
/// Hitting `max_iterations` is not an error: the last iterate is returned
/// with `converged == false`.
pub fn decompose(x: &Array2<f64>, cfg: &RpcaConfig) -> Result<RpcaResult> {
    cfg.validate()?;
    let (rows, cols) = x.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("cannot decompose an empty matrix"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix contains NaN or infinite entries"));
    }
    let norm_fro = frobenius(x);
    if norm_fro == 0.0 {
        return Ok(RpcaResult {
            low_rank: Array2::zeros(x.dim()),
            sparse: Array2::zeros(x.dim()),
            iterations: 0,
            final_residual: 0.0,
            converged: true,
            svd_threads: 1,
            trace: Vec::new(),
        });
    }

    let lambda = cfg.scaled_lambda(rows, cols);
    let norm_two = spectral_norm(x)?;
    let norm_inf = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs())) / lambda;
    let mut y = x / norm_two.max(norm_inf);
    let mut mu = cfg.mu_initial_scale / norm_two;
    let mu_cap = mu * cfg.mu_cap_ratio;

    let mut low_rank = Array2::<f64>::zeros(x.dim());
    let mut sparse = Array2::<f64>::zeros(x.dim());
    let mut work = Array2::<f64>::zeros(x.dim());
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let inv_mu = 1.0 / mu;

        Zip::from(&mut work)
            .and(x)
            .and(&sparse)
            .and(&y)
            .for_each(|w, &xv, &s, &yv| *w = xv - s + yv * inv_mu);
        let (l, rank) = svt_with_rank(&work, inv_mu)?;
        low_rank = l;

        let shrink_by = lambda * inv_mu;
        Zip::from(&mut sparse)
            .and(x)
            .and(&low_rank)
            .and(&y)
            .for_each(|s, &xv, &l, &yv| *s = shrink(xv - l + yv * inv_mu, shrink_by));

        // work <- X - L - S, the constraint violation.
        Zip::from(&mut work)
            .and(x)
            .and(&low_rank)
            .and(&sparse)
            .for_each(|w, &xv, &l, &s| *w = xv - l - s);
        y.scaled_add(mu, &work);
        mu = (mu * cfg.mu_growth).min(mu_cap);

        residual = frobenius(&work) / norm_fro;
        if cfg.record_trace {
            trace.push(IterationRecord {
                iteration: iterations,
                residual,
                rank,
                nnz: sparse.iter().filter(|v| v.abs() > 0.0).count(),
            });
        }
        log::trace!("rpca iteration {iterations}: residual {residual:.3e}, rank {rank}");
        if residual < cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(RpcaResult {
        low_rank,
        sparse,
        iterations,
        final_residual: residual,
        converged,
        svd_threads: 1,
        trace,
    })
}
