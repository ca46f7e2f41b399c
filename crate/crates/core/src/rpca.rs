//! Robust PCA by the exact augmented Lagrange multiplier method.
//!
//! Splits a matrix `M` into a low-rank part `L` and a sparse part `S` by
//! minimizing `||L||_* + beta ||S||_1` subject to `L + S = M`. Each outer
//! iteration minimizes the augmented Lagrangian
//!
//! ```text
//! ||L||_* + beta ||S||_1 + <Y, M - L - S> + alpha/2 ||M - L - S||_F^2
//! ```
//!
//! jointly in `(L, S)` by alternating singular value thresholding and
//! entrywise shrinkage, then takes a multiplier step and grows `alpha`.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RpcaConfig {
    /// Sparse weight; `None` means `1 / sqrt(max(rows, cols))`.
    pub beta: Option<f64>,
    /// Initial penalty; `None` means `1.25 / ||M||_2`.
    pub alpha0: Option<f64>,
    pub growth: f64,
    pub alpha_max: f64,
    /// Relative Frobenius feasibility tolerance.
    pub tol: f64,
    /// Outer (multiplier) iterations.
    pub max_iter: usize,
    /// Alternations per outer iteration.
    pub max_inner: usize,
    pub inner_tol: f64,
}

impl Default for RpcaConfig {
    fn default() -> Self {
        Self {
            beta: None,
            alpha0: None,
            growth: 1.6,
            alpha_max: 1e7,
            tol: 1e-7,
            max_iter: 500,
            max_inner: 100,
            inner_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
    /// Outer iterations performed.
    pub iterations: usize,
    /// Singular value decompositions performed.
    pub svd_count: usize,
    /// `||M - L - S||_F / ||M||_F` of the returned pair.
    pub residual: f64,
    pub converged: bool,
}

impl Decomposition {
    pub fn rank(&self, tol: f64) -> usize {
        self.low_rank.singular_values().iter().filter(|&&s| s > tol).count()
    }
}

/// `1 / sqrt(max(rows, cols))`.
pub fn default_beta(rows: usize, cols: usize) -> f64 {
    1.0 / (rows.max(cols) as f64).sqrt()
}

/// Soft-thresholds the singular values of `a` at `threshold`.
pub fn svt(a: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    svt_counted(a, threshold).0
}

/// As [`svt`], also returning the number of singular values kept.
pub fn svt_counted(a: &DMatrix<f64>, threshold: f64) -> (DMatrix<f64>, usize) {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return (a.clone(), 0);
    }
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.as_ref().expect("computed");
    let v_t = svd.v_t.as_ref().expect("computed");
    let mut out = DMatrix::zeros(rows, cols);
    let mut kept = 0;
    for (i, &sigma) in svd.singular_values.iter().enumerate() {
        let shrunk = sigma - threshold;
        if shrunk > 0.0 {
            kept += 1;
            out.ger(shrunk, &u.column(i), &v_t.row(i).transpose(), 1.0);
        }
    }
    (out, kept)
}

/// Entrywise soft threshold `sign(x) max(|x| - kappa, 0)`.
pub fn shrink_entries(a: &DMatrix<f64>, kappa: f64) -> DMatrix<f64> {
    a.map(|x| crate::tvsolver::shrink(x, kappa))
}

pub fn nuclear_norm(a: &DMatrix<f64>) -> f64 {
    a.singular_values().sum()
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Decomposes `m` into low-rank and sparse parts.
pub fn rpca_ealm(m: &DMatrix<f64>, config: &RpcaConfig) -> Result<Decomposition> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::ShapeMismatch("empty matrix".into()));
    }
    let beta = config.beta.unwrap_or_else(|| default_beta(rows, cols));
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("beta must be positive".into()));
    }
    let m_norm = m.norm();
    if m_norm == 0.0 {
        return Ok(Decomposition {
            low_rank: DMatrix::zeros(rows, cols),
            sparse: DMatrix::zeros(rows, cols),
            iterations: 1,
            svd_count: 0,
            residual: 0.0,
            converged: true,
        });
    }
    let m_spec = spectral_norm(m);
    let m_inf = m.amax();
    let mut alpha = config.alpha0.unwrap_or(1.25 / m_spec);
    // Dual-feasible starting multiplier.
    let mut y = m / m_spec.max(m_inf / beta);
    let mut low_rank = DMatrix::zeros(rows, cols);
    let mut sparse = DMatrix::zeros(rows, cols);
    let mut svd_count = 0;
    let mut best: Option<(f64, DMatrix<f64>, DMatrix<f64>)> = None;

    for iteration in 1..=config.max_iter {
        for _ in 0..config.max_inner {
            let target = m - &sparse + &y / alpha;
            let next_low = svt(&target, 1.0 / alpha);
            svd_count += 1;
            let next_sparse = shrink_entries(&(m - &next_low + &y / alpha), beta / alpha);
            let change = (&next_low - &low_rank).norm() + (&next_sparse - &sparse).norm();
            low_rank = next_low;
            sparse = next_sparse;
            if change <= config.inner_tol * m_norm {
                break;
            }
        }
        let gap = m - &low_rank - &sparse;
        let residual = gap.norm() / m_norm;
        if best.as_ref().is_none_or(|(r, _, _)| residual < *r) {
            best = Some((residual, low_rank.clone(), sparse.clone()));
        }
        if residual <= config.tol {
            return Ok(Decomposition {
                low_rank,
                sparse,
                iterations: iteration,
                svd_count,
                residual,
                converged: true,
            });
        }
        y += &gap * alpha;
        alpha = (alpha * config.growth).min(config.alpha_max);
    }

    let (residual, low_rank, sparse) = best.expect("max_iter >= 1");
    log::warn!(
        "rpca did not reach tolerance {} after {} iterations (residual {residual:.3e})",
        config.tol,
        config.max_iter
    );
    Ok(Decomposition {
        low_rank,
        sparse,
        iterations: config.max_iter,
        svd_count,
        residual,
        converged: false,
    })
}
