//! TV-regularized image step of the TV model.
//!
//! Minimizes the ROF objective `||I - mean||^2 + mu TV(I)` by splitting the
//! gradients into auxiliary fields `D = grad I` and running an augmented
//! Lagrangian scheme on
//!
//! ```text
//! ||I - mean||^2 + mu TV(D) + <Lambda, D - grad I> + gamma ||D - grad I||^2
//! ```
//!
//! Setting the derivative in `I` to zero gives the screened Poisson system
//!
//! ```text
//! (Id + gamma grad^T grad) I = mean + 1/2 grad^T Lambda + gamma grad^T D
//! ```
//!
//! which is diagonal in the cosine basis under Neumann boundaries.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::frame::Frame;
use crate::grad::{grad_x, grad_x_adjoint, grad_y, grad_y_adjoint, neumann_laplacian};
use crate::params::DualStep;
use crate::quality::{tv_value, TvVariant};

/// `sign(x) max(|x| - kappa, 0)`.
pub fn shrink(x: f64, kappa: f64) -> f64 {
    if x > kappa {
        x - kappa
    } else if x < -kappa {
        x + kappa
    } else {
        0.0
    }
}

pub fn shrink_field(f: &Frame, kappa: f64) -> Frame {
    f.map(|x| shrink(x, kappa))
}

/// Orthonormal DCT-II matrix: row `k`, column `i` is `w_k cos(pi k (i + 1/2) / n)`.
fn dct_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |k, i| {
        let w = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        w * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos()
    })
}

/// Eigenvalues `4 sin^2(pi k / 2n)` of the 1-D Neumann Laplacian.
fn neumann_eigenvalues(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
            4.0 * s * s
        })
        .collect()
}

/// Precomputed cosine-basis solver for `(Id + gamma grad^T grad) I = rhs`.
#[derive(Debug, Clone)]
pub struct ScreenedPoisson {
    gamma: f64,
    dct_rows: DMatrix<f64>,
    dct_cols: DMatrix<f64>,
    inverse_symbol: DMatrix<f64>,
}

impl ScreenedPoisson {
    pub fn new(rows: usize, cols: usize, gamma: f64) -> Self {
        let er = neumann_eigenvalues(rows);
        let ec = neumann_eigenvalues(cols);
        Self {
            gamma,
            dct_rows: dct_matrix(rows),
            dct_cols: dct_matrix(cols),
            inverse_symbol: DMatrix::from_fn(rows, cols, |k, l| 1.0 / (1.0 + gamma * (er[k] + ec[l]))),
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn solve(&self, rhs: &Frame) -> Frame {
        if self.gamma == 0.0 {
            return rhs.clone();
        }
        let coeffs = &self.dct_rows * rhs * self.dct_cols.transpose();
        let scaled = coeffs.component_mul(&self.inverse_symbol);
        self.dct_rows.transpose() * scaled * &self.dct_cols
    }
}

/// Applies `Id + gamma grad^T grad`.
pub fn apply_screened_operator(f: &Frame, gamma: f64) -> Frame {
    f + neumann_laplacian(f) * gamma
}

/// Solves `(Id + gamma grad^T grad) I = rhs` in the cosine basis.
pub fn solve_screened_poisson(rhs: &Frame, gamma: f64) -> Frame {
    let (r, s) = rhs.shape();
    ScreenedPoisson::new(r, s, gamma).solve(rhs)
}

/// Conjugate-gradient solve of the same system, for operators the cosine
/// basis does not diagonalize.
pub fn solve_screened_poisson_cg(rhs: &Frame, gamma: f64, rel_tol: f64, max_iter: usize) -> Frame {
    let mut x = rhs.clone();
    let mut r = rhs - apply_screened_operator(&x, gamma);
    let mut p = r.clone();
    let mut rs = r.norm_squared();
    let target = (rel_tol * rhs.norm()).powi(2);
    for _ in 0..max_iter {
        if rs <= target {
            break;
        }
        let ap = apply_screened_operator(&p, gamma);
        let step = rs / p.dot(&ap);
        x += &p * step;
        r -= &ap * step;
        let rs_next = r.norm_squared();
        p = &r + &p * (rs_next / rs);
        rs = rs_next;
    }
    x
}

/// `||I - mean||^2 + mu TV(I)`.
pub fn rof_objective(image: &Frame, mean: &Frame, mu: f64, variant: TvVariant) -> f64 {
    (image - mean).norm_squared() + mu * tv_value(image, variant)
}

/// Auxiliary fields of the splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitState {
    pub dx: Frame,
    pub dy: Frame,
    pub lambda_x: Frame,
    pub lambda_y: Frame,
    /// `|D|` after the last isotropic D-step (the step itself is linearized
    /// around the magnitude of the fresh image gradient).
    pub s_field: Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvConfig {
    pub mu: f64,
    pub gamma: f64,
    pub variant: TvVariant,
    /// Relative objective change at which the iteration stops.
    pub inner_tol: f64,
    /// Relative constraint residual `||D - grad I|| / ||grad I||` required to stop.
    pub residual_tol: f64,
    pub max_inner: usize,
    pub dual_step: DualStep,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            gamma: 1.0,
            variant: TvVariant::Aniso,
            inner_tol: 1e-6,
            residual_tol: 1e-3,
            max_inner: 200,
            dual_step: DualStep::TwiceGamma,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TvOutcome {
    /// Iterate with the lowest ROF objective seen, the initializer included.
    pub image: Frame,
    pub objective: f64,
    /// Splitting state at the last iteration.
    pub state: SplitState,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `||I - mean||^2 + mu TV(I)` starting from `I = mean`.
pub fn tv_restore(mean: &Frame, config: &TvConfig) -> TvOutcome {
    let (r, c) = mean.shape();
    let TvConfig { mu, gamma, variant, .. } = *config;
    let step = config.dual_step.resolve(mu, gamma);
    let solver = ScreenedPoisson::new(r, c, gamma);

    let initial_objective = rof_objective(mean, mean, mu, variant);
    let mut best_image = mean.clone();
    let mut best_objective = initial_objective;
    if mu == 0.0 || initial_objective == 0.0 {
        return TvOutcome {
            image: best_image,
            objective: best_objective,
            state: SplitState {
                dx: grad_x(mean),
                dy: grad_y(mean),
                lambda_x: Frame::zeros(r, c),
                lambda_y: Frame::zeros(r, c),
                s_field: Frame::zeros(r, c),
            },
            iterations: 0,
            converged: true,
        };
    }

    let mut dx = grad_x(mean);
    let mut dy = grad_y(mean);
    let mut lambda_x = Frame::zeros(r, c);
    let mut lambda_y = Frame::zeros(r, c);
    let mut s_field = dx.zip_map(&dy, f64::hypot);
    let mut previous = initial_objective;
    let mut converged = false;
    let mut iterations = 0;

    for m in 1..=config.max_inner {
        iterations = m;
        let rhs = mean
            + (grad_x_adjoint(&lambda_x) + grad_y_adjoint(&lambda_y)) * 0.5
            + (grad_x_adjoint(&dx) + grad_y_adjoint(&dy)) * gamma;
        let image = solver.solve(&rhs);
        let gx = grad_x(&image);
        let gy = grad_y(&image);

        match variant {
            TvVariant::Aniso => {
                let inv = 1.0 / (2.0 * gamma);
                dx = (&gx * (2.0 * gamma) - &lambda_x).map(|v| shrink(v, mu) * inv);
                dy = (&gy * (2.0 * gamma) - &lambda_y).map(|v| shrink(v, mu) * inv);
            }
            TvVariant::Iso => {
                // (mu + 2 gamma s) D = s (2 gamma grad I - Lambda), s = |grad I|.
                let s_lin = gx.zip_map(&gy, f64::hypot);
                let relax = |g: &Frame, lam: &Frame, s: &Frame| {
                    Frame::from_fn(r, c, |i, j| {
                        let s = s[(i, j)];
                        let denom = mu + 2.0 * gamma * s;
                        if denom > 0.0 {
                            s * (2.0 * gamma * g[(i, j)] - lam[(i, j)]) / denom
                        } else {
                            0.0
                        }
                    })
                };
                dx = relax(&gx, &lambda_x, &s_lin);
                dy = relax(&gy, &lambda_y, &s_lin);
                s_field = dx.zip_map(&dy, f64::hypot);
            }
        }

        let res_x = &dx - &gx;
        let res_y = &dy - &gy;
        lambda_x += &res_x * step;
        lambda_y += &res_y * step;

        let objective = rof_objective(&image, mean, mu, variant);
        if objective < best_objective {
            best_objective = objective;
            best_image = image.clone();
        }
        let grad_norm = (gx.norm_squared() + gy.norm_squared()).sqrt();
        let residual = (res_x.norm_squared() + res_y.norm_squared()).sqrt() / grad_norm.max(1e-12);
        let change = (objective - previous).abs() / objective.abs().max(1e-12);
        previous = objective;
        if m > 1 && change <= config.inner_tol && residual <= config.residual_tol {
            converged = true;
            break;
        }
    }

    TvOutcome {
        image: best_image,
        objective: best_objective,
        state: SplitState {
            dx,
            dy,
            lambda_x,
            lambda_y,
            s_field,
        },
        iterations,
        converged,
    }
}
