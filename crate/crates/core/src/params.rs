use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which energy model, and therefore which outer loop, to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// L² fidelity, Laplacian sharpness quality, temporal-mean I-step.
    Iris,
    /// L² fidelity against the low-rank part of the frames.
    Liris,
    /// L² fidelity with anisotropic TV on the image and as frame quality.
    TvirisAniso,
    /// As [`Model::TvirisAniso`] with isotropic TV.
    TvirisIso,
}

impl Model {
    pub fn is_tv(self) -> bool {
        matches!(self, Model::TvirisAniso | Model::TvirisIso)
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::Iris => "iris",
            Model::Liris => "liris",
            Model::TvirisAniso => "tviris-aniso",
            Model::TvirisIso => "tviris-iso",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iris" => Ok(Model::Iris),
            "liris" => Ok(Model::Liris),
            "tviris-aniso" => Ok(Model::TvirisAniso),
            "tviris-iso" => Ok(Model::TvirisIso),
            other => Err(Error::InvalidParameter(format!("unknown model `{other}`"))),
        }
    }
}

/// Step used for the multiplier update of the TV splitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum DualStep {
    /// `1 / (2 mu)`. Stalls for small `mu` (large steps).
    InverseTwiceMu,
    /// `2 gamma`, the usual augmented Lagrangian step for this penalty
    /// scaling. The default.
    TwiceGamma,
    Fixed(f64),
}

impl DualStep {
    pub fn resolve(self, mu: f64, gamma: f64) -> f64 {
        match self {
            DualStep::InverseTwiceMu => 1.0 / (2.0 * mu),
            DualStep::TwiceGamma => 2.0 * gamma,
            DualStep::Fixed(step) => step,
        }
    }
}

/// Quality weight 300 for 8-bit intensities, rescaled to `[0, 1]`
/// intensities: the squared-L² fidelity shrinks by `255^2` under that
/// normalization, so the weight does too.
pub const DEFAULT_LAMBDA: f64 = 300.0 / (255.0 * 255.0);

/// Converts a quality weight given for 8-bit intensities.
pub fn lambda_from_8bit(lambda: f64) -> f64 {
    lambda / (255.0 * 255.0)
}

/// All weights and solver settings of a restoration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub model: Model,
    /// Weight of the per-frame quality term, against fidelity measured on
    /// `[0, 1]` intensities. See [`DEFAULT_LAMBDA`].
    pub lambda: f64,
    /// Weight of the subsample-size reward. `None` picks the median per-frame
    /// energy of the first J-step.
    pub tau: Option<f64>,
    /// Curvature of the subsample-size reward.
    pub rho: f64,
    /// TV weight on the restored image (TV models only).
    pub mu: f64,
    /// Splitting penalty of the TV solver.
    pub gamma: f64,
    /// Sparse weight of RPCA. `None` uses `1 / sqrt(max(rows, cols))`.
    pub beta: Option<f64>,
    /// Initial RPCA penalty. `None` uses `1.25 / ||M||_2`.
    pub alpha0: Option<f64>,
    /// Outer stopping tolerance on the energy change.
    pub epsilon: f64,
    pub max_outer: usize,
    pub rpca_tol: f64,
    pub rpca_max_iter: usize,
    pub tv_inner_tol: f64,
    pub tv_max_inner: usize,
    pub dual_step: DualStep,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            model: Model::Iris,
            lambda: DEFAULT_LAMBDA,
            tau: None,
            rho: 0.1,
            mu: 0.5,
            gamma: 1.0,
            beta: None,
            alpha0: None,
            epsilon: 1e-5,
            max_outer: 100,
            rpca_tol: 1e-7,
            rpca_max_iter: 500,
            tv_inner_tol: 1e-6,
            tv_max_inner: 200,
            dual_step: DualStep::TwiceGamma,
        }
    }
}

impl ModelParams {
    pub fn for_model(model: Model) -> Self {
        Self {
            model,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.lambda >= 0.0) {
            return bad("lambda must be nonnegative");
        }
        if let Some(tau) = self.tau {
            if !(tau >= 0.0) {
                return bad("tau must be nonnegative");
            }
        }
        if !(self.rho > 0.0) {
            return bad("rho must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.max_outer == 0 {
            return bad("max_outer must be at least 1");
        }
        if self.model.is_tv() {
            if !(self.gamma > 0.0) {
                return bad("gamma must be positive");
            }
            if !(self.mu >= 0.0) {
                return bad("mu must be nonnegative");
            }
        }
        if let Some(beta) = self.beta {
            if !(beta > 0.0) {
                return bad("beta must be positive");
            }
        }
        if let Some(alpha0) = self.alpha0 {
            if !(alpha0 > 0.0) {
                return bad("alpha0 must be positive");
            }
        }
        Ok(())
    }
}
