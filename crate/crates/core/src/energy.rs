//! The shared energy of all three models and its per-iteration record.
//!
//! Every model has the form
//!
//! ```text
//! E(I, J) = 1/|J| * sum_{k in J} (F(I, I_k) + lambda * Q(I_k)) + mu * R(I) - tau * (1 - exp(-rho |J|))
//! ```
//!
//! with `R = 0` for the two mean-based models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `tau * (1 - exp(-rho * size))`, concave and nondecreasing in `size`.
pub fn subsample_reward(size: usize, tau: f64, rho: f64) -> f64 {
    tau * -(-rho * size as f64).exp_m1()
}

/// Resolved scalar weights of an energy evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyWeights {
    pub lambda: f64,
    pub mu: f64,
    pub tau: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub mean_fidelity: f64,
    pub mean_quality: f64,
    /// `R(I)` before weighting by `mu`.
    pub regularizer: f64,
    pub reward: f64,
    pub size: usize,
}

/// Evaluates the model energy from per-selected-frame fidelity and quality.
///
/// `fidelity[i]` and `quality[i]` belong to the `i`-th selected frame.
/// `regularizer` is `R(I)`; pass 0 for the models without one.
pub fn model_energy(
    fidelity: &[f64],
    quality: &[f64],
    regularizer: f64,
    weights: &EnergyWeights,
) -> Result<EnergyBreakdown> {
    if fidelity.is_empty() {
        return Err(Error::EmptySubsample);
    }
    if fidelity.len() != quality.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} fidelity values but {} quality values",
            fidelity.len(),
            quality.len()
        )));
    }
    let size = fidelity.len();
    let mean_fidelity = fidelity.iter().sum::<f64>() / size as f64;
    let mean_quality = quality.iter().sum::<f64>() / size as f64;
    let reward = subsample_reward(size, weights.tau, weights.rho);
    let total =
        mean_fidelity + weights.lambda * mean_quality + weights.mu * regularizer - reward;
    Ok(EnergyBreakdown {
        total,
        mean_fidelity,
        mean_quality,
        regularizer,
        reward,
        size,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub energy: EnergyBreakdown,
}

/// Per-iteration energies of an outer loop, iterations numbered from 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    records: Vec<TraceRecord>,
}

impl EnergyTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the energy of the next iteration and returns its index.
    pub fn push(&mut self, energy: EnergyBreakdown) -> usize {
        let iteration = self.records.len() + 1;
        self.records.push(TraceRecord { iteration, energy });
        iteration
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy.total).collect()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn weights(lambda: f64, tau: f64) -> EnergyWeights {
        EnergyWeights {
            lambda,
            mu: 0.0,
            tau,
            rho: 0.1,
        }
    }

    #[test]
    fn reward_of_empty_is_zero() {
        assert_eq!(subsample_reward(0, 3.0, 0.1), 0.0);
    }

    #[test]
    fn reward_direct_value() {
        let r = subsample_reward(10, 1.0, 0.1);
        assert!((r - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((r - 0.632121).abs() < 1e-6);
    }

    #[test]
    fn reward_marginal_gains_strictly_decrease() {
        let gains: Vec<f64> = (0..=20)
            .map(|k| subsample_reward(k + 1, 1.0, 0.1) - subsample_reward(k, 1.0, 0.1))
            .collect();
        for w in gains.windows(2) {
            assert!(w[1] < w[0], "{w:?}");
        }
    }

    #[test]
    fn energy_vanishes_with_vanishing_terms() {
        let e = model_energy(&[0.0], &[0.0], 0.0, &weights(1.0, 0.0)).unwrap();
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn energy_is_plain_average_without_weights() {
        let e = model_energy(&[1.0, 3.0], &[0.4, 0.9], 0.0, &weights(0.0, 0.0)).unwrap();
        assert_eq!(e.total, 2.0);
        assert_eq!(e.size, 2);
    }

    #[test]
    fn empty_or_mismatched_inputs_error() {
        assert_eq!(
            model_energy(&[], &[], 0.0, &weights(1.0, 1.0)).unwrap_err(),
            Error::EmptySubsample
        );
        assert!(model_energy(&[1.0], &[], 0.0, &weights(1.0, 1.0)).is_err());
    }

    #[test]
    fn energy_matches_independent_evaluation() {
        // Independent re-evaluation: sum each frame's own term, then average.
        let fid = [12.5, 3.25, 7.0, 0.5];
        let qual = [0.0, 1.0, 0.25, 0.75];
        let (lambda, tau, rho, mu, reg) = (300.0, 40.0, 0.1, 0.5, 9.0);
        let w = EnergyWeights { lambda, mu, tau, rho };
        let e = model_energy(&fid, &qual, reg, &w).unwrap();
        let mut per_frame = 0.0;
        for k in 0..4 {
            per_frame += fid[k] + lambda * qual[k];
        }
        let expected = per_frame / 4.0 + mu * reg - tau * (1.0 - (-rho * 4.0f64).exp());
        assert!((e.total - expected).abs() <= 1e-12 * expected.abs());
    }

    #[test]
    fn trace_numbers_from_one() {
        let mut t = EnergyTrace::new();
        let e = model_energy(&[1.0], &[0.0], 0.0, &weights(0.0, 0.0)).unwrap();
        assert_eq!(t.push(e), 1);
        assert_eq!(t.push(e), 2);
        assert_eq!(t.records()[1].iteration, 2);
    }

    proptest! {
        #[test]
        fn reward_is_concave(tau in 0.0f64..100.0, rho in 0.001f64..2.0, k in 1usize..200) {
            let second = subsample_reward(k + 1, tau, rho) - 2.0 * subsample_reward(k, tau, rho)
                + subsample_reward(k - 1, tau, rho);
            prop_assert!(second <= 1e-12 * tau.max(1.0));
        }

        #[test]
        fn breakdown_sums_to_total(
            fid in proptest::collection::vec(0.0f64..1e3, 1..30),
            lambda in 0.0f64..500.0,
            tau in 0.0f64..500.0,
            mu in 0.0f64..2.0,
            reg in 0.0f64..1e3,
        ) {
            let qual: Vec<f64> = fid.iter().map(|f| (f / 1e3).min(1.0)).collect();
            let w = EnergyWeights { lambda, mu, tau, rho: 0.1 };
            let e = model_energy(&fid, &qual, reg, &w).unwrap();
            let recomposed = e.mean_fidelity + lambda * e.mean_quality + mu * e.regularizer - e.reward;
            let scale = e.mean_fidelity.abs() + lambda * e.mean_quality + mu * reg + e.reward + 1e-300;
            prop_assert!((recomposed - e.total).abs() <= 1e-12 * scale);
        }
    }
}
