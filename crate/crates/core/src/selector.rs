//! The J-subproblem: choosing the subsample for a fixed reference image.
//!
//! For a fixed cardinality `p` the best subsample is the `p` frames with the
//! smallest per-frame energies, so scanning the prefix averages of the sorted
//! energies over every `p` finds the global minimizer in `O(n log n)`.

use serde::Serialize;

use crate::energy::subsample_reward;
use crate::error::{Error, Result};
use crate::frame::{Frame, SubsampleSet};

/// Largest stack the exhaustive oracle accepts.
pub const ORACLE_MAX_FRAMES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub subset: SubsampleSet,
    pub energy: f64,
}

/// Frame indices ordered by ascending energy, ties kept in index order.
pub fn sorted_order(energies: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    order
}

/// Accumulated energies `S_j = mean of the j smallest energies - reward(j)`
/// for `j = 1..=n`, together with the sorting permutation.
pub fn accumulated_energies(energies: &[f64], tau: f64, rho: f64) -> (Vec<usize>, Vec<f64>) {
    let order = sorted_order(energies);
    let mut prefix = 0.0;
    let accumulated = order
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            prefix += energies[k];
            let j = i + 1;
            prefix / j as f64 - subsample_reward(j, tau, rho)
        })
        .collect();
    (order, accumulated)
}

/// Globally optimal subsample by sorting and scanning prefix averages.
///
/// Among equal accumulated energies the smallest subsample wins.
pub fn select_subsample(energies: &[f64], tau: f64, rho: f64) -> Result<Selection> {
    if energies.is_empty() {
        return Err(Error::EmptyStack);
    }
    if energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (order, accumulated) = accumulated_energies(energies, tau, rho);
    let (best, &energy) = accumulated
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, &f64)>, (j, s)| match best {
            Some((_, b)) if *b <= *s => best,
            _ => Some((j, s)),
        })
        .expect("nonempty");
    let subset = SubsampleSet::from_unsorted(order[..=best].to_vec())?;
    Ok(Selection { subset, energy })
}

/// Energy of one subsample: mean energy of its frames minus the reward.
pub fn subset_energy(energies: &[f64], subset: &[usize], tau: f64, rho: f64) -> f64 {
    let sum: f64 = subset.iter().map(|&k| energies[k]).sum();
    sum / subset.len() as f64 - subsample_reward(subset.len(), tau, rho)
}

/// Exhaustive search over all `2^n - 1` nonempty subsamples.
///
/// Ties resolve to the lexicographically smallest index list.
pub fn brute_force_select(energies: &[f64], tau: f64, rho: f64) -> Result<Selection> {
    exhaustive_select(energies.len(), |subset| {
        subset_energy(energies, subset, tau, rho)
    })
}

/// Exhaustive minimization of an arbitrary subsample energy.
pub fn exhaustive_select<F>(n: usize, mut energy_of: F) -> Result<Selection>
where
    F: FnMut(&[usize]) -> f64,
{
    if n == 0 {
        return Err(Error::EmptyStack);
    }
    if n > ORACLE_MAX_FRAMES {
        return Err(Error::OracleSizeLimit {
            n,
            max: ORACLE_MAX_FRAMES,
        });
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut subset = Vec::with_capacity(n);
    for mask in 1u32..(1u32 << n) {
        subset.clear();
        subset.extend((0..n).filter(|k| mask & (1 << k) != 0));
        let e = energy_of(&subset);
        let better = match &best {
            None => true,
            Some((b, be)) => e < *be || (e == *be && subset.as_slice() < b.as_slice()),
        };
        if better {
            best = Some((subset.clone(), e));
        }
    }
    let (indices, energy) = best.expect("n >= 1");
    Ok(Selection {
        subset: SubsampleSet::new(indices)?,
        energy,
    })
}

/// Separation quantities that certify the relaxed low-rank J-step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationDiagnostics {
    /// Smallest gap between consecutive sorted per-frame energies.
    pub d_e: f64,
    /// Smallest gap between consecutive sorted accumulated energies.
    pub d_s: f64,
    /// Largest distance from the reference to any low-rank column supplied.
    pub m: f64,
    /// Bound on how far subsample low-rank columns move from the full ones.
    pub l: f64,
}

impl SeparationDiagnostics {
    /// Fixed-cardinality condition `l < d_E / (4M)`.
    pub fn order_condition(&self) -> bool {
        strict_below(self.l, self.d_e, self.m)
    }

    /// Whole-problem condition `l < d_S / (4M)`.
    pub fn accumulated_condition(&self) -> bool {
        strict_below(self.l, self.d_s, self.m)
    }

    /// Both conditions; the accumulated one alone does not pin the sorted
    /// order the prefix scan depends on.
    pub fn certified(&self) -> bool {
        self.order_condition() && self.accumulated_condition()
    }
}

fn strict_below(l: f64, gap: f64, m: f64) -> bool {
    if gap == 0.0 {
        return false;
    }
    if m == 0.0 || gap.is_infinite() {
        return l.is_finite();
    }
    l < gap / (4.0 * m)
}

fn min_consecutive_gap(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Computes the separation diagnostics for a reference image.
///
/// `lowrank_columns` holds every low-rank column the bound `M` ranges over,
/// typically the columns of the full decomposition and of every subsample
/// decomposition considered. With fewer than two frames the gaps are `+inf`.
pub fn separation_diagnostics(
    reference: &Frame,
    lowrank_columns: &nalgebra::DMatrix<f64>,
    perturbation_bound: f64,
    energies: &[f64],
    tau: f64,
    rho: f64,
) -> Result<SeparationDiagnostics> {
    if lowrank_columns.nrows() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "low-rank columns have {} rows, reference has {} pixels",
            lowrank_columns.nrows(),
            reference.len()
        )));
    }
    let m = lowrank_columns
        .column_iter()
        .map(|c| crate::frame::squared_distance(reference.as_slice(), c.as_slice()).sqrt())
        .fold(0.0, f64::max);
    let (_, accumulated) = accumulated_energies(energies, tau, rho);
    Ok(SeparationDiagnostics {
        d_e: min_consecutive_gap(energies),
        d_s: min_consecutive_gap(&accumulated),
        m,
        l: perturbation_bound,
    })
}
