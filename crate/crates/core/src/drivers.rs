//! Outer alternating minimization for the three models.
//!
//! Every driver starts from an initial image `I0` with all frames selected and
//! then alternates a J-step (per-frame energies against the current image,
//! globally minimized by [`select_subsample`]) with an I-step (the image that
//! minimizes the energy for the chosen frames). The energy of each iterate is
//! appended to the trace.

use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::statistics::{Data, Median};

use crate::energy::{model_energy, subsample_reward, EnergyBreakdown, EnergyTrace, EnergyWeights};
use crate::error::{Error, Result};
use crate::frame::{column_mean, column_to_frame, squared_distance, Frame, FrameStack, SubsampleSet};
use crate::params::{Model, ModelParams};
use crate::quality::{sharpness_quality, tv_quality, tv_value, TvVariant};
use crate::rpca::{rpca_ealm, Decomposition, RpcaConfig};
use crate::selector::{exhaustive_select, select_subsample, Selection};
use crate::tvsolver::{tv_restore, TvConfig};

#[derive(Debug, Clone)]
pub struct RestorationResult {
    /// Restored image, clamped to `[0, 1]`.
    pub image: Frame,
    pub subsample: SubsampleSet,
    pub trace: EnergyTrace,
    /// Energy of the initial image with every frame selected.
    pub initial_energy: EnergyBreakdown,
    pub iterations: usize,
    /// The outer stopping test was met before `max_outer`.
    pub converged: bool,
    /// Every inner RPCA or TV solve met its own tolerance.
    pub inner_converged: bool,
    /// Reward weight actually used.
    pub tau: f64,
}

/// Runs the driver selected by `params.model`.
pub fn restore(stack: &FrameStack, params: &ModelParams) -> Result<RestorationResult> {
    match params.model {
        Model::Iris => iris(stack, params),
        Model::Liris => liris(stack, params),
        Model::TvirisAniso | Model::TvirisIso => tviris(stack, params),
    }
}

/// `||image - reference_k||^2 + lambda * quality_k` for every frame.
pub fn per_frame_energies(
    references: &[Frame],
    image: &Frame,
    quality: &[f64],
    lambda: f64,
) -> Vec<f64> {
    references
        .par_iter()
        .zip(quality.par_iter())
        .map(|(reference, q)| squared_distance(image.as_slice(), reference.as_slice()) + lambda * q)
        .collect()
}

/// Median of the energies, the reward weight used when none is given.
pub fn median_tau(energies: &[f64]) -> f64 {
    Data::new(energies.to_vec()).median()
}

fn resolve_tau(params: &ModelParams, first_energies: &[f64]) -> f64 {
    params.tau.unwrap_or_else(|| {
        let tau = median_tau(first_energies);
        log::info!("tau not given; using median per-frame energy {tau:.6}");
        tau
    })
}

/// Evaluates the model energy of `(image, subset)`.
pub fn evaluate_energy(
    references: &[Frame],
    quality: &[f64],
    image: &Frame,
    regularizer: f64,
    subset: &SubsampleSet,
    weights: &EnergyWeights,
) -> Result<EnergyBreakdown> {
    let fidelity: Vec<f64> = subset
        .iter()
        .map(|k| squared_distance(image.as_slice(), references[k].as_slice()))
        .collect();
    let q: Vec<f64> = subset.iter().map(|k| quality[k]).collect();
    model_energy(&fidelity, &q, regularizer, weights)
}

/// The pieces that distinguish one model from another.
struct Problem<'a, I, R>
where
    I: FnMut(&SubsampleSet) -> Result<(Frame, bool)>,
    R: Fn(&Frame) -> f64,
{
    references: &'a [Frame],
    quality: Vec<f64>,
    initial: Frame,
    image_step: I,
    regularizer: R,
    /// Stop on `E_prev - E <= eps` instead of `|E_prev - E| <= eps`.
    signed_stop: bool,
}

fn alternate<I, R>(mut problem: Problem<'_, I, R>, params: &ModelParams, mut inner_converged: bool) -> Result<RestorationResult>
where
    I: FnMut(&SubsampleSet) -> Result<(Frame, bool)>,
    R: Fn(&Frame) -> f64,
{
    let n = problem.references.len();
    let mu = if params.model.is_tv() { params.mu } else { 0.0 };
    let mut image = problem.initial;
    let mut energies = per_frame_energies(problem.references, &image, &problem.quality, params.lambda);
    let tau = resolve_tau(params, &energies);
    let weights = EnergyWeights {
        lambda: params.lambda,
        mu,
        tau,
        rho: params.rho,
    };

    let mut subset = SubsampleSet::full(n);
    let initial_energy = evaluate_energy(
        problem.references,
        &problem.quality,
        &image,
        (problem.regularizer)(&image),
        &subset,
        &weights,
    )?;
    let mut previous = initial_energy.total;
    let mut trace = EnergyTrace::new();
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=params.max_outer {
        iterations = t;
        if t > 1 {
            energies = per_frame_energies(problem.references, &image, &problem.quality, params.lambda);
        }
        subset = select_subsample(&energies, tau, params.rho)?.subset;
        let (next, ok) = (problem.image_step)(&subset)?;
        inner_converged &= ok;
        image = next;
        let energy = evaluate_energy(
            problem.references,
            &problem.quality,
            &image,
            (problem.regularizer)(&image),
            &subset,
            &weights,
        )?;
        trace.push(energy);
        let drop = previous - energy.total;
        log::debug!("iteration {t}: energy {:.9}, |J| = {}", energy.total, subset.len());
        previous = energy.total;
        let done = if problem.signed_stop {
            drop <= params.epsilon
        } else {
            drop.abs() <= params.epsilon
        };
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("outer loop stopped at max_outer = {} without meeting epsilon", params.max_outer);
    }

    image.apply(|v| *v = v.clamp(0.0, 1.0));
    Ok(RestorationResult {
        image,
        subsample: subset,
        trace,
        initial_energy,
        iterations,
        converged,
        inner_converged,
        tau,
    })
}

fn check_model(params: &ModelParams, allowed: &[Model]) -> Result<()> {
    params.validate()?;
    if !allowed.contains(&params.model) {
        return Err(Error::InvalidParameter(format!(
            "model {} passed to the wrong driver",
            params.model.name()
        )));
    }
    Ok(())
}

/// L² fidelity to the frames with Laplacian sharpness quality; the I-step is
/// the temporal mean of the selected frames.
pub fn iris(stack: &FrameStack, params: &ModelParams) -> Result<RestorationResult> {
    check_model(params, &[Model::Iris])?;
    let problem = Problem {
        references: stack.frames(),
        quality: sharpness_quality(stack.frames()),
        initial: stack.full_mean(),
        image_step: |subset: &SubsampleSet| Ok((stack.temporal_mean(subset)?, true)),
        regularizer: |_: &Frame| 0.0,
        signed_stop: true,
    };
    alternate(problem, params, true)
}

pub fn rpca_config(params: &ModelParams) -> RpcaConfig {
    RpcaConfig {
        beta: params.beta,
        alpha0: params.alpha0,
        tol: params.rpca_tol,
        max_iter: params.rpca_max_iter,
        ..RpcaConfig::default()
    }
}

/// Low-rank/sparse split used by the low-rank model. A single frame is its
/// own low-rank part: any one column is rank one, while the convex program
/// with the usual sparse weight would move most of it into `S`.
pub fn lowrank_split(matrix: &DMatrix<f64>, config: &RpcaConfig) -> Result<Decomposition> {
    if matrix.ncols() == 1 {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        return Ok(Decomposition {
            low_rank: matrix.clone(),
            sparse: DMatrix::zeros(matrix.nrows(), 1),
            iterations: 0,
            svd_count: 0,
            residual: 0.0,
            converged: true,
        });
    }
    rpca_ealm(matrix, config)
}

fn decompose(matrix: &DMatrix<f64>, config: &RpcaConfig) -> Result<Decomposition> {
    let d = lowrank_split(matrix, config)?;
    if !d.converged {
        log::warn!(
            "RPCA stopped after {} iterations with residual {:.3e}",
            d.iterations,
            d.residual
        );
    }
    Ok(d)
}

fn columns_to_frames(matrix: &DMatrix<f64>, rows: usize, cols: usize) -> Vec<Frame> {
    (0..matrix.ncols())
        .map(|k| column_to_frame(matrix, k, rows, cols))
        .collect()
}

/// L² fidelity to the low-rank part of the full stack. The J-step uses the
/// fixed full decomposition; the I-step decomposes the selected frames and
/// takes the column mean of their low-rank part.
pub fn liris(stack: &FrameStack, params: &ModelParams) -> Result<RestorationResult> {
    check_model(params, &[Model::Liris])?;
    let (rows, cols) = (stack.rows(), stack.cols());
    let config = rpca_config(params);
    let full = decompose(&stack.to_matrix(), &config)?;
    let references = columns_to_frames(&full.low_rank, rows, cols);
    let problem = Problem {
        references: &references,
        quality: sharpness_quality(stack.frames()),
        initial: column_mean(&full.low_rank, rows, cols),
        image_step: |subset: &SubsampleSet| {
            let d = decompose(&stack.subsample_matrix(subset), &config)?;
            Ok((column_mean(&d.low_rank, rows, cols), d.converged))
        },
        regularizer: |_: &Frame| 0.0,
        signed_stop: false,
    };
    alternate(problem, params, full.converged)
}

pub fn tv_config(params: &ModelParams) -> TvConfig {
    TvConfig {
        mu: params.mu,
        gamma: params.gamma,
        variant: tv_variant(params.model),
        inner_tol: params.tv_inner_tol,
        max_inner: params.tv_max_inner,
        dual_step: params.dual_step,
        ..TvConfig::default()
    }
}

fn tv_variant(model: Model) -> TvVariant {
    match model {
        Model::TvirisIso => TvVariant::Iso,
        _ => TvVariant::Aniso,
    }
}

/// L² fidelity with total variation as both image regularizer and per-frame
/// quality; the I-step denoises the temporal mean of the selected frames.
pub fn tviris(stack: &FrameStack, params: &ModelParams) -> Result<RestorationResult> {
    check_model(params, &[Model::TvirisAniso, Model::TvirisIso])?;
    let config = tv_config(params);
    let variant = config.variant;
    let problem = Problem {
        references: stack.frames(),
        quality: tv_quality(stack.frames(), variant),
        initial: stack.full_mean(),
        image_step: |subset: &SubsampleSet| {
            let outcome = tv_restore(&stack.temporal_mean(subset)?, &config);
            Ok((outcome.image, outcome.converged))
        },
        regularizer: |image: &Frame| tv_value(image, variant),
        signed_stop: false,
    };
    alternate(problem, params, true)
}

/// Relaxed low-rank J-step: per-frame energies against the columns of the
/// full decomposition.
pub fn liris_relaxed_jstep(
    full_lowrank: &[Frame],
    quality: &[f64],
    image: &Frame,
    lambda: f64,
    tau: f64,
    rho: f64,
) -> Result<Selection> {
    let energies = per_frame_energies(full_lowrank, image, quality, lambda);
    select_subsample(&energies, tau, rho)
}

/// Result of the exhaustive low-rank J-step.
#[derive(Debug, Clone)]
pub struct ExhaustiveJStep {
    pub selection: Selection,
    /// Largest distance between a frame's low-rank column in any subsample
    /// decomposition and in the full decomposition.
    pub perturbation_bound: f64,
    /// Every low-rank column produced by the subsample decompositions.
    pub columns: DMatrix<f64>,
}

/// Exact low-rank J-step: decomposes every nonempty subsample separately and
/// scores it against its own low-rank columns. Exponential in the number of
/// frames.
pub fn liris_exhaustive_jstep(
    stack: &FrameStack,
    full_lowrank: &[Frame],
    quality: &[f64],
    image: &Frame,
    params: &ModelParams,
    tau: f64,
) -> Result<ExhaustiveJStep> {
    let config = rpca_config(params);
    let mut failure = None;
    let mut bound: f64 = 0.0;
    let mut collected: Vec<f64> = Vec::new();
    let selection = exhaustive_select(stack.len(), |subset| {
        let set = SubsampleSet::new(subset.to_vec()).expect("oracle subsets are sorted");
        let d = match lowrank_split(&stack.subsample_matrix(&set), &config) {
            Ok(d) => d,
            Err(e) => {
                failure.get_or_insert(e);
                return f64::INFINITY;
            }
        };
        let mut sum = 0.0;
        for (col, &k) in subset.iter().enumerate() {
            let column = d.low_rank.column(col);
            sum += squared_distance(image.as_slice(), column.as_slice()) + params.lambda * quality[k];
            bound = bound.max(squared_distance(column.as_slice(), full_lowrank[k].as_slice()).sqrt());
            collected.extend_from_slice(column.as_slice());
        }
        sum / subset.len() as f64 - subsample_reward(subset.len(), tau, params.rho)
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let columns = DMatrix::from_vec(image.len(), collected.len() / image.len().max(1), collected);
    Ok(ExhaustiveJStep {
        selection,
        perturbation_bound: bound,
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{simulate_sequence, synthetic_scene, TurbulenceConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn simulated(n: usize, size: usize, seed: u64) -> (FrameStack, Frame) {
        let truth = synthetic_scene(size, size, seed);
        let cfg = TurbulenceConfig {
            n_frames: n,
            seed,
            ..TurbulenceConfig::default()
        };
        (simulate_sequence(&truth, &cfg).unwrap().stack, truth)
    }

    fn random_frame(r: usize, s: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(r, s, |_, _| rng.random::<f64>())
    }

    #[test]
    fn single_frame_is_returned() {
        let f = random_frame(8, 8, 1);
        let stack = FrameStack::new(vec![f.clone()]).unwrap();
        for model in [Model::Iris, Model::TvirisAniso] {
            let mut p = ModelParams::for_model(model);
            p.mu = 0.0;
            let out = restore(&stack, &p).unwrap();
            assert_eq!(out.image, f);
            assert_eq!(out.subsample.indices(), &[0]);
            assert_eq!(out.iterations, 1);
            assert!(out.converged);
        }
        let out = liris(&stack, &ModelParams::for_model(Model::Liris)).unwrap();
        assert!((&out.image - &f).amax() < 1e-6);
        assert_eq!(out.subsample.indices(), &[0]);
    }

    #[test]
    fn identical_frames_select_everything() {
        let f = random_frame(10, 10, 2);
        let stack = FrameStack::new(vec![f.clone(); 5]).unwrap();
        let out = iris(&stack, &ModelParams::default()).unwrap();
        assert!((&out.image - &f).amax() < 1e-15);
        assert_eq!(out.subsample, SubsampleSet::full(5));
        assert!(out.iterations <= 2);

        // Every per-frame energy is 0 here, so the median heuristic would
        // give tau = 0 and a tie over all sizes.
        let mut p = ModelParams::for_model(Model::Liris);
        p.tau = Some(1.0);
        let out = liris(&stack, &p).unwrap();
        assert!((&out.image - &f).amax() < 1e-6);
        assert_eq!(out.subsample, SubsampleSet::full(5));
    }

    #[test]
    fn constant_frames_under_tv() {
        let f = Frame::from_element(9, 9, 0.3);
        let stack = FrameStack::new(vec![f.clone(); 4]).unwrap();
        for model in [Model::TvirisAniso, Model::TvirisIso] {
            for mu in [0.1, 1.0, 10.0] {
                let mut p = ModelParams::for_model(model);
                p.mu = mu;
                let out = tviris(&stack, &p).unwrap();
                assert!((&out.image - &f).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn iris_descends_and_reaches_a_fixed_point() {
        let (stack, _) = simulated(30, 32, 5);
        let p = ModelParams::default();
        let out = iris(&stack, &p).unwrap();
        assert!(out.converged);
        let mut prev = out.initial_energy.total;
        for e in out.trace.totals() {
            assert!(e <= prev + 1e-12, "{e} > {prev}");
            prev = e;
        }
        let quality = sharpness_quality(stack.frames());
        let energies = per_frame_energies(stack.frames(), &out.image, &quality, p.lambda);
        let again = select_subsample(&energies, out.tau, p.rho).unwrap();
        assert_eq!(again.subset, out.subsample);
        let image = stack.temporal_mean(&again.subset).unwrap();
        assert!((&image - &out.image).amax() < 1e-12);
    }

    #[test]
    fn drivers_are_deterministic() {
        let (stack, _) = simulated(12, 24, 6);
        for model in [Model::Iris, Model::TvirisIso] {
            let p = ModelParams::for_model(model);
            let a = restore(&stack, &p).unwrap();
            let b = restore(&stack, &p).unwrap();
            assert_eq!(a.image, b.image);
            assert_eq!(a.subsample, b.subsample);
            assert_eq!(a.trace.totals(), b.trace.totals());
        }
    }

    #[test]
    fn relaxed_drivers_stop_within_epsilon() {
        let (stack, _) = simulated(10, 16, 7);
        for model in [Model::Liris, Model::TvirisAniso] {
            let p = ModelParams::for_model(model);
            let out = restore(&stack, &p).unwrap();
            if out.converged {
                let totals = out.trace.totals();
                let before = if totals.len() > 1 {
                    totals[totals.len() - 2]
                } else {
                    out.initial_energy.total
                };
                assert!((before - totals[totals.len() - 1]).abs() <= p.epsilon);
            }
        }
    }

    #[test]
    fn tiny_mu_matches_iris_when_orderings_agree() {
        // Frames of different noise level: sharper by Laplacian also means
        // lower TV, so both quality orderings coincide.
        let base = Frame::from_fn(12, 12, |i, j| 0.3 + 0.3 * ((i + j) % 2) as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let frames: Vec<Frame> = (0..6)
            .map(|k| {
                let amp = 0.02 * (k + 1) as f64;
                base.map(|v| (v + amp * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0))
            })
            .collect();
        let stack = FrameStack::new(frames).unwrap();
        let lap = sharpness_quality(stack.frames());
        let tv = tv_quality(stack.frames(), TvVariant::Aniso);
        let order = |q: &[f64]| crate::selector::sorted_order(q);
        let mut tv_desc = order(&tv);
        tv_desc.reverse();
        assert_eq!(order(&lap), tv_desc, "construction should align the orderings");

        let mut p_iris = ModelParams::default();
        p_iris.lambda = 0.0;
        p_iris.tau = Some(0.5);
        let mut p_tv = p_iris.clone();
        p_tv.model = Model::TvirisAniso;
        p_tv.mu = 1e-12;
        let a = iris(&stack, &p_iris).unwrap();
        let b = tviris(&stack, &p_tv).unwrap();
        assert_eq!(a.subsample, b.subsample);
        assert!((&a.image - &b.image).amax() < 1e-5);
    }

    #[test]
    fn median_tau_heuristic() {
        assert_eq!(median_tau(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_tau(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn wrong_model_is_rejected() {
        let stack = FrameStack::new(vec![Frame::zeros(2, 2)]).unwrap();
        assert!(iris(&stack, &ModelParams::for_model(Model::Liris)).is_err());
        assert!(tviris(&stack, &ModelParams::default()).is_err());
    }

    #[test]
    fn exhaustive_jstep_matches_relaxed_on_rank_one_stack() {
        // Low-contrast base: every subsample of two or more frames is
        // recovered exactly by the convex split.
        let base = random_frame(8, 8, 9).map(|v| 0.5 + 0.1 * v);
        let scales = [0.9, 0.8, 0.95, 0.7, 0.85, 0.75];
        let frames: Vec<Frame> = scales.iter().map(|c| &base * *c).collect();
        let stack = FrameStack::new(frames).unwrap();
        let p = ModelParams::for_model(Model::Liris);
        let full = lowrank_split(&stack.to_matrix(), &rpca_config(&p)).unwrap();
        let lowrank = columns_to_frames(&full.low_rank, 8, 8);
        let quality = sharpness_quality(stack.frames());
        let image = column_mean(&full.low_rank, 8, 8);
        let tau = 1.0;
        let relaxed = liris_relaxed_jstep(&lowrank, &quality, &image, p.lambda, tau, p.rho).unwrap();
        let exact = liris_exhaustive_jstep(&stack, &lowrank, &quality, &image, &p, tau).unwrap();
        assert!(exact.perturbation_bound < 1e-5);
        assert_eq!(relaxed.subset, exact.selection.subset);
    }
}
