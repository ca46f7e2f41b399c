use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use iris_core::drivers::{
    liris_exhaustive_jstep, lowrank_split, median_tau, per_frame_energies, rpca_config,
};
use iris_core::energy::subsample_reward;
use iris_core::frame::{column_mean, column_to_frame, squared_distance};
use iris_core::metrics;
use iris_core::quality::{sharpness_quality, tv_quality, TvVariant};
use iris_core::selector::{
    brute_force_select, select_subsample, separation_diagnostics, Selection, ORACLE_MAX_FRAMES,
};
use iris_core::simulator::{simulate_sequence, TurbulenceConfig};
use iris_core::{Frame, FrameStack, Model, ModelParams, SubsampleSet};
use nalgebra::DMatrix;
use serde_json::json;

use crate::io::{read_gray, read_stack, write_field, write_json, write_png};
use crate::manifest::{json_number, RunManifest};
use crate::{EvaluateArgs, OracleArgs, Preset, RestoreArgs, SimulateArgs};

/// Invalid arguments detected after parsing; exits with the usage code.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Exact low-rank oracle decomposes every subsample, so it is capped lower
/// than the plain one.
const LOWRANK_ORACLE_MAX_FRAMES: usize = 8;

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn turbulence_config(a: &SimulateArgs) -> Result<TurbulenceConfig> {
    let seed = a.seed.unwrap_or(0);
    let mut c = if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        TurbulenceConfig::from_key_value(&text).map_err(usage)?
    } else {
        match a.preset.unwrap_or(Preset::Default) {
            Preset::Default => TurbulenceConfig { seed, ..TurbulenceConfig::default() },
            Preset::SevereMajority => TurbulenceConfig::severe_majority(seed),
            Preset::Extreme => TurbulenceConfig::extreme(seed),
            Preset::Noisy => TurbulenceConfig::noisy(seed, 0.01, 0.05),
        }
    };
    macro_rules! apply {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { c.$field = v; } )* };
    }
    apply!(n_frames, severe_fraction, severe_strength, mild_strength, patch_size, mean_jitter, blur_sigma,
        noise_sigma, noisy_fraction, strong_noise_sigma, seed);
    if a.smoothing_sigma.is_some() {
        c.smoothing_sigma = a.smoothing_sigma;
    }
    c.validate().map_err(usage)?;
    Ok(c)
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let config = turbulence_config(a)?;
    let truth = read_gray(&a.truth)?;
    let started = Instant::now();
    let seq = simulate_sequence(&truth, &config)?;
    create_dir(&a.out)?;
    let width = config.n_frames.to_string().len().max(4);
    let mut artifacts = Vec::new();
    for (k, frame) in seq.stack.frames().iter().enumerate() {
        let name = format!("frame_{:0width$}.png", k + 1);
        write_png(&a.out.join(&name), frame)?;
        artifacts.push(name);
    }
    if a.write_fields {
        create_dir(&a.out.join("fields"))?;
        for (k, field) in seq.fields.iter().enumerate() {
            let name = format!("fields/field_{:0width$}.bin", k + 1);
            write_field(&a.out.join(&name), field)?;
            artifacts.push(name);
        }
    }
    std::fs::write(a.out.join("config.txt"), config.to_key_value())?;
    artifacts.push("config.txt".into());
    artifacts.push("manifest.json".into());

    let mut manifest = RunManifest::new("simulate", vec![display(&a.truth)], display(&a.out));
    manifest.seed = Some(config.seed);
    manifest.turbulence = Some(config.clone());
    manifest.artifacts = artifacts;
    manifest.details = json!({
        "rows": truth.nrows(),
        "cols": truth.ncols(),
        "severe_frames": seq.severe_indices().iter().map(|k| k + 1).collect::<Vec<_>>(),
        "strengths": seq.strengths,
        "noise_sigmas": seq.noise_sigmas,
        "elapsed_seconds": started.elapsed().as_secs_f64(),
    });
    write_json(&a.out.join("manifest.json"), &manifest)?;
    log::info!("wrote {} frames to {}", config.n_frames, a.out.display());
    Ok(())
}

fn trace_csv(result: &iris_core::RestorationResult) -> String {
    let mut out = String::from("iteration,total_energy,mean_fidelity,mean_quality,reward,J_size\n");
    for r in result.trace.records() {
        let e = &r.energy;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration, e.total, e.mean_fidelity, e.mean_quality, e.reward, e.size
        );
    }
    out
}

pub fn restore(a: &RestoreArgs) -> Result<()> {
    let params = a.model.params();
    params.validate().map_err(usage)?;
    let (stack, files) = read_stack(&a.frames)?;
    let started = Instant::now();
    let result = iris_core::restore(&stack, &params)?;
    let elapsed = started.elapsed().as_secs_f64();

    create_dir(&a.out)?;
    write_png(&a.out.join("restored.png"), &result.image)?;
    write_json(&a.out.join("subsample.json"), &result.subsample.one_based())?;
    std::fs::write(a.out.join("trace.csv"), trace_csv(&result))?;

    let mut manifest = RunManifest::new("restore", files.iter().map(|p| display(p)).collect(), display(&a.out));
    manifest.params = Some(params.clone());
    manifest.artifacts = ["restored.png", "subsample.json", "trace.csv", "manifest.json"]
        .map(String::from)
        .to_vec();
    manifest.details = json!({
        "frames": stack.len(),
        "subsample": result.subsample.one_based(),
        "iterations": result.iterations,
        "converged": result.converged,
        "inner_converged": result.inner_converged,
        "tau": result.tau,
        "initial_energy": result.initial_energy,
        "final_energy": result.trace.records().last().map(|r| r.energy.total),
        "elapsed_seconds": elapsed,
    });
    write_json(&a.out.join("manifest.json"), &manifest)?;

    println!(
        "{}: kept {} of {} frames after {} iterations ({:.3} s)",
        params.model.name(),
        result.subsample.len(),
        stack.len(),
        result.iterations,
        elapsed
    );
    if !result.inner_converged {
        log::warn!("an inner solve stopped at its iteration cap");
    }
    if !result.converged && !a.allow_nonconverged {
        bail!(
            "outer loop did not converge within {} iterations (artifacts written; pass --allow-nonconverged to accept)",
            params.max_outer
        );
    }
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let restored = read_gray(&a.restored)?;
    let truth = read_gray(&a.truth)?;
    let report = metrics::evaluate(&restored, &truth, None).map_err(usage)?;
    create_dir(&a.out)?;
    let value = json!({
        "psnr_db": json_number(report.psnr_db),
        "ssim": report.ssim,
        "restored": display(&a.restored),
        "truth": display(&a.truth),
    });
    write_json(&a.out.join("metrics.json"), &value)?;
    println!("PSNR {} dB, SSIM {:.6}", report.psnr_db, report.ssim);
    Ok(())
}

/// Reference image, fidelity references and quality of the first J-step.
struct FirstStep {
    image: Frame,
    references: Vec<Frame>,
    quality: Vec<f64>,
}

fn first_step(stack: &FrameStack, params: &ModelParams) -> Result<FirstStep> {
    let (rows, cols) = (stack.rows(), stack.cols());
    Ok(match params.model {
        Model::Iris => FirstStep {
            image: stack.full_mean(),
            references: stack.frames().to_vec(),
            quality: sharpness_quality(stack.frames()),
        },
        Model::Liris => {
            let full = lowrank_split(&stack.to_matrix(), &rpca_config(params))?;
            FirstStep {
                image: column_mean(&full.low_rank, rows, cols),
                references: (0..stack.len()).map(|k| column_to_frame(&full.low_rank, k, rows, cols)).collect(),
                quality: sharpness_quality(stack.frames()),
            }
        }
        Model::TvirisAniso | Model::TvirisIso => {
            let variant = if params.model == Model::TvirisIso { TvVariant::Iso } else { TvVariant::Aniso };
            FirstStep {
                image: stack.full_mean(),
                references: stack.frames().to_vec(),
                quality: tv_quality(stack.frames(), variant),
            }
        }
    })
}

fn condition(holds: bool, gap: f64) -> &'static str {
    if gap == 0.0 {
        "unverifiable"
    } else if holds {
        "holds"
    } else {
        "fails"
    }
}

pub fn oracle(a: &OracleArgs) -> Result<()> {
    let params = a.model.params();
    params.validate().map_err(usage)?;
    let files = crate::io::list_frames(&a.frames)?;
    let limit = if params.model == Model::Liris { LOWRANK_ORACLE_MAX_FRAMES } else { ORACLE_MAX_FRAMES };
    if files.len() > limit {
        return Err(usage(format!(
            "oracle supports at most {limit} frames for {}, got {}",
            params.model.name(),
            files.len()
        )));
    }
    let (stack, files) = read_stack(&a.frames)?;
    let step = first_step(&stack, &params)?;
    let energies = per_frame_energies(&step.references, &step.image, &step.quality, params.lambda);
    let tau = params.tau.unwrap_or_else(|| median_tau(&energies));
    let relaxed = select_subsample(&energies, tau, params.rho)?;

    // The relaxed subsample scored under the exact objective, which for the
    // low-rank model decomposes the subsample itself.
    let (exact, bound, columns, relaxed_exact): (Selection, f64, DMatrix<f64>, f64) =
        if params.model == Model::Liris {
            let ex = liris_exhaustive_jstep(&stack, &step.references, &step.quality, &step.image, &params, tau)?;
            let all = concat_columns(&ex.columns, &stack_columns(&step.references));
            let relaxed_exact = lowrank_subset_energy(&stack, &relaxed.subset, &step, &params, tau)?;
            (ex.selection, ex.perturbation_bound, all, relaxed_exact)
        } else {
            let ex = brute_force_select(&energies, tau, params.rho)?;
            (ex, 0.0, stack_columns(&step.references), relaxed.energy)
        };
    let diag = separation_diagnostics(&step.image, &columns, bound, &energies, tau, params.rho)?;
    let gap = relaxed_exact - exact.energy;

    println!("model: {}", params.model.name());
    println!("frames: {}", stack.len());
    println!("tau: {tau}");
    println!(
        "sorted-prefix J: {:?}  energy {} (exact objective {})",
        relaxed.subset.one_based(),
        relaxed.energy,
        relaxed_exact
    );
    println!("exhaustive J:    {:?}  energy {}", exact.subset.one_based(), exact.energy);
    println!("energy gap: {gap:e}");
    println!("d_E = {}, d_S = {}, M = {}, l = {}", diag.d_e, diag.d_s, diag.m, diag.l);
    println!("order condition l < d_E/(4M): {}", condition(diag.order_condition(), diag.d_e));
    println!("accumulated condition l < d_S/(4M): {}", condition(diag.accumulated_condition(), diag.d_s));

    if let Some(out) = &a.out {
        create_dir(out)?;
        let value = json!({
            "subcommand": "oracle",
            "input": files.iter().map(|p| display(p)).collect::<Vec<_>>(),
            "params": params,
            "tau": tau,
            "sorted_prefix": {
                "subsample": relaxed.subset.one_based(),
                "energy": relaxed.energy,
                "exact_energy": relaxed_exact,
            },
            "exhaustive": { "subsample": exact.subset.one_based(), "energy": exact.energy },
            "gap": gap,
            "d_e": json_number(diag.d_e),
            "d_s": json_number(diag.d_s),
            "m": diag.m,
            "l": diag.l,
            "order_condition": condition(diag.order_condition(), diag.d_e),
            "accumulated_condition": condition(diag.accumulated_condition(), diag.d_s),
            "tool_version": env!("CARGO_PKG_VERSION"),
        });
        write_json(&out.join("oracle.json"), &value)?;
    }
    Ok(())
}

fn lowrank_subset_energy(
    stack: &FrameStack,
    subset: &SubsampleSet,
    step: &FirstStep,
    params: &ModelParams,
    tau: f64,
) -> Result<f64> {
    let d = lowrank_split(&stack.subsample_matrix(subset), &rpca_config(params))?;
    let sum: f64 = subset
        .iter()
        .enumerate()
        .map(|(col, k)| {
            squared_distance(step.image.as_slice(), d.low_rank.column(col).as_slice()) + params.lambda * step.quality[k]
        })
        .sum();
    Ok(sum / subset.len() as f64 - subsample_reward(subset.len(), tau, params.rho))
}

fn stack_columns(frames: &[Frame]) -> DMatrix<f64> {
    let len = frames[0].len();
    DMatrix::from_fn(len, frames.len(), |i, k| frames[k].as_slice()[i])
}

fn concat_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}
