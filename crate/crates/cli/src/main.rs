mod commands;
mod io;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use iris_core::{DualStep, Model, ModelParams};

/// Turbulence restoration by frame subsampling.
#[derive(Parser, Debug)]
#[command(author, version, about)]
struct Cli {
    /// Increase logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a degraded sequence from a ground-truth image.
    Simulate(SimulateArgs),
    /// Restore one image from a directory of frames.
    Restore(RestoreArgs),
    /// PSNR and SSIM of a restored image against the truth.
    Evaluate(EvaluateArgs),
    /// Compare the sorted-prefix J-step with exhaustive search.
    Oracle(OracleArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Default,
    SevereMajority,
    Extreme,
    Noisy,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Ground-truth image (PNG or PGM).
    truth: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
    /// Key-value configuration file; flags given on the command line win.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    n_frames: Option<usize>,
    #[arg(long)]
    severe_fraction: Option<f64>,
    /// Severe strength range as `lo,hi`.
    #[arg(long, value_parser = parse_range)]
    severe_strength: Option<(f64, f64)>,
    /// Mild strength range as `lo,hi`.
    #[arg(long, value_parser = parse_range)]
    mild_strength: Option<(f64, f64)>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    smoothing_sigma: Option<f64>,
    #[arg(long)]
    mean_jitter: Option<f64>,
    #[arg(long)]
    blur_sigma: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    noisy_fraction: Option<f64>,
    #[arg(long)]
    strong_noise_sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the motion fields as binary sidecars.
    #[arg(long)]
    write_fields: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Iris,
    Liris,
    TvirisAniso,
    TvirisIso,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Iris => Model::Iris,
            ModelArg::Liris => Model::Liris,
            ModelArg::TvirisAniso => Model::TvirisAniso,
            ModelArg::TvirisIso => Model::TvirisIso,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum DualStepArg {
    TwiceGamma,
    InverseTwiceMu,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "iris")]
    model: ModelArg,
    /// Quality weight for [0, 1] intensities.
    #[arg(long, conflicts_with = "lambda_8bit")]
    lambda: Option<f64>,
    /// Quality weight given for 8-bit intensities (rescaled by 255^2).
    #[arg(long)]
    lambda_8bit: Option<f64>,
    /// Reward weight; defaults to the median initial per-frame energy.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// RPCA sparse weight.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    max_inner: Option<usize>,
    #[arg(long, value_enum)]
    dual_step: Option<DualStepArg>,
}

impl ModelArgs {
    fn params(&self) -> ModelParams {
        let mut p = ModelParams::for_model(self.model.into());
        if let Some(v) = self.lambda {
            p.lambda = v;
        }
        if let Some(v) = self.lambda_8bit {
            p.lambda = iris_core::params::lambda_from_8bit(v);
        }
        p.tau = self.tau;
        if let Some(v) = self.rho {
            p.rho = v;
        }
        if let Some(v) = self.mu {
            p.mu = v;
        }
        if let Some(v) = self.gamma {
            p.gamma = v;
        }
        p.beta = self.beta;
        if let Some(v) = self.epsilon {
            p.epsilon = v;
        }
        if let Some(v) = self.max_outer {
            p.max_outer = v;
        }
        if let Some(v) = self.max_inner {
            p.tv_max_inner = v;
        }
        if let Some(step) = self.dual_step {
            p.dual_step = match step {
                DualStepArg::TwiceGamma => DualStep::TwiceGamma,
                DualStepArg::InverseTwiceMu => DualStep::InverseTwiceMu,
            };
        }
        p
    }
}

#[derive(Args, Debug)]
struct RestoreArgs {
    /// Directory of PNG/PGM frames, read in lexicographic order.
    frames: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Exit successfully even when the outer loop hits its iteration cap.
    #[arg(long)]
    allow_nonconverged: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    restored: PathBuf,
    truth: PathBuf,
    /// Directory for metrics.json.
    #[arg(short, long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Directory of at most 20 frames.
    frames: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Also write oracle.json here.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    Ok((lo, hi))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Restore(a) => commands::restore(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Oracle(a) => commands::oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
