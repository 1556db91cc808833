use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use dpsur::accountant::{SubsampledGaussianSpec, DEFAULT_DELTA};
use dpsur::engine::Algorithm;
use dpsur::harness::{
    self, generate_synthetic, resume_experiment, run_experiment, verify_mechanisms, write_csv, ExperimentConfig,
    Preset, SyntheticKind, SyntheticSpec, DEFAULT_BUDGET,
};
use dpsur::mechanisms::ClipMode;

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_VERIFICATION: u8 = 4;

#[derive(Parser)]
#[command(name = "dpsur", version, about = "Differentially private training with selective updates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write trace.jsonl, trajectory.csv, result.json and checkpoint.bin.
    Train(TrainArgs),
    /// Report ε after t accepted updates, with the composed RDP curve.
    Account(AccountArgs),
    /// Largest number of accepted updates within a budget.
    Calibrate(CalibrateArgs),
    /// Run the Monte-Carlo and grid checks of the mechanisms and accountant.
    VerifyMechanism(VerifyArgs),
    /// Write a synthetic train/test split as CSV.
    GenerateData(GenerateArgs),
    /// Print the effective configuration as TOML.
    ShowConfig(ShowConfigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Dpsur,
    Dpsgd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClipModeArg {
    Minimal,
    Interval,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    LinearRegression,
    GaussianBlobs,
}

/// Overrides for the `[train]` section, one flag per field.
#[derive(Args, Default)]
struct TrainOverrides {
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    /// Learning rate.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    /// Expected Poisson batch size for gradient steps.
    #[arg(long)]
    batch_train: Option<usize>,
    /// Expected Poisson batch size for the validation test.
    #[arg(long)]
    batch_valid: Option<usize>,
    /// Per-sample gradient clipping bound C_t.
    #[arg(long)]
    clip_train: Option<f64>,
    /// Loss-difference clipping bound C_v.
    #[arg(long)]
    clip_valid: Option<f64>,
    /// Gradient noise multiplier σ_t.
    #[arg(long)]
    sigma_train: Option<f64>,
    /// Validation noise multiplier σ_v.
    #[arg(long)]
    sigma_valid: Option<f64>,
    /// Acceptance threshold, in units of C_v.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    clip_mode: Option<ClipModeArg>,
    /// Stop once the next accepted update would exceed this ε.
    #[arg(long, conflicts_with = "no_budget")]
    target_epsilon: Option<f64>,
    /// Run without a privacy budget (stop on max_updates / max_iterations only).
    #[arg(long)]
    no_budget: bool,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    max_updates: Option<u64>,
    #[arg(long)]
    max_iterations: Option<u64>,
    /// Evaluate on the test split every this many accepted updates (0 = never).
    #[arg(long)]
    eval_every: Option<u64>,
    /// Take sigma_valid from a dataset preset for the target ε (1-4).
    #[arg(long)]
    preset: Option<Preset>,
}

impl TrainOverrides {
    fn apply(&self, config: &mut ExperimentConfig) {
        let t = &mut config.train;
        if let Some(a) = self.algorithm {
            t.algorithm = match a {
                AlgorithmArg::Dpsur => Algorithm::Dpsur,
                AlgorithmArg::Dpsgd => Algorithm::Dpsgd,
            };
        }
        if let Some(m) = self.clip_mode {
            t.clip_mode = match m {
                ClipModeArg::Minimal => ClipMode::Minimal,
                ClipModeArg::Interval => ClipMode::Interval,
            };
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field { t.$field = v; }
            )*};
        }
        set!(eta, momentum, batch_train, batch_valid, clip_train, clip_valid, sigma_train, sigma_valid, beta, delta, max_updates, max_iterations, eval_every);
        if let Some(e) = self.target_epsilon {
            t.target_epsilon = Some(e);
        }
        if self.no_budget {
            t.target_epsilon = None;
        }
        if self.preset.is_some() {
            config.preset = self.preset;
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment TOML (defaults apply to anything missing).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master RNG seed.
    #[arg(long)]
    seed: u64,
    /// Run directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Continue from <out>/checkpoint.bin, appending to the trace.
    #[arg(long)]
    resume: bool,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Args)]
struct MechanismArgs {
    /// Training sampling rate B_t/N.
    #[arg(long)]
    q_train: f64,
    #[arg(long)]
    sigma_train: f64,
    /// Validation sampling rate B_v/N; omit for plain DPSGD accounting.
    #[arg(long, requires = "sigma_valid")]
    q_valid: Option<f64>,
    #[arg(long, requires = "q_valid")]
    sigma_valid: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
}

impl MechanismArgs {
    fn specs(&self) -> dpsur::Result<(SubsampledGaussianSpec, Option<SubsampledGaussianSpec>)> {
        let train = SubsampledGaussianSpec::new(self.q_train, self.sigma_train)?;
        let valid = match (self.q_valid, self.sigma_valid) {
            (Some(q), Some(s)) => Some(SubsampledGaussianSpec::new(q, s)?),
            _ => None,
        };
        Ok((train, valid))
    }
}

#[derive(Args)]
struct AccountArgs {
    #[command(flatten)]
    mechanism: MechanismArgs,
    /// Accepted updates.
    #[arg(long)]
    t: u64,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    mechanism: MechanismArgs,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Samples per Monte-Carlo case.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write (suite, case, analytic, empirical, tolerance, status) rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "gaussian-blobs")]
    kind: KindArg,
    #[arg(long, default_value_t = 12_500)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    #[arg(long)]
    seed: u64,
    /// Directory for train.csv, test.csv and truth.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ShowConfigArgs {
    /// Show this file with defaults filled in.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

enum Failure {
    Core(dpsur::Error),
    Verification(String),
    Other(anyhow::Error),
}

impl From<dpsur::Error> for Failure {
    fn from(e: dpsur::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(EXIT_VERIFICATION)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn exit_code(e: &dpsur::Error) -> u8 {
    use dpsur::Error::*;
    match e {
        InvalidParameter { .. } | Config(_) | Data { .. } | TomlDe(_) | Shape(_) => EXIT_CONFIG,
        InfeasibleBudget(_) => EXIT_INFEASIBLE,
        _ => 1,
    }
}

fn load_config(path: Option<&PathBuf>) -> dpsur::Result<ExperimentConfig> {
    path.map_or_else(|| Ok(ExperimentConfig::default()), |p| ExperimentConfig::load(p))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train(args) => {
            let mut config = load_config(args.config.as_ref())?;
            args.overrides.apply(&mut config);
            config.train.seed = args.seed;
            let result = if args.resume {
                resume_experiment(&config, &args.out)?
            } else {
                run_experiment(&config, &args.out)?
            };
            let eps = if result.epsilon.is_finite() {
                format!("{:.6}", result.epsilon)
            } else {
                "inf (non-private)".into()
            };
            println!(
                "{}: {} accepted, {} rejected, {} skipped; {:?}; epsilon {eps} at delta {}",
                args.out.display(),
                result.counts.accepted,
                result.counts.rejected,
                result.counts.skipped,
                result.final_metric,
                result.delta
            );
        }
        Command::Account(args) => {
            let (train, valid) = args.mechanism.specs()?;
            let report = harness::account(train, valid, args.t, args.mechanism.delta)?;
            if args.json {
                println!("{}", serde_json::to_string_pretty(&report).context("serializing report")?);
            } else {
                println!(
                    "epsilon {:.10} at delta {} after t = {} (best order {})",
                    report.epsilon, report.delta, report.t, report.best_order
                );
                println!("order,rdp");
                for (order, rdp) in &report.curve {
                    println!("{order},{rdp}");
                }
            }
        }
        Command::Calibrate(args) => {
            let (train, valid) = args.mechanism.specs()?;
            let t_max = harness::calibrate(train, valid, args.epsilon, args.mechanism.delta)?;
            if args.json {
                let v = serde_json::json!({ "max_updates": t_max, "epsilon": args.epsilon, "delta": args.mechanism.delta });
                println!("{v}");
            } else {
                println!("{t_max}");
            }
            if t_max == 0 {
                return Err(dpsur::Error::InfeasibleBudget(format!(
                    "a single update already exceeds epsilon = {}",
                    args.epsilon
                ))
                .into());
            }
        }
        Command::VerifyMechanism(args) => {
            let report = verify_mechanisms(args.budget, args.seed)?;
            print!("{}", report.summary());
            if let Some(path) = &args.csv {
                report.write_csv(path)?;
            }
            if report.underpowered {
                println!(
                    "note: budget {} is below {}; statistical checks are reported as underpowered",
                    report.budget,
                    harness::MIN_POWERED_BUDGET
                );
            }
            if !report.passed() {
                let cases: Vec<String> = report.failures().map(|c| format!("{}: {}", c.suite, c.case)).collect();
                return Err(Failure::Verification(cases.join("; ")));
            }
        }
        Command::GenerateData(args) => {
            let spec = SyntheticSpec {
                kind: match args.kind {
                    KindArg::LinearRegression => SyntheticKind::LinearRegression,
                    KindArg::GaussianBlobs => SyntheticKind::GaussianBlobs,
                },
                n: args.n,
                d: args.d,
                k: args.k,
                noise: args.noise,
                separation: args.separation,
                seed: args.seed,
            };
            let data = generate_synthetic::<f64>(&spec)?;
            fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
            write_csv(&data.train, &args.out.join("train.csv"))?;
            write_csv(&data.test, &args.out.join("test.csv"))?;
            let truth = serde_json::json!({ "spec": spec, "truth": data.truth });
            fs::write(args.out.join("truth.json"), serde_json::to_string_pretty(&truth).context("serializing truth")?)
                .context("writing truth.json")?;
            println!(
                "wrote {} train and {} test rows to {}",
                data.train.len(),
                data.test.len(),
                args.out.display()
            );
        }
        Command::ShowConfig(args) => {
            let mut config = load_config(args.config.as_ref())?;
            args.overrides.apply(&mut config);
            print!("{}", config.resolved()?.to_toml_string()?);
        }
    }
    Ok(())
}
