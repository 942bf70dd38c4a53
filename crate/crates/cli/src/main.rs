use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use soqbt::Error;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "soqbt", version, about = "Data-driven second-order balanced truncation")]
struct Cli {
    /// Worker threads for node-parallel work (1 gives the reference ordering).
    #[arg(long, global = true, env = "SOQBT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a benchmark system file.
    Generate(GenerateArgs),
    /// Sample a system on quadrature nodes.
    Sample(SampleArgs),
    /// Build a reduced model from a sample file.
    Reduce(ReduceArgs),
    /// Fit damping coefficients of a reduced model to samples.
    FitDamping(FitArgs),
    /// Compare a reduced model against a reference on a frequency grid.
    Evaluate(EvaluateArgs),
    /// Run the built-in invariant battery.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(subcommand)]
    kind: GenerateKind,
    /// Output system file.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum GenerateKind {
    /// Three rows of d masses coupled through one anchored mass (n = 3d + 1).
    Msd {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        #[arg(long, default_value_t = 1.0)]
        m0: f64,
        #[arg(long, default_value_t = 2.0)]
        k_row: f64,
        #[arg(long, default_value_t = 1.0)]
        k_couple: f64,
        #[arg(long, default_value_t = 1.0)]
        k_anchor: f64,
        #[arg(long, default_value_t = 0.002)]
        alpha: f64,
        #[arg(long, default_value_t = 0.002)]
        beta: f64,
    },
    /// Random SPD mass and stiffness with Rayleigh damping.
    RandomSpd {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.02)]
        beta: f64,
        /// Bu = Cpᵀ and Cv = 0.
        #[arg(long)]
        symmetric: bool,
        /// Draw a random velocity output.
        #[arg(long, conflicts_with = "symmetric")]
        velocity_output: bool,
    },
    /// Unit-mass chain with structural damping.
    StructuralChain {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        eta: f64,
    },
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// System file.
    #[arg(long)]
    system: PathBuf,
    #[arg(long)]
    wmin: f64,
    #[arg(long)]
    wmax: f64,
    /// Nodes per rule.
    #[arg(long)]
    n: usize,
    /// One conjugate-pair rule with derivative samples instead of interleaved
    /// left and right rules.
    #[arg(long)]
    hermite: bool,
    /// Output sample file.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    /// Sample file.
    #[arg(long)]
    samples: PathBuf,
    /// Reduced order.
    #[arg(long)]
    r: usize,
    /// Require Hermite data in the sample file.
    #[arg(long)]
    hermite: bool,
    /// Transform the data matrices to real arithmetic first.
    #[arg(long)]
    realify: bool,
    /// Output reduced-model file.
    #[arg(short, long)]
    output: PathBuf,
    /// Report file (JSON); printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Rayleigh,
    Structural,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Reduced-model file whose matrices are kept.
    #[arg(long)]
    rom: PathBuf,
    /// Sample file providing the fitted data.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Initial parameters, comma separated; repeat for several starts.
    #[arg(long, required = true, value_delimiter = ',', num_args = 1.., action = clap::ArgAction::Append)]
    init: Vec<String>,
    #[arg(long, default_value_t = 1e-8)]
    grad_tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    step_tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Output reduced model with the best fitted damping.
    #[arg(short, long)]
    output: PathBuf,
    /// Cost trace (CSV).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Fit report (JSON); printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("reference").required(true).args(["system", "samples", "reference_rom"]))]
struct EvaluateArgs {
    /// Reduced model under test.
    #[arg(long)]
    rom: PathBuf,
    /// Full-order reference system.
    #[arg(long)]
    system: Option<PathBuf>,
    /// Reference samples; the grid is the sampled frequencies.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Reference reduced model.
    #[arg(long = "reference-rom")]
    reference_rom: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    wmin: f64,
    #[arg(long, default_value_t = 1e1)]
    wmax: f64,
    #[arg(long, default_value_t = soqbt::metrics::DEFAULT_GRID_POINTS)]
    points: usize,
    #[arg(long)]
    linear: bool,
    /// Also report stability of the reduced pencil.
    #[arg(long)]
    stability: bool,
    /// Per-frequency table (CSV); printed to stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Write the pass/fail table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

/// Process exit status for each failure class.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidParams(_) | Error::InvalidRange(_) | Error::DimensionMismatch(_) | Error::ZeroWeight(_) => 2,
        Error::DivisionByZero(_)
        | Error::DomainError(_)
        | Error::SingularMass { .. }
        | Error::SingularPencil { .. }
        | Error::SingularReducedPencil { .. }
        | Error::UnstablePencil { .. }
        | Error::IllConditionedEigenvectors { .. }
        | Error::ZeroReference(_)
        | Error::Decomposition(_) => 3,
        Error::HypothesisViolation(_)
        | Error::MissingSplitSamples
        | Error::MissingDerivative(_)
        | Error::NotConjugateSymmetric { .. }
        | Error::UnsupportedDamping(_) => 4,
        Error::RankDeficient { .. } => 5,
        Error::Optimizer(_) => 6,
        Error::Format(_) | Error::Io(_) => 7,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not configure the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Sample(a) => commands::sample(a),
        Command::Reduce(a) => commands::reduce(a),
        Command::FitDamping(a) => commands::fit_damping(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Validate(a) => commands::validate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
