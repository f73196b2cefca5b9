use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rrldp::mechanisms::MechanismSpec;
use rrldp_sim::config::Epsilon;
use rrldp_sim::output::{render, write_report};
use rrldp_sim::{ExperimentConfig, ExperimentKind, OutputFormat, Report, SimError, SimResult};

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "rrldp", version, about = "Randomized-response LDP experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Directory for result files; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Print a mechanism's matrix and ε.
    Inspect {
        /// Mechanism TOML, e.g. `family = "ewrr"`, `p = 0.8`, `n = 3`.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Closed-form optimal parameters and the RR3Dagger boundary check.
    Optimize {
        /// Budget, as a number or `ln x`.
        #[arg(long)]
        epsilon: Epsilon,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        pi0: f64,
        /// Lattice points per axis for the boundary check.
        #[arg(long, default_value_t = 200)]
        grid: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a frequency or graph experiment.
    Simulate(RunArgs),
    /// Variance curves over a feasibility region.
    Sweep(RunArgs),
    /// Closed-form budgets against brute-force oracles.
    Audit {
        /// Audit config; the built-in cases run when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn emit<R: Report>(report: &R, out: Option<&Path>, format: OutputFormat, echo: Option<&str>) -> SimResult<bool> {
    match out {
        Some(dir) => {
            write_report(report, dir, format, echo)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            if let Err(e) = stdout.write_all(render(report, format).as_bytes()) {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(SimError::Io { path: "stdout".into(), source: e });
                }
            }
        }
    }
    Ok(report.pass())
}

fn run_experiment(
    config: Option<&Path>,
    seed: Option<u64>,
    output: &OutputArgs,
    allowed: &[ExperimentKind],
    command: &str,
) -> SimResult<bool> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::from_toml("kind = \"budget-audit\"\n")?,
    };
    if !allowed.contains(&cfg.kind) {
        return Err(SimError::Config {
            field: "kind".into(),
            message: format!("`{command}` does not run kind = \"{}\"", cfg.kind),
        });
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let format = output.format.unwrap_or(cfg.output.format);
    cfg.output.format = format;
    let out = output.out.clone().or_else(|| cfg.output.dir.clone());
    let base = config.and_then(Path::parent);
    let validated = cfg.validate(base)?;
    log::info!("running {} experiment with seed {}", validated.config.kind, validated.config.seed);
    let result = rrldp_sim::run(&validated)?;
    let echo = validated.config.to_toml();
    emit(&result, out.as_deref(), format, Some(&echo))
}

fn dispatch(cli: Cli) -> SimResult<bool> {
    match cli.command {
        Command::Inspect { config, output } => {
            let text = std::fs::read_to_string(&config).map_err(|e| SimError::Config {
                field: "config".into(),
                message: format!("{}: {e}", config.display()),
            })?;
            let spec = MechanismSpec::from_config_str(&text)
                .map_err(|e| SimError::Config { field: "mechanism".into(), message: e.to_string() })?;
            let report = rrldp_sim::inspect::inspect(&spec)
                .map_err(|e| SimError::Config { field: "mechanism".into(), message: e.to_string() })?;
            emit(&report, output.out.as_deref(), output.format.unwrap_or_default(), None)
        }
        Command::Optimize { epsilon, n, pi0, grid, output } => {
            let report = rrldp_sim::sweep::optimize(epsilon.0, n, pi0, grid).map_err(|e| match e {
                SimError::Core(c) => SimError::Config { field: "optimize".into(), message: c.to_string() },
                other => other,
            })?;
            emit(&report, output.out.as_deref(), output.format.unwrap_or_default(), None)
        }
        Command::Simulate(a) => run_experiment(
            Some(&a.config),
            a.seed,
            &a.output,
            &[ExperimentKind::Frequency, ExperimentKind::Graph],
            "simulate",
        ),
        Command::Sweep(a) => run_experiment(Some(&a.config), a.seed, &a.output, &[ExperimentKind::Sweep], "sweep"),
        Command::Audit { config, seed, output } => {
            run_experiment(config.as_deref(), seed, &output, &[ExperimentKind::BudgetAudit], "audit")
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("acceptance check failed; see the pass columns in the output");
            ExitCode::from(EXIT_FAIL)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_FAIL })
        }
    }
}
