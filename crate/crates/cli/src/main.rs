use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use locpert_cli::config::{Overrides, RunConfig, OUTPUT_DIR_ENV};
use locpert_cli::error::CliError;
use locpert_cli::simulate::run_simulation;
use locpert_cli::study::{convergence_study, table_csv, Metric, StudySettings};
use locpert_cli::verify::{report, verify_suite};
use locpert_core::calculus::integrate;
use locpert_core::io::load_field;

/// Stochastic perturbation experiments on periodic grids.
#[derive(Parser)]
#[command(name = "locpert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble and write series, snapshots and a manifest.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Refinement study over step sizes; writes `convergence.csv`.
    Converge {
        config: PathBuf,
        /// Comma-separated step sizes, each a multiple of the finest.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        dts: Vec<f64>,
        /// Comma-separated metric names; defaults to the order suite plus the
        /// pathwise reference metrics.
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run every check and print `name,measured,threshold,PASS|FAIL` lines.
    Verify {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Print the header and summary statistics of a `.fld` snapshot.
    Inspect { file: PathBuf },
}

#[derive(Args)]
struct OverrideArgs {
    /// Output directory; beats the environment and the file.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    ensemble: Option<usize>,
}

impl OverrideArgs {
    fn load(&self, path: &Path) -> Result<RunConfig, CliError> {
        let env = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
        let overrides = Overrides {
            output_dir: self.output_dir.clone(),
            seed: self.seed,
            dt: self.dt,
            n_steps: self.n_steps,
            ensemble: self.ensemble,
        };
        RunConfig::load(path)?.with_overrides(env, &overrides)
    }
}

fn converge(cfg: &RunConfig, dts: &[f64], names: &[String]) -> Result<(), CliError> {
    let metrics: Vec<Metric> = if names.is_empty() {
        Metric::ORDER_SUITE.iter().chain(&Metric::PATHWISE).copied().collect()
    } else {
        names
            .iter()
            .map(|n| Metric::from_name(n).ok_or_else(|| CliError::Config(format!("unknown metric {n:?}"))))
            .collect::<Result<_, _>>()?
    };
    if dts.len() < 3 {
        return Err(CliError::Config(format!(
            "a refinement study needs at least 3 step sizes, got {}",
            dts.len()
        )));
    }
    let settings = StudySettings {
        seed: cfg.run.seed,
        ..StudySettings::default()
    };
    let rows = convergence_study(&metrics, dts, &settings).map_err(|e| CliError::Config(e.to_string()))?;
    let csv = table_csv(&rows);
    let dir = &cfg.run.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let path = dir.join("convergence.csv");
    std::fs::write(&path, &csv).map_err(|e| io_error(&path, e))?;
    print!("{csv}");
    Ok(())
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn inspect(path: &Path) -> Result<(), CliError> {
    let f = load_field(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let g = f.grid();
    println!("dim       {}", g.dim());
    println!("points    {:?}", g.points());
    println!("extent    {:?}", g.extent());
    println!("min       {:e}", f.min());
    println!("max       {:e}", f.max());
    println!("mean      {:e}", f.mean());
    println!("integral  {:e}", integrate(&f));
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, overrides } => {
            let cfg = overrides.load(&config)?;
            let out = run_simulation(&cfg)?;
            eprintln!("wrote {} files to {}", out.files.len(), cfg.run.output_dir.display());
            Ok(())
        }
        Command::Converge {
            config,
            dts,
            metrics,
            overrides,
        } => converge(&overrides.load(&config)?, &dts, &metrics),
        Command::Verify { config, overrides } => {
            let cfg = overrides.load(&config)?;
            let checks = verify_suite(&cfg)?;
            print!("{}", report(&checks));
            std::io::stdout().flush().ok();
            let failed = checks.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                return Err(CliError::Verification { failed });
            }
            Ok(())
        }
        Command::Inspect { file } => inspect(&file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
