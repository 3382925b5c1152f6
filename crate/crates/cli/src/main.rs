//! `delayed-md`: run delayed bandit mirror-descent experiments from a TOML
//! configuration.
//!
//! Exit status: 0 on success, 2 for configuration errors (including strict
//! schedule validation), 3 for numerical failures, 1 for I/O errors.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use delayed_md::delay::DelayModel;
use delayed_md::estimator::EstimatorKind;
use delayed_md::games::{solve_critical_point, CriticalPoint};
use delayed_md::geometry::verify_interior_ball;
use delayed_md::runner::{replicate, Reference, RunConfig, RunOutput};
use delayed_md::{GameError, GameModel, GeometryError, RunError};
use thiserror::Error;

use config::ExperimentConfig;
use output::OracleFile;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<GameError> for CliError {
    fn from(e: GameError) -> Self {
        RunError::from(e).into()
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        RunError::from(e).into()
    }
}

#[derive(Debug, Parser)]
#[command(name = "delayed-md", version, about = "Bandit mirror descent with delayed feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Residual,
    SinglePoint,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Residual => EstimatorKind::Residual,
            EstimatorArg::SinglePoint => EstimatorKind::SinglePoint,
        }
    }
}

#[derive(Debug, clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output path; overrides `output.path`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Treat failed schedule conditions as errors.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the schedule conditions and the interior balls.
    Validate(Common),
    /// Solve for the reference solution and write it as JSON.
    Oracle(Common),
    /// Run (and replicate) one experiment; writes a CSV trace and stats.
    Run(Common),
    /// Run every `[[scenarios]]` entry with paired seeds; `--out` is a
    /// directory.
    Sweep(Common),
}

struct Loaded {
    config: ExperimentConfig,
    game: Box<dyn GameModel>,
}

impl Common {
    fn load(&self) -> Result<Loaded, CliError> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.run.seed = seed;
        }
        if self.strict {
            config.run.strict = true;
        }
        if let Some(e) = self.estimator {
            config.run.estimator = e.into();
        }
        let game = config.game.build()?;
        Ok(Loaded { config, game })
    }

    fn out_path(&self, config: &ExperimentConfig) -> Result<PathBuf, CliError> {
        self.out
            .clone()
            .or_else(|| config.output.path.clone())
            .ok_or_else(|| CliError::Config("no output path: pass --out or set output.path".into()))
    }
}

impl Loaded {
    fn run_config(&self, delays: DelayModel, reference: Option<Reference>) -> RunConfig {
        let run = &self.config.run;
        RunConfig {
            seed: run.seed,
            replications: run.replications,
            stride: run.stride,
            estimator: run.estimator,
            mirror: run.mirror,
            strict: run.strict,
            reference,
            ..RunConfig::new(delays, self.config.schedules, run.horizon)
        }
    }

    fn solve(&self) -> Result<CriticalPoint, CliError> {
        let limits = &self.config.oracle;
        Ok(solve_critical_point(self.game.as_ref(), limits.tol, limits.max_iter)?)
    }

    fn reference(&self) -> Result<Option<Reference>, CliError> {
        let section = &self.config.reference;
        if section.solve {
            return Ok(Some(OracleFile::from_critical_point(&self.solve()?).reference()));
        }
        match &section.file {
            Some(path) if path.exists() => Ok(Some(OracleFile::read(path)?.reference())),
            Some(path) => {
                eprintln!(
                    "warning: reference file {} not found; rel_dist and potential_gap will be nan",
                    path.display()
                );
                Ok(None)
            }
            None => Ok(None),
        }
    }

    /// Every delay model in the file, labeled.
    fn delay_models(&self) -> Vec<(String, DelayModel)> {
        let mut models: Vec<(String, DelayModel)> = self
            .config
            .delays
            .iter()
            .map(|d| ("delays".to_string(), *d))
            .collect();
        models.extend(
            self.config
                .scenarios
                .iter()
                .map(|s| (format!("scenario {}", s.name), s.delays)),
        );
        models
    }
}

fn execute(loaded: &Loaded, delays: DelayModel, reference: Option<Reference>, out: &Path) -> Result<(), CliError> {
    let config = loaded.run_config(delays, reference);
    let result = replicate(loaded.game.as_ref(), &config)?;
    let runs: &[RunOutput] = &result.runs;
    for w in &runs[0].stats.warnings {
        eprintln!("warning: {w}");
    }
    output::write_trace(out, runs)?;
    output::write_stats(&output::stats_path(out), runs)?;
    Ok(())
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
        }
        _ => Ok(()),
    }
}

fn cmd_validate(args: &Common) -> Result<(), CliError> {
    let loaded = args.load()?;
    let game = loaded.game.as_ref();
    let models = loaded.delay_models();
    if models.is_empty() {
        return Err(CliError::Config("no [delays] table and no [[scenarios]] to validate".into()));
    }
    let mut all_passed = true;
    for (label, delays) in models {
        let mut config = loaded.run_config(delays, None);
        config.strict = false;
        let report = config.check(game)?;
        println!("{label} (alpha_d = {}):", delays.exponent);
        print!("{report}");
        all_passed &= report.is_valid();
    }
    let ad = loaded.config.schedules.radius_exponent;
    if ad < 0.5 {
        println!(
            "note: alpha_delta = {ad} < 0.5 is the slow radius decay typical of single-point estimators; \
             it is admissible here whenever the conditions above hold"
        );
    }
    for i in 0..game.num_players() {
        let ball = game.interior_ball(i);
        let ok = verify_interior_ball(game.feasible_set(i), ball);
        all_passed &= ok;
        println!(
            "[{}] interior ball of player {i}: radius {} around {:?}",
            if ok { "PASS" } else { "FAIL" },
            ball.radius,
            ball.center.as_slice()
        );
    }
    if loaded.config.run.strict && !all_passed {
        return Err(CliError::Config("validation failed in strict mode".into()));
    }
    Ok(())
}

fn cmd_oracle(args: &Common) -> Result<(), CliError> {
    let loaded = args.load()?;
    let out = args.out_path(&loaded.config)?;
    let cp = loaded.solve()?;
    create_parent(&out)?;
    OracleFile::from_critical_point(&cp).write(&out)?;
    println!(
        "wrote {} ({} iterations, residual {:e})",
        out.display(),
        cp.iterations,
        cp.residual
    );
    Ok(())
}

fn cmd_run(args: &Common) -> Result<(), CliError> {
    let loaded = args.load()?;
    let delays = loaded
        .config
        .delays
        .ok_or_else(|| CliError::Config("`run` needs a [delays] table".into()))?;
    let out = args.out_path(&loaded.config)?;
    let reference = loaded.reference()?;
    create_parent(&out)?;
    execute(&loaded, delays, reference, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_sweep(args: &Common) -> Result<(), CliError> {
    let loaded = args.load()?;
    if loaded.config.scenarios.is_empty() {
        println!("no scenarios; nothing to do");
        return Ok(());
    }
    let dir = args.out_path(&loaded.config)?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let reference = loaded.reference()?;
    for scenario in &loaded.config.scenarios {
        let out = dir.join(format!("{}.csv", scenario.name));
        execute(&loaded, scenario.delays, reference.clone(), &out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
