//! The `polyfloer` command line.
//!
//! Every invocation creates a run directory holding `manifest.json`, the
//! resolved `config.json` when the subcommand takes one, and the subcommand's
//! outputs. Exit codes: 0 pass, 1 input error, 2 check failed, 3 inconclusive.

mod commands;
pub mod plots;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "POLYFLOER_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Pass,
    InputError,
    Fail,
    Inconclusive,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Pass => 0,
            ExitStatus::InputError => 1,
            ExitStatus::Fail => 2,
            ExitStatus::Inconclusive => 3,
        }
    }

    pub fn from_pass(pass: bool) -> Self {
        if pass {
            ExitStatus::Pass
        } else {
            ExitStatus::Fail
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "polyfloer",
    version,
    about = "Floer-flow solver and checks for polysymplectic Hamiltonian systems on T^2"
)]
pub struct Cli {
    /// Root under which run directories are created.
    #[arg(long, env = OUTPUT_ROOT_ENV, default_value = "runs", global = true)]
    pub out_root: PathBuf,
    /// Exact run directory, overriding the root.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Emit PNG plots next to the results.
    #[arg(long, global = true)]
    pub plots: bool,
    /// Validate inputs and write the manifest without computing.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Suppress progress output.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a regularized pair and build its compatible triple.
    Structures(StructuresArgs),
    /// Sweep the Fourier symbol and certify the eigenvalue lower bound.
    Symbol(SymbolArgs),
    /// Run one flow to a solution, or one homotopy trajectory.
    Flow(FlowArgs),
    /// Energy identity and Hofer bound on a homotopy trajectory.
    Energy(EnergyArgs),
    /// Multistart search counting distinct solutions.
    Cuplength(CuplengthArgs),
    /// Compare Euler–Lagrange and Hamiltonian residuals.
    LegendreCheck(LegendreArgs),
    /// Kernel of the free De Donder–Weyl system.
    DdwDemo(DdwArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Structures(_) => "structures",
            Command::Symbol(_) => "symbol",
            Command::Flow(_) => "flow",
            Command::Energy(_) => "energy",
            Command::Cuplength(_) => "cuplength",
            Command::LegendreCheck(_) => "legendre-check",
            Command::DdwDemo(_) => "ddw-demo",
        }
    }
}

#[derive(Debug, Args)]
pub struct StructuresArgs {
    /// Use the standard structures on R^{4n}.
    #[arg(long, value_name = "N", conflicts_with_all = ["input", "random"])]
    pub standard: Option<usize>,
    /// JSON file with `omega1`, `omega2`, `i` and optional `aux_metric` rows.
    #[arg(long, conflicts_with = "random")]
    pub input: Option<PathBuf>,
    /// Draw a random regularized pair on R^{4n}.
    #[arg(long, value_name = "N")]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Use the auxiliary metric as given instead of averaging it with its
    /// `I`-conjugate.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, default_value_t = crate::structure::ALGEBRA_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct SymbolArgs {
    /// Single s-frequency (overrides the range).
    #[arg(long, allow_hyphen_values = true)]
    pub xi: Option<f64>,
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    pub xi_min: f64,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    pub xi_max: f64,
    #[arg(long, default_value_t = 21)]
    pub xi_steps: usize,
    /// Modes `m ∈ [−M, M]²`.
    #[arg(long, default_value_t = 10)]
    pub m_bound: i64,
    /// `ξ` range of the lower-bound certificate.
    #[arg(long, default_value_t = 100.0)]
    pub certificate_xi: f64,
    /// Mode bound of the lower-bound certificate.
    #[arg(long, default_value_t = 30)]
    pub certificate_m: i64,
}

/// The Hamiltonian and grid, from a config file or from flags.
#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Experiment config JSON; its `n`, `grid`, `potential` and `rho` are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in nonlinearity.
    #[arg(long = "h", value_name = "NAME", default_value = "cos_sum")]
    pub h: String,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    /// Cut-off radius (default: computed).
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Branch {
    Nonnegative,
    Negative,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    /// Seed one Fourier mode `M1,M2` projected onto a spectral branch.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    pub seed_mode: Option<Vec<i64>>,
    /// Spectral branch of `--seed-mode`.
    #[arg(long, value_enum, default_value_t = Branch::Nonnegative)]
    pub branch: Branch,
    #[arg(long, default_value_t = 0.5)]
    pub amplitude: f64,
    /// Constant seed `q` (2n values, `p = 0`).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    pub seed_constant: Option<Vec<f64>>,
    /// Random band-limited seed with this RNG seed.
    #[arg(long)]
    pub seed_random: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Signed,
    Gradient,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Signed)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = crate::flow::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = crate::flow::DEFAULT_S_MAX)]
    pub s_max: f64,
    #[arg(long, default_value_t = crate::flow::DEFAULT_DS)]
    pub ds: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_steps: usize,
    /// Run a fixed-step homotopy trajectory with this `r` instead.
    #[arg(long, value_name = "R")]
    pub homotopy: Option<f64>,
    /// Checkpoint stride of homotopy trajectories.
    #[arg(long, default_value_t = 100)]
    pub checkpoint_every: usize,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Trajectory directory written by `flow --homotopy`.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Homotopy parameter when generating a trajectory.
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Constant start `q` when generating (2n values).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    pub q0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-2)]
    pub ds: f64,
    /// Residual below which trajectory ends count as converged.
    #[arg(long, default_value_t = 1e-6)]
    pub end_tol: f64,
}

#[derive(Debug, Args)]
pub struct CuplengthArgs {
    /// Experiment config JSON (default: the bundled flagship config).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LegendreArgs {
    #[arg(long, default_value = "cos_sum")]
    pub h: String,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DdwArgs {
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    #[arg(long, default_value_t = 4)]
    pub band: i64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// One record per run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub args: Vec<String>,
    pub config_path: Option<String>,
    /// File name of the executed config inside the run directory.
    pub config_snapshot: Option<String>,
    pub started_at: String,
    pub finished_at: String,
    pub output_dir: String,
    pub dry_run: bool,
    pub exit_code: i32,
    pub exit_status: ExitStatus,
    pub error: Option<String>,
    pub summary: serde_json::Value,
}

/// State shared by the subcommands of one run.
pub struct RunContext {
    pub dir: PathBuf,
    pub jobs: usize,
    pub plots: bool,
    pub dry_run: bool,
    pub quiet: bool,
    config_path: Option<String>,
    config_snapshot: Option<String>,
}

impl RunContext {
    /// Writes `config.json` and returns the parsed snapshot, so that what
    /// runs is exactly what was written.
    pub fn snapshot<T: Serialize + for<'de> Deserialize<'de>>(
        &mut self,
        source: Option<&Path>,
        config: &T,
    ) -> Result<T> {
        let text = serde_json::to_string_pretty(config)? + "\n";
        fs::write(self.dir.join("config.json"), &text)?;
        self.config_path = source.map(|p| p.display().to_string());
        self.config_snapshot = Some("config.json".into());
        Ok(serde_json::from_str(&text)?)
    }

    pub fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        fs::write(
            self.dir.join(name),
            serde_json::to_string_pretty(value)? + "\n",
        )?;
        Ok(())
    }
}

/// What a subcommand reports back.
pub struct CommandOutcome {
    pub status: ExitStatus,
    pub summary: serde_json::Value,
}

fn run_directory(cli: &Cli) -> Result<PathBuf> {
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir)?;
        return Ok(dir.clone());
    }
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = format!("{}-{stamp}", cli.command.name());
    let mut dir = cli.out_root.join(&base);
    let mut k = 2;
    while dir.exists() {
        dir = cli.out_root.join(format!("{base}-{k}"));
        k += 1;
    }
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Parses `args` and runs the subcommand; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitStatus::InputError.code()
            } else {
                0
            };
            let _ = e.print();
            return code;
        }
    };
    let started = chrono::Local::now();
    let dir = match run_directory(&cli) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: cannot create run directory: {e}");
            return ExitStatus::InputError.code();
        }
    };
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let mut ctx = RunContext {
        dir: dir.clone(),
        jobs,
        plots: cli.plots,
        dry_run: cli.dry_run,
        quiet: cli.quiet,
        config_path: None,
        config_snapshot: None,
    };
    let result = commands::dispatch(&cli.command, &mut ctx);
    let (status, summary, error) = match result {
        Ok(o) => (o.status, o.summary, None),
        Err(e) => {
            eprintln!("error: {e}");
            (
                ExitStatus::InputError,
                serde_json::Value::Null,
                Some(e.to_string()),
            )
        }
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: cli.command.name().into(),
        args: args
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect(),
        config_path: ctx.config_path.clone(),
        config_snapshot: ctx.config_snapshot.clone(),
        started_at: started.to_rfc3339(),
        finished_at: chrono::Local::now().to_rfc3339(),
        output_dir: dir.display().to_string(),
        dry_run: cli.dry_run,
        exit_code: status.code(),
        exit_status: status,
        error,
        summary,
    };
    if let Err(e) = ctx.write_json("manifest.json", &manifest) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitStatus::InputError.code();
    }
    ctx.say(format!("run directory: {}", dir.display()));
    ctx.say(format!("exit status: {:?} ({})", status, status.code()));
    status.code()
}

pub(crate) fn input_error(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
