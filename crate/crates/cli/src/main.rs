//! `ara`: batch front end for the aggregate risk analysis toolkit.
//!
//! Six verbs cover the pipeline: `gen` builds synthetic input bundles,
//! `run` analyses them into loss tables and risk metrics, `sim` replays a
//! transfer/compute timeline, `model` and `plan` evaluate the closed-form
//! performance model, and `sweep` dumps plot-ready grids. Every artifact
//! embeds the resolved run document; `--config` replays such a document.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 I/O error.
//! Diagnostics go to stderr; data goes to stdout unless `--output` is set.

mod config;
mod exec;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ara_core::datagen::GenSpec;
use ara_core::model::{BundleSizes, ModelParams};
use ara_core::plan::Objective;
use ara_core::sim::{SimScenario, TransferMode};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{
    gen_preset, model_preset, CommandConfig, ModelConfig, OutputFormat, PlanConfig, RunCmdConfig,
    RunConfig, SimConfig, SweepConfig,
};

/// Errors split by exit code: 1 for bad requests, 2 for filesystem trouble.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

#[derive(Parser, Debug)]
#[command(name = "ara", version, about = "Aggregate risk analysis toolkit")]
struct Cli {
    /// Re-run a command from a run document (as echoed into artifacts)
    #[arg(long, value_name = "FILE", global = true)]
    config: Option<PathBuf>,
    /// Write the primary artifact here instead of stdout (atomic)
    #[arg(short, long, value_name = "FILE", global = true)]
    output: Option<PathBuf>,
    /// Write the per-trial loss table here (run command only)
    #[arg(long, value_name = "FILE", global = true)]
    ylt: Option<PathBuf>,
    /// Override the generation seed (gen command only)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output encoding; each command has a natural default
    #[arg(long, value_enum, global = true)]
    format: Option<OutputFormat>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic trial/loss bundle (binary container)
    Gen(GenArgs),
    /// Analyse a bundle into a loss table and risk metrics
    Run(RunArgs),
    /// Simulate the transfer/compute timeline of one scenario
    Sim(SimArgs),
    /// Evaluate the execution-time and energy model at one grid point
    Model(ModelArgs),
    /// Rank deployment configurations over the (P, v) grid
    Plan(PlanArgs),
    /// Dump the model grid, optionally with matching simulator runs
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Generation spec document (JSON)
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Named generation spec shipped with the tool (paper-mini)
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Input bundle container
    #[arg(long, value_name = "FILE")]
    bundle: PathBuf,
    /// Device count the trial range is sharded across
    #[arg(long, default_value_t = 1)]
    devices: u32,
    /// Worker threads executing the shards
    #[arg(long, default_value_t = 1)]
    workers: u32,
    /// Return periods (years) for the loss curve, comma-separated
    #[arg(long, value_delimiter = ',', default_values_t = [10u32, 50, 100, 250, 1000])]
    return_periods: Vec<u32>,
    /// Tail fraction for the tail mean
    #[arg(long, default_value_t = 0.01)]
    tail_prob: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Sequential,
    Concurrent,
}

impl From<ModeArg> for TransferMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Sequential => TransferMode::Sequential,
            ModeArg::Concurrent => TransferMode::Concurrent,
        }
    }
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Full scenario document (JSON); replaces the preset flags
    #[arg(
        long,
        value_name = "FILE",
        conflicts_with_all = ["preset", "params", "pgpus", "vgpus", "bandwidth", "mode"]
    )]
    scenario: Option<PathBuf>,
    /// Interconnect preset (qdr, fdr) for a calibrated scenario
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Interconnect parameter document (JSON) instead of a preset
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    params: Option<PathBuf>,
    /// Physical GPU count
    #[arg(short = 'P', long)]
    pgpus: Option<u32>,
    /// Tenants per physical GPU
    #[arg(short = 'v', long)]
    vgpus: Option<u32>,
    /// Link rate used to turn timing constants into payloads, bytes/s
    #[arg(long, default_value_t = 6e9)]
    bandwidth: f64,
    /// Transfer discipline override
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Emit the timeline as a text cell grid
    #[arg(long)]
    render_cells: bool,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Interconnect preset (qdr, fdr)
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Interconnect parameter document (JSON) instead of a preset
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    params: Option<PathBuf>,
    /// Physical GPU count
    #[arg(short = 'P', long)]
    pgpus: u32,
    /// Tenants per physical GPU
    #[arg(short = 'v', long)]
    vgpus: u32,
    /// Split payload bytes for the memory check
    #[arg(long, default_value_t = 4e9)]
    split_bytes: f64,
    /// Replicated payload bytes for the memory check
    #[arg(long, default_value_t = 124e6)]
    replicated_bytes: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Time,
    Energy,
    Product,
}

impl From<ObjectiveArg> for Objective {
    fn from(objective: ObjectiveArg) -> Self {
        match objective {
            ObjectiveArg::Time => Objective::Time,
            ObjectiveArg::Energy => Objective::Energy,
            ObjectiveArg::Product => Objective::EnergyTimeProduct,
        }
    }
}

#[derive(Args, Debug)]
struct PlanArgs {
    /// Interconnect preset (qdr, fdr)
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Interconnect parameter document (JSON) instead of a preset
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    params: Option<PathBuf>,
    /// Largest physical GPU count in the grid
    #[arg(long, default_value_t = 16)]
    max_p: u32,
    /// Largest tenant count in the grid
    #[arg(long, default_value_t = 12)]
    max_v: u32,
    /// What to minimize
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Time)]
    objective: ObjectiveArg,
    /// Drop configurations that do not fit in device memory
    #[arg(long)]
    memory_filter: bool,
    /// Split payload bytes for the memory check
    #[arg(long, default_value_t = 4e9)]
    split_bytes: f64,
    /// Replicated payload bytes for the memory check
    #[arg(long, default_value_t = 124e6)]
    replicated_bytes: f64,
    /// Relative tie window around the best objective value
    #[arg(long, default_value_t = 1e-3)]
    tie_tol: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Interconnect preset (qdr, fdr)
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Interconnect parameter document (JSON) instead of a preset
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    params: Option<PathBuf>,
    /// Largest physical GPU count in the grid
    #[arg(long, default_value_t = 16)]
    max_p: u32,
    /// Largest tenant count in the grid
    #[arg(long, default_value_t = 4)]
    max_v: u32,
    /// Also run the matching simulator scenario per grid point
    #[arg(long)]
    sim: bool,
    /// Link rate used to turn timing constants into payloads, bytes/s
    #[arg(long, default_value_t = 6e9)]
    bandwidth: f64,
    /// Split payload bytes for the memory check
    #[arg(long, default_value_t = 4e9)]
    split_bytes: f64,
    /// Replicated payload bytes for the memory check
    #[arg(long, default_value_t = 124e6)]
    replicated_bytes: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let ok = matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Io(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = match (&cli.config, cli.command) {
        (Some(_), Some(_)) => {
            return Err(CliError::Validation(
                "--config replaces the subcommand; pass one or the other".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Validation(
                "pass a command or --config FILE (see --help)".into(),
            ))
        }
        (Some(path), None) => {
            let mut cfg = load_config(path)?;
            apply_overrides(&mut cfg, cli.seed, cli.format)?;
            cfg
        }
        (None, Some(command)) => resolve_command(command, cli.seed, cli.format)?,
    };
    exec::execute(&cfg, cli.output.as_deref(), cli.ylt.as_deref())
}

fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let doc = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&doc)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
}

/// CLI flags that may accompany `--config`: a seed for gen documents and a
/// format for everything else.
fn apply_overrides(
    cfg: &mut RunConfig,
    seed: Option<u64>,
    format: Option<OutputFormat>,
) -> Result<(), CliError> {
    if let Some(seed) = seed {
        match &mut cfg.command {
            CommandConfig::Gen(spec) => spec.seed = seed,
            _ => {
                return Err(CliError::Validation(
                    "--seed only applies to gen".into(),
                ))
            }
        }
    }
    if let Some(format) = format {
        if matches!(cfg.command, CommandConfig::Gen(_)) {
            return Err(CliError::Validation(
                "gen always writes the binary bundle container; --format does not apply".into(),
            ));
        }
        cfg.format = Some(format);
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Resolves `--preset NAME` or `--params FILE` into interconnect constants.
fn resolve_params(
    preset: Option<&str>,
    params: Option<&Path>,
) -> Result<ModelParams, CliError> {
    match (preset, params) {
        (Some(name), None) => model_preset(name),
        (None, Some(path)) => ModelParams::from_json(&read_file(path)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display()))),
        (None, None) => Err(CliError::Validation(
            "pass --preset NAME or --params FILE".into(),
        )),
        (Some(_), Some(_)) => Err(CliError::Validation(
            "--preset and --params are mutually exclusive".into(),
        )),
    }
}

fn resolve_command(
    command: Command,
    seed: Option<u64>,
    format: Option<OutputFormat>,
) -> Result<RunConfig, CliError> {
    if seed.is_some() && !matches!(command, Command::Gen(_)) {
        return Err(CliError::Validation("--seed only applies to gen".into()));
    }
    match command {
        Command::Gen(args) => {
            if format.is_some() {
                return Err(CliError::Validation(
                    "gen always writes the binary bundle container; --format does not apply"
                        .into(),
                ));
            }
            let mut spec: GenSpec = match (&args.spec, &args.preset) {
                (Some(path), None) => serde_json::from_str(&read_file(path)?)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?,
                (None, Some(name)) => gen_preset(name)?,
                _ => {
                    return Err(CliError::Validation(
                        "pass --spec FILE or --preset NAME".into(),
                    ))
                }
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            Ok(RunConfig {
                format: None,
                command: CommandConfig::Gen(spec),
            })
        }
        Command::Run(args) => Ok(RunConfig {
            format: Some(format.unwrap_or(OutputFormat::Json)),
            command: CommandConfig::Run(RunCmdConfig {
                bundle: args.bundle,
                devices: args.devices,
                workers: args.workers,
                return_periods: args.return_periods,
                tail_prob: args.tail_prob,
            }),
        }),
        Command::Sim(args) => {
            let scenario: SimScenario = match &args.scenario {
                Some(path) => serde_json::from_str(&read_file(path)?)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?,
                None => {
                    let params = resolve_params(args.preset.as_deref(), args.params.as_deref())?;
                    let pgpus = args.pgpus.ok_or_else(|| {
                        CliError::Validation("-P/--pgpus is required with --preset/--params".into())
                    })?;
                    let vgpus = args.vgpus.ok_or_else(|| {
                        CliError::Validation("-v/--vgpus is required with --preset/--params".into())
                    })?;
                    let mut scenario =
                        SimScenario::calibrated(&params, pgpus, vgpus, args.bandwidth);
                    if let Some(mode) = args.mode {
                        scenario.transfer_mode = mode.into();
                    }
                    scenario
                }
            };
            let default = if args.render_cells {
                OutputFormat::Text
            } else {
                OutputFormat::Json
            };
            Ok(RunConfig {
                format: Some(format.unwrap_or(default)),
                command: CommandConfig::Sim(SimConfig {
                    scenario,
                    render_cells: args.render_cells,
                }),
            })
        }
        Command::Model(args) => {
            let params = resolve_params(args.preset.as_deref(), args.params.as_deref())?;
            Ok(RunConfig {
                format: Some(format.unwrap_or(OutputFormat::Json)),
                command: CommandConfig::Model(ModelConfig {
                    params,
                    p: args.pgpus,
                    v: args.vgpus,
                    sizes: BundleSizes {
                        split_bytes: args.split_bytes,
                        replicated_bytes: args.replicated_bytes,
                    },
                }),
            })
        }
        Command::Plan(args) => {
            let params = resolve_params(args.preset.as_deref(), args.params.as_deref())?;
            Ok(RunConfig {
                format: Some(format.unwrap_or(OutputFormat::Json)),
                command: CommandConfig::Plan(PlanConfig {
                    params,
                    max_p: args.max_p,
                    max_v: args.max_v,
                    objective: args.objective.into(),
                    memory_filter: args.memory_filter,
                    sizes: BundleSizes {
                        split_bytes: args.split_bytes,
                        replicated_bytes: args.replicated_bytes,
                    },
                    near_tie_rel_tol: args.tie_tol,
                }),
            })
        }
        Command::Sweep(args) => {
            let params = resolve_params(args.preset.as_deref(), args.params.as_deref())?;
            Ok(RunConfig {
                format: Some(format.unwrap_or(OutputFormat::Csv)),
                command: CommandConfig::Sweep(SweepConfig {
                    params,
                    max_p: args.max_p,
                    max_v: args.max_v,
                    sim: args.sim,
                    bandwidth_bps: args.bandwidth,
                    sizes: BundleSizes {
                        split_bytes: args.split_bytes,
                        replicated_bytes: args.replicated_bytes,
                    },
                }),
            })
        }
    }
}
