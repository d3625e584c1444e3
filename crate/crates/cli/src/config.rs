//! The run document: a single JSON object that pins down one invocation.
//!
//! Every command resolves its flags into a [`RunConfig`] before doing any
//! work, and every artifact embeds that document (a `META` section in binary
//! containers, a `"config"` key in JSON, a leading `# config:` line in CSV
//! and text). Feeding the document back through `--config` therefore
//! regenerates the artifact byte for byte; only output paths stay on the
//! command line.

use std::path::PathBuf;

use ara_core::datagen::GenSpec;
use ara_core::model::{BundleSizes, ModelParams};
use ara_core::plan::Objective;
use ara_core::sim::SimScenario;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Encoding of the primary output stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Text,
}

/// One fully resolved invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Absent for commands with a fixed encoding (`gen` writes the binary
    /// container) and filled with the resolved choice everywhere else.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
    pub command: CommandConfig,
}

impl RunConfig {
    /// Compact JSON echo embedded into artifacts.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("run config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandConfig {
    Gen(GenSpec),
    Run(RunCmdConfig),
    Sim(SimConfig),
    Model(ModelConfig),
    Plan(PlanConfig),
    Sweep(SweepConfig),
}

fn default_devices() -> u32 {
    1
}

fn default_workers() -> u32 {
    1
}

fn default_return_periods() -> Vec<u32> {
    vec![10, 50, 100, 250, 1000]
}

fn default_tail_prob() -> f64 {
    0.01
}

/// Loss analysis over a bundle file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunCmdConfig {
    pub bundle: PathBuf,
    #[serde(default = "default_devices")]
    pub devices: u32,
    #[serde(default = "default_workers")]
    pub workers: u32,
    #[serde(default = "default_return_periods")]
    pub return_periods: Vec<u32>,
    #[serde(default = "default_tail_prob")]
    pub tail_prob: f64,
}

/// Timeline simulation of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub scenario: SimScenario,
    #[serde(default)]
    pub render_cells: bool,
}

fn default_sizes() -> BundleSizes {
    BundleSizes::reference()
}

/// One point of the closed-form time/energy model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub params: ModelParams,
    pub p: u32,
    pub v: u32,
    #[serde(default = "default_sizes")]
    pub sizes: BundleSizes,
}

fn default_max_p() -> u32 {
    16
}

fn default_plan_max_v() -> u32 {
    12
}

fn default_objective() -> Objective {
    Objective::Time
}

fn default_tie_tol() -> f64 {
    1e-3
}

/// Configuration ranking over the deployment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub params: ModelParams,
    #[serde(default = "default_max_p")]
    pub max_p: u32,
    #[serde(default = "default_plan_max_v")]
    pub max_v: u32,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default)]
    pub memory_filter: bool,
    #[serde(default = "default_sizes")]
    pub sizes: BundleSizes,
    #[serde(default = "default_tie_tol")]
    pub near_tie_rel_tol: f64,
}

fn default_sweep_max_v() -> u32 {
    4
}

fn default_bandwidth() -> f64 {
    6e9
}

/// Model grid dump, optionally cross-checked against the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub params: ModelParams,
    #[serde(default = "default_max_p")]
    pub max_p: u32,
    #[serde(default = "default_sweep_max_v")]
    pub max_v: u32,
    /// Also run the matching constant-rate scenario for every grid point.
    #[serde(default)]
    pub sim: bool,
    /// Link rate used to convert the timing constants into payload bytes.
    #[serde(default = "default_bandwidth")]
    pub bandwidth_bps: f64,
    #[serde(default = "default_sizes")]
    pub sizes: BundleSizes,
}

const QDR_PRESET: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../presets/qdr.json"));
const FDR_PRESET: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../presets/fdr.json"));
const PAPER_MINI_PRESET: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../presets/paper-mini.json"
));

/// Looks up an interconnect parameter preset by name (case-insensitive).
pub fn model_preset(name: &str) -> Result<ModelParams, CliError> {
    let doc = match name.to_ascii_lowercase().as_str() {
        "qdr" => QDR_PRESET,
        "fdr" => FDR_PRESET,
        _ => {
            return Err(CliError::Validation(format!(
                "unknown parameter preset '{name}' (expected qdr or fdr)"
            )))
        }
    };
    ModelParams::from_json(doc).map_err(|e| CliError::Validation(e.to_string()))
}

/// Looks up a generation preset by name (case-insensitive).
pub fn gen_preset(name: &str) -> Result<GenSpec, CliError> {
    match name.to_ascii_lowercase().as_str() {
        "paper-mini" => serde_json::from_str(PAPER_MINI_PRESET)
            .map_err(|e| CliError::Validation(format!("preset paper-mini: {e}"))),
        _ => Err(CliError::Validation(format!(
            "unknown generation preset '{name}' (expected paper-mini)"
        ))),
    }
}
