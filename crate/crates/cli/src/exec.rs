//! Command execution over the resolved run document.
//!
//! Artifacts go through [`write_artifact_with`]: to stdout when no path was
//! given, otherwise to a temporary file in the target directory that is
//! renamed into place, so readers never observe a half-written file.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ara_core::datagen::container::{self, ParseError};
use ara_core::datagen::generate;
use ara_core::engine::{run_analysis, ExecutionPlan, MetricsReport};
use ara_core::model::{exec_time_multitenancy, memory_feasible};
use ara_core::plan::{export_plan, plan, ExportFormat, PlanQuery};
use ara_core::sim::{cell_count, render_cells, simulate, timeline_to_csv, SimError, SimScenario};
use rayon::prelude::*;
use tempfile::NamedTempFile;

use crate::config::{
    CommandConfig, ModelConfig, OutputFormat, PlanConfig, RunCmdConfig, RunConfig, SimConfig,
    SweepConfig,
};
use crate::CliError;

fn validation<E: std::fmt::Display>(err: E) -> CliError {
    CliError::Validation(err.to_string())
}

fn io_error<E: std::fmt::Display>(err: E) -> CliError {
    CliError::Io(err.to_string())
}

/// Splits container errors into the two exit classes: the file could not be
/// read at all, or it could be read and its content is bad.
fn container_error(err: ParseError) -> CliError {
    match err {
        ParseError::Io(e) => CliError::Io(e.to_string()),
        other => CliError::Validation(other.to_string()),
    }
}

fn write_artifact_with<F>(output: Option<&Path>, write: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match output {
        Some(path) => {
            let dir = match path.parent() {
                Some(parent) if !parent.as_os_str().is_empty() => parent.to_path_buf(),
                _ => PathBuf::from("."),
            };
            let mut tmp = NamedTempFile::new_in(dir).map_err(io_error)?;
            {
                let mut buffered = io::BufWriter::new(tmp.as_file_mut());
                write(&mut buffered).map_err(io_error)?;
                buffered.flush().map_err(io_error)?;
            }
            tmp.persist(path).map_err(io_error)?;
            Ok(())
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock).map_err(io_error)?;
            lock.flush().map_err(io_error)
        }
    }
}

fn write_bytes(output: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    write_artifact_with(output, |w| w.write_all(bytes))
}

fn json_artifact(value: &serde_json::Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
    bytes.push(b'\n');
    bytes
}

fn effective_format(cfg: &RunConfig, default: OutputFormat) -> OutputFormat {
    cfg.format.unwrap_or(default)
}

/// Runs one resolved command. `output` receives the primary artifact,
/// `ylt_out` the per-trial loss table (run command only).
pub fn execute(
    cfg: &RunConfig,
    output: Option<&Path>,
    ylt_out: Option<&Path>,
) -> Result<(), CliError> {
    if ylt_out.is_some() && !matches!(cfg.command, CommandConfig::Run(_)) {
        return Err(CliError::Validation(
            "--ylt only applies to the run command".into(),
        ));
    }
    match &cfg.command {
        CommandConfig::Gen(_) => cmd_gen(cfg, output),
        CommandConfig::Run(rc) => cmd_run(cfg, rc, output, ylt_out),
        CommandConfig::Sim(sc) => cmd_sim(cfg, sc, output),
        CommandConfig::Model(mc) => cmd_model(cfg, mc, output),
        CommandConfig::Plan(pc) => cmd_plan(cfg, pc, output),
        CommandConfig::Sweep(sw) => cmd_sweep(cfg, sw, output),
    }
}

fn cmd_gen(cfg: &RunConfig, output: Option<&Path>) -> Result<(), CliError> {
    let CommandConfig::Gen(spec) = &cfg.command else {
        unreachable!("dispatched on the command")
    };
    if cfg.format.is_some() {
        return Err(CliError::Validation(
            "gen always writes the binary bundle container; --format does not apply".into(),
        ));
    }
    let mut bundle = generate(spec).map_err(validation)?;
    bundle.meta = Some(cfg.echo());
    write_artifact_with(output, |mut w| container::write_bundle(&mut w, &bundle))
}

fn cmd_run(
    cfg: &RunConfig,
    rc: &RunCmdConfig,
    output: Option<&Path>,
    ylt_out: Option<&Path>,
) -> Result<(), CliError> {
    let bundle = container::read_bundle_path(&rc.bundle).map_err(container_error)?;
    let shards = ExecutionPlan::even_split(rc.devices, bundle.yet.trials.len()).map_err(validation)?;
    let started = Instant::now();
    let table = run_analysis(&bundle, &shards, rc.workers).map_err(validation)?;
    let wall = started.elapsed().as_secs_f64();
    let report =
        MetricsReport::new(&table, &rc.return_periods, rc.tail_prob, wall).map_err(validation)?;

    let echo = cfg.echo();
    if let Some(path) = ylt_out {
        write_artifact_with(Some(path), |mut w| {
            container::write_ylt(&mut w, &table, Some(&echo))
        })?;
    }

    let bytes = match effective_format(cfg, OutputFormat::Json) {
        OutputFormat::Json => json_artifact(&serde_json::json!({
            "config": cfg,
            "pml_curve": report.pml_curve,
            "tvar": report.tvar,
            "meta": { "total_wall_time_s": report.total_wall_time_s },
        })),
        OutputFormat::Csv => {
            let mut out = format!("# config: {echo}\nmetric,arg,value\n");
            for &(period, loss) in &report.pml_curve {
                let _ = writeln!(out, "pml,{period},{loss}");
            }
            let _ = writeln!(out, "tvar,{},{}", report.tvar.0, report.tvar.1);
            let _ = writeln!(out, "# total_wall_time_s: {}", report.total_wall_time_s);
            out.into_bytes()
        }
        OutputFormat::Text => {
            let mut out = format!("# config: {echo}\n");
            for &(period, loss) in &report.pml_curve {
                let _ = writeln!(out, "pml[{period}] = {loss}");
            }
            let _ = writeln!(out, "tvar[{}] = {}", report.tvar.0, report.tvar.1);
            let _ = writeln!(out, "wall_time_s = {}", report.total_wall_time_s);
            out.into_bytes()
        }
    };
    write_bytes(output, &bytes)
}

fn cmd_sim(cfg: &RunConfig, sc: &SimConfig, output: Option<&Path>) -> Result<(), CliError> {
    let timeline = simulate(&sc.scenario).map_err(validation)?;
    let echo = cfg.echo();

    if sc.render_cells {
        if matches!(cfg.format, Some(OutputFormat::Csv) | Some(OutputFormat::Json)) {
            return Err(CliError::Validation(
                "--render-cells emits a text grid; drop --format or use --format text".into(),
            ));
        }
        let grid = render_cells(&timeline, sc.scenario.cell_seconds);
        let bytes = format!("# config: {echo}\n{grid}").into_bytes();
        return write_bytes(output, &bytes);
    }

    let bytes = match effective_format(cfg, OutputFormat::Json) {
        OutputFormat::Json => json_artifact(&serde_json::json!({
            "config": cfg,
            "summary": timeline.summary(),
        })),
        OutputFormat::Csv => {
            let mut out = format!("# config: {echo}\n").into_bytes();
            timeline_to_csv(&mut out, &timeline).expect("vec write");
            out
        }
        OutputFormat::Text => {
            let summary = timeline.summary();
            let mut out = format!("# config: {echo}\n");
            let _ = writeln!(out, "makespan_s = {}", summary.makespan_s);
            let _ = writeln!(out, "energy_ws = {}", summary.energy_ws);
            let _ = writeln!(out, "utilization_avg = {}", summary.utilization_avg);
            let _ = writeln!(
                out,
                "cells = {}",
                cell_count(summary.makespan_s, sc.scenario.cell_seconds)
            );
            out.into_bytes()
        }
    };
    write_bytes(output, &bytes)
}

fn cmd_model(cfg: &RunConfig, mc: &ModelConfig, output: Option<&Path>) -> Result<(), CliError> {
    mc.params.validate().map_err(validation)?;
    let mut prediction = exec_time_multitenancy(mc.p, mc.v, &mc.params).map_err(validation)?;
    prediction.feasible = memory_feasible(mc.p, mc.v, &mc.params, &mc.sizes);

    let bytes = match effective_format(cfg, OutputFormat::Json) {
        OutputFormat::Json => json_artifact(&serde_json::json!({
            "config": cfg,
            "prediction": prediction,
        })),
        OutputFormat::Csv => {
            let mut out = format!("# config: {}\n", cfg.echo());
            out.push_str("p,v,t_transfer_s,t_computation_s,total_time_s,regime,energy_ws,feasible\n");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                prediction.n_pgpus,
                prediction.vgpus_per_pgpu,
                prediction.t_transfer_s,
                prediction.t_computation_s,
                prediction.total_time_s,
                prediction.regime,
                prediction.energy_ws,
                prediction.feasible
            );
            out.into_bytes()
        }
        OutputFormat::Text => {
            let mut out = format!("# config: {}\n", cfg.echo());
            let _ = writeln!(out, "p = {}", prediction.n_pgpus);
            let _ = writeln!(out, "v = {}", prediction.vgpus_per_pgpu);
            let _ = writeln!(out, "t_transfer_s = {}", prediction.t_transfer_s);
            let _ = writeln!(out, "t_computation_s = {}", prediction.t_computation_s);
            let _ = writeln!(out, "total_time_s = {}", prediction.total_time_s);
            let _ = writeln!(out, "regime = {}", prediction.regime);
            let _ = writeln!(out, "energy_ws = {}", prediction.energy_ws);
            let _ = writeln!(out, "feasible = {}", prediction.feasible);
            out.into_bytes()
        }
    };
    write_bytes(output, &bytes)
}

fn plan_query(pc: &PlanConfig) -> PlanQuery {
    let mut query = PlanQuery::new(pc.params.clone());
    query.p_range = 1..=pc.max_p;
    query.v_range = 1..=pc.max_v;
    query.objective = pc.objective;
    query.apply_memory_filter = pc.memory_filter;
    query.sizes = pc.sizes;
    query.near_tie_rel_tol = pc.near_tie_rel_tol;
    query
}

fn cmd_plan(cfg: &RunConfig, pc: &PlanConfig, output: Option<&Path>) -> Result<(), CliError> {
    let table = plan(&plan_query(pc)).map_err(validation)?;

    let bytes = match effective_format(cfg, OutputFormat::Json) {
        OutputFormat::Json => json_artifact(&serde_json::json!({
            "config": cfg,
            "rows": table.rows,
            "best": table.best,
        })),
        OutputFormat::Csv => {
            let mut out = format!("# config: {}\n", cfg.echo()).into_bytes();
            out.extend(export_plan(&table, ExportFormat::Csv).map_err(validation)?);
            let trailer = match table.best {
                Some((p, v)) => format!("# best: p={p},v={v}\n"),
                None => "# best: no feasible configuration\n".into(),
            };
            out.extend(trailer.into_bytes());
            out
        }
        OutputFormat::Text => {
            let mut out = format!("# config: {}\n", cfg.echo());
            match table.best_row() {
                Some(row) => {
                    let _ = writeln!(
                        out,
                        "best configuration: {} pGPUs, {} vGPUs per pGPU",
                        row.p, row.v
                    );
                    let _ = writeln!(out, "total_time_s = {}", row.total_time_s);
                    let _ = writeln!(out, "energy_ws = {}", row.energy_ws);
                    let _ = writeln!(out, "product = {}", row.product);
                    let _ = writeln!(out, "regime = {}", row.regime);
                }
                None => {
                    let _ = writeln!(out, "no feasible configuration");
                }
            }
            out.into_bytes()
        }
    };
    write_bytes(output, &bytes)
}

struct SimColumns {
    makespan_s: f64,
    energy_ws: f64,
    cells: usize,
}

fn cmd_sweep(cfg: &RunConfig, sw: &SweepConfig, output: Option<&Path>) -> Result<(), CliError> {
    let mut query = PlanQuery::new(sw.params.clone());
    query.p_range = 1..=sw.max_p;
    query.v_range = 1..=sw.max_v;
    query.sizes = sw.sizes;
    query.near_tie_rel_tol = 0.0;
    let rows = plan(&query).map_err(validation)?.rows;

    let sim_columns: Option<Vec<SimColumns>> = if sw.sim {
        let columns = rows
            .par_iter()
            .map(|row| {
                let scenario =
                    SimScenario::calibrated(&sw.params, row.p, row.v, sw.bandwidth_bps);
                let timeline = simulate(&scenario)?;
                Ok(SimColumns {
                    makespan_s: timeline.makespan_s,
                    energy_ws: timeline.energy_ws,
                    cells: cell_count(timeline.makespan_s, scenario.cell_seconds),
                })
            })
            .collect::<Result<Vec<_>, SimError>>()
            .map_err(validation)?;
        Some(columns)
    } else {
        None
    };

    let bytes = match effective_format(cfg, OutputFormat::Csv) {
        OutputFormat::Csv => {
            let mut out = format!("# config: {}\n", cfg.echo());
            out.push_str("p,v,total_time_s,energy_ws,product,regime,feasible");
            if sim_columns.is_some() {
                out.push_str(",sim_makespan_s,sim_energy_ws,sim_cells");
            }
            out.push('\n');
            for (i, row) in rows.iter().enumerate() {
                let _ = write!(
                    out,
                    "{},{},{},{},{},{},{}",
                    row.p,
                    row.v,
                    row.total_time_s,
                    row.energy_ws,
                    row.product,
                    row.regime,
                    row.feasible
                );
                if let Some(columns) = &sim_columns {
                    let sim = &columns[i];
                    let _ = write!(out, ",{},{},{}", sim.makespan_s, sim.energy_ws, sim.cells);
                }
                out.push('\n');
            }
            out.into_bytes()
        }
        OutputFormat::Json => {
            let rows_json: Vec<serde_json::Value> = rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let mut value = serde_json::to_value(row).expect("row serializes");
                    if let Some(columns) = &sim_columns {
                        let object = value.as_object_mut().expect("row is an object");
                        let sim = &columns[i];
                        object.insert("sim_makespan_s".into(), sim.makespan_s.into());
                        object.insert("sim_energy_ws".into(), sim.energy_ws.into());
                        object.insert("sim_cells".into(), sim.cells.into());
                    }
                    value
                })
                .collect();
            json_artifact(&serde_json::json!({
                "config": cfg,
                "rows": rows_json,
            }))
        }
        OutputFormat::Text => {
            let mut out = format!("# config: {}\n", cfg.echo());
            for (i, row) in rows.iter().enumerate() {
                let _ = write!(
                    out,
                    "p={} v={} total_time_s={} energy_ws={} product={} regime={} feasible={}",
                    row.p,
                    row.v,
                    row.total_time_s,
                    row.energy_ws,
                    row.product,
                    row.regime,
                    row.feasible
                );
                if let Some(columns) = &sim_columns {
                    let sim = &columns[i];
                    let _ = write!(
                        out,
                        " sim_makespan_s={} sim_energy_ws={} sim_cells={}",
                        sim.makespan_s, sim.energy_ws, sim.cells
                    );
                }
                out.push('\n');
            }
            out.into_bytes()
        }
    };
    write_bytes(output, &bytes)
}
