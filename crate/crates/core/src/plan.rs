//! Deployment planning: sweep the (pGPUs, vGPUs-per-pGPU) grid under one
//! parameter set, rank by time, energy, or their product, and pick a best
//! configuration.
//!
//! Ranking treats near-equal objective values as ties. The analytic model
//! is accurate to a few percent against measurements, so rows separated by
//! a hair of arithmetic are not meaningfully different; within the tie
//! window the planner prefers fewer physical GPUs, then fewer tenants, as
//! the operationally cheaper deployment.

use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    exec_time_multitenancy, memory_feasible, BundleSizes, ModelError, ModelParams, Regime,
};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("{which} range is empty")]
    EmptyRange { which: &'static str },
    #[error("near-tie tolerance must be finite and non-negative, got {0}")]
    BadTieTolerance(f64),
    #[error("unknown export format {0:?}, expected \"csv\" or \"json\"")]
    UnknownFormat(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("json export failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// What the planner minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Time,
    Energy,
    EnergyTimeProduct,
}

/// One planning request.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanQuery {
    pub p_range: RangeInclusive<u32>,
    pub v_range: RangeInclusive<u32>,
    pub params: ModelParams,
    pub objective: Objective,
    /// When set, rows that do not fit in device memory are excluded from
    /// the ranking (they still appear in the table).
    pub apply_memory_filter: bool,
    /// Input footprint used for the memory check.
    pub sizes: BundleSizes,
    /// Relative width of the tie window around the strict minimum. Zero
    /// ranks by raw arithmetic; the default absorbs sub-0.1% splits, well
    /// below the model's accuracy.
    pub near_tie_rel_tol: f64,
}

impl PlanQuery {
    /// Grid of 1 to 16 physical GPUs and 1 to 12 tenants, time objective,
    /// no memory filter, reference workload sizes.
    pub fn new(params: ModelParams) -> Self {
        Self {
            p_range: 1..=16,
            v_range: 1..=12,
            params,
            objective: Objective::Time,
            apply_memory_filter: false,
            sizes: BundleSizes::reference(),
            near_tie_rel_tol: 1e-3,
        }
    }

    fn validate(&self) -> Result<(), PlanError> {
        if self.p_range.is_empty() || *self.p_range.start() == 0 {
            return Err(PlanError::EmptyRange { which: "pGPU" });
        }
        if self.v_range.is_empty() || *self.v_range.start() == 0 {
            return Err(PlanError::EmptyRange { which: "vGPU" });
        }
        if !(self.near_tie_rel_tol >= 0.0 && self.near_tie_rel_tol.is_finite()) {
            return Err(PlanError::BadTieTolerance(self.near_tie_rel_tol));
        }
        self.params.validate()?;
        Ok(())
    }
}

/// One grid cell of the evaluated plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub p: u32,
    pub v: u32,
    pub total_time_s: f64,
    pub energy_ws: f64,
    /// `total_time_s * energy_ws`.
    pub product: f64,
    pub regime: Regime,
    pub feasible: bool,
}

impl PlanRow {
    fn objective_value(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Time => self.total_time_s,
            Objective::Energy => self.energy_ws,
            Objective::EnergyTimeProduct => self.product,
        }
    }
}

/// The evaluated grid plus the chosen configuration; `best` is `None` when
/// no row passes the memory filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTable {
    pub rows: Vec<PlanRow>,
    pub best: Option<(u32, u32)>,
}

impl PlanTable {
    pub fn best_row(&self) -> Option<&PlanRow> {
        let (p, v) = self.best?;
        self.rows.iter().find(|row| row.p == p && row.v == v)
    }
}

/// Evaluates the full grid and picks the best row: strict objective
/// minimum over the ranked rows, widened to the tie window, then smallest
/// `p`, then smallest `v`.
pub fn plan(query: &PlanQuery) -> Result<PlanTable, PlanError> {
    query.validate()?;
    let mut rows = Vec::new();
    for p in query.p_range.clone() {
        for v in query.v_range.clone() {
            let pred = exec_time_multitenancy(p, v, &query.params)?;
            rows.push(PlanRow {
                p,
                v,
                total_time_s: pred.total_time_s,
                energy_ws: pred.energy_ws,
                product: pred.total_time_s * pred.energy_ws,
                regime: pred.regime,
                feasible: memory_feasible(p, v, &query.params, &query.sizes),
            });
        }
    }

    let ranked: Vec<&PlanRow> = rows
        .iter()
        .filter(|row| !query.apply_memory_filter || row.feasible)
        .collect();
    let best = ranked
        .iter()
        .map(|row| row.objective_value(query.objective))
        .min_by(f64::total_cmp)
        .map(|strict_min| {
            let cutoff = strict_min * (1.0 + query.near_tie_rel_tol);
            ranked
                .iter()
                .filter(|row| row.objective_value(query.objective) <= cutoff)
                .map(|row| (row.p, row.v))
                .min()
                .expect("tie window contains the strict minimum")
        });

    Ok(PlanTable { rows, best })
}

/// Export encodings for a plan table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(PlanError::UnknownFormat(other.to_string())),
        }
    }
}

/// Serializes the full grid. CSV columns are
/// `p,v,total_time_s,energy_ws,product,regime,feasible`; JSON is the whole
/// table including `best`. Numbers are written in shortest round-trip
/// form, so parsing them back reproduces the exact values.
pub fn export_plan(table: &PlanTable, format: ExportFormat) -> Result<Vec<u8>, PlanError> {
    match format {
        ExportFormat::Csv => {
            let mut out = String::from("p,v,total_time_s,energy_ws,product,regime,feasible\n");
            for row in &table.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    row.p,
                    row.v,
                    row.total_time_s,
                    row.energy_ws,
                    row.product,
                    row.regime,
                    row.feasible
                ));
            }
            Ok(out.into_bytes())
        }
        ExportFormat::Json => Ok(serde_json::to_vec_pretty(table)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn query(params: ModelParams) -> PlanQuery {
        PlanQuery::new(params)
    }

    #[test]
    fn qdr_time_optimum_is_7_pgpus_2_tenants() {
        let table = plan(&query(ModelParams::qdr())).unwrap();
        assert_eq!(table.best, Some((7, 2)));
        assert_relative_eq!(
            table.best_row().unwrap().total_time_s,
            2.480_342_857_142_857,
            max_relative = 1e-12
        );
    }

    #[test]
    fn fdr_time_optimum_is_9_pgpus_2_tenants() {
        let table = plan(&query(ModelParams::fdr())).unwrap();
        assert_eq!(table.best, Some((9, 2)));
        let best = table.best_row().unwrap();
        assert_relative_eq!(best.total_time_s, 1.6827755555555556, max_relative = 1e-12);
        let runner_up = table
            .rows
            .iter()
            .find(|row| (row.p, row.v) == (10, 2))
            .unwrap();
        assert_relative_eq!(runner_up.total_time_s, 1.6833, max_relative = 1e-9);
    }

    #[test]
    fn zero_tolerance_ranks_by_raw_arithmetic() {
        let mut q = query(ModelParams::qdr());
        q.near_tie_rel_tol = 0.0;
        let table = plan(&q).unwrap();
        assert_eq!(table.best, Some((15, 1)));
        assert_relative_eq!(
            table.best_row().unwrap().total_time_s,
            2.4796666666666667,
            max_relative = 1e-12
        );
    }

    #[test]
    fn qdr_tie_window_holds_the_single_tenant_twins() {
        // (14,1) and (7,2) run 14 virtual GPUs through the identical
        // serialized expression, so their times agree to the last bit and
        // the tie-break must prefer the 7-device deployment.
        let table = plan(&query(ModelParams::qdr())).unwrap();
        let row = |p, v| {
            table
                .rows
                .iter()
                .find(|r| (r.p, r.v) == (p, v))
                .copied()
                .unwrap()
        };
        assert_eq!(row(14, 1).total_time_s.to_bits(), row(7, 2).total_time_s.to_bits());
        assert!(row(15, 1).total_time_s < row(7, 2).total_time_s);
        assert_eq!(table.best, Some((7, 2)));
    }

    #[test]
    fn energy_objective_with_filter_prefers_one_device_four_tenants() {
        for (params, expected_energy) in [
            (ModelParams::qdr(), 989.96485),
            (ModelParams::fdr(), 983.23163),
        ] {
            let mut q = query(params);
            q.objective = Objective::Energy;
            q.apply_memory_filter = true;
            let table = plan(&q).unwrap();
            assert_eq!(table.best, Some((1, 4)));
            assert_relative_eq!(
                table.best_row().unwrap().energy_ws,
                expected_energy,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn best_row_dominates_every_ranked_row() {
        for objective in [Objective::Time, Objective::Energy, Objective::EnergyTimeProduct] {
            let mut q = query(ModelParams::fdr());
            q.objective = objective;
            q.near_tie_rel_tol = 0.0;
            let table = plan(&q).unwrap();
            let best = table.best_row().unwrap().objective_value(objective);
            for row in &table.rows {
                assert!(best <= row.objective_value(objective));
            }
        }
    }

    #[test]
    fn single_tenant_best_sits_at_the_marginal_break_even() {
        // with one tenant the total is p*unit + fixed + c1/p; the best p is
        // the last one whose added transfer cost stays under the compute
        // saving, found here by brute force
        for params in [ModelParams::qdr(), ModelParams::fdr()] {
            let unit = params.t_cudamalloc
                + params.t_small_transfers
                + params.t_transfer_4mb
                + params.t_transfer_120mb;
            let c1 = params.computation_time_1pgpu;
            let mut expected = 1;
            for p in 2..=16u32 {
                if unit < c1 / ((p - 1) * p) as f64 {
                    expected = p;
                }
            }
            let mut q = query(params);
            q.v_range = 1..=1;
            q.near_tie_rel_tol = 0.0;
            let table = plan(&q).unwrap();
            assert_eq!(table.best, Some((expected, 1)));
        }
    }

    #[test]
    fn infeasible_rows_stay_in_the_table() {
        let mut q = query(ModelParams::fdr());
        q.apply_memory_filter = true;
        q.p_range = 1..=1;
        let table = plan(&q).unwrap();
        assert_eq!(table.rows.len(), 12);
        assert!(table.rows.iter().any(|row| !row.feasible));
        assert!(table.best.is_some());
    }

    #[test]
    fn impossible_footprint_yields_no_best() {
        let mut q = query(ModelParams::fdr());
        q.apply_memory_filter = true;
        q.sizes = BundleSizes {
            split_bytes: 1e15,
            replicated_bytes: 1e15,
        };
        let table = plan(&q).unwrap();
        assert_eq!(table.best, None);
        assert!(table.best_row().is_none());
        assert_eq!(table.rows.len(), 192);
    }

    #[test]
    fn planning_is_deterministic() {
        let q = query(ModelParams::qdr());
        assert_eq!(plan(&q).unwrap(), plan(&q).unwrap());
    }

    #[test]
    fn csv_export_emits_the_whole_grid_in_order() {
        let mut q = query(ModelParams::fdr());
        q.p_range = 1..=2;
        q.v_range = 1..=3;
        let table = plan(&q).unwrap();
        let csv = String::from_utf8(export_plan(&table, ExportFormat::Csv).unwrap()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "p,v,total_time_s,energy_ws,product,regime,feasible");
        assert!(lines[1].starts_with("1,1,"));
        assert!(lines[6].starts_with("2,3,"));
    }

    #[test]
    fn one_by_one_grid_exports_a_single_data_row() {
        let mut q = query(ModelParams::fdr());
        q.p_range = 4..=4;
        q.v_range = 2..=2;
        let table = plan(&q).unwrap();
        let csv = String::from_utf8(export_plan(&table, ExportFormat::Csv).unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn json_round_trip_preserves_exact_values() {
        let table = plan(&query(ModelParams::qdr())).unwrap();
        let json = export_plan(&table, ExportFormat::Json).unwrap();
        let back: PlanTable = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn csv_numbers_round_trip_exactly() {
        let table = plan(&query(ModelParams::fdr())).unwrap();
        let csv = String::from_utf8(export_plan(&table, ExportFormat::Csv).unwrap()).unwrap();
        for (line, row) in csv.lines().skip(1).zip(&table.rows) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[2].parse::<f64>().unwrap().to_bits(), row.total_time_s.to_bits());
            assert_eq!(fields[3].parse::<f64>().unwrap().to_bits(), row.energy_ws.to_bits());
        }
    }

    #[test]
    fn format_names_parse_case_insensitively() {
        assert_eq!("CSV".parse::<ExportFormat>().unwrap(), ExportFormat::Csv);
        assert_eq!("json".parse::<ExportFormat>().unwrap(), ExportFormat::Json);
        assert!(matches!(
            "yaml".parse::<ExportFormat>(),
            Err(PlanError::UnknownFormat(_))
        ));
    }

    #[test]
    #[allow(clippy::reversed_empty_ranges)]
    fn degenerate_queries_are_rejected() {
        let mut q = query(ModelParams::qdr());
        q.p_range = 5..=4;
        assert!(matches!(plan(&q), Err(PlanError::EmptyRange { which: "pGPU" })));
        let mut q = query(ModelParams::qdr());
        q.near_tie_rel_tol = -0.1;
        assert!(matches!(plan(&q), Err(PlanError::BadTieTolerance(_))));
    }
}
