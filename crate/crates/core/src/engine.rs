//! Partitioned execution of the trial-loss analysis.
//!
//! The year event table is split into contiguous, near-equal shards, one per
//! logical device. A worker pool walks the shards; every worker writes only
//! its own slice of the output, and the merged year loss table is keyed by
//! trial id, so the result is bitwise identical no matter how many devices
//! or workers take part.

use std::io::Write;
use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::datagen::DatasetBundle;
use crate::risk::{DenseElt, EltIndex, LayerTerms, RiskError, Trial, YearLossTable};

/// Errors from planning or running an analysis.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("device count must be at least 1")]
    ZeroDevices,
    #[error("worker count must be at least 1")]
    ZeroWorkers,
    #[error("plan covers {plan_trials} trials but the bundle has {bundle_trials}")]
    PlanMismatch {
        plan_trials: usize,
        bundle_trials: usize,
    },
    #[error("loss table is empty")]
    EmptyLossTable,
    #[error("return period {return_period} needs at least {return_period} trials, table has {n_trials}")]
    ReturnPeriodOutOfRange { return_period: u32, n_trials: usize },
    #[error("tail probability {tail_prob} is outside (0, 1)")]
    TailProbOutOfRange { tail_prob: f64 },
    #[error("worker pool failed to start: {0}")]
    WorkerPool(String),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

/// How the trials are split across logical devices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionPlan {
    n_devices: u32,
    shards: Vec<Range<usize>>,
}

impl ExecutionPlan {
    /// Contiguous even split: shard sizes differ by at most one, earlier
    /// shards take the remainder.
    pub fn even_split(n_devices: u32, n_trials: usize) -> Result<Self, EngineError> {
        if n_devices == 0 {
            return Err(EngineError::ZeroDevices);
        }
        let n = n_devices as usize;
        let base = n_trials / n;
        let rem = n_trials % n;
        let mut shards = Vec::with_capacity(n);
        let mut start = 0;
        for i in 0..n {
            let len = base + usize::from(i < rem);
            shards.push(start..start + len);
            start += len;
        }
        Ok(Self { n_devices, shards })
    }

    pub fn n_devices(&self) -> u32 {
        self.n_devices
    }

    /// Trial-index ranges, one per device, disjoint and covering `0..n`.
    pub fn shards(&self) -> &[Range<usize>] {
        &self.shards
    }

    fn trial_count(&self) -> usize {
        self.shards.iter().map(|r| r.len()).sum()
    }
}

/// Flattened portfolio: one entry per layer, references already resolved.
struct ResolvedLayer<'a> {
    terms: &'a LayerTerms,
    elts: Vec<&'a DenseElt>,
}

fn resolve_portfolio<'a>(
    bundle: &'a DatasetBundle,
    index: &'a EltIndex,
) -> Result<Vec<ResolvedLayer<'a>>, RiskError> {
    let mut layers = Vec::new();
    for program in &bundle.portfolio.programs {
        for layer in &program.layers {
            layers.push(ResolvedLayer {
                terms: &layer.terms,
                elts: index.resolve(layer)?,
            });
        }
    }
    Ok(layers)
}

fn shard_losses(out: &mut [f64], trials: &[Trial], layers: &[ResolvedLayer<'_>]) {
    for (slot, trial) in out.iter_mut().zip(trials) {
        let mut total = 0.0;
        for layer in layers {
            total += crate::risk::trial_loss(trial, layer.terms, &layer.elts);
        }
        *slot = total;
    }
}

/// Runs the full analysis: per-trial portfolio losses, sharded per the plan
/// and executed on `workers` threads.
pub fn run_analysis(
    bundle: &DatasetBundle,
    plan: &ExecutionPlan,
    workers: u32,
) -> Result<YearLossTable, EngineError> {
    if workers == 0 {
        return Err(EngineError::ZeroWorkers);
    }
    let n_trials = bundle.yet.trials.len();
    if plan.trial_count() != n_trials {
        return Err(EngineError::PlanMismatch {
            plan_trials: plan.trial_count(),
            bundle_trials: n_trials,
        });
    }

    let max_event_id = bundle
        .elts
        .iter()
        .filter_map(|elt| elt.losses.last())
        .map(|&(id, _)| id)
        .max()
        .unwrap_or(0);
    let index = EltIndex::build(&bundle.elts, max_event_id)?;
    let layers = resolve_portfolio(bundle, &index)?;

    let mut losses = vec![0.0f64; n_trials];
    // carve the output into disjoint per-shard slices so workers never share
    let mut slices: Vec<&mut [f64]> = Vec::with_capacity(plan.shards.len());
    let mut rest = losses.as_mut_slice();
    for shard in &plan.shards {
        let (head, tail) = rest.split_at_mut(shard.len());
        slices.push(head);
        rest = tail;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers as usize)
        .build()
        .map_err(|e| EngineError::WorkerPool(e.to_string()))?;
    pool.install(|| {
        rayon::scope(|scope| {
            for (slice, shard) in slices.into_iter().zip(&plan.shards) {
                let trials = &bundle.yet.trials[shard.clone()];
                let layers = &layers;
                scope.spawn(move |_| shard_losses(slice, trials, layers));
            }
        });
    });

    Ok(YearLossTable {
        losses: bundle
            .yet
            .trials
            .iter()
            .map(|t| t.trial_id)
            .zip(losses)
            .collect(),
    })
}

fn descending(ylt: &YearLossTable) -> Vec<f64> {
    let mut sorted: Vec<f64> = ylt.losses.iter().map(|&(_, l)| l).collect();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    sorted
}

fn pml_sorted(sorted: &[f64], return_period: u32) -> Result<f64, EngineError> {
    let n = sorted.len();
    if n == 0 {
        return Err(EngineError::EmptyLossTable);
    }
    if return_period == 0 || return_period as usize > n {
        return Err(EngineError::ReturnPeriodOutOfRange {
            return_period,
            n_trials: n,
        });
    }
    let rank = n.div_ceil(return_period as usize);
    Ok(sorted[rank - 1])
}

/// Probable maximum loss at a return period: the value at rank
/// `ceil(n / R)` of the losses sorted descending.
pub fn pml(ylt: &YearLossTable, return_period: u32) -> Result<f64, EngineError> {
    pml_sorted(&descending(ylt), return_period)
}

fn tvar_sorted(sorted: &[f64], tail_prob: f64) -> Result<f64, EngineError> {
    let n = sorted.len();
    if n == 0 {
        return Err(EngineError::EmptyLossTable);
    }
    if !(tail_prob > 0.0 && tail_prob < 1.0) {
        return Err(EngineError::TailProbOutOfRange { tail_prob });
    }
    let k = (tail_prob * n as f64).ceil() as usize;
    let k = k.clamp(1, n);
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// Tail value-at-risk: the mean of the worst `ceil(q * n)` losses.
pub fn tvar(ylt: &YearLossTable, tail_prob: f64) -> Result<f64, EngineError> {
    tvar_sorted(&descending(ylt), tail_prob)
}

/// Risk metrics plus the wall time the analysis took.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// `(return_period_years, loss)` rows, sorted by return period.
    pub pml_curve: Vec<(u32, f64)>,
    /// `(tail_prob, value)`.
    pub tvar: (f64, f64),
    pub total_wall_time_s: f64,
}

impl MetricsReport {
    /// Builds the report from a loss table, sorting once and reusing the
    /// ordering for every row of the curve.
    pub fn new(
        ylt: &YearLossTable,
        return_periods: &[u32],
        tail_prob: f64,
        total_wall_time_s: f64,
    ) -> Result<Self, EngineError> {
        let sorted = descending(ylt);
        let mut periods: Vec<u32> = return_periods.to_vec();
        periods.sort_unstable();
        periods.dedup();
        let mut pml_curve = Vec::with_capacity(periods.len());
        for period in periods {
            pml_curve.push((period, pml_sorted(&sorted, period)?));
        }
        Ok(Self {
            pml_curve,
            tvar: (tail_prob, tvar_sorted(&sorted, tail_prob)?),
            total_wall_time_s,
        })
    }
}

/// Writes a loss table as `trial_id,loss` CSV.
pub fn ylt_to_csv<W: Write>(w: &mut W, ylt: &YearLossTable) -> std::io::Result<()> {
    writeln!(w, "trial_id,loss")?;
    for &(trial_id, loss) in &ylt.losses {
        writeln!(w, "{trial_id},{loss}")?;
    }
    Ok(())
}
