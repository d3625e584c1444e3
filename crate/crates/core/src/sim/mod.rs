//! Simulator of a host feeding physical GPUs through one shared link.
//!
//! A scenario describes `P` physical GPUs hosting `v` virtual GPUs each.
//! Every virtual GPU receives its share of the split block plus a full
//! copy of the replicated blocks, then runs a kernel of `C1/V` seconds.
//! Transfers move over the shared link (one at a time in sequential mode,
//! equal-share in concurrent mode) and never wait for kernels; kernels
//! sharing a physical GPU serialize FIFO. The machine is event-driven with
//! exact piecewise-constant rates; nothing is time-stepped, and identical
//! scenarios produce identical timelines.
//!
//! Power is two-state: a physical GPU draws the computing wattage while a
//! kernel runs on it and the idle/receiving wattage otherwise, from `t = 0`
//! to the makespan.

mod render;
mod transfer;

pub use render::{cell_count, render_cells};
pub use transfer::{
    schedule_concurrent, schedule_sequential, BandwidthBand, LinkModel, RateSegment,
    ScheduledTransfer, TransferRequest,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelParams;
use crate::power::PowerProfile;

/// Errors raised by scenario validation.
#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// How transfers contend for the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferMode {
    /// All transfers start together and share the link equally.
    Concurrent,
    /// One transfer at a time at full bandwidth, in waves across the
    /// physical GPUs (every GPU's first tenant, then every second tenant,
    /// and so on). This matches a driver that serializes command streams,
    /// and it is the discipline the analytic model describes.
    #[default]
    Sequential,
}

fn default_cell_seconds() -> f64 {
    0.035
}

/// Full description of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub n_pgpus: u32,
    pub vgpus_per_pgpu: u32,
    pub link: LinkModel,
    /// Per-device memory allocation and small-structure latency, seconds.
    /// Occupies the link in sequential mode; delays the payload start in
    /// concurrent mode.
    #[serde(default)]
    pub setup_latency_per_vgpu: f64,
    /// Bytes divided evenly among all virtual GPUs.
    pub split_bytes: f64,
    /// Bytes sent in full to every virtual GPU.
    pub replicated_bytes: f64,
    /// Kernel time of the whole workload on one device, seconds.
    pub compute_time_one_device: f64,
    #[serde(default)]
    pub transfer_mode: TransferMode,
    #[serde(default)]
    pub power: PowerProfile,
    /// Quantization of the rendered cell grid, seconds.
    #[serde(default = "default_cell_seconds")]
    pub cell_seconds: f64,
}

impl SimScenario {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_pgpus == 0 || self.vgpus_per_pgpu == 0 {
            return Err(SimError::InvalidScenario(
                "device counts must be at least 1".into(),
            ));
        }
        for (name, value) in [
            ("setup_latency_per_vgpu", self.setup_latency_per_vgpu),
            ("split_bytes", self.split_bytes),
            ("replicated_bytes", self.replicated_bytes),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(SimError::InvalidScenario(format!(
                    "{name} must be non-negative, got {value}"
                )));
            }
        }
        if !(self.compute_time_one_device > 0.0 && self.compute_time_one_device.is_finite()) {
            return Err(SimError::InvalidScenario(format!(
                "compute_time_one_device must be positive, got {}",
                self.compute_time_one_device
            )));
        }
        if !(self.cell_seconds > 0.0 && self.cell_seconds.is_finite()) {
            return Err(SimError::InvalidScenario(format!(
                "cell_seconds must be positive, got {}",
                self.cell_seconds
            )));
        }
        self.power.validate().map_err(SimError::InvalidScenario)?;
        self.link.validate()
    }

    /// Scenario equivalent to the analytic transfer model: a constant-rate
    /// link with zero setup, the per-device costs folded into a replicated
    /// payload and the once-over-the-link cost into the split payload.
    /// With the default mode the simulated makespan reproduces the model's
    /// total execution time.
    pub fn calibrated(
        params: &ModelParams,
        n_pgpus: u32,
        vgpus_per_pgpu: u32,
        reference_bandwidth_bps: f64,
    ) -> Self {
        let per_gpu_s = params.t_cudamalloc
            + params.t_small_transfers
            + params.t_transfer_4mb
            + params.t_transfer_120mb;
        Self {
            n_pgpus,
            vgpus_per_pgpu,
            link: LinkModel::constant(reference_bandwidth_bps),
            setup_latency_per_vgpu: 0.0,
            split_bytes: params.t_transfer_4gb * reference_bandwidth_bps,
            replicated_bytes: per_gpu_s * reference_bandwidth_bps,
            compute_time_one_device: params.computation_time_1pgpu,
            transfer_mode: TransferMode::Sequential,
            power: params.power,
            cell_seconds: default_cell_seconds(),
        }
    }

    fn n_virtual(&self) -> u32 {
        self.n_pgpus * self.vgpus_per_pgpu
    }
}

/// A row of the timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Entity {
    VGpu { pgpu: u32, slot: u32 },
    PGpu(u32),
    Link,
}

impl std::fmt::Display for Entity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Entity::VGpu { pgpu, slot } => write!(f, "vgpu{pgpu}.{slot}"),
            Entity::PGpu(id) => write!(f, "pgpu{id}"),
            Entity::Link => f.write_str("link"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Transfer,
    Compute,
}

impl std::fmt::Display for Activity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activity::Transfer => "transfer",
            Activity::Compute => "compute",
        })
    }
}

/// One busy span of one entity. Gaps between intervals are idle time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub entity: Entity,
    pub activity: Activity,
    pub start_s: f64,
    pub end_s: f64,
}

/// One virtual GPU's transfer as placed on the link.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferRecord {
    pub pgpu: u32,
    pub slot: u32,
    pub payload_bytes: f64,
    pub setup_start_s: f64,
    pub payload_start_s: f64,
    pub end_s: f64,
    pub average_bandwidth_bps: f64,
    pub segments: Vec<RateSegment>,
}

/// The simulated run: busy intervals, aggregate figures, and the placed
/// transfers.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub intervals: Vec<Interval>,
    pub makespan_s: f64,
    pub per_pgpu_busy_compute_s: Vec<f64>,
    pub energy_ws: f64,
    pub utilization_per_pgpu: Vec<f64>,
    pub utilization_avg: f64,
    pub transfers: Vec<TransferRecord>,
}

/// Runs a scenario to completion.
pub fn simulate(scenario: &SimScenario) -> Result<Timeline, SimError> {
    scenario.validate()?;
    let p = scenario.n_pgpus;
    let v = scenario.vgpus_per_pgpu;
    let n_virtual = scenario.n_virtual();
    let payload = scenario.split_bytes / n_virtual as f64 + scenario.replicated_bytes;

    // wave order: every pGPU's tenant 0, then every tenant 1, ...
    let order: Vec<(u32, u32)> = (0..v)
        .flat_map(|slot| (0..p).map(move |pgpu| (pgpu, slot)))
        .collect();
    let requests: Vec<TransferRequest> = order
        .iter()
        .map(|_| TransferRequest {
            payload_bytes: payload,
            setup_s: scenario.setup_latency_per_vgpu,
        })
        .collect();
    let placed = match scenario.transfer_mode {
        TransferMode::Sequential => schedule_sequential(&requests, &scenario.link),
        TransferMode::Concurrent => schedule_concurrent(&requests, &scenario.link),
    };

    let transfers: Vec<TransferRecord> = order
        .iter()
        .zip(&placed)
        .map(|(&(pgpu, slot), t)| TransferRecord {
            pgpu,
            slot,
            payload_bytes: t.payload_bytes,
            setup_start_s: t.setup_start_s,
            payload_start_s: t.payload_start_s,
            end_s: t.end_s,
            average_bandwidth_bps: t.average_bandwidth_bps(),
            segments: t.segments.clone(),
        })
        .collect();

    // kernel phase: FIFO per pGPU in (ready, slot) order
    let kernel_s = scenario.compute_time_one_device / n_virtual as f64;
    let mut queues: Vec<Vec<(f64, u32)>> = vec![Vec::with_capacity(v as usize); p as usize];
    for t in &transfers {
        queues[t.pgpu as usize].push((t.end_s, t.slot));
    }
    let mut kernels: Vec<(u32, u32, f64, f64)> = Vec::with_capacity(n_virtual as usize);
    for (pgpu, queue) in queues.iter_mut().enumerate() {
        queue.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut free_at = 0.0f64;
        for &(ready, slot) in queue.iter() {
            let start = ready.max(free_at);
            let end = start + kernel_s;
            kernels.push((pgpu as u32, slot, start, end));
            free_at = end;
        }
    }

    // assemble intervals: vGPU transfer+compute rows, pGPU compute chains,
    // link occupancy
    let mut intervals = Vec::new();
    for t in &transfers {
        if t.end_s > t.setup_start_s {
            intervals.push(Interval {
                entity: Entity::VGpu {
                    pgpu: t.pgpu,
                    slot: t.slot,
                },
                activity: Activity::Transfer,
                start_s: t.setup_start_s,
                end_s: t.end_s,
            });
        }
    }
    for &(pgpu, slot, start, end) in &kernels {
        intervals.push(Interval {
            entity: Entity::VGpu { pgpu, slot },
            activity: Activity::Compute,
            start_s: start,
            end_s: end,
        });
        intervals.push(Interval {
            entity: Entity::PGpu(pgpu),
            activity: Activity::Compute,
            start_s: start,
            end_s: end,
        });
    }
    match scenario.transfer_mode {
        TransferMode::Sequential => {
            // the link carries setup and payload back to back per transfer
            for t in &transfers {
                if t.end_s > t.setup_start_s {
                    intervals.push(Interval {
                        entity: Entity::Link,
                        activity: Activity::Transfer,
                        start_s: t.setup_start_s,
                        end_s: t.end_s,
                    });
                }
            }
        }
        TransferMode::Concurrent => {
            // the link is busy from first payload start to last end
            let start = transfers
                .iter()
                .filter(|t| t.payload_bytes > 0.0)
                .map(|t| t.payload_start_s)
                .min_by(f64::total_cmp);
            let end = transfers
                .iter()
                .filter(|t| t.payload_bytes > 0.0)
                .map(|t| t.end_s)
                .max_by(f64::total_cmp);
            if let (Some(start_s), Some(end_s)) = (start, end) {
                if end_s > start_s {
                    intervals.push(Interval {
                        entity: Entity::Link,
                        activity: Activity::Transfer,
                        start_s,
                        end_s,
                    });
                }
            }
        }
    }

    let makespan_s = intervals
        .iter()
        .map(|i| i.end_s)
        .fold(0.0f64, f64::max);

    let mut per_pgpu_busy_compute_s = vec![0.0f64; p as usize];
    for &(pgpu, _, start, end) in &kernels {
        per_pgpu_busy_compute_s[pgpu as usize] += end - start;
    }
    let energy_ws: f64 = per_pgpu_busy_compute_s
        .iter()
        .map(|&busy| {
            busy * scenario.power.computing_watts
                + (makespan_s - busy) * scenario.power.idle_or_receiving_watts
        })
        .sum();
    let utilization_per_pgpu: Vec<f64> = per_pgpu_busy_compute_s
        .iter()
        .map(|&busy| if makespan_s > 0.0 { busy / makespan_s } else { 0.0 })
        .collect();
    let utilization_avg =
        utilization_per_pgpu.iter().sum::<f64>() / utilization_per_pgpu.len() as f64;

    Ok(Timeline {
        intervals,
        makespan_s,
        per_pgpu_busy_compute_s,
        energy_ws,
        utilization_per_pgpu,
        utilization_avg,
        transfers,
    })
}

/// Per-transfer attained bandwidth, in wave order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandwidthRow {
    pub pgpu: u32,
    pub slot: u32,
    pub payload_bytes: f64,
    pub average_bandwidth_bps: f64,
}

/// Average attained bandwidth of every transfer in the scenario.
pub fn attained_bandwidth_report(scenario: &SimScenario) -> Result<Vec<BandwidthRow>, SimError> {
    let timeline = simulate(scenario)?;
    Ok(timeline
        .transfers
        .iter()
        .map(|t| BandwidthRow {
            pgpu: t.pgpu,
            slot: t.slot,
            payload_bytes: t.payload_bytes,
            average_bandwidth_bps: t.average_bandwidth_bps,
        })
        .collect())
}

/// Aggregate figures of a run, for JSON export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineSummary {
    pub makespan_s: f64,
    pub energy_ws: f64,
    pub utilization_avg: f64,
    pub per_pgpu: Vec<PgpuSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PgpuSummary {
    pub pgpu: u32,
    pub busy_compute_s: f64,
    pub utilization: f64,
}

impl Timeline {
    pub fn summary(&self) -> TimelineSummary {
        TimelineSummary {
            makespan_s: self.makespan_s,
            energy_ws: self.energy_ws,
            utilization_avg: self.utilization_avg,
            per_pgpu: self
                .per_pgpu_busy_compute_s
                .iter()
                .zip(&self.utilization_per_pgpu)
                .enumerate()
                .map(|(pgpu, (&busy_compute_s, &utilization))| PgpuSummary {
                    pgpu: pgpu as u32,
                    busy_compute_s,
                    utilization,
                })
                .collect(),
        }
    }
}

/// Writes the busy intervals as `entity,activity,start_s,end_s` CSV.
pub fn timeline_to_csv<W: std::io::Write>(w: &mut W, timeline: &Timeline) -> std::io::Result<()> {
    writeln!(w, "entity,activity,start_s,end_s")?;
    for interval in &timeline.intervals {
        writeln!(
            w,
            "{},{},{},{}",
            interval.entity, interval.activity, interval.start_s, interval.end_s
        )?;
    }
    Ok(())
}
