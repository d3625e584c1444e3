//! Closed-form execution-time, energy, and memory models for running the
//! analysis on remote virtual GPUs.
//!
//! The transfer model is linear in the number of attached GPUs: every GPU
//! pays a fixed per-device cost (allocation, small control structures, the
//! two replicated input blocks) while the large split block crosses the
//! link once in total. Computation scales perfectly with the number of
//! GPUs. Multi-tenancy overlaps one tenant's transfer with the others'
//! kernels; the attainable total is the worse of the fully-overlapped and
//! serialized bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::power::PowerProfile;

/// Errors from model parameter validation or evaluation.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("gpu count must be at least 1")]
    ZeroGpus,
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("total time {total_time_s}s fell below the per-GPU compute time {compute_s}s")]
    Inconsistent { total_time_s: f64, compute_s: f64 },
}

fn default_device_memory_mb() -> f64 {
    4799.0
}

fn default_app_memory_mb() -> f64 {
    4484.0
}

/// Measured timing constants for one interconnect, plus device memory and
/// power characteristics.
///
/// The five transfer constants describe a benchmark workload: allocation,
/// a burst of sub-100-byte structures (lumped, since tiny transfers all hit
/// the same bandwidth floor), a 4 MB block, a 120 MB block, and a 4 GB
/// block. The first four repeat per attached GPU; the 4 GB block is split
/// across GPUs so its total transfer time stays constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Kernel time of the whole workload on a single GPU, seconds.
    pub computation_time_1pgpu: f64,
    pub t_cudamalloc: f64,
    pub t_small_transfers: f64,
    pub t_transfer_4mb: f64,
    pub t_transfer_120mb: f64,
    pub t_transfer_4gb: f64,
    #[serde(default = "default_device_memory_mb")]
    pub device_memory_mb: f64,
    /// Application footprint measured with four tenants on one device, MiB.
    /// Doubles as the usable-capacity bound: the measurement saturated the
    /// device, so anything above it would not fit.
    #[serde(default = "default_app_memory_mb")]
    pub app_memory_at_4vgpus_mb: f64,
    #[serde(default)]
    pub power: PowerProfile,
}

impl ModelParams {
    /// QDR InfiniBand constants.
    pub fn qdr() -> Self {
        Self {
            computation_time_1pgpu: 9.55,
            t_cudamalloc: 0.00267,
            t_small_transfers: 0.0048,
            t_transfer_4mb: 0.00133,
            t_transfer_120mb: 0.036,
            t_transfer_4gb: 1.171,
            device_memory_mb: default_device_memory_mb(),
            app_memory_at_4vgpus_mb: default_app_memory_mb(),
            power: PowerProfile::default(),
        }
    }

    /// FDR InfiniBand constants.
    pub fn fdr() -> Self {
        Self {
            computation_time_1pgpu: 9.55,
            t_cudamalloc: 0.0027,
            t_small_transfers: 0.0028,
            t_transfer_4mb: 0.00079,
            t_transfer_120mb: 0.0205,
            t_transfer_4gb: 0.67,
            device_memory_mb: default_device_memory_mb(),
            app_memory_at_4vgpus_mb: default_app_memory_mb(),
            power: PowerProfile::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let times = [
            ("computation_time_1pgpu", self.computation_time_1pgpu),
            ("t_cudamalloc", self.t_cudamalloc),
            ("t_small_transfers", self.t_small_transfers),
            ("t_transfer_4mb", self.t_transfer_4mb),
            ("t_transfer_120mb", self.t_transfer_120mb),
            ("t_transfer_4gb", self.t_transfer_4gb),
        ];
        for (name, value) in times {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParams(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        for (name, value) in [
            ("device_memory_mb", self.device_memory_mb),
            ("app_memory_at_4vgpus_mb", self.app_memory_at_4vgpus_mb),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParams(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        self.power.validate().map_err(ModelError::InvalidParams)
    }

    /// Parses a full parameter document; memory and power fields fall back
    /// to the reference-device defaults.
    pub fn from_json(doc: &str) -> Result<Self, ModelError> {
        let params: Self = serde_json::from_str(doc)
            .map_err(|e| ModelError::InvalidParams(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    /// Per-GPU share of the transfer cost, seconds.
    fn per_gpu_transfer(&self) -> f64 {
        self.t_cudamalloc + self.t_small_transfers + self.t_transfer_4mb + self.t_transfer_120mb
    }
}

/// Partial parameter document: any subset of the `ModelParams` fields,
/// applied on top of a preset.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsOverlay {
    pub computation_time_1pgpu: Option<f64>,
    pub t_cudamalloc: Option<f64>,
    pub t_small_transfers: Option<f64>,
    pub t_transfer_4mb: Option<f64>,
    pub t_transfer_120mb: Option<f64>,
    pub t_transfer_4gb: Option<f64>,
    pub device_memory_mb: Option<f64>,
    pub app_memory_at_4vgpus_mb: Option<f64>,
    pub power: Option<PowerProfile>,
}

impl ParamsOverlay {
    pub fn from_json(doc: &str) -> Result<Self, ModelError> {
        serde_json::from_str(doc).map_err(|e| ModelError::InvalidParams(e.to_string()))
    }

    /// Overrides the set fields on `base` and validates the result.
    pub fn apply(&self, base: &ModelParams) -> Result<ModelParams, ModelError> {
        let mut params = base.clone();
        macro_rules! overlay {
            ($($field:ident),*) => {
                $(if let Some(value) = self.$field {
                    params.$field = value;
                })*
            };
        }
        overlay!(
            computation_time_1pgpu,
            t_cudamalloc,
            t_small_transfers,
            t_transfer_4mb,
            t_transfer_120mb,
            t_transfer_4gb,
            device_memory_mb,
            app_memory_at_4vgpus_mb
        );
        if let Some(power) = self.power {
            params.power = power;
        }
        params.validate()?;
        Ok(params)
    }
}

/// Which bound wins the max in the multi-tenant total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FullyOverlapped,
    NotFullyOverlapped,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::FullyOverlapped => "fully_overlapped",
            Regime::NotFullyOverlapped => "not_fully_overlapped",
        })
    }
}

/// Input footprint split into the block sharded across GPUs and the blocks
/// replicated onto every GPU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleSizes {
    pub split_bytes: f64,
    pub replicated_bytes: f64,
}

impl BundleSizes {
    /// The benchmark workload the transfer constants were measured with:
    /// a 4 GB split block and 124 MB of replicated tables.
    pub fn reference() -> Self {
        Self {
            split_bytes: 4e9,
            replicated_bytes: 124e6,
        }
    }
}

/// One evaluated deployment point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub n_pgpus: u32,
    pub vgpus_per_pgpu: u32,
    pub t_transfer_s: f64,
    /// Kernel time of one tenant's shard (the per-GPU kernel time).
    pub t_computation_s: f64,
    pub total_time_s: f64,
    pub regime: Regime,
    pub energy_ws: f64,
    pub feasible: bool,
}

/// Kernel time on `n_gpus` GPUs: perfect scaling of the one-GPU time.
pub fn t_computation(n_gpus: u32, params: &ModelParams) -> Result<f64, ModelError> {
    if n_gpus == 0 {
        return Err(ModelError::ZeroGpus);
    }
    Ok(params.computation_time_1pgpu / n_gpus as f64)
}

/// Input transfer time onto `n_gpus` GPUs: per-GPU setup and replicated
/// blocks repeat `n` times, the split block crosses the link once.
pub fn t_transfer(n_gpus: u32, params: &ModelParams) -> Result<f64, ModelError> {
    if n_gpus == 0 {
        return Err(ModelError::ZeroGpus);
    }
    Ok(n_gpus as f64 * params.per_gpu_transfer() + params.t_transfer_4gb)
}

/// Total execution time with `p` physical GPUs hosting `v` tenants each.
///
/// With `V = p*v` virtual GPUs, the fully-overlapped bound hides each
/// tenant's transfer behind the other tenants' kernels
/// (`t_transfer(V)/v + v*t_computation(V)`), while the serialized bound
/// simply adds one tenant's transfer and kernel
/// (`t_transfer(V) + t_computation(V)`). The attainable total is the max;
/// at `v = 1` the two coincide.
pub fn exec_time_multitenancy(
    p: u32,
    v: u32,
    params: &ModelParams,
) -> Result<Prediction, ModelError> {
    if p == 0 || v == 0 {
        return Err(ModelError::ZeroGpus);
    }
    let n_virtual = p * v;
    let transfer = t_transfer(n_virtual, params)?;
    let kernel = t_computation(n_virtual, params)?;
    let fully = transfer / v as f64 + v as f64 * kernel;
    let not_fully = transfer + kernel;
    let (total_time_s, regime) = if fully > not_fully {
        (fully, Regime::FullyOverlapped)
    } else {
        (not_fully, Regime::NotFullyOverlapped)
    };
    let energy_ws = energy_for_total(p, total_time_s, params)?;
    Ok(Prediction {
        n_pgpus: p,
        vgpus_per_pgpu: v,
        t_transfer_s: transfer,
        t_computation_s: kernel,
        total_time_s,
        regime,
        energy_ws,
        feasible: memory_feasible(p, v, params, &BundleSizes::reference()),
    })
}

fn energy_for_total(p: u32, total_time_s: f64, params: &ModelParams) -> Result<f64, ModelError> {
    let compute_s = t_computation(p, params)?;
    if total_time_s < compute_s {
        return Err(ModelError::Inconsistent {
            total_time_s,
            compute_s,
        });
    }
    let busy = compute_s * params.power.computing_watts;
    let idle = (total_time_s - compute_s) * params.power.idle_or_receiving_watts;
    Ok(p as f64 * (busy + idle))
}

/// Energy of the whole run in watt-seconds: every physical GPU draws the
/// computing wattage while its kernel chain runs and the idle/receiving
/// wattage for the rest of the makespan.
pub fn energy(p: u32, v: u32, params: &ModelParams) -> Result<f64, ModelError> {
    Ok(exec_time_multitenancy(p, v, params)?.energy_ws)
}

const MIB: f64 = 1024.0 * 1024.0;

/// Fixed per-tenant overhead in MiB, calibrated so the reference workload
/// on one device with four tenants lands exactly on the measured
/// application footprint.
fn fixed_overhead_mib(params: &ModelParams) -> f64 {
    let reference = BundleSizes::reference();
    let split = reference.split_bytes / MIB;
    let replicated = reference.replicated_bytes / MIB;
    ((params.app_memory_at_4vgpus_mb - split - 4.0 * replicated) / 4.0).max(0.0)
}

/// Whether `v` tenants per device fit in device memory.
///
/// Each tenant holds its `1/V` share of the split block, a full copy of
/// the replicated blocks, and the calibrated fixed overhead. The usable
/// capacity is the measured saturation footprint rather than the raw
/// device size, which reserves the difference for the driver and runtime.
pub fn memory_feasible(p: u32, v: u32, params: &ModelParams, sizes: &BundleSizes) -> bool {
    if p == 0 || v == 0 {
        return false;
    }
    let n_virtual = (p * v) as f64;
    let split_mib = sizes.split_bytes / MIB;
    let replicated_mib = sizes.replicated_bytes / MIB;
    let per_device_mib =
        v as f64 * (split_mib / n_virtual + replicated_mib + fixed_overhead_mib(params));
    let capacity = params.app_memory_at_4vgpus_mb.min(params.device_memory_mb);
    per_device_mib <= capacity * (1.0 + 1e-9)
}
