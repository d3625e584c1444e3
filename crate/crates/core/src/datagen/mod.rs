//! Deterministic synthetic generation of analysis bundles, plus file I/O.
//!
//! Generation is a pure function of [`GenSpec`]: the seed drives one
//! counter-based ChaCha12 generator per structure (stream 0 for the trial
//! table, 1 for the loss tables, 2 for the portfolio), so regenerating with
//! the same spec reproduces the bundle bit for bit, and editing one
//! structure's parameters does not disturb the others' draws.
//!
//! Byte accounting matters here: the serialized size of each structure feeds
//! the transfer models, so [`DatasetBundle::byte_sizes`] always equals the
//! exact section payload sizes the container writer emits (see
//! [`container`]), and [`predicted_sizes`] gives the expected sizes of a
//! spec without materializing it.

pub mod container;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::risk::{
    EventLossTable, EventOccurrence, Layer, LayerTerms, PerEltTerms, Portfolio, Program, Trial,
    YearEventTable,
};

/// Validation errors for generation specs.
#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("invalid generation spec: {0}")]
    InvalidSpec(String),
}

/// Loss severity distribution for generated loss tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossDistribution {
    /// Uniform on `[lo, hi)` (degenerate constant when `lo == hi`).
    Uniform { lo: f64, hi: f64 },
    /// `exp(N(mu, sigma^2))`; the usual heavy-tailed severity choice.
    Lognormal { mu: f64, sigma: f64 },
}

impl LossDistribution {
    /// Distribution mean; used to scale generated financial terms.
    pub fn mean(&self) -> f64 {
        match *self {
            LossDistribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            LossDistribution::Lognormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        match *self {
            LossDistribution::Uniform { lo, hi } => {
                if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(GenError::InvalidSpec(format!(
                        "uniform loss range [{lo}, {hi}] must satisfy 0 <= lo <= hi < inf"
                    )));
                }
            }
            LossDistribution::Lognormal { mu, sigma } => {
                if !(mu.is_finite() && sigma.is_finite() && sigma >= 0.0) {
                    return Err(GenError::InvalidSpec(format!(
                        "lognormal parameters mu={mu}, sigma={sigma} are invalid"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        match *self {
            LossDistribution::Uniform { lo, hi } => {
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            }
            LossDistribution::Lognormal { mu, sigma } => {
                // new() only fails on non-finite/negative sigma, which
                // validate() rejects.
                rand_distr::LogNormal::new(mu, sigma).unwrap().sample(rng)
            }
        }
    }
}

/// Everything that determines a generated bundle.
///
/// Ranges are inclusive `[min, max]` pairs; the serialized form uses the
/// field names below verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    /// Seed for all generator streams.
    pub seed: u64,
    /// Number of trials in the year event table.
    pub n_trials: u32,
    /// Inclusive range of event occurrences per trial.
    #[serde(default = "default_events_per_trial")]
    pub events_per_trial: (u32, u32),
    /// Number of event loss tables.
    pub n_elts: u32,
    /// Inclusive range of entries per loss table.
    pub losses_per_elt: (u32, u32),
    /// Highest event id that can occur; ids are drawn from `1..=size`.
    pub event_catalogue_size: u32,
    /// Layers in the (single) generated program.
    pub layers_per_program: u32,
    /// Inclusive range of loss-table references per layer.
    #[serde(default = "default_elts_per_layer")]
    pub elts_per_layer: (u32, u32),
    /// Severity distribution for loss-table entries.
    pub loss_distribution: LossDistribution,
}

fn default_events_per_trial() -> (u32, u32) {
    (800, 1500)
}

fn default_elts_per_layer() -> (u32, u32) {
    (3, 30)
}

impl GenSpec {
    pub fn validate(&self) -> Result<(), GenError> {
        fn range_ok(name: &str, (lo, hi): (u32, u32)) -> Result<(), GenError> {
            if lo > hi {
                return Err(GenError::InvalidSpec(format!(
                    "{name} range [{lo}, {hi}] is empty"
                )));
            }
            Ok(())
        }
        for (name, value) in [
            ("n_trials", self.n_trials),
            ("n_elts", self.n_elts),
            ("event_catalogue_size", self.event_catalogue_size),
            ("layers_per_program", self.layers_per_program),
        ] {
            if value == 0 {
                return Err(GenError::InvalidSpec(format!("{name} must be at least 1")));
            }
        }
        range_ok("events_per_trial", self.events_per_trial)?;
        range_ok("losses_per_elt", self.losses_per_elt)?;
        range_ok("elts_per_layer", self.elts_per_layer)?;
        if self.losses_per_elt.1 > self.event_catalogue_size {
            return Err(GenError::InvalidSpec(format!(
                "losses_per_elt max {} exceeds event_catalogue_size {} (entries are distinct)",
                self.losses_per_elt.1, self.event_catalogue_size
            )));
        }
        if self.elts_per_layer.1 > self.n_elts {
            return Err(GenError::InvalidSpec(format!(
                "elts_per_layer max {} exceeds n_elts {} (references are distinct)",
                self.elts_per_layer.1, self.n_elts
            )));
        }
        self.loss_distribution.validate()
    }
}

/// Exact serialized payload size of each structure, in bytes.
///
/// In the transfer models the trial table is the per-device split payload
/// and the loss tables plus portfolio are replicated to every device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteSizes {
    pub yet_bytes: u64,
    pub elt_bytes: u64,
    pub portfolio_bytes: u64,
}

impl ByteSizes {
    /// Bytes divided across devices.
    pub fn split_bytes(&self) -> u64 {
        self.yet_bytes
    }

    /// Bytes replicated to every device.
    pub fn replicated_bytes(&self) -> u64 {
        self.elt_bytes + self.portfolio_bytes
    }
}

/// A generated (or loaded) analysis input set.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub yet: YearEventTable,
    pub elts: Vec<EventLossTable>,
    pub portfolio: Portfolio,
    /// Always equals the container section sizes this bundle serializes to.
    pub byte_sizes: ByteSizes,
    /// Reproduction config echo, carried in the container's META section.
    pub meta: Option<String>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n` distinct ids from `1..=bound`, in draw order.
fn draw_distinct(rng: &mut ChaCha12Rng, n: u32, bound: u32) -> Vec<u32> {
    let mut seen = std::collections::HashSet::with_capacity(n as usize);
    let mut out = Vec::with_capacity(n as usize);
    while out.len() < n as usize {
        let id = rng.random_range(1..=bound);
        if seen.insert(id) {
            out.push(id);
        }
    }
    out
}

/// Generates a bundle deterministically from a spec.
pub fn generate(spec: &GenSpec) -> Result<DatasetBundle, GenError> {
    spec.validate()?;

    let mut rng = stream_rng(spec.seed, 0);
    let (ev_lo, ev_hi) = spec.events_per_trial;
    let mut trials = Vec::with_capacity(spec.n_trials as usize);
    for trial_id in 1..=spec.n_trials {
        let n = rng.random_range(ev_lo..=ev_hi);
        let mut events: Vec<EventOccurrence> = (0..n)
            .map(|_| EventOccurrence {
                event_id: rng.random_range(1..=spec.event_catalogue_size),
                timestamp: rng.random_range(0.0f32..1.0f32),
            })
            .collect();
        // Ties broken by event id so ordering never depends on sort details.
        events.sort_unstable_by(|a, b| {
            a.timestamp
                .partial_cmp(&b.timestamp)
                .unwrap()
                .then(a.event_id.cmp(&b.event_id))
        });
        trials.push(Trial { trial_id, events });
    }
    let yet = YearEventTable { trials };

    let mut rng = stream_rng(spec.seed, 1);
    let (loss_lo, loss_hi) = spec.losses_per_elt;
    let mut elts = Vec::with_capacity(spec.n_elts as usize);
    for elt_id in 1..=spec.n_elts {
        let n = rng.random_range(loss_lo..=loss_hi);
        let ids = draw_distinct(&mut rng, n, spec.event_catalogue_size);
        let mut losses: Vec<(u32, f64)> = ids
            .into_iter()
            .map(|id| (id, spec.loss_distribution.sample(&mut rng)))
            .collect();
        losses.sort_unstable_by_key(|&(id, _)| id);
        elts.push(EventLossTable {
            elt_id,
            losses,
            terms: PerEltTerms::default(),
        });
    }

    let mut rng = stream_rng(spec.seed, 2);
    let (ref_lo, ref_hi) = spec.elts_per_layer;
    let scale = spec.loss_distribution.mean();
    let mut layers = Vec::with_capacity(spec.layers_per_program as usize);
    for _ in 0..spec.layers_per_program {
        let n_refs = rng.random_range(ref_lo..=ref_hi);
        let mut elt_refs = draw_distinct(&mut rng, n_refs, spec.n_elts);
        elt_refs.sort_unstable();
        let terms = if scale > 0.0 {
            LayerTerms {
                occ_retention: rng.random_range(0.0..scale),
                occ_limit: rng.random_range(5.0 * scale..50.0 * scale),
                agg_retention: rng.random_range(0.0..5.0 * scale),
                agg_limit: rng.random_range(20.0 * scale..200.0 * scale),
            }
        } else {
            LayerTerms::default()
        };
        layers.push(Layer { elt_refs, terms });
    }
    let portfolio = Portfolio {
        programs: vec![Program { layers }],
    };

    let byte_sizes = ByteSizes {
        yet_bytes: container::yet_payload_len(&yet),
        elt_bytes: elts.iter().map(container::elt_payload_len).sum(),
        portfolio_bytes: container::portfolio_payload_len(&portfolio),
    };
    Ok(DatasetBundle {
        yet,
        elts,
        portfolio,
        byte_sizes,
        meta: None,
    })
}

/// Expected serialized sizes of a spec, without materializing it.
///
/// Counts drawn from ranges enter at their mean, so the prediction is exact
/// for collapsed ranges and within sampling noise otherwise. Useful for
/// sizing transfer scenarios at scales that will never fit on a desk.
pub fn predicted_sizes(spec: &GenSpec) -> Result<ByteSizes, GenError> {
    spec.validate()?;
    let mean = |(lo, hi): (u32, u32)| 0.5 * (lo as f64 + hi as f64);
    let yet = 4.0 + spec.n_trials as f64 * (8.0 + 8.0 * mean(spec.events_per_trial));
    let elt = spec.n_elts as f64 * (24.0 + 12.0 * mean(spec.losses_per_elt));
    let pf = 8.0 + spec.layers_per_program as f64 * (36.0 + 4.0 * mean(spec.elts_per_layer));
    Ok(ByteSizes {
        yet_bytes: yet.round() as u64,
        elt_bytes: elt.round() as u64,
        portfolio_bytes: pf.round() as u64,
    })
}
