//! Loss-table domain types and the per-trial loss computation.
//!
//! A [`Trial`] is one simulated year of event occurrences, ordered by
//! timestamp. Event loss tables map event ids to monetary losses; a
//! [`Layer`] groups loss tables under occurrence and aggregate financial
//! terms. [`trial_loss`] nets one trial against one layer:
//!
//! 1. per event, look the event up in every referenced loss table, apply the
//!    table's own terms, and sum the contributions (a missing event reads as
//!    zero loss);
//! 2. pass each event's combined loss through the layer's occurrence terms;
//! 3. accumulate the occurrence-net values over the trial and pass the sum
//!    through the layer's aggregate terms.
//!
//! Summation order is fixed (event order, then table-reference order) so
//! results are bitwise reproducible no matter how work is scheduled.

use thiserror::Error;

/// Structural errors raised while building or resolving loss tables.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum RiskError {
    /// An event id in a loss table exceeds the declared dense-table bound.
    #[error("loss table {elt_id}: event id {event_id} exceeds max_event_id {max_event_id}")]
    EventIdOutOfRange {
        elt_id: u32,
        event_id: u32,
        max_event_id: u32,
    },
    /// Event ids must be 1-based.
    #[error("loss table {elt_id}: event id 0 is not a valid id")]
    ZeroEventId { elt_id: u32 },
    /// Loss-table keys must be unique.
    #[error("loss table {elt_id}: duplicate entry for event id {event_id}")]
    DuplicateEvent { elt_id: u32, event_id: u32 },
    /// Losses are monetary amounts and cannot be negative.
    #[error("loss table {elt_id}: negative loss for event id {event_id}")]
    NegativeLoss { elt_id: u32, event_id: u32 },
    /// A layer references a loss table that is not in the bundle.
    #[error("layer references unknown loss table id {elt_id}")]
    UnknownElt { elt_id: u32 },
    /// Retentions must be non-negative and limits positive.
    #[error("invalid financial terms: {0}")]
    InvalidTerms(String),
}

// ── Domain types ──

/// One event occurrence inside a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventOccurrence {
    /// Catalogue event id, 1-based.
    pub event_id: u32,
    /// Fractional-year timestamp in `[0, 1]`.
    pub timestamp: f32,
}

/// One simulated year: an ordered sequence of event occurrences.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    /// 1-based trial id, unique within a table.
    pub trial_id: u32,
    /// Occurrences sorted by ascending timestamp.
    pub events: Vec<EventOccurrence>,
}

/// The full set of pre-simulated trials.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct YearEventTable {
    pub trials: Vec<Trial>,
}

/// Retention/limit pair applied to a single loss value.
///
/// `apply` computes `min(max(loss - retention, 0), limit)`. The default is
/// the identity pair (retention 0, unbounded limit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerEltTerms {
    pub occ_retention: f64,
    pub occ_limit: f64,
}

impl Default for PerEltTerms {
    fn default() -> Self {
        Self {
            occ_retention: 0.0,
            occ_limit: f64::INFINITY,
        }
    }
}

impl PerEltTerms {
    /// Nets a looked-up loss against this table's own terms.
    pub fn apply(&self, loss: f64) -> f64 {
        net(loss, self.occ_retention, self.occ_limit)
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        validate_pair("per-table occurrence", self.occ_retention, self.occ_limit)
    }
}

/// Map from event id to loss for one exposure set, plus the table's own
/// financial terms.
///
/// `losses` is kept sorted by event id with unique keys; that is the
/// canonical (and serialized) form.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLossTable {
    /// 1-based table id, unique within a bundle.
    pub elt_id: u32,
    /// `(event_id, loss)` pairs sorted by event id, keys unique, losses >= 0.
    pub losses: Vec<(u32, f64)>,
    /// Terms applied to each lookup before losses are combined across tables.
    pub terms: PerEltTerms,
}

/// Occurrence and aggregate retention/limit terms of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerTerms {
    /// Retention subtracted from each event's combined loss.
    pub occ_retention: f64,
    /// Cap on each event's combined loss after retention.
    pub occ_limit: f64,
    /// Retention subtracted from the trial's accumulated loss.
    pub agg_retention: f64,
    /// Cap on the trial's accumulated loss after retention.
    pub agg_limit: f64,
}

impl Default for LayerTerms {
    fn default() -> Self {
        Self {
            occ_retention: 0.0,
            occ_limit: f64::INFINITY,
            agg_retention: 0.0,
            agg_limit: f64::INFINITY,
        }
    }
}

impl LayerTerms {
    pub fn validate(&self) -> Result<(), RiskError> {
        validate_pair("occurrence", self.occ_retention, self.occ_limit)?;
        validate_pair("aggregate", self.agg_retention, self.agg_limit)
    }
}

/// A layer: a set of loss-table references covered under one set of terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Referenced loss-table ids; non-empty.
    pub elt_refs: Vec<u32>,
    pub terms: LayerTerms,
}

/// A group of layers priced together.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub layers: Vec<Layer>,
}

/// A group of programs; the unit the engine analyses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Portfolio {
    pub programs: Vec<Program>,
}

/// One net loss per trial; the analysis output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct YearLossTable {
    /// `(trial_id, loss)` in trial order.
    pub losses: Vec<(u32, f64)>,
}

// ── Term application ──

fn net(loss: f64, retention: f64, limit: f64) -> f64 {
    (loss - retention).max(0.0).min(limit)
}

fn validate_pair(what: &str, retention: f64, limit: f64) -> Result<(), RiskError> {
    if retention.is_nan() || retention < 0.0 {
        return Err(RiskError::InvalidTerms(format!(
            "{what} retention must be non-negative, got {retention}"
        )));
    }
    if limit.is_nan() || limit <= 0.0 {
        return Err(RiskError::InvalidTerms(format!(
            "{what} limit must be positive, got {limit}"
        )));
    }
    Ok(())
}

/// Nets one event's combined loss against the layer's occurrence terms.
///
/// Returns `min(max(loss - occ_retention, 0), occ_limit)`.
pub fn apply_occurrence_terms(loss: f64, terms: &LayerTerms) -> f64 {
    net(loss, terms.occ_retention, terms.occ_limit)
}

/// Nets a trial's accumulated loss against the layer's aggregate terms.
///
/// Returns `min(max(loss - agg_retention, 0), agg_limit)`.
pub fn apply_aggregate_terms(loss: f64, terms: &LayerTerms) -> f64 {
    net(loss, terms.agg_retention, terms.agg_limit)
}

// ── Dense lookup ──

/// Direct-access form of an [`EventLossTable`]: O(1) lookup by event id.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseElt {
    pub elt_id: u32,
    pub terms: PerEltTerms,
    table: Vec<f64>,
}

impl DenseElt {
    /// Loss for `event_id`; ids absent from the table (including ids beyond
    /// the densified range) read as zero.
    #[inline]
    pub fn lookup(&self, event_id: u32) -> f64 {
        self.table.get(event_id as usize).copied().unwrap_or(0.0)
    }
}

/// Densifies a loss table over event ids `1..=max_event_id`.
///
/// Fails if the table holds an id of 0, an id beyond `max_event_id`, a
/// duplicate id, or a negative loss.
pub fn direct_access_table(elt: &EventLossTable, max_event_id: u32) -> Result<DenseElt, RiskError> {
    elt.terms.validate()?;
    let mut table = vec![0.0; max_event_id as usize + 1];
    let mut seen = vec![false; max_event_id as usize + 1];
    for &(event_id, loss) in &elt.losses {
        if event_id == 0 {
            return Err(RiskError::ZeroEventId { elt_id: elt.elt_id });
        }
        if event_id > max_event_id {
            return Err(RiskError::EventIdOutOfRange {
                elt_id: elt.elt_id,
                event_id,
                max_event_id,
            });
        }
        if seen[event_id as usize] {
            return Err(RiskError::DuplicateEvent {
                elt_id: elt.elt_id,
                event_id,
            });
        }
        if loss.is_nan() || loss < 0.0 {
            return Err(RiskError::NegativeLoss {
                elt_id: elt.elt_id,
                event_id,
            });
        }
        seen[event_id as usize] = true;
        table[event_id as usize] = loss;
    }
    Ok(DenseElt {
        elt_id: elt.elt_id,
        terms: elt.terms,
        table,
    })
}

/// Resolved, densified loss tables keyed by id.
#[derive(Debug, Default)]
pub struct EltIndex {
    tables: std::collections::HashMap<u32, DenseElt>,
}

impl EltIndex {
    /// Densifies every table over `1..=max_event_id`.
    pub fn build(elts: &[EventLossTable], max_event_id: u32) -> Result<Self, RiskError> {
        let mut tables = std::collections::HashMap::with_capacity(elts.len());
        for elt in elts {
            tables.insert(elt.elt_id, direct_access_table(elt, max_event_id)?);
        }
        Ok(Self { tables })
    }

    /// Resolves a layer's table references, in reference order.
    pub fn resolve(&self, layer: &Layer) -> Result<Vec<&DenseElt>, RiskError> {
        layer
            .elt_refs
            .iter()
            .map(|&elt_id| {
                self.tables
                    .get(&elt_id)
                    .ok_or(RiskError::UnknownElt { elt_id })
            })
            .collect()
    }
}

// ── Trial loss ──

/// Nets one trial against one layer's terms, given the layer's resolved
/// loss tables in reference order.
///
/// Pure and total on valid inputs; safe to call from many workers on shared
/// data. Summation follows the trial's event order, then the table order.
pub fn trial_loss(trial: &Trial, terms: &LayerTerms, elts: &[&DenseElt]) -> f64 {
    let mut aggregate = 0.0;
    for ev in &trial.events {
        let mut event_loss = 0.0;
        for elt in elts {
            event_loss += elt.terms.apply(elt.lookup(ev.event_id));
        }
        aggregate += apply_occurrence_terms(event_loss, terms);
    }
    apply_aggregate_terms(aggregate, terms)
}

/// Resolves a layer against an index and nets the trial; errors before any
/// computation if a reference is unknown.
pub fn layer_trial_loss(trial: &Trial, layer: &Layer, index: &EltIndex) -> Result<f64, RiskError> {
    let resolved = index.resolve(layer)?;
    Ok(trial_loss(trial, &layer.terms, &resolved))
}

/// Sums the trial's net loss over every layer of every program.
pub fn portfolio_trial_loss(
    trial: &Trial,
    portfolio: &Portfolio,
    index: &EltIndex,
) -> Result<f64, RiskError> {
    let mut total = 0.0;
    for program in &portfolio.programs {
        for layer in &program.layers {
            total += layer_trial_loss(trial, layer, index)?;
        }
    }
    Ok(total)
}
