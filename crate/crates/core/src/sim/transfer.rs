//! Link bandwidth model and transfer scheduling.
//!
//! The link serves transfers at a piecewise-constant bandwidth keyed by the
//! transfer's total payload size (small payloads attain less than the wire
//! rate). Concurrent transfers share the link equally: with `n` active
//! transfers each proceeds at `1/n` of its profile bandwidth, re-evaluated
//! whenever a transfer starts or finishes. An optional aggregate cap models
//! a shared memory controller instead of a network link.

use serde::{Deserialize, Serialize};

use super::SimError;

/// One step of the bandwidth profile: payloads up to `up_to_bytes` attain
/// `bytes_per_sec`. The final band must leave `up_to_bytes` unset to cover
/// arbitrarily large payloads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthBand {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up_to_bytes: Option<f64>,
    pub bytes_per_sec: f64,
}

/// Piecewise-constant bandwidth profile plus the equal-share contention
/// rule, optionally capped in aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub bands: Vec<BandwidthBand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate_cap_bps: Option<f64>,
}

impl LinkModel {
    /// Single open-ended band: every payload attains `bytes_per_sec`.
    pub fn constant(bytes_per_sec: f64) -> Self {
        Self {
            bands: vec![BandwidthBand {
                up_to_bytes: None,
                bytes_per_sec,
            }],
            aggregate_cap_bps: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.bands.is_empty() {
            return Err(SimError::InvalidScenario(
                "link needs at least one bandwidth band".into(),
            ));
        }
        let mut prev = 0.0;
        for (i, band) in self.bands.iter().enumerate() {
            if !(band.bytes_per_sec > 0.0 && band.bytes_per_sec.is_finite()) {
                return Err(SimError::InvalidScenario(format!(
                    "band {i} bandwidth must be positive, got {}",
                    band.bytes_per_sec
                )));
            }
            match band.up_to_bytes {
                Some(limit) => {
                    if i + 1 == self.bands.len() {
                        return Err(SimError::InvalidScenario(
                            "final bandwidth band must be open-ended".into(),
                        ));
                    }
                    if !(limit > prev && limit.is_finite()) {
                        return Err(SimError::InvalidScenario(format!(
                            "band {i} limit {limit} must exceed the previous limit {prev}"
                        )));
                    }
                    prev = limit;
                }
                None => {
                    if i + 1 != self.bands.len() {
                        return Err(SimError::InvalidScenario(format!(
                            "band {i} is open-ended but not last"
                        )));
                    }
                }
            }
        }
        if let Some(cap) = self.aggregate_cap_bps {
            if !(cap > 0.0 && cap.is_finite()) {
                return Err(SimError::InvalidScenario(format!(
                    "aggregate cap must be positive, got {cap}"
                )));
            }
        }
        Ok(())
    }

    /// Profile bandwidth for a transfer of the given total size.
    pub fn bandwidth_for(&self, payload_bytes: f64) -> f64 {
        for band in &self.bands {
            match band.up_to_bytes {
                Some(limit) if payload_bytes > limit => continue,
                _ => return band.bytes_per_sec,
            }
        }
        self.bands.last().expect("validated non-empty").bytes_per_sec
    }

    /// Profile bandwidth clamped by the aggregate cap.
    pub fn effective_bandwidth(&self, payload_bytes: f64) -> f64 {
        let bw = self.bandwidth_for(payload_bytes);
        match self.aggregate_cap_bps {
            Some(cap) => bw.min(cap),
            None => bw,
        }
    }
}

/// One requested device load: a fixed setup latency followed by the
/// payload proper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferRequest {
    pub payload_bytes: f64,
    pub setup_s: f64,
}

/// A span of constant attained rate within one transfer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub bytes_per_sec: f64,
}

/// One transfer placed on the timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledTransfer {
    pub payload_bytes: f64,
    /// When the setup latency begins.
    pub setup_start_s: f64,
    /// When payload bytes start moving (setup done).
    pub payload_start_s: f64,
    pub end_s: f64,
    pub segments: Vec<RateSegment>,
}

impl ScheduledTransfer {
    /// Payload bytes over payload wall time; zero for empty transfers.
    pub fn average_bandwidth_bps(&self) -> f64 {
        let duration = self.end_s - self.payload_start_s;
        if duration > 0.0 {
            self.payload_bytes / duration
        } else {
            0.0
        }
    }
}

fn push_segment(segments: &mut Vec<RateSegment>, start_s: f64, end_s: f64, bytes_per_sec: f64) {
    if end_s <= start_s {
        return;
    }
    if let Some(last) = segments.last_mut() {
        if last.bytes_per_sec == bytes_per_sec && last.end_s == start_s {
            last.end_s = end_s;
            return;
        }
    }
    segments.push(RateSegment {
        start_s,
        end_s,
        bytes_per_sec,
    });
}

/// Runs the requests one at a time at full profile bandwidth, in order;
/// each setup occupies the link before its payload moves.
pub fn schedule_sequential(requests: &[TransferRequest], link: &LinkModel) -> Vec<ScheduledTransfer> {
    let mut out = Vec::with_capacity(requests.len());
    let mut clock = 0.0f64;
    for req in requests {
        let setup_start_s = clock;
        let payload_start_s = setup_start_s + req.setup_s;
        let mut segments = Vec::new();
        let end_s = if req.payload_bytes > 0.0 {
            let rate = link.effective_bandwidth(req.payload_bytes);
            let end = payload_start_s + req.payload_bytes / rate;
            push_segment(&mut segments, payload_start_s, end, rate);
            end
        } else {
            payload_start_s
        };
        out.push(ScheduledTransfer {
            payload_bytes: req.payload_bytes,
            setup_start_s,
            payload_start_s,
            end_s,
            segments,
        });
        clock = end_s;
    }
    out
}

/// Starts every setup at `t = 0` (off the link) and shares the link
/// equally among the transfers whose setups have finished, integrating
/// remaining bytes piecewise between rate-change events.
pub fn schedule_concurrent(requests: &[TransferRequest], link: &LinkModel) -> Vec<ScheduledTransfer> {
    struct Live {
        remaining: f64,
        starts_at: f64,
        done: bool,
    }

    let mut out: Vec<ScheduledTransfer> = requests
        .iter()
        .map(|req| ScheduledTransfer {
            payload_bytes: req.payload_bytes,
            setup_start_s: 0.0,
            payload_start_s: req.setup_s,
            end_s: req.setup_s,
            segments: Vec::new(),
        })
        .collect();
    let mut live: Vec<Live> = requests
        .iter()
        .map(|req| Live {
            remaining: req.payload_bytes,
            starts_at: req.setup_s,
            done: req.payload_bytes <= 0.0,
        })
        .collect();

    let mut clock = 0.0f64;
    loop {
        let active: Vec<usize> = live
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.done && l.starts_at <= clock)
            .map(|(i, _)| i)
            .collect();
        if active.is_empty() {
            // jump to the next setup completion, if any transfer is left
            match live
                .iter()
                .filter(|l| !l.done && l.starts_at > clock)
                .map(|l| l.starts_at)
                .min_by(f64::total_cmp)
            {
                Some(next) => {
                    clock = next;
                    continue;
                }
                None => break,
            }
        }

        let n_active = active.len() as f64;
        let rate_of = |i: usize| link.effective_bandwidth(requests[i].payload_bytes) / n_active;
        // next event: earliest completion at current rates, or the next
        // setup completion changing the active set
        let earliest_completion = active
            .iter()
            .map(|&i| live[i].remaining / rate_of(i))
            .min_by(f64::total_cmp)
            .expect("non-empty active set");
        let next_activation = live
            .iter()
            .filter(|l| !l.done && l.starts_at > clock)
            .map(|l| l.starts_at - clock)
            .min_by(f64::total_cmp);
        let dt = match next_activation {
            Some(gap) if gap < earliest_completion => gap,
            _ => earliest_completion,
        };

        for &i in &active {
            let rate = rate_of(i);
            // completion decided before the subtraction so simultaneous
            // finishers all close in this step
            if live[i].remaining / rate <= dt * (1.0 + 1e-12) {
                let end = clock + live[i].remaining / rate;
                push_segment(&mut out[i].segments, clock, end, rate);
                out[i].end_s = end;
                live[i].remaining = 0.0;
                live[i].done = true;
            } else {
                push_segment(&mut out[i].segments, clock, clock + dt, rate);
                live[i].remaining -= rate * dt;
            }
        }
        clock += dt;
    }
    out
}
