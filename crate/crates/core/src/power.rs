//! Two-state device power profile shared by the simulator and the models.
//!
//! Energy accounting distinguishes exactly two device states: a kernel is
//! executing, or it is not (idle and receiving data draw the same power, and
//! receiving while computing does not add to the computing draw).

use serde::{Deserialize, Serialize};

/// Power draw of one physical device in each of the two accounted states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    /// Watts drawn while idle or receiving data.
    #[serde(default = "default_idle_watts")]
    pub idle_or_receiving_watts: f64,
    /// Watts drawn while a kernel executes.
    #[serde(default = "default_computing_watts")]
    pub computing_watts: f64,
}

fn default_idle_watts() -> f64 {
    47.0
}

fn default_computing_watts() -> f64 {
    102.0
}

impl Default for PowerProfile {
    fn default() -> Self {
        Self {
            idle_or_receiving_watts: default_idle_watts(),
            computing_watts: default_computing_watts(),
        }
    }
}

impl PowerProfile {
    /// Checks `0 < idle <= computing`.
    pub fn validate(&self) -> Result<(), String> {
        if self.idle_or_receiving_watts.is_nan() || self.idle_or_receiving_watts <= 0.0 {
            return Err(format!(
                "idle_or_receiving_watts must be positive, got {}",
                self.idle_or_receiving_watts
            ));
        }
        if self.computing_watts.is_nan() || self.computing_watts < self.idle_or_receiving_watts {
            return Err(format!(
                "computing_watts ({}) must be at least idle_or_receiving_watts ({})",
                self.computing_watts, self.idle_or_receiving_watts
            ));
        }
        Ok(())
    }
}
