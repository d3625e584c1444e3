//! Aggregate risk analysis on virtualized accelerator clusters.
//!
//! The crate bundles three cooperating pieces:
//!
//! * a catastrophe-loss engine ([`risk`], [`engine`], [`datagen`]) that nets
//!   simulated event trials against layered financial terms and reduces the
//!   resulting year loss table to portfolio risk metrics;
//! * a discrete-event simulator ([`sim`]) of physical accelerators hosting
//!   virtual device contexts that are fed through one shared transfer link;
//! * closed-form execution-time and energy models ([`model`]) with a grid
//!   planner ([`plan`]) that ranks deployment configurations.
//!
//! The simulator and the analytic models describe the same machine, and on
//! constant-bandwidth zero-setup scenarios they agree to floating-point
//! accuracy; the test suites lean on that cross-check heavily.

pub mod datagen;
pub mod engine;
pub mod model;
pub mod plan;
pub mod power;
pub mod risk;
pub mod sim;
