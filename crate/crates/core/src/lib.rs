//! Minimum-novelty control of linear time-varying systems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod factor;
pub mod grid;
pub mod ltv;
pub mod metrics;
pub mod networks;
pub mod novelty_ct;
pub mod novelty_dt;
pub mod signal;
pub mod system;

pub use error::{Error, Result};
pub use grid::Grid;
pub use ltv::{controllability_gramian, state_transition, GramianResult};
pub use novelty_ct::{
    min_energy_control, min_novelty_control, novelty_of, FeasibilityReport, NoveltySolution,
    TransferSpec,
};
pub use signal::ControlSignal;
pub use system::{DtSystem, LtvSystem};
