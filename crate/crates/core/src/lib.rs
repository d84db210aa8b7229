//! Surrogate construction for full-core fuel-rod performance analysis.
//!
//! The crate bundles a reduced-order rod simulator ([`rodsim`]), the PCI
//! cumulative-damage risk model ([`pci_risk`]), (LHGR, burnup) look-up tables
//! ([`lut`]), rule-based polynomial features of power histories
//! ([`features`]), an extended space-filling training design ([`doe`]), a set
//! of regression models ([`ml`]), evaluation metrics ([`eval`]) and the
//! end-to-end workflows ([`pipeline`]).

pub mod doe;
pub mod error;
pub mod eval;
pub mod features;
pub mod lut;
pub mod ml;
pub mod pci_risk;
pub mod pipeline;
pub mod rodsim;

pub use error::{Error, Result};
pub use pci_risk::{PciRisk, PciRiskEngine};
pub use rodsim::{
    extract_qois, simulate_rod, Alloy, PowerHistory, QoiId, QoiVector, RodSpec, RodTrace, ScheduleTemplate,
    SimConfig,
};
