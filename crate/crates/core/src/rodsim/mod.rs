//! Reduced-order fuel-rod simulator used as the reference oracle, together
//! with the operating-schedule builder and QoI extraction.

mod config;
mod history;
mod qoi;
mod simulate;
mod spec;

pub use config::{SimConfig, SIM_CONFIG_VERSION};
pub use history::{
    chopped_cosine, make_startup_ramp, ramp_fraction, rescale_profile, PowerHistory, PowerSegment,
    ScheduleTemplate, SteadyWindow, RAMP_HOURS, SHUTDOWN_DAYS,
};
pub(crate) use history::max_of;
pub use qoi::{extract_qois, QoiId, QoiVector};
pub use simulate::{burnup_rate, simulate_rod, RodTrace};
pub use spec::{Alloy, RodSpec, IFBA_FILL_PRESSURE, NON_IFBA_FILL_PRESSURE};
