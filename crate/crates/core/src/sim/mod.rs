//! Slot-level simulation of the tandem cascade and the estimators run on
//! its traces.

mod arrivals;
mod estimators;
mod rng;
mod tandem;

pub use arrivals::{next_arrival, ArrivalState};
pub use estimators::{
    batch_means_se, empirical_failure_ratio, empirical_velocity, fit_waiting_geometric,
    fit_waiting_geometric_spaced, max_abs_correlation, waiting_independence, FailureRatio,
    GeometricFit, SimError, VelocityDefinition,
};
pub use rng::{RngStream, ARRIVAL_STREAM, PROFILE_STREAM, SERVICE_STREAM, STREAMS_PER_REPLICATION};
pub use tandem::{
    realize_links, simulate_tandem, simulate_tandem_with, write_trace, PacketRecord, SimOptions,
    TraceStats,
};
