//! Per-class performance of an M/G/m queue with preemptive-resume priorities,
//! LIFO order within each class and first-come first-displaced preemption.
//!
//! * [`analytic`]: Erlang C, the closed-form approximation for general
//!   service laws and the two exact special cases (one server; exponential
//!   service with a common rate).
//! * [`sim`]: an event-driven simulator of the same discipline.
//! * [`stats`]: independent replications and confidence intervals.
//! * [`scenario`] and [`cli`]: scenario files and the `mgm-prio` command.

pub mod analytic;
pub mod cli;
pub mod dist;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod stats;

pub use analytic::{
    approx_metrics, check_identities, erlang_c, exact_mmm_identical, exact_single_channel, loads,
    ClassMetrics, ClassSpec, LoadProfile, Metric, Mode, SystemModel,
};
pub use dist::ServiceDistribution;
pub use sim::{JobRecord, PolicyConfig, RunConfig, TraceArrival, TraceInput, WithinClassOrder, Workload};
pub use stats::{compare, replicate, SimulationReport};
