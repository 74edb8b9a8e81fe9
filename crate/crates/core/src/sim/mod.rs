//! Discrete-event simulation of the M/G/m queue with preemptive-resume
//! priorities, LIFO (or FIFO) order within a class and first-come
//! first-displaced victim selection.
//!
//! Scheduling rules:
//!
//! * An arrival takes an idle server (lowest index) if there is one.
//!   Otherwise it displaces the in-service job with the largest class index
//!   that is not higher-priority than itself (with
//!   [`PolicyConfig::equal_class_preemption`] off, strictly lower priority),
//!   ties broken by earliest arrival and then lowest server index. The victim
//!   keeps its remaining work. If no job qualifies the arrival waits.
//! * A freed server takes the waiting job (fresh or suspended) with the
//!   smallest class index; within a class the latest original arrival under
//!   LIFO, the earliest under FIFO; then insertion order.
//! * Events at the same instant: completions first, then arrivals in the
//!   order they were generated.

mod engine;
mod tally;

use thiserror::Error;

use crate::analytic::SystemModel;

pub use tally::{per_class_raw, write_records_csv, ClassTally, RawEstimates, RECORD_CSV_HEADER};

/// Service order among waiting jobs of one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WithinClassOrder {
    #[default]
    Lifo,
    Fifo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyConfig {
    pub within_class_order: WithinClassOrder,
    /// An arrival may displace a job of its own class.
    pub equal_class_preemption: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            within_class_order: WithinClassOrder::Lifo,
            equal_class_preemption: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Jobs arriving before this time are simulated but not counted.
    pub warmup_time: f64,
    /// The run stops once this many counted jobs have completed.
    pub target_completions: usize,
    /// Hard cap on simulated time; hitting it marks the run truncated.
    pub max_simulated_time: f64,
}

impl RunConfig {
    pub fn new(seed: u64, warmup_time: f64, target_completions: usize) -> Self {
        Self {
            seed,
            warmup_time,
            target_completions,
            max_simulated_time: f64::INFINITY,
        }
    }
}

/// One scripted arrival. `class` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceArrival {
    pub time: f64,
    pub class: usize,
    pub service: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceInput {
    pub arrivals: Vec<TraceArrival>,
}

impl TraceInput {
    pub fn new(arrivals: Vec<TraceArrival>) -> Self {
        Self { arrivals }
    }
}

/// Where arrivals come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    Stochastic(RunConfig),
    /// Every scripted job is counted; the run ends when all have completed.
    Trace(TraceInput),
}

/// Lifecycle of one completed job. `class` is 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub class: usize,
    pub arrival_time: f64,
    pub service_requirement: f64,
    pub first_start_time: f64,
    pub completion_time: f64,
    pub interruption_intervals: Vec<f64>,
}

impl JobRecord {
    pub fn preemption_count(&self) -> usize {
        self.interruption_intervals.len()
    }

    pub fn total_interruption_time(&self) -> f64 {
        self.interruption_intervals.iter().fold(0.0, |acc, x| acc + x)
    }

    pub fn initial_delay(&self) -> f64 {
        self.first_start_time - self.arrival_time
    }

    pub fn sojourn(&self) -> f64 {
        self.completion_time - self.arrival_time
    }

    pub fn started_immediately(&self) -> bool {
        self.first_start_time == self.arrival_time
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("trace entry {index}: time {time} precedes the previous entry")]
    TraceNotSorted { index: usize, time: f64 },
    #[error("trace entry {index}: {reason}")]
    BadTraceEntry { index: usize, reason: String },
    #[error("invalid run configuration: {0}")]
    BadConfig(String),
}

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    /// Counted jobs in completion order.
    pub records: Vec<JobRecord>,
    /// The time cap fired before the completion target was reached.
    pub truncated: bool,
    pub end_time: f64,
}

/// Summary returned by [`run_with`], which streams records to a sink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub completed: usize,
    pub truncated: bool,
    pub end_time: f64,
}

/// Simulates and collects every counted job.
pub fn run(model: &SystemModel, policy: &PolicyConfig, workload: &Workload) -> Result<SimRun, SimError> {
    let mut records = Vec::new();
    let summary = run_with(model, policy, workload, |r| records.push(r))?;
    Ok(SimRun {
        records,
        truncated: summary.truncated,
        end_time: summary.end_time,
    })
}

/// Simulates and hands each counted job to `sink` as it completes.
pub fn run_with<F>(
    model: &SystemModel,
    policy: &PolicyConfig,
    workload: &Workload,
    sink: F,
) -> Result<RunSummary, SimError>
where
    F: FnMut(JobRecord),
{
    match workload {
        Workload::Stochastic(cfg) => {
            if cfg.target_completions == 0 {
                return Err(SimError::BadConfig("target_completions must be > 0".into()));
            }
            if !(cfg.warmup_time >= 0.0) {
                return Err(SimError::BadConfig("warmup_time must be >= 0".into()));
            }
            Ok(engine::Engine::stochastic(model, *policy, cfg).run(sink))
        }
        Workload::Trace(trace) => {
            validate_trace(model, trace)?;
            Ok(engine::Engine::trace(model, *policy, trace).run(sink))
        }
    }
}

fn validate_trace(model: &SystemModel, trace: &TraceInput) -> Result<(), SimError> {
    let mut last = f64::NEG_INFINITY;
    for (index, a) in trace.arrivals.iter().enumerate() {
        if !a.time.is_finite() || a.time < 0.0 {
            return Err(SimError::BadTraceEntry {
                index,
                reason: format!("arrival time {} is not a finite non-negative number", a.time),
            });
        }
        if a.time < last {
            return Err(SimError::TraceNotSorted { index, time: a.time });
        }
        if a.class >= model.num_classes() {
            return Err(SimError::BadTraceEntry {
                index,
                reason: format!("class {} out of range", a.class),
            });
        }
        if !(a.service.is_finite() && a.service > 0.0) {
            return Err(SimError::BadTraceEntry {
                index,
                reason: format!("service requirement {} must be > 0", a.service),
            });
        }
        last = a.time;
    }
    Ok(())
}
