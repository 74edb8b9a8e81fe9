use std::io::{self, Write};

use crate::analytic::{Metric, SystemModel};

use super::JobRecord;

pub const RECORD_CSV_HEADER: &str =
    "class,arrival,service,first_start,completion,preemptions,interruption_total";

/// Running sums over the counted jobs of one class.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassTally {
    pub jobs: u64,
    pub sojourn_sum: f64,
    pub service_sum: f64,
    pub delayed: u64,
    pub delay_sum: f64,
    pub interruptions: u64,
    pub interruption_sum: f64,
}

impl ClassTally {
    pub fn add(&mut self, r: &JobRecord) {
        self.jobs += 1;
        self.sojourn_sum += r.sojourn();
        self.service_sum += r.service_requirement;
        if !r.started_immediately() {
            self.delayed += 1;
            self.delay_sum += r.initial_delay();
        }
        self.interruptions += r.preemption_count() as u64;
        self.interruption_sum += r.total_interruption_time();
    }

    /// Point estimates, or `None` when the class saw no counted job.
    pub fn estimates(&self) -> Option<RawEstimates> {
        if self.jobs == 0 {
            return None;
        }
        let n = self.jobs as f64;
        let v = self.sojourn_sum / n;
        let mean_service = self.service_sum / n;
        Some(RawEstimates {
            jobs: self.jobs,
            v,
            w: v - mean_service,
            mean_service,
            p: self.delayed as f64 / n,
            u: (self.delayed > 0).then(|| self.delay_sum / self.delayed as f64),
            h: self.interruptions as f64 / n,
            // ratio of sums over all interruptions of the class
            g: (self.interruptions > 0).then(|| self.interruption_sum / self.interruptions as f64),
        })
    }
}

/// Per-class sample means. `u` and `g` are conditional means and are absent
/// when their conditioning event never happened.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawEstimates {
    pub jobs: u64,
    pub p: f64,
    pub u: Option<f64>,
    pub h: f64,
    pub g: Option<f64>,
    pub w: f64,
    pub v: f64,
    pub mean_service: f64,
}

impl RawEstimates {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::P => Some(self.p),
            Metric::U => self.u,
            Metric::H => Some(self.h),
            Metric::G => self.g,
            Metric::W => Some(self.w),
            Metric::V => Some(self.v),
        }
    }
}

/// Per-class aggregates of a record list; `None` for classes without jobs.
pub fn per_class_raw(records: &[JobRecord], model: &SystemModel) -> Vec<Option<RawEstimates>> {
    let mut tallies = vec![ClassTally::default(); model.num_classes()];
    for r in records {
        tallies[r.class].add(r);
    }
    tallies.iter().map(ClassTally::estimates).collect()
}

/// Writes one CSV row per record, classes numbered from 1.
pub fn write_records_csv<W: Write>(mut out: W, records: &[JobRecord]) -> io::Result<()> {
    writeln!(out, "{RECORD_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.class + 1,
            r.arrival_time,
            r.service_requirement,
            r.first_start_time,
            r.completion_time,
            r.preemption_count(),
            r.total_interruption_time()
        )?;
    }
    Ok(())
}
