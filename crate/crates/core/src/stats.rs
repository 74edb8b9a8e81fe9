//! Independent replications, Student-t confidence intervals and the
//! analytic-versus-simulation comparison.

use std::time::{Duration, Instant};

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::analytic::{ClassMetrics, Metric, SystemModel};
use crate::rng::replication_seed;
use crate::sim::{self, ClassTally, PolicyConfig, RawEstimates, RunConfig, SimError, Workload};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least 2 replications, got {0}")]
    TooFewReplications(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Across-replication estimate of one metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassEstimate {
    pub metric: Metric,
    pub mean: f64,
    /// 95% Student-t half-width; 0 with fewer than two replications.
    pub half_width: f64,
    /// Replications in which the metric was defined.
    pub reps: usize,
}

impl ClassEstimate {
    pub fn covers(&self, value: f64) -> bool {
        (self.mean - value).abs() <= self.half_width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    /// Counted jobs over all replications.
    pub jobs: u64,
    /// Metrics that were defined in at least one replication, in [`Metric::ALL`] order.
    pub estimates: Vec<ClassEstimate>,
}

impl ClassReport {
    pub fn get(&self, metric: Metric) -> Option<&ClassEstimate> {
        self.estimates.iter().find(|e| e.metric == metric)
    }

    /// `w - (p u + h g)` on the point estimates; `u`/`g` count as 0 when absent.
    pub fn identity_gap(&self) -> Option<f64> {
        let val = |m| self.get(m).map_or(0.0, |e| e.mean);
        let w = self.get(Metric::W)?.mean;
        Some(w - (val(Metric::P) * val(Metric::U) + val(Metric::H) * val(Metric::G)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub warmup_time: f64,
    pub completions_per_rep: usize,
    /// Replications stopped by the time cap.
    pub truncated_reps: usize,
    pub wall_clock: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    /// Indexed by class; `None` when no replication counted a job of the class.
    pub classes: Vec<Option<ClassReport>>,
    pub meta: RunMeta,
}

impl SimulationReport {
    pub fn truncated(&self) -> bool {
        self.meta.truncated_reps > 0
    }
}

/// Two-sided 95% Student-t quantile with `df` degrees of freedom.
pub fn t_quantile_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1")
        .inverse_cdf(0.975)
}

/// Mean and 95% half-width of replication means.
pub fn mean_and_half_width(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, t_quantile_975(n - 1) * (var / n as f64).sqrt())
}

/// Per-replication outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub seed: u64,
    pub classes: Vec<Option<RawEstimates>>,
    pub truncated: bool,
}

/// Combines replications into per-class estimates.
pub fn aggregate(reps: &[Vec<Option<RawEstimates>>]) -> Vec<Option<ClassReport>> {
    let n_classes = reps.first().map_or(0, Vec::len);
    (0..n_classes)
        .map(|class| {
            let per_rep: Vec<&RawEstimates> = reps.iter().filter_map(|r| r[class].as_ref()).collect();
            if per_rep.is_empty() {
                return None;
            }
            let estimates = Metric::ALL
                .iter()
                .filter_map(|&metric| {
                    let values: Vec<f64> = per_rep.iter().filter_map(|r| r.get(metric)).collect();
                    if values.is_empty() {
                        return None;
                    }
                    let (mean, half_width) = mean_and_half_width(&values);
                    Some(ClassEstimate {
                        metric,
                        mean,
                        half_width,
                        reps: values.len(),
                    })
                })
                .collect();
            Some(ClassReport {
                jobs: per_rep.iter().map(|r| r.jobs).sum(),
                estimates,
            })
        })
        .collect()
}

/// Runs replication `rep` of `base`.
pub fn run_replication(
    model: &SystemModel,
    policy: &PolicyConfig,
    base: &RunConfig,
    rep: usize,
) -> Result<Replication, SimError> {
    let seed = replication_seed(base.seed, rep as u64);
    let cfg = RunConfig { seed, ..*base };
    let mut tallies = vec![ClassTally::default(); model.num_classes()];
    let summary = sim::run_with(model, policy, &Workload::Stochastic(cfg), |r| {
        tallies[r.class].add(&r)
    })?;
    Ok(Replication {
        seed,
        classes: tallies.iter().map(ClassTally::estimates).collect(),
        truncated: summary.truncated,
    })
}

/// Runs the replications one after another.
pub fn run_replications_sequential(
    model: &SystemModel,
    policy: &PolicyConfig,
    base: &RunConfig,
    n_reps: usize,
) -> Result<Vec<Replication>, SimError> {
    (0..n_reps)
        .map(|rep| run_replication(model, policy, base, rep))
        .collect()
}

/// Runs the replications on the rayon pool. Results come back in
/// replication order, identical to the sequential path.
#[cfg(feature = "parallel")]
pub fn run_replications_parallel(
    model: &SystemModel,
    policy: &PolicyConfig,
    base: &RunConfig,
    n_reps: usize,
) -> Result<Vec<Replication>, SimError> {
    use rayon::prelude::*;
    (0..n_reps)
        .into_par_iter()
        .map(|rep| run_replication(model, policy, base, rep))
        .collect()
}

/// `n_reps` independent runs with seeds derived from `base.seed`.
pub fn replicate(
    model: &SystemModel,
    policy: &PolicyConfig,
    base: &RunConfig,
    n_reps: usize,
) -> Result<SimulationReport, StatsError> {
    if n_reps < 2 {
        return Err(StatsError::TooFewReplications(n_reps));
    }
    let started = Instant::now();
    #[cfg(feature = "parallel")]
    let reps = run_replications_parallel(model, policy, base, n_reps)?;
    #[cfg(not(feature = "parallel"))]
    let reps = run_replications_sequential(model, policy, base, n_reps)?;
    Ok(report_from(reps, base, started.elapsed()))
}

fn report_from(reps: Vec<Replication>, base: &RunConfig, wall_clock: Duration) -> SimulationReport {
    let raw: Vec<Vec<Option<RawEstimates>>> = reps.iter().map(|r| r.classes.clone()).collect();
    SimulationReport {
        classes: aggregate(&raw),
        meta: RunMeta {
            base_seed: base.seed,
            seeds: reps.iter().map(|r| r.seed).collect(),
            warmup_time: base.warmup_time,
            completions_per_rep: base.target_completions,
            truncated_reps: reps.iter().filter(|r| r.truncated).count(),
            wall_clock,
        },
    }
}

/// One line of the comparison table. `class` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub class: usize,
    pub metric: Metric,
    pub analytic: Option<f64>,
    pub sim_mean: Option<f64>,
    pub sim_ci95: Option<f64>,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
    /// Analytic value inside the simulated interval.
    pub covered: Option<bool>,
}

pub fn compare(report: &SimulationReport, analytic: &[Option<ClassMetrics>]) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for (class, exact) in analytic.iter().enumerate() {
        let sim = report.classes.get(class).and_then(Option::as_ref);
        for metric in Metric::ALL {
            let a = exact.map(|x| x.get(metric));
            let est = sim.and_then(|s| s.get(metric));
            let abs_err = a.zip(est).map(|(a, e)| (e.mean - a).abs());
            let rel_err = a.zip(abs_err).map(|(a, d)| {
                if d == 0.0 {
                    0.0
                } else {
                    d / a.abs()
                }
            });
            rows.push(ComparisonRow {
                class,
                metric,
                analytic: a,
                sim_mean: est.map(|e| e.mean),
                sim_ci95: est.map(|e| e.half_width),
                abs_err,
                rel_err,
                covered: a.zip(est).map(|(a, e)| e.covers(a)),
            });
        }
    }
    rows
}
