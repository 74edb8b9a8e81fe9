//! Closed-form per-class metrics.
//!
//! Classes are indexed from 0 in code; class `0` has the highest priority.
//! For class `i` the formulas use the cumulative quantities of classes
//! `0..=i` ("load up to i") and `0..i` ("load above i"):
//!
//! * `Λ` cumulative arrival rate, `R` cumulative per-server load
//!   `Σ λ_j b_j / m`, `c` the Erlang C probability at that load,
//! * `S` the cumulative second-moment flow `Σ λ_j E[B_j^2]`.
//!
//! Three evaluation modes are provided: the approximation for arbitrary
//! service laws ([`approx_metrics`]), the exact single-server case
//! ([`exact_single_channel`]) and the exact case of exponential service with
//! one common rate ([`exact_mmm_identical`]). The latter two are coded from
//! their own closed forms, not by calling the approximation, so that the
//! reduction tests compare two independent evaluations.

use std::fmt;

use thiserror::Error;

use crate::dist::{DistError, ServiceDistribution};

/// Relative tolerance for "same exponential rate" in [`exact_mmm_identical`].
pub const COMMON_RATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("load must satisfy 0 <= R < 1, got {0}")]
    LoadOutOfRange(f64),
    #[error("server count must be >= 1")]
    NoServers,
    #[error("model needs at least one class")]
    NoClasses,
    #[error("class {class}: arrival rate must be finite and > 0, got {lambda}")]
    BadArrivalRate { class: usize, lambda: f64 },
    #[error("class {class}: {source}")]
    BadService { class: usize, source: DistError },
    #[error("single-channel formulas need m = 1, model has m = {0}")]
    NotSingleServer(usize),
    #[error("class {0} service is not exponential")]
    NotExponential(usize),
    #[error("exponential rates differ across classes ({0} vs {1})")]
    RatesDiffer(f64, f64),
}

/// Arrival rate and service law of one priority class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub lambda: f64,
    pub service: ServiceDistribution,
}

impl ClassSpec {
    pub fn new(lambda: f64, service: ServiceDistribution) -> Self {
        Self { lambda, service }
    }
}

/// Server count plus priority classes, highest priority first.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    servers: usize,
    classes: Vec<ClassSpec>,
}

impl SystemModel {
    pub fn new(servers: usize, classes: Vec<ClassSpec>) -> Result<Self, AnalyticError> {
        if servers == 0 {
            return Err(AnalyticError::NoServers);
        }
        if classes.is_empty() {
            return Err(AnalyticError::NoClasses);
        }
        for (class, c) in classes.iter().enumerate() {
            if !(c.lambda.is_finite() && c.lambda > 0.0) {
                return Err(AnalyticError::BadArrivalRate {
                    class: class + 1,
                    lambda: c.lambda,
                });
            }
            c.service
                .validate()
                .map_err(|source| AnalyticError::BadService {
                    class: class + 1,
                    source,
                })?;
        }
        Ok(Self { servers, classes })
    }

    pub fn servers(&self) -> usize {
        self.servers
    }

    pub fn classes(&self) -> &[ClassSpec] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Same model with every arrival rate multiplied by `factor`.
    pub fn scaled_arrivals(&self, factor: f64) -> Result<Self, AnalyticError> {
        let classes = self
            .classes
            .iter()
            .map(|c| ClassSpec::new(c.lambda * factor, c.service.clone()))
            .collect();
        Self::new(self.servers, classes)
    }
}

/// Cumulative rates and loads, with the empty-prefix entry at index 0:
/// `cum_rate[k]` and `cum_load[k]` cover classes `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub cum_rate: Vec<f64>,
    pub cum_load: Vec<f64>,
    /// `cum_second_moment[k] = Σ_{j<k} λ_j E[B_j^2]`.
    pub cum_second_moment: Vec<f64>,
}

impl LoadProfile {
    /// `(Λ, R)` for classes `0..=class`.
    pub fn through(&self, class: usize) -> (f64, f64) {
        (self.cum_rate[class + 1], self.cum_load[class + 1])
    }

    /// `R` for classes strictly above `class`.
    pub fn above(&self, class: usize) -> f64 {
        self.cum_load[class]
    }
}

pub fn loads(model: &SystemModel) -> LoadProfile {
    let m = model.servers() as f64;
    let n = model.num_classes();
    let mut cum_rate = Vec::with_capacity(n + 1);
    let mut cum_load = Vec::with_capacity(n + 1);
    let mut cum_second_moment = Vec::with_capacity(n + 1);
    let (mut rate, mut work, mut second) = (0.0, 0.0, 0.0);
    cum_rate.push(0.0);
    cum_load.push(0.0);
    cum_second_moment.push(0.0);
    for c in model.classes() {
        rate += c.lambda;
        work += c.lambda * c.service.mean();
        second += c.lambda * c.service.second_moment();
        cum_rate.push(rate);
        cum_load.push(work / m);
        cum_second_moment.push(second);
    }
    LoadProfile {
        cum_rate,
        cum_load,
        cum_second_moment,
    }
}

/// Probability of waiting in an M/M/m queue with per-server load `load`.
///
/// Evaluated through the Erlang B recurrence `B_k = a B_{k-1} / (k + a B_{k-1})`
/// with offered traffic `a = m·load`, then `C = B_m / (1 - load (1 - B_m))`.
pub fn erlang_c(servers: usize, load: f64) -> Result<f64, AnalyticError> {
    if servers == 0 {
        return Err(AnalyticError::NoServers);
    }
    if !(0.0..1.0).contains(&load) {
        return Err(AnalyticError::LoadOutOfRange(load));
    }
    let a = servers as f64 * load;
    let mut b = 1.0;
    for k in 1..=servers {
        b = a * b / (k as f64 + a * b);
    }
    Ok(b / (1.0 - load * (1.0 - b)))
}

/// Which closed form to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Approx,
    ExactSingleChannel,
    ExactMmmIdentical,
}

impl Mode {
    pub fn evaluate(self, model: &SystemModel) -> Result<Vec<Option<ClassMetrics>>, AnalyticError> {
        match self {
            Mode::Approx => Ok(approx_metrics(model)),
            Mode::ExactSingleChannel => exact_single_channel(model),
            Mode::ExactMmmIdentical => exact_mmm_identical(model),
        }
    }
}

/// The six per-class quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    /// probability that service does not start on arrival
    P,
    /// mean delay before first service, given it is positive
    U,
    /// mean number of preemptions per job
    H,
    /// mean length of one interruption
    G,
    /// mean waiting time, interruptions included
    W,
    /// mean sojourn time
    V,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::P, Metric::U, Metric::H, Metric::G, Metric::W, Metric::V];

    pub fn name(self) -> &'static str {
        match self {
            Metric::P => "p",
            Metric::U => "u",
            Metric::H => "h",
            Metric::G => "g",
            Metric::W => "w",
            Metric::V => "v",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-class metrics of a stable class. Unstable classes are `None` in the
/// result vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub p: f64,
    pub u: f64,
    pub h: f64,
    pub g: f64,
    pub w: f64,
    pub v: f64,
}

impl ClassMetrics {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::P => self.p,
            Metric::U => self.u,
            Metric::H => self.h,
            Metric::G => self.g,
            Metric::W => self.w,
            Metric::V => self.v,
        }
    }
}

/// Evaluates `per_class` on the stable prefix; classes with `R_i >= 1` are `None`.
fn over_stable_prefix<F>(model: &SystemModel, mut per_class: F) -> Vec<Option<ClassMetrics>>
where
    F: FnMut(usize, &LoadProfile) -> ClassMetrics,
{
    let profile = loads(model);
    (0..model.num_classes())
        .map(|i| (profile.through(i).1 < 1.0).then(|| per_class(i, &profile)))
        .collect()
}

/// Interruption length `R_i / (Λ_i (1 - R_i))`, also used for the top class.
fn interruption_length(profile: &LoadProfile, class: usize) -> f64 {
    let (rate, load) = profile.through(class);
    load / (rate * (1.0 - load))
}

/// The approximation for M/G/m with LIFO preemptive-resume priorities.
///
/// For the top class the delay term is zero: there is no load above it, so
/// `p = c(0) = 0` and `u` is taken as 0.
pub fn approx_metrics(model: &SystemModel) -> Vec<Option<ClassMetrics>> {
    let m = model.servers();
    let mf = m as f64;
    over_stable_prefix(model, |i, profile| {
        let lambda = model.classes()[i].lambda;
        let b = model.classes()[i].service.mean();
        let (rate, load) = profile.through(i);
        let load_above = profile.above(i);
        let c = erlang_c(m, load).expect("stable class");
        let c_above = erlang_c(m, load_above).expect("stable prefix");

        let u = if i == 0 {
            0.0
        } else {
            profile.cum_second_moment[i]
                / (2.0 * mf * mf * load_above * (1.0 - load_above) * (1.0 - load))
        };
        let g = load / (rate * (1.0 - load));
        let h = rate * (c - c_above) / lambda;
        let delay = if i == 0 { 0.0 } else { c_above * u };
        let w = delay + load * (c - c_above) / (lambda * (1.0 - load));
        ClassMetrics {
            p: c_above,
            u,
            h,
            g,
            w,
            v: w + b,
        }
    })
}

/// Exact metrics for one server and arbitrary service laws.
pub fn exact_single_channel(model: &SystemModel) -> Result<Vec<Option<ClassMetrics>>, AnalyticError> {
    if model.servers() != 1 {
        return Err(AnalyticError::NotSingleServer(model.servers()));
    }
    Ok(over_stable_prefix(model, |i, profile| {
        let b = model.classes()[i].service.mean();
        let (rate, load) = profile.through(i);
        let load_above = profile.above(i);
        let second = profile.cum_second_moment[i];

        let u = if i == 0 {
            0.0
        } else {
            second / (2.0 * load_above * (1.0 - load_above) * (1.0 - load))
        };
        let residual = second / (2.0 * (1.0 - load_above) * (1.0 - load));
        let w = residual + load * b / (1.0 - load);
        ClassMetrics {
            p: load_above,
            u,
            h: rate * b,
            g: interruption_length(profile, i),
            w,
            v: residual + b / (1.0 - load),
        }
    }))
}

/// Exact metrics when every class has exponential service with one common rate.
pub fn exact_mmm_identical(model: &SystemModel) -> Result<Vec<Option<ClassMetrics>>, AnalyticError> {
    let mut common = None;
    for (i, c) in model.classes().iter().enumerate() {
        let rate = c
            .service
            .exponential_rate()
            .ok_or(AnalyticError::NotExponential(i + 1))?;
        match common {
            None => common = Some(rate),
            Some(r) if ((rate - r) / r).abs() > COMMON_RATE_TOLERANCE => {
                return Err(AnalyticError::RatesDiffer(r, rate));
            }
            Some(_) => {}
        }
    }
    let b = 1.0 / common.expect("model has classes");
    let m = model.servers();
    let mf = m as f64;
    Ok(over_stable_prefix(model, |i, profile| {
        let lambda = model.classes()[i].lambda;
        let (rate, load) = profile.through(i);
        let load_above = profile.above(i);
        let c = erlang_c(m, load).expect("stable class");
        let c_above = erlang_c(m, load_above).expect("stable prefix");

        let u = if i == 0 {
            0.0
        } else {
            b / (mf * (1.0 - load_above) * (1.0 - load))
        };
        let preempt = load * (c - c_above) / (lambda * (1.0 - load));
        let w = c_above * b / (mf * (1.0 - load_above) * (1.0 - load)) + preempt;
        ClassMetrics {
            p: c_above,
            u,
            h: rate * (c - c_above) / lambda,
            g: interruption_length(profile, i),
            w,
            v: w + b,
        }
    }))
}

/// Residuals of the structural identities for one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// `w - (p u + h g)`
    pub wait: f64,
    /// `v - (w + b)`
    pub sojourn: f64,
    /// `h - Λ_i (q_i - q_{i-1}) / λ_i`, where `q_i` is the probability that all
    /// servers are busy with classes `0..=i`.
    pub preemptions: f64,
}

impl Residuals {
    pub fn max_abs(&self) -> f64 {
        self.wait.abs().max(self.sojourn.abs()).max(self.preemptions.abs())
    }
}

/// Checks the identities linking `p, u, h, g, w, v` on a metrics vector.
///
/// The all-busy probability for classes `0..=i` is the delay probability of
/// the next class, `p_{i+1}`. Below the last class there is no next class, so
/// `q_N` is the Erlang C probability at the total load.
pub fn check_identities(metrics: &[Option<ClassMetrics>], model: &SystemModel) -> Vec<Option<Residuals>> {
    let profile = loads(model);
    let n = model.num_classes();
    let all_busy = |i: usize| -> Option<f64> {
        if i + 1 < n {
            metrics[i + 1].map(|x| x.p)
        } else {
            erlang_c(model.servers(), profile.through(i).1).ok()
        }
    };
    (0..n)
        .map(|i| {
            let x = metrics[i]?;
            let spec = &model.classes()[i];
            let q = all_busy(i)?;
            let q_above = x.p;
            let rate = profile.through(i).0;
            Some(Residuals {
                wait: x.w - (x.p * x.u + x.h * x.g),
                sojourn: x.v - (x.w + spec.service.mean()),
                preemptions: x.h - rate * (q - q_above) / spec.lambda,
            })
        })
        .collect()
}
