//! Line-oriented scenario files.
//!
//! ```text
//! # comment
//! servers 3
//! class lambda=1 service=exp(5)
//! class lambda=1 service=erlang(2,5)
//! policy order=lifo preemption=equal      # optional
//! run seed=7 warmup=100 jobs=200000 reps=10   # optional, all keys optional
//! ```
//!
//! Classes are listed highest priority first.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::analytic::{ClassSpec, SystemModel};
use crate::dist::ServiceDistribution;
use crate::sim::{PolicyConfig, WithinClassOrder};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

/// Simulation defaults a scenario may carry; command-line flags win.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunDefaults {
    pub seed: Option<u64>,
    pub warmup: Option<f64>,
    pub jobs: Option<usize>,
    pub reps: Option<usize>,
}

impl RunDefaults {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: SystemModel,
    pub policy: Option<PolicyConfig>,
    pub run: RunDefaults,
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

/// Splits `key=value` tokens, rejecting keys outside `allowed`.
fn key_values<'a>(
    line: usize,
    tokens: impl Iterator<Item = &'a str>,
    allowed: &[&str],
) -> Result<Vec<(&'a str, &'a str)>, ParseError> {
    tokens
        .map(|t| {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected key=value, got `{t}`")))?;
            if !allowed.contains(&k) {
                return Err(err(line, format!("unknown key `{k}`")));
            }
            Ok((k, v))
        })
        .collect()
}

fn number<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ParseError> {
    value
        .parse()
        .map_err(|_| err(line, format!("malformed number for `{key}`: `{value}`")))
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ParseError> {
    let mut servers: Option<usize> = None;
    let mut classes = Vec::new();
    let mut policy = None;
    let mut run = RunDefaults::default();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let keyword = tokens.next().expect("non-empty line");
        match keyword {
            "servers" => {
                if servers.is_some() {
                    return Err(err(line, "duplicate `servers` line"));
                }
                let value = tokens.next().ok_or_else(|| err(line, "missing server count"))?;
                if let Some(extra) = tokens.next() {
                    return Err(err(line, format!("unexpected token `{extra}`")));
                }
                let m: usize = number(line, "servers", value)?;
                if m == 0 {
                    return Err(err(line, "server count must be >= 1"));
                }
                servers = Some(m);
            }
            "class" => {
                let mut lambda = None;
                let mut service = None;
                for (k, v) in key_values(line, tokens, &["lambda", "service"])? {
                    match k {
                        "lambda" => {
                            let x: f64 = number(line, k, v)?;
                            if !(x.is_finite() && x > 0.0) {
                                return Err(err(line, format!("arrival rate must be > 0, got {v}")));
                            }
                            lambda = Some(x);
                        }
                        _ => {
                            let d: ServiceDistribution =
                                v.parse().map_err(|e| err(line, format!("{e}")))?;
                            service = Some(d);
                        }
                    }
                }
                let lambda = lambda.ok_or_else(|| err(line, "class needs lambda="))?;
                let service = service.ok_or_else(|| err(line, "class needs service="))?;
                classes.push(ClassSpec::new(lambda, service));
            }
            "policy" => {
                let mut p = PolicyConfig::default();
                for (k, v) in key_values(line, tokens, &["order", "preemption"])? {
                    match (k, v) {
                        ("order", "lifo") => p.within_class_order = WithinClassOrder::Lifo,
                        ("order", "fifo") => p.within_class_order = WithinClassOrder::Fifo,
                        ("preemption", "equal") => p.equal_class_preemption = true,
                        ("preemption", "strict") => p.equal_class_preemption = false,
                        _ => return Err(err(line, format!("bad value `{v}` for `{k}`"))),
                    }
                }
                policy = Some(p);
            }
            "run" => {
                for (k, v) in key_values(line, tokens, &["seed", "warmup", "jobs", "reps"])? {
                    match k {
                        "seed" => run.seed = Some(number(line, k, v)?),
                        "warmup" => run.warmup = Some(number(line, k, v)?),
                        "jobs" => run.jobs = Some(number(line, k, v)?),
                        _ => run.reps = Some(number(line, k, v)?),
                    }
                }
            }
            other => return Err(err(line, format!("unknown key `{other}`"))),
        }
    }

    let servers = servers.ok_or_else(|| err(last_line.max(1), "missing `servers` line"))?;
    if classes.is_empty() {
        return Err(err(last_line.max(1), "scenario has no classes"));
    }
    let model = SystemModel::new(servers, classes).map_err(|e| err(last_line.max(1), e.to_string()))?;
    Ok(Scenario { model, policy, run })
}

impl FromStr for Scenario {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_scenario(s)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "servers {}", self.model.servers())?;
        for c in self.model.classes() {
            writeln!(f, "class lambda={} service={}", c.lambda, c.service)?;
        }
        if let Some(p) = &self.policy {
            let order = match p.within_class_order {
                WithinClassOrder::Lifo => "lifo",
                WithinClassOrder::Fifo => "fifo",
            };
            let preemption = if p.equal_class_preemption { "equal" } else { "strict" };
            writeln!(f, "policy order={order} preemption={preemption}")?;
        }
        if !self.run.is_empty() {
            f.write_str("run")?;
            if let Some(x) = self.run.seed {
                write!(f, " seed={x}")?;
            }
            if let Some(x) = self.run.warmup {
                write!(f, " warmup={x}")?;
            }
            if let Some(x) = self.run.jobs {
                write!(f, " jobs={x}")?;
            }
            if let Some(x) = self.run.reps {
                write!(f, " reps={x}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
