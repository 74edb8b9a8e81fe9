//! Service-time distributions.
//!
//! Each variant exposes its exact first and second raw moments (used by the
//! analytic formulas) and a deterministic sampler (used by the simulator).
//! Variants are constructed through validating constructors or through the
//! textual syntax accepted by [`str::parse`]:
//!
//! ```text
//! exp(rate)  det(value)  erlang(shape,rate)  hyperexp(p1:r1,p2:r2,...)  uniform(lo,hi)
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

/// Tolerance on the sum of hyper-exponential branch probabilities.
pub const BRANCH_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("rate must be finite and > 0, got {0}")]
    BadRate(f64),
    #[error("deterministic value must be finite and > 0, got {0}")]
    BadValue(f64),
    #[error("erlang shape must be a positive integer")]
    BadShape,
    #[error("uniform bounds must satisfy 0 <= lo < hi, got lo={lo} hi={hi}")]
    BadBounds { lo: f64, hi: f64 },
    #[error("hyperexp branch probability must be in (0,1], got {0}")]
    BadProbability(f64),
    #[error("hyperexp branch probabilities sum to {0}, expected 1")]
    BadProbabilitySum(f64),
    #[error("hyperexp needs at least one branch")]
    NoBranches,
    #[error("cannot parse distribution `{0}`")]
    Syntax(String),
}

/// One branch of a hyper-exponential mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub probability: f64,
    pub rate: f64,
}

/// A service-time law. Build with the constructors so the invariants hold.
#[derive(Debug, Clone, PartialEq)]
pub enum ServiceDistribution {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Erlang { shape: u32, rate: f64 },
    HyperExponential { branches: Vec<Branch> },
    Uniform { lo: f64, hi: f64 },
}

fn check_rate(rate: f64) -> Result<f64, DistError> {
    if rate.is_finite() && rate > 0.0 {
        Ok(rate)
    } else {
        Err(DistError::BadRate(rate))
    }
}

impl ServiceDistribution {
    pub fn exponential(rate: f64) -> Result<Self, DistError> {
        Ok(Self::Exponential {
            rate: check_rate(rate)?,
        })
    }

    pub fn deterministic(value: f64) -> Result<Self, DistError> {
        if value.is_finite() && value > 0.0 {
            Ok(Self::Deterministic { value })
        } else {
            Err(DistError::BadValue(value))
        }
    }

    pub fn erlang(shape: u32, rate: f64) -> Result<Self, DistError> {
        if shape == 0 {
            return Err(DistError::BadShape);
        }
        Ok(Self::Erlang {
            shape,
            rate: check_rate(rate)?,
        })
    }

    pub fn hyper_exponential(branches: Vec<Branch>) -> Result<Self, DistError> {
        if branches.is_empty() {
            return Err(DistError::NoBranches);
        }
        let mut total = 0.0;
        for b in &branches {
            if !(b.probability > 0.0 && b.probability <= 1.0) {
                return Err(DistError::BadProbability(b.probability));
            }
            check_rate(b.rate)?;
            total += b.probability;
        }
        if (total - 1.0).abs() > BRANCH_SUM_TOLERANCE {
            return Err(DistError::BadProbabilitySum(total));
        }
        Ok(Self::HyperExponential { branches })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self, DistError> {
        if lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi {
            Ok(Self::Uniform { lo, hi })
        } else {
            Err(DistError::BadBounds { lo, hi })
        }
    }

    /// Re-checks the invariants; useful for values built from the public variants.
    pub fn validate(&self) -> Result<(), DistError> {
        match self {
            Self::Exponential { rate } => Self::exponential(*rate).map(drop),
            Self::Deterministic { value } => Self::deterministic(*value).map(drop),
            Self::Erlang { shape, rate } => Self::erlang(*shape, *rate).map(drop),
            Self::HyperExponential { branches } => {
                Self::hyper_exponential(branches.clone()).map(drop)
            }
            Self::Uniform { lo, hi } => Self::uniform(*lo, *hi).map(drop),
        }
    }

    /// Exact mean service time.
    pub fn mean(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Deterministic { value } => *value,
            Self::Erlang { shape, rate } => f64::from(*shape) / rate,
            Self::HyperExponential { branches } => {
                branches.iter().map(|b| b.probability / b.rate).sum()
            }
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    /// Exact raw second moment `E[X^2]`.
    pub fn second_moment(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 2.0 / (rate * rate),
            Self::Deterministic { value } => value * value,
            Self::Erlang { shape, rate } => {
                let k = f64::from(*shape);
                k * (k + 1.0) / (rate * rate)
            }
            Self::HyperExponential { branches } => branches
                .iter()
                .map(|b| 2.0 * b.probability / (b.rate * b.rate))
                .sum(),
            Self::Uniform { lo, hi } => (lo * lo + lo * hi + hi * hi) / 3.0,
        }
    }

    /// Draws one variate.
    ///
    /// Exponentials use inverse transform on `1 - U` with `U` uniform on
    /// `[0, 1)`, so the log argument is never zero. Erlang is a sum of
    /// `shape` exponentials; hyper-exponential picks a branch with one
    /// uniform and then draws an exponential.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Exponential { rate } => exp_variate(*rate, rng),
            Self::Deterministic { value } => *value,
            Self::Erlang { shape, rate } => (0..*shape).map(|_| exp_variate(*rate, rng)).sum(),
            Self::HyperExponential { branches } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut rate = branches[branches.len() - 1].rate;
                for b in branches {
                    acc += b.probability;
                    if u < acc {
                        rate = b.rate;
                        break;
                    }
                }
                exp_variate(rate, rng)
            }
            Self::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                lo + (hi - lo) * u
            }
        }
    }

    /// Whether this is an exponential law.
    pub fn exponential_rate(&self) -> Option<f64> {
        match self {
            Self::Exponential { rate } => Some(*rate),
            _ => None,
        }
    }
}

fn exp_variate<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

impl fmt::Display for ServiceDistribution {
    // `{}` on f64 prints the shortest string that parses back to the same value.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential { rate } => write!(f, "exp({rate})"),
            Self::Deterministic { value } => write!(f, "det({value})"),
            Self::Erlang { shape, rate } => write!(f, "erlang({shape},{rate})"),
            Self::HyperExponential { branches } => {
                f.write_str("hyperexp(")?;
                for (k, b) in branches.iter().enumerate() {
                    if k > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{}:{}", b.probability, b.rate)?;
                }
                f.write_str(")")
            }
            Self::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
        }
    }
}

impl FromStr for ServiceDistribution {
    type Err = DistError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || DistError::Syntax(s.to_string());
        let s = s.trim();
        let open = s.find('(').ok_or_else(syntax)?;
        let inner = s.strip_suffix(')').ok_or_else(syntax)?[open + 1..].trim();
        let name = s[..open].trim();
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| syntax());
        let args: Vec<&str> = inner.split(',').collect();

        match (name, args.as_slice()) {
            ("exp", [r]) => Self::exponential(num(r)?),
            ("det", [v]) => Self::deterministic(num(v)?),
            ("erlang", [k, r]) => {
                let shape = k.trim().parse::<u32>().map_err(|_| DistError::BadShape)?;
                Self::erlang(shape, num(r)?)
            }
            ("uniform", [lo, hi]) => Self::uniform(num(lo)?, num(hi)?),
            ("hyperexp", parts) => {
                let branches = parts
                    .iter()
                    .map(|p| {
                        let (prob, rate) = p.split_once(':').ok_or_else(syntax)?;
                        Ok(Branch {
                            probability: num(prob)?,
                            rate: num(rate)?,
                        })
                    })
                    .collect::<Result<Vec<_>, DistError>>()?;
                Self::hyper_exponential(branches)
            }
            _ => Err(syntax()),
        }
    }
}
