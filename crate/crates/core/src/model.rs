//! Model parameters, the quantities derived from them, and the passage problem.
//!
//! Harvesting at constant effort only rescales the logistic drift:
//! `r1 = r - qE`, `K1 = K (1 - qE/r)`. Every analytic formula downstream is
//! written in terms of
//!
//! - `u = (1 - 2 r1 / sigma^2) / 2` (drift index),
//! - `v = 2 r1 / (K1 sigma^2)` (inverse population scale),
//! - `a = 2 / (sigma^2 u^2)` (Laplace scaling, `s(lambda) = sqrt(1 + a lambda)`),
//! - `rho = 2 r1 / sigma^2 - 1 = -2u` (persistence index).

use std::fmt;

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{FptError, Result};
use crate::mp::DEFAULT_PRECISION;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub r: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub q: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub sigma: f64,
    pub x0: f64,
}

impl ModelParams {
    /// Parameter set of the fisheries experiments (Pacific halibut scale).
    pub fn fisheries() -> Self {
        Self { r: 0.71, k: 8.05e7, q: 3.30e-6, e: 104540.0, sigma: 0.2, x0: 100.0 }
    }

    fn check_fields(&self) -> Result<()> {
        let positive = [("r", self.r), ("K", self.k), ("sigma", self.sigma), ("x0", self.x0)];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(FptError::InvalidParameter { name, reason: format!("must be finite and > 0, got {value}") });
            }
        }
        for (name, value) in [("q", self.q), ("E", self.e)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(FptError::InvalidParameter { name, reason: format!("must be finite and >= 0, got {value}") });
            }
        }
        Ok(())
    }
}

/// Derived quantities at a fixed working precision, together with the raw
/// parameters they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedParams {
    pub params: ModelParams,
    pub precision: u32,
    pub r1: Float,
    pub k1: Float,
    pub u: Float,
    pub v: Float,
    pub a: Float,
    pub rho: Float,
}

/// Double-precision view of [`DerivedParams`], as emitted by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedView {
    pub r1: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    pub u: f64,
    pub v: f64,
    pub a: f64,
    pub rho: f64,
}

impl DerivedParams {
    pub fn new(params: &ModelParams, precision: u32) -> Result<Self> {
        params.check_fields()?;
        let p = precision;
        let r = Float::with_val(p, params.r);
        let harvest = Float::with_val(p, params.q) * params.e;
        if harvest >= r {
            return Err(FptError::InvalidHarvest { harvest: harvest.to_f64(), r: params.r });
        }
        let r1 = Float::with_val(p, &r - &harvest);
        let k1 = Float::with_val(p, 1 - Float::with_val(p, &harvest / &r)) * params.k;
        let sigma2 = Float::with_val(p, params.sigma).square();
        let growth = Float::with_val(p, 2 * &r1) / &sigma2;
        let rho = Float::with_val(p, &growth - 1);
        if rho <= 0 {
            return Err(FptError::NonPersistentRegime { rho: rho.to_f64() });
        }
        let u: Float = Float::with_val(p, 1 - &growth) / 2u32;
        let v = Float::with_val(p, 2 * &r1) / Float::with_val(p, &k1 * &sigma2);
        let a = Float::with_val(p, 2) / (sigma2 * Float::with_val(p, u.square_ref()));
        Ok(Self { params: *params, precision, r1, k1, u, v, a, rho })
    }

    pub fn view(&self) -> DerivedView {
        DerivedView {
            r1: self.r1.to_f64(),
            k1: self.k1.to_f64(),
            u: self.u.to_f64(),
            v: self.v.to_f64(),
            a: self.a.to_f64(),
            rho: self.rho.to_f64(),
        }
    }

    /// `s(lambda) = sqrt(1 + a lambda)`.
    pub fn s_of(&self, lambda: &Float) -> Float {
        let p = self.precision.max(lambda.prec());
        (Float::with_val(p, &self.a * lambda) + 1u32).sqrt()
    }

    /// Same parameters with a different initial population.
    pub fn with_x0(&self, x0: f64) -> Result<Self> {
        let mut params = self.params;
        params.x0 = x0;
        Self::new(&params, self.precision)
    }
}

/// Derived parameters at the default working precision.
pub fn derive_params(p: &ModelParams) -> Result<DerivedParams> {
    DerivedParams::new(p, DEFAULT_PRECISION)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "up" | "u" => Ok(Direction::Up),
            "down" | "d" => Ok(Direction::Down),
            other => Err(format!("unknown direction {other:?}, expected up or down")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FptProblem {
    pub direction: Direction,
    pub threshold: f64,
}

impl FptProblem {
    pub fn up(threshold: f64) -> Self {
        Self { direction: Direction::Up, threshold }
    }

    pub fn down(threshold: f64) -> Self {
        Self { direction: Direction::Down, threshold }
    }
}

/// Outcome of [`validate_problem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Regular,
    /// `x0` sits on the threshold: the passage time is zero almost surely.
    DegenerateZero,
}

pub fn validate_problem(_d: &DerivedParams, x0: f64, prob: &FptProblem) -> Result<ProblemKind> {
    let s = prob.threshold;
    if !(s.is_finite() && s > 0.0) {
        return Err(FptError::InvalidParameter { name: "threshold", reason: format!("must be finite and > 0, got {s}") });
    }
    if x0 == s {
        return Ok(ProblemKind::DegenerateZero);
    }
    let ok = match prob.direction {
        Direction::Up => x0 < s,
        Direction::Down => s < x0,
    };
    if ok {
        Ok(ProblemKind::Regular)
    } else {
        Err(FptError::WrongSide { direction: prob.direction.as_str(), threshold: s, x0 })
    }
}
