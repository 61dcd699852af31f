//! Completing unknown future values by maximizing absolute Pearson
//! correlation against a fully known reference sequence.
//!
//! A target `Y = (y_1..y_m, y*_1..y*_n)` has a known prefix and an unknown
//! tail. Given a reference `X` of length `m + n`, the tail is chosen to
//! maximize `|rho(X, Y)|` inside physical bounds. The covariance is affine in
//! `y*` and the standard deviation of `Y` is the norm of an affine map of
//! `y*`, so:
//!
//! * with one unknown, `rho^2` is a ratio of quadratics and the maximizer is
//!   among the roots of its stationarity quadratic and the bound endpoints
//!   ([`solve_1d`]);
//! * with several unknowns, each level `t` of the objective defines a
//!   second-order-cone feasibility problem, and bisection on `t` converges to
//!   the optimum ([`solve_bisection`]).
//!
//! [`brute_force`] enumerates a grid and is only meant as an oracle.

mod bisection;
mod brute;
mod closed_form;
mod objective;
mod socp;

use serde::{Deserialize, Serialize};

pub use bisection::{solve_bisection, BisectionConfig};
pub use brute::{brute_force, brute_force_with_budget, DEFAULT_ENUMERATION_BUDGET};
pub use closed_form::{objective_coefficients_1d, solve_1d, stationary_points, RationalQuadratic};
pub use objective::CompletionObjective;
pub use socp::{feasibility_check, Feasibility};

use crate::correlation::{covariance, pearson, WindowMatch};
use crate::error::{check_len, Error, Result};

/// A target series split into its known prefix (zero padded to full length)
/// and the number of trailing unknowns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionedSeries {
    ya: Vec<f64>,
    unknown_count: usize,
}

impl PartitionedSeries {
    pub fn ya(&self) -> &[f64] {
        &self.ya
    }

    pub fn known(&self) -> &[f64] {
        &self.ya[..self.known_len()]
    }

    pub fn known_len(&self) -> usize {
        self.ya.len() - self.unknown_count
    }

    pub fn unknown_count(&self) -> usize {
        self.unknown_count
    }

    pub fn full_len(&self) -> usize {
        self.ya.len()
    }

    /// `Ya + Yb`: the prefix followed by `y_star`.
    pub fn completed(&self, y_star: &[f64]) -> Result<Vec<f64>> {
        check_len(self.unknown_count, y_star.len())?;
        let mut y = self.ya.clone();
        y[self.known_len()..].copy_from_slice(y_star);
        Ok(y)
    }

    /// `Yb`: zeros over the known prefix followed by `y_star`.
    pub fn yb(&self, y_star: &[f64]) -> Result<Vec<f64>> {
        check_len(self.unknown_count, y_star.len())?;
        let mut y = vec![0.0; self.full_len()];
        y[self.known_len()..].copy_from_slice(y_star);
        Ok(y)
    }
}

pub fn partition(known_prefix: &[f64], n: usize) -> Result<PartitionedSeries> {
    if known_prefix.len() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: known_prefix.len(),
        });
    }
    if n == 0 {
        return Err(Error::param("n", "at least one unknown is required"));
    }
    let mut ya = known_prefix.to_vec();
    ya.resize(known_prefix.len() + n, 0.0);
    Ok(PartitionedSeries {
        ya,
        unknown_count: n,
    })
}

/// `Var(Y) = Var(Ya) + Var(Yb) + 2 Cov(Ya, Yb)` with population moments.
pub fn variance_of_completion(p: &PartitionedSeries, y_star: &[f64]) -> Result<f64> {
    let yb = p.yb(y_star)?;
    let ya = p.ya();
    Ok(covariance(ya, ya, None)? + covariance(&yb, &yb, None)? + 2.0 * covariance(ya, &yb, None)?)
}

/// Box constraint shared by every unknown, in m/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let b = Bounds { lo, hi };
        b.validate()?;
        Ok(b)
    }

    /// `[0, 1.5 * max_speed]`.
    pub fn physical(max_speed: f64) -> Result<Self> {
        Bounds::new(0.0, 1.5 * max_speed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::InfeasibleBounds {
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(())
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Positive,
    Negative,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Positive => 1.0,
            Branch::Negative => -1.0,
        }
    }

    pub fn of(rho: f64) -> Branch {
        if rho < 0.0 {
            Branch::Negative
        } else {
            Branch::Positive
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    ClosedForm,
    Bisection,
    BruteForce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastSolution {
    pub y_star: Vec<f64>,
    /// Signed correlation of the reference with the completed series.
    pub rho_achieved: f64,
    pub branch: Branch,
    pub solver: Solver,
    /// Components sitting on a bound.
    pub clamped: Vec<bool>,
    /// Final `[l, u]` bracket of the winning bisection branch.
    pub bracket: Option<(f64, f64)>,
}

const CLAMP_TOL: f64 = 1e-9;

pub(crate) fn clamp_flags(y: &[f64], bounds: Bounds) -> Vec<bool> {
    let tol = CLAMP_TOL * bounds.width().max(1.0);
    y.iter()
        .map(|&v| v - bounds.lo <= tol || bounds.hi - v <= tol)
        .collect()
}

/// Correlation of `x` with the completed series, 0 when the completion is flat.
pub(crate) fn completed_rho(x: &[f64], p: &PartitionedSeries, y_star: &[f64]) -> Result<f64> {
    match pearson(x, &p.completed(y_star)?) {
        Ok(c) => Ok(c.rho),
        Err(Error::DegenerateCorrelation("y")) => Ok(0.0),
        Err(e) => Err(e),
    }
}

pub(crate) fn check_reference(x: &[f64], p: &PartitionedSeries) -> Result<()> {
    check_len(p.full_len(), x.len())?;
    if x.iter().any(|v| !v.is_finite()) || p.ya.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("x", "values must be finite"));
    }
    Ok(())
}

/// Completes the target's unknown horizon from a matched window: the
/// reference is `his ++ ref`, the target is `recent ++ y*`. One unknown goes
/// through the closed form, more through bisection.
pub fn forecast(
    matched: &WindowMatch,
    recent: &[f64],
    bounds: Bounds,
) -> Result<(WindowMatch, ForecastSolution)> {
    check_len(recent.len(), matched.his.len())?;
    let n = matched.reference.len();
    let x: Vec<f64> = matched
        .his
        .iter()
        .chain(&matched.reference)
        .copied()
        .collect();
    let p = partition(recent, n)?;
    let solution = if n == 1 {
        solve_1d(&x, &p, bounds)?
    } else {
        solve_bisection(&x, &p, bounds, &BisectionConfig::default())?
    };
    let mut out = matched.clone();
    out.pred = Some(solution.y_star.clone());
    Ok((out, solution))
}
