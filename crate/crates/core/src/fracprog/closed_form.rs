use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{
    clamp_flags, completed_rho, Bounds, Branch, CompletionObjective, ForecastSolution,
    PartitionedSeries, Solver,
};

/// `g(y) = (a y^2 + b y + c) / (d y^2 + e y + f)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalQuadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl RationalQuadratic {
    pub fn numerator(&self, y: f64) -> f64 {
        (self.a * y + self.b) * y + self.c
    }

    pub fn denominator(&self, y: f64) -> f64 {
        (self.d * y + self.e) * y + self.f
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.numerator(y) / self.denominator(y)
    }

    /// Coefficients of the derivative's numerator,
    /// `(ae - bd) y^2 + 2(af - cd) y + (bf - ce)`.
    pub fn stationarity(&self) -> [f64; 3] {
        [
            self.a * self.e - self.b * self.d,
            2.0 * (self.a * self.f - self.c * self.d),
            self.b * self.f - self.c * self.e,
        ]
    }
}

/// `rho^2` as a ratio of quadratics in the single unknown.
pub fn objective_coefficients_1d(x: &[f64], p: &PartitionedSeries) -> Result<RationalQuadratic> {
    if p.unknown_count() != 1 {
        return Err(Error::param(
            "p",
            format!(
                "closed form needs exactly one unknown, got {}",
                p.unknown_count()
            ),
        ));
    }
    let obj = CompletionObjective::new(x, p)?;
    let g = obj.cov_gradient()[0];
    let c0 = obj.cov_offset();
    let (d, e, f) = obj.variance_quadratic();
    let s2 = obj.sigma_x().powi(2);
    Ok(RationalQuadratic {
        a: g * g,
        b: 2.0 * c0 * g,
        c: c0 * c0,
        d: s2 * d[0],
        e: s2 * e[0],
        f: s2 * f,
    })
}

/// Real roots of `q2 y^2 + q1 y + q0`, ascending. Uses the cancellation-free
/// form `q = -(q1 + sign(q1) sqrt(disc)) / 2`, roots `q / q2` and `q0 / q`.
pub fn stationary_points(coeffs: [f64; 3]) -> Vec<f64> {
    let [q2, q1, q0] = coeffs;
    let mut roots = Vec::with_capacity(2);
    if q2 == 0.0 {
        if q1 != 0.0 {
            roots.push(-q0 / q1);
        }
    } else {
        let disc = q1 * q1 - 4.0 * q2 * q0;
        if disc >= 0.0 {
            let sgn = if q1 >= 0.0 { 1.0 } else { -1.0 };
            let q = -0.5 * (q1 + sgn * disc.sqrt());
            if q != 0.0 {
                roots.push(q / q2);
                roots.push(q0 / q);
            } else {
                // q1 = 0 and disc = 0: double root at 0
                roots.push(0.0);
            }
        }
    }
    roots.retain(|r| r.is_finite());
    roots.sort_by(f64::total_cmp);
    roots.dedup();
    roots
}

/// Closed-form maximizer of `|rho|` for a single unknown: compares the bound
/// endpoints and every stationary point inside the bounds, each scored by a
/// direct Pearson evaluation of the completed series.
pub fn solve_1d(x: &[f64], p: &PartitionedSeries, bounds: Bounds) -> Result<ForecastSolution> {
    bounds.validate()?;
    let rq = objective_coefficients_1d(x, p)?;
    let mut candidates = vec![bounds.lo, bounds.hi];
    candidates.extend(
        stationary_points(rq.stationarity())
            .into_iter()
            .filter(|&r| r > bounds.lo && r < bounds.hi),
    );
    candidates.sort_by(f64::total_cmp);

    let mut best: Option<(f64, f64)> = None;
    for &y in &candidates {
        let rho = completed_rho(x, p, &[y])?;
        if best.is_none_or(|(_, b)| rho.abs() > b.abs()) {
            best = Some((y, rho));
        }
    }
    let (y, rho) = best.expect("candidate set holds both endpoints");
    Ok(ForecastSolution {
        y_star: vec![y],
        rho_achieved: rho,
        branch: Branch::of(rho),
        solver: Solver::ClosedForm,
        clamped: clamp_flags(&[y], bounds),
        bracket: None,
    })
}
