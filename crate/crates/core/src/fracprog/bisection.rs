use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::socp::LevelProblem;
use super::{
    clamp_flags, completed_rho, Bounds, Branch, CompletionObjective, ForecastSolution,
    PartitionedSeries, Solver,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BisectionConfig {
    pub l: f64,
    pub u: f64,
    pub epsilon: f64,
    pub max_iter: usize,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        BisectionConfig {
            l: 0.0,
            u: 1.0,
            epsilon: 1e-6,
            max_iter: 200,
        }
    }
}

impl BisectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.l && self.l <= self.u && self.u <= 1.0) {
            return Err(Error::param("bisection", "need 0 <= l <= u <= 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::param("epsilon", "must be positive"));
        }
        Ok(())
    }
}

struct BranchResult {
    y: Vec<f64>,
    rho: f64,
    bracket: (f64, f64),
}

/// Maximizes `|rho|` over the box by bisection on the level `t` of each sign
/// branch. A feasible level raises the lower end of the bracket (we maximize),
/// an infeasible one lowers the upper end. The witness of the highest
/// feasible level is the branch's answer; the branch with the larger `|rho|`
/// wins.
pub fn solve_bisection(
    x: &[f64],
    p: &PartitionedSeries,
    bounds: Bounds,
    cfg: &BisectionConfig,
) -> Result<ForecastSolution> {
    bounds.validate()?;
    cfg.validate()?;
    let obj = CompletionObjective::new(x, p)?;

    let mut best: Option<(Branch, BranchResult)> = None;
    for branch in [Branch::Positive, Branch::Negative] {
        let Some(res) = bisect_branch(&obj, x, p, bounds, cfg, branch)? else {
            continue;
        };
        if best
            .as_ref()
            .is_none_or(|(_, b)| res.rho.abs() > b.rho.abs())
        {
            best = Some((branch, res));
        }
    }
    let (branch, res) = best.ok_or_else(|| {
        Error::Contract("neither correlation sign is feasible at the lower level".into())
    })?;
    Ok(ForecastSolution {
        clamped: clamp_flags(&res.y, bounds),
        y_star: res.y,
        rho_achieved: res.rho,
        branch,
        solver: Solver::Bisection,
        bracket: Some(res.bracket),
    })
}

fn bisect_branch(
    obj: &CompletionObjective,
    x: &[f64],
    p: &PartitionedSeries,
    bounds: Bounds,
    cfg: &BisectionConfig,
    branch: Branch,
) -> Result<Option<BranchResult>> {
    let center = vec![0.5 * (bounds.lo + bounds.hi); p.unknown_count()];
    let floor = LevelProblem::new(obj, cfg.l, branch, bounds).solve(&center);
    if !floor.feasible {
        return Ok(None);
    }
    let (mut l, mut u) = (cfg.l, cfg.u);
    let mut witness = floor.witness;
    let mut iterations = 0;
    while u - l > cfg.epsilon {
        if iterations == cfg.max_iter {
            return Err(Error::MaxIterations { iterations });
        }
        iterations += 1;
        let t = 0.5 * (l + u);
        let level = LevelProblem::new(obj, t, branch, bounds).solve(&witness);
        if level.feasible {
            l = t;
            witness = level.witness;
        } else {
            u = t;
        }
    }
    let rho = completed_rho(x, p, &witness)?;
    Ok(Some(BranchResult {
        y: witness,
        rho,
        bracket: (l, u),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracprog::{partition, solve_1d};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn b(lo: f64, hi: f64) -> Bounds {
        Bounds::new(lo, hi).unwrap()
    }

    #[test]
    fn one_unknown_agrees_with_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let m = rng.random_range(3..12);
            let x: Vec<f64> = (0..=m).map(|_| rng.random_range(0.0..15.0)).collect();
            let prefix: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..15.0)).collect();
            let p = partition(&prefix, 1).unwrap();
            let exact = solve_1d(&x, &p, b(0.0, 20.0)).unwrap();
            let bis = solve_bisection(&x, &p, b(0.0, 20.0), &BisectionConfig::default()).unwrap();
            assert!((exact.rho_achieved.abs() - bis.rho_achieved.abs()).abs() < 1e-4);
            let (l, u) = bis.bracket.unwrap();
            assert!(u - l <= 1e-6);
        }
    }

    #[test]
    fn planted_two_step_line() {
        let x = [1., 2., 3., 4., 5., 6., 7.];
        let p = partition(&[3., 5., 7., 9., 11.], 2).unwrap();
        let s = solve_bisection(&x, &p, b(0.0, 30.0), &BisectionConfig::default()).unwrap();
        assert!(s.rho_achieved.abs() >= 1.0 - 1e-4);
        assert!(
            (s.y_star[0] - 13.0).abs() < 1e-2 && (s.y_star[1] - 15.0).abs() < 1e-2,
            "{:?}",
            s.y_star
        );
    }

    #[test]
    fn negative_branch_selected_for_mirrored_line() {
        let x = [1., 2., 3., 4., 5., 6., 7.];
        let p = partition(&[15., 13., 11., 9., 7.], 2).unwrap();
        let s = solve_bisection(&x, &p, b(0.0, 30.0), &BisectionConfig::default()).unwrap();
        assert_eq!(s.branch, Branch::Negative);
        assert!(s.rho_achieved <= -1.0 + 1e-4);
    }

    #[test]
    fn halving_epsilon_keeps_bracket_property() {
        let x = [2., 7., 1., 8., 2., 8., 1.];
        let p = partition(&[3., 1., 4., 1., 5.], 2).unwrap();
        let coarse = BisectionConfig {
            epsilon: 1e-3,
            ..Default::default()
        };
        let fine = BisectionConfig {
            epsilon: 5e-4,
            ..Default::default()
        };
        let a = solve_bisection(&x, &p, b(0.0, 20.0), &coarse).unwrap();
        let c = solve_bisection(&x, &p, b(0.0, 20.0), &fine).unwrap();
        assert!(c.rho_achieved.abs() >= a.rho_achieved.abs() - 1e-3);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let x = [2., 7., 1., 8., 2., 8.];
        let p = partition(&[3., 1., 4., 1.], 2).unwrap();
        let cfg = BisectionConfig {
            max_iter: 3,
            ..Default::default()
        };
        assert!(matches!(
            solve_bisection(&x, &p, b(0.0, 20.0), &cfg),
            Err(Error::MaxIterations { iterations: 3 })
        ));
    }

    #[test]
    fn config_validation() {
        let cfg = BisectionConfig {
            l: 0.6,
            u: 0.4,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = BisectionConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
