use crate::error::{Error, Result};

use super::{
    check_reference, clamp_flags, completed_rho, Bounds, Branch, ForecastSolution,
    PartitionedSeries, Solver,
};

pub const DEFAULT_ENUMERATION_BUDGET: f64 = 5e7;

pub fn brute_force(
    x: &[f64],
    p: &PartitionedSeries,
    bounds: Bounds,
    step: f64,
) -> Result<ForecastSolution> {
    brute_force_with_budget(x, p, bounds, step, DEFAULT_ENUMERATION_BUDGET)
}

/// Exhaustive search over the lattice `lo + k * step` (every component),
/// scoring each point by a direct Pearson evaluation. The first maximizer in
/// lexicographic order wins.
pub fn brute_force_with_budget(
    x: &[f64],
    p: &PartitionedSeries,
    bounds: Bounds,
    step: f64,
    budget: f64,
) -> Result<ForecastSolution> {
    bounds.validate()?;
    check_reference(x, p)?;
    let n = p.unknown_count();
    if n == 0 {
        return Err(Error::param("p", "nothing to solve: no unknowns"));
    }
    if !(step > 0.0) {
        return Err(Error::param("step", "must be positive"));
    }
    let per_axis = ((bounds.width() / step) * (1.0 + 1e-12)).floor() as usize + 1;
    let points = (per_axis as f64).powi(n as i32);
    if points > budget {
        return Err(Error::EnumerationBudget { points, budget });
    }
    let axis: Vec<f64> = (0..per_axis)
        .map(|k| (bounds.lo + k as f64 * step).min(bounds.hi))
        .collect();

    let mut index = vec![0usize; n];
    let mut y = vec![axis[0]; n];
    let mut best_y = y.clone();
    let mut best_rho = completed_rho(x, p, &y)?;
    loop {
        // odometer increment, last component fastest
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(ForecastSolution {
                    clamped: clamp_flags(&best_y, bounds),
                    y_star: best_y,
                    rho_achieved: best_rho,
                    branch: Branch::of(best_rho),
                    solver: Solver::BruteForce,
                    bracket: None,
                });
            }
            k -= 1;
            index[k] += 1;
            if index[k] < per_axis {
                y[k] = axis[index[k]];
                break;
            }
            index[k] = 0;
            y[k] = axis[0];
        }
        let rho = completed_rho(x, p, &y)?;
        if rho.abs() > best_rho.abs() {
            best_rho = rho;
            best_y.copy_from_slice(&y);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracprog::{partition, solve_1d};

    fn b(lo: f64, hi: f64) -> Bounds {
        Bounds::new(lo, hi).unwrap()
    }

    #[test]
    fn finds_collinear_continuation() {
        let x = [1., 2., 3., 4., 5., 6.];
        let p = partition(&[2., 4., 6., 8., 10.], 1).unwrap();
        let s = brute_force(&x, &p, b(0.0, 20.0), 0.5).unwrap();
        assert_eq!(s.y_star, vec![12.0]);
        assert!((s.rho_achieved - 1.0).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_closed_form_within_step() {
        let x = [1., 2., 4., 3., 5., 6.];
        let p = partition(&[1., 2., 3., 4., 5.], 1).unwrap();
        let step = 0.01;
        let grid = brute_force(&x, &p, b(0.0, 20.0), step).unwrap();
        let exact = solve_1d(&x, &p, b(0.0, 20.0)).unwrap();
        assert!((grid.y_star[0] - exact.y_star[0]).abs() <= step);
        assert!(grid.rho_achieved.abs() <= exact.rho_achieved.abs() + 1e-12);
    }

    #[test]
    fn ties_break_lexicographically() {
        // x symmetric in the two unknown slots: (a, b) and (b, a) tie
        let x = [0., 1., 0., 1., 1.];
        let p = partition(&[0., 1., 0.], 2).unwrap();
        let s = brute_force(&x, &p, b(0.0, 2.0), 1.0).unwrap();
        assert!(s.y_star[0] <= s.y_star[1]);
    }

    #[test]
    fn rejects_zero_unknowns_and_oversized_grids() {
        let p = PartitionedSeries {
            ya: vec![1.0, 2.0, 3.0],
            unknown_count: 0,
        };
        assert!(brute_force(&[1., 2., 4.], &p, b(0.0, 1.0), 0.1).is_err());
        let p = partition(&[1., 2., 3.], 3).unwrap();
        assert!(matches!(
            brute_force(&[1., 2., 4., 3., 5., 6.], &p, b(0.0, 100.0), 0.001),
            Err(Error::EnumerationBudget { .. })
        ));
    }
}
