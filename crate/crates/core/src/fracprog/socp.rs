//! Feasibility of one bisection level.
//!
//! For level `t` and sign `s` the question is whether some `y` in the box
//! satisfies `s cov(y) >= t sigma_x ||r0 + R y||`, a second-order-cone
//! constraint. Equivalently, whether the concave function
//!
//! ```text
//! phi(y) = s (c0 + g . y) - t sigma_x ||r0 + R y||
//! ```
//!
//! reaches 0 on the box. `phi` is maximized by projected Newton steps with an
//! Armijo line search. Concavity gives a certificate in both directions: any
//! point with `phi >= 0` is a witness, and `phi(y) + max_box grad . (y' - y)`
//! bounds the maximum from above, so a negative bound proves infeasibility.

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::{Bounds, Branch, CompletionObjective, PartitionedSeries};

const MAX_NEWTON_ITERS: usize = 200;
const ARMIJO: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// Best point found; a witness when `feasible`.
    pub witness: Vec<f64>,
    /// `phi` at the witness.
    pub margin: f64,
    /// Upper bound on `max phi` at termination.
    pub upper_bound: f64,
}

pub fn feasibility_check(
    t: f64,
    x: &[f64],
    p: &PartitionedSeries,
    bounds: Bounds,
    branch: Branch,
) -> Result<Feasibility> {
    bounds.validate()?;
    let obj = CompletionObjective::new(x, p)?;
    let start = vec![0.5 * (bounds.lo + bounds.hi); p.unknown_count()];
    Ok(LevelProblem::new(&obj, t, branch, bounds).solve(&start))
}

pub(crate) struct LevelProblem<'a> {
    obj: &'a CompletionObjective,
    sign: f64,
    // t * sigma_x
    k: f64,
    bounds: Bounds,
    // keeps the norm differentiable where Y would be flat
    smoothing: f64,
}

struct Local {
    phi: f64,
    grad: Vec<f64>,
    // negative semidefinite, n x n row-major
    hess: Vec<f64>,
}

impl<'a> LevelProblem<'a> {
    pub(crate) fn new(
        obj: &'a CompletionObjective,
        t: f64,
        branch: Branch,
        bounds: Bounds,
    ) -> Self {
        let scale = obj.sigma_x() * bounds.hi.abs().max(bounds.lo.abs()).max(1.0);
        LevelProblem {
            obj,
            sign: branch.sign(),
            k: t * obj.sigma_x(),
            bounds,
            smoothing: 1e-12 * scale,
        }
    }

    fn phi(&self, y: &[f64]) -> f64 {
        let r = self.obj.residual(y);
        let norm = (r.iter().map(|v| v * v).sum::<f64>() + self.smoothing.powi(2)).sqrt();
        self.sign * self.obj.covariance(y) - self.k * norm
    }

    fn local(&self, y: &[f64]) -> Local {
        let n = y.len();
        let (_, rmat) = self.obj.residual_map();
        let r = self.obj.residual(y);
        let norm = (r.iter().map(|v| v * v).sum::<f64>() + self.smoothing.powi(2)).sqrt();
        let phi = self.sign * self.obj.covariance(y) - self.k * norm;

        // R^T r
        let mut rtr = vec![0.0; n];
        for (i, ri) in r.iter().enumerate() {
            for (k, acc) in rtr.iter_mut().enumerate() {
                *acc += rmat[i * n + k] * ri;
            }
        }
        let grad = self
            .obj
            .cov_gradient()
            .iter()
            .zip(&rtr)
            .map(|(g, v)| self.sign * g - self.k * v / norm)
            .collect();

        let mut hess = vec![0.0; n * n];
        let rows = r.len();
        for i in 0..rows {
            for a in 0..n {
                let ra = rmat[i * n + a];
                if ra == 0.0 {
                    continue;
                }
                for b in 0..n {
                    hess[a * n + b] += ra * rmat[i * n + b];
                }
            }
        }
        let n3 = norm * norm * norm;
        for a in 0..n {
            for b in 0..n {
                hess[a * n + b] = -self.k * (hess[a * n + b] / norm - rtr[a] * rtr[b] / n3);
            }
        }
        Local { phi, grad, hess }
    }

    fn project(&self, y: &mut [f64]) {
        for v in y.iter_mut() {
            *v = self.bounds.clamp(*v);
        }
    }

    /// Largest increase of the linearization over the box.
    fn linear_gap(&self, y: &[f64], grad: &[f64]) -> f64 {
        y.iter()
            .zip(grad)
            .map(|(&v, &g)| (g * (self.bounds.hi - v)).max(g * (self.bounds.lo - v)))
            .sum()
    }

    pub(crate) fn solve(&self, start: &[f64]) -> Feasibility {
        let n = start.len();
        let mut y = start.to_vec();
        self.project(&mut y);
        let width = self.bounds.width();
        let tol = 1e-12 * width;
        let mut upper = f64::INFINITY;

        for _ in 0..MAX_NEWTON_ITERS {
            let loc = self.local(&y);
            if loc.phi >= 0.0 {
                return Feasibility {
                    feasible: true,
                    witness: y,
                    margin: loc.phi,
                    upper_bound: upper,
                };
            }
            upper = upper.min(loc.phi + self.linear_gap(&y, &loc.grad));
            if upper < 0.0 {
                return Feasibility {
                    feasible: false,
                    witness: y,
                    margin: loc.phi,
                    upper_bound: upper,
                };
            }

            let free: Vec<usize> = (0..n)
                .filter(|&k| {
                    let at_lo = y[k] - self.bounds.lo <= tol && loc.grad[k] < 0.0;
                    let at_hi = self.bounds.hi - y[k] <= tol && loc.grad[k] > 0.0;
                    !(at_lo || at_hi)
                })
                .collect();
            let mut dir = vec![0.0; n];
            if let Some(step) = newton_direction(&loc, &free) {
                for (&k, d) in free.iter().zip(step) {
                    dir[k] = d;
                }
            }
            if dir.iter().zip(&loc.grad).map(|(d, g)| d * g).sum::<f64>() <= 0.0 {
                for &k in &free {
                    dir[k] = loc.grad[k];
                }
            }
            let longest = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            if longest == 0.0 {
                break;
            }
            if longest > width {
                for d in &mut dir {
                    *d *= width / longest;
                }
            }

            match self.line_search(&y, &loc, &dir) {
                Some(next) => y = next,
                None => {
                    // Newton failed to improve, retry along the projected gradient
                    let mut grad_dir: Vec<f64> = loc.grad.clone();
                    let gl = grad_dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
                    if gl == 0.0 {
                        break;
                    }
                    for d in &mut grad_dir {
                        *d *= width / gl;
                    }
                    match self.line_search(&y, &loc, &grad_dir) {
                        Some(next) => y = next,
                        None => break,
                    }
                }
            }
        }
        let phi = self.phi(&y);
        Feasibility {
            feasible: phi >= 0.0,
            witness: y,
            margin: phi,
            upper_bound: upper,
        }
    }

    fn line_search(&self, y: &[f64], loc: &Local, dir: &[f64]) -> Option<Vec<f64>> {
        let mut alpha = 1.0;
        for _ in 0..60 {
            let mut trial: Vec<f64> = y.iter().zip(dir).map(|(v, d)| v + alpha * d).collect();
            self.project(&mut trial);
            let moved: f64 = trial
                .iter()
                .zip(y)
                .zip(&loc.grad)
                .map(|((a, b), g)| g * (a - b))
                .sum();
            if trial.as_slice() != y {
                let value = self.phi(&trial);
                if value >= 0.0 || value >= loc.phi + ARMIJO * moved && value > loc.phi {
                    return Some(trial);
                }
            }
            alpha *= 0.5;
        }
        None
    }
}

/// Solves `(-H_ff + mu I) d = g_f` on the free coordinates by Cholesky.
fn newton_direction(loc: &Local, free: &[usize]) -> Option<Vec<f64>> {
    let n = loc.grad.len();
    let f = free.len();
    if f == 0 {
        return None;
    }
    let trace: f64 = free.iter().map(|&k| -loc.hess[k * n + k]).sum();
    let mu = 1e-10 * trace.max(1e-300) / f as f64 + 1e-300;
    let mut a = vec![0.0; f * f];
    for (i, &ki) in free.iter().enumerate() {
        for (j, &kj) in free.iter().enumerate() {
            a[i * f + j] = -loc.hess[ki * n + kj];
        }
        a[i * f + i] += mu;
    }
    let mut l = vec![0.0f64; f * f];
    for j in 0..f {
        let d = a[j * f + j] - (0..j).map(|k| l[j * f + k].powi(2)).sum::<f64>();
        if !(d > 0.0) {
            return None;
        }
        let piv = d.sqrt();
        l[j * f + j] = piv;
        for i in j + 1..f {
            let s = a[i * f + j] - (0..j).map(|k| l[i * f + k] * l[j * f + k]).sum::<f64>();
            l[i * f + j] = s / piv;
        }
    }
    let rhs: Vec<f64> = free.iter().map(|&k| loc.grad[k]).collect();
    let mut z = vec![0.0; f];
    for i in 0..f {
        z[i] = (rhs[i] - (0..i).map(|k| l[i * f + k] * z[k]).sum::<f64>()) / l[i * f + i];
    }
    let mut d = vec![0.0; f];
    for i in (0..f).rev() {
        d[i] = (z[i] - (i + 1..f).map(|k| l[k * f + i] * d[k]).sum::<f64>()) / l[i * f + i];
    }
    d.iter().all(|v| v.is_finite()).then_some(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::pearson;
    use crate::fracprog::partition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn b(lo: f64, hi: f64) -> Bounds {
        Bounds::new(lo, hi).unwrap()
    }

    #[test]
    fn level_zero_is_a_half_space() {
        let x = [1., 3., 2., 5., 4., 6.];
        let p = partition(&[2., 1., 4., 3.], 2).unwrap();
        let f = feasibility_check(0.0, &x, &p, b(0.0, 20.0), Branch::Positive).unwrap();
        assert!(f.feasible);
        let rho = pearson(&x, &p.completed(&f.witness).unwrap()).unwrap().rho;
        assert!(rho >= 0.0);
    }

    #[test]
    fn near_unit_level_on_collinear_case() {
        let x = [1., 2., 3., 4., 5., 6.];
        let p = partition(&[2., 4., 6., 8., 10.], 1).unwrap();
        let f = feasibility_check(1.0 - 1e-9, &x, &p, b(0.0, 20.0), Branch::Positive).unwrap();
        assert!(f.feasible);
        assert!((f.witness[0] - 12.0).abs() < 1e-2, "{:?}", f.witness);
    }

    #[test]
    fn unit_level_infeasible_without_collinearity() {
        let x = [1., 2., 4., 3., 5., 6.];
        let p = partition(&[1., 2., 3., 4., 5.], 1).unwrap();
        let f = feasibility_check(0.999, &x, &p, b(0.0, 20.0), Branch::Positive).unwrap();
        assert!(!f.feasible);
        assert!(f.upper_bound < 0.0);
    }

    #[test]
    fn wrong_sign_branch_infeasible_for_collinear_line() {
        let x = [1., 2., 3., 4., 5., 6.];
        let p = partition(&[2., 4., 6., 8., 10.], 1).unwrap();
        let f = feasibility_check(0.5, &x, &p, b(0.0, 20.0), Branch::Negative).unwrap();
        assert!(!f.feasible);
    }

    #[test]
    fn agrees_with_grid_oracle_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut compared = 0;
        for _ in 0..40 {
            let m = rng.random_range(3..7);
            let x: Vec<f64> = (0..m + 2).map(|_| rng.random_range(0.0..10.0)).collect();
            let prefix: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..10.0)).collect();
            let p = partition(&prefix, 2).unwrap();
            let bounds = b(0.0, 10.0);
            // oracle: best signed correlation on a 0.05 lattice
            let (mut best_pos, mut best_neg) = (f64::MIN, f64::MIN);
            for i in 0..=200 {
                for j in 0..=200 {
                    let y = [i as f64 * 0.05, j as f64 * 0.05];
                    if let Ok(c) = pearson(&x, &p.completed(&y).unwrap()) {
                        best_pos = best_pos.max(c.rho);
                        best_neg = best_neg.max(-c.rho);
                    }
                }
            }
            for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
                for (branch, best) in [(Branch::Positive, best_pos), (Branch::Negative, best_neg)] {
                    if (best - t).abs() <= 1e-3 {
                        continue;
                    }
                    let f = feasibility_check(t, &x, &p, bounds, branch).unwrap();
                    // the lattice can only underestimate the optimum
                    if best > t {
                        assert!(f.feasible, "t={t} oracle={best}");
                    } else if !f.feasible {
                        compared += 1;
                        continue;
                    } else {
                        let rho = branch.sign()
                            * pearson(&x, &p.completed(&f.witness).unwrap()).unwrap().rho;
                        assert!(rho >= t - 1e-9);
                        assert!(
                            rho - best < 0.05,
                            "witness {rho} far beyond lattice best {best}"
                        );
                    }
                    compared += 1;
                }
            }
        }
        assert!(compared > 200);
    }
}
