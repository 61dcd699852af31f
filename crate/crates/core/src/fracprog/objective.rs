use crate::correlation::covariance;
use crate::error::{Error, Result};

use super::{check_reference, PartitionedSeries};

/// Affine form of the correlation between a known reference `x` and the
/// completed target `Y(y*)`:
///
/// ```text
/// cov(y*)     = c0 + g . y*
/// sigma_Y(y*) = || r0 + R y* ||
/// rho(y*)     = cov(y*) / (sigma_x * sigma_Y(y*))
/// ```
///
/// with `r_i = sqrt(w_i) (Y_i - mean_w(Y))`. Weights default to `1/N`.
#[derive(Clone, Debug)]
pub struct CompletionObjective {
    n: usize,
    sigma_x: f64,
    c0: f64,
    g: Vec<f64>,
    r0: Vec<f64>,
    // full_len x n, row-major
    r: Vec<f64>,
}

impl CompletionObjective {
    pub fn new(x: &[f64], p: &PartitionedSeries) -> Result<Self> {
        Self::weighted(x, p, None)
    }

    pub fn weighted(x: &[f64], p: &PartitionedSeries, weights: Option<&[f64]>) -> Result<Self> {
        check_reference(x, p)?;
        let len = x.len();
        let uniform = vec![1.0 / len as f64; len];
        let w = weights.unwrap_or(&uniform);
        let var_x = covariance(x, x, Some(w))?;
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if var_x <= (1e-14 * scale).powi(2) || var_x <= f64::MIN_POSITIVE {
            return Err(Error::DegenerateCorrelation("x"));
        }
        let m = p.known_len();
        let n = p.unknown_count();
        let mean_x: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
        let c0 = (0..m).map(|i| w[i] * (x[i] - mean_x) * p.ya()[i]).sum();
        let g = (0..n).map(|k| w[m + k] * (x[m + k] - mean_x)).collect();
        let mean_ya: f64 = p.ya().iter().zip(w).map(|(a, b)| a * b).sum();
        let r0 = (0..len)
            .map(|i| w[i].sqrt() * (p.ya()[i] - mean_ya))
            .collect();
        let mut r = vec![0.0; len * n];
        for i in 0..len {
            for k in 0..n {
                let delta = if i == m + k { 1.0 } else { 0.0 };
                r[i * n + k] = w[i].sqrt() * (delta - w[m + k]);
            }
        }
        Ok(CompletionObjective {
            n,
            sigma_x: var_x.sqrt(),
            c0,
            g,
            r0,
            r,
        })
    }

    pub fn unknowns(&self) -> usize {
        self.n
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    pub fn covariance(&self, y: &[f64]) -> f64 {
        self.c0 + self.g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn cov_gradient(&self) -> &[f64] {
        &self.g
    }

    pub fn cov_offset(&self) -> f64 {
        self.c0
    }

    /// `r0 + R y`.
    pub fn residual(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        self.r0
            .iter()
            .enumerate()
            .map(|(i, base)| base + (0..n).map(|k| self.r[i * n + k] * y[k]).sum::<f64>())
            .collect()
    }

    pub fn residual_map(&self) -> (&[f64], &[f64]) {
        (&self.r0, &self.r)
    }

    pub fn sigma_y(&self, y: &[f64]) -> f64 {
        self.residual(y).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Correlation at `y`; 0 where the completed series is flat.
    pub fn rho(&self, y: &[f64]) -> f64 {
        let s = self.sigma_y(y);
        if s == 0.0 {
            return 0.0;
        }
        (self.covariance(y) / (self.sigma_x * s)).clamp(-1.0, 1.0)
    }

    /// Coefficients of `Var(Y) = f + e . y + y^T D y`, as `(D, e, f)`.
    pub fn variance_quadratic(&self) -> (Vec<f64>, Vec<f64>, f64) {
        let n = self.n;
        let rows = self.r0.len();
        let mut d = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for i in 0..rows {
            for a in 0..n {
                let ra = self.r[i * n + a];
                e[a] += 2.0 * self.r0[i] * ra;
                for b in 0..n {
                    d[a * n + b] += ra * self.r[i * n + b];
                }
            }
        }
        let f = self.r0.iter().map(|v| v * v).sum();
        (d, e, f)
    }
}
