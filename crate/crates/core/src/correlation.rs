//! Covariance and Pearson correlation primitives, and the moving-window scan
//! that finds historical windows correlated with the target's recent values.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::series::SiteGrid;

const WEIGHT_SUM_TOL: f64 = 1e-9;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    check_len(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: x.len(),
        });
    }
    Ok(())
}

fn check_weights(w: &[f64], n: usize) -> Result<()> {
    check_len(n, w.len())?;
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::param("weights", "must be finite and nonnegative"));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::param(
            "weights",
            format!("sum to {total}, expected 1"),
        ));
    }
    Ok(())
}

fn weighted_mean(v: &[f64], w: Option<&[f64]>) -> f64 {
    match w {
        Some(w) => v.iter().zip(w).map(|(a, b)| a * b).sum(),
        None => v.iter().sum::<f64>() / v.len() as f64,
    }
}

/// `sum_i w_i (x_i - x_bar)(y_i - y_bar)` with weighted means; uniform
/// weights `1/n` when none are given.
pub fn covariance(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    check_pair(x, y)?;
    if let Some(w) = weights {
        check_weights(w, x.len())?;
    }
    Ok(covariance_unchecked(x, y, weights))
}

fn covariance_unchecked(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> f64 {
    let mx = weighted_mean(x, weights);
    let my = weighted_mean(y, weights);
    match weights {
        Some(w) => x
            .iter()
            .zip(y)
            .zip(w)
            .map(|((a, b), wi)| wi * (a - mx) * (b - my))
            .sum(),
        None => {
            x.iter()
                .zip(y)
                .map(|(a, b)| (a - mx) * (b - my))
                .sum::<f64>()
                / x.len() as f64
        }
    }
}

/// Pairwise-difference form `(1/n^2) sum_i sum_{j>i} (x_i - x_j)(y_i - y_j)`.
pub fn covariance_pairwise(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            acc += (x[i] - x[j]) * (y[i] - y[j]);
        }
    }
    Ok(acc / (n * n) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationStats {
    pub cov: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub rho: f64,
    pub weights: Option<Vec<f64>>,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationStats> {
    pearson_weighted(x, y, None)
}

pub fn pearson_weighted(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<CorrelationStats> {
    check_pair(x, y)?;
    if let Some(w) = weights {
        check_weights(w, x.len())?;
    }
    let var_x = covariance_unchecked(x, x, weights);
    let var_y = covariance_unchecked(y, y, weights);
    if is_degenerate(var_x, x) {
        return Err(Error::DegenerateCorrelation("x"));
    }
    if is_degenerate(var_y, y) {
        return Err(Error::DegenerateCorrelation("y"));
    }
    let cov = covariance_unchecked(x, y, weights);
    let (sigma_x, sigma_y) = (var_x.sqrt(), var_y.sqrt());
    Ok(CorrelationStats {
        cov,
        sigma_x,
        sigma_y,
        rho: (cov / (sigma_x * sigma_y)).clamp(-1.0, 1.0),
        weights: weights.map(<[f64]>::to_vec),
    })
}

/// Variance indistinguishable from rounding noise on the data's scale.
fn is_degenerate(var: f64, v: &[f64]) -> bool {
    let scale = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    var <= (1e-14 * scale).powi(2) || var <= f64::MIN_POSITIVE
}

/// Centered copy of a reference window and its Euclidean norm, reused
/// against many candidate windows.
#[derive(Clone, Debug)]
pub(crate) struct CenteredRef {
    centered: Vec<f64>,
    norm: f64,
}

impl CenteredRef {
    pub(crate) fn new(reference: &[f64]) -> Result<Self> {
        if reference.len() < 2 {
            return Err(Error::InsufficientData {
                required: 2,
                actual: reference.len(),
            });
        }
        let mean = reference.iter().sum::<f64>() / reference.len() as f64;
        let centered: Vec<f64> = reference.iter().map(|v| v - mean).collect();
        let ss: f64 = centered.iter().map(|v| v * v).sum();
        if is_degenerate(ss / reference.len() as f64, reference) {
            return Err(Error::DegenerateCorrelation("recent window"));
        }
        Ok(CenteredRef {
            centered,
            norm: ss.sqrt(),
        })
    }

    /// Pearson correlation with `window`, or `None` for a zero-variance window.
    pub(crate) fn rho(&self, window: &[f64]) -> Option<f64> {
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        let mut cross = 0.0;
        let mut ss = 0.0;
        for (r, w) in self.centered.iter().zip(window) {
            let d = w - mean;
            cross += r * d;
            ss += d * d;
        }
        if is_degenerate(ss / window.len() as f64, window) {
            return None;
        }
        Some((cross / (self.norm * ss.sqrt())).clamp(-1.0, 1.0))
    }
}

/// A historical window correlated with the recent target window, its
/// continuation, and the completion later computed from the pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowMatch {
    pub source_site: String,
    pub offset: usize,
    pub his: Vec<f64>,
    #[serde(rename = "ref")]
    pub reference: Vec<f64>,
    pub rho: f64,
    pub pred: Option<Vec<f64>>,
}

/// Ascending `|rho|`, ties broken by site index then offset.
pub(crate) fn ascending_abs_rho(a: (f64, usize, usize), b: (f64, usize, usize)) -> Ordering {
    a.0.abs()
        .total_cmp(&b.0.abs())
        .then(a.1.cmp(&b.1))
        .then(a.2.cmp(&b.2))
}

/// Slides a stride-1 window of `recent.len()` periods over every site and
/// keeps windows with `|rho| >= threshold` that are followed by `n` observed
/// periods. Zero-variance windows are skipped. The result is sorted by
/// ascending `|rho|`.
pub fn scan_windows(
    grid: &SiteGrid,
    recent: &[f64],
    n: usize,
    threshold: f64,
    include_target_site: bool,
) -> Result<Vec<WindowMatch>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::param("threshold", "must lie in (0, 1]"));
    }
    if n == 0 {
        return Err(Error::param("n", "horizon must be positive"));
    }
    let reference = CenteredRef::new(recent)?;
    let m = recent.len();
    if grid.len() < m + n {
        return Err(Error::InsufficientData {
            required: m + n,
            actual: grid.len(),
        });
    }

    let mut hits: Vec<(f64, usize, usize)> = Vec::new();
    for (site, series) in grid.series().iter().enumerate() {
        if !include_target_site && site == grid.target_index() {
            continue;
        }
        let values = series.values();
        for offset in 0..=values.len() - m - n {
            if let Some(rho) = reference.rho(&values[offset..offset + m]) {
                if rho.abs() >= threshold {
                    hits.push((rho, site, offset));
                }
            }
        }
    }
    if hits.is_empty() {
        return Err(Error::NoMatch { threshold });
    }
    hits.sort_by(|a, b| ascending_abs_rho(*a, *b));
    Ok(hits
        .into_iter()
        .map(|(rho, site, offset)| {
            let values = grid.series()[site].values();
            WindowMatch {
                source_site: grid.sites()[site].id.clone(),
                offset,
                his: values[offset..offset + m].to_vec(),
                reference: values[offset + m..offset + m + n].to_vec(),
                rho,
                pred: None,
            }
        })
        .collect())
}
