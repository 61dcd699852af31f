use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Targets below this speed are left out of the accuracy score.
pub const DEFAULT_ACC_FLOOR_MPS: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc_pct: f64,
    pub rmse_mps: f64,
    pub r2: f64,
}

impl Metrics {
    pub fn compute(pred: &[f64], target: &[f64], acc_floor: f64) -> Result<Self> {
        Ok(Metrics {
            acc_pct: acc(pred, target, acc_floor)?,
            rmse_mps: rmse(pred, target)?,
            r2: r2(pred, target)?,
        })
    }
}

/// `(1 - mean |pred - y| / y) * 100` over targets `y >= floor`. Negative
/// once the mean relative error exceeds one.
pub fn acc(pred: &[f64], target: &[f64], floor: f64) -> Result<f64> {
    check_len(target.len(), pred.len())?;
    let (mut sum, mut kept) = (0.0, 0usize);
    for (p, y) in pred.iter().zip(target) {
        if *y >= floor {
            sum += (p - y).abs() / y;
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(Error::NoRetainedPoints { floor });
    }
    Ok((1.0 - sum / kept as f64) * 100.0)
}

/// Coefficient of determination against the target mean.
pub fn r2(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len(target.len(), pred.len())?;
    if target.is_empty() {
        return Err(Error::InsufficientData {
            required: 1,
            actual: 0,
        });
    }
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let total: f64 = target.iter().map(|y| (y - mean).powi(2)).sum();
    if total == 0.0 {
        return Err(Error::ConstantTarget);
    }
    let resid: f64 = pred.iter().zip(target).map(|(p, y)| (p - y).powi(2)).sum();
    Ok(1.0 - resid / total)
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len(target.len(), pred.len())?;
    if target.is_empty() {
        return Err(Error::InsufficientData {
            required: 1,
            actual: 0,
        });
    }
    let sse: f64 = pred.iter().zip(target).map(|(p, y)| (p - y).powi(2)).sum();
    Ok((sse / target.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn acc_examples() {
        assert_eq!(acc(&[1., 2., 3.], &[1., 2., 3.], 0.1).unwrap(), 100.0);
        assert_eq!(acc(&[1.], &[2.], 0.1).unwrap(), 50.0);
        assert_eq!(acc(&[3.], &[1.], 0.1).unwrap(), -100.0);
    }

    #[test]
    fn acc_floor_excludes_calm_periods() {
        // the 0.0 target would divide by zero
        assert_eq!(acc(&[5.0, 1.0], &[0.0, 2.0], 0.1).unwrap(), 50.0);
        assert!(matches!(
            acc(&[1.0], &[0.05], 0.1),
            Err(Error::NoRetainedPoints { .. })
        ));
    }

    #[test]
    fn r2_examples() {
        assert_eq!(r2(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), 1.0);
        assert_eq!(r2(&[2., 2., 2.], &[1., 2., 3.]).unwrap(), 0.0);
        assert_eq!(r2(&[1., 2., 5.], &[1., 2., 3.]).unwrap(), -1.0);
        assert!(matches!(
            r2(&[1., 2.], &[4., 4.]),
            Err(Error::ConstantTarget)
        ));
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1., 2.], &[1., 2.]).unwrap(), 0.0);
        assert_eq!(rmse(&[2., 3., 4.], &[1., 2., 3.]).unwrap(), 1.0);
        assert_eq!(rmse(&[2., 4.], &[1., 2.]).unwrap(), 2.5f64.sqrt());
        assert!(rmse(&[], &[]).is_err());
        assert!(rmse(&[1.], &[1., 2.]).is_err());
    }

    fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec(0.5f64..20.0, n),
                prop::collection::vec(0.5f64..20.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn rmse_zero_iff_equal((p, y) in pairs()) {
            prop_assert_eq!(rmse(&y, &y).unwrap(), 0.0);
            prop_assert_eq!(rmse(&p, &y).unwrap() == 0.0, p == y);
        }

        #[test]
        fn acc_is_scale_invariant((p, y) in pairs(), c in 0.1f64..10.0) {
            let cp: Vec<f64> = p.iter().map(|v| c * v).collect();
            let cy: Vec<f64> = y.iter().map(|v| c * v).collect();
            let a = acc(&p, &y, 0.0).unwrap();
            let b = acc(&cp, &cy, 0.0).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn r2_shift_and_scale((p, y) in pairs(), s in -5.0f64..5.0, c in 0.2f64..5.0) {
            prop_assume!(y.iter().any(|v| (v - y[0]).abs() > 1e-3));
            let base = r2(&p, &y).unwrap();
            let shift = |v: &[f64], k: f64| v.iter().map(|x| x + k).collect::<Vec<_>>();
            let scale = |v: &[f64], k: f64| v.iter().map(|x| x * k).collect::<Vec<_>>();
            let tol = 1e-8 * base.abs().max(1.0);
            prop_assert!((r2(&shift(&p, s), &shift(&y, s)).unwrap() - base).abs() < tol);
            prop_assert!((r2(&scale(&p, c), &scale(&y, c)).unwrap() - base).abs() < tol);
            prop_assert!((r2(&scale(&p, -c), &scale(&y, -c)).unwrap() - base).abs() < tol);
        }
    }
}
