use crate::error::Result;

use super::loss::{LossConfig, Objective};
use super::model::Seq2SeqKnowledgeModel;
use super::train::{batch_loss, prepare_samples, Sample};

/// Largest relative disagreement between the analytic gradient of the
/// teacher-forced training loss and central differences with step `eps`,
/// `|a - f| / max(1e-8, |a| + |f|)` over every parameter.
pub fn grad_check(
    model: &Seq2SeqKnowledgeModel,
    samples: &[Sample],
    objective: Objective,
    loss: &LossConfig,
    eps: f64,
) -> Result<f64> {
    let batch = prepare_samples(model, samples)?;
    let (_, analytic) = batch_loss(model, &batch, objective, loss, true, true)?;
    let analytic = analytic.expect("requested");
    let base = model.flat_params();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (k, &a) in analytic.iter().enumerate() {
        let mut eval = |delta: f64| -> Result<f64> {
            let mut p = base.clone();
            p[k] += delta;
            probe.set_flat_params(&p)?;
            Ok(batch_loss(&probe, &batch, objective, loss, true, false)?.0)
        };
        let fd = (eval(eps)? - eval(-eps)?) / (2.0 * eps);
        worst = worst.max((a - fd).abs() / (a.abs() + fd.abs()).max(1e-8));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{CellKind, ModelConfig, ModelInput, NodeInput, Variant};

    fn samples() -> Vec<Sample> {
        let node = |rho: f64, base: f64| NodeInput {
            rho,
            sequence: (0..5).map(|k| base + 0.3 * (k as f64).sin()).collect(),
            prediction: Some(vec![base - 0.2, base + 0.4]),
        };
        (0..2)
            .map(|s| Sample {
                input: ModelInput {
                    nodes: vec![node(0.7, 0.1 * s as f64), node(-0.9, -0.5)],
                    recent: vec![0.4, -0.3, 0.8, 0.05 * s as f64],
                },
                horizon: vec![0.6, -0.1],
            })
            .collect()
    }

    #[test]
    fn agrees_with_differences_for_each_cell() {
        let loss = LossConfig {
            lambda: 1e-3,
            alpha1: 1.0,
            alpha2: 0.5,
        };
        for cell in [CellKind::RnnTanh, CellKind::Lstm, CellKind::Gru] {
            for variant in [Variant::OptimizedCorr, Variant::PlainLstm] {
                let m = Seq2SeqKnowledgeModel::new(
                    ModelConfig {
                        variant,
                        cell,
                        hidden_dim: 3,
                        window: 4,
                        horizon: 2,
                        recon_len: 2,
                    },
                    21,
                )
                .unwrap();
                for objective in [Objective::Point, Objective::Seq2Seq] {
                    let err = grad_check(&m, &samples(), objective, &loss, 1e-5).unwrap();
                    assert!(err < 1e-4, "{cell:?} {variant:?} {objective:?}: {err}");
                }
            }
        }
    }

    #[test]
    fn zero_model_gradient_is_exact() {
        let m = Seq2SeqKnowledgeModel::zeros(ModelConfig {
            hidden_dim: 2,
            window: 4,
            horizon: 2,
            recon_len: 1,
            ..Default::default()
        })
        .unwrap();
        let err = grad_check(
            &m,
            &samples(),
            Objective::Seq2Seq,
            &LossConfig::default(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }
}
