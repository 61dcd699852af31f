//! Evaluation: accuracy / RMSE / R2 metrics, the multi-variant, multi-fold,
//! multi-seed experiment protocol and report emission.
//!
//! The grid is laid out as supplementary history followed by
//! `(folds + 1) * te_len` periods split into expanding-window folds. At every
//! forecast origin `t` the knowledge tree is rebuilt from all history before
//! `t` against the target's recent window `[t - m, t)`. Each trial trains one
//! model with one seed on the fold's training origins and is scored with a
//! rolling origin: the forecast for period `p` is step `n` of the forecast
//! issued at `p - n + 1`.

pub mod metrics;
pub mod report;

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracprog::Bounds;
use crate::knowledge::{assemble_tree, attach_predictions, KnowledgeTree, TreeParams};
use crate::neural::{
    train, CellKind, History, LossConfig, ModelConfig, ModelInput, OptimizerConfig, Sample, Scaler,
    Seq2SeqKnowledgeModel, TrainConfig, Variant,
};
use crate::series::{split_periods, DatasetSplit, SiteGrid, SynthConfig};

pub use metrics::{acc, r2, rmse, Metrics, DEFAULT_ACC_FLOOR_MPS};
pub use report::{
    emit_report, Rank, RankedRow, ReportCell, ReportFormat, ReportTable, TrialFailure, TrialResult,
};

/// A named model family in the comparison.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub name: String,
    pub variant: Variant,
    pub cell: CellKind,
}

impl VariantSpec {
    pub fn new(name: &str, variant: Variant, cell: CellKind) -> Self {
        VariantSpec {
            name: name.to_string(),
            variant,
            cell,
        }
    }
}

/// The six compared families: optimized-correlation Seq2Seq on GRU and LSTM
/// cells, the non-optimized GRU variant, a plain LSTM, and LSTM / GRU
/// Seq2Seq without the knowledge encoder.
pub fn standard_variants() -> Vec<VariantSpec> {
    vec![
        VariantSpec::new("optimized_corr_gru", Variant::OptimizedCorr, CellKind::Gru),
        VariantSpec::new("lstm", Variant::PlainLstm, CellKind::Lstm),
        VariantSpec::new(
            "non_optimized_corr_gru",
            Variant::NonOptimizedCorr,
            CellKind::Gru,
        ),
        VariantSpec::new(
            "optimized_corr_lstm",
            Variant::OptimizedCorr,
            CellKind::Lstm,
        ),
        VariantSpec::new("lstm_seq2seq", Variant::PlainSeq2seq, CellKind::Lstm),
        VariantSpec::new("gru_seq2seq", Variant::PlainSeq2seq, CellKind::Gru),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub variants: Vec<VariantSpec>,
    pub te_len: usize,
    pub folds: usize,
    /// One trial per seed.
    pub seeds: Vec<u64>,
    /// Recent window length `m`.
    pub window: usize,
    /// Forecast horizon `n` in periods.
    pub horizon: usize,
    pub recon_len: usize,
    pub hidden_dim: usize,
    /// `m` and `n` must match `window` and `horizon`.
    pub tree: TreeParams,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    /// Use every `train_stride`-th training origin.
    pub train_stride: usize,
    /// Record the test loss every this many epochs; 0 disables it.
    pub test_every: usize,
    pub acc_floor: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variants: standard_variants(),
            te_len: 360,
            folds: 3,
            seeds: (0..11).collect(),
            window: 36,
            horizon: 6,
            recon_len: 6,
            hidden_dim: 32,
            tree: TreeParams::default(),
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            epochs: 200,
            train_stride: 1,
            test_every: 1,
            acc_floor: DEFAULT_ACC_FLOOR_MPS,
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale comparison of the optimized-correlation GRU model with the
    /// plain LSTM on [`benchmark_grid`]: one fold, eleven seeds.
    pub fn benchmark() -> Self {
        ExperimentConfig {
            variants: vec![
                VariantSpec::new("optimized_corr_gru", Variant::OptimizedCorr, CellKind::Gru),
                VariantSpec::new("lstm", Variant::PlainLstm, CellKind::Lstm),
            ],
            folds: 1,
            hidden_dim: 8,
            tree: TreeParams {
                total_cap: 4,
                ..TreeParams::default()
            },
            optimizer: OptimizerConfig {
                learning_rate: 1e-2,
                ..OptimizerConfig::default()
            },
            epochs: 150,
            train_stride: 2,
            test_every: 10,
            ..ExperimentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::param("variants", "need at least one variant"));
        }
        let mut names = HashSet::new();
        if !self.variants.iter().all(|v| names.insert(v.name.as_str())) {
            return Err(Error::param("variants", "names must be unique"));
        }
        if self.seeds.is_empty() {
            return Err(Error::param("seeds", "need at least one trial"));
        }
        if self.te_len == 0 || self.folds == 0 {
            return Err(Error::param("folds", "te_len and folds must be positive"));
        }
        if self.train_stride == 0 {
            return Err(Error::param("train_stride", "must be positive"));
        }
        if self.tree.m != self.window || self.tree.n != self.horizon {
            return Err(Error::param(
                "tree",
                "tree m and n must equal window and horizon",
            ));
        }
        if !(self.acc_floor > 0.0) {
            return Err(Error::param("acc_floor", "must be positive"));
        }
        self.model_config(&self.variants[0]).validate()?;
        self.tree.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()
    }

    fn model_config(&self, spec: &VariantSpec) -> ModelConfig {
        ModelConfig {
            variant: spec.variant,
            cell: spec.cell,
            hidden_dim: self.hidden_dim,
            window: self.window,
            horizon: self.horizon,
            recon_len: self.recon_len,
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            optimizer: self.optimizer,
            loss: self.loss,
            test_every: self.test_every,
        }
    }
}

/// Synthetic grid for [`ExperimentConfig::benchmark`]: 16 sites on a 4 x 4
/// lattice, 5,000 periods, the field advected along +x by 6 periods per km
/// so every site east of the target previews its near future.
pub fn benchmark_grid_config() -> SynthConfig {
    SynthConfig {
        n_sites: 16,
        n_periods: 5000,
        spatial_decay_km: 20.0,
        temporal_rho: 0.95,
        noise_std: 0.5,
        seed: 2015,
        advection_lag_per_km: 6.0,
    }
}

pub fn benchmark_grid() -> Result<SiteGrid> {
    crate::series::synth_field(&benchmark_grid_config())
}

/// Where the folds sit inside the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    /// Periods before the first training period.
    pub supplementary: usize,
    pub splits: Vec<DatasetSplit>,
}

pub fn layout(cfg: &ExperimentConfig, grid_len: usize) -> Result<Layout> {
    let evaluated = (cfg.folds + 1) * cfg.te_len;
    // the earliest origin needs a full window and, for the tree, one stage
    let history = cfg.window.max(cfg.tree.stage_len + cfg.tree.m + cfg.tree.n) + cfg.horizon;
    if grid_len < evaluated + history {
        return Err(Error::InsufficientData {
            required: evaluated + history,
            actual: grid_len,
        });
    }
    let supplementary = grid_len - evaluated;
    let splits = split_periods(evaluated, cfg.te_len, cfg.folds)?
        .into_iter()
        .map(|s| DatasetSplit {
            fold_id: s.fold_id,
            train_range: s.train_range.shifted(supplementary),
            test_range: s.test_range.shifted(supplementary),
        })
        .collect();
    Ok(Layout {
        supplementary,
        splits,
    })
}

/// Knowledge tree, with completions attached, for the origin `t`: built from
/// every period before `t` against the target's window `[t - m, t)`.
pub fn tree_at_origin(grid: &SiteGrid, t: usize, params: &TreeParams) -> Result<KnowledgeTree> {
    let history = grid.prefix(t);
    let target = history.target_series().values();
    let recent = &target[t - params.m..];
    let tree = assemble_tree(&history, recent, params)?;
    attach_predictions(&tree, Bounds::physical(history.max_speed())?)
}

struct OriginInputs<'g> {
    grid: &'g SiteGrid,
    params: &'g TreeParams,
    window: usize,
    trees: BTreeMap<usize, std::result::Result<KnowledgeTree, String>>,
}

impl<'g> OriginInputs<'g> {
    fn input(&mut self, t: usize, with_tree: bool) -> Result<ModelInput> {
        let target = self.grid.target_series().values();
        let recent = &target[t - self.window..t];
        if !with_tree {
            return Ok(ModelInput::recent_only(recent));
        }
        let (grid, params) = (self.grid, self.params);
        let tree = self
            .trees
            .entry(t)
            .or_insert_with(|| tree_at_origin(grid, t, params).map_err(|e| e.to_string()));
        match tree {
            Ok(tree) => ModelInput::from_tree(tree, recent),
            Err(e) => Err(Error::TrialFailed(format!(
                "knowledge tree at period {t}: {e}"
            ))),
        }
    }
}

/// Runs every (variant, fold, seed) trial and reduces them to the report.
/// Failed trials are listed in the report rather than dropped.
pub fn run_experiment(cfg: &ExperimentConfig, grid: &SiteGrid) -> Result<ReportTable> {
    cfg.validate()?;
    let lay = layout(cfg, grid.len())?;
    let target = grid.target_series().values();
    let n = cfg.horizon;
    let mut inputs = OriginInputs {
        grid,
        params: &cfg.tree,
        window: cfg.window,
        trees: BTreeMap::new(),
    };
    let mut trials = Vec::new();
    let mut failures = Vec::new();

    for split in &lay.splits {
        let (tr, te) = (split.train_range, split.test_range);
        let scaler = Scaler::fit(&target[tr.start..tr.end])?;
        let fit_origins: Vec<usize> = (tr.start..=tr.end - n).step_by(cfg.train_stride).collect();
        let rolling = |p: usize| p + 1 - n;
        let train_periods: Vec<usize> = (tr.start..tr.end).collect();
        let test_periods: Vec<usize> = (te.start..te.end).collect();
        let truth = |periods: &[usize]| periods.iter().map(|&p| target[p]).collect::<Vec<f64>>();

        for spec in &cfg.variants {
            let with_tree = spec.variant.uses_tree();
            let mut build = |origins: &mut dyn Iterator<Item = usize>| -> Result<Vec<Sample>> {
                origins
                    .map(|t| {
                        Ok(Sample {
                            input: inputs.input(t, with_tree)?,
                            horizon: target[t..t + n].to_vec(),
                        })
                    })
                    .collect()
            };
            let prepared = build(&mut fit_origins.iter().copied()).and_then(|fit| {
                let train_eval = build(&mut train_periods.iter().map(|&p| rolling(p)))?;
                let test_eval = build(&mut test_periods.iter().map(|&p| rolling(p)))?;
                Ok((fit, train_eval, test_eval))
            });
            let (fit, train_eval, test_eval) = match prepared {
                Ok(v) => v,
                Err(e) => {
                    warn!("{} fold {}: {e}", spec.name, split.fold_id);
                    failures.extend(cfg.seeds.iter().map(|&seed| TrialFailure {
                        variant: spec.name.clone(),
                        fold: split.fold_id,
                        seed,
                        message: e.to_string(),
                    }));
                    continue;
                }
            };

            for &seed in &cfg.seeds {
                info!("{} fold {} seed {seed}", spec.name, split.fold_id);
                let outcome = run_trial(cfg, spec, scaler, seed, &fit, &train_eval, &test_eval)
                    .and_then(|(history, seconds, train_pred, test_pred)| {
                        Ok(TrialResult {
                            variant: spec.name.clone(),
                            fold: split.fold_id,
                            seed,
                            train: Metrics::compute(
                                &train_pred,
                                &truth(&train_periods),
                                cfg.acc_floor,
                            )?,
                            test: Metrics::compute(
                                &test_pred,
                                &truth(&test_periods),
                                cfg.acc_floor,
                            )?,
                            seconds,
                            history,
                            test_predictions: test_pred,
                        })
                    });
                match outcome {
                    Ok(r) => trials.push(r),
                    Err(e) => {
                        warn!(
                            "{} fold {} seed {seed} failed: {e}",
                            spec.name, split.fold_id
                        );
                        failures.push(TrialFailure {
                            variant: spec.name.clone(),
                            fold: split.fold_id,
                            seed,
                            message: e.to_string(),
                        });
                    }
                }
            }
        }
    }
    ReportTable::assemble(cfg.clone(), grid, lay, trials, failures)
}

/// A single trained model with its loss history and wall-clock seconds.
#[derive(Clone, Debug)]
pub struct TrainedTrial {
    pub model: Seq2SeqKnowledgeModel,
    pub history: History,
    pub seconds: f64,
}

/// Trains the named variant on one fold with one seed, exactly as the
/// experiment does, without scoring it.
pub fn train_single(
    cfg: &ExperimentConfig,
    grid: &SiteGrid,
    variant: &str,
    fold: usize,
    seed: u64,
) -> Result<TrainedTrial> {
    cfg.validate()?;
    let spec = cfg
        .variants
        .iter()
        .find(|v| v.name == variant)
        .ok_or_else(|| Error::param("variant", format!("unknown variant '{variant}'")))?;
    let lay = layout(cfg, grid.len())?;
    let split = lay
        .splits
        .iter()
        .find(|s| s.fold_id == fold)
        .ok_or_else(|| Error::param("fold", format!("no fold {fold}")))?;
    let target = grid.target_series().values();
    let n = cfg.horizon;
    let (tr, te) = (split.train_range, split.test_range);
    let mut inputs = OriginInputs {
        grid,
        params: &cfg.tree,
        window: cfg.window,
        trees: BTreeMap::new(),
    };
    let with_tree = spec.variant.uses_tree();
    let mut build = |origins: Vec<usize>| -> Result<Vec<Sample>> {
        origins
            .into_iter()
            .map(|t| {
                Ok(Sample {
                    input: inputs.input(t, with_tree)?,
                    horizon: target[t..t + n].to_vec(),
                })
            })
            .collect()
    };
    let fit = build((tr.start..=tr.end - n).step_by(cfg.train_stride).collect())?;
    let test = build((te.start..te.end).map(|p| p + 1 - n).collect())?;

    let mut model = Seq2SeqKnowledgeModel::new(cfg.model_config(spec), seed)?;
    model.scaler = Scaler::fit(&target[tr.start..tr.end])?;
    let started = Instant::now();
    let history = train(&mut model, &fit, &test, &cfg.train_config())?;
    Ok(TrainedTrial {
        model,
        history,
        seconds: started.elapsed().as_secs_f64(),
    })
}

type TrialOutput = (History, f64, Vec<f64>, Vec<f64>);

fn run_trial(
    cfg: &ExperimentConfig,
    spec: &VariantSpec,
    scaler: Scaler,
    seed: u64,
    fit: &[Sample],
    train_eval: &[Sample],
    test_eval: &[Sample],
) -> Result<TrialOutput> {
    let mut model = Seq2SeqKnowledgeModel::new(cfg.model_config(spec), seed)?;
    model.scaler = scaler;
    let started = Instant::now();
    let history = train(&mut model, fit, test_eval, &cfg.train_config())?;
    let seconds = started.elapsed().as_secs_f64();
    let last = |samples: &[Sample]| -> Result<Vec<f64>> {
        samples
            .iter()
            .map(|s| {
                Ok(*model
                    .forward(&s.input)?
                    .horizon
                    .last()
                    .expect("horizon >= 1"))
            })
            .collect()
    };
    Ok((history, seconds, last(train_eval)?, last(test_eval)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::synth_field;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            variants: vec![
                VariantSpec::new("opt", Variant::OptimizedCorr, CellKind::Gru),
                VariantSpec::new("plain", Variant::PlainLstm, CellKind::Lstm),
            ],
            te_len: 24,
            folds: 2,
            seeds: vec![1, 2, 3],
            window: 8,
            horizon: 2,
            recon_len: 2,
            hidden_dim: 3,
            tree: TreeParams {
                stage_len: 24,
                m: 8,
                n: 2,
                total_cap: 3,
                corr_floor: 0.05,
                ..TreeParams::default()
            },
            epochs: 4,
            train_stride: 3,
            test_every: 2,
            ..ExperimentConfig::default()
        }
    }

    fn small_grid() -> SiteGrid {
        synth_field(&SynthConfig {
            n_sites: 4,
            n_periods: 200,
            advection_lag_per_km: 2.0,
            seed: 3,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn layout_places_folds_after_history() {
        let cfg = small_cfg();
        let lay = layout(&cfg, 200).unwrap();
        assert_eq!(lay.supplementary, 200 - 72);
        assert_eq!(lay.splits[0].train_range.start, 128);
        assert_eq!(lay.splits[1].test_range.end, 200);
        assert!(matches!(
            layout(&cfg, 80),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        assert!(ExperimentConfig::benchmark().validate().is_ok());
        let mut c = small_cfg();
        c.tree.m = 9;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.variants.push(c.variants[0].clone());
        assert!(c.validate().is_err());
    }

    #[test]
    fn report_shape_and_determinism() {
        let cfg = small_cfg();
        let grid = small_grid();
        let mut a = run_experiment(&cfg, &grid).unwrap();
        assert!(a.failures.is_empty(), "{:?}", a.failures);
        assert_eq!(a.trials.len(), 2 * 2 * 3);
        assert_eq!(a.cells.len(), 4);
        for cell in &a.cells {
            let r: Vec<f64> = cell.rows.iter().map(|r| r.test.rmse_mps).collect();
            assert!(r[0] <= r[1] && r[1] <= r[2]);
            assert_eq!(cell.median_predictions.len(), cfg.te_len);
        }
        for t in &a.trials {
            assert_eq!(t.history.train_loss.len(), cfg.epochs);
            assert_eq!(t.history.test_loss.len(), cfg.epochs / cfg.test_every);
        }
        let mut b = run_experiment(&cfg, &grid).unwrap();
        a.strip_timing();
        b.strip_timing();
        assert_eq!(a, b);
    }

    #[test]
    fn single_trial_collapses_ranks() {
        let cfg = ExperimentConfig {
            seeds: vec![7],
            folds: 1,
            ..small_cfg()
        };
        let table = run_experiment(&cfg, &small_grid()).unwrap();
        for cell in &table.cells {
            assert!(cell
                .rows
                .iter()
                .all(|r| r.seed == 7 && r.test == cell.rows[0].test));
        }
    }

    #[test]
    fn failed_trials_are_recorded() {
        let cfg = ExperimentConfig {
            optimizer: OptimizerConfig {
                kind: crate::neural::OptimizerKind::GradientDescent,
                learning_rate: 1e300,
                ..OptimizerConfig::default()
            },
            epochs: 30,
            folds: 1,
            ..small_cfg()
        };
        let table = run_experiment(&cfg, &small_grid()).unwrap();
        assert_eq!(table.failures.len() + table.trials.len(), 2 * 3);
        assert!(!table.failures.is_empty());
    }

    #[test]
    fn train_single_matches_the_experiment_trial() {
        let cfg = ExperimentConfig {
            folds: 1,
            seeds: vec![2],
            ..small_cfg()
        };
        let grid = small_grid();
        let table = run_experiment(&cfg, &grid).unwrap();
        for spec in &cfg.variants {
            let one = train_single(&cfg, &grid, &spec.name, 1, 2).unwrap();
            assert_eq!(one.history, table.trial(&spec.name, 1, 2).unwrap().history);
        }
        assert!(train_single(&cfg, &grid, "nope", 0, 2).is_err());
        assert!(train_single(&cfg, &grid, "opt", 5, 2).is_err());
    }
}
