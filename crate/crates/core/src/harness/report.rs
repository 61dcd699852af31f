use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::History;
use crate::series::{PeriodRange, SiteGrid, PERIOD_MINUTES};

use super::{ExperimentConfig, Layout, Metrics};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub variant: String,
    pub fold: usize,
    pub seed: u64,
    pub train: Metrics,
    pub test: Metrics,
    /// Wall-clock training time.
    pub seconds: f64,
    pub history: History,
    /// Rolling-origin forecasts, one per test period.
    pub test_predictions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub variant: String,
    pub fold: usize,
    pub seed: u64,
    pub message: String,
}

/// Trials ranked by test RMSE: `max` is the best trial, `min` the worst.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rank {
    Max,
    Med,
    Min,
}

impl Rank {
    pub fn as_str(self) -> &'static str {
        match self {
            Rank::Max => "max",
            Rank::Med => "med",
            Rank::Min => "min",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub rank: Rank,
    pub seed: u64,
    pub train: Metrics,
    pub test: Metrics,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub variant: String,
    pub fold: usize,
    /// `max`, `med`, `min` in that order.
    pub rows: Vec<RankedRow>,
    pub test_range: PeriodRange,
    pub test_actual: Vec<f64>,
    /// Forecasts of the median trial.
    pub median_predictions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub config: ExperimentConfig,
    pub start_time: NaiveDateTime,
    pub layout: Layout,
    /// One per (variant, fold) with at least one successful trial, in
    /// fold-major, configured-variant order.
    pub cells: Vec<ReportCell>,
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
}

impl ReportTable {
    pub(crate) fn assemble(
        config: ExperimentConfig,
        grid: &SiteGrid,
        layout: Layout,
        trials: Vec<TrialResult>,
        failures: Vec<TrialFailure>,
    ) -> Result<Self> {
        let target = grid.target_series().values();
        let mut cells = Vec::new();
        for split in &layout.splits {
            for spec in &config.variants {
                let mut ranked: Vec<&TrialResult> = trials
                    .iter()
                    .filter(|t| t.variant == spec.name && t.fold == split.fold_id)
                    .collect();
                if ranked.is_empty() {
                    continue;
                }
                ranked.sort_by(|a, b| {
                    a.test
                        .rmse_mps
                        .total_cmp(&b.test.rmse_mps)
                        .then(a.seed.cmp(&b.seed))
                });
                let pick = [
                    (Rank::Max, ranked[0]),
                    (Rank::Med, ranked[(ranked.len() - 1) / 2]),
                    (Rank::Min, ranked[ranked.len() - 1]),
                ];
                let te = split.test_range;
                cells.push(ReportCell {
                    variant: spec.name.clone(),
                    fold: split.fold_id,
                    rows: pick
                        .iter()
                        .map(|&(rank, t)| RankedRow {
                            rank,
                            seed: t.seed,
                            train: t.train,
                            test: t.test,
                            seconds: t.seconds,
                        })
                        .collect(),
                    test_range: te,
                    test_actual: target[te.start..te.end].to_vec(),
                    median_predictions: pick[1].1.test_predictions.clone(),
                });
            }
        }
        Ok(ReportTable {
            config,
            start_time: grid.start_time(),
            layout,
            cells,
            trials,
            failures,
        })
    }

    /// Zeroes every wall-clock field; what remains is a pure function of the
    /// configuration and the grid.
    pub fn strip_timing(&mut self) {
        for t in &mut self.trials {
            t.seconds = 0.0;
        }
        for c in &mut self.cells {
            for r in &mut c.rows {
                r.seconds = 0.0;
            }
        }
    }

    pub fn cell(&self, variant: &str, fold: usize) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.fold == fold)
    }

    pub fn trial(&self, variant: &str, fold: usize, seed: u64) -> Option<&TrialResult> {
        self.trials
            .iter()
            .find(|t| t.variant == variant && t.fold == fold && t.seed == seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    /// Directory with `loss_curves.tsv` and `predictions.tsv`.
    Plotdata,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "plotdata" => Ok(ReportFormat::Plotdata),
            other => Err(Error::param(
                "format",
                format!("unknown report format {other:?} (csv, json, plotdata)"),
            )),
        }
    }
}

pub const CSV_HEADER: [&str; 8] = [
    "variant", "fold", "rank", "split", "acc_pct", "rmse_mps", "r2", "seconds",
];

pub fn emit_report(table: &ReportTable, format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Csv => write_csv(table, path),
        ReportFormat::Json => {
            fs::write(path, serde_json::to_string_pretty(table)?)?;
            Ok(())
        }
        ReportFormat::Plotdata => write_plotdata(table, path),
    }
}

pub fn read_json_report(path: &Path) -> Result<ReportTable> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_csv(table: &ReportTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for cell in &table.cells {
        for row in &cell.rows {
            for (split, m) in [("train", row.train), ("test", row.test)] {
                w.write_record([
                    cell.variant.clone(),
                    cell.fold.to_string(),
                    row.rank.as_str().to_string(),
                    split.to_string(),
                    format!("{:.4}", m.acc_pct),
                    format!("{:.6}", m.rmse_mps),
                    format!("{:.6}", m.r2),
                    format!("{:.3}", row.seconds),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_plotdata(table: &ReportTable, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut curves = fs::File::create(dir.join("loss_curves.tsv"))?;
    writeln!(curves, "variant\tfold\tseed\tepoch\ttrain_loss\ttest_loss")?;
    for t in &table.trials {
        let mut test = t.history.test_loss.iter().peekable();
        for (epoch, loss) in t.history.train_loss.iter().enumerate() {
            let test_loss = match test.peek() {
                Some(&&(e, l)) if e == epoch => {
                    test.next();
                    l.to_string()
                }
                _ => String::new(),
            };
            writeln!(
                curves,
                "{}\t{}\t{}\t{}\t{}\t{}",
                t.variant, t.fold, t.seed, epoch, loss, test_loss
            )?;
        }
    }

    let mut overlay = fs::File::create(dir.join("predictions.tsv"))?;
    writeln!(
        overlay,
        "variant\tfold\tperiod\ttimestamp\tactual\tpredicted"
    )?;
    let step = chrono::Duration::minutes(PERIOD_MINUTES);
    for cell in &table.cells {
        for (k, (a, p)) in cell
            .test_actual
            .iter()
            .zip(&cell.median_predictions)
            .enumerate()
        {
            let period = cell.test_range.start + k;
            let ts = table.start_time + step * period as i32;
            writeln!(
                overlay,
                "{}\t{}\t{}\t{}\t{}\t{}",
                cell.variant,
                cell.fold,
                period,
                ts.format("%Y-%m-%dT%H:%M:%S"),
                a,
                p
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{layout, VariantSpec};
    use crate::neural::{CellKind, Variant};
    use crate::series::synth_field;

    fn metrics(r: f64) -> Metrics {
        Metrics {
            acc_pct: 100.0 - r,
            rmse_mps: r,
            r2: 1.0 - r / 10.0,
        }
    }

    fn fake_table() -> ReportTable {
        let config = ExperimentConfig {
            variants: vec![
                VariantSpec::new("a", Variant::OptimizedCorr, CellKind::Gru),
                VariantSpec::new("b", Variant::PlainLstm, CellKind::Lstm),
            ],
            te_len: 4,
            folds: 3,
            seeds: vec![0, 1, 2, 3],
            epochs: 3,
            ..ExperimentConfig::default()
        };
        let grid = synth_field(&crate::series::SynthConfig {
            n_sites: 1,
            n_periods: 400,
            ..Default::default()
        })
        .unwrap();
        let lay = layout(&config, grid.len()).unwrap();
        let mut trials = Vec::new();
        for fold in 1..=3 {
            for v in ["a", "b"] {
                for seed in 0..4u64 {
                    let r = 1.0 + ((seed * 7 + fold as u64) % 5) as f64 / 10.0;
                    trials.push(TrialResult {
                        variant: v.into(),
                        fold,
                        seed,
                        train: metrics(r / 2.0),
                        test: metrics(r),
                        seconds: 0.5,
                        history: History {
                            train_loss: vec![3.0, 2.0, 1.0],
                            test_loss: vec![(1, 2.5)],
                        },
                        test_predictions: vec![r; 4],
                    });
                }
            }
        }
        ReportTable::assemble(config, &grid, lay, trials, Vec::new()).unwrap()
    }

    #[test]
    fn ranks_are_ordered_by_test_rmse() {
        let t = fake_table();
        assert_eq!(t.cells.len(), 6);
        for c in &t.cells {
            let r: Vec<f64> = c.rows.iter().map(|r| r.test.rmse_mps).collect();
            assert!(r[0] <= r[1] && r[1] <= r[2]);
            assert_eq!(
                c.rows.iter().map(|r| r.rank).collect::<Vec<_>>(),
                vec![Rank::Max, Rank::Med, Rank::Min]
            );
        }
    }

    #[test]
    fn csv_layout() {
        let t = fake_table();
        let f = tempfile::NamedTempFile::new().unwrap();
        emit_report(&t, ReportFormat::Csv, f.path()).unwrap();
        let text = fs::read_to_string(f.path()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        // variants x folds x ranks x splits, plus the header
        assert_eq!(lines.len(), 2 * 3 * 3 * 2 + 1);
        assert!(lines[1].starts_with("a,1,max,train,"));
    }

    #[test]
    fn json_round_trip() {
        let t = fake_table();
        let f = tempfile::NamedTempFile::new().unwrap();
        emit_report(&t, ReportFormat::Json, f.path()).unwrap();
        assert_eq!(read_json_report(f.path()).unwrap(), t);
    }

    #[test]
    fn plotdata_has_one_row_per_epoch() {
        let t = fake_table();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&t, ReportFormat::Plotdata, dir.path()).unwrap();
        let curves = fs::read_to_string(dir.path().join("loss_curves.tsv")).unwrap();
        assert_eq!(curves.lines().count(), 1 + t.trials.len() * 3);
        assert!(curves.lines().nth(2).unwrap().ends_with("\t2.5"));
        let overlay = fs::read_to_string(dir.path().join("predictions.tsv")).unwrap();
        assert_eq!(overlay.lines().count(), 1 + t.cells.len() * 4);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert!("xlsx".parse::<ReportFormat>().is_err());
    }
}
