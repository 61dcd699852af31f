use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::de::DeserializeOwned;
use serde::Serialize;

use corrcast::correlation::scan_windows;
use corrcast::fracprog::{forecast, Bounds};
use corrcast::harness::{
    benchmark_grid_config, emit_report, report::read_json_report, run_experiment, train_single,
    ExperimentConfig, ReportFormat,
};
use corrcast::knowledge::{save_tree, TreeParams};
use corrcast::neural::save_model;
use corrcast::series::{load_csv, synth_field, SiteGrid, SynthConfig};
use corrcast::Error;

/// Correlation-optimized wind speed forecasting.
#[derive(Parser, Debug)]
#[command(name = "corrcast", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON settings file; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for synthesis, for the default synthetic grid, or for model
    /// initialization, depending on the subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// `timestamp,site_id,wind_speed_mps` CSV; the benchmark grid is
    /// synthesized (with `--seed`) when omitted.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// `site_id,x_km,y_km,altitude_m` sidecar for `--grid`.
    #[arg(long)]
    sites: Option<PathBuf>,
    /// Target site; defaults to the first site in the file.
    #[arg(long)]
    site: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic multi-site wind field. `--config`: synthesis settings.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sites: Option<usize>,
        #[arg(long)]
        periods: Option<usize>,
        #[arg(long)]
        decay_km: Option<f64>,
        #[arg(long)]
        temporal_rho: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        /// Periods of lead per km east of the target.
        #[arg(long)]
        lag_per_km: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the site coordinates here.
        #[arg(long)]
        sites_out: Option<PathBuf>,
    },
    /// List historical windows correlated with the target's latest window.
    /// `--config`: knowledge tree settings.
    Scan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        window: WindowArgs,
        /// Write the matches as JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Complete the next `n` periods from the best correlated window.
    /// `--config`: knowledge tree settings.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Build the knowledge tree at a forecast origin. `--config`: knowledge
    /// tree settings.
    BuildTree {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        window: WindowArgs,
        /// Forecast origin (period index); defaults to the end of the grid.
        #[arg(long)]
        origin: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one variant on one fold and save the checkpoint. `--config`:
    /// experiment settings.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value = "optimized_corr_gru")]
        variant: String,
        #[arg(long, default_value_t = 1)]
        fold: usize,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-epoch losses as JSON.
        #[arg(long)]
        history_out: Option<PathBuf>,
    },
    /// Run the full experiment and write report.json, report.csv and
    /// plotdata/. `--config`: experiment settings.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value = "report")]
        out_dir: PathBuf,
    },
    /// Re-emit a JSON report as csv, json or plotdata.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct WindowArgs {
    /// Recent window length.
    #[arg(long)]
    m: Option<usize>,
    /// Forecast horizon.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
}

impl WindowArgs {
    fn apply(&self, params: &mut TreeParams) {
        if let Some(m) = self.m {
            params.m = m;
        }
        if let Some(n) = self.n {
            params.n = n;
        }
        if let Some(t) = self.threshold {
            params.corr_threshold = t;
            params.corr_floor = params.corr_floor.min(t);
        }
    }
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> corrcast::Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn load_grid(args: &GridArgs, seed: Option<u64>) -> corrcast::Result<SiteGrid> {
    let grid = match &args.grid {
        Some(path) => load_csv(path, args.sites.as_deref())?,
        None => {
            let mut cfg = benchmark_grid_config();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            info!(
                "no --grid given, synthesizing the benchmark grid (seed {})",
                cfg.seed
            );
            synth_field(&cfg)?
        }
    };
    match &args.site {
        Some(site) => grid.with_target(site),
        None => Ok(grid),
    }
}

fn print_json<T: Serialize>(value: &T, out: Option<&Path>) -> corrcast::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn recent_window(grid: &SiteGrid, end: usize, m: usize) -> corrcast::Result<&[f64]> {
    if end < m || end > grid.len() {
        return Err(Error::InsufficientData {
            required: m,
            actual: end.min(grid.len()),
        });
    }
    Ok(&grid.target_series().values()[end - m..end])
}

fn run(command: Command) -> corrcast::Result<()> {
    match command {
        Command::Synth {
            common,
            sites,
            periods,
            decay_km,
            temporal_rho,
            noise,
            lag_per_km,
            out,
            sites_out,
        } => {
            let mut cfg: SynthConfig = read_config(common.config.as_deref())?;
            cfg.n_sites = sites.unwrap_or(cfg.n_sites);
            cfg.n_periods = periods.unwrap_or(cfg.n_periods);
            cfg.spatial_decay_km = decay_km.unwrap_or(cfg.spatial_decay_km);
            cfg.temporal_rho = temporal_rho.unwrap_or(cfg.temporal_rho);
            cfg.noise_std = noise.unwrap_or(cfg.noise_std);
            cfg.advection_lag_per_km = lag_per_km.unwrap_or(cfg.advection_lag_per_km);
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            let grid = synth_field(&cfg)?;
            grid.write_csv(&out)?;
            if let Some(path) = sites_out {
                grid.write_sites_csv(&path)?;
            }
            println!(
                "wrote {} sites x {} periods to {}",
                grid.sites().len(),
                grid.len(),
                out.display()
            );
        }
        Command::Scan {
            common,
            grid,
            window,
            out,
        } => {
            let mut params: TreeParams = read_config(common.config.as_deref())?;
            window.apply(&mut params);
            params.validate()?;
            let grid = load_grid(&grid, common.seed)?;
            let recent = recent_window(&grid, grid.len(), params.m)?;
            let matches = scan_windows(
                &grid,
                recent,
                params.n,
                params.corr_threshold,
                params.include_target_site,
            )?;
            info!(
                "{} windows reach |rho| >= {}",
                matches.len(),
                params.corr_threshold
            );
            print_json(&matches, out.as_deref())?;
        }
        Command::Forecast {
            common,
            grid,
            window,
        } => {
            let mut params: TreeParams = read_config(common.config.as_deref())?;
            window.apply(&mut params);
            params.validate()?;
            let grid = load_grid(&grid, common.seed)?;
            let recent = recent_window(&grid, grid.len(), params.m)?;
            let matches = scan_windows(
                &grid,
                recent,
                params.n,
                params.corr_threshold,
                params.include_target_site,
            )?;
            let best = matches.last().expect("scan never returns an empty list");
            let (_, solution) = forecast(best, recent, Bounds::physical(grid.max_speed())?)?;
            println!(
                "match: site {} offset {} rho {:.6}",
                best.source_site, best.offset, best.rho
            );
            let ys: Vec<String> = solution.y_star.iter().map(|v| format!("{v:.4}")).collect();
            println!("y*: {}", ys.join(" "));
            println!("rho: {:.6}", solution.rho_achieved);
        }
        Command::BuildTree {
            common,
            grid,
            window,
            origin,
            out,
        } => {
            let mut params: TreeParams = read_config(common.config.as_deref())?;
            window.apply(&mut params);
            params.validate()?;
            let grid = load_grid(&grid, common.seed)?;
            let t = origin.unwrap_or(grid.len());
            recent_window(&grid, t, params.m)?;
            let tree = corrcast::harness::tree_at_origin(&grid, t, &params)?;
            save_tree(&tree, &out)?;
            println!(
                "tree at period {t}: {} layers, {} nodes, {} relaxations -> {}",
                tree.layers.len(),
                tree.node_count(),
                tree.relaxations,
                out.display()
            );
        }
        Command::Train {
            common,
            grid,
            variant,
            fold,
            epochs,
            out,
            history_out,
        } => {
            let mut cfg: ExperimentConfig = read_config(common.config.as_deref())?;
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            let seed = common.seed.or(cfg.seeds.first().copied()).unwrap_or(0);
            let grid = load_grid(&grid, None)?;
            let trial = train_single(&cfg, &grid, &variant, fold, seed)?;
            save_model(&trial.model, &out)?;
            if let Some(path) = history_out {
                print_json(&trial.history, Some(&path))?;
            }
            println!(
                "{variant} fold {fold} seed {seed}: final train loss {:.6} after {} epochs in {:.1}s -> {}",
                trial.history.train_loss.last().copied().unwrap_or(f64::NAN),
                trial.history.train_loss.len(),
                trial.seconds,
                out.display()
            );
        }
        Command::Evaluate {
            common,
            grid,
            out_dir,
        } => {
            let cfg: ExperimentConfig = read_config(common.config.as_deref())?;
            let grid = load_grid(&grid, common.seed)?;
            let table = run_experiment(&cfg, &grid)?;
            fs::create_dir_all(&out_dir)?;
            emit_report(&table, ReportFormat::Json, &out_dir.join("report.json"))?;
            emit_report(&table, ReportFormat::Csv, &out_dir.join("report.csv"))?;
            emit_report(&table, ReportFormat::Plotdata, &out_dir.join("plotdata"))?;
            println!(
                "{} trials, {} failures -> {}",
                table.trials.len(),
                table.failures.len(),
                out_dir.display()
            );
            for cell in &table.cells {
                let med = &cell.rows[1];
                println!(
                    "{:<24} fold {} med test: acc {:.2}% rmse {:.4} r2 {:.4}",
                    cell.variant, cell.fold, med.test.acc_pct, med.test.rmse_mps, med.test.r2
                );
            }
        }
        Command::Report {
            common: _,
            input,
            format,
            out,
        } => {
            let format: ReportFormat = format.parse()?;
            let table = read_json_report(&input)?;
            emit_report(&table, format, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
