//! Multi-site wind speed records: ingestion, validation, summary statistics,
//! cross-validation splits and a seeded synthetic generator.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minutes between consecutive samples (one period).
pub const PERIOD_MINUTES: i64 = 10;

/// Periods per day at the fixed 10 minute cadence.
pub const PERIODS_PER_DAY: usize = 144;

/// Identifier of the generator behind [`synth_field`]: ChaCha with 8 rounds,
/// seeded through `SeedableRng::seed_from_u64`, normals by ziggurat sampling.
pub const SYNTH_RNG: &str = "chacha8/seed_from_u64/standard-normal-ziggurat";

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

pub fn cadence() -> Duration {
    Duration::minutes(PERIOD_MINUTES)
}

/// One site's gap-free 10-minute wind speed record (m/s).
#[derive(Clone, Debug, PartialEq)]
pub struct WindSeries {
    site_id: String,
    start_time: NaiveDateTime,
    values: Vec<f64>,
}

impl WindSeries {
    pub fn new(
        site_id: impl Into<String>,
        start_time: NaiveDateTime,
        values: Vec<f64>,
    ) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidSpeed {
                    line: i + 1,
                    value: v,
                });
            }
        }
        Ok(WindSeries {
            site_id: site_id.into(),
            start_time,
            values,
        })
    }

    pub fn site_id(&self) -> &str {
        &self.site_id
    }

    pub fn start_time(&self) -> NaiveDateTime {
        self.start_time
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, period: usize) -> NaiveDateTime {
        self.start_time + cadence() * period as i32
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: String,
    pub x_km: f64,
    pub y_km: f64,
    pub altitude_m: f64,
}

impl Site {
    pub fn distance_km(&self, other: &Site) -> f64 {
        (self.x_km - other.x_km).hypot(self.y_km - other.y_km)
    }
}

/// Aligned records of every site plus the site being forecast.
///
/// All series share start time and length; `sites[i]` describes `series[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteGrid {
    sites: Vec<Site>,
    series: Vec<WindSeries>,
    target: usize,
}

impl SiteGrid {
    pub fn new(sites: Vec<Site>, series: Vec<WindSeries>, target_site: &str) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::param("sites", "grid needs at least one site"));
        }
        if sites.len() != series.len() {
            return Err(Error::Misaligned(format!(
                "{} sites but {} series",
                sites.len(),
                series.len()
            )));
        }
        let mut seen = HashMap::new();
        for (i, (site, s)) in sites.iter().zip(&series).enumerate() {
            if seen.insert(site.id.as_str(), i).is_some() {
                return Err(Error::Misaligned(format!("duplicate site id {}", site.id)));
            }
            if site.id != s.site_id {
                return Err(Error::Misaligned(format!(
                    "site {} paired with series of {}",
                    site.id, s.site_id
                )));
            }
        }
        let first = &series[0];
        for s in &series[1..] {
            if s.start_time != first.start_time || s.len() != first.len() {
                return Err(Error::Misaligned(format!(
                    "site {} covers {} x {} periods from {}, site {} covers {} from {}",
                    s.site_id,
                    s.len(),
                    PERIOD_MINUTES,
                    s.start_time,
                    first.site_id,
                    first.len(),
                    first.start_time
                )));
            }
        }
        let target = *seen
            .get(target_site)
            .ok_or_else(|| Error::param("target_site", format!("unknown site {target_site}")))?;
        Ok(SiteGrid {
            sites,
            series,
            target,
        })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn series(&self) -> &[WindSeries] {
        &self.series
    }

    pub fn target_site(&self) -> &str {
        &self.sites[self.target].id
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn target_series(&self) -> &WindSeries {
        &self.series[self.target]
    }

    pub fn site_index(&self, id: &str) -> Option<usize> {
        self.sites.iter().position(|s| s.id == id)
    }

    /// Number of periods shared by every series.
    pub fn len(&self) -> usize {
        self.series[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn start_time(&self) -> NaiveDateTime {
        self.series[0].start_time
    }

    pub fn max_speed(&self) -> f64 {
        self.series
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn with_target(mut self, target_site: &str) -> Result<Self> {
        self.target = self
            .site_index(target_site)
            .ok_or_else(|| Error::param("target_site", format!("unknown site {target_site}")))?;
        Ok(self)
    }

    /// The first `len` periods of every series: the history visible at forecast origin `len`.
    pub fn prefix(&self, len: usize) -> SiteGrid {
        let len = len.min(self.len());
        SiteGrid {
            sites: self.sites.clone(),
            series: self
                .series
                .iter()
                .map(|s| WindSeries {
                    site_id: s.site_id.clone(),
                    start_time: s.start_time,
                    values: s.values[..len].to_vec(),
                })
                .collect(),
            target: self.target,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "timestamp,site_id,wind_speed_mps")?;
        for t in 0..self.len() {
            let stamp = self.series[0].time_at(t).format(TIMESTAMP_FORMAT);
            for s in &self.series {
                writeln!(out, "{stamp},{},{}", s.site_id, s.values[t])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_sites_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "site_id,x_km,y_km,altitude_m")?;
        for s in &self.sites {
            writeln!(out, "{},{},{},{}", s.id, s.x_km, s.y_km, s.altitude_m)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.naive_utc());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
}

/// Reads `timestamp,site_id,wind_speed_mps` rows and an optional
/// `site_id,x_km,y_km,altitude_m` sidecar. The first site to appear becomes
/// the target; sites missing from the sidecar sit at the origin.
pub fn load_csv(path: &Path, sites_path: Option<&Path>) -> Result<SiteGrid> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let expected = ["timestamp", "site_id", "wind_speed_mps"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!("header must be {}", expected.join(",")),
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(NaiveDateTime, f64, usize)>> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::MalformedRow {
            line,
            message: e.to_string(),
        })?;
        if record.len() != 3 {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let stamp = parse_timestamp(&record[0]).ok_or_else(|| Error::MalformedRow {
            line,
            message: format!("unparseable timestamp {:?}", &record[0]),
        })?;
        let site = record[1].to_string();
        if site.is_empty() {
            return Err(Error::MalformedRow {
                line,
                message: "empty site_id".into(),
            });
        }
        let value: f64 = record[2].parse().map_err(|_| Error::MalformedRow {
            line,
            message: format!("unparseable wind speed {:?}", &record[2]),
        })?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidSpeed { line, value });
        }
        rows.entry(site.clone())
            .or_insert_with(|| {
                order.push(site.clone());
                Vec::new()
            })
            .push((stamp, value, line));
    }
    if order.is_empty() {
        return Err(Error::MalformedRow {
            line: 1,
            message: "no data rows".into(),
        });
    }

    let mut series = Vec::with_capacity(order.len());
    for id in &order {
        let mut samples = rows.remove(id).unwrap_or_default();
        samples.sort_by_key(|&(t, _, line)| (t, line));
        for pair in samples.windows(2) {
            let (t0, _, _) = pair[0];
            let (t1, _, line) = pair[1];
            if t1 == t0 {
                return Err(Error::MalformedRow {
                    line,
                    message: format!("duplicate timestamp {t1} for site {id}"),
                });
            }
            if t1 - t0 != cadence() {
                return Err(Error::Misaligned(format!(
                    "site {id} has no sample between {t0} and {t1} (line {line})"
                )));
            }
        }
        let start = samples[0].0;
        let values = samples.into_iter().map(|(_, v, _)| v).collect();
        series.push(WindSeries::new(id.clone(), start, values)?);
    }

    let mut coords: HashMap<String, Site> = HashMap::new();
    if let Some(sp) = sites_path {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(sp)?;
        for (i, record) in reader.deserialize::<SiteRow>().enumerate() {
            let row = record.map_err(|e| Error::MalformedRow {
                line: i + 2,
                message: e.to_string(),
            })?;
            if !rows_contains(&order, &row.site_id) {
                return Err(Error::MalformedRow {
                    line: i + 2,
                    message: format!("site {} has no wind speed records", row.site_id),
                });
            }
            coords.insert(
                row.site_id.clone(),
                Site {
                    id: row.site_id,
                    x_km: row.x_km,
                    y_km: row.y_km,
                    altitude_m: row.altitude_m,
                },
            );
        }
    }
    let sites = order
        .iter()
        .map(|id| {
            coords.remove(id).unwrap_or(Site {
                id: id.clone(),
                x_km: 0.0,
                y_km: 0.0,
                altitude_m: 0.0,
            })
        })
        .collect();
    SiteGrid::new(sites, series, &order[0])
}

fn rows_contains(order: &[String], id: &str) -> bool {
    order.iter().any(|o| o == id)
}

#[derive(Deserialize)]
struct SiteRow {
    site_id: String,
    x_km: f64,
    y_km: f64,
    altitude_m: f64,
}

/// Population summary statistics of one series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub q1: f64,
    pub q3: f64,
}

pub fn describe(series: &WindSeries) -> Result<SeriesStats> {
    describe_values(series.values())
}

/// Moments divide by n; a constant series has skewness and excess kurtosis 0.
pub fn describe_values(values: &[f64]) -> Result<SeriesStats> {
    if values.is_empty() {
        return Err(Error::InsufficientData {
            required: 1,
            actual: 0,
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(SeriesStats {
        min: sorted[0],
        mean,
        max: sorted[sorted.len() - 1],
        std: m2.sqrt(),
        skewness,
        excess_kurtosis,
        q1: quantile_sorted(&sorted, 0.25),
        q3: quantile_sorted(&sorted, 0.75),
    })
}

/// Linear interpolation between order statistics at rank `(n - 1) * p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Half-open period-index interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodRange {
    pub start: usize,
    pub end: usize,
}

impl PeriodRange {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn shifted(self, by: usize) -> Self {
        PeriodRange {
            start: self.start + by,
            end: self.end + by,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub fold_id: usize,
    pub train_range: PeriodRange,
    pub test_range: PeriodRange,
}

pub fn split_cv(grid: &SiteGrid, te_len: usize, folds: usize) -> Result<Vec<DatasetSplit>> {
    split_periods(grid.len(), te_len, folds)
}

/// Expanding-window folds: fold k (1-based) trains on `[0, k * te_len)` and
/// tests on the following `te_len` periods.
pub fn split_periods(n_periods: usize, te_len: usize, folds: usize) -> Result<Vec<DatasetSplit>> {
    if te_len == 0 {
        return Err(Error::param("te_len", "must be positive"));
    }
    if folds == 0 {
        return Err(Error::param("folds", "must be positive"));
    }
    let required = (folds + 1) * te_len;
    if n_periods < required {
        return Err(Error::InsufficientData {
            required,
            actual: n_periods,
        });
    }
    Ok((1..=folds)
        .map(|k| DatasetSplit {
            fold_id: k,
            train_range: PeriodRange {
                start: 0,
                end: k * te_len,
            },
            test_range: PeriodRange {
                start: k * te_len,
                end: (k + 1) * te_len,
            },
        })
        .collect())
}

/// Parameters of the synthetic multi-site field.
///
/// Sites sit on a square lattice with 1 km spacing, row by row, named
/// `S1..Sn`; `S1` at the origin is the target. Each site follows an AR(1)
/// anomaly around a shared diurnal base, innovations correlated across sites
/// as `exp(-distance / spatial_decay_km)`. With `advection_lag_per_km > 0`
/// the field is frozen and carried along +x: a site at `x` km shows at
/// period `t` what its own latent signal does at `t + round(lag * x)`, so
/// downstream sites lead the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_sites: usize,
    pub n_periods: usize,
    pub spatial_decay_km: f64,
    pub temporal_rho: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub advection_lag_per_km: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_sites: 8,
            n_periods: 5000,
            spatial_decay_km: 10.0,
            temporal_rho: 0.95,
            noise_std: 0.5,
            seed: 0,
            advection_lag_per_km: 0.0,
        }
    }
}

pub const BASE_MEAN_MPS: f64 = 7.0;
pub const BASE_AMPLITUDE_MPS: f64 = 2.0;

/// Shared diurnal signal of the synthetic field at period `t`.
pub fn diurnal_base(t: usize) -> f64 {
    let phase = 2.0 * PI * (t % PERIODS_PER_DAY) as f64 / PERIODS_PER_DAY as f64;
    BASE_MEAN_MPS - BASE_AMPLITUDE_MPS * phase.cos()
}

pub fn synth_start_time() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2015, 6, 21)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid constant date")
}

pub fn lattice_sites(n_sites: usize) -> Vec<Site> {
    let cols = (n_sites as f64).sqrt().ceil().max(1.0) as usize;
    (0..n_sites)
        .map(|i| Site {
            id: format!("S{}", i + 1),
            x_km: (i % cols) as f64,
            y_km: (i / cols) as f64,
            altitude_m: 0.0,
        })
        .collect()
}

pub fn synth_field(cfg: &SynthConfig) -> Result<SiteGrid> {
    if cfg.n_sites == 0 {
        return Err(Error::param("n_sites", "must be positive"));
    }
    if cfg.n_periods == 0 {
        return Err(Error::param("n_periods", "must be positive"));
    }
    if !(cfg.spatial_decay_km > 0.0) {
        return Err(Error::param("spatial_decay_km", "must be positive"));
    }
    if !(cfg.temporal_rho > 0.0 && cfg.temporal_rho < 1.0) {
        return Err(Error::param("temporal_rho", "must lie in (0, 1)"));
    }
    if !(cfg.noise_std >= 0.0 && cfg.noise_std.is_finite()) {
        return Err(Error::param("noise_std", "must be finite and >= 0"));
    }
    if !(cfg.advection_lag_per_km >= 0.0 && cfg.advection_lag_per_km.is_finite()) {
        return Err(Error::param(
            "advection_lag_per_km",
            "must be finite and >= 0",
        ));
    }

    let sites = lattice_sites(cfg.n_sites);
    let n = cfg.n_sites;
    let lags: Vec<usize> = sites
        .iter()
        .map(|s| (cfg.advection_lag_per_km * s.x_km).round() as usize)
        .collect();
    let span = cfg.n_periods + lags.iter().copied().max().unwrap_or(0);

    let corr: Vec<f64> = (0..n * n)
        .map(|k| (-sites[k / n].distance_km(&sites[k % n]) / cfg.spatial_decay_km).exp())
        .collect();
    let chol = psd_cholesky(&corr, n);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut z = vec![0.0; n];
    let mut eps = vec![0.0; n];
    let mut draw = |rng: &mut ChaCha8Rng, eps: &mut [f64]| {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        for (i, e) in eps.iter_mut().enumerate() {
            *e = (0..=i).map(|j| chol[i * n + j] * z[j]).sum();
        }
    };

    let rho = cfg.temporal_rho;
    let stationary = cfg.noise_std / (1.0 - rho * rho).sqrt();
    let mut anomaly = vec![0.0; n];
    let mut latent = vec![vec![0.0; span]; n];
    for t in 0..span {
        draw(&mut rng, &mut eps);
        for ((a, e), lat) in anomaly.iter_mut().zip(&eps).zip(&mut latent) {
            *a = if t == 0 {
                stationary * e
            } else {
                rho * *a + cfg.noise_std * e
            };
            lat[t] = diurnal_base(t) + *a;
        }
    }

    let start = synth_start_time();
    let series = sites
        .iter()
        .zip(&latent)
        .zip(&lags)
        .map(|((site, lat), &lag)| {
            let values = lat[lag..lag + cfg.n_periods]
                .iter()
                .map(|&v| v.max(0.0))
                .collect();
            WindSeries::new(site.id.clone(), start, values)
        })
        .collect::<Result<Vec<_>>>()?;
    SiteGrid::new(sites, series, "S1")
}

/// Lower-triangular factor of a positive semidefinite matrix; columns whose
/// pivot vanishes (perfectly correlated sites) are zeroed.
fn psd_cholesky(a: &[f64], n: usize) -> Vec<f64> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let d = a[j * n + j] - (0..j).map(|k| l[j * n + k] * l[j * n + k]).sum::<f64>();
        if d <= 1e-12 {
            continue;
        }
        let pivot = d.sqrt();
        l[j * n + j] = pivot;
        for i in j + 1..n {
            let s = a[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            l[i * n + j] = s / pivot;
        }
    }
    l
}
