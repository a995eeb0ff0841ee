//! Report emitters. JSON reports share an envelope carrying `schema_version`;
//! CSV reports are flat, plot-ready tables.

use serde::Serialize;
use thiserror::Error;

use crate::cluster::{ClusterModel, KMeansFit, Period};
use crate::explain::{CorrelationReport, RegressionResult};
use crate::forecast::ComparisonRow;
use crate::ingest::ValidationReport;
use crate::profile::{DayShare, ExcludedStation, LoadCurve, StationShare, Window};
use crate::sim::{SimConfig, SimPair};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("csv writer: {0}")]
    Flush(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    report: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON with a trailing newline.
pub fn json<T: Serialize>(report: &str, body: &T) -> Result<Vec<u8>, ReportError> {
    let mut out = serde_json::to_vec_pretty(&Envelope { schema_version: SCHEMA_VERSION, report, body })?;
    out.push(b'\n');
    Ok(out)
}

fn table<I>(header: &[&str], rows: I) -> Result<Vec<u8>, ReportError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| ReportError::Flush(e.to_string()))
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn validation_csv(report: &ValidationReport) -> Result<Vec<u8>, ReportError> {
    let mut rows = vec![
        vec!["total_rows".to_string(), report.total_rows.to_string()],
        vec!["accepted".to_string(), report.accepted.to_string()],
        vec!["rejected".to_string(), report.rejected.to_string()],
        vec!["loop_trips".to_string(), report.loop_trips.to_string()],
    ];
    for (reason, n) in &report.rejection_reasons {
        rows.push(vec![format!("rejected:{reason}"), n.to_string()]);
    }
    table(&["metric", "value"], rows)
}

#[derive(Debug, Serialize)]
pub struct ProfileReport {
    pub day_shares: Vec<DayShare>,
    pub curve: LoadCurve,
    pub local_maxima: Vec<usize>,
    pub peak_hour: usize,
}

pub fn curve_csv(curve: &LoadCurve) -> Result<Vec<u8>, ReportError> {
    table(&["hour", "percent"], curve.values.iter().enumerate().map(|(h, p)| vec![h.to_string(), num(*p)]))
}

#[derive(Debug, Serialize)]
pub struct RankingReport {
    pub window: Window,
    pub stations: Vec<StationShare>,
}

pub fn ranking_csv(ranking: &[StationShare]) -> Result<Vec<u8>, ReportError> {
    table(&["station", "percent"], ranking.iter().map(|s| vec![s.station.clone(), num(s.percent)]))
}

#[derive(Debug, Serialize)]
pub struct ClusterReport<'a> {
    pub seed: u64,
    pub centroids: &'a [[f64; 2]],
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
    pub inertia_trace: &'a [f64],
    pub periods: &'a [Period],
    pub cluster_sizes: Vec<usize>,
    pub stations: Vec<ClusterRow>,
    pub excluded: &'a [ExcludedStation],
}

/// One station's assignment; `cluster` is 1-based.
#[derive(Debug, Serialize)]
pub struct ClusterRow {
    pub station: String,
    pub cluster: usize,
    pub log_pct: f64,
    pub log_ratio: f64,
}

fn cluster_rows(model: &ClusterModel) -> Vec<ClusterRow> {
    model
        .features
        .iter()
        .zip(&model.fit.assignments)
        .map(|(f, &c)| ClusterRow {
            station: f.station.clone(),
            cluster: c + 1,
            log_pct: f.log_pct_avg_weekday_demand,
            log_ratio: f.log_morning_evening_ratio,
        })
        .collect()
}

pub fn cluster_report<'a>(model: &'a ClusterModel, excluded: &'a [ExcludedStation], seed: u64) -> ClusterReport<'a> {
    let KMeansFit { k, centroids, inertia, iterations, converged, inertia_trace, assignments } = &model.fit;
    let mut cluster_sizes = vec![0; *k];
    for &a in assignments {
        cluster_sizes[a] += 1;
    }
    ClusterReport {
        seed,
        centroids,
        inertia: *inertia,
        iterations: *iterations,
        converged: *converged,
        inertia_trace,
        periods: &model.periods,
        cluster_sizes,
        stations: cluster_rows(model),
        excluded,
    }
}

pub fn cluster_csv(model: &ClusterModel) -> Result<Vec<u8>, ReportError> {
    table(
        &["station", "cluster", "log_pct", "log_ratio"],
        cluster_rows(model)
            .into_iter()
            .map(|r| vec![r.station, r.cluster.to_string(), num(r.log_pct), num(r.log_ratio)]),
    )
}

#[derive(Debug, Serialize)]
pub struct ForecastReport {
    pub training_days: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout_from: Option<String>,
    pub rows: Vec<ComparisonRow>,
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> Result<Vec<u8>, ReportError> {
    table(
        &["level", "method", "mape_pct", "params", "pairs_used", "pairs_excluded"],
        rows.iter().map(|r| {
            vec![
                r.level.as_str().to_string(),
                r.method.number().to_string(),
                num(r.mape.value),
                r.params.to_string(),
                r.mape.pairs_used.to_string(),
                r.mape.pairs_excluded_zero_actual.to_string(),
            ]
        }),
    )
}

#[derive(Debug, Serialize)]
pub struct ExplainReport {
    pub distance_scale: &'static str,
    pub correlations: CorrelationReport,
    pub regression: RegressionResult,
}

/// Coefficient table: intercept first, then predictors by name.
pub fn coefficients_csv(reg: &RegressionResult) -> Result<Vec<u8>, ReportError> {
    let mut rows = vec![vec![
        "intercept".to_string(),
        num(reg.intercept),
        num(reg.intercept_std_error),
        num(reg.intercept / reg.intercept_std_error),
        num(reg.intercept_p_value),
        (reg.intercept_p_value < crate::explain::SIGNIFICANCE_LEVEL).to_string(),
    ]];
    for (name, beta) in &reg.coefficients {
        rows.push(vec![
            name.clone(),
            num(*beta),
            num(reg.std_errors[name]),
            num(reg.t_stats[name]),
            num(reg.p_values[name]),
            reg.significant_at_5pct[name].to_string(),
        ]);
    }
    table(&["term", "estimate", "std_error", "t_stat", "p_value", "significant"], rows)
}

#[derive(Debug, Serialize)]
pub struct SweepReport<'a> {
    pub config: &'a SimConfig,
    pub results: &'a [SimPair],
}

pub fn sweep_csv(pairs: &[SimPair]) -> Result<Vec<u8>, ReportError> {
    table(
        &["f", "buses", "fixed_avg_wait", "dynamic_avg_wait", "reduction_pct", "fixed_stranded", "dynamic_stranded"],
        pairs.iter().map(|p| {
            vec![
                p.f.to_string(),
                p.buses.to_string(),
                num(p.fixed.avg_wait_min),
                num(p.dynamic.avg_wait_min),
                opt_num(p.reduction_pct),
                p.fixed.stranded.to_string(),
                p.dynamic.stranded.to_string(),
            ]
        }),
    )
}

/// Per-minute arrivals and queue lengths under both schedules.
pub fn trace_csv(arrivals: &[u64], fixed_queue: &[u64], dynamic_queue: &[u64]) -> Result<Vec<u8>, ReportError> {
    table(
        &["minute", "arrivals", "fixed_queue", "dynamic_queue"],
        arrivals
            .iter()
            .zip(fixed_queue)
            .zip(dynamic_queue)
            .enumerate()
            .map(|(t, ((a, f), d))| vec![t.to_string(), a.to_string(), f.to_string(), d.to_string()]),
    )
}
