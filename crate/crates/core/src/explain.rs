//! Route-level demand drivers: log-log correlations and an OLS regression of
//! route demand on entry/exit population and inter-station distance.

use std::collections::BTreeMap;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::profile::RouteDemand;

pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("invalid coordinate ({lat}, {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("station metadata: {0}")]
    Csv(#[from] csv::Error),
    #[error("station {station:?}: {reason}")]
    InvalidStation { station: String, reason: String },
    #[error("need at least {needed} usable observations, have {found}")]
    TooFewObservations { needed: usize, found: usize },
    #[error("{0} has zero variance")]
    ZeroVariance(String),
    #[error("singular design: {} collinear with earlier columns {:?}", .column, .with)]
    SingularDesign { column: String, with: Vec<String> },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    fn validate(self) -> Result<Self, ExplainError> {
        let ok = self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon);
        if ok {
            Ok(self)
        } else {
            Err(ExplainError::InvalidCoordinate { lat: self.lat, lon: self.lon })
        }
    }
}

/// Great-circle distance on a sphere of radius 6371 km.
pub fn haversine_km(a: LatLon, b: LatLon) -> Result<f64, ExplainError> {
    let (a, b) = (a.validate()?, b.validate()?);
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    #[serde(rename = "station_id")]
    pub station: String,
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub lga_population: u64,
}

impl StationMeta {
    pub fn location(&self) -> LatLon {
        LatLon::new(self.latitude, self.longitude)
    }

    fn validate(self) -> Result<Self, ExplainError> {
        let bad = |reason: String| ExplainError::InvalidStation { station: self.station.clone(), reason };
        if self.station.trim().is_empty() {
            return Err(bad("empty station id".into()));
        }
        if self.lga_population == 0 {
            return Err(bad("lga_population must be positive".into()));
        }
        self.location().validate().map_err(|e| bad(e.to_string()))?;
        Ok(self)
    }
}

/// Reads `station_id,name,latitude,longitude,lga_population`.
pub fn load_station_meta<R: Read>(reader: R) -> Result<Vec<StationMeta>, ExplainError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<StationMeta>()
        .map(|row| row.map_err(ExplainError::from).and_then(StationMeta::validate))
        .collect()
}

pub fn write_station_meta<W: std::io::Write>(writer: W, meta: &[StationMeta]) -> Result<(), ExplainError> {
    let mut w = csv::Writer::from_writer(writer);
    for m in meta {
        w.serialize(m)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceScale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    LogEntryPopulation,
    LogExitPopulation,
    DistanceKm,
    LogDistanceKm,
}

impl Predictor {
    pub fn name(self) -> &'static str {
        match self {
            Predictor::LogEntryPopulation => "log_entry_population",
            Predictor::LogExitPopulation => "log_exit_population",
            Predictor::DistanceKm => "distance_km",
            Predictor::LogDistanceKm => "log_distance_km",
        }
    }
}

/// Route-level design: one row per route with positive demand and metadata at both ends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteObservations {
    pub predictors: Vec<(Predictor, Vec<f64>)>,
    /// Natural log of total route demand.
    pub log_demand: Vec<f64>,
    pub excluded_zero_demand: usize,
    pub excluded_missing_meta: usize,
    pub excluded_zero_distance: usize,
}

impl RouteObservations {
    pub fn len(&self) -> usize {
        self.log_demand.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_demand.is_empty()
    }
}

pub fn route_observations(
    routes: &RouteDemand,
    meta: &[StationMeta],
    scale: DistanceScale,
) -> Result<RouteObservations, ExplainError> {
    let by_id: BTreeMap<&str, &StationMeta> = meta.iter().map(|m| (m.station.as_str(), m)).collect();
    let mut entry_pop = Vec::new();
    let mut exit_pop = Vec::new();
    let mut dist = Vec::new();
    let mut log_demand = Vec::new();
    let (mut zero, mut missing, mut zero_dist) = (0, 0, 0);

    for ((entry, exit), &count) in &routes.counts {
        if count == 0 {
            zero += 1;
            continue;
        }
        let (Some(a), Some(b)) = (by_id.get(entry.as_str()), by_id.get(exit.as_str())) else {
            missing += 1;
            continue;
        };
        let km = haversine_km(a.location(), b.location())?;
        let d = match scale {
            DistanceScale::Linear => km,
            DistanceScale::Log if km > 0.0 => km.ln(),
            DistanceScale::Log => {
                zero_dist += 1;
                continue;
            }
        };
        entry_pop.push((a.lga_population as f64).ln());
        exit_pop.push((b.lga_population as f64).ln());
        dist.push(d);
        log_demand.push((count as f64).ln());
    }

    let dist_predictor = match scale {
        DistanceScale::Linear => Predictor::DistanceKm,
        DistanceScale::Log => Predictor::LogDistanceKm,
    };
    Ok(RouteObservations {
        predictors: vec![
            (Predictor::LogEntryPopulation, entry_pop),
            (Predictor::LogExitPopulation, exit_pop),
            (dist_predictor, dist),
        ],
        log_demand,
        excluded_zero_demand: zero,
        excluded_missing_meta: missing,
        excluded_zero_distance: zero_dist,
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, ExplainError> {
    if x.len() != y.len() {
        return Err(ExplainError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(ExplainError::ZeroVariance("predictor".into()));
    }
    if syy == 0.0 {
        return Err(ExplainError::ZeroVariance("response".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub r: BTreeMap<String, f64>,
    pub n: usize,
    pub excluded_zero_demand: usize,
    pub excluded_missing_meta: usize,
    pub excluded_zero_distance: usize,
}

pub fn log_correlations(
    routes: &RouteDemand,
    meta: &[StationMeta],
    scale: DistanceScale,
) -> Result<CorrelationReport, ExplainError> {
    let obs = route_observations(routes, meta, scale)?;
    if obs.len() < 3 {
        return Err(ExplainError::TooFewObservations { needed: 3, found: obs.len() });
    }
    let mut r = BTreeMap::new();
    for (p, column) in &obs.predictors {
        let value = pearson(column, &obs.log_demand).map_err(|e| match e {
            ExplainError::ZeroVariance(which) if which == "predictor" => {
                ExplainError::ZeroVariance(p.name().to_string())
            }
            other => other,
        })?;
        r.insert(p.name().to_string(), value);
    }
    Ok(CorrelationReport {
        r,
        n: obs.len(),
        excluded_zero_demand: obs.excluded_zero_demand,
        excluded_missing_meta: obs.excluded_missing_meta,
        excluded_zero_distance: obs.excluded_zero_distance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    pub coefficients: BTreeMap<String, f64>,
    pub intercept: f64,
    pub std_errors: BTreeMap<String, f64>,
    pub t_stats: BTreeMap<String, f64>,
    pub p_values: BTreeMap<String, f64>,
    pub intercept_std_error: f64,
    pub intercept_p_value: f64,
    pub r_squared: f64,
    pub n: usize,
    pub degrees_of_freedom: usize,
    pub significant_at_5pct: BTreeMap<String, bool>,
}

/// Two-sided p-value of a t statistic.
pub fn two_sided_p(t: f64, df: usize) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Ordinary least squares with intercept via Householder QR.
pub fn ols(y: &[f64], columns: &[(String, Vec<f64>)]) -> Result<RegressionResult, ExplainError> {
    let n = y.len();
    let k = columns.len();
    for (_, c) in columns {
        if c.len() != n {
            return Err(ExplainError::LengthMismatch(c.len(), n));
        }
    }
    if n <= k + 1 {
        return Err(ExplainError::TooFewObservations { needed: k + 2, found: n });
    }
    let p = k + 1;
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { columns[j - 1].1[i] });
    let names: Vec<&str> =
        std::iter::once("intercept").chain(columns.iter().map(|(s, _)| s.as_str())).collect();

    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..p {
        let col_norm = x.column(j).norm();
        if r[(j, j)].abs() <= 1e-10 * col_norm.max(1.0) {
            // express column j through the earlier ones to name the culprits
            let r_head = r.view((0, 0), (j, j)).into_owned();
            let rhs = r.view((0, j), (j, 1)).into_owned();
            let coefs = r_head.solve_upper_triangular(&rhs).unwrap_or_else(|| DMatrix::zeros(j, 1));
            let with = (0..j)
                .filter(|&i| coefs[(i, 0)].abs() > 1e-8)
                .map(|i| names[i].to_string())
                .collect();
            return Err(ExplainError::SingularDesign { column: names[j].to_string(), with });
        }
    }

    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .expect("diagonal checked non-zero");
    let residuals = &yv - &x * &beta;
    let rss = residuals.norm_squared();
    let mean_y = yv.mean();
    let tss: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    if tss == 0.0 {
        return Err(ExplainError::ZeroVariance("response".into()));
    }

    let df = n - p;
    let sigma2 = rss / df as f64;
    let r_inv = r.clone().try_inverse().expect("non-singular triangular");
    let se: Vec<f64> = (0..p).map(|j| (sigma2 * r_inv.row(j).norm_squared()).sqrt()).collect();
    let t: Vec<f64> = (0..p)
        .map(|j| if se[j] == 0.0 && beta[j] == 0.0 { 0.0 } else { beta[j] / se[j] })
        .collect();
    let pv: Vec<f64> = t.iter().map(|&t| two_sided_p(t, df)).collect();

    let named = |v: &[f64]| -> BTreeMap<String, f64> {
        (1..p).map(|j| (names[j].to_string(), v[j])).collect()
    };
    let beta_vec: Vec<f64> = beta.iter().copied().collect();
    Ok(RegressionResult {
        coefficients: named(&beta_vec),
        intercept: beta[0],
        std_errors: named(&se),
        t_stats: named(&t),
        p_values: named(&pv),
        intercept_std_error: se[0],
        intercept_p_value: pv[0],
        r_squared: (1.0 - rss / tss).clamp(0.0, 1.0),
        n,
        degrees_of_freedom: df,
        significant_at_5pct: (1..p).map(|j| (names[j].to_string(), pv[j] < SIGNIFICANCE_LEVEL)).collect(),
    })
}

/// Regresses log route demand on log entry/exit population and distance.
pub fn fit_ols(
    routes: &RouteDemand,
    meta: &[StationMeta],
    scale: DistanceScale,
) -> Result<RegressionResult, ExplainError> {
    let obs = route_observations(routes, meta, scale)?;
    let columns: Vec<(String, Vec<f64>)> =
        obs.predictors.iter().map(|(p, c)| (p.name().to_string(), c.clone())).collect();
    ols(&obs.log_demand, &columns)
}
