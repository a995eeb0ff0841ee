//! Demand aggregation: the day-of-week x hour x station cube and the
//! profiles derived from it.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{day_index, TripDataset, WEEKDAYS};

pub const HOURS: usize = 24;
/// First hour of the evening window; morning is `hour < MORNING_END`.
pub const MORNING_END: usize = 12;
/// Stations with fewer weekday boardings than this in either half-day are
/// excluded from clustering features.
pub const MIN_HALF_DAY_COUNT: u64 = 5;

const WORKING_DAYS: [Weekday; 5] =
    [Weekday::Mon, Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("{0} has zero total demand")]
    ZeroTotal(String),
    #[error("no weekday (Mon-Fri) data in cube")]
    NoWeekdayData,
    #[error("layer has {found} cells, expected {expected}")]
    LayerShape { expected: usize, found: usize },
    #[error("unknown station {0:?}")]
    UnknownStation(String),
}

/// One observed date: boardings by hour and station, hour-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayLayer {
    pub date: Option<NaiveDate>,
    pub weekday: Weekday,
    counts: Vec<u64>,
}

impl DayLayer {
    pub fn new(weekday: Weekday, date: Option<NaiveDate>, counts: Vec<u64>) -> Self {
        DayLayer { date, weekday, counts }
    }

    pub fn dated(date: NaiveDate, counts: Vec<u64>) -> Self {
        DayLayer { date: Some(date), weekday: date.weekday(), counts }
    }

    /// Count at `(hour, station)`; `stations` is the cube's station count.
    pub fn get(&self, hour: usize, station: usize, stations: usize) -> u64 {
        self.counts[hour * stations + station]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Boardings indexed by weekday, hour and entry station.
///
/// Counts are raw sums over every observed date; the per-weekday date count is
/// carried alongside so callers can average. The per-date layers are kept so
/// that forecasting can treat each date as a separate observation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemandCube {
    stations: Vec<String>,
    layers: Vec<DayLayer>,
    counts: Vec<u64>,
    weekday_multiplicity: [u32; 7],
}

impl DemandCube {
    pub fn from_layers(stations: Vec<String>, layers: Vec<DayLayer>) -> Result<Self, ProfileError> {
        let s = stations.len();
        let mut counts = vec![0u64; 7 * HOURS * s];
        let mut weekday_multiplicity = [0u32; 7];
        for layer in &layers {
            if layer.counts.len() != HOURS * s {
                return Err(ProfileError::LayerShape { expected: HOURS * s, found: layer.counts.len() });
            }
            let d = day_index(layer.weekday);
            weekday_multiplicity[d] += 1;
            let base = d * HOURS * s;
            for (dst, src) in counts[base..base + HOURS * s].iter_mut().zip(&layer.counts) {
                *dst += src;
            }
        }
        Ok(DemandCube { stations, layers, counts, weekday_multiplicity })
    }

    pub fn stations(&self) -> &[String] {
        &self.stations
    }

    pub fn station_index(&self, name: &str) -> Option<usize> {
        self.stations.iter().position(|s| s == name)
    }

    pub fn layers(&self) -> &[DayLayer] {
        &self.layers
    }

    pub fn count(&self, day: Weekday, hour: usize, station: usize) -> u64 {
        let s = self.stations.len();
        self.counts[(day_index(day) * HOURS + hour) * s + station]
    }

    pub fn multiplicity(&self, day: Weekday) -> u32 {
        self.weekday_multiplicity[day_index(day)]
    }

    pub fn weekday_multiplicity(&self) -> [u32; 7] {
        self.weekday_multiplicity
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn day_total(&self, day: Weekday) -> u64 {
        (0..HOURS).map(|h| self.hour_total(day, h)).sum()
    }

    /// All-station count for one weekday and hour.
    pub fn hour_total(&self, day: Weekday, hour: usize) -> u64 {
        let s = self.stations.len();
        let base = (day_index(day) * HOURS + hour) * s;
        self.counts[base..base + s].iter().sum()
    }

    fn station_sum(&self, days: &[Weekday], hours: std::ops::Range<usize>, station: usize) -> u64 {
        days.iter()
            .flat_map(|&d| hours.clone().map(move |h| (d, h)))
            .map(|(d, h)| self.count(d, h, station))
            .sum()
    }
}

pub fn build_demand_cube(dataset: &TripDataset) -> DemandCube {
    let stations: Vec<String> = dataset
        .records()
        .iter()
        .map(|r| r.entry_station.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> =
        stations.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let dates: BTreeMap<NaiveDate, usize> =
        dataset.dates_covered().iter().enumerate().map(|(i, d)| (*d, i)).collect();

    let s = stations.len();
    let mut grids = vec![vec![0u64; HOURS * s]; dates.len()];
    for rec in dataset.records() {
        let grid = &mut grids[dates[&rec.date]];
        grid[rec.hour() * s + index[rec.entry_station.as_str()]] += 1;
    }
    let layers = dates.keys().zip(grids).map(|(date, g)| DayLayer::dated(*date, g)).collect();
    DemandCube::from_layers(stations, layers).expect("layer shapes are consistent by construction")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DayShare {
    pub day: Weekday,
    pub percent: f64,
}

/// Share of demand per weekday, using per-date averages so that a weekday
/// observed on several dates is not over-weighted. Unobserved days are omitted.
pub fn day_share_profile(cube: &DemandCube) -> Result<Vec<DayShare>, ProfileError> {
    let averages: Vec<(Weekday, f64)> = WEEKDAYS
        .iter()
        .filter(|&&d| cube.multiplicity(d) > 0)
        .map(|&d| (d, cube.day_total(d) as f64 / f64::from(cube.multiplicity(d))))
        .collect();
    let total: f64 = averages.iter().map(|(_, v)| v).sum();
    if total <= 0.0 {
        return Err(ProfileError::ZeroTotal("cube".into()));
    }
    Ok(averages
        .into_iter()
        .map(|(day, v)| DayShare { day, percent: v / total * 100.0 })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "key", rename_all = "snake_case")]
pub enum CurveScope {
    City,
    Day(Weekday),
    Station(String),
}

/// Hourly demand as percent of the scope's total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadCurve {
    pub scope: CurveScope,
    pub values: [f64; HOURS],
}

impl LoadCurve {
    fn from_weights(scope: CurveScope, weights: [f64; HOURS]) -> Result<Self, ProfileError> {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            let name = match &scope {
                CurveScope::City => "city".to_string(),
                CurveScope::Day(d) => format!("day {d}"),
                CurveScope::Station(s) => format!("station {s}"),
            };
            return Err(ProfileError::ZeroTotal(name));
        }
        Ok(LoadCurve { scope, values: weights.map(|w| w / total * 100.0) })
    }

    /// Hours that exceed both neighbours (edge hours compare against their one neighbour).
    pub fn local_maxima(&self) -> Vec<usize> {
        let v = &self.values;
        (0..HOURS)
            .filter(|&h| {
                let left = h == 0 || v[h] > v[h - 1];
                let right = h == HOURS - 1 || v[h] > v[h + 1];
                left && right
            })
            .collect()
    }

    pub fn peak_hour(&self) -> usize {
        // first maximum wins
        (0..HOURS).fold(0, |best, h| if self.values[h] > self.values[best] { h } else { best })
    }
}

/// Load curve for one weekday, or for the whole week (per-date averages summed
/// over the observed weekdays) when `day` is `None`.
pub fn hourly_load_curve(cube: &DemandCube, day: Option<Weekday>) -> Result<LoadCurve, ProfileError> {
    let mut weights = [0.0; HOURS];
    match day {
        Some(d) => {
            for (h, w) in weights.iter_mut().enumerate() {
                *w = cube.hour_total(d, h) as f64;
            }
            LoadCurve::from_weights(CurveScope::Day(d), weights)
        }
        None => {
            for d in WEEKDAYS {
                let m = cube.multiplicity(d);
                if m == 0 {
                    continue;
                }
                for (h, w) in weights.iter_mut().enumerate() {
                    *w += cube.hour_total(d, h) as f64 / f64::from(m);
                }
            }
            LoadCurve::from_weights(CurveScope::City, weights)
        }
    }
}

/// Week-long load curve of a single entry station (per-date averages).
pub fn station_load_curve(cube: &DemandCube, station: &str) -> Result<LoadCurve, ProfileError> {
    let s = cube
        .station_index(station)
        .ok_or_else(|| ProfileError::UnknownStation(station.to_string()))?;
    let mut weights = [0.0; HOURS];
    for d in WEEKDAYS {
        let m = cube.multiplicity(d);
        if m == 0 {
            continue;
        }
        for (h, w) in weights.iter_mut().enumerate() {
            *w += cube.count(d, h, s) as f64 / f64::from(m);
        }
    }
    LoadCurve::from_weights(CurveScope::Station(station.to_string()), weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[value(name = "full")]
    FullDay,
    Morning,
    Evening,
}

impl Window {
    pub fn hours(self) -> std::ops::Range<usize> {
        match self {
            Window::FullDay => 0..HOURS,
            Window::Morning => 0..MORNING_END,
            Window::Evening => MORNING_END..HOURS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationShare {
    pub station: String,
    pub percent: f64,
}

/// Stations by share of boardings within a time window, descending, ties by name.
pub fn station_ranking(cube: &DemandCube, window: Window) -> Result<Vec<StationShare>, ProfileError> {
    let counts: Vec<u64> = (0..cube.stations().len())
        .map(|s| cube.station_sum(&WEEKDAYS, window.hours(), s))
        .collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(ProfileError::ZeroTotal(format!("{window:?} window")));
    }
    let mut ranked: Vec<(u64, &String)> = counts.into_iter().zip(cube.stations()).collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(ranked
        .into_iter()
        .map(|(c, st)| StationShare { station: st.clone(), percent: c as f64 / total as f64 * 100.0 })
        .collect())
}

/// Clustering inputs for one station, both natural-logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationFeature {
    pub station: String,
    pub log_pct_avg_weekday_demand: f64,
    pub log_morning_evening_ratio: f64,
}

impl StationFeature {
    pub fn point(&self) -> [f64; 2] {
        [self.log_morning_evening_ratio, self.log_pct_avg_weekday_demand]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExcludedStation {
    pub station: String,
    pub morning: u64,
    pub evening: u64,
}

pub fn station_features(
    cube: &DemandCube,
) -> Result<(Vec<StationFeature>, Vec<ExcludedStation>), ProfileError> {
    let days: Vec<Weekday> =
        WORKING_DAYS.iter().copied().filter(|&d| cube.day_total(d) > 0).collect();
    if days.is_empty() {
        return Err(ProfileError::NoWeekdayData);
    }
    let day_totals: Vec<f64> = days.iter().map(|&d| cube.day_total(d) as f64).collect();

    let mut features = Vec::new();
    let mut excluded = Vec::new();
    for (s, name) in cube.stations().iter().enumerate() {
        let morning = cube.station_sum(&WORKING_DAYS, Window::Morning.hours(), s);
        let evening = cube.station_sum(&WORKING_DAYS, Window::Evening.hours(), s);
        if morning < MIN_HALF_DAY_COUNT || evening < MIN_HALF_DAY_COUNT {
            excluded.push(ExcludedStation { station: name.clone(), morning, evening });
            continue;
        }
        let mean_pct = days
            .iter()
            .zip(&day_totals)
            .map(|(&d, &t)| cube.station_sum(&[d], 0..HOURS, s) as f64 / t * 100.0)
            .sum::<f64>()
            / days.len() as f64;
        features.push(StationFeature {
            station: name.clone(),
            log_pct_avg_weekday_demand: mean_pct.ln(),
            log_morning_evening_ratio: (morning as f64 / evening as f64).ln(),
        });
    }
    Ok((features, excluded))
}

/// Trip counts per (entry, exit) pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RouteDemand {
    pub counts: BTreeMap<(String, String), u64>,
}

impl RouteDemand {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn get(&self, entry: &str, exit: &str) -> u64 {
        self.counts.get(&(entry.to_string(), exit.to_string())).copied().unwrap_or(0)
    }
}

pub fn route_demand(dataset: &TripDataset) -> RouteDemand {
    let mut counts = BTreeMap::new();
    for rec in dataset.records() {
        *counts.entry((rec.entry_station.clone(), rec.exit_station.clone())).or_insert(0) += 1;
    }
    RouteDemand { counts }
}
