//! Conditional-mean forecasting at city and station level.
//!
//! Each method predicts the training mean of the cell selected by its
//! conditioning key:
//!
//! | method | city      | station      |
//! |--------|-----------|--------------|
//! | 1      | a         | a(s)         |
//! | 2      | a(d)      | a(d, s)      |
//! | 3      | a(h)      | a(h, s)      |
//! | 4      | a(d, h)   | a(d, h, s)   |
//!
//! Every observed date is one observation per (hour, station) cell.

use chrono::{NaiveDate, Weekday};
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::profile::{DemandCube, HOURS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ForecastError {
    #[error("empty training slice")]
    EmptyTraining,
    #[error("no training observations for {0}")]
    MissingDay(Weekday),
    #[error("parameter cell {0} has no observations")]
    EmptyCell(usize),
    #[error("no usable evaluation pairs (all actuals zero or slice empty)")]
    NoUsablePairs,
    #[error("key ({day}, {hour}, {station:?}) outside model dims")]
    OutOfRange { day: usize, hour: usize, station: Option<usize> },
    #[error("station index required at station level")]
    MissingStation,
    #[error("station index given to a city-level model")]
    UnexpectedStation,
    #[error("weekday {0} is not part of the model")]
    UnknownDay(Weekday),
    #[error("held-out evaluation needs dated observations")]
    UndatedLayer,
    #[error("panel layer has {found} values, expected {expected}")]
    LayerShape { expected: usize, found: usize },
    #[error("method must be 1-4, got {0}")]
    BadMethod(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Constant = 1,
    ByDay = 2,
    ByHour = 3,
    ByDayHour = 4,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Constant, Method::ByDay, Method::ByHour, Method::ByDayHour];

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Method {
    type Error = ForecastError;

    fn try_from(n: u8) -> Result<Self, Self::Error> {
        match n {
            1 => Ok(Method::Constant),
            2 => Ok(Method::ByDay),
            3 => Ok(Method::ByHour),
            4 => Ok(Method::ByDayHour),
            other => Err(ForecastError::BadMethod(other)),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    City,
    Station,
}

impl Level {
    pub const ALL: [Level; 2] = [Level::City, Level::Station];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::City => "city",
            Level::Station => "station",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dims {
    pub days: usize,
    pub hours: usize,
    pub stations: usize,
}

pub fn param_count(method: Method, level: Level, dims: Dims) -> usize {
    let per_station = match level {
        Level::City => 1,
        Level::Station => dims.stations,
    };
    let cells = match method {
        Method::Constant => 1,
        Method::ByDay => dims.days,
        Method::ByHour => dims.hours,
        Method::ByDayHour => dims.days * dims.hours,
    };
    cells * per_station
}

/// One observed date: values by hour and station, hour-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelLayer {
    pub day: usize,
    pub date: Option<NaiveDate>,
    pub values: Vec<f64>,
}

/// Observations on a `days x hours x stations` grid, possibly several per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub dims: Dims,
    pub layers: Vec<PanelLayer>,
}

impl Panel {
    pub fn new(dims: Dims, layers: Vec<PanelLayer>) -> Result<Self, ForecastError> {
        let expected = dims.hours * dims.stations;
        for l in &layers {
            if l.values.len() != expected {
                return Err(ForecastError::LayerShape { expected, found: l.values.len() });
            }
            if l.day >= dims.days {
                return Err(ForecastError::OutOfRange { day: l.day, hour: 0, station: None });
            }
        }
        Ok(Panel { dims, layers })
    }

    /// Sums stations into a single city series.
    pub fn to_city(&self) -> Panel {
        let s = self.dims.stations;
        Panel {
            dims: Dims { stations: 1, ..self.dims },
            layers: self
                .layers
                .iter()
                .map(|l| PanelLayer {
                    day: l.day,
                    date: l.date,
                    values: l.values.chunks(s.max(1)).map(|c| c.iter().sum()).collect(),
                })
                .collect(),
        }
    }

    fn observations(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        let s = self.dims.stations;
        self.layers.iter().flat_map(move |l| {
            l.values.iter().enumerate().map(move |(i, &v)| (l.day, i / s, i % s, v))
        })
    }
}

/// Which weekdays train the model and how evaluation is split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingOptions {
    pub days: Vec<Weekday>,
    /// When set, dates on or after this day are held out for evaluation.
    pub holdout_from: Option<NaiveDate>,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        TrainingOptions {
            days: vec![Weekday::Mon, Weekday::Tue, Weekday::Wed, Weekday::Thu],
            holdout_from: None,
        }
    }
}

impl TrainingOptions {
    pub fn with_friday(mut self) -> Self {
        if !self.days.contains(&Weekday::Fri) {
            self.days.push(Weekday::Fri);
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    Train,
    Eval,
}

fn cube_panel(
    cube: &DemandCube,
    level: Level,
    opts: &TrainingOptions,
    split: Split,
) -> Result<Panel, ForecastError> {
    let dims = Dims { days: opts.days.len(), hours: HOURS, stations: cube.stations().len() };
    let mut layers = Vec::new();
    for layer in cube.layers() {
        let Some(d) = opts.days.iter().position(|&w| w == layer.weekday) else {
            continue;
        };
        let keep = match (opts.holdout_from, split) {
            (None, _) => true,
            (Some(cut), split) => {
                let date = layer.date.ok_or(ForecastError::UndatedLayer)?;
                (date < cut) == (split == Split::Train)
            }
        };
        if keep {
            layers.push(PanelLayer {
                day: d,
                date: layer.date,
                values: layer.counts().iter().map(|&c| c as f64).collect(),
            });
        }
    }
    let panel = Panel::new(dims, layers)?;
    Ok(match level {
        Level::City => panel.to_city(),
        Level::Station => panel,
    })
}

/// Training slice of a cube as a panel.
pub fn training_panel(cube: &DemandCube, level: Level, opts: &TrainingOptions) -> Result<Panel, ForecastError> {
    cube_panel(cube, level, opts, Split::Train)
}

/// Evaluation slice: the training slice itself, or the held-out dates.
pub fn evaluation_panel(cube: &DemandCube, level: Level, opts: &TrainingOptions) -> Result<Panel, ForecastError> {
    cube_panel(cube, level, opts, if opts.holdout_from.is_some() { Split::Eval } else { Split::Train })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastModel {
    pub level: Level,
    pub method: Method,
    pub dims: Dims,
    /// Weekday of each day index, when fitted from a cube.
    pub days: Vec<Weekday>,
    pub params: Vec<f64>,
}

impl ForecastModel {
    fn key(&self, d: usize, h: usize, s: usize) -> usize {
        key(self.method, self.dims, d, h, s)
    }

    pub fn predict(&self, d: usize, h: usize, s: Option<usize>) -> Result<f64, ForecastError> {
        let station = match (self.level, s) {
            (Level::Station, None) => return Err(ForecastError::MissingStation),
            (Level::City, Some(_)) => return Err(ForecastError::UnexpectedStation),
            (Level::Station, Some(s)) => s,
            (Level::City, None) => 0,
        };
        if d >= self.dims.days || h >= self.dims.hours || station >= self.dims.stations {
            return Err(ForecastError::OutOfRange { day: d, hour: h, station: s });
        }
        Ok(self.params[self.key(d, h, station)])
    }

    pub fn predict_weekday(&self, day: Weekday, h: usize, s: Option<usize>) -> Result<f64, ForecastError> {
        let d = self.days.iter().position(|&w| w == day).ok_or(ForecastError::UnknownDay(day))?;
        self.predict(d, h, s)
    }
}

fn key(method: Method, dims: Dims, d: usize, h: usize, s: usize) -> usize {
    let cell = match method {
        Method::Constant => 0,
        Method::ByDay => d,
        Method::ByHour => h,
        Method::ByDayHour => d * dims.hours + h,
    };
    cell * dims.stations + s
}

/// Fits cell means on a panel. A station-level panel with one station and a
/// city-level fit are the same computation; `level` only tags the model.
pub fn fit_panel(panel: &Panel, method: Method, level: Level) -> Result<ForecastModel, ForecastError> {
    if panel.layers.is_empty() {
        return Err(ForecastError::EmptyTraining);
    }
    let dims = panel.dims;
    let size = param_count(method, Level::Station, dims);
    let mut sums = vec![0.0; size];
    let mut counts = vec![0usize; size];
    for (d, h, s, v) in panel.observations() {
        let k = key(method, dims, d, h, s);
        sums[k] += v;
        counts[k] += 1;
    }
    if let Some(k) = counts.iter().position(|&n| n == 0) {
        return Err(ForecastError::EmptyCell(k));
    }
    let params = sums.iter().zip(&counts).map(|(s, &n)| s / n as f64).collect();
    Ok(ForecastModel { level, method, dims, days: Vec::new(), params })
}

pub fn fit_conditional_mean(cube: &DemandCube, method: Method, level: Level) -> Result<ForecastModel, ForecastError> {
    fit_conditional_mean_with(cube, method, level, &TrainingOptions::default())
}

pub fn fit_conditional_mean_with(
    cube: &DemandCube,
    method: Method,
    level: Level,
    opts: &TrainingOptions,
) -> Result<ForecastModel, ForecastError> {
    let panel = training_panel(cube, level, opts)?;
    if panel.layers.is_empty() {
        return Err(ForecastError::EmptyTraining);
    }
    for (d, &day) in opts.days.iter().enumerate() {
        if !panel.layers.iter().any(|l| l.day == d) {
            return Err(ForecastError::MissingDay(day));
        }
    }
    let mut model = fit_panel(&panel, method, level)?;
    model.days = opts.days.clone();
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapeScore {
    /// Percent.
    pub value: f64,
    pub pairs_used: usize,
    pub pairs_excluded_zero_actual: usize,
}

fn check_panel(model: &ForecastModel, panel: &Panel) -> Result<(), ForecastError> {
    let want = Dims { stations: if model.level == Level::City { 1 } else { model.dims.stations }, ..model.dims };
    if panel.dims != want {
        return Err(ForecastError::LayerShape {
            expected: want.hours * want.stations,
            found: panel.dims.hours * panel.dims.stations,
        });
    }
    Ok(())
}

/// Mean absolute percentage error over a panel; zero actuals are skipped and counted.
pub fn mape_panel(model: &ForecastModel, panel: &Panel) -> Result<MapeScore, ForecastError> {
    check_panel(model, panel)?;
    let mut sum = 0.0;
    let mut used = 0;
    let mut excluded = 0;
    for (d, h, s, y) in panel.observations() {
        if y == 0.0 {
            excluded += 1;
            continue;
        }
        let yhat = model.params[model.key(d, h, s)];
        sum += ((y - yhat) / y).abs();
        used += 1;
    }
    if used == 0 {
        return Err(ForecastError::NoUsablePairs);
    }
    Ok(MapeScore { value: sum / used as f64 * 100.0, pairs_used: used, pairs_excluded_zero_actual: excluded })
}

/// Mean squared error over a panel.
pub fn mse_panel(model: &ForecastModel, panel: &Panel) -> Result<f64, ForecastError> {
    check_panel(model, panel)?;
    let (sse, n) = panel.observations().fold((0.0, 0usize), |(acc, n), (d, h, s, y)| {
        let e = y - model.params[model.key(d, h, s)];
        (acc + e * e, n + 1)
    });
    if n == 0 {
        return Err(ForecastError::NoUsablePairs);
    }
    Ok(sse / n as f64)
}

/// In-sample MAPE on the model's default training slice.
pub fn mape(model: &ForecastModel, cube: &DemandCube) -> Result<MapeScore, ForecastError> {
    let opts = TrainingOptions { days: model.days.clone(), holdout_from: None };
    mape_panel(model, &evaluation_panel(cube, model.level, &opts)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub level: Level,
    pub method: Method,
    pub mape: MapeScore,
    pub params: usize,
}

/// Fits and scores all level x method combinations, ordered city first then by method.
pub fn compare_methods(cube: &DemandCube, opts: &TrainingOptions) -> Result<Vec<ComparisonRow>, ForecastError> {
    let combos: Vec<(Level, Method)> =
        Level::ALL.iter().flat_map(|&l| Method::ALL.iter().map(move |&m| (l, m))).collect();
    combos
        .into_par_iter()
        .map(|(level, method)| {
            let model = fit_conditional_mean_with(cube, method, level, opts)?;
            let score = mape_panel(&model, &evaluation_panel(cube, level, opts)?)?;
            Ok(ComparisonRow { level, method, mape: score, params: param_count(method, level, model.dims) })
        })
        .collect()
}
