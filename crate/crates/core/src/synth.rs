//! Synthetic trip generator.
//!
//! Demand is multiplicative in day, hour and station: a per-day volume, a
//! per-station share, and a per-(day, station) hourly shape built from a
//! morning and an evening Gaussian bump. Every (date, hour, station) cell gets
//! independent relative noise before integerization. Stations belong to one of
//! four planted groups that differ in demand level and morning/evening balance.

use std::io::Write;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::apportion::largest_remainder;
use crate::explain::{haversine_km, LatLon, StationMeta};
use crate::ingest::{IngestError, TicketKind, TripRecord, HEADER};
use crate::profile::{DayLayer, DemandCube, HOURS};

pub const OPERATOR: &str = "PRIMERO";
/// First hour with service.
pub const OPENING_HOUR: usize = 4;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Write(#[from] IngestError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSpec {
    pub stations: usize,
    /// Expected boardings on an ordinary weekday (Tuesday).
    pub weekday_trips: u64,
    /// Relative standard deviation of the per-cell noise.
    pub noise: f64,
    pub monday_boost: f64,
    pub dates: Vec<NaiveDate>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            stations: 60,
            weekday_trips: 100_000,
            noise: 0.10,
            monday_boost: 1.15,
            dates: two_week_dates(NaiveDate::from_ymd_opt(2019, 3, 4).expect("valid date")),
            seed: 42,
        }
    }
}

/// Twelve dates over two weeks: every weekday twice except Friday and Sunday.
pub fn two_week_dates(monday: NaiveDate) -> Vec<NaiveDate> {
    (0..14)
        .map(|i| monday + chrono::Duration::days(i))
        .filter(|d| !(d > &(monday + chrono::Duration::days(6)) && matches!(d.weekday(), Weekday::Fri | Weekday::Sun)))
        .collect()
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.stations < PLANTED_GROUPS.len() {
            return fail("need at least 4 stations");
        }
        if self.stations > 999 {
            return fail("at most 999 stations");
        }
        if !(self.noise.is_finite() && (0.0..1.0).contains(&self.noise)) {
            return fail("noise must be in [0, 1)");
        }
        if !(self.monday_boost.is_finite() && self.monday_boost > 0.0) {
            return fail("monday boost must be positive");
        }
        if self.dates.is_empty() {
            return fail("no dates");
        }
        Ok(())
    }
}

/// Planted station group: log demand level and morning/evening balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupProfile {
    pub level: f64,
    pub balance: f64,
    /// Relative share of stations in the group.
    pub weight: usize,
}

/// High-demand mixed, afternoon, morning, and low-demand morning stations.
pub const PLANTED_GROUPS: [GroupProfile; 4] = [
    GroupProfile { level: 2.0, balance: 0.0, weight: 1 },
    GroupProfile { level: 0.8, balance: -0.9, weight: 3 },
    GroupProfile { level: 0.8, balance: 0.9, weight: 3 },
    GroupProfile { level: -0.6, balance: 0.4, weight: 3 },
];

const STATION_JITTER: f64 = 0.08;

struct DayShape {
    volume: f64,
    morning_peak: f64,
    morning_sd: f64,
    morning_amp: f64,
    evening_amp: f64,
}

fn day_shape(day: Weekday, monday_boost: f64) -> DayShape {
    let weekday = |volume, morning_amp| DayShape {
        volume,
        morning_peak: 7.0,
        morning_sd: 1.6,
        morning_amp,
        evening_amp: 1.0,
    };
    match day {
        Weekday::Mon => weekday(monday_boost, 1.25),
        Weekday::Tue | Weekday::Wed => weekday(1.0, 1.0),
        Weekday::Thu => weekday(0.98, 1.0),
        Weekday::Fri => weekday(0.95, 0.95),
        Weekday::Sat => DayShape { volume: 0.55, morning_peak: 9.0, morning_sd: 2.0, morning_amp: 0.8, evening_amp: 0.7 },
        Weekday::Sun => DayShape { volume: 0.3, morning_peak: 10.0, morning_sd: 2.2, morning_amp: 1.0, evening_amp: 0.0 },
    }
}

const EVENING_PEAK: f64 = 17.0;
const EVENING_SD: f64 = 1.8;
const BASE_LOAD: f64 = 0.08;

fn bump(h: f64, mu: f64, sd: f64) -> f64 {
    (-(h - mu).powi(2) / (2.0 * sd * sd)).exp()
}

/// Unnormalized hourly weights for one station on one kind of day.
fn hourly_weights(shape: &DayShape, balance: f64) -> [f64; HOURS] {
    let (m, e) = ((balance / 2.0).exp(), (-balance / 2.0).exp());
    let mut w = [0.0; HOURS];
    for (h, slot) in w.iter_mut().enumerate().skip(OPENING_HOUR) {
        let hf = h as f64;
        *slot = m * shape.morning_amp * bump(hf, shape.morning_peak, shape.morning_sd)
            + e * shape.evening_amp * bump(hf, EVENING_PEAK, EVENING_SD)
            + BASE_LOAD;
    }
    w
}

/// Generated demand: per-date count grids plus station metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub stations: Vec<StationMeta>,
    /// Planted group of each station, same order as `stations`.
    pub groups: Vec<usize>,
    /// Per date: counts by hour and station, hour-major.
    pub days: Vec<(NaiveDate, Vec<u64>)>,
}

fn station_layout(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> (Vec<StationMeta>, Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = spec.stations;
    let total_weight: usize = PLANTED_GROUPS.iter().map(|g| g.weight).sum();
    let mut sizes: Vec<usize> = largest_remainder(
        &PLANTED_GROUPS.iter().map(|g| g.weight as f64).collect::<Vec<_>>(),
        n as u64,
    )
    .into_iter()
    .map(|s| s as usize)
    .collect();
    // every group needs at least one station
    for g in 0..sizes.len() {
        if sizes[g] == 0 {
            let donor = (0..sizes.len()).max_by_key(|&i| sizes[i]).expect("non-empty");
            sizes[donor] -= 1;
            sizes[g] = 1;
        }
    }
    debug_assert!(total_weight > 0);

    let mut groups: Vec<usize> = sizes.iter().enumerate().flat_map(|(g, &s)| std::iter::repeat_n(g, s)).collect();
    groups.shuffle(rng);

    let jitter = Normal::new(0.0, STATION_JITTER).expect("valid sd");
    let pop_noise = Normal::new(0.0, 0.25).expect("valid sd");
    let mean_level = PLANTED_GROUPS.iter().map(|g| g.level).sum::<f64>() / PLANTED_GROUPS.len() as f64;

    // corridor from the north-east terminal to the island
    let (start, end) = (LatLon::new(6.62, 3.51), LatLon::new(6.45, 3.39));
    let mut meta = Vec::with_capacity(n);
    let mut levels = Vec::with_capacity(n);
    let mut balances = Vec::with_capacity(n);
    for (i, &g) in groups.iter().enumerate() {
        let t = i as f64 / (n - 1).max(1) as f64;
        let level = PLANTED_GROUPS[g].level + jitter.sample(rng);
        let balance = PLANTED_GROUPS[g].balance + jitter.sample(rng);
        let pop = (13.0 + 0.8 * (level - mean_level) + pop_noise.sample(rng)).exp();
        meta.push(StationMeta {
            station: format!("ST{:03}", i + 1),
            name: format!("Station {:03}", i + 1),
            latitude: start.lat + t * (end.lat - start.lat) + rng.random_range(-0.004..0.004),
            longitude: start.lon + t * (end.lon - start.lon) + rng.random_range(-0.004..0.004),
            lga_population: pop.round().max(1.0) as u64,
        });
        levels.push(level);
        balances.push(balance);
    }
    (meta, groups, levels, balances)
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (stations, groups, levels, balances) = station_layout(spec, &mut rng);
    let n = stations.len();

    let level_sum: f64 = levels.iter().map(|l| l.exp()).sum();
    let shares: Vec<f64> = levels.iter().map(|l| l.exp() / level_sum).collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");

    let mut days = Vec::with_capacity(spec.dates.len());
    for &date in &spec.dates {
        let shape = day_shape(date.weekday(), spec.monday_boost);
        let mut expected = vec![0.0; HOURS * n];
        for s in 0..n {
            let w = hourly_weights(&shape, balances[s]);
            let norm: f64 = w.iter().sum();
            for h in 0..HOURS {
                expected[h * n + s] = spec.weekday_trips as f64 * shape.volume * shares[s] * w[h] / norm;
            }
        }
        let noisy: Vec<f64> = expected
            .iter()
            .map(|&e| if e > 0.0 { e * (1.0 + spec.noise * noise.sample(&mut rng)).max(0.0) } else { 0.0 })
            .collect();
        let total = noisy.iter().sum::<f64>().round() as u64;
        days.push((date, largest_remainder(&noisy, total)));
    }
    Ok(SynthData { spec: spec.clone(), stations, groups, days })
}

impl SynthData {
    pub fn station_ids(&self) -> Vec<String> {
        self.stations.iter().map(|m| m.station.clone()).collect()
    }

    pub fn total_trips(&self) -> u64 {
        self.days.iter().map(|(_, g)| g.iter().sum::<u64>()).sum()
    }

    /// Demand cube straight from the generated grids.
    pub fn cube(&self) -> DemandCube {
        let layers = self.days.iter().map(|(d, g)| DayLayer::dated(*d, g.clone())).collect();
        DemandCube::from_layers(self.station_ids(), layers).expect("grid shape matches station count")
    }

    /// Expands counts into individual trips, calling `emit` for each in
    /// date/minute order. Exit stations follow a gravity model on population
    /// and distance; minutes are uniform within the hour.
    pub fn for_each_trip<F>(&self, mut emit: F) -> Result<(), SynthError>
    where
        F: FnMut(TripRecord) -> Result<(), SynthError>,
    {
        let n = self.stations.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(1);
        let exit_cdf = self.exit_cdfs()?;

        for (date, grid) in &self.days {
            for h in 0..HOURS {
                let mut hour_trips: Vec<(u16, usize)> = Vec::new();
                for s in 0..n {
                    for _ in 0..grid[h * n + s] {
                        hour_trips.push(((h * 60) as u16 + rng.random_range(0..60u16), s));
                    }
                }
                hour_trips.sort_unstable();
                for (minute, s) in hour_trips {
                    let u: f64 = rng.random();
                    let exit = exit_cdf[s].partition_point(|&c| c <= u).min(n - 1);
                    let ticket = if rng.random::<f64>() < 0.7 { TicketKind::Electronic } else { TicketKind::Paper };
                    emit(TripRecord {
                        operator: OPERATOR.to_string(),
                        date: *date,
                        minute,
                        ticket,
                        entry_station: self.stations[s].station.clone(),
                        exit_station: self.stations[exit].station.clone(),
                    })?;
                }
            }
        }
        Ok(())
    }

    fn exit_cdfs(&self) -> Result<Vec<Vec<f64>>, SynthError> {
        let n = self.stations.len();
        let mut out = Vec::with_capacity(n);
        for a in &self.stations {
            let mut w = Vec::with_capacity(n);
            for b in &self.stations {
                if a.station == b.station {
                    w.push(0.0);
                    continue;
                }
                let km = haversine_km(a.location(), b.location())
                    .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
                w.push((b.lga_population as f64).powf(0.8) * (-km / 8.0).exp());
            }
            let total: f64 = w.iter().sum();
            let mut acc = 0.0;
            out.push(
                w.iter()
                    .map(|x| {
                        acc += x / total;
                        acc
                    })
                    .collect(),
            );
        }
        Ok(out)
    }

    pub fn trips(&self) -> Vec<TripRecord> {
        let mut all = Vec::with_capacity(self.total_trips() as usize);
        self.for_each_trip(|t| {
            all.push(t);
            Ok(())
        })
        .expect("collecting cannot fail");
        all
    }

    /// Streams the trips CSV with the standard header.
    pub fn write_trips<W: Write>(&self, writer: W) -> Result<(), SynthError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(HEADER).map_err(IngestError::from)?;
        self.for_each_trip(|t| w.write_record(t.to_row()).map_err(|e| IngestError::from(e).into()))?;
        w.flush().map_err(IngestError::from)?;
        Ok(())
    }
}
