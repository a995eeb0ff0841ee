//! `tdl` command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, Weekday};
use clap::{Args, Parser, Subcommand};

use crate::cluster::segment_stations;
use crate::explain::{fit_ols, load_station_meta, log_correlations, write_station_meta, DistanceScale, ExplainError};
use crate::forecast::{compare_methods, Level, Method, TrainingOptions};
use crate::ingest::{load_trips, TripDataset, ValidationReport};
use crate::profile::{
    build_demand_cube, day_share_profile, hourly_load_curve, route_demand, station_features, station_load_curve,
    station_ranking, DemandCube, Window,
};
use crate::report::{self, Format, ReportError};
use crate::sim::{
    bimodal_arrivals, dynamic_schedule, fixed_schedule, run_pair, simulate_day_traced, sweep_f, ArrivalMode, SimConfig,
    SimError,
};
use crate::synth::{generate, SynthError, SynthSpec};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tdl", version, about = "Transit demand analysis toolkit")]
pub struct Cli {
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, global = true, env = "TDL_SEED", default_value_t = 42)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct TripsArg {
    /// Trip records CSV.
    #[arg(long)]
    pub trips: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub passengers: Option<u64>,
    #[arg(long)]
    pub capacity: Option<u32>,
    /// Morning peak, minute of day.
    #[arg(long)]
    pub peak1: Option<u32>,
    /// Evening peak, minute of day.
    #[arg(long)]
    pub peak2: Option<u32>,
    #[arg(long)]
    pub sigma1: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Share of passengers in the morning peak.
    #[arg(long)]
    pub weight1: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ArrivalMode>,
}

impl SimArgs {
    fn config(&self, seed: u64) -> SimConfig {
        let d = SimConfig::default();
        SimConfig {
            total_passengers: self.passengers.unwrap_or(d.total_passengers),
            capacity: self.capacity.unwrap_or(d.capacity),
            peak1_minute: self.peak1.unwrap_or(d.peak1_minute),
            peak2_minute: self.peak2.unwrap_or(d.peak2_minute),
            sigma1: self.sigma1.unwrap_or(d.sigma1),
            sigma2: self.sigma2.unwrap_or(d.sigma2),
            weight1: self.weight1.unwrap_or(d.weight1),
            mode: self.mode.unwrap_or(d.mode),
            seed,
            ..d
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a trips file and report rejected rows.
    Ingest(TripsArg),
    /// Day-of-week shares and an hourly load curve.
    Profile {
        #[command(flatten)]
        trips: TripsArg,
        /// Restrict the curve to one weekday (mon..sun).
        #[arg(long, value_parser = parse_weekday, conflicts_with = "station")]
        day: Option<Weekday>,
        /// Curve for a single entry station.
        #[arg(long)]
        station: Option<String>,
    },
    /// Stations ranked by share of boardings.
    Rank {
        #[command(flatten)]
        trips: TripsArg,
        #[arg(long, value_enum, default_value_t = Window::FullDay)]
        window: Window,
    },
    /// Four-way station segmentation by demand level and morning/evening balance.
    Cluster(TripsArg),
    /// Conditional-mean forecast comparison.
    Forecast {
        #[command(flatten)]
        trips: TripsArg,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        method: Option<u8>,
        #[arg(long, value_enum)]
        level: Option<Level>,
        /// Train on Monday to Friday instead of Monday to Thursday.
        #[arg(long)]
        include_friday: bool,
        /// Score on dates from this day onward, train on earlier dates.
        #[arg(long)]
        holdout_from: Option<NaiveDate>,
    },
    /// Route demand against population and distance.
    Explain {
        #[command(flatten)]
        trips: TripsArg,
        /// Station metadata CSV.
        #[arg(long)]
        stations: PathBuf,
        #[arg(long)]
        log_distance: bool,
    },
    /// One fixed vs dynamic scheduling run.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// Resource factor.
        #[arg(long = "f", default_value_t = 1.5)]
        f: f64,
        /// Per-minute queue trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Fixed vs dynamic scheduling over several resource factors.
    Sweep {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long = "f", value_delimiter = ',', default_values_t = [1.0, 1.25, 1.5, 2.0])]
        f: Vec<f64>,
    },
    /// Generate a synthetic trips file and station metadata.
    Synth {
        #[arg(long, default_value_t = 60)]
        station_count: usize,
        /// Expected boardings on an ordinary weekday.
        #[arg(long, default_value_t = 100_000)]
        weekday_trips: u64,
        #[arg(long, default_value_t = 0.10)]
        noise: f64,
        /// Station metadata CSV output.
        #[arg(long)]
        stations_out: Option<PathBuf>,
    },
}

fn parse_weekday(s: &str) -> Result<Weekday, String> {
    s.parse::<Weekday>().map_err(|_| format!("unknown weekday '{s}'"))
}

/// Failure with the stage that raised it and its exit class.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub stage: &'static str,
    pub message: String,
}

impl Failure {
    fn input(stage: &'static str, message: impl ToString) -> Self {
        Failure { code: EXIT_INPUT, stage, message: message.to_string() }
    }
    fn compute(stage: &'static str, message: impl ToString) -> Self {
        Failure { code: EXIT_COMPUTE, stage, message: message.to_string() }
    }
    fn usage(stage: &'static str, message: impl ToString) -> Self {
        Failure { code: EXIT_USAGE, stage, message: message.to_string() }
    }
}

fn report_failure(stage: &'static str) -> impl Fn(ReportError) -> Failure {
    move |e| Failure::compute(stage, e)
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::InvalidConfig(_) | SimError::EmptySweep => Failure::usage("simulate", e),
        other => Failure::compute("simulate", other),
    }
}

fn open(stage: &'static str, path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::input(stage, format!("{}: {e}", path.display())))
}

fn read_trips(path: &Path) -> Result<(TripDataset, ValidationReport), Failure> {
    load_trips(open("ingest", path)?).map_err(|e| Failure::input("ingest", format!("{}: {e}", path.display())))
}

fn read_cube(path: &Path) -> Result<(TripDataset, DemandCube), Failure> {
    let (ds, _) = read_trips(path)?;
    if ds.is_empty() {
        return Err(Failure::input("ingest", format!("{}: no valid trip records", path.display())));
    }
    let cube = build_demand_cube(&ds);
    Ok((ds, cube))
}

/// Writes via a sibling temp file and rename so a failed run leaves no partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let fail = |e: std::io::Error| Failure::input("output", format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => std::io::stdout()
            .lock()
            .write_all(bytes)
            .map_err(|e| Failure::input("output", format!("stdout: {e}"))),
    }
}

fn render<T: serde::Serialize>(
    stage: &'static str,
    format: Format,
    body: &T,
    csv: impl FnOnce() -> Result<Vec<u8>, ReportError>,
) -> Result<Vec<u8>, Failure> {
    match format {
        Format::Json => report::json(stage, body),
        Format::Csv => csv(),
    }
    .map_err(report_failure(stage))
}

fn explain_failure(e: ExplainError) -> Failure {
    match e {
        ExplainError::Csv(_) | ExplainError::InvalidCoordinate { .. } | ExplainError::InvalidStation { .. } => {
            Failure::input("explain", e)
        }
        other => Failure::compute("explain", other),
    }
}

/// Runs one parsed command and writes its report.
pub fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let out = cli.out.as_deref();
    let bytes = match &cli.command {
        Command::Ingest(t) => {
            let (_, report) = read_trips(&t.trips)?;
            render("ingest", cli.format, &report, || report::validation_csv(&report))?
        }
        Command::Profile { trips, day, station } => {
            let (_, cube) = read_cube(&trips.trips)?;
            let stage = "profile";
            let curve = match station {
                Some(s) => station_load_curve(&cube, s),
                None => hourly_load_curve(&cube, *day),
            }
            .map_err(|e| Failure::compute(stage, e))?;
            let day_shares = day_share_profile(&cube).map_err(|e| Failure::compute(stage, e))?;
            let body = report::ProfileReport {
                day_shares,
                local_maxima: curve.local_maxima(),
                peak_hour: curve.peak_hour(),
                curve,
            };
            render(stage, cli.format, &body, || report::curve_csv(&body.curve))?
        }
        Command::Rank { trips, window } => {
            let (_, cube) = read_cube(&trips.trips)?;
            let stations = station_ranking(&cube, *window).map_err(|e| Failure::compute("rank", e))?;
            let body = report::RankingReport { window: *window, stations };
            render("rank", cli.format, &body, || report::ranking_csv(&body.stations))?
        }
        Command::Cluster(t) => {
            let (_, cube) = read_cube(&t.trips)?;
            let (features, excluded) = station_features(&cube).map_err(|e| Failure::compute("cluster", e))?;
            let model = segment_stations(&features, cli.seed).map_err(|e| Failure::compute("cluster", e))?;
            let body = report::cluster_report(&model, &excluded, cli.seed);
            render("cluster", cli.format, &body, || report::cluster_csv(&model))?
        }
        Command::Forecast { trips, method, level, include_friday, holdout_from } => {
            let (_, cube) = read_cube(&trips.trips)?;
            let mut opts = TrainingOptions { holdout_from: *holdout_from, ..Default::default() };
            if *include_friday {
                opts = opts.with_friday();
            }
            let method = method
                .map(Method::try_from)
                .transpose()
                .map_err(|e| Failure::usage("forecast", e))?;
            let rows: Vec<_> = compare_methods(&cube, &opts)
                .map_err(|e| Failure::compute("forecast", e))?
                .into_iter()
                .filter(|r| method.is_none_or(|m| m == r.method) && level.is_none_or(|l| l == r.level))
                .collect();
            let body = report::ForecastReport {
                training_days: opts.days.iter().map(|d| d.to_string()).collect(),
                holdout_from: opts.holdout_from.map(|d| d.to_string()),
                rows,
            };
            render("forecast", cli.format, &body, || report::comparison_csv(&body.rows))?
        }
        Command::Explain { trips, stations, log_distance } => {
            let (ds, _) = read_trips(&trips.trips)?;
            let meta = load_station_meta(open("explain", stations)?).map_err(|e| match e {
                ExplainError::Csv(_) => Failure::input("explain", format!("{}: {e}", stations.display())),
                other => explain_failure(other),
            })?;
            let scale = if *log_distance { DistanceScale::Log } else { DistanceScale::Linear };
            let routes = route_demand(&ds);
            let correlations = log_correlations(&routes, &meta, scale).map_err(explain_failure)?;
            let regression = fit_ols(&routes, &meta, scale).map_err(explain_failure)?;
            let body = report::ExplainReport {
                distance_scale: if *log_distance { "log" } else { "linear" },
                correlations,
                regression,
            };
            render("explain", cli.format, &body, || report::coefficients_csv(&body.regression))?
        }
        Command::Simulate { sim, f, trace } => {
            let config = SimConfig { resource_factor: *f, ..sim.config(cli.seed) };
            let pair = run_pair(&config).map_err(sim_failure)?;
            if let Some(path) = trace {
                let arrivals = bimodal_arrivals(&config).map_err(sim_failure)?;
                let buses = config.bus_count();
                let fixed = fixed_schedule(buses, config.day_length).map_err(sim_failure)?;
                let dynamic = dynamic_schedule(buses, &arrivals).map_err(sim_failure)?;
                let (_, fq) = simulate_day_traced(&arrivals, &fixed, config.capacity).map_err(sim_failure)?;
                let (_, dq) = simulate_day_traced(&arrivals, &dynamic, config.capacity).map_err(sim_failure)?;
                let bytes = report::trace_csv(&arrivals.arrivals, &fq, &dq).map_err(report_failure("simulate"))?;
                write_atomic(path, &bytes)?;
            }
            render("simulate", cli.format, &pair, || report::sweep_csv(std::slice::from_ref(&pair)))?
        }
        Command::Sweep { sim, f } => {
            let config = sim.config(cli.seed);
            let results = sweep_f(&config, f).map_err(sim_failure)?;
            let body = report::SweepReport { config: &config, results: &results };
            render("sweep", cli.format, &body, || report::sweep_csv(&results))?
        }
        Command::Synth { station_count, weekday_trips, noise, stations_out } => {
            let spec = SynthSpec {
                stations: *station_count,
                weekday_trips: *weekday_trips,
                noise: *noise,
                seed: cli.seed,
                ..Default::default()
            };
            let data = generate(&spec).map_err(|e| Failure::usage("synth", e))?;
            if let Some(path) = stations_out {
                let mut buf = Vec::new();
                write_station_meta(&mut buf, &data.stations).map_err(|e| Failure::compute("synth", e))?;
                write_atomic(path, &buf)?;
            }
            let mut buf = Vec::new();
            data.write_trips(&mut buf).map_err(|e: SynthError| Failure::compute("synth", e))?;
            buf
        }
    };
    emit(out, &bytes)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("tdl: {}: {}", f.stage, f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_defaults() {
        let cli = Cli::try_parse_from(["tdl", "sweep", "--f", "1.0,1.5,2.0", "--seed", "7"]).unwrap();
        assert_eq!(cli.seed, 7);
        match cli.command {
            Command::Sweep { f, .. } => assert_eq!(f, vec![1.0, 1.5, 2.0]),
            other => panic!("{other:?}"),
        }
        let cli = Cli::try_parse_from(["tdl", "sweep"]).unwrap();
        match cli.command {
            Command::Sweep { f, .. } => assert_eq!(f, vec![1.0, 1.25, 1.5, 2.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_flags() {
        assert!(Cli::try_parse_from(["tdl", "forecast", "--trips", "x", "--method", "5"]).is_err());
        assert!(Cli::try_parse_from(["tdl", "rank", "--trips", "x", "--window", "noon"]).is_err());
        assert!(Cli::try_parse_from(["tdl", "profile", "--trips", "x", "--day", "funday"]).is_err());
        assert!(Cli::try_parse_from(["tdl", "cluster"]).is_err());
    }

    #[test]
    fn sim_overrides_apply() {
        let cli = Cli::try_parse_from(["tdl", "simulate", "--passengers", "10", "--capacity", "3", "--mode", "stochastic"])
            .unwrap();
        match cli.command {
            Command::Simulate { sim, f, .. } => {
                let cfg = sim.config(cli.seed);
                assert_eq!((cfg.total_passengers, cfg.capacity, cfg.mode, cfg.seed), (10, 3, ArrivalMode::Stochastic, 42));
                assert_eq!(f, 1.5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn help_exits_zero_and_usage_one() {
        assert_eq!(run(["tdl", "--help"]), 0);
        assert_eq!(run(["tdl", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["tdl", "simulate", "--capacity", "0"]), EXIT_USAGE);
        assert_eq!(run(["tdl", "synth", "--station-count", "2"]), EXIT_USAGE);
    }

    #[test]
    fn missing_input_names_path_and_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("missing.csv");
        let out = dir.path().join("report.json");
        let cli = Cli::try_parse_from([
            "tdl",
            "forecast",
            "--trips",
            missing.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .unwrap();
        let err = dispatch(&cli).unwrap_err();
        assert_eq!(err.code, EXIT_INPUT);
        assert!(err.message.contains("missing.csv"));
        assert!(!out.exists());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn empty_trips_is_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let trips = dir.path().join("trips.csv");
        std::fs::write(&trips, "company,datetime,ticket,entry_station,exit_station\nX,garbage,paper,A,B\n").unwrap();
        let cli = Cli::try_parse_from(["tdl", "rank", "--trips", trips.to_str().unwrap()]).unwrap();
        assert_eq!(dispatch(&cli).unwrap_err().code, EXIT_INPUT);
    }

    #[test]
    fn unfittable_data_is_computation_error() {
        let dir = tempfile::tempdir().unwrap();
        let trips = dir.path().join("trips.csv");
        // Saturday only: no training weekdays for the forecast
        std::fs::write(
            &trips,
            "company,datetime,ticket,entry_station,exit_station\nX,2019-03-09 08:10:00,paper,A,B\n",
        )
        .unwrap();
        let out = dir.path().join("f.csv");
        let cli = Cli::try_parse_from(["tdl", "forecast", "--trips", trips.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .unwrap();
        let err = dispatch(&cli).unwrap_err();
        assert_eq!((err.code, err.stage), (EXIT_COMPUTE, "forecast"));
        assert!(!out.exists());
    }

    #[test]
    fn report_written_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sim.json");
        let cli = Cli::try_parse_from(["tdl", "simulate", "--passengers", "1000", "--out", out.to_str().unwrap()]).unwrap();
        dispatch(&cli).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["f"], 1.5);
        assert_eq!(v["buses"], 25);
    }
}
