//! Trip record parsing and dataset loading.
//!
//! Input rows follow the header `company,datetime,ticket,entry_station,exit_station`
//! with datetimes in `YYYY-MM-DD HH:MM:SS`. Seconds are parsed and dropped; all
//! downstream aggregation runs at minute resolution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HEADER: [&str; 5] = ["company", "datetime", "ticket", "entry_station", "exit_station"];

const DATETIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Days of the week in index order (Monday = 0).
pub const WEEKDAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

pub fn day_index(day: Weekday) -> usize {
    day.num_days_from_monday() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TicketKind {
    Paper,
    Electronic,
}

impl TicketKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TicketKind::Paper => "paper",
            TicketKind::Electronic => "electronic",
        }
    }
}

impl fmt::Display for TicketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TicketKind {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("paper") {
            Ok(TicketKind::Paper)
        } else if s.eq_ignore_ascii_case("electronic") {
            Ok(TicketKind::Electronic)
        } else {
            Err(ParseError::UnknownTicket(s.to_string()))
        }
    }
}

/// One ticketed boarding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripRecord {
    pub operator: String,
    pub date: NaiveDate,
    /// Minute of day, 0..=1439.
    pub minute: u16,
    pub ticket: TicketKind,
    pub entry_station: String,
    pub exit_station: String,
}

impl TripRecord {
    pub fn weekday(&self) -> Weekday {
        self.date.weekday()
    }

    pub fn hour(&self) -> usize {
        usize::from(self.minute / 60)
    }

    pub fn is_loop(&self) -> bool {
        self.entry_station == self.exit_station
    }

    /// Fields in input column order, with the datetime re-serialized (seconds = 00).
    pub fn to_row(&self) -> [String; 5] {
        [
            self.operator.clone(),
            format!(
                "{} {:02}:{:02}:00",
                self.date.format("%Y-%m-%d"),
                self.minute / 60,
                self.minute % 60
            ),
            self.ticket.to_string(),
            self.entry_station.clone(),
            self.exit_station.clone(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("malformed datetime {0:?}")]
    MalformedDatetime(String),
    #[error("unknown ticket kind {0:?}")]
    UnknownTicket(String),
    #[error("empty station identifier")]
    EmptyStation,
    #[error("row is not valid UTF-8")]
    InvalidUtf8,
}

impl ParseError {
    /// Stable key used in rejection tallies.
    pub fn reason(&self) -> &'static str {
        match self {
            ParseError::FieldCount { .. } => "wrong_field_count",
            ParseError::MalformedDatetime(_) => "malformed_datetime",
            ParseError::UnknownTicket(_) => "unknown_ticket",
            ParseError::EmptyStation => "empty_station",
            ParseError::InvalidUtf8 => "invalid_utf8",
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unreadable trip stream: {0}")]
    Io(#[from] std::io::Error),
    #[error("trip stream: {0}")]
    Csv(#[from] csv::Error),
}

/// Parses one row given as already-split fields.
pub fn parse_trip_record<S: AsRef<str>>(fields: &[S]) -> Result<TripRecord, ParseError> {
    if fields.len() != HEADER.len() {
        return Err(ParseError::FieldCount { expected: HEADER.len(), found: fields.len() });
    }
    let field = |i: usize| fields[i].as_ref().trim();

    let raw_dt = field(1);
    let dt = NaiveDateTime::parse_from_str(raw_dt, DATETIME_FORMAT)
        .map_err(|_| ParseError::MalformedDatetime(raw_dt.to_string()))?;
    let ticket: TicketKind = field(2).parse()?;
    let entry = field(3);
    let exit = field(4);
    if entry.is_empty() || exit.is_empty() {
        return Err(ParseError::EmptyStation);
    }

    Ok(TripRecord {
        operator: field(0).to_string(),
        date: dt.date(),
        minute: (dt.hour() * 60 + dt.minute()) as u16,
        ticket,
        entry_station: entry.to_string(),
        exit_station: exit.to_string(),
    })
}

/// Parses a single comma-delimited line. Quoted fields are accepted.
pub fn parse_trip_line(line: &str) -> Result<TripRecord, ParseError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(line.as_bytes());
    match reader.records().next() {
        Some(Ok(rec)) => parse_trip_record(&rec.iter().collect::<Vec<_>>()),
        Some(Err(_)) => Err(ParseError::InvalidUtf8),
        None => Err(ParseError::FieldCount { expected: HEADER.len(), found: 0 }),
    }
}

/// Immutable, validated trip collection.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TripDataset {
    records: Vec<TripRecord>,
    dates_covered: BTreeSet<NaiveDate>,
    weekday_multiplicity: [u32; 7],
}

impl TripDataset {
    pub fn from_records(records: Vec<TripRecord>) -> Self {
        let dates_covered: BTreeSet<NaiveDate> = records.iter().map(|r| r.date).collect();
        let mut weekday_multiplicity = [0u32; 7];
        for date in &dates_covered {
            weekday_multiplicity[day_index(date.weekday())] += 1;
        }
        TripDataset { records, dates_covered, weekday_multiplicity }
    }

    pub fn records(&self) -> &[TripRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dates_covered(&self) -> &BTreeSet<NaiveDate> {
        &self.dates_covered
    }

    /// Distinct observed dates per weekday, indexed Monday = 0.
    pub fn weekday_multiplicity(&self) -> [u32; 7] {
        self.weekday_multiplicity
    }

    pub fn multiplicity(&self, day: Weekday) -> u32 {
        self.weekday_multiplicity[day_index(day)]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub total_rows: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub rejection_reasons: BTreeMap<String, usize>,
    pub loop_trips: usize,
}

impl ValidationReport {
    fn reject(&mut self, err: &ParseError) {
        self.rejected += 1;
        *self.rejection_reasons.entry(err.reason().to_string()).or_insert(0) += 1;
    }
}

fn is_header<S: AsRef<str>>(fields: &[S]) -> bool {
    fields.len() == HEADER.len()
        && fields.iter().zip(HEADER).all(|(f, h)| f.as_ref().trim().eq_ignore_ascii_case(h))
}

/// Loads trips from a delimited stream. Bad rows are tallied in the report;
/// only I/O failures are fatal.
pub fn load_trips<R: Read>(reader: R) -> Result<(TripDataset, ValidationReport), IngestError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);

    let mut report = ValidationReport::default();
    let mut records = Vec::new();
    let mut row = csv::ByteRecord::new();
    let mut first = true;

    loop {
        match csv_reader.read_byte_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => match e.kind() {
                csv::ErrorKind::Io(_) => return Err(e.into()),
                _ => {
                    report.total_rows += 1;
                    report.reject(&ParseError::InvalidUtf8);
                    continue;
                }
            },
        }

        let fields: Result<Vec<&str>, _> = row.iter().map(std::str::from_utf8).collect();
        let Ok(fields) = fields else {
            report.total_rows += 1;
            report.reject(&ParseError::InvalidUtf8);
            first = false;
            continue;
        };
        if first {
            first = false;
            if is_header(&fields) {
                continue;
            }
        }
        // blank lines are skipped by the csv reader; a lone empty field is not a row
        report.total_rows += 1;
        match parse_trip_record(&fields) {
            Ok(rec) => {
                if rec.is_loop() {
                    report.loop_trips += 1;
                }
                report.accepted += 1;
                records.push(rec);
            }
            Err(err) => report.reject(&err),
        }
    }

    Ok((TripDataset::from_records(records), report))
}

/// Writes trips with the standard header.
pub fn write_trips<W: Write>(writer: W, records: &[TripRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for rec in records {
        w.write_record(rec.to_row())?;
    }
    w.flush()?;
    Ok(())
}
