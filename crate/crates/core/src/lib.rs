//! Transit demand analysis: trip ingestion, demand profiles, station
//! segmentation, conditional-mean forecasting, route demand regression and a
//! bus dispatch simulator.

pub mod apportion;
pub mod cli;
pub mod cluster;
pub mod explain;
pub mod forecast;
pub mod ingest;
pub mod profile;
pub mod report;
pub mod sim;
pub mod synth;
