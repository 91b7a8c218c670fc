// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end: CSV ingestion, report rendering and subcommands.

pub mod app;
pub mod ingest;

pub use app::{execute, run, Cli, CliError, Report};
pub use ingest::{ingest_csv, parse_csv, IngestError};
