//! Measured build times per machine, embedded from `data/benchmarks.csv`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::timefmt::parse_time;
use crate::atom::PackageId;
use crate::version::Version;

pub const EMBEDDED_CSV: &str = include_str!("../../data/benchmarks.csv");

#[derive(Debug, Error)]
pub enum DataError {
    #[error("benchmark data: {0}")]
    Csv(#[from] csv::Error),
    #[error("benchmark row {row}: {message}")]
    Row { row: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub package: PackageId,
    pub version: Version,
    pub machine: String,
    pub cores: u32,
    pub clock_ghz: f64,
    /// As printed in the source table.
    pub time: String,
    pub seconds: f64,
}

/// Machine × package build durations.
#[derive(Debug, Clone, Default)]
pub struct DeviceTimeTable {
    rows: BTreeMap<(PackageId, String), BenchmarkRow>,
}

impl DeviceTimeTable {
    /// Reads the CSV, checking that every `seconds` value is positive and
    /// agrees with its `time` string.
    pub fn from_csv(text: &str) -> Result<Self, DataError> {
        let mut rows = BTreeMap::new();
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        for (i, record) in reader.deserialize::<BenchmarkRow>().enumerate() {
            let row_no = i + 2;
            let row = record?;
            let parsed =
                parse_time(&row.time).map_err(|e| DataError::Row { row: row_no, message: e.to_string() })?;
            if row.seconds <= 0.0 || (parsed - row.seconds).abs() > 1e-9 {
                return Err(DataError::Row {
                    row: row_no,
                    message: format!("seconds {} disagrees with time {}", row.seconds, row.time),
                });
            }
            let key = (row.package.clone(), row.machine.clone());
            if rows.insert(key, row).is_some() {
                return Err(DataError::Row { row: row_no, message: "duplicate machine for package".into() });
            }
        }
        Ok(DeviceTimeTable { rows })
    }

    pub fn embedded() -> Self {
        Self::from_csv(EMBEDDED_CSV).expect("embedded benchmark data is valid")
    }

    pub fn get(&self, package: &PackageId, machine: &str) -> Option<&BenchmarkRow> {
        self.rows.get(&(package.clone(), machine.to_string()))
    }

    pub fn rows(&self) -> impl Iterator<Item = &BenchmarkRow> {
        self.rows.values()
    }

    pub fn packages(&self) -> Vec<PackageId> {
        let mut out: Vec<PackageId> = self.rows.keys().map(|(p, _)| p.clone()).collect();
        out.dedup();
        out
    }

    pub fn machines(&self) -> Vec<String> {
        let mut out: Vec<String> = self.rows.keys().map(|(_, m)| m.clone()).collect();
        out.sort();
        out.dedup();
        out
    }

    /// The benchmarked version of `package`.
    pub fn version_of(&self, package: &PackageId) -> Option<&Version> {
        self.rows.iter().find(|((p, _), _)| p == package).map(|(_, r)| &r.version)
    }
}
