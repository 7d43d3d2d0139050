//! Python bindings for version handling, dependency evaluation, build keys
//! and the benchmark helpers.

use std::cmp::Ordering;

use pacloud_core::atom::{select_best_version, BuildKey, DependencyAtom, PackageId, UseFlagSet};
use pacloud_core::bench::{self, DeviceTimeTable, JobSpec};
use pacloud_core::depexpr::parse_dep_string;
use pacloud_core::farm::generate_emerge_commands;
use pacloud_core::version::Version;
use pyo3::basic::CompareOp;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn flags(list: Vec<String>) -> PyResult<UseFlagSet> {
    UseFlagSet::from_flags(list).map_err(value_error)
}

#[pyclass(name = "Version", frozen)]
struct PyVersion(Version);

#[pymethods]
impl PyVersion {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Version::parse(text).map(PyVersion).map_err(value_error)
    }

    #[getter]
    fn revision(&self) -> u64 {
        self.0.revision()
    }

    fn __richcmp__(&self, other: &Self, op: CompareOp) -> bool {
        op.matches(self.0.cmp(&other.0))
    }

    fn __hash__(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.0.hash(&mut h);
        h.finish()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Version('{}')", self.0)
    }
}

/// Three-way comparison: -1, 0 or 1.
#[pyfunction]
fn compare_versions(a: &str, b: &str) -> PyResult<i32> {
    let (a, b) = (Version::parse(a).map_err(value_error)?, Version::parse(b).map_err(value_error)?);
    Ok(match a.cmp(&b) {
        Ordering::Less => -1,
        Ordering::Equal => 0,
        Ordering::Greater => 1,
    })
}

/// Highest of `available` satisfying `atom`, or None.
#[pyfunction]
fn select_best(atom: &str, available: Vec<String>) -> PyResult<Option<String>> {
    let atom = DependencyAtom::parse(atom).map_err(value_error)?;
    let versions = available.iter().map(|v| Version::parse(v).map_err(value_error)).collect::<PyResult<Vec<_>>>()?;
    Ok(select_best_version(&atom, versions.iter()).map(ToString::to_string))
}

/// Atoms of a dependency string active under `enabled` flags.
#[pyfunction]
fn evaluate_dependencies(text: &str, enabled: Vec<String>) -> PyResult<Vec<String>> {
    let expr = parse_dep_string(text).map_err(value_error)?;
    Ok(expr.eval(&flags(enabled)?).iter().map(ToString::to_string).collect())
}

/// Canonical `cat/name-ver[flags]` key.
#[pyfunction]
fn build_key(package: &str, version: &str, useflags: Vec<String>) -> PyResult<String> {
    let package = PackageId::parse(package).map_err(value_error)?;
    let version = Version::parse(version).map_err(value_error)?;
    Ok(BuildKey::new(package, version, flags(useflags)?).canonical())
}

#[pyfunction]
fn emerge_command(key: &str) -> PyResult<String> {
    Ok(generate_emerge_commands(&BuildKey::parse(key).map_err(value_error)?))
}

#[pyfunction]
fn estimate_storage_cost(n_packages: u64, avg_package_mb: f64, price_per_gb_month: f64) -> f64 {
    bench::estimate_storage_cost(n_packages, avg_package_mb, price_per_gb_month)
}

/// Target time as a fraction of baseline time, from the embedded table.
#[pyfunction]
fn device_ratio(package: &str, baseline: &str, target: &str) -> PyResult<f64> {
    let package = PackageId::parse(package).map_err(value_error)?;
    bench::device_comparison(&DeviceTimeTable::embedded(), &package, baseline, target)
        .map(|c| c.ratio)
        .map_err(value_error)
}

/// Makespan in seconds of `(key, seconds)` jobs on `workers` workers.
#[pyfunction]
fn makespan(workers: usize, jobs: Vec<(String, f64)>) -> PyResult<f64> {
    let jobs = jobs
        .into_iter()
        .map(|(k, d)| Ok(JobSpec { key: BuildKey::parse(&k).map_err(value_error)?, duration: d }))
        .collect::<PyResult<Vec<_>>>()?;
    bench::run_makespan(workers, &jobs).map(|r| r.total).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn pacloud(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVersion>()?;
    m.add_function(wrap_pyfunction!(compare_versions, m)?)?;
    m.add_function(wrap_pyfunction!(select_best, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_dependencies, m)?)?;
    m.add_function(wrap_pyfunction!(build_key, m)?)?;
    m.add_function(wrap_pyfunction!(emerge_command, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_storage_cost, m)?)?;
    m.add_function(wrap_pyfunction!(device_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(makespan, m)?)?;
    Ok(())
}
