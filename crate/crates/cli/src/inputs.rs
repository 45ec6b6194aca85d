//! Input resolution: built-in fixture names first, JSON files otherwise.

use std::path::Path;

use amm::quantum::{self, fixtures, AssemblageJson, DensityMatrix, MeasurementAssemblage, MeasurementsJson, StateJson};
use amm::scenario::{builtin_functional, BellFunctional, CorrelationTable, FunctionalJson, TableJson};
use amm::incompat::QubitBinaryObservable;
use serde::de::DeserializeOwned;

use crate::CliError;

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {what} file {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Usage(format!(
            "malformed {what} file {} at line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

fn in_file(path: &Path, e: amm::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

pub fn state(arg: &str) -> Result<DensityMatrix, CliError> {
    match fixtures::state(arg) {
        Ok(s) => Ok(s),
        Err(amm::Error::UnknownName(_)) => {
            let p = Path::new(arg);
            read_json::<StateJson>(p, "state")?.into_state().map_err(|e| in_file(p, e))
        }
        Err(e) => Err(CliError::Usage(format!("state '{arg}': {e}"))),
    }
}

pub fn measurements(arg: &str) -> Result<MeasurementAssemblage, CliError> {
    match fixtures::measurement(arg) {
        Ok(m) => Ok(m),
        Err(amm::Error::UnknownName(_)) => {
            let p = Path::new(arg);
            if !p.exists() {
                return Err(CliError::Usage(format!(
                    "'{arg}' is neither a measurement fixture ({}) nor a file",
                    fixtures::MEASUREMENT_NAMES.join(", ")
                )));
            }
            read_json::<MeasurementsJson>(p, "measurement")?
                .into_assemblage()
                .map_err(|e| in_file(p, e))
        }
        Err(e) => Err(CliError::Usage(format!("measurement '{arg}': {e}"))),
    }
}

pub fn functional(arg: &str) -> Result<BellFunctional, CliError> {
    match builtin_functional(arg) {
        Ok(f) => Ok(f),
        Err(amm::Error::UnknownName(_)) => {
            let p = Path::new(arg);
            if !p.exists() {
                return Err(CliError::Usage(format!(
                    "'{arg}' is neither a built-in functional ({}) nor a file",
                    amm::scenario::BUILTIN_FUNCTIONALS.join(", ")
                )));
            }
            read_json::<FunctionalJson>(p, "functional")?
                .into_functional()
                .map_err(|e| in_file(p, e))
        }
        Err(e) => Err(CliError::Usage(format!("functional '{arg}': {e}"))),
    }
}

pub fn table(path: &Path) -> Result<CorrelationTable, CliError> {
    read_json::<TableJson>(path, "table")?.into_table().map_err(|e| in_file(path, e))
}

pub fn assemblage(path: &Path) -> Result<quantum::StateAssemblage, CliError> {
    read_json::<AssemblageJson>(path, "assemblage")?
        .into_assemblage()
        .map_err(|e| in_file(path, e))
}

pub fn observables(path: &Path) -> Result<Vec<QubitBinaryObservable>, CliError> {
    let raw: Vec<QubitBinaryObservable> = read_json(path, "observables")?;
    raw.into_iter()
        .map(|o| QubitBinaryObservable::new(o.alpha, o.r).map_err(|e| in_file(path, e)))
        .collect()
}

/// Parses `x,y,z`.
pub fn vector3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got '{s}'"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|e| format!("bad number '{p}': {e}"))?;
    }
    Ok(out)
}
