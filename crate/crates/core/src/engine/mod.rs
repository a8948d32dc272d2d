//! Transient simulation: an external SPICE executable behind a command
//! template, or the built-in reference buck integrator, both producing the
//! same [`Dataset`] shape.

mod buck;
mod external;
pub mod raw;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use buck::{detect_buck_pattern, run_reference_buck, BuckParams, PulseSpec};
pub use external::{run_external, EngineConfig};
pub use raw::{parse_raw, write_raw, write_raw_ascii};

use crate::netlist::Netlist;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("engine executable `{0}` not found")]
    EngineNotFound(String),
    #[error("engine timed out after {timeout:?}")]
    EngineTimeout { timeout: Duration },
    #[error("engine exited with status {code:?}: {stderr}")]
    EngineFailure { code: Option<i32>, stderr: String },
    #[error("engine produced no raw waveform file")]
    RawMissing,
    #[error("malformed raw header: {0}")]
    HeaderMalformed(String),
    #[error("raw payload size mismatch: expected {expected} bytes, got {actual}")]
    PayloadSizeMismatch { expected: usize, actual: usize },
    #[error("time column is not strictly increasing")]
    NonMonotonicTime,
    #[error("dataset shape invalid: {0}")]
    InvalidDataset(String),
    #[error("deck does not match the ideal buck pattern: {0}")]
    PatternMismatch(String),
    #[error("integration step too coarse: {steps_per_period} steps per switching period")]
    StepTooCoarse { steps_per_period: usize },
    #[error("invalid transient spec: {0}")]
    InvalidSpec(String),
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Quantity kind of a dataset variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Time,
    Voltage,
    Current,
    Other(String),
}

impl VarKind {
    pub fn from_label(label: &str) -> VarKind {
        match label.to_ascii_lowercase().as_str() {
            "time" => VarKind::Time,
            "voltage" => VarKind::Voltage,
            "current" => VarKind::Current,
            other => VarKind::Other(other.to_string()),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            VarKind::Time => "time",
            VarKind::Voltage => "voltage",
            VarKind::Current => "current",
            VarKind::Other(s) => s,
        }
    }

    /// Display unit for measurements over this quantity.
    pub fn unit(&self) -> &str {
        match self {
            VarKind::Time => "s",
            VarKind::Voltage => "V",
            VarKind::Current => "A",
            VarKind::Other(_) => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

/// Simulator output: named columns over a shared (possibly non-uniform,
/// strictly increasing) time axis. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    variables: Vec<Variable>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(variables: Vec<Variable>, columns: Vec<Vec<f64>>) -> Result<Dataset, EngineError> {
        if variables.is_empty() {
            return Err(EngineError::InvalidDataset("no variables".to_string()));
        }
        if variables.len() != columns.len() {
            return Err(EngineError::InvalidDataset(format!(
                "{} variables but {} columns",
                variables.len(),
                columns.len()
            )));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(EngineError::InvalidDataset(
                "columns have differing lengths".to_string(),
            ));
        }
        if variables[0].kind == VarKind::Time {
            let time = &columns[0];
            if time.windows(2).any(|w| w[1] <= w[0]) {
                return Err(EngineError::NonMonotonicTime);
            }
        }
        Ok(Dataset { variables, columns })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn n_points(&self) -> usize {
        self.columns[0].len()
    }

    /// First column when it is the time axis.
    pub fn time(&self) -> &[f64] {
        &self.columns[0]
    }

    /// Case-insensitive column lookup.
    pub fn column(&self, name: &str) -> Option<(&Variable, &[f64])> {
        self.variables
            .iter()
            .position(|v| v.name.eq_ignore_ascii_case(name))
            .map(|i| (&self.variables[i], self.columns[i].as_slice()))
    }

    pub fn signal_names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.name.as_str()).collect()
    }
}

/// Transient analysis request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransientSpec {
    pub t_stop: f64,
    /// Integration/print step hint; 0 selects the engine default.
    pub t_step_hint: f64,
    /// Samples before this time are discarded.
    pub t_start_record: f64,
}

impl TransientSpec {
    pub fn validated(&self) -> Result<(), EngineError> {
        if self.t_stop <= 0.0 {
            return Err(EngineError::InvalidSpec("t_stop must be positive".into()));
        }
        if self.t_start_record >= self.t_stop {
            return Err(EngineError::InvalidSpec(
                "t_start_record must precede t_stop".into(),
            ));
        }
        if self.t_start_record < 0.0 {
            return Err(EngineError::InvalidSpec(
                "t_start_record must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Default window for steady-state reads: 400 switching periods,
    /// recording the last quarter.
    pub fn steady_state(switching_frequency: f64) -> TransientSpec {
        let t_stop = 400.0 / switching_frequency;
        TransientSpec {
            t_stop,
            t_step_hint: 0.0,
            t_start_record: 0.75 * t_stop,
        }
    }

    /// Window that keeps the start-up portion (for settle-time reads).
    pub fn from_start(switching_frequency: f64) -> TransientSpec {
        TransientSpec {
            t_stop: 400.0 / switching_frequency,
            t_step_hint: 0.0,
            t_start_record: 0.0,
        }
    }
}

/// Which simulator backs a job.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EngineKind {
    Reference,
    External(EngineConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationJob {
    pub netlist: Netlist,
    pub analysis: TransientSpec,
    pub engine: EngineKind,
}

/// Run a job on its selected engine.
pub fn run(job: &SimulationJob) -> Result<Dataset, EngineError> {
    job.analysis.validated()?;
    match &job.engine {
        EngineKind::Reference => {
            let params = detect_buck_pattern(&job.netlist)?;
            run_reference_buck(&params, &job.analysis)
        }
        EngineKind::External(cfg) => run_external(job, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transient_spec_validation() {
        assert!(TransientSpec {
            t_stop: 1e-3,
            t_step_hint: 0.0,
            t_start_record: 0.0
        }
        .validated()
        .is_ok());
        assert!(TransientSpec {
            t_stop: 0.0,
            t_step_hint: 0.0,
            t_start_record: 0.0
        }
        .validated()
        .is_err());
        assert!(TransientSpec {
            t_stop: 1e-3,
            t_step_hint: 0.0,
            t_start_record: 1e-3
        }
        .validated()
        .is_err());
    }

    #[test]
    fn dataset_rejects_ragged_columns() {
        let vars = vec![
            Variable {
                name: "time".into(),
                kind: VarKind::Time,
            },
            Variable {
                name: "V(out)".into(),
                kind: VarKind::Voltage,
            },
        ];
        let err = Dataset::new(vars, vec![vec![0.0, 1.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, EngineError::InvalidDataset(_)));
    }

    #[test]
    fn steady_state_spec_records_last_quarter() {
        let spec = TransientSpec::steady_state(500e3);
        assert!((spec.t_stop - 8e-4).abs() < 1e-12);
        assert!((spec.t_start_record - 6e-4).abs() < 1e-12);
    }
}
