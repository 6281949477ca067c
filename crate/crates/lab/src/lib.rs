//! Experiment runner for `pluricurate`: JSON configs in, CSV tables and a
//! checksummed JSON manifest out.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod output;
pub mod plot;
pub mod runners;
pub mod schema;
pub mod spec;
pub mod tables;

pub use output::{RunManifest, Table};
pub use plot::emit_plot_data;
pub use schema::Kind;
pub use spec::{parse_config, ExperimentSpec};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing input: {0}")]
    MissingInput(String),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::MissingInput(_) => 2,
            LabError::Assumption(_) => 3,
            LabError::Numerical(_) | LabError::Io(_) | LabError::Csv(_) => 4,
        }
    }
}

impl From<pluricurate::Error> for LabError {
    fn from(e: pluricurate::Error) -> Self {
        use pluricurate::Error as E;
        match e {
            E::InvalidInput(_) | E::SupportMismatch(_) | E::OverlappingBasins { .. } => LabError::Config(e.to_string()),
            E::HypothesisViolated(_) => LabError::Assumption(e.to_string()),
            _ => LabError::Numerical(e.to_string()),
        }
    }
}

/// Tables plus the run status they imply.
struct Outcome {
    tables: Vec<Table>,
    notes: Vec<String>,
    assumption_violated: bool,
}

impl From<Vec<Table>> for Outcome {
    fn from(tables: Vec<Table>) -> Self {
        Outcome { tables, notes: Vec::new(), assumption_violated: false }
    }
}

fn compute(spec: &ExperimentSpec) -> Result<Outcome, LabError> {
    Ok(match spec.kind {
        Kind::ExactDynamics => {
            let res = runners::run_exact_dynamics(spec)?;
            let mut outcome = Outcome::from(tables::exact_dynamics(&res));
            if spec.bool("check_outside_domination") && !res.domination_failures.is_empty() {
                outcome.assumption_violated = true;
                outcome.notes.push(format!(
                    "outside multiplier reached 1 at steps {:?}",
                    &res.domination_failures[..res.domination_failures.len().min(10)]
                ));
            }
            outcome
        }
        Kind::Gmm => tables::gmm(&runners::run_gmm(spec)?).into(),
        Kind::QSweep => tables::q_sweep(&runners::run_q_sweep(spec)?).into(),
        Kind::LeakageSweep => {
            let cells = runners::run_leakage_sweep(spec)?;
            let mut outcome = Outcome::from(tables::leakage(&cells));
            let missed = cells.iter().filter(|c| !c.contained).count();
            if missed > 0 {
                outcome.notes.push(format!("{missed} cell(s) fall outside their leakage interval"));
            }
            outcome
        }
        Kind::DecaySweep => tables::decay(&runners::run_decay_sweep(spec)?).into(),
        Kind::NashSweep => tables::nash(&runners::run_nash_sweep(spec)?).into(),
        Kind::Concentration => tables::concentration(&runners::run_concentration(spec)?).into(),
        Kind::KAblation => tables::k_ablation(&runners::run_k_ablation(spec)?).into(),
    })
}

/// Runs `spec`, writes its tables and then the manifest into `out_dir`.
///
/// `threads` bounds the sweep parallelism (`None`: rayon's default). On
/// failure every file this call created is removed.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path, threads: Option<usize>) -> Result<RunManifest, LabError> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| LabError::Config(format!("cannot build thread pool: {e}")))?;
    let outcome = pool.install(|| compute(spec))?;

    fs::create_dir_all(out_dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        let mut outputs = Vec::new();
        for table in &outcome.tables {
            let path = table.write(out_dir)?;
            written.push(path.clone());
            outputs.push(output::OutputFile {
                file: table.name.clone(),
                sha256: output::sha256_file(&path)?,
                rows: table.rows.len(),
            });
        }
        let manifest = RunManifest {
            spec: spec.to_json(),
            kind: spec.kind.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: spec.seed,
            started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            status: if outcome.assumption_violated { "assumption-violation" } else { "ok" }.to_string(),
            notes: outcome.notes.clone(),
            outputs,
        };
        manifest.write_atomic(out_dir)?;
        Ok(manifest)
    })();
    if result.is_err() {
        for path in &written {
            let _ = fs::remove_file(path);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_codes() {
        let e: LabError = pluricurate::Error::InvalidInput("x".into()).into();
        assert_eq!(e.exit_code(), 2);
        let e: LabError = pluricurate::Error::HypothesisViolated("x".into()).into();
        assert_eq!(e.exit_code(), 3);
        let e: LabError = pluricurate::Error::Numerical("x".into()).into();
        assert_eq!(e.exit_code(), 4);
    }
}
