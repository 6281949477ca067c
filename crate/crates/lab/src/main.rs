use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use pluricurate_lab::spec::{from_object, parse_config};
use pluricurate_lab::{emit_plot_data, run_experiment, ExperimentSpec, Kind, LabError};

#[derive(Parser)]
#[command(name = "pluricurate", version, about = "Run curated-retraining experiments and write CSV tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file, or inline JSON starting with `{`.
    #[arg(long)]
    config: Option<String>,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweep cells.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact grid dynamics for one landscape.
    ExactDynamics(RunArgs),
    /// GMM retraining loop.
    Gmm(RunArgs),
    /// Leakage-interval containment over q × distance.
    LeakageSweep(RunArgs),
    /// Outside-mass decay rates over distance.
    DecaySweep(RunArgs),
    /// Limiting basin share against q over distance.
    NashSweep(RunArgs),
    /// Finite-K weight deviation from the tilt.
    Concentration(RunArgs),
    /// GMM weight tracking over q.
    QSweep(RunArgs),
    /// Finite-K against infinite-K trajectories.
    KAblation(RunArgs),
    /// Derive tidy plot tables from a finished run directory.
    Plot {
        /// Run directory holding manifest.json.
        dir: PathBuf,
    },
    /// Print the parameter schema of one kind, or of all kinds.
    Schema { kind: Option<String> },
}

fn load_spec(kind: Kind, args: &RunArgs) -> Result<ExperimentSpec, LabError> {
    let mut spec = match &args.config {
        Some(c) => {
            let parsed = parse_config(c)?;
            if parsed.kind != kind {
                return Err(LabError::Config(format!(
                    "config kind `{}` does not match subcommand `{}`",
                    parsed.kind.name(),
                    kind.name()
                )));
            }
            parsed
        }
        None => from_object(Map::new(), Some(kind))?,
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(out) = &args.out {
        spec.out = Some(out.clone());
    }
    Ok(spec)
}

fn schema_json(kind: Kind) -> Value {
    let params: Vec<Value> = kind
        .params()
        .into_iter()
        .map(|p| {
            serde_json::json!({
                "key": p.key,
                "type": p.ty.describe(),
                "default": p.default,
                "doc": p.doc,
            })
        })
        .collect();
    serde_json::json!({ "kind": kind.name(), "params": params })
}

fn run(cli: Cli) -> Result<i32, LabError> {
    let (kind, args) = match cli.command {
        Command::Plot { dir } => {
            for path in emit_plot_data(&dir)? {
                println!("{}", path.display());
            }
            return Ok(0);
        }
        Command::Schema { kind } => {
            let kinds = match kind {
                Some(name) => {
                    vec![Kind::from_name(&name).ok_or_else(|| LabError::Config(format!("unknown kind `{name}`")))?]
                }
                None => Kind::ALL.to_vec(),
            };
            let doc: Vec<Value> = kinds.into_iter().map(schema_json).collect();
            println!("{}", serde_json::to_string_pretty(&doc).expect("schema serialises"));
            return Ok(0);
        }
        Command::ExactDynamics(a) => (Kind::ExactDynamics, a),
        Command::Gmm(a) => (Kind::Gmm, a),
        Command::LeakageSweep(a) => (Kind::LeakageSweep, a),
        Command::DecaySweep(a) => (Kind::DecaySweep, a),
        Command::NashSweep(a) => (Kind::NashSweep, a),
        Command::Concentration(a) => (Kind::Concentration, a),
        Command::QSweep(a) => (Kind::QSweep, a),
        Command::KAblation(a) => (Kind::KAblation, a),
    };
    let spec = load_spec(kind, &args)?;
    let out = spec.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(kind.name()));
    let manifest = run_experiment(&spec, &out, args.threads)?;
    for o in &manifest.outputs {
        println!("{}  {}", o.sha256, out.join(&o.file).display());
    }
    for note in &manifest.notes {
        eprintln!("note: {note}");
    }
    Ok(if manifest.status == "assumption-violation" { 3 } else { 0 })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
