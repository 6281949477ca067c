//! Tidy `series,x,y` files, one per figure, derived from a finished run.

use std::fs;
use std::path::{Path, PathBuf};

use crate::output::{ReadTable, RunManifest, Table};
use crate::row;
use crate::LabError;

pub const PLOT_DIR: &str = "plots";

fn load(dir: &Path, manifest: &RunManifest, name: &str) -> Result<ReadTable, LabError> {
    if manifest.output(name).is_none() {
        return Err(LabError::MissingInput(format!("{name} is not listed in the {} manifest", manifest.kind)));
    }
    let path = dir.join(name);
    if !path.exists() {
        return Err(LabError::MissingInput(format!("{} does not exist", path.display())));
    }
    ReadTable::read(&path)
}

/// Builds one tidy table; `label` names the series of each row and
/// `pairs` lists `(suffix, x column, y column)`.
fn tidy(
    name: &str,
    src: &ReadTable,
    label: &dyn Fn(usize) -> String,
    pairs: &[(&str, &str, &str)],
) -> Result<Table, LabError> {
    let mut t = Table::new(name, &["series", "x", "y"]);
    for &(suffix, xc, yc) in pairs {
        let (xi, yi) = (src.col(xc)?, src.col(yc)?);
        for (r, row) in src.rows.iter().enumerate() {
            if row[yi].is_empty() {
                continue;
            }
            let mut series = label(r);
            if !suffix.is_empty() {
                series = if series.is_empty() { suffix.to_string() } else { format!("{series}/{suffix}") };
            }
            t.push(row![series, row[xi].clone(), row[yi].clone()]);
        }
    }
    Ok(t)
}

/// Labels rows by the listed key columns, e.g. `q=0.5/replicate=0`.
fn keyed<'a>(src: &'a ReadTable, keys: &'a [&'a str]) -> Result<impl Fn(usize) -> String + 'a, LabError> {
    let cols: Vec<(usize, &str)> = keys.iter().map(|k| src.col(k).map(|c| (c, *k))).collect::<Result<_, _>>()?;
    Ok(move |r: usize| {
        cols.iter()
            .filter(|(c, _)| !src.rows[r][*c].is_empty())
            .map(|(c, k)| format!("{k}={}", short(&src.rows[r][*c])))
            .collect::<Vec<_>>()
            .join("/")
    })
}

/// Trims the 17-digit rendering for labels.
fn short(v: &str) -> String {
    v.parse::<f64>().map_or_else(|_| v.to_string(), |x| format!("{x}"))
}

/// Writes the plot tables for the run in `dir` into `dir/plots`.
pub fn emit_plot_data(dir: &Path) -> Result<Vec<PathBuf>, LabError> {
    let manifest = RunManifest::read(dir)?;
    let none = |_: usize| String::new();
    let mut out: Vec<Table> = Vec::new();
    match manifest.kind.as_str() {
        "exact-dynamics" => {
            let traj = load(dir, &manifest, "trajectory.csv")?;
            out.push(tidy("variance_trajectories.csv", &traj, &none, &[("r1", "t", "var_r1"), ("r2", "t", "var_r2")])?);
            out.push(tidy("entropy_vs_iter.csv", &traj, &none, &[("entropy", "t", "entropy")])?);
            out.push(tidy(
                "basin_mass_vs_iter.csv",
                &traj,
                &none,
                &[("a", "t", "a"), ("b", "t", "b"), ("m", "t", "m"), ("share_a", "t", "share_a")],
            )?);
            let snaps = load(dir, &manifest, "snapshots.csv")?;
            let steps = snaps.strings("t")?;
            let mut seen: Vec<&String> = Vec::new();
            for s in &steps {
                if !seen.contains(&s) {
                    seen.push(s);
                }
            }
            for step in seen {
                let mut t = Table::new(&format!("density_t{step}.csv"), &["series", "x", "y"]);
                let (xi, mi) = (snaps.col("x")?, snaps.col("mass")?);
                for (row, s) in snaps.rows.iter().zip(&steps) {
                    if s == step {
                        t.push(row![format!("t={step}"), row[xi].clone(), row[mi].clone()]);
                    }
                }
                out.push(t);
            }
        }
        "gmm" | "q-sweep" => {
            let traj = load(dir, &manifest, "gmm_trajectory.csv")?;
            let label = keyed(&traj, &["q", "distance", "replicate"])?;
            out.push(tidy(
                "variance_trajectories.csv",
                &traj,
                &label,
                &[("r1", "t", "var_r1"), ("r2", "t", "var_r2")],
            )?);
            out.push(tidy("weight_vs_iter.csv", &traj, &label, &[("", "t", "weight_near_mu1")])?);
            let fin = load(dir, &manifest, "gmm_final.csv")?;
            if manifest.kind == "gmm" {
                let label = keyed(&fin, &["q", "replicate"])?;
                out.push(tidy("min_variance_vs_distance.csv", &fin, &label, &[("", "distance", "min_var")])?);
            } else {
                let sweep = load(dir, &manifest, "q_sweep.csv")?;
                out.push(tidy(
                    "weight_vs_q.csv",
                    &sweep,
                    &none,
                    &[("median", "q", "median_weight_near_mu1"), ("target", "q", "q")],
                )?);
            }
        }
        "leakage-sweep" => {
            let series = load(dir, &manifest, "leakage_series.csv")?;
            let label = keyed(&series, &["q", "distance"])?;
            out.push(tidy("share_vs_iter.csv", &series, &label, &[("", "t", "share_a")])?);
            let table = load(dir, &manifest, "leakage.csv")?;
            let label = keyed(&table, &["distance"])?;
            out.push(tidy(
                "leakage_bounds.csv",
                &table,
                &label,
                &[("lower", "q", "lower"), ("empirical", "q", "empirical"), ("upper", "q", "upper")],
            )?);
        }
        "decay-sweep" => {
            let series = load(dir, &manifest, "decay_series.csv")?;
            let label = keyed(&series, &["distance"])?;
            out.push(tidy("outside_mass_vs_iter.csv", &series, &label, &[("", "t", "m")])?);
        }
        "nash-sweep" => {
            let table = load(dir, &manifest, "nash.csv")?;
            out.push(tidy("nash_mse_vs_distance.csv", &table, &none, &[("mse", "distance", "mse")])?);
            let detail = load(dir, &manifest, "nash_detail.csv")?;
            let label = keyed(&detail, &["distance"])?;
            out.push(tidy("limit_vs_q.csv", &detail, &label, &[("", "q", "a_inf")])?);
        }
        "concentration" => {
            let table = load(dir, &manifest, "concentration.csv")?;
            out.push(tidy(
                "deviation_vs_k.csv",
                &table,
                &none,
                &[("deviation", "k", "deviation"), ("fit", "k", "fit"), ("envelope", "k", "envelope")],
            )?);
        }
        "k-ablation" => {
            let table = load(dir, &manifest, "k_ablation.csv")?;
            let label = keyed(&table, &["k"])?;
            out.push(tidy("alignment_vs_iter.csv", &table, &label, &[("", "t", "alignment")])?);
            out.push(tidy("share_vs_iter.csv", &table, &label, &[("", "t", "share_a")])?);
        }
        other => return Err(LabError::MissingInput(format!("manifest has unknown kind `{other}`"))),
    }
    let plot_dir = dir.join(PLOT_DIR);
    fs::create_dir_all(&plot_dir)?;
    out.iter().map(|t| t.write(&plot_dir)).collect()
}
