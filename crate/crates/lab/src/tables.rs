//! Result-to-CSV conversion, one function per experiment kind.

use crate::output::Table;
use crate::row;
use crate::runners::{
    median, ConcentrationResult, DecayCell, ExactDynamicsResult, GmmRun, KAblationRun, LeakageCell, NashSweep,
};
use pluricurate::dynamics::Trajectory;

fn estimator_label(traj: &Trajectory, t: usize) -> String {
    let kinds = &traj.records[t].estimators;
    if kinds.is_empty() {
        "tilt".into()
    } else {
        let mut names: Vec<String> = kinds
            .iter()
            .map(|k| serde_json::to_value(k).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
            .collect();
        names.dedup();
        names.join("+")
    }
}

pub fn exact_dynamics(res: &ExactDynamicsResult) -> Vec<Table> {
    let traj = &res.trajectory;
    let two = res.landscape.rewards.len() == 2;
    let mut t = Table::new(
        "trajectory.csv",
        &[
            "t",
            "a",
            "b",
            "m",
            "share_a",
            "expected_r1",
            "expected_r2",
            "var_r1",
            "var_r2",
            "entropy",
            "raw_mass",
            "rho_sup",
            "estimator",
        ],
    );
    for (i, r) in traj.records.iter().enumerate() {
        let inside: f64 = r.basin_mass.iter().sum();
        t.push(row![
            r.t,
            r.basin_mass[0],
            two.then(|| r.basin_mass[1]),
            r.outside_mass,
            two.then(|| if inside > 0.0 { r.basin_mass[0] / inside } else { f64::NAN }),
            r.expected_reward[0],
            two.then(|| r.expected_reward[1]),
            r.reward_variance[0],
            two.then(|| r.reward_variance[1]),
            r.entropy,
            r.raw_mass,
            r.rho_sup,
            estimator_label(traj, i),
        ]);
    }
    let mut snaps = Table::new("snapshots.csv", &["t", "x", "mass"]);
    for (step, dist) in &traj.snapshots {
        for (i, m) in dist.mass().iter().enumerate() {
            snaps.push(row![*step, dist.grid().point(i)[0], *m]);
        }
    }
    let land = &res.landscape;
    let mut l = Table::new("landscape.csv", &["x", "r1", "r2", "basin"]);
    for i in 0..land.grid.len() {
        let basin = (0..land.basins.num_basins()).find(|&b| land.basins.basin_mask(b)[i]).map(|b| b + 1);
        l.push(row![
            land.grid.point(i)[0],
            land.rewards[0].values()[i],
            two.then(|| land.rewards[1].values()[i]),
            basin.map_or(0, |b| b),
        ]);
    }
    let mut s = Table::new(
        "summary.csv",
        &[
            "q",
            "distance",
            "kappa1",
            "kappa2",
            "lower",
            "upper",
            "limit_share",
            "limit_share_range",
            "converged",
            "limit_basin_mass",
            "contained",
            "domination_failures",
        ],
    );
    let share = two.then(|| traj.limit_basin_share(0));
    let iv = res.interval;
    s.push(row![
        res.q,
        land.distance,
        iv.map(|i| i.kappa1),
        iv.map(|i| i.kappa2),
        iv.map(|i| i.lower),
        iv.map(|i| i.upper),
        share.map(|s| s.value),
        share.map(|s| s.range),
        share.map(|s| s.converged),
        traj.limit_basin_mass(0).value,
        iv.zip(share).map(|(i, s)| i.contains(s.value, 1e-9)),
        res.domination_failures.len(),
    ]);
    vec![t, snaps, l, s]
}

pub fn leakage(cells: &[LeakageCell]) -> Vec<Table> {
    let mut t = Table::new(
        "leakage.csv",
        &[
            "q",
            "distance",
            "kappa1",
            "kappa2",
            "lower",
            "empirical",
            "upper",
            "contained",
            "vacuous",
            "range",
            "converged",
            "basin_mass",
        ],
    );
    for c in cells {
        t.push(row![
            c.q,
            c.distance,
            c.interval.kappa1,
            c.interval.kappa2,
            c.interval.lower,
            c.empirical,
            c.interval.upper,
            c.contained,
            c.interval.vacuous,
            c.empirical_range,
            c.converged,
            c.basin_mass,
        ]);
    }
    let mut s = Table::new("leakage_series.csv", &["q", "distance", "t", "share_a", "a", "m"]);
    for c in cells {
        for r in &c.trajectory.records {
            let inside: f64 = r.basin_mass.iter().sum();
            s.push(row![c.q, c.distance, r.t, r.basin_mass[0] / inside, r.basin_mass[0], r.outside_mass]);
        }
    }
    vec![t, s]
}

pub fn decay(cells: &[DecayCell]) -> Vec<Table> {
    let mut t = Table::new(
        "decay.csv",
        &["distance", "slope", "intercept", "r_squared", "points", "domination_ok", "max_excess"],
    );
    let mut s = Table::new("decay_series.csv", &["distance", "t", "m", "rho_sup"]);
    for c in cells {
        t.push(row![
            c.distance,
            c.fit.slope,
            c.fit.intercept,
            c.fit.r_squared,
            c.fit.points,
            c.domination_ok,
            c.max_excess
        ]);
        for r in &c.trajectory.records {
            s.push(row![c.distance, r.t, r.outside_mass, r.rho_sup]);
        }
    }
    vec![t, s]
}

pub fn nash(sweep: &NashSweep) -> Vec<Table> {
    let mut t = Table::new("nash.csv", &["distance", "mse"]);
    for &(d, mse) in &sweep.mse {
        t.push(row![d, mse]);
    }
    let mut d = Table::new("nash_detail.csv", &["distance", "q", "a_inf", "converged", "grid_argmax"]);
    for c in &sweep.cells {
        d.push(row![c.distance, c.q, c.a_inf, c.converged, c.grid_argmax]);
    }
    vec![t, d]
}

pub fn concentration(res: &ConcentrationResult) -> Vec<Table> {
    let c = &res.curve;
    let mut t = Table::new(
        "concentration.csv",
        &["k", "deviation", "estimator", "std_err", "fit", "envelope", "mc_max_z", "mc_exact_mismatches"],
    );
    for p in &c.points {
        let mc = res.mc.iter().find(|m| m.k == p.k);
        t.push(row![
            p.k,
            p.deviation,
            serde_json::to_value(p.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            p.std_err,
            c.fit.eval(p.k),
            c.envelope.eval(p.k),
            mc.map(|m| m.max_z),
            mc.map(|m| m.exact_mismatches),
        ]);
    }
    let mut f = Table::new("concentration_fit.csv", &["fit", "c1", "c2", "sse", "dominates"]);
    for (name, b) in [("nnls", &c.fit), ("envelope", &c.envelope)] {
        f.push(row![name, b.c1, b.c2, b.sse, b.dominates]);
    }
    vec![t, f]
}

pub fn k_ablation(runs: &[KAblationRun]) -> Vec<Table> {
    let mut t = Table::new(
        "k_ablation.csv",
        &["k", "t", "alignment", "expected_r1", "expected_r2", "share_a", "m", "estimator"],
    );
    for run in runs {
        let label = run.k.map_or("inf".to_string(), |k| k.to_string());
        for (i, r) in run.trajectory.records.iter().enumerate() {
            let inside: f64 = r.basin_mass.iter().sum();
            t.push(row![
                label.clone(),
                r.t,
                run.alignment[i],
                r.expected_reward[0],
                r.expected_reward[1],
                r.basin_mass[0] / inside,
                r.outside_mass,
                estimator_label(&run.trajectory, i),
            ]);
        }
    }
    vec![t]
}

const GMM_HEADER: [&str; 26] = [
    "q",
    "distance",
    "replicate",
    "seed",
    "t",
    "components",
    "expected_r1",
    "expected_r2",
    "var_r1",
    "var_r2",
    "weight1",
    "weight2",
    "mean1_x",
    "mean1_y",
    "mean2_x",
    "mean2_y",
    "weight_near_mu1",
    "leak_r1",
    "leak_r2",
    "curated_reward",
    "selection_reward",
    "pool_reward",
    "em_iterations",
    "em_degenerate",
    "min_var",
    "mean_reward",
];

fn gmm_trajectory_table(runs: &[GmmRun]) -> Table {
    let mut t = Table::new("gmm_trajectory.csv", &GMM_HEADER);
    for run in runs {
        let q = run.q;
        for r in &run.trajectory.records {
            let w2 = r.weights.get(1).copied();
            let m2 = r.means.get(1).copied();
            t.push(row![
                q,
                run.distance,
                run.replicate,
                run.trajectory.config.seed,
                r.t,
                r.components,
                r.expected_reward[0],
                r.expected_reward[1],
                r.reward_variance[0],
                r.reward_variance[1],
                r.weights[0],
                w2,
                r.means[0][0],
                r.means[0][1],
                m2.map(|m| m[0]),
                m2.map(|m| m[1]),
                r.weight_near_mu1,
                r.leakage[0],
                r.leakage[1],
                r.curated_reward,
                r.selection_reward,
                r.pool_reward,
                r.em_iterations,
                r.em_degenerate,
                r.reward_variance[0].min(r.reward_variance[1]),
                q * r.expected_reward[0] + (1.0 - q) * r.expected_reward[1],
            ]);
        }
    }
    t
}

fn gmm_final_table(runs: &[GmmRun]) -> Table {
    let mut t = Table::new(
        "gmm_final.csv",
        &["q", "distance", "replicate", "seed", "var_r1", "var_r2", "min_var", "weight_near_mu1", "components"],
    );
    for run in runs {
        let r = run.trajectory.last();
        t.push(row![
            run.q,
            run.distance,
            run.replicate,
            run.trajectory.config.seed,
            r.reward_variance[0],
            r.reward_variance[1],
            run.trajectory.final_min_variance(),
            r.weight_near_mu1,
            r.components,
        ]);
    }
    t
}

pub fn gmm(runs: &[GmmRun]) -> Vec<Table> {
    vec![gmm_trajectory_table(runs), gmm_final_table(runs)]
}

pub fn q_sweep(runs: &[GmmRun]) -> Vec<Table> {
    let mut qs: Vec<f64> = runs.iter().map(|r| r.q).collect();
    qs.dedup();
    let mut s =
        Table::new("q_sweep.csv", &["q", "replicates", "median_weight_near_mu1", "abs_error", "median_min_var"]);
    for q in qs {
        let cell: Vec<&GmmRun> = runs.iter().filter(|r| r.q == q).collect();
        let w = median(&mut cell.iter().map(|r| r.trajectory.last().weight_near_mu1).collect::<Vec<_>>());
        let v = median(&mut cell.iter().map(|r| r.trajectory.final_min_variance()).collect::<Vec<_>>());
        s.push(row![q, cell.len(), w, (w - q).abs(), v]);
    }
    vec![gmm_trajectory_table(runs), gmm_final_table(runs), s]
}
