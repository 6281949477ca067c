//! Typed experiment drivers. Each takes a validated spec, runs the engine and
//! returns in-memory results; [`tables`] turns results into CSV tables.

use std::sync::Arc;

use rayon::prelude::*;

use pluricurate::analysis::{
    concentration_curve, fit_log_linear, leakage_interval_for_basins, nash_solve, ConcentrationCurve, DecayFit,
    LeakageInterval,
};
use pluricurate::curation::{bt_weight_finite, bt_weight_mc, FiniteKEstimator};
use pluricurate::dynamics::{run_trajectory, DynamicsConfig, Trajectory, UpdateMode};
use pluricurate::gmm::{run_gmm_retraining, EmConfig, GmmExperimentConfig, GmmTrajectory};
use pluricurate::model::{
    compute_basins, quadratic_reward, BasinAnalysis, Grid, GridDistribution, PreferenceMixture, RewardField,
};
use pluricurate::rng::derive_seed;

use crate::spec::ExperimentSpec;
use crate::LabError;

/// The 1D two-centre landscape shared by the grid experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub midpoint: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn from_spec(spec: &ExperimentSpec) -> Self {
        GridSpec {
            lo: spec.f64("grid_lo"),
            hi: spec.f64("grid_hi"),
            points: spec.usize("grid_points"),
            midpoint: spec.f64("midpoint"),
            gamma: spec.f64("gamma"),
            epsilon: spec.f64("epsilon"),
            steps: spec.usize("steps"),
        }
    }

    /// Rewards `−γ(x − c_i)²` with `c = midpoint ∓ d/2`; only `r₁` when
    /// `single` is set.
    pub fn landscape(&self, distance: f64, single: bool) -> Result<Landscape, LabError> {
        if !(self.hi > self.lo) {
            return Err(LabError::Config(format!("grid_hi ({}) must exceed grid_lo ({})", self.hi, self.lo)));
        }
        let grid = Grid::uniform_1d(self.lo, self.hi, self.points)?;
        let centers = [self.midpoint - distance / 2.0, self.midpoint + distance / 2.0];
        let count = if single { 1 } else { 2 };
        let rewards = centers[..count]
            .iter()
            .map(|&c| quadratic_reward(&[c], &grid).and_then(|r| r.scaled(self.gamma)))
            .collect::<Result<Vec<_>, _>>()?;
        let basins = compute_basins(&rewards, self.epsilon, true)?;
        Ok(Landscape { grid, rewards, basins, centers, distance })
    }
}

#[derive(Debug, Clone)]
pub struct Landscape {
    pub grid: Arc<Grid>,
    pub rewards: Vec<RewardField>,
    pub basins: BasinAnalysis,
    pub centers: [f64; 2],
    pub distance: f64,
}

impl Landscape {
    pub fn mixture(&self, q: f64) -> Result<PreferenceMixture, LabError> {
        Ok(if self.rewards.len() == 1 { PreferenceMixture::single() } else { PreferenceMixture::two(q)? })
    }

    pub fn run(
        &self,
        q: f64,
        mode: UpdateMode,
        steps: usize,
        snapshots: Vec<usize>,
        seed: u64,
    ) -> Result<Trajectory, LabError> {
        let config = DynamicsConfig::new(self.rewards.clone(), self.mixture(q)?, mode, steps)?
            .with_snapshots(snapshots)
            .with_seed(seed);
        Ok(run_trajectory(&GridDistribution::uniform(self.grid.clone()), &config, &self.basins)?)
    }
}

pub fn estimator_from_spec(spec: &ExperimentSpec) -> FiniteKEstimator {
    let (n_mc, state_cap) = (spec.usize("n_mc"), spec.usize("state_cap"));
    match spec.str("estimator") {
        "exact" => FiniteKEstimator::Exact { state_cap },
        "quadrature" => FiniteKEstimator::Quadrature,
        "mc" => FiniteKEstimator::MonteCarlo { n_mc },
        _ => FiniteKEstimator::Auto { state_cap, n_mc },
    }
}

// ---------------------------------------------------------------- exact dynamics

#[derive(Debug, Clone)]
pub struct ExactDynamicsResult {
    pub landscape: Landscape,
    pub q: f64,
    pub trajectory: Trajectory,
    pub interval: Option<LeakageInterval>,
    /// Steps whose outside multiplier reached 1.
    pub domination_failures: Vec<usize>,
}

pub fn run_exact_dynamics(spec: &ExperimentSpec) -> Result<ExactDynamicsResult, LabError> {
    let grid = GridSpec::from_spec(spec);
    let q = spec.f64("q");
    let landscape = grid.landscape(spec.f64("distance"), q == 1.0)?;
    let mode = match spec.str("mode") {
        "finite" => UpdateMode::FiniteK { k: spec.usize("K"), estimator: estimator_from_spec(spec) },
        _ => UpdateMode::InfiniteK,
    };
    let trajectory = landscape.run(q, mode, grid.steps, spec.usize_list("snapshots"), spec.seed)?;
    let interval =
        if landscape.rewards.len() == 2 { Some(leakage_interval_for_basins(q, &landscape.basins)?) } else { None };
    let domination_failures =
        trajectory.records.iter().filter(|r| r.rho_sup.is_some_and(|rho| rho >= 1.0)).map(|r| r.t).collect();
    Ok(ExactDynamicsResult { landscape, q, trajectory, interval, domination_failures })
}

// ---------------------------------------------------------------- leakage sweep

#[derive(Debug, Clone)]
pub struct LeakageCell {
    pub q: f64,
    pub distance: f64,
    pub interval: LeakageInterval,
    /// Limiting share of basin 1 inside `S_ε`.
    pub empirical: f64,
    pub empirical_range: f64,
    pub converged: bool,
    /// Limiting raw basin mass `a_t` (includes the residual outside mass).
    pub basin_mass: f64,
    pub contained: bool,
    pub landscape: Arc<Landscape>,
    pub trajectory: Trajectory,
}

fn landscapes(grid: &GridSpec, distances: &[f64]) -> Result<Vec<Arc<Landscape>>, LabError> {
    distances.iter().map(|&d| grid.landscape(d, false).map(Arc::new)).collect()
}

pub fn run_leakage_sweep(spec: &ExperimentSpec) -> Result<Vec<LeakageCell>, LabError> {
    let grid = GridSpec::from_spec(spec);
    let tol = spec.f64("tolerance");
    let lands = landscapes(&grid, &spec.f64_list("distances"))?;
    let cells: Vec<(f64, Arc<Landscape>)> =
        spec.f64_list("qs").into_iter().flat_map(|q| lands.iter().map(move |l| (q, l.clone()))).collect();
    cells
        .into_par_iter()
        .map(|(q, land)| {
            let trajectory = land.run(q, UpdateMode::InfiniteK, grid.steps, Vec::new(), spec.seed)?;
            let interval = leakage_interval_for_basins(q, &land.basins)?;
            let share = trajectory.limit_basin_share(0);
            Ok(LeakageCell {
                q,
                distance: land.distance,
                interval,
                empirical: share.value,
                empirical_range: share.range,
                converged: share.converged,
                basin_mass: trajectory.limit_basin_mass(0).value,
                contained: interval.contains(share.value, tol),
                landscape: land,
                trajectory,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- decay sweep

#[derive(Debug, Clone)]
pub struct DecayCell {
    pub distance: f64,
    pub fit: DecayFit,
    /// Every step with `ρ_sup < 1` satisfied `m_{t+1} ≤ ρ_sup m_t + 1e-12`.
    pub domination_ok: bool,
    /// Largest `m_{t+1} − ρ_sup m_t` over those steps.
    pub max_excess: f64,
    pub trajectory: Trajectory,
}

/// Checks the one-step outside decay along a trajectory.
pub fn outside_decay_check(traj: &Trajectory) -> (bool, f64) {
    let mut max_excess = f64::NEG_INFINITY;
    for w in traj.records.windows(2) {
        if let Some(rho) = w[0].rho_sup.filter(|&r| r < 1.0) {
            max_excess = max_excess.max(w[1].outside_mass - rho * w[0].outside_mass);
        }
    }
    (max_excess <= 1e-12, max_excess)
}

pub fn run_decay_sweep(spec: &ExperimentSpec) -> Result<Vec<DecayCell>, LabError> {
    let grid = GridSpec::from_spec(spec);
    let q = spec.f64("q");
    landscapes(&grid, &spec.f64_list("distances"))?
        .into_par_iter()
        .map(|land| {
            let trajectory = land.run(q, UpdateMode::InfiniteK, grid.steps, Vec::new(), spec.seed)?;
            let fit = fit_log_linear(&trajectory.outside_masses())?;
            let (domination_ok, max_excess) = outside_decay_check(&trajectory);
            Ok(DecayCell { distance: land.distance, fit, domination_ok, max_excess, trajectory })
        })
        .collect()
}

// ---------------------------------------------------------------- nash sweep

#[derive(Debug, Clone)]
pub struct NashCell {
    pub distance: f64,
    pub q: f64,
    pub a_inf: f64,
    pub converged: bool,
    pub grid_argmax: f64,
    pub trajectory: Trajectory,
    pub landscape: Arc<Landscape>,
}

#[derive(Debug, Clone)]
pub struct NashSweep {
    pub cells: Vec<NashCell>,
    /// `(distance, MSE(a_∞, q))` in input order.
    pub mse: Vec<(f64, f64)>,
}

pub fn run_nash_sweep(spec: &ExperimentSpec) -> Result<NashSweep, LabError> {
    let grid = GridSpec::from_spec(spec);
    let alpha_points = spec.usize("alpha_points");
    let lands = landscapes(&grid, &spec.f64_list("distances"))?;
    let qs = spec.f64_list("qs");
    let jobs: Vec<(f64, Arc<Landscape>)> = lands.iter().flat_map(|l| qs.iter().map(move |&q| (q, l.clone()))).collect();
    let cells: Vec<NashCell> = jobs
        .into_par_iter()
        .map(|(q, land)| {
            let trajectory = land.run(q, UpdateMode::InfiniteK, grid.steps, Vec::new(), spec.seed)?;
            let share = trajectory.limit_basin_share(0);
            let fin = &trajectory.final_dist;
            let p1 = fin.conditional(land.basins.basin_mask(0))?;
            let p2 = fin.conditional(land.basins.basin_mask(1))?;
            let sol = nash_solve(&p1, &p2, &land.rewards[0], &land.rewards[1], q, alpha_points)?;
            Ok(NashCell {
                distance: land.distance,
                q,
                a_inf: share.value,
                converged: share.converged,
                grid_argmax: sol.grid_argmax,
                trajectory,
                landscape: land,
            })
        })
        .collect::<Result<_, LabError>>()?;
    let mse = lands
        .iter()
        .map(|l| {
            let errs: Vec<f64> =
                cells.iter().filter(|c| c.distance == l.distance).map(|c| (c.a_inf - c.q).powi(2)).collect();
            (l.distance, errs.iter().sum::<f64>() / errs.len() as f64)
        })
        .collect();
    Ok(NashSweep { cells, mse })
}

// ---------------------------------------------------------------- concentration

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McAgreement {
    pub k: usize,
    /// Largest `|H_mc − H| / se` over the basin.
    pub max_z: f64,
    /// Points where the standard error is zero but the estimates differ.
    pub exact_mismatches: usize,
}

#[derive(Debug, Clone)]
pub struct ConcentrationResult {
    pub curve: ConcentrationCurve,
    pub mc: Vec<McAgreement>,
}

pub fn run_concentration(spec: &ExperimentSpec) -> Result<ConcentrationResult, LabError> {
    let (lo, hi, n) = (spec.f64("support_lo"), spec.f64("support_hi"), spec.usize("support_points"));
    if !(hi > lo) {
        return Err(LabError::Config(format!("support_hi ({hi}) must exceed support_lo ({lo})")));
    }
    let grid = Grid::uniform_1d(lo, hi, n)?;
    let reward = quadratic_reward(&[spec.f64("reward_center")], &grid)?.scaled(spec.f64("gamma"))?;
    let dist = GridDistribution::uniform(grid);
    let eps = spec.f64("epsilon");
    let ks = spec.usize_list("ks");
    let estimator = estimator_from_spec(spec);
    let curve = concentration_curve(&dist, &reward, eps, &ks, estimator, spec.seed)?;
    let mut mc = Vec::new();
    if spec.bool("mc_check") {
        let mask = compute_basins(std::slice::from_ref(&reward), eps, false)?.basin_mask(0).to_vec();
        mc = ks
            .par_iter()
            .enumerate()
            .map(|(i, &k)| {
                let reference = bt_weight_finite(&dist, &reward, k, estimator, derive_seed(spec.seed, i as u64))?;
                let sampled =
                    bt_weight_mc(&dist, &reward, k, spec.usize("n_mc"), derive_seed(spec.seed, 1000 + i as u64))?;
                let se = sampled.std_err.as_ref().expect("Monte-Carlo standard errors");
                let (mut max_z, mut exact_mismatches) = (0.0f64, 0);
                for x in (0..mask.len()).filter(|&x| mask[x]) {
                    let diff = (sampled.weights[x] - reference.weights[x]).abs();
                    if se[x] > 0.0 {
                        max_z = max_z.max(diff / se[x]);
                    } else if diff > 1e-12 {
                        exact_mismatches += 1;
                    }
                }
                Ok(McAgreement { k, max_z, exact_mismatches })
            })
            .collect::<Result<_, LabError>>()?;
    }
    Ok(ConcentrationResult { curve, mc })
}

// ---------------------------------------------------------------- k ablation

#[derive(Debug, Clone)]
pub struct KAblationRun {
    /// `None` for the infinite-K trajectory.
    pub k: Option<usize>,
    pub trajectory: Trajectory,
    /// `Σ q_i E[r_i]` per step.
    pub alignment: Vec<f64>,
}

pub fn run_k_ablation(spec: &ExperimentSpec) -> Result<Vec<KAblationRun>, LabError> {
    let grid = GridSpec::from_spec(spec);
    let q = spec.f64("q");
    let land = grid.landscape(spec.f64("distance"), false)?;
    let estimator = estimator_from_spec(spec);
    let mut ks: Vec<Option<usize>> = spec.usize_list("ks").into_iter().map(Some).collect();
    if spec.bool("include_infinite") {
        ks.push(None);
    }
    ks.into_par_iter()
        .map(|k| {
            let mode = k.map_or(UpdateMode::InfiniteK, |k| UpdateMode::FiniteK { k, estimator });
            let trajectory = land.run(q, mode, grid.steps, Vec::new(), spec.seed)?;
            let alignment = trajectory
                .records
                .iter()
                .map(|r| q * r.expected_reward[0] + (1.0 - q) * r.expected_reward[1])
                .collect();
            Ok(KAblationRun { k, trajectory, alignment })
        })
        .collect()
}

// ---------------------------------------------------------------- GMM

pub fn gmm_config_from_spec(spec: &ExperimentSpec) -> GmmExperimentConfig {
    GmmExperimentConfig {
        mu1: spec.point("mu1"),
        mu2: spec.point("mu2"),
        q: spec.params.get("q").and_then(|v| v.as_f64()).unwrap_or(0.5),
        k: spec.usize("K"),
        n_curated: spec.usize("n_curated"),
        steps: spec.usize("steps"),
        capacity_switch: spec.usize("capacity_switch"),
        temperature: spec.f64("temperature"),
        eval_samples: spec.usize("eval_samples"),
        init_samples: spec.usize("init_samples"),
        init_mean: spec.opt_point("init_mean"),
        init_cov_scale: spec.f64("init_cov_scale"),
        em: EmConfig {
            restarts: spec.usize("em_restarts"),
            max_iter: spec.usize("em_max_iter"),
            tol: spec.f64("em_tol"),
            cov_floor: spec.f64("em_cov_floor"),
        },
        seed: spec.seed,
    }
}

#[derive(Debug, Clone)]
pub struct GmmRun {
    pub q: f64,
    pub distance: Option<f64>,
    pub replicate: usize,
    pub trajectory: GmmTrajectory,
}

fn run_gmm_cells(base: &GmmExperimentConfig, cells: Vec<(f64, Option<f64>, usize)>) -> Result<Vec<GmmRun>, LabError> {
    for &(q, _, _) in &cells {
        GmmExperimentConfig { q, ..base.clone() }.validate()?;
    }
    cells
        .into_par_iter()
        .map(|(q, distance, replicate)| {
            let mut cfg = GmmExperimentConfig { q, seed: derive_seed(base.seed, replicate as u64), ..base.clone() };
            if let Some(d) = distance {
                cfg = cfg.with_distance(d);
            }
            let trajectory = run_gmm_retraining(&cfg)?;
            Ok(GmmRun { q, distance, replicate, trajectory })
        })
        .collect()
}

pub fn run_gmm(spec: &ExperimentSpec) -> Result<Vec<GmmRun>, LabError> {
    let base = gmm_config_from_spec(spec);
    let distances: Vec<Option<f64>> = match (spec.opt_f64_list("distances"), spec.opt_f64("distance")) {
        (Some(ds), _) => ds.into_iter().map(Some).collect(),
        (None, d) => vec![d],
    };
    let reps = spec.usize("replicates");
    let cells = distances.into_iter().flat_map(|d| (0..reps).map(move |r| (base.q, d, r))).collect();
    run_gmm_cells(&base, cells)
}

pub fn run_q_sweep(spec: &ExperimentSpec) -> Result<Vec<GmmRun>, LabError> {
    let base = gmm_config_from_spec(spec);
    let reps = spec.usize("replicates");
    let cells = spec.f64_list("qs").into_iter().flat_map(|q| (0..reps).map(move |r| (q, None, r))).collect();
    run_gmm_cells(&base, cells)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
