//! Exact retraining dynamics on grid densities.
//!
//! One retraining step with idealised maximum likelihood sets the next model
//! to the selected-sample density, `p_{t+1}(x) = p_t(x) · Σ_i q_i H_i(x)`,
//! where `H_i` is the curation weight of reward `i` (the exponential tilt for
//! `K = ∞`, a finite-K estimate otherwise).

use serde::Serialize;

use crate::curation::{bt_weight_finite, tilt_weight, EstimatorKind, FiniteKEstimator};
use crate::error::{Error, Result};
use crate::model::{compensated_sum, BasinAnalysis, GridDistribution, PreferenceMixture, RewardField};
use crate::rng;

/// Window and tolerance used to read off limiting basin masses.
pub const LIMIT_WINDOW: usize = 10;
pub const LIMIT_RANGE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum UpdateMode {
    InfiniteK,
    FiniteK { k: usize, estimator: FiniteKEstimator },
}

#[derive(Debug, Clone)]
pub struct DynamicsConfig {
    pub rewards: Vec<RewardField>,
    pub mixture: PreferenceMixture,
    pub mode: UpdateMode,
    pub steps: usize,
    /// Steps (0 = initial density) whose full density is kept.
    pub snapshots: Vec<usize>,
    pub seed: u64,
}

impl DynamicsConfig {
    pub fn new(rewards: Vec<RewardField>, mixture: PreferenceMixture, mode: UpdateMode, steps: usize) -> Result<Self> {
        let config = DynamicsConfig { rewards, mixture, mode, steps, snapshots: Vec::new(), seed: 0 };
        config.validate()?;
        Ok(config)
    }

    pub fn with_snapshots(mut self, snapshots: Vec<usize>) -> Self {
        self.snapshots = snapshots;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("number of steps must be >= 1"));
        }
        if self.rewards.is_empty() {
            return Err(Error::invalid("at least one reward is required"));
        }
        if self.rewards.len() != self.mixture.len() {
            return Err(Error::invalid(format!(
                "{} rewards but {} mixture weights",
                self.rewards.len(),
                self.mixture.len()
            )));
        }
        if let UpdateMode::FiniteK { k, .. } = self.mode {
            if k < 2 {
                return Err(Error::invalid(format!("pool size K must be >= 2, got {k}")));
            }
        }
        Ok(())
    }
}

fn check_mixture(rewards: &[RewardField], mixture: &PreferenceMixture) -> Result<()> {
    if rewards.len() != mixture.len() || rewards.is_empty() {
        return Err(Error::invalid(format!("{} rewards but {} mixture weights", rewards.len(), mixture.len())));
    }
    Ok(())
}

/// `W(x) = Σ_i q_i e^{r_i(x)} / E_p[e^{r_i}]`, the infinite-K multiplier.
pub fn infinite_k_multiplier(
    dist: &GridDistribution,
    rewards: &[RewardField],
    mixture: &PreferenceMixture,
) -> Result<Vec<f64>> {
    check_mixture(rewards, mixture)?;
    let mut w = vec![0.0; dist.len()];
    for (reward, &q) in rewards.iter().zip(mixture.weights()) {
        let h = tilt_weight(dist, reward)?;
        for (acc, hx) in w.iter_mut().zip(&h.weights) {
            *acc += q * hx;
        }
    }
    Ok(w)
}

/// Result of one update, before and after the defensive renormalisation.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub dist: GridDistribution,
    pub multiplier: Vec<f64>,
    /// `Σ_x p(x) W(x)`, which is 1 up to rounding.
    pub raw_mass: f64,
    pub estimators: Vec<EstimatorKind>,
}

fn apply_multiplier(
    dist: &GridDistribution,
    multiplier: Vec<f64>,
    estimators: Vec<EstimatorKind>,
) -> Result<StepOutcome> {
    let mass: Vec<f64> = dist.mass().iter().zip(&multiplier).map(|(p, w)| p * w).collect();
    let (next, raw_mass) = GridDistribution::from_unnormalized(dist.grid().clone(), mass)?;
    Ok(StepOutcome { dist: next, multiplier, raw_mass, estimators })
}

/// Infinite-K update for any number of rewards.
pub fn step_infinite_k(
    dist: &GridDistribution,
    rewards: &[RewardField],
    mixture: &PreferenceMixture,
) -> Result<GridDistribution> {
    step_infinite_k_detailed(dist, rewards, mixture).map(|o| o.dist)
}

pub fn step_infinite_k_detailed(
    dist: &GridDistribution,
    rewards: &[RewardField],
    mixture: &PreferenceMixture,
) -> Result<StepOutcome> {
    let w = infinite_k_multiplier(dist, rewards, mixture)?;
    apply_multiplier(dist, w, vec![EstimatorKind::InfiniteTilt; rewards.len()])
}

/// Two-reward infinite-K update written out as `q e^{r₁}/Z₁ + (1−q) e^{r₂}/Z₂`.
pub fn step_two_reward(
    dist: &GridDistribution,
    r1: &RewardField,
    r2: &RewardField,
    q: f64,
) -> Result<GridDistribution> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("q must lie in (0, 1), got {q}")));
    }
    let h1 = tilt_weight(dist, r1)?.weights;
    let h2 = tilt_weight(dist, r2)?.weights;
    let w = h1.iter().zip(&h2).map(|(a, b)| q * a + (1.0 - q) * b).collect();
    apply_multiplier(dist, w, vec![EstimatorKind::InfiniteTilt; 2]).map(|o| o.dist)
}

/// Finite-K update. Reward `i` uses seed `derive_seed(seed, i)` if the
/// estimator falls back to Monte-Carlo.
pub fn step_finite_k(
    dist: &GridDistribution,
    rewards: &[RewardField],
    mixture: &PreferenceMixture,
    k: usize,
    estimator: FiniteKEstimator,
    seed: u64,
) -> Result<StepOutcome> {
    check_mixture(rewards, mixture)?;
    let mut w = vec![0.0; dist.len()];
    let mut kinds = Vec::with_capacity(rewards.len());
    for (i, (reward, &q)) in rewards.iter().zip(mixture.weights()).enumerate() {
        let h = bt_weight_finite(dist, reward, k, estimator, rng::derive_seed(seed, i as u64))?;
        kinds.push(h.kind);
        for (acc, hx) in w.iter_mut().zip(&h.weights) {
            *acc += q * hx;
        }
    }
    apply_multiplier(dist, w, kinds)
}

/// Statistics of `p_t`, plus the multiplier applied to reach `p_{t+1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: usize,
    /// `a_t, b_t, …`: mass of each ε-basin.
    pub basin_mass: Vec<f64>,
    /// `m_t`: mass outside every basin.
    pub outside_mass: f64,
    pub expected_reward: Vec<f64>,
    pub reward_variance: Vec<f64>,
    pub entropy: f64,
    /// `Σ p_{t-1} W_{t-1}` before renormalisation (1 at `t = 0`).
    pub raw_mass: f64,
    /// Largest multiplier on the outside region at this step; `None` when
    /// the outside region is empty or at the final step.
    pub rho_sup: Option<f64>,
    pub estimators: Vec<EstimatorKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitEstimate {
    pub value: f64,
    /// `max − min` over the averaging window.
    pub range: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mode: UpdateMode,
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<(usize, GridDistribution)>,
    pub final_dist: GridDistribution,
}

impl Trajectory {
    pub fn outside_masses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.outside_mass).collect()
    }

    pub fn basin_masses(&self, i: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.basin_mass[i]).collect()
    }

    /// Basin `i`'s share of the mass inside `S_ε` at every step.
    pub fn basin_shares(&self, i: usize) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| {
                let inside: f64 = r.basin_mass.iter().sum();
                r.basin_mass[i] / inside
            })
            .collect()
    }

    /// Mean of `a_t` over the last [`LIMIT_WINDOW`] steps.
    pub fn limit_basin_mass(&self, i: usize) -> LimitEstimate {
        window_limit(&self.basin_masses(i))
    }

    /// Mean of the inside share `a_t / (1 − m_t)` over the last window. This
    /// removes the slowly vanishing outside mass from the estimate.
    pub fn limit_basin_share(&self, i: usize) -> LimitEstimate {
        window_limit(&self.basin_shares(i))
    }
}

fn window_limit(series: &[f64]) -> LimitEstimate {
    let tail = &series[series.len().saturating_sub(LIMIT_WINDOW)..];
    let value = tail.iter().sum::<f64>() / tail.len() as f64;
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    LimitEstimate { value, range, converged: range <= LIMIT_RANGE_TOL }
}

fn record(
    t: usize,
    dist: &GridDistribution,
    rewards: &[RewardField],
    basins: &BasinAnalysis,
    raw_mass: f64,
) -> StepRecord {
    let masses = basins.masses(dist);
    StepRecord {
        t,
        basin_mass: masses.basins,
        outside_mass: masses.outside,
        expected_reward: rewards.iter().map(|r| dist.expectation(r.values())).collect(),
        reward_variance: rewards.iter().map(|r| dist.variance(r.values())).collect(),
        entropy: dist.entropy(),
        raw_mass,
        rho_sup: None,
        estimators: Vec::new(),
    }
}

fn outside_sup(multiplier: &[f64], outside: &[bool]) -> Option<f64> {
    multiplier.iter().zip(outside).filter(|(_, &o)| o).map(|(w, _)| *w).reduce(f64::max)
}

/// Iterates the configured update `steps` times from `init`.
pub fn run_trajectory(init: &GridDistribution, config: &DynamicsConfig, basins: &BasinAnalysis) -> Result<Trajectory> {
    config.validate()?;
    if let Some(i) = config.rewards.iter().position(|r| !init.same_support(r)) {
        return Err(Error::SupportMismatch(format!("reward {i} and the initial density use different grids")));
    }
    if basins.num_basins() != config.rewards.len() || basins.outside_mask().len() != init.len() {
        return Err(Error::SupportMismatch("basin analysis does not match rewards and grid".into()));
    }
    let mut dist = init.clone();
    let mut records = Vec::with_capacity(config.steps + 1);
    let mut snapshots = Vec::new();
    let mut raw_mass = 1.0;
    for t in 0..=config.steps {
        if config.snapshots.contains(&t) {
            snapshots.push((t, dist.clone()));
        }
        let mut rec = record(t, &dist, &config.rewards, basins, raw_mass);
        if t == config.steps {
            records.push(rec);
            break;
        }
        let outcome = match config.mode {
            UpdateMode::InfiniteK => step_infinite_k_detailed(&dist, &config.rewards, &config.mixture)?,
            UpdateMode::FiniteK { k, estimator } => step_finite_k(
                &dist,
                &config.rewards,
                &config.mixture,
                k,
                estimator,
                rng::derive_seed(config.seed, t as u64),
            )?,
        };
        rec.rho_sup = outside_sup(&outcome.multiplier, basins.outside_mask());
        rec.estimators = outcome.estimators;
        records.push(rec);
        raw_mass = outcome.raw_mass;
        dist = outcome.dist;
    }
    Ok(Trajectory { mode: config.mode, records, snapshots, final_dist: dist })
}

/// `Σ_x p(x) W(x)`, exposed for conservation checks.
pub fn multiplier_mass(dist: &GridDistribution, multiplier: &[f64]) -> f64 {
    compensated_sum(dist.mass().iter().zip(multiplier).map(|(p, w)| p * w))
}
