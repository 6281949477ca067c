//! Browser bindings: exact grid dynamics, the limit-vs-q curve and the
//! finite-K deviation curve, computed in WebAssembly.

use js_sys::{Array, Float64Array, Object, Reflect};
use wasm_bindgen::prelude::*;

use pluricurate::analysis::{concentration_curve, leakage_interval_for_basins};
use pluricurate::curation::FiniteKEstimator;
use pluricurate::dynamics::{run_trajectory, DynamicsConfig, Trajectory, UpdateMode};
use pluricurate::model::{
    compute_basins, quadratic_reward, BasinAnalysis, Grid, GridDistribution, PreferenceMixture, RewardField,
};

const GRID_LO: f64 = -1.0;
const GRID_HI: f64 = 11.0;
const GRID_POINTS: usize = 401;
const MIDPOINT: f64 = 5.0;
const EPSILON: f64 = 0.1;

pub struct Landscape {
    pub x: Vec<f64>,
    pub rewards: Vec<RewardField>,
    pub basins: BasinAnalysis,
    pub init: GridDistribution,
}

pub fn landscape(distance: f64, gamma: f64) -> pluricurate::Result<Landscape> {
    let grid = Grid::uniform_1d(GRID_LO, GRID_HI, GRID_POINTS)?;
    let rewards = [MIDPOINT - distance / 2.0, MIDPOINT + distance / 2.0]
        .iter()
        .map(|&c| quadratic_reward(&[c], &grid).and_then(|r| r.scaled(gamma)))
        .collect::<pluricurate::Result<Vec<_>>>()?;
    let basins = compute_basins(&rewards, EPSILON, true)?;
    let x = grid.points().map(|p| p[0]).collect();
    Ok(Landscape { x, rewards, basins, init: GridDistribution::uniform(grid) })
}

pub fn trajectory(land: &Landscape, q: f64, steps: usize) -> pluricurate::Result<Trajectory> {
    let config = DynamicsConfig::new(land.rewards.clone(), PreferenceMixture::two(q)?, UpdateMode::InfiniteK, steps)?;
    run_trajectory(&land.init, &config, &land.basins)
}

/// Limiting share of basin 1 for each `q`.
pub fn limit_curve(distance: f64, qs: &[f64], steps: usize) -> pluricurate::Result<Vec<f64>> {
    let land = landscape(distance, 1.0)?;
    qs.iter().map(|&q| Ok(trajectory(&land, q, steps)?.limit_basin_share(0).value)).collect()
}

/// `sup |H^K − H^∞|` over the basin of a quadratic reward on `0..=9`.
pub fn deviation_curve(gamma: f64, ks: &[usize]) -> pluricurate::Result<Vec<f64>> {
    let grid = Grid::uniform_1d(0.0, 9.0, 10)?;
    let reward = quadratic_reward(&[6.0], &grid)?.scaled(gamma)?;
    let curve =
        concentration_curve(&GridDistribution::uniform(grid), &reward, 0.5, ks, FiniteKEstimator::default(), 0)?;
    Ok(curve.points.iter().map(|p| p.deviation).collect())
}

fn js_err(e: pluricurate::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn set(obj: &Object, key: &str, value: &JsValue) {
    Reflect::set(obj, &JsValue::from_str(key), value).expect("setting a plain object field");
}

fn array(values: &[f64]) -> JsValue {
    Float64Array::from(values).into()
}

/// Runs the two-reward dynamics and returns
/// `{x, r1, r2, density, share, outside, lower, upper, limit}`.
#[wasm_bindgen]
pub fn simulate(distance: f64, q: f64, gamma: f64, steps: usize) -> Result<Object, JsError> {
    let land = landscape(distance, gamma).map_err(js_err)?;
    let traj = trajectory(&land, q, steps).map_err(js_err)?;
    let interval = leakage_interval_for_basins(q, &land.basins).map_err(js_err)?;
    let out = Object::new();
    set(&out, "x", &array(&land.x));
    set(&out, "r1", &array(land.rewards[0].values()));
    set(&out, "r2", &array(land.rewards[1].values()));
    set(&out, "density", &array(traj.final_dist.mass()));
    set(&out, "share", &array(&traj.basin_shares(0)));
    set(&out, "outside", &array(&traj.outside_masses()));
    set(&out, "lower", &interval.lower.into());
    set(&out, "upper", &interval.upper.into());
    set(&out, "limit", &traj.limit_basin_share(0).value.into());
    Ok(out)
}

/// Limiting basin-1 share at each `q` in `qs`.
#[wasm_bindgen]
pub fn nash_curve(distance: f64, qs: &[f64]) -> Result<Float64Array, JsError> {
    Ok(Float64Array::from(&limit_curve(distance, qs, 50).map_err(js_err)?[..]))
}

/// Finite-K deviations for the given `K` values (ascending, each ≥ 2).
#[wasm_bindgen]
pub fn finite_k_deviation(gamma: f64, ks: Array) -> Result<Float64Array, JsError> {
    let ks: Vec<usize> = ks.iter().map(|v| v.as_f64().unwrap_or(0.0) as usize).collect();
    Ok(Float64Array::from(&deviation_curve(gamma, &ks).map_err(js_err)?[..]))
}
