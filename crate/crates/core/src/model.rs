//! Domain types: grids, distributions on them, reward fields, preference
//! mixtures and ε-optimal basin structure.
//!
//! Densities are probability mass functions on a fixed finite support, so
//! every update of the retraining dynamics is exact up to floating point.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance on `Σ mass = 1` after construction.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Finite support in R^d, d ∈ {1, 2}. Points are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    dim: usize,
    coords: Vec<f64>,
}

impl Grid {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Arc<Self>> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if coords.is_empty() {
            return Err(Error::invalid("empty support"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::invalid(format!("{} coordinates do not form {dim}-dimensional points", coords.len())));
        }
        if let Some((index, &value)) = coords.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { what: "support", index: index / dim, value });
        }
        let grid = Grid { dim, coords };
        let mut order: Vec<usize> = (0..grid.len()).collect();
        order.sort_by(|&a, &b| grid.cmp_points(a, b));
        if let Some(w) = order.windows(2).find(|w| grid.cmp_points(w[0], w[1]) == Ordering::Equal) {
            return Err(Error::invalid(format!("support points {} and {} coincide", w[0].min(w[1]), w[0].max(w[1]))));
        }
        Ok(Arc::new(grid))
    }

    /// Build from a list of points; the dimension is taken from the first one.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Arc<Self>> {
        let dim = points.first().map(Vec::len).ok_or_else(|| Error::invalid("empty support"))?;
        if let Some(i) = points.iter().position(|p| p.len() != dim) {
            return Err(Error::invalid(format!("point {i} has dimension {}, expected {dim}", points[i].len())));
        }
        Grid::new(dim, points.concat())
    }

    /// `n` equally spaced points on `[lo, hi]`, both endpoints included.
    pub fn uniform_1d(lo: f64, hi: f64, n: usize) -> Result<Arc<Self>> {
        if n < 2 || !(hi > lo) {
            return Err(Error::invalid(format!("need n >= 2 and hi > lo, got n={n}, [{lo}, {hi}]")));
        }
        Grid::new(1, linspace(lo, hi, n))
    }

    /// Tensor grid with `n` points per axis on `[lo, hi]²`.
    pub fn uniform_2d(lo: f64, hi: f64, n: usize) -> Result<Arc<Self>> {
        if n < 2 || !(hi > lo) {
            return Err(Error::invalid(format!("need n >= 2 and hi > lo, got n={n}, [{lo}, {hi}]")));
        }
        let axis = linspace(lo, hi, n);
        let mut coords = Vec::with_capacity(2 * n * n);
        for &x in &axis {
            for &y in &axis {
                coords.push(x);
                coords.push(y);
            }
        }
        Grid::new(2, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    fn cmp_points(&self, a: usize, b: usize) -> Ordering {
        self.point(a)
            .iter()
            .zip(self.point(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo + step * i as f64 }).collect()
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// A probability mass function over a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridDistribution {
    grid: Arc<Grid>,
    mass: Vec<f64>,
}

impl GridDistribution {
    /// Normalises `mass` by its sum. Rejects NaN/Inf, negative entries and
    /// all-zero input.
    pub fn new(grid: Arc<Grid>, mass: Vec<f64>) -> Result<Self> {
        Self::from_unnormalized(grid, mass).map(|(d, _)| d)
    }

    pub fn uniform(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        GridDistribution { grid, mass: vec![1.0 / n as f64; n] }
    }

    /// Like [`GridDistribution::new`], also returning the pre-normalisation sum.
    pub fn from_unnormalized(grid: Arc<Grid>, mut mass: Vec<f64>) -> Result<(Self, f64)> {
        if mass.len() != grid.len() {
            return Err(Error::invalid(format!("{} masses for {} support points", mass.len(), grid.len())));
        }
        if let Some((index, &value)) = mass.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { what: "mass", index, value });
        }
        if let Some(i) = mass.iter().position(|&v| v < 0.0) {
            return Err(Error::invalid(format!("negative mass {} at index {i}", mass[i])));
        }
        let total = compensated_sum(mass.iter().copied());
        if total <= 0.0 {
            return Err(Error::invalid("all masses are zero"));
        }
        for m in &mut mass {
            *m /= total;
        }
        Ok((GridDistribution { grid, mass }, total))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.mass.iter().copied())
    }

    pub fn mass_on(&self, mask: &[bool]) -> f64 {
        compensated_sum(self.mass.iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| *p))
    }

    pub fn expectation(&self, values: &[f64]) -> f64 {
        compensated_sum(self.mass.iter().zip(values).map(|(p, v)| p * v))
    }

    pub fn variance(&self, values: &[f64]) -> f64 {
        let mean = self.expectation(values);
        compensated_sum(self.mass.iter().zip(values).map(|(p, v)| p * (v - mean) * (v - mean)))
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -compensated_sum(self.mass.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()))
    }

    /// `p(· | mask)`; errors when the mask carries no mass.
    pub fn conditional(&self, mask: &[bool]) -> Result<Self> {
        let masked = self.mass.iter().zip(mask).map(|(&p, &m)| if m { p } else { 0.0 }).collect();
        GridDistribution::new(self.grid.clone(), masked).map_err(|_| Error::invalid("conditioning set has zero mass"))
    }

    pub fn total_variation(&self, other: &GridDistribution) -> f64 {
        0.5 * compensated_sum(self.mass.iter().zip(&other.mass).map(|(a, b)| (a - b).abs()))
    }

    pub fn same_support(&self, reward: &RewardField) -> bool {
        same_grid(&self.grid, &reward.grid)
    }
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Normalised distribution from an explicit point list.
pub fn build_grid_distribution(support: &[Vec<f64>], mass: &[f64]) -> Result<GridDistribution> {
    if support.len() != mass.len() {
        return Err(Error::invalid(format!("{} points but {} masses", support.len(), mass.len())));
    }
    GridDistribution::new(Grid::from_points(support)?, mass.to_vec())
}

/// A reward evaluated on every support point, with recorded bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardField {
    grid: Arc<Grid>,
    values: Vec<f64>,
    lower: f64,
    upper: f64,
    sup: f64,
}

impl RewardField {
    /// Bounds default to the min and max over the grid.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        let lower = values.iter().copied().fold(f64::INFINITY, f64::min);
        let upper = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::with_bounds(grid, values, lower, upper)
    }

    pub fn with_bounds(grid: Arc<Grid>, values: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!("{} reward values for {} support points", values.len(), grid.len())));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { what: "reward", index, value });
        }
        if let Some(i) = values.iter().position(|&v| v < lower || v > upper) {
            return Err(Error::invalid(format!(
                "reward {} at index {i} outside recorded bounds [{lower}, {upper}]",
                values[i]
            )));
        }
        let sup = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(RewardField { grid, values, lower, upper, sup })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// `r* = max` over the support.
    pub fn sup(&self) -> f64 {
        self.sup
    }

    /// `γ · r`.
    pub fn scaled(&self, gamma: f64) -> Result<Self> {
        RewardField::new(self.grid.clone(), self.values.iter().map(|v| gamma * v).collect())
    }

    /// `r + c`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        RewardField::new(self.grid.clone(), self.values.iter().map(|v| v + c).collect())
    }
}

/// `r(x) = −‖x − center‖²` on every grid point.
pub fn quadratic_reward(center: &[f64], grid: &Arc<Grid>) -> Result<RewardField> {
    if center.len() != grid.dim() {
        return Err(Error::invalid(format!("center has dimension {}, grid has {}", center.len(), grid.dim())));
    }
    if let Some((index, &value)) = center.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { what: "center", index, value });
    }
    let values = grid.points().map(|x| -x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).collect();
    RewardField::new(grid.clone(), values)
}

/// Sampling weights `q₁ … q_M` over rewards.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreferenceMixture {
    weights: Vec<f64>,
}

impl PreferenceMixture {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        match weights.len() {
            0 => return Err(Error::invalid("mixture needs at least one weight")),
            1 if weights[0] != 1.0 => {
                return Err(Error::invalid(format!("single-reward weight must be 1, got {}", weights[0])))
            }
            1 => {}
            _ => {
                if let Some(i) = weights.iter().position(|&q| !(q > 0.0 && q < 1.0)) {
                    return Err(Error::invalid(format!("mixture weight q[{i}] = {} not in (0, 1)", weights[i])));
                }
            }
        }
        let total: f64 = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!("mixture weights sum to {total}, expected 1")));
        }
        Ok(PreferenceMixture { weights })
    }

    /// `(q, 1 − q)`.
    pub fn two(q: f64) -> Result<Self> {
        Self::new(vec![q, 1.0 - q])
    }

    pub fn single() -> Self {
        PreferenceMixture { weights: vec![1.0] }
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("mixture needs at least one weight"));
        }
        if m == 1 {
            return Ok(Self::single());
        }
        Self::new(vec![1.0 / m as f64; m])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Separation of reward `reward` on basin `basin` (`basin ≠ reward`):
/// the largest Δ with `x ∈ S_basin ⇒ r_reward(x) ≤ r*_reward − Δ + ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gap {
    pub reward: usize,
    pub basin: usize,
    pub delta: f64,
    /// `exp(−(Δ − 2ε))`; `None` when Δ ≤ 2ε (not in the leakage regime).
    pub kappa: Option<f64>,
}

/// ε-optimal basins `S_{i,ε} = {x : r_i(x) ≥ r_i* − ε}` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BasinAnalysis {
    epsilon: f64,
    basin_masks: Vec<Vec<bool>>,
    outside_mask: Vec<bool>,
    gaps: Vec<Gap>,
    overlap: Vec<usize>,
}

/// Masses of each basin and of the outside region under one distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasinMasses {
    pub basins: Vec<f64>,
    pub outside: f64,
}

impl BasinMasses {
    /// `a / (a + b + …)`: basin `i`'s share of the mass inside `S_ε`.
    pub fn share(&self, i: usize) -> f64 {
        let inside: f64 = self.basins.iter().sum();
        if inside > 0.0 {
            self.basins[i] / inside
        } else {
            f64::NAN
        }
    }
}

/// Basin masks, separation gaps and leakage factors.
pub fn compute_basins(rewards: &[RewardField], epsilon: f64, assert_disjoint: bool) -> Result<BasinAnalysis> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let first = rewards.first().ok_or_else(|| Error::invalid("no rewards"))?;
    if let Some(i) = rewards.iter().position(|r| !same_grid(r.grid(), first.grid())) {
        return Err(Error::SupportMismatch(format!("reward {i} lives on a different grid")));
    }
    let n = first.values().len();
    let basin_masks: Vec<Vec<bool>> =
        rewards.iter().map(|r| r.values().iter().map(|&v| r.sup() - v <= epsilon).collect()).collect();
    let mut outside_mask = vec![true; n];
    let mut overlap = Vec::new();
    for x in 0..n {
        let hits = basin_masks.iter().filter(|m| m[x]).count();
        outside_mask[x] = hits == 0;
        if hits > 1 {
            overlap.push(x);
        }
    }
    if assert_disjoint && !overlap.is_empty() {
        return Err(Error::OverlappingBasins { points: overlap });
    }
    let mut gaps = Vec::new();
    for (i, r) in rewards.iter().enumerate() {
        for (j, mask) in basin_masks.iter().enumerate() {
            if i == j {
                continue;
            }
            let max_on_basin =
                r.values().iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
            let delta = r.sup() - max_on_basin + epsilon;
            let kappa = (delta > 2.0 * epsilon).then(|| (-(delta - 2.0 * epsilon)).exp());
            gaps.push(Gap { reward: i, basin: j, delta, kappa });
        }
    }
    Ok(BasinAnalysis { epsilon, basin_masks, outside_mask, gaps, overlap })
}

impl BasinAnalysis {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn num_basins(&self) -> usize {
        self.basin_masks.len()
    }

    pub fn basin_mask(&self, i: usize) -> &[bool] {
        &self.basin_masks[i]
    }

    pub fn outside_mask(&self) -> &[bool] {
        &self.outside_mask
    }

    /// `S_ε = ∪ S_{i,ε}`.
    pub fn inside_mask(&self) -> Vec<bool> {
        self.outside_mask.iter().map(|o| !o).collect()
    }

    pub fn gaps(&self) -> &[Gap] {
        &self.gaps
    }

    pub fn overlapping_points(&self) -> &[usize] {
        &self.overlap
    }

    pub fn is_disjoint(&self) -> bool {
        self.overlap.is_empty()
    }

    pub fn gap(&self, reward: usize, basin: usize) -> Option<&Gap> {
        self.gaps.iter().find(|g| g.reward == reward && g.basin == basin)
    }

    pub fn delta(&self, reward: usize, basin: usize) -> Option<f64> {
        self.gap(reward, basin).map(|g| g.delta)
    }

    pub fn kappa(&self, reward: usize, basin: usize) -> Option<f64> {
        self.gap(reward, basin).and_then(|g| g.kappa)
    }

    /// Two-reward shorthand: `(Δ₁, Δ₂)` where Δ₁ is reward 1 on basin 2.
    pub fn two_basin_deltas(&self) -> Option<(f64, f64)> {
        Some((self.delta(0, 1)?, self.delta(1, 0)?))
    }

    /// Two-reward shorthand: `(κ₁, κ₂)`, each `None` outside the leakage regime.
    pub fn two_basin_kappas(&self) -> (Option<f64>, Option<f64>) {
        (self.kappa(0, 1), self.kappa(1, 0))
    }

    pub fn masses(&self, dist: &GridDistribution) -> BasinMasses {
        BasinMasses {
            basins: self.basin_masks.iter().map(|m| dist.mass_on(m)).collect(),
            outside: dist.mass_on(&self.outside_mask),
        }
    }
}
