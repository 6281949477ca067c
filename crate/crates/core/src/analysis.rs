//! Measurable consequences of the retraining dynamics: leakage intervals,
//! outside domination, decay rates, variance decomposition, expected-reward
//! limits, Nash bargaining on the mixture line and finite-K concentration.

use serde::Serialize;

use crate::curation::{bt_weight_finite, tilt_weight, EstimatorKind, FiniteKEstimator};
use crate::dynamics::{infinite_k_multiplier, Trajectory};
use crate::error::{Error, Result};
use crate::model::{compute_basins, BasinAnalysis, GridDistribution, PreferenceMixture, RewardField};
use crate::rng;

/// Outside masses at or below this are excluded from decay fits.
pub const DECAY_FIT_FLOOR: f64 = 1e-12;

/// Default number of α grid points for [`nash_solve`].
pub const NASH_GRID_POINTS: usize = 10_001;

/// Bounds `[L, U]` on the limiting share of basin 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeakageInterval {
    pub lower: f64,
    pub upper: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub q: f64,
    /// Set when a gap does not exceed `2ε`; the interval is then `[0, 1]`.
    pub vacuous: bool,
}

impl LeakageInterval {
    pub fn contains(&self, a: f64, tol: f64) -> bool {
        a >= self.lower - tol && a <= self.upper + tol
    }

    /// `q ∈ (κ₁, 1 − κ₂)`: the range where the lower bound is non-trivial
    /// and the upper bound is below one.
    pub fn in_non_collapse_window(&self) -> bool {
        !self.vacuous && self.q > self.kappa1 && self.q < 1.0 - self.kappa2
    }
}

pub fn leakage_interval(q: f64, kappa1: f64, kappa2: f64) -> Result<LeakageInterval> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("q must lie in (0, 1), got {q}")));
    }
    for (name, k) in [("kappa1", kappa1), ("kappa2", kappa2)] {
        if !(0.0..1.0).contains(&k) {
            return Err(Error::invalid(format!("{name} must lie in [0, 1), got {k}")));
        }
    }
    Ok(LeakageInterval {
        lower: ((q - kappa1) / (1.0 - kappa1)).max(0.0),
        upper: (q / (1.0 - kappa2)).min(1.0),
        kappa1,
        kappa2,
        q,
        vacuous: false,
    })
}

/// Interval from the realised gaps of a two-basin landscape.
pub fn leakage_interval_for_basins(q: f64, basins: &BasinAnalysis) -> Result<LeakageInterval> {
    if basins.num_basins() != 2 {
        return Err(Error::invalid(format!("leakage interval needs two basins, got {}", basins.num_basins())));
    }
    match basins.two_basin_kappas() {
        (Some(k1), Some(k2)) => leakage_interval(q, k1, k2),
        (k1, k2) => {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::invalid(format!("q must lie in (0, 1), got {q}")));
            }
            Ok(LeakageInterval {
                lower: 0.0,
                upper: 1.0,
                kappa1: k1.unwrap_or(1.0),
                kappa2: k2.unwrap_or(1.0),
                q,
                vacuous: true,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutsideDomination {
    /// `sup_{x ∉ S_ε} W(x)`; 0 when the outside region is empty.
    pub rho_sup: f64,
    pub empty_outside: bool,
    /// `rho_sup < 1`.
    pub holds: bool,
}

/// Largest infinite-K multiplier over the outside region.
pub fn outside_domination(
    dist: &GridDistribution,
    rewards: &[RewardField],
    mixture: &PreferenceMixture,
    basins: &BasinAnalysis,
) -> Result<OutsideDomination> {
    if basins.outside_mask().len() != dist.len() {
        return Err(Error::SupportMismatch("basin analysis was computed on another grid".into()));
    }
    let w = infinite_k_multiplier(dist, rewards, mixture)?;
    let sup = w.iter().zip(basins.outside_mask()).filter(|(_, &o)| o).map(|(v, _)| *v).reduce(f64::max);
    Ok(match sup {
        Some(rho_sup) => OutsideDomination { rho_sup, empty_outside: false, holds: rho_sup < 1.0 },
        None => OutsideDomination { rho_sup: 0.0, empty_outside: true, holds: true },
    })
}

/// Least-squares line through `(t, ln m_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Number of steps inside the fit window.
    pub points: usize,
}

pub fn fit_decay_rate(traj: &Trajectory) -> Result<DecayFit> {
    fit_log_linear(&traj.outside_masses())
}

/// Fits `ln m_t` against `t` over the steps where `m_t > 1e-12`.
pub fn fit_log_linear(series: &[f64]) -> Result<DecayFit> {
    if series.iter().filter(|&&m| m > 1e-300).count() < 5 {
        return Err(Error::invalid("decay fit needs at least 5 steps with positive outside mass"));
    }
    let pts: Vec<(f64, f64)> =
        series.iter().enumerate().filter(|(_, &m)| m > DECAY_FIT_FLOOR).map(|(t, &m)| (t as f64, m.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::invalid(format!("only {} steps have outside mass above {DECAY_FIT_FLOOR:e}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(DecayFit { slope, intercept, r_squared, points: pts.len() })
}

fn two_basin_check(basins: &BasinAnalysis, rewards: &[RewardField], reward_index: usize) -> Result<()> {
    if basins.num_basins() != 2 || rewards.len() != 2 {
        return Err(Error::invalid("two rewards and two basins are required"));
    }
    if reward_index > 1 {
        return Err(Error::invalid(format!("reward index {reward_index} out of range")));
    }
    Ok(())
}

/// Conditional mean of `values` on `mask`, `None` if the mask has no mass.
fn conditional_moments(dist: &GridDistribution, mask: &[bool], values: &[f64]) -> Option<(f64, f64, f64)> {
    let mass = dist.mass_on(mask);
    if mass <= 0.0 {
        return None;
    }
    let cond = dist.conditional(mask).ok()?;
    Some((mass, cond.expectation(values), cond.variance(values)))
}

/// Law-of-total-variance split of `Var[r_i]` under `p(· | S_ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceDecomposition {
    /// Share of basin 1 inside `S_ε`.
    pub a: f64,
    pub within: [f64; 2],
    pub means: [f64; 2],
    pub between: f64,
    pub total: f64,
    /// `a(1−a)(Δ_i − 2ε)₊²`.
    pub lower_bound: f64,
    pub outside_mass: f64,
    /// Outside mass exceeds `1e-6`, so conditioning on `S_ε` is material.
    pub outside_warning: bool,
    /// Index of a basin that carries no mass, if any.
    pub empty_basin: Option<usize>,
}

impl VarianceDecomposition {
    /// `total − (a·within₁ + (1−a)·within₂ + between)`.
    pub fn identity_residual(&self) -> f64 {
        self.total - (self.a * self.within[0] + (1.0 - self.a) * self.within[1] + self.between)
    }
}

pub fn variance_decomposition(
    dist: &GridDistribution,
    basins: &BasinAnalysis,
    rewards: &[RewardField],
    reward_index: usize,
) -> Result<VarianceDecomposition> {
    two_basin_check(basins, rewards, reward_index)?;
    let values = rewards[reward_index].values();
    let inside = basins.inside_mask();
    let outside_mass = dist.mass_on(basins.outside_mask());
    let (inside_mass, _, total) =
        conditional_moments(dist, &inside, values).ok_or_else(|| Error::invalid("no mass inside the basins"))?;
    let parts = [0, 1].map(|j| conditional_moments(dist, basins.basin_mask(j), values));
    let a = parts[0].map_or(0.0, |p| p.0 / inside_mass);
    let empty_basin = parts.iter().position(|p| p.is_none());
    let means = parts.map(|p| p.map_or(f64::NAN, |p| p.1));
    let within = parts.map(|p| p.map_or(0.0, |p| p.2));
    let between = if empty_basin.is_some() { 0.0 } else { a * (1.0 - a) * (means[0] - means[1]).powi(2) };
    let other = 1 - reward_index;
    let delta = basins.delta(reward_index, other).unwrap_or(0.0);
    let sep = (delta - 2.0 * basins.epsilon()).max(0.0);
    Ok(VarianceDecomposition {
        a,
        within,
        means,
        between,
        total,
        lower_bound: a * (1.0 - a) * sep * sep,
        outside_mass,
        outside_warning: outside_mass > 1e-6,
        empty_basin,
    })
}

/// Expected reward as a mixture of basin-conditional means, with the bound checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectedRewardLimit {
    pub reward_index: usize,
    pub a: f64,
    /// `a·μ_own + (1−a)·μ_other` in basin order.
    pub mixture_mean: f64,
    /// Conditional means of `r_i` on basins 1 and 2.
    pub conditional_means: [f64; 2],
    /// `E[r_i | S_i] ≥ r_i* − ε`.
    pub own_basin_ok: bool,
    /// `E[r_i | S_j] ≤ r_i* − Δ_i + ε`.
    pub cross_basin_ok: bool,
    pub empty_basin: Option<usize>,
}

pub fn expected_reward_limit(
    dist: &GridDistribution,
    basins: &BasinAnalysis,
    rewards: &[RewardField],
    reward_index: usize,
) -> Result<ExpectedRewardLimit> {
    let vd = variance_decomposition(dist, basins, rewards, reward_index)?;
    let r = &rewards[reward_index];
    let other = 1 - reward_index;
    let eps = basins.epsilon();
    let delta = basins.delta(reward_index, other).unwrap_or(0.0);
    let own = vd.means[reward_index];
    let cross = vd.means[other];
    let tol = 1e-12 * r.sup().abs().max(1.0);
    let mixture_mean = match vd.empty_basin {
        Some(0) => vd.means[1],
        Some(_) => vd.means[0],
        None => vd.a * vd.means[0] + (1.0 - vd.a) * vd.means[1],
    };
    Ok(ExpectedRewardLimit {
        reward_index,
        a: vd.a,
        mixture_mean,
        conditional_means: vd.means,
        own_basin_ok: own.is_nan() || own >= r.sup() - eps - tol,
        cross_basin_ok: cross.is_nan() || cross <= r.sup() - delta + eps + tol,
        empty_basin: vd.empty_basin,
    })
}

/// Weighted Nash bargaining over mixtures `α P₁ + (1−α) P₂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashSolution {
    pub alpha_star: f64,
    pub closed_form: f64,
    pub grid_argmax: f64,
    /// `q ln(αΔ₁ᵘ) + (1−q) ln((1−α)Δ₂ᵘ)` on the α grid (−∞ at the ends).
    #[serde(skip)]
    pub log_nash_product: Vec<f64>,
    pub gains: (f64, f64),
    pub disagreement: (f64, f64),
}

impl NashSolution {
    pub fn grid_spacing(&self) -> f64 {
        1.0 / (self.log_nash_product.len() - 1) as f64
    }
}

pub fn nash_solve(
    p1: &GridDistribution,
    p2: &GridDistribution,
    r1: &RewardField,
    r2: &RewardField,
    q: f64,
    grid_points: usize,
) -> Result<NashSolution> {
    for (d, r) in [(p1, r1), (p1, r2), (p2, r1), (p2, r2)] {
        if !d.same_support(r) {
            return Err(Error::SupportMismatch("Nash inputs live on different grids".into()));
        }
    }
    let (u11, u12) = (p1.expectation(r1.values()), p2.expectation(r1.values()));
    let (u22, u21) = (p2.expectation(r2.values()), p1.expectation(r2.values()));
    let mut sol = nash_from_gains(u11 - u12, u22 - u21, q, grid_points)?;
    sol.disagreement = (u12, u21);
    Ok(sol)
}

/// Nash solution from the gains alone; disagreement points are reported as 0.
pub fn nash_from_gains(gain1: f64, gain2: f64, q: f64, grid_points: usize) -> Result<NashSolution> {
    if !(gain1 > 0.0 && gain2 > 0.0) {
        return Err(Error::HypothesisViolated(format!(
            "each preference must favour its own basin: gains ({gain1}, {gain2}) must both be positive"
        )));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("q must lie in (0, 1), got {q}")));
    }
    if grid_points < 3 {
        return Err(Error::invalid(format!("need at least 3 grid points, got {grid_points}")));
    }
    let step = 1.0 / (grid_points - 1) as f64;
    let values: Vec<f64> = (0..grid_points)
        .map(|j| {
            let alpha = j as f64 * step;
            q * (alpha * gain1).ln() + (1.0 - q) * ((1.0 - alpha) * gain2).ln()
        })
        .collect();
    let best =
        values.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc }).0;
    Ok(NashSolution {
        alpha_star: q,
        closed_form: q,
        grid_argmax: best as f64 * step,
        log_nash_product: values,
        gains: (gain1, gain2),
        disagreement: (0.0, 0.0),
    })
}

/// True when the sequence rises then falls (one sign change of differences).
pub fn is_unimodal(values: &[f64]) -> bool {
    let mut falling = false;
    for w in values.windows(2) {
        let d = w[1] - w[0];
        if d.is_nan() {
            continue;
        }
        if d < 0.0 {
            falling = true;
        } else if d > 0.0 && falling {
            return false;
        }
    }
    true
}

/// Nonnegative coefficients of `C₁ √(ln K / K) + C₂ / K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundFit {
    pub c1: f64,
    pub c2: f64,
    pub sse: f64,
    /// Fitted bound ≥ deviation at every K.
    pub dominates: bool,
}

impl BoundFit {
    pub fn eval(&self, k: usize) -> f64 {
        let (f1, f2) = bound_basis(k);
        self.c1 * f1 + self.c2 * f2
    }
}

fn bound_basis(k: usize) -> (f64, f64) {
    let kf = k as f64;
    ((kf.ln() / kf).sqrt(), 1.0 / kf)
}

/// Two-variable least squares under linear inequalities `a·c ≥ b`, solved by
/// enumerating active sets (at most two constraints bind in the plane).
fn constrained_lsq(rows: &[(f64, f64)], target: &[f64], cons: &[((f64, f64), f64)]) -> Option<(f64, f64)> {
    let sse =
        |c: (f64, f64)| -> f64 { rows.iter().zip(target).map(|(r, t)| (t - r.0 * c.0 - r.1 * c.1).powi(2)).sum() };
    let feasible =
        |c: (f64, f64)| cons.iter().all(|&((a1, a2), b)| a1 * c.0 + a2 * c.1 >= b - 1e-12 * b.abs().max(1e-300));
    let mut candidates = Vec::new();
    let (s11, s12, s22, t1, t2) = rows.iter().zip(target).fold((0.0, 0.0, 0.0, 0.0, 0.0), |acc, (r, t)| {
        (acc.0 + r.0 * r.0, acc.1 + r.0 * r.1, acc.2 + r.1 * r.1, acc.3 + r.0 * t, acc.4 + r.1 * t)
    });
    let det = s11 * s22 - s12 * s12;
    if det.abs() > 0.0 {
        candidates.push(((s22 * t1 - s12 * t2) / det, (s11 * t2 - s12 * t1) / det));
    }
    for &((a1, a2), b) in cons {
        let norm = a1 * a1 + a2 * a2;
        let c0 = (a1 * b / norm, a2 * b / norm);
        let v = (-a2, a1);
        let fv: Vec<f64> = rows.iter().map(|r| r.0 * v.0 + r.1 * v.1).collect();
        let den: f64 = fv.iter().map(|x| x * x).sum();
        let s = if den > 0.0 {
            fv.iter().zip(rows.iter().zip(target)).map(|(f, (r, t))| f * (t - r.0 * c0.0 - r.1 * c0.1)).sum::<f64>()
                / den
        } else {
            0.0
        };
        candidates.push((c0.0 + s * v.0, c0.1 + s * v.1));
    }
    for (i, &((a1, a2), b)) in cons.iter().enumerate() {
        for &((d1, d2), e) in &cons[i + 1..] {
            let det = a1 * d2 - a2 * d1;
            if det.abs() > 1e-300 {
                candidates.push(((b * d2 - a2 * e) / det, (a1 * e - b * d1) / det));
            }
        }
    }
    candidates
        .into_iter()
        .filter(|&c| c.0.is_finite() && c.1.is_finite() && feasible(c))
        .min_by(|a, b| sse(*a).total_cmp(&sse(*b)))
}

/// Fits the two-term bound to `(K, deviation)` pairs. With `dominate` the
/// fit is additionally constrained to lie above every deviation.
pub fn fit_concentration_bound(ks: &[usize], deviations: &[f64], dominate: bool) -> Result<BoundFit> {
    if ks.len() != deviations.len() || ks.len() < 2 {
        return Err(Error::invalid("need at least two (K, deviation) pairs of equal length"));
    }
    let rows: Vec<(f64, f64)> = ks.iter().map(|&k| bound_basis(k)).collect();
    let mut cons = vec![((1.0, 0.0), 0.0), ((0.0, 1.0), 0.0)];
    if dominate {
        cons.extend(rows.iter().zip(deviations).map(|(&r, &d)| (r, d)));
    }
    let (c1, c2) = constrained_lsq(&rows, deviations, &cons)
        .ok_or_else(|| Error::Numerical("no feasible bound coefficients".into()))?;
    let sse = rows.iter().zip(deviations).map(|(r, d)| (d - c1 * r.0 - c2 * r.1).powi(2)).sum();
    let dominates = rows.iter().zip(deviations).all(|(r, &d)| c1 * r.0 + c2 * r.1 >= d - 1e-12 * d.abs().max(1e-300));
    Ok(BoundFit { c1, c2, sse, dominates })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationPoint {
    pub k: usize,
    /// `sup_{x ∈ S_ε} |H^K(x) − H^∞(x)|`.
    pub deviation: f64,
    pub kind: EstimatorKind,
    /// Largest Monte-Carlo standard error over `S_ε`, if sampled.
    pub std_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationCurve {
    pub points: Vec<ConcentrationPoint>,
    /// Plain nonnegative least-squares fit.
    pub fit: BoundFit,
    /// Least-squares fit constrained to dominate every deviation.
    pub envelope: BoundFit,
}

pub fn concentration_curve(
    dist: &GridDistribution,
    reward: &RewardField,
    epsilon: f64,
    ks: &[usize],
    estimator: FiniteKEstimator,
    seed: u64,
) -> Result<ConcentrationCurve> {
    if ks.is_empty() || ks.iter().any(|&k| k < 2) || ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("K list must be strictly ascending with every K >= 2"));
    }
    let basin = compute_basins(std::slice::from_ref(reward), epsilon, false)?;
    let mask = basin.basin_mask(0);
    let limit = tilt_weight(dist, reward)?;
    let mut points = Vec::with_capacity(ks.len());
    for (i, &k) in ks.iter().enumerate() {
        let h = bt_weight_finite(dist, reward, k, estimator, rng::derive_seed(seed, i as u64))?;
        let on_basin =
            |v: &[f64]| -> f64 { v.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| *x).fold(0.0, f64::max) };
        let diffs: Vec<f64> = h.weights.iter().zip(&limit.weights).map(|(a, b)| (a - b).abs()).collect();
        points.push(ConcentrationPoint {
            k,
            deviation: on_basin(&diffs),
            kind: h.kind,
            std_err: h.std_err.as_deref().map(on_basin),
        });
    }
    let devs: Vec<f64> = points.iter().map(|p| p.deviation).collect();
    let (fit, envelope) = if ks.len() >= 2 {
        (fit_concentration_bound(ks, &devs, false)?, fit_concentration_bound(ks, &devs, true)?)
    } else {
        let (f1, _) = bound_basis(ks[0]);
        let c1 = devs[0] / f1;
        let b = BoundFit { c1, c2: 0.0, sse: 0.0, dominates: true };
        (b, b)
    };
    Ok(ConcentrationCurve { points, fit, envelope })
}
