//! Sample-based retraining with a two-dimensional Gaussian-mixture generator.
//!
//! Each iteration draws a candidate pool from the current mixture, curates
//! `n_curated` samples with replacement by BT choice under a randomly chosen
//! active reward, and refits the mixture by EM. Capacity is one component for
//! the first iterations and two afterwards.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::curation::BtChoice;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub type Point = [f64; 2];
pub type Cov = [[f64; 2]; 2];

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Lower-triangular factor of an SPD 2×2 matrix.
fn cholesky(c: &Cov) -> Option<[f64; 3]> {
    let l11 = c[0][0].sqrt();
    if !(l11 > 0.0 && l11.is_finite()) {
        return None;
    }
    let l21 = c[1][0] / l11;
    let rest = c[1][1] - l21 * l21;
    if !(rest > 0.0 && rest.is_finite()) {
        return None;
    }
    Some([l11, l21, rest.sqrt()])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Point,
    pub cov: Cov,
    #[serde(skip)]
    chol: [f64; 3],
}

impl GmmComponent {
    pub fn new(weight: f64, mean: Point, cov: Cov) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::invalid(format!("component weight must be >= 0, got {weight}")));
        }
        if mean.iter().chain(cov.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("component mean and covariance must be finite"));
        }
        let scale = cov[0][1].abs().max(cov[1][0].abs()).max(f64::MIN_POSITIVE);
        if (cov[0][1] - cov[1][0]).abs() > 1e-12 * scale {
            return Err(Error::invalid(format!("covariance is not symmetric: {cov:?}")));
        }
        let chol =
            cholesky(&cov).ok_or_else(|| Error::invalid(format!("covariance is not positive definite: {cov:?}")))?;
        Ok(GmmComponent { weight, mean, cov, chol })
    }

    fn log_density(&self, x: &Point) -> f64 {
        let [l11, l21, l22] = self.chol;
        let z1 = (x[0] - self.mean[0]) / l11;
        let z2 = (x[1] - self.mean[1] - l21 * z1) / l22;
        -LN_2PI - (l11 * l22).ln() - 0.5 * (z1 * z1 + z2 * z2)
    }
}

/// A one- or two-component Gaussian mixture in the plane.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmModel {
    components: Vec<GmmComponent>,
}

impl GmmModel {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        if !(1..=2).contains(&components.len()) {
            return Err(Error::invalid(format!("mixture must have 1 or 2 components, got {}", components.len())));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("component weights sum to {total}, expected 1")));
        }
        Ok(GmmModel { components })
    }

    pub fn gaussian(mean: Point, cov: Cov) -> Result<Self> {
        GmmModel::new(vec![GmmComponent::new(1.0, mean, cov)?])
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn means(&self) -> Vec<Point> {
        self.components.iter().map(|c| c.mean).collect()
    }

    /// Weight of the component whose mean is closest to `center`.
    pub fn weight_nearest(&self, center: &Point) -> f64 {
        self.components
            .iter()
            .min_by(|a, b| dist2(&a.mean, center).total_cmp(&dist2(&b.mean, center)))
            .map_or(0.0, |c| c.weight)
    }

    pub fn log_likelihood(&self, x: &Point) -> f64 {
        let logs: Vec<f64> =
            self.components.iter().filter(|c| c.weight > 0.0).map(|c| c.weight.ln() + c.log_density(x)).collect();
        log_sum_exp(&logs)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Point> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = self.components.len() - 1;
                for (i, c) in self.components.iter().enumerate() {
                    acc += c.weight;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                let c = &self.components[pick];
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                let [l11, l21, l22] = c.chol;
                [c.mean[0] + l11 * z1, c.mean[1] + l21 * z1 + l22 * z2]
            })
            .collect()
    }
}

fn dist2(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `n` i.i.d. draws, deterministic given `seed`.
pub fn gmm_sample(model: &GmmModel, n: usize, seed: u64) -> Vec<Point> {
    model.sample_with(&mut rng::stream(seed, 0), n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once the mean log-likelihood gains less than this twice in a row.
    pub tol: f64,
    /// Added to every covariance diagonal.
    pub cov_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { restarts: 3, max_iter: 200, tol: 1e-6, cov_floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmFit {
    pub model: GmmModel,
    /// Mean log-likelihood per sample.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// All samples coincide; the fit is a floored point mass.
    pub degenerate: bool,
}

/// Weighted mean and floored covariance.
fn moments(samples: &[Point], resp: &[f64], floor: f64) -> (f64, Point, Cov) {
    let nk: f64 = resp.iter().sum();
    let mut mean = [0.0; 2];
    for (x, r) in samples.iter().zip(resp) {
        mean[0] += r * x[0];
        mean[1] += r * x[1];
    }
    mean = [mean[0] / nk, mean[1] / nk];
    let mut cov = [[0.0; 2]; 2];
    for (x, r) in samples.iter().zip(resp) {
        let d = [x[0] - mean[0], x[1] - mean[1]];
        cov[0][0] += r * d[0] * d[0];
        cov[0][1] += r * d[0] * d[1];
        cov[1][1] += r * d[1] * d[1];
    }
    cov[0][0] = cov[0][0] / nk + floor;
    cov[1][1] = cov[1][1] / nk + floor;
    cov[0][1] /= nk;
    cov[1][0] = cov[0][1];
    (nk, mean, cov)
}

fn m_step(samples: &[Point], resp: &[Vec<f64>], prev: Option<&GmmModel>, floor: f64) -> Result<GmmModel> {
    let n = samples.len() as f64;
    let mut comps = Vec::with_capacity(resp.len());
    for (j, r) in resp.iter().enumerate() {
        let nk: f64 = r.iter().sum();
        if nk <= 1e-12 * n {
            // An emptied component keeps its shape with zero weight.
            let keep = prev
                .map(|m| m.components[j].clone())
                .ok_or_else(|| Error::Numerical("empty initial cluster".into()))?;
            comps.push(GmmComponent::new(0.0, keep.mean, keep.cov)?);
            continue;
        }
        let (nk, mean, cov) = moments(samples, r, floor);
        comps.push(GmmComponent::new(nk / n, mean, cov).map_err(|e| Error::Numerical(e.to_string()))?);
    }
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    for c in &mut comps {
        c.weight /= total;
    }
    GmmModel::new(comps)
}

/// E-step: responsibilities and mean log-likelihood.
fn e_step(model: &GmmModel, samples: &[Point]) -> (Vec<Vec<f64>>, f64) {
    let k = model.len();
    let mut resp = vec![vec![0.0; samples.len()]; k];
    let mut ll = 0.0;
    let mut logs = vec![0.0; k];
    for (i, x) in samples.iter().enumerate() {
        for (j, c) in model.components.iter().enumerate() {
            logs[j] = if c.weight > 0.0 { c.weight.ln() + c.log_density(x) } else { f64::NEG_INFINITY };
        }
        let lse = log_sum_exp(&logs);
        ll += lse;
        for j in 0..k {
            resp[j][i] = (logs[j] - lse).exp();
        }
    }
    (resp, ll / samples.len() as f64)
}

/// k-means++ seeding followed by hard assignment to the nearest seed.
fn kmeanspp_init(samples: &[Point], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![samples[rng.random_range(0..samples.len())]];
    while centers.len() < k {
        let d2: Vec<f64> =
            samples.iter().map(|x| centers.iter().map(|c| dist2(x, c)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d2.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = samples.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            if u < *d {
                pick = i;
                break;
            }
            u -= d;
        }
        centers.push(samples[pick]);
    }
    let mut resp = vec![vec![0.0; samples.len()]; k];
    for (i, x) in samples.iter().enumerate() {
        let j = (0..k).min_by(|&a, &b| dist2(x, &centers[a]).total_cmp(&dist2(x, &centers[b]))).unwrap_or(0);
        resp[j][i] = 1.0;
    }
    resp
}

/// Fits a `k`-component mixture by EM, best of `config.restarts` runs.
pub fn gmm_em_fit(samples: &[Point], k: usize, seed: u64, config: &EmConfig) -> Result<EmFit> {
    if !(1..=2).contains(&k) {
        return Err(Error::invalid(format!("component count must be 1 or 2, got {k}")));
    }
    if samples.len() < 10 * k {
        return Err(Error::invalid(format!("{} samples is fewer than 10·k = {}", samples.len(), 10 * k)));
    }
    if let Some(i) = samples.iter().position(|x| !x[0].is_finite() || !x[1].is_finite()) {
        return Err(Error::NonFinite { what: "sample", index: i, value: f64::NAN });
    }
    if config.restarts == 0 || config.max_iter == 0 || !(config.cov_floor > 0.0) {
        return Err(Error::invalid("EM needs restarts >= 1, max_iter >= 1 and a positive covariance floor"));
    }
    if samples.iter().all(|x| x == &samples[0]) {
        let cov = [[config.cov_floor, 0.0], [0.0, config.cov_floor]];
        let comps = (0..k).map(|_| GmmComponent::new(1.0 / k as f64, samples[0], cov)).collect::<Result<Vec<_>>>()?;
        let model = GmmModel::new(comps)?;
        let log_likelihood = model.log_likelihood(&samples[0]);
        return Ok(EmFit { model, log_likelihood, iterations: 0, converged: true, degenerate: true });
    }
    if k == 1 {
        let model = m_step(samples, &[vec![1.0; samples.len()]], None, config.cov_floor)?;
        let (_, log_likelihood) = e_step(&model, samples);
        return Ok(EmFit { model, log_likelihood, iterations: 1, converged: true, degenerate: false });
    }
    let mut best: Option<EmFit> = None;
    for restart in 0..config.restarts {
        let mut rng = rng::stream(seed, restart as u64);
        let init = kmeanspp_init(samples, k, &mut rng);
        let mut model = m_step(samples, &init, None, config.cov_floor)?;
        let (mut resp, mut ll) = e_step(&model, samples);
        let (mut small_gains, mut iterations, mut converged) = (0, 0, false);
        while iterations < config.max_iter {
            iterations += 1;
            model = m_step(samples, &resp, Some(&model), config.cov_floor)?;
            let (next_resp, next_ll) = e_step(&model, samples);
            small_gains = if next_ll - ll < config.tol { small_gains + 1 } else { 0 };
            resp = next_resp;
            ll = next_ll;
            if small_gains >= 2 {
                converged = true;
                break;
            }
        }
        if best.as_ref().is_none_or(|b| ll > b.log_likelihood) {
            best = Some(EmFit { model, log_likelihood: ll, iterations, converged, degenerate: false });
        }
    }
    best.ok_or_else(|| Error::Numerical("EM produced no fit".into()))
}

/// Quadratic reward `−‖x − μ‖²`.
pub fn quadratic(x: &Point, center: &Point) -> f64 {
    -dist2(x, center)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmExperimentConfig {
    pub mu1: Point,
    pub mu2: Point,
    /// Probability that a curated draw uses `r₁`; `q = 1` is the single-reward baseline.
    pub q: f64,
    /// Candidate pool size per iteration.
    pub k: usize,
    pub n_curated: usize,
    pub steps: usize,
    /// Iterations `t < capacity_switch` refit one component, later ones two.
    pub capacity_switch: usize,
    pub temperature: f64,
    pub eval_samples: usize,
    pub init_samples: usize,
    /// Initial generator: fit to draws from `N(init_mean, init_cov_scale·I)`;
    /// `None` centres it at the midpoint of the reward modes.
    pub init_mean: Option<Point>,
    pub init_cov_scale: f64,
    pub em: EmConfig,
    pub seed: u64,
}

impl Default for GmmExperimentConfig {
    fn default() -> Self {
        GmmExperimentConfig {
            mu1: [2.0, 2.0],
            mu2: [8.0, 8.0],
            q: 0.5,
            k: 100,
            n_curated: 500,
            steps: 50,
            capacity_switch: 10,
            temperature: 1.0,
            eval_samples: 1000,
            init_samples: 1000,
            init_mean: None,
            init_cov_scale: 3.0,
            em: EmConfig::default(),
            seed: 0,
        }
    }
}

impl GmmExperimentConfig {
    /// Places the reward modes at distance `d` along the diagonal, keeping
    /// the current midpoint.
    pub fn with_distance(mut self, d: f64) -> Self {
        let mid = self.midpoint();
        let h = d / (2.0 * 2f64.sqrt());
        self.mu1 = [mid[0] - h, mid[1] - h];
        self.mu2 = [mid[0] + h, mid[1] + h];
        self
    }

    pub fn midpoint(&self) -> Point {
        [(self.mu1[0] + self.mu2[0]) / 2.0, (self.mu1[1] + self.mu2[1]) / 2.0]
    }

    pub fn components_at(&self, t: usize) -> usize {
        if t < self.capacity_switch {
            1
        } else {
            2
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::invalid(format!("q must lie in [0, 1], got {}", self.q)));
        }
        if self.k < 2 {
            return Err(Error::invalid(format!("K must be >= 2, got {}", self.k)));
        }
        for (name, v) in [
            ("n_curated", self.n_curated),
            ("steps", self.steps),
            ("eval_samples", self.eval_samples),
            ("init_samples", self.init_samples),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be >= 1")));
            }
        }
        if self.n_curated < 20 || self.init_samples < 10 {
            return Err(Error::invalid("n_curated must be >= 20 and init_samples >= 10 for EM"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.init_cov_scale > 0.0) {
            return Err(Error::invalid("init_cov_scale must be positive"));
        }
        if self.mu1.iter().chain(&self.mu2).any(|v| !v.is_finite()) {
            return Err(Error::invalid("reward centers must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmStepRecord {
    pub t: usize,
    pub components: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Point>,
    /// Evaluated on fresh draws from `G_t`.
    pub expected_reward: [f64; 2],
    pub reward_variance: [f64; 2],
    /// Weight of the component nearest `μ₁`.
    pub weight_near_mu1: f64,
    /// Fraction of `r₁` draws nearer `μ₂`, and symmetrically (absent at `t = 0`
    /// or when a reward was never active).
    pub leakage: [Option<f64>; 2],
    /// Mean active reward of the curated set.
    pub curated_reward: Option<f64>,
    /// Mean active reward under the BT probabilities (expected curated value).
    pub selection_reward: Option<f64>,
    /// Mean active reward over the candidate pool.
    pub pool_reward: Option<f64>,
    pub em_iterations: usize,
    pub em_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmTrajectory {
    pub config: GmmExperimentConfig,
    pub records: Vec<GmmStepRecord>,
    pub final_model: GmmModel,
}

impl GmmTrajectory {
    pub fn last(&self) -> &GmmStepRecord {
        self.records.last().expect("trajectory has the initial record")
    }

    pub fn final_min_variance(&self) -> f64 {
        let v = self.last().reward_variance;
        v[0].min(v[1])
    }
}

fn mean_var(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

fn evaluate(model: &GmmModel, cfg: &GmmExperimentConfig, rng: &mut Rng) -> ([f64; 2], [f64; 2]) {
    let eval = model.sample_with(rng, cfg.eval_samples);
    let (m1, v1) = mean_var(eval.iter().map(|x| quadratic(x, &cfg.mu1)));
    let (m2, v2) = mean_var(eval.iter().map(|x| quadratic(x, &cfg.mu2)));
    ([m1, m2], [v1, v2])
}

// Stream layout per run: 0 initial fit samples, then four per iteration.
const STREAMS_PER_STEP: u64 = 4;

/// Runs the curated retraining loop for `config.steps` iterations.
pub fn run_gmm_retraining(config: &GmmExperimentConfig) -> Result<GmmTrajectory> {
    config.validate()?;
    let seed = config.seed;
    let centers = [config.mu1, config.mu2];
    let init_mean = config.init_mean.unwrap_or_else(|| config.midpoint());
    let s = config.init_cov_scale;
    let init_gen = GmmModel::gaussian(init_mean, [[s, 0.0], [0.0, s]])?;
    let init_draws = init_gen.sample_with(&mut rng::stream(seed, 0), config.init_samples);
    let mut model = gmm_em_fit(&init_draws, 1, rng::derive_seed(seed, 0), &config.em)?.model;

    let record_model = |t: usize, model: &GmmModel, rng: &mut Rng| {
        let (expected_reward, reward_variance) = evaluate(model, config, rng);
        GmmStepRecord {
            t,
            components: model.len(),
            weights: model.weights(),
            means: model.means(),
            expected_reward,
            reward_variance,
            weight_near_mu1: model.weight_nearest(&config.mu1),
            leakage: [None, None],
            curated_reward: None,
            selection_reward: None,
            pool_reward: None,
            em_iterations: 0,
            em_degenerate: false,
        }
    };
    let mut records = vec![record_model(0, &model, &mut rng::stream(seed, STREAMS_PER_STEP * 1000 + 1))];

    for t in 1..=config.steps {
        let base = STREAMS_PER_STEP * t as u64;
        let pool = model.sample_with(&mut rng::stream(seed, base + 1), config.k);
        let scores: [Vec<f64>; 2] = centers.map(|c| pool.iter().map(|x| quadratic(x, &c)).collect());
        let choices = [BtChoice::new(&scores[0], config.temperature)?, BtChoice::new(&scores[1], config.temperature)?];
        let pool_means = scores.clone().map(|s| s.iter().sum::<f64>() / s.len() as f64);
        let selection_means =
            [0, 1].map(|i| choices[i].probabilities().iter().zip(&scores[i]).map(|(p, s)| p * s).sum::<f64>());

        let mut rng = rng::stream(seed, base + 2);
        let mut curated = Vec::with_capacity(config.n_curated);
        let (mut active_sum, mut selection_sum, mut pool_sum) = (0.0, 0.0, 0.0);
        let mut draws = [0usize; 2];
        let mut leaks = [0usize; 2];
        for _ in 0..config.n_curated {
            let active = if rng.random::<f64>() < config.q { 0 } else { 1 };
            let pick = choices[active].sample(&mut rng);
            let x = pool[pick];
            active_sum += scores[active][pick];
            selection_sum += selection_means[active];
            pool_sum += pool_means[active];
            draws[active] += 1;
            let other = 1 - active;
            if dist2(&x, &centers[other]) < dist2(&x, &centers[active]) {
                leaks[active] += 1;
            }
            curated.push(x);
        }

        let k = config.components_at(t);
        let fit = gmm_em_fit(&curated, k, rng::derive_seed(seed, base + 3), &config.em)
            .map_err(|e| Error::EmFailure { iteration: t, source: Box::new(e) })?;
        model = fit.model;

        let mut rec = record_model(t, &model, &mut rng::stream(seed, base + 4));
        let n = config.n_curated as f64;
        rec.leakage = [0, 1].map(|i| (draws[i] > 0).then(|| leaks[i] as f64 / draws[i] as f64));
        rec.curated_reward = Some(active_sum / n);
        rec.selection_reward = Some(selection_sum / n);
        rec.pool_reward = Some(pool_sum / n);
        rec.em_iterations = fit.iterations;
        rec.em_degenerate = fit.degenerate;
        records.push(rec);
    }
    Ok(GmmTrajectory { config: config.clone(), records, final_model: model })
}
