//! Parameter tables for every experiment kind.
//!
//! Each kind accepts a fixed set of keys. A key's type, range and default
//! live here and nowhere else, so `pluricurate schema` and the validator
//! cannot drift apart.

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    ExactDynamics,
    Gmm,
    LeakageSweep,
    DecaySweep,
    NashSweep,
    Concentration,
    QSweep,
    KAblation,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::ExactDynamics,
        Kind::Gmm,
        Kind::LeakageSweep,
        Kind::DecaySweep,
        Kind::NashSweep,
        Kind::Concentration,
        Kind::QSweep,
        Kind::KAblation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::ExactDynamics => "exact-dynamics",
            Kind::Gmm => "gmm",
            Kind::LeakageSweep => "leakage-sweep",
            Kind::DecaySweep => "decay-sweep",
            Kind::NashSweep => "nash-sweep",
            Kind::Concentration => "concentration",
            Kind::QSweep => "q-sweep",
            Kind::KAblation => "k-ablation",
        }
    }

    pub fn from_name(name: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn params(self) -> Vec<ParamDef> {
        match self {
            Kind::ExactDynamics => [
                grid_params(1.0, 0.1),
                vec![
                    p("distance", float_min(0.0), "4.0", "distance between the two reward centres"),
                    p(
                        "q",
                        Ty::Float { min: 0.0, max: 1.0, min_open: true, max_open: false },
                        "0.5",
                        "probability of curating with r1; 1 runs the single-reward baseline",
                    ),
                    p("mode", Ty::Choice { options: &["infinite", "finite"] }, "\"infinite\"", "pool size regime"),
                    p("K", int_min(2), "16", "candidate pool size in finite mode"),
                    p("estimator", Ty::Choice { options: ESTIMATORS }, "\"auto\"", "finite-K weight estimator"),
                    p("n_mc", int_min(100), "10000", "Monte-Carlo pools per support point"),
                    p("state_cap", int_min(1), "1000000", "cap on distinct opponent sums in the exact estimator"),
                    p("snapshots", Ty::IntList { min: 0 }, "[0, 10, 50]", "steps whose full density is written"),
                    p(
                        "check_outside_domination",
                        Ty::Bool,
                        "false",
                        "exit with status 3 if the outside multiplier reaches 1 at any step",
                    ),
                ],
            ]
            .concat(),
            Kind::Gmm => [
                gmm_params(),
                vec![
                    p("q", unit_closed(), "0.5", "probability of curating with r1; 1 is the single-reward baseline"),
                    p(
                        "distance",
                        Ty::OptFloat { min: 0.0 },
                        "null",
                        "if set, move the centres to this distance about their midpoint",
                    ),
                    p("distances", Ty::OptFloatList { min: 0.0 }, "null", "sweep over centre distances"),
                ],
            ]
            .concat(),
            Kind::LeakageSweep => [
                grid_params(1.0, 0.1),
                vec![
                    p("qs", unit_list(), "[0.1, 0.2, 0.4, 0.6, 0.8, 0.9]", "polarisation values"),
                    p("distances", float_list(0.0), "[2.0, 4.0, 6.0]", "centre distances"),
                    p("tolerance", float_min(0.0), "1e-9", "slack when testing containment in [L, U]"),
                ],
            ]
            .concat(),
            Kind::DecaySweep => [
                grid_params(10.0, 0.5),
                vec![
                    p("distances", float_list(0.0), "[2.0, 4.0, 6.0, 8.0]", "centre distances"),
                    p("q", unit_open(), "0.5", "polarisation"),
                ],
            ]
            .concat(),
            Kind::NashSweep => [
                grid_params(1.0, 0.1),
                vec![
                    p("distances", float_list(0.0), "[1.0, 2.0, 3.0, 5.0]", "centre distances"),
                    p("qs", unit_list(), "[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]", "polarisation values"),
                    p("alpha_points", int_min(3), "10001", "grid size for the Nash product over alpha"),
                ],
            ]
            .concat(),
            Kind::Concentration => vec![
                p("support_lo", Ty::AnyFloat, "0.0", "first support point"),
                p("support_hi", Ty::AnyFloat, "9.0", "last support point"),
                p("support_points", int_min(2), "10", "number of support points"),
                p("reward_center", Ty::AnyFloat, "6.0", "centre of the quadratic reward"),
                p("gamma", float_pos(), "0.125", "reward scale"),
                p("epsilon", float_pos(), "0.5", "basin tolerance"),
                p("ks", Ty::IntList { min: 2 }, "[4, 8, 16, 32, 64]", "pool sizes, strictly ascending"),
                p("estimator", Ty::Choice { options: ESTIMATORS }, "\"auto\"", "finite-K weight estimator"),
                p("n_mc", int_min(100), "10000", "Monte-Carlo pools per support point"),
                p("state_cap", int_min(1), "1000000", "cap on distinct opponent sums in the exact estimator"),
                p("mc_check", Ty::Bool, "true", "also run the Monte-Carlo estimator and report z-scores"),
            ],
            Kind::QSweep => {
                [gmm_params(), vec![p("qs", unit_list(), "[0.1, 0.3, 0.5, 0.7, 0.9]", "polarisation values")]].concat()
            }
            Kind::KAblation => [
                grid_params(1.0, 0.1),
                vec![
                    p("distance", float_min(0.0), "4.0", "centre distance"),
                    p("q", unit_open(), "0.5", "polarisation"),
                    p("ks", Ty::IntList { min: 2 }, "[16, 32, 256, 512, 1024]", "pool sizes"),
                    p("include_infinite", Ty::Bool, "true", "add the infinite-K trajectory"),
                    p("estimator", Ty::Choice { options: ESTIMATORS }, "\"auto\"", "finite-K weight estimator"),
                    p("n_mc", int_min(100), "10000", "Monte-Carlo pools per support point"),
                    p("state_cap", int_min(1), "1000000", "cap on distinct opponent sums in the exact estimator"),
                ],
            ]
            .concat(),
        }
    }
}

pub const ESTIMATORS: &[&str] = &["auto", "exact", "quadrature", "mc"];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Ty {
    AnyFloat,
    Float { min: f64, max: f64, min_open: bool, max_open: bool },
    OptFloat { min: f64 },
    Int { min: u64 },
    Bool,
    FloatList { min: f64, max: f64, min_open: bool, max_open: bool },
    OptFloatList { min: f64 },
    IntList { min: u64 },
    Point,
    OptPoint,
    Choice { options: &'static [&'static str] },
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamDef {
    pub key: &'static str,
    #[serde(rename = "type")]
    pub ty: Ty,
    pub default: Value,
    pub doc: &'static str,
}

fn p(key: &'static str, ty: Ty, default: &str, doc: &'static str) -> ParamDef {
    let default = serde_json::from_str(default).expect("schema defaults are valid JSON");
    ParamDef { key, ty, default, doc }
}

fn float_min(min: f64) -> Ty {
    Ty::Float { min, max: f64::INFINITY, min_open: false, max_open: true }
}

fn float_pos() -> Ty {
    Ty::Float { min: 0.0, max: f64::INFINITY, min_open: true, max_open: true }
}

fn int_min(min: u64) -> Ty {
    Ty::Int { min }
}

fn unit_open() -> Ty {
    Ty::Float { min: 0.0, max: 1.0, min_open: true, max_open: true }
}

fn unit_closed() -> Ty {
    Ty::Float { min: 0.0, max: 1.0, min_open: false, max_open: false }
}

fn unit_list() -> Ty {
    Ty::FloatList { min: 0.0, max: 1.0, min_open: true, max_open: true }
}

fn float_list(min: f64) -> Ty {
    Ty::FloatList { min, max: f64::INFINITY, min_open: false, max_open: true }
}

fn grid_params(gamma: f64, epsilon: f64) -> Vec<ParamDef> {
    vec![
        p("grid_lo", Ty::AnyFloat, "-1.0", "left end of the 1D grid"),
        p("grid_hi", Ty::AnyFloat, "11.0", "right end of the 1D grid"),
        p("grid_points", int_min(3), "401", "number of grid points"),
        p("midpoint", Ty::AnyFloat, "5.0", "midpoint between the reward centres"),
        p("gamma", float_pos(), &format!("{gamma:?}"), "reward scale: r_i(x) = -gamma (x - c_i)^2"),
        p("epsilon", float_pos(), &format!("{epsilon:?}"), "basin tolerance"),
        p("steps", int_min(1), "50", "retraining iterations"),
    ]
}

fn gmm_params() -> Vec<ParamDef> {
    vec![
        p("mu1", Ty::Point, "[2.0, 2.0]", "centre of r1"),
        p("mu2", Ty::Point, "[8.0, 8.0]", "centre of r2"),
        p("K", int_min(2), "100", "candidates drawn per iteration"),
        p("n_curated", int_min(20), "500", "curated draws per iteration (with replacement)"),
        p("steps", int_min(1), "50", "retraining iterations"),
        p("capacity_switch", int_min(0), "10", "iterations before this refit one component, later ones two"),
        p("temperature", float_pos(), "1.0", "BT choice temperature"),
        p("eval_samples", int_min(1), "1000", "fresh draws used to evaluate each generator"),
        p("init_samples", int_min(10), "1000", "draws used to fit the initial generator"),
        p("init_mean", Ty::OptPoint, "null", "mean of the initial generator; null uses the midpoint of mu1 and mu2"),
        p("init_cov_scale", float_pos(), "3.0", "initial covariance is this times the identity"),
        p("em_restarts", int_min(1), "3", "EM restarts, best log-likelihood kept"),
        p("em_max_iter", int_min(1), "200", "EM iteration cap"),
        p("em_tol", float_pos(), "1e-6", "EM stops after two gains in mean log-likelihood below this"),
        p("em_cov_floor", float_pos(), "1e-6", "added to covariance diagonals"),
        p("replicates", int_min(1), "1", "independent seeds per cell"),
    ]
}

fn in_range(v: f64, min: f64, max: f64, min_open: bool, max_open: bool) -> bool {
    let lo = if min_open { v > min } else { v >= min };
    let hi = if max_open { v < max } else { v <= max };
    v.is_finite() && lo && hi
}

fn range_text(min: f64, max: f64, min_open: bool, max_open: bool) -> String {
    match (max.is_infinite(), min_open) {
        (true, false) => format!(">= {min}"),
        (true, true) => format!("> {min}"),
        _ => format!("in {}{min}, {max}{}", if min_open { "(" } else { "[" }, if max_open { ")" } else { "]" }),
    }
}

impl Ty {
    pub fn describe(&self) -> String {
        match self {
            Ty::AnyFloat => "a finite number".into(),
            Ty::Float { min, max, min_open, max_open } => {
                format!("a number {}", range_text(*min, *max, *min_open, *max_open))
            }
            Ty::OptFloat { min } => format!("null or a number >= {min}"),
            Ty::Int { min } => format!("an integer >= {min}"),
            Ty::Bool => "true or false".into(),
            Ty::FloatList { min, max, min_open, max_open } => {
                format!("a non-empty list of numbers {}", range_text(*min, *max, *min_open, *max_open))
            }
            Ty::OptFloatList { min } => format!("null or a non-empty list of numbers >= {min}"),
            Ty::IntList { min } => format!("a list of integers >= {min}"),
            Ty::Point => "a list of two numbers".into(),
            Ty::OptPoint => "null or a list of two numbers".into(),
            Ty::Choice { options } => format!("one of {}", options.join(", ")),
        }
    }

    /// Checks `v` against this type.
    pub fn accepts(&self, v: &Value) -> bool {
        let num = |v: &Value| v.as_f64().filter(|x| x.is_finite());
        let list = |v: &Value| v.as_array().cloned();
        match self {
            Ty::AnyFloat => num(v).is_some(),
            Ty::Float { min, max, min_open, max_open } => {
                num(v).is_some_and(|x| in_range(x, *min, *max, *min_open, *max_open))
            }
            Ty::OptFloat { min } => v.is_null() || num(v).is_some_and(|x| x >= *min),
            Ty::Int { min } => v.as_u64().is_some_and(|x| x >= *min),
            Ty::Bool => v.is_boolean(),
            Ty::FloatList { min, max, min_open, max_open } => list(v).is_some_and(|xs| {
                !xs.is_empty()
                    && xs.iter().all(|x| num(x).is_some_and(|x| in_range(x, *min, *max, *min_open, *max_open)))
            }),
            Ty::OptFloatList { min } => {
                v.is_null()
                    || list(v).is_some_and(|xs| !xs.is_empty() && xs.iter().all(|x| num(x).is_some_and(|x| x >= *min)))
            }
            Ty::IntList { min } => list(v).is_some_and(|xs| xs.iter().all(|x| x.as_u64().is_some_and(|x| x >= *min))),
            Ty::Point => list(v).is_some_and(|xs| xs.len() == 2 && xs.iter().all(|x| num(x).is_some())),
            Ty::OptPoint => v.is_null() || Ty::Point.accepts(v),
            Ty::Choice { options } => v.as_str().is_some_and(|s| options.contains(&s)),
        }
    }
}
