//! Double-exponential (exp-sinh) rule for integrals over `[0, ∞)`.
//!
//! `u = exp(π/2 · sinh t)` maps the real line onto `(0, ∞)`; the trapezoid
//! rule in `t` converges geometrically for integrands analytic near the
//! positive axis, which covers every Laplace-type integral used here.

use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone)]
pub(crate) struct ExpSinh {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ExpSinh {
    pub fn new(step: f64, t_max: f64) -> Self {
        let n = (t_max / step).ceil() as i64;
        let mut nodes = Vec::with_capacity(2 * n as usize + 1);
        let mut weights = Vec::with_capacity(2 * n as usize + 1);
        for k in -n..=n {
            let t = k as f64 * step;
            let u = (FRAC_PI_2 * t.sinh()).exp();
            let w = step * FRAC_PI_2 * t.cosh() * u;
            if u > 0.0 && u.is_finite() && w.is_finite() {
                nodes.push(u);
                weights.push(w);
            }
        }
        ExpSinh { nodes, weights }
    }

    pub fn standard() -> Self {
        ExpSinh::new(1.0 / 64.0, 7.0)
    }

    #[cfg(test)]
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&u, &w)| w * f(u)).sum()
    }
}
