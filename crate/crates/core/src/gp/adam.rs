//! Adam with a geometric learning-rate schedule and plateau stopping.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr_start: f64,
    /// Learning rate reached at `max_iterations`; decays geometrically.
    pub lr_end: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iterations: u32,
    pub min_iterations: u32,
    /// Stop once the objective moved less than `tolerance * (1 + |f|)`
    /// over the last `window` iterations.
    pub tolerance: f64,
    pub window: u32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr_start: 0.1,
            lr_end: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_iterations: 3000,
            min_iterations: 30,
            tolerance: 1e-6,
            window: 10,
        }
    }
}

impl AdamConfig {
    fn lr(&self, t: u32) -> f64 {
        let frac = t as f64 / self.max_iterations.max(1) as f64;
        self.lr_start * (self.lr_end / self.lr_start).powf(frac)
    }
}

pub struct AdamResult {
    /// Parameters with the lowest objective seen.
    pub params: Vec<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: u32,
    pub converged: bool,
}

/// Minimizes `f`, which returns `(objective, gradient)` or `None` where the
/// objective is undefined. Returns `None` if `f` fails at the start point.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, cfg: &AdamConfig) -> Option<AdamResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let dim = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x)?;
    let initial_objective = fx;
    let mut best = (fx, x.clone());
    let mut m1 = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    let mut history = vec![fx];
    let mut damping = 1.0;
    let mut step = 0i32;
    let mut converged = false;
    let mut t = 0;

    while t < cfg.max_iterations {
        t += 1;
        step += 1;
        let lr = cfg.lr(t) * damping;
        let c1 = 1.0 - cfg.beta1.powi(step);
        let c2 = 1.0 - cfg.beta2.powi(step);
        let previous = x.clone();
        for i in 0..dim {
            m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g[i];
            m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            x[i] -= lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + cfg.eps);
        }
        match f(&x) {
            Some((fv, gv)) => {
                fx = fv;
                g = gv;
            }
            None => {
                // Undefined region: back off and restart the moments.
                x = previous;
                m1.iter_mut().for_each(|v| *v = 0.0);
                m2.iter_mut().for_each(|v| *v = 0.0);
                step = 0;
                damping *= 0.5;
                let (fv, gv) = f(&x)?;
                fx = fv;
                g = gv;
            }
        }
        if fx < best.0 {
            best = (fx, x.clone());
        }
        history.push(fx);
        let w = cfg.window as usize;
        if t >= cfg.min_iterations && history.len() > w {
            let past = history[history.len() - 1 - w];
            if (past - fx).abs() <= cfg.tolerance * (1.0 + fx.abs()) {
                converged = true;
                break;
            }
        }
    }

    Some(AdamResult {
        params: best.1,
        objective: best.0,
        initial_objective,
        iterations: t,
        converged,
    })
}
