//! Logistic-regression calibration of scores into log-likelihood ratios.
//!
//! The fused score of a trial is `f = a_0 + sum_i a_i s_i`. The weights
//! minimize the prior-weighted cross entropy
//!
//! ```text
//! C(a) = P/N_T  * sum_targets     log(1 + exp(-f - logit P))
//!      + (1-P)/N_NT * sum_nontargets log(1 + exp( f + logit P))
//!      + lambda * |a_1..a_N|^2
//! ```
//!
//! which is convex. Descent runs on standardized columns, an exact
//! reparameterization of the same objective that keeps step sizes sane
//! when raw scores live on very different scales.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ScoreMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub prior: f64,
    pub lambda: f64,
    /// Stop when the gradient's largest component falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Starting weights `a_0..a_N`; zeros when absent.
    pub init: Option<Vec<f64>>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            prior: 0.5,
            lambda: 1e-6,
            tolerance: 1e-8,
            max_iterations: 5000,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub comparators: Vec<String>,
    /// `a_0` (offset) followed by one weight per comparator.
    pub weights: Vec<f64>,
    pub prior: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    #[serde(skip)]
    pub objective_history: Vec<f64>,
}

impl CalibrationFit {
    /// Calibrated log-likelihood ratio for one row of scores.
    pub fn llr(&self, scores: &[f64]) -> f64 {
        self.weights[0] + self.weights[1..].iter().zip(scores).map(|(a, s)| a * s).sum::<f64>()
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Neumaier compensated sum; near the optimum the objective changes by
/// less than naive summation error over 10^5 trials.
#[derive(Default, Clone, Copy)]
struct Accumulator {
    sum: f64,
    carry: f64,
}

impl Accumulator {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(self) -> f64 {
        self.sum + self.carry
    }
}

/// Objective on standardized columns `z`, with weights `b` in that space.
struct Problem<'a> {
    z: &'a [f64],
    targets: &'a [bool],
    dims: usize,
    /// Per-trial weights P/N_T or (1-P)/N_NT.
    class_weight: [f64; 2],
    logit_prior: f64,
    /// Ridge weight on each standardized coefficient: lambda / sd^2.
    ridge: Vec<f64>,
}

impl Problem<'_> {
    fn value_and_gradient(&self, b: &[f64]) -> (f64, Vec<f64>) {
        let mut value = Accumulator::default();
        let mut grad = vec![Accumulator::default(); self.dims + 1];
        for (row, &t) in self.z.chunks(self.dims).zip(self.targets) {
            let f = b[0] + b[1..].iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
            let (loss, dloss) = if t {
                let x = -f - self.logit_prior;
                (softplus(x), -sigmoid(x))
            } else {
                let x = f + self.logit_prior;
                (softplus(x), sigmoid(x))
            };
            let w = self.class_weight[t as usize];
            value.add(w * loss);
            let d = w * dloss;
            grad[0].add(d);
            for (g, x) in grad[1..].iter_mut().zip(row) {
                g.add(d * x);
            }
        }
        for ((g, &w), &r) in grad[1..].iter_mut().zip(&b[1..]).zip(&self.ridge) {
            value.add(r * w * w);
            g.add(2.0 * r * w);
        }
        (value.total(), grad.into_iter().map(Accumulator::total).collect())
    }
}

/// Fits one weight per column of `m` plus an offset.
pub fn calibrate_joint(m: &ScoreMatrix, opts: &CalibrationOptions) -> Result<CalibrationFit> {
    m.require_finite()?;
    m.require_both_classes()?;
    if !(opts.prior > 0.0 && opts.prior < 1.0) {
        return Err(Error::invalid(format!("prior must be in (0, 1), got {}", opts.prior)));
    }
    if !(opts.lambda >= 0.0) {
        return Err(Error::invalid("regularization must be non-negative"));
    }
    let dims = m.n_comparators();
    let n = m.n_trials();

    let mut mean = vec![0.0; dims];
    let mut sd = vec![0.0; dims];
    for j in 0..dims {
        let col = m.column(j);
        mean[j] = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n as f64;
        // A constant column only duplicates the offset; leave it unscaled.
        sd[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let z: Vec<f64> = m.values.iter().enumerate().map(|(i, v)| (v - mean[i % dims]) / sd[i % dims]).collect();
    let targets: Vec<bool> = m.labels.iter().map(|l| l.is_target()).collect();
    let n_t = targets.iter().filter(|&&t| t).count() as f64;
    let problem = Problem {
        z: &z,
        targets: &targets,
        dims,
        class_weight: [(1.0 - opts.prior) / (n as f64 - n_t), opts.prior / n_t],
        logit_prior: logit(opts.prior),
        ridge: sd.iter().map(|s| opts.lambda / (s * s)).collect(),
    };

    // Map between raw weights a and standardized weights b.
    let to_b = |a: &[f64]| -> Vec<f64> {
        let mut b = vec![a[0] + (0..dims).map(|j| a[j + 1] * mean[j]).sum::<f64>()];
        b.extend((0..dims).map(|j| a[j + 1] * sd[j]));
        b
    };
    let to_a = |b: &[f64]| -> Vec<f64> {
        let mut a = vec![b[0] - (0..dims).map(|j| b[j + 1] * mean[j] / sd[j]).sum::<f64>()];
        a.extend((0..dims).map(|j| b[j + 1] / sd[j]));
        a
    };

    let mut b = match &opts.init {
        Some(init) if init.len() != dims + 1 => {
            return Err(Error::invalid(format!("initial weights need {} values, got {}", dims + 1, init.len())));
        }
        Some(init) => to_b(init),
        None => vec![0.0; dims + 1],
    };

    let (mut value, mut grad) = problem.value_and_gradient(&b);
    let mut history = vec![value];
    let mut step = 1.0;
    let mut iterations = 0;
    let inf_norm = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    while iterations < opts.max_iterations && inf_norm(&grad) >= opts.tolerance {
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        // Armijo backtracking from a step that grows after each success.
        // Once the required decrease drops below float resolution, a step
        // that keeps the objective and shrinks the gradient is accepted.
        step *= 2.0;
        let mut accepted = None;
        while step > 1e-20 {
            let cand: Vec<f64> = b.iter().zip(&grad).map(|(w, g)| w - step * g).collect();
            let (v, g) = problem.value_and_gradient(&cand);
            let required = 1e-4 * step * g2;
            let ok = if required > value.abs() * f64::EPSILON {
                v <= value - required
            } else {
                v <= value && g.iter().map(|x| x * x).sum::<f64>() < g2
            };
            if ok {
                accepted = Some((cand, v, g));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, v, g)) = accepted else { break };
        iterations += 1;
        b = cand;
        value = v;
        grad = g;
        history.push(value);
    }
    let gradient_norm = inf_norm(&grad);
    let weights = to_a(&b);
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("calibration weights".into()));
    }
    Ok(CalibrationFit {
        comparators: m.comparators.clone(),
        weights,
        prior: opts.prior,
        lambda: opts.lambda,
        iterations,
        gradient_norm,
        converged: gradient_norm < opts.tolerance,
        objective_history: history,
    })
}

/// Objective value of raw weights `a` on `m`; used to compare fits.
pub fn calibration_cost(m: &ScoreMatrix, a: &[f64], prior: f64, lambda: f64) -> f64 {
    let targets: Vec<bool> = m.labels.iter().map(|l| l.is_target()).collect();
    let n_t = targets.iter().filter(|&&t| t).count() as f64;
    let n_nt = targets.len() as f64 - n_t;
    let lp = logit(prior);
    let data: f64 = m
        .rows()
        .zip(&targets)
        .map(|(row, &t)| {
            let f = a[0] + a[1..].iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
            if t {
                prior / n_t * softplus(-f - lp)
            } else {
                (1.0 - prior) / n_nt * softplus(f + lp)
            }
        })
        .sum();
    data + lambda * a[1..].iter().map(|w| w * w).sum::<f64>()
}
