//! Soft-margin C-SVM trained by sequential minimal optimization with
//! second-order working-set selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
    Poly { gamma: f64, coef0: f64, degree: i32 },
}

impl Kernel {
    /// Default parameters for `dims` input features.
    pub fn by_name(name: &str, dims: usize) -> Result<Self> {
        let gamma = 1.0 / dims.max(1) as f64;
        match name {
            "linear" => Ok(Kernel::Linear),
            "rbf" => Ok(Kernel::Rbf { gamma }),
            "poly" => Ok(Kernel::Poly {
                gamma,
                coef0: 1.0,
                degree: 3,
            }),
            other => Err(Error::invalid(format!("unknown kernel {other:?}; expected linear, rbf or poly"))),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Rbf { gamma } => (-gamma * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp(),
            Kernel::Poly { gamma, coef0, degree } => (gamma * dot(a, b) + coef0).powi(degree),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmOptions {
    pub kernel: Kernel,
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SvmOptions {
    pub fn new(kernel: Kernel) -> Self {
        Self {
            kernel,
            c: 1.0,
            tolerance: 1e-3,
            max_iterations: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub dims: usize,
    /// Support vectors, row-major.
    pub support: Vec<f64>,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
}

impl SvmModel {
    /// Signed distance-like decision value; positive means target.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .chunks(self.dims)
            .zip(&self.coef)
            .map(|(sv, c)| c * self.kernel.eval(sv, x))
            .sum::<f64>()
            - self.rho
    }
}

/// Trains on row-major `x` (`dims` columns) with labels `targets`.
/// Box constraints are weighted inversely to class frequency.
pub fn train_svm(x: &[f64], dims: usize, targets: &[bool], opts: &SvmOptions) -> Result<SvmModel> {
    let n = targets.len();
    if x.len() != n * dims || dims == 0 {
        return Err(Error::invalid("feature matrix does not match label count"));
    }
    let n_pos = targets.iter().filter(|&&t| t).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::SingleClass);
    }
    if !(opts.c > 0.0) {
        return Err(Error::invalid("C must be positive"));
    }
    let row = |i: usize| &x[i * dims..(i + 1) * dims];
    let y: Vec<f64> = targets.iter().map(|&t| if t { 1.0 } else { -1.0 }).collect();
    let bound: Vec<f64> = targets
        .iter()
        .map(|&t| opts.c * n as f64 / (2.0 * if t { n_pos } else { n - n_pos } as f64))
        .collect();
    let diag: Vec<f64> = (0..n).map(|i| opts.kernel.eval(row(i), row(i))).collect();
    if diag.iter().all(|&d| d.abs() < 1e-300) {
        return Err(Error::Degenerate("kernel matrix is zero".into()));
    }
    let q_row = |i: usize| -> Vec<f64> { (0..n).map(|t| y[i] * y[t] * opts.kernel.eval(row(i), row(t))).collect() };

    const TAU: f64 = 1e-12;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let is_upper = |a: f64, c: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;
    let mut iterations = 0;
    loop {
        // Maximal violating index i from the "up" set.
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !is_upper(alpha[t], bound[t]) } else { !is_lower(alpha[t]) };
            if in_up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            break;
        }
        let qi = q_row(i);
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            let in_low = if y[t] > 0.0 { !is_lower(alpha[t]) } else { !is_upper(alpha[t], bound[t]) };
            if !in_low {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > 0.0 {
                let a = diag[i] + diag[t] - 2.0 * y[i] * y[t] * qi[t];
                let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax - gmin < opts.tolerance || j == usize::MAX {
            break;
        }
        if iterations >= opts.max_iterations {
            log::warn!("svm solver stopped after {iterations} iterations without reaching tolerance");
            break;
        }
        iterations += 1;
        let qj = q_row(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (bound[i], bound[j]);
        if y[i] != y[j] {
            let quad = (diag[i] + diag[j] + 2.0 * qi[j]).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = (diag[i] + diag[j] - 2.0 * qi[j]).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
    }

    // Offset from free vectors, or the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut free_sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if is_upper(alpha[t], bound[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { (ub + lb) / 2.0 };

    let mut support = Vec::new();
    let mut coef = Vec::new();
    for t in (0..n).filter(|&t| alpha[t] > 0.0) {
        support.extend_from_slice(row(t));
        coef.push(alpha[t] * y[t]);
    }
    log::debug!("svm: {iterations} iterations, {} support vectors", coef.len());
    Ok(SvmModel {
        kernel: opts.kernel,
        dims,
        support,
        coef,
        rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn blobs(n: usize, sep: f64, seed: u64) -> (Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let t = i % 3 == 0;
            let m = if t { sep / 2.0 } else { -sep / 2.0 };
            for _ in 0..2 {
                x.push(m + rng.sample::<f64, _>(StandardNormal));
            }
            y.push(t);
        }
        (x, y)
    }

    #[test]
    fn separable_linear_data_is_classified_exactly() {
        let (x, y) = blobs(300, 10.0, 1);
        let m = train_svm(&x, 2, &y, &SvmOptions::new(Kernel::Linear)).unwrap();
        for (row, &t) in x.chunks(2).zip(&y) {
            assert_eq!(m.decision(row) > 0.0, t);
        }
    }

    #[test]
    fn kkt_conditions_hold_on_small_problem() {
        let (x, y) = blobs(120, 2.0, 2);
        for kernel in [Kernel::Linear, Kernel::by_name("rbf", 2).unwrap(), Kernel::by_name("poly", 2).unwrap()] {
            let m = train_svm(&x, 2, &y, &SvmOptions::new(kernel)).unwrap();
            // Sum of alpha_i y_i is zero and the margin violators carry weight.
            let s: f64 = m.coef.iter().sum();
            assert!(s.abs() < 1e-9, "{kernel:?} {s}");
            let correct = x.chunks(2).zip(&y).filter(|(r, &t)| (m.decision(r) > 0.0) == t).count();
            assert!(correct as f64 / y.len() as f64 > 0.75, "{kernel:?}");
        }
    }

    #[test]
    fn linear_decision_matches_known_margin() {
        // Two points per class on a line; maximum margin boundary is x = 0.
        let x = vec![-2.0, -1.0, 1.0, 2.0];
        let y = vec![false, false, true, true];
        let mut opts = SvmOptions::new(Kernel::Linear);
        opts.c = 100.0;
        opts.tolerance = 1e-9;
        let m = train_svm(&x, 1, &y, &opts).unwrap();
        assert!(m.decision(&[0.0]).abs() < 1e-6);
        assert!((m.decision(&[1.0]) - 1.0).abs() < 1e-6);
        assert!((m.decision(&[-1.0]) + 1.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            train_svm(&[0.0, 0.0], 1, &[true, false], &SvmOptions::new(Kernel::Linear)),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            train_svm(&[1.0, 2.0], 1, &[true, true], &SvmOptions::new(Kernel::Linear)),
            Err(Error::SingleClass)
        ));
    }
}
