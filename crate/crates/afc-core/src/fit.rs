//! Levenberg–Marquardt for small dense least-squares problems (a handful of
//! parameters, tens of residuals). Jacobians are taken by central
//! differences.

use alloc::vec;
use alloc::vec::Vec;


#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::solve_dense;
use crate::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquaresFit {
    pub params: Vec<f64>,
    /// Sum of squared residuals at `params`.
    pub cost: f64,
    pub iterations: usize,
}

pub struct LmOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 500,
            tolerance: 1e-14,
        }
    }
}

/// Minimizes `Σ r_k(p)²` where `residuals(p, out)` fills `out` with the
/// `m` residuals. Returns [`Error::FitDiverged`] if the cost is not finite
/// at the start or no convergence happens within the iteration budget.
pub fn levenberg_marquardt(
    start: &[f64],
    m: usize,
    residuals: impl Fn(&[f64], &mut [f64]),
    opts: &LmOptions,
) -> Result<LeastSquaresFit, Error> {
    let n = start.len();
    let mut p = start.to_vec();
    let mut r = vec![0.0; m];
    residuals(&p, &mut r);
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    if !cost.is_finite() {
        return Err(Error::FitDiverged { iterations: 0 });
    }
    let mut lambda = 1e-3;
    let mut jac = vec![0.0; m * n];
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];
    for iter in 0..opts.max_iterations {
        for j in 0..n {
            let h = 1e-6 * p[j].abs().max(1e-3);
            let mut q = p.clone();
            q[j] = p[j] + h;
            residuals(&q, &mut rp);
            q[j] = p[j] - h;
            residuals(&q, &mut rm);
            for k in 0..m {
                jac[k * n + j] = (rp[k] - rm[k]) / (2.0 * h);
            }
        }
        let mut jtj = vec![0.0; n * n];
        let mut jtr = vec![0.0; n];
        for k in 0..m {
            for a in 0..n {
                jtr[a] += jac[k * n + a] * r[k];
                for b in 0..n {
                    jtj[a * n + b] += jac[k * n + a] * jac[k * n + b];
                }
            }
        }
        let grad_norm = jtr.iter().map(|x| x * x).sum::<f64>().sqrt();
        if grad_norm <= opts.tolerance * (1.0 + cost) {
            return Ok(LeastSquaresFit { params: p, cost, iterations: iter });
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[d * n + d] += lambda * jtj[d * n + d].max(1e-12);
            }
            let mut step: Vec<f64> = jtr.iter().map(|x| -x).collect();
            if solve_dense(&mut a, &mut step, n).is_none() {
                lambda *= 10.0;
                continue;
            }
            for j in 0..n {
                trial[j] = p[j] + step[j];
            }
            residuals(&trial, &mut r_trial);
            let new_cost: f64 = r_trial.iter().map(|x| x * x).sum();
            if new_cost.is_finite() && new_cost <= cost {
                let step_norm = step.iter().map(|x| x * x).sum::<f64>().sqrt();
                let p_norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                let rel_drop = (cost - new_cost) / cost.max(1e-300);
                p.copy_from_slice(&trial);
                r.copy_from_slice(&r_trial);
                cost = new_cost;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if step_norm <= 1e-12 * (1.0 + p_norm) || rel_drop < 1e-15 {
                    return Ok(LeastSquaresFit { params: p, cost, iterations: iter + 1 });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step at any damping: we are at a minimum to
            // working precision.
            return Ok(LeastSquaresFit { params: p, cost, iterations: iter + 1 });
        }
    }
    Err(Error::FitDiverged {
        iterations: opts.max_iterations,
    })
}
