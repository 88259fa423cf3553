//! Levenberg-Marquardt minimization of a sum of squared residuals with a
//! forward-difference Jacobian.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Why the optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// The accepted step was shorter than the step tolerance.
    StepSize,
    /// The relative decrease of the objective fell below the tolerance.
    CostDecrease,
    /// The objective reached zero (to machine precision).
    ZeroCost,
    /// No descent direction is left: the gradient vanishes numerically.
    Stationary,
    /// The iteration budget ran out.
    MaxIterations,
    /// No step could reduce the objective although the gradient is nonzero.
    NoDecrease,
    /// Not an optimization result: parameters are ground truth.
    Truth,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Termination::MaxIterations | Termination::NoDecrease)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when the Euclidean length of an accepted step is below this.
    pub x_tol: f64,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub f_tol: f64,
    /// Relative forward-difference step: `h = fd_step (1 + |x_j|)`.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 120,
            x_tol: 1e-5,
            f_tol: 1e-5,
            fd_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub cost_initial: f64,
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
}

const MAX_REJECTIONS: usize = 30;

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimizes `sum(residual(x)^2)` over the entries of `x` flagged in `free`.
///
/// `residual` must be total: it should encode invalid parameter regions as
/// large residuals rather than fail. `on_iteration` sees the current
/// parameters at the start of every outer iteration.
pub fn minimize<F, C>(x0: Vec<f64>, free: &[bool], residual: F, opts: &LmOptions, mut on_iteration: C) -> LmOutcome
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
    C: FnMut(&[f64]),
{
    assert_eq!(x0.len(), free.len());
    let cols: Vec<usize> = (0..x0.len()).filter(|&j| free[j]).collect();
    let mut x = x0;
    let mut r = residual(&x);
    let mut cost = cost_of(&r);
    let cost_initial = cost;
    let tiny = f64::MIN_POSITIVE.sqrt();

    let done = |x: Vec<f64>, cost: f64, iterations: usize, termination: Termination| LmOutcome {
        x,
        cost_initial,
        cost,
        iterations,
        termination,
    };

    if cost <= tiny || cols.is_empty() {
        return done(x, cost, 0, Termination::ZeroCost);
    }

    let mut lambda = 1e-3;
    let mut nu = 2.0;
    for iter in 1..=opts.max_iter {
        on_iteration(&x);

        let jac_cols: Vec<Vec<f64>> = cols
            .par_iter()
            .map(|&j| {
                let h = opts.fd_step * (1.0 + x[j].abs());
                let mut xp = x.clone();
                xp[j] += h;
                let h = xp[j] - x[j];
                residual(&xp).iter().zip(&r).map(|(a, b)| (a - b) / h).collect()
            })
            .collect();
        let m = r.len();
        let n = cols.len();
        let jac = DMatrix::from_fn(m, n, |i, j| jac_cols[j][i]);
        let rv = DVector::from_column_slice(&r);
        let g = jac.tr_mul(&rv);
        let a = jac.tr_mul(&jac);

        // Marquardt scaling: solve in variables with unit Gauss-Newton diagonal.
        let d: Vec<f64> = (0..n)
            .map(|j| {
                let v = a[(j, j)].sqrt();
                if v > 0.0 { v } else { 1.0 }
            })
            .collect();
        let a_s = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (d[i] * d[j]));
        let g_s = DVector::from_fn(n, |i, _| g[i] / d[i]);

        if g_s.amax() <= 1e-15 * cost.sqrt().max(tiny) {
            return done(x, cost, iter, Termination::Stationary);
        }

        let mut rejections = 0;
        loop {
            let mut lhs = a_s.clone();
            for i in 0..n {
                lhs[(i, i)] += lambda;
            }
            let step_s = match lhs.cholesky() {
                Some(ch) => ch.solve(&(-&g_s)),
                None => {
                    lambda *= nu;
                    nu *= 2.0;
                    rejections += 1;
                    if rejections > MAX_REJECTIONS {
                        return done(x, cost, iter, Termination::NoDecrease);
                    }
                    continue;
                }
            };
            let step: Vec<f64> = (0..n).map(|i| step_s[i] / d[i]).collect();
            let mut x_new = x.clone();
            for (k, &j) in cols.iter().enumerate() {
                x_new[j] += step[k];
            }
            let r_new = residual(&x_new);
            let cost_new = cost_of(&r_new);
            // predicted decrease of the local quadratic model
            let predicted = -(2.0 * step_s.dot(&g_s) + step_s.dot(&(&a_s * &step_s)));

            if cost_new.is_finite() && cost_new < cost {
                let rho = (cost - cost_new) / predicted.max(tiny);
                lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                let decrease = (cost - cost_new) / cost;
                let step_len = step.iter().map(|s| s * s).sum::<f64>().sqrt();
                x = x_new;
                r = r_new;
                cost = cost_new;
                if cost <= tiny {
                    return done(x, cost, iter, Termination::ZeroCost);
                }
                if step_len < opts.x_tol {
                    return done(x, cost, iter, Termination::StepSize);
                }
                if decrease < opts.f_tol {
                    return done(x, cost, iter, Termination::CostDecrease);
                }
                break;
            }

            rejections += 1;
            // The quadratic model itself promises no meaningful decrease:
            // we are at a minimum up to rounding.
            if predicted <= 1e-15 * cost {
                return done(x, cost, iter, Termination::Stationary);
            }
            if rejections > MAX_REJECTIONS {
                return done(x, cost, iter, Termination::NoDecrease);
            }
            lambda *= nu;
            nu *= 2.0;
        }
    }
    done(x, cost, opts.max_iter, Termination::MaxIterations)
}
