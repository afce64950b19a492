use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative cost decrease of an accepted step is below this.
    pub cost_tol: f64,
    /// Stop when the relative parameter step is below this.
    pub step_tol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tol: 1e-15,
            step_tol: 1e-12,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome<const P: usize> {
    pub params: [f64; P],
    /// Sum of squared residuals at `params`.
    pub cost: f64,
    pub iterations: usize,
    /// `J^T J` at the solution; invert and scale by the residual variance
    /// for a covariance estimate.
    pub normal_matrix: [[f64; P]; P],
    pub residual_count: usize,
}

/// Levenberg–Marquardt with Marquardt diagonal scaling for a small, fixed
/// number of parameters.
///
/// `model(params, residuals, jacobian)` fills `residuals[i]` and the row-major
/// `jacobian[i][p] = d residual_i / d param_p`, returning `false` if `params`
/// is outside the model's domain.
pub fn levenberg_marquardt<const P: usize>(
    mut model: impl FnMut(&[f64; P], &mut [f64], &mut [[f64; P]]) -> bool,
    initial: [f64; P],
    residual_count: usize,
    options: LmOptions,
) -> Result<LmOutcome<P>> {
    let mut params = initial;
    let mut residuals = vec![0.0; residual_count];
    let mut jacobian: Vec<[f64; P]> = vec![[0.0; P]; residual_count];
    let mut trial_res = vec![0.0; residual_count];
    let mut trial_jac: Vec<[f64; P]> = vec![[0.0; P]; residual_count];

    if !model(&params, &mut residuals, &mut jacobian) {
        return Err(Error::FitFailure {
            iterations: 0,
            cost: f64::NAN,
            reason: "initial parameters outside model domain".into(),
        });
    }
    let mut cost = sum_sq(&residuals);
    let mut lambda = options.initial_lambda;

    for iteration in 1..=options.max_iterations {
        let (jtj, jtr) = normal_equations(&jacobian, &residuals);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for p in 0..P {
                a[p][p] += lambda * jtj[p][p].max(1e-300);
            }
            let mut rhs = [0.0; P];
            for p in 0..P {
                rhs[p] = -jtr[p];
            }
            let Some(step) = solve(a, rhs) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = params;
            for p in 0..P {
                trial[p] += step[p];
            }
            if model(&trial, &mut trial_res, &mut trial_jac) {
                let trial_cost = sum_sq(&trial_res);
                if trial_cost.is_finite() && trial_cost <= cost {
                    let decrease = (cost - trial_cost) / cost.max(1e-300);
                    let step_norm = step
                        .iter()
                        .zip(params.iter())
                        .map(|(s, p)| libm::fabs(*s) / (libm::fabs(*p) + 1e-12))
                        .fold(0.0, f64::max);
                    params = trial;
                    cost = trial_cost;
                    core::mem::swap(&mut residuals, &mut trial_res);
                    core::mem::swap(&mut jacobian, &mut trial_jac);
                    lambda = (lambda * 0.1).max(1e-12);
                    accepted = true;
                    if decrease < options.cost_tol || step_norm < options.step_tol || cost == 0.0 {
                        return Ok(finish(params, cost, iteration, &jacobian, residual_count));
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: a stationary point.
            return Ok(finish(params, cost, iteration, &jacobian, residual_count));
        }
    }
    Err(Error::FitFailure {
        iterations: options.max_iterations,
        cost,
        reason: format!("no convergence, last params {params:?}"),
    })
}

fn finish<const P: usize>(
    params: [f64; P],
    cost: f64,
    iterations: usize,
    jacobian: &[[f64; P]],
    residual_count: usize,
) -> LmOutcome<P> {
    let mut normal_matrix = [[0.0; P]; P];
    for row in jacobian {
        for a in 0..P {
            for b in 0..P {
                normal_matrix[a][b] += row[a] * row[b];
            }
        }
    }
    LmOutcome {
        params,
        cost,
        iterations,
        normal_matrix,
        residual_count,
    }
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|r| r * r).sum()
}

fn normal_equations<const P: usize>(jac: &[[f64; P]], res: &[f64]) -> ([[f64; P]; P], [f64; P]) {
    let mut jtj = [[0.0; P]; P];
    let mut jtr = [0.0; P];
    for (row, r) in jac.iter().zip(res) {
        for a in 0..P {
            jtr[a] += row[a] * r;
            for b in 0..P {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    (jtj, jtr)
}

/// Gaussian elimination with partial pivoting; `None` if singular.
#[allow(clippy::needless_range_loop)]
pub(crate) fn solve<const P: usize>(mut a: [[f64; P]; P], mut b: [f64; P]) -> Option<[f64; P]> {
    for col in 0..P {
        let pivot = (col..P).max_by(|&i, &j| libm::fabs(a[i][col]).total_cmp(&libm::fabs(a[j][col])))?;
        if libm::fabs(a[pivot][col]) < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..P {
            let factor = a[row][col] / a[col][col];
            for k in col..P {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; P];
    for row in (0..P).rev() {
        let mut acc = b[row];
        for k in row + 1..P {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Inverse of a small symmetric positive-definite matrix via column solves.
pub(crate) fn invert<const P: usize>(a: [[f64; P]; P]) -> Option<[[f64; P]; P]> {
    let mut inv = [[0.0; P]; P];
    for c in 0..P {
        let mut e = [0.0; P];
        e[c] = 1.0;
        let col = solve(a, e)?;
        for r in 0..P {
            inv[r][c] = col[r];
        }
    }
    Some(inv)
}
