//! Box-constrained Levenberg-Marquardt with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Residual vector is exactly zero.
    ZeroResidual,
    /// Infinity norm of `Jᵀr` fell below the gradient tolerance.
    GradientTolerance,
    /// Proposed step fell below the relative step tolerance.
    StepTolerance,
    MaxIterations,
    /// Damping grew without bound and no step reduced the cost.
    Stalled,
    /// The residual could not be evaluated at the starting point.
    NonFiniteStart,
    /// No MSW resonance was detected, the branchless model was kept.
    NoResonance,
}

impl Termination {
    pub fn is_converged(self) -> bool {
        matches!(
            self,
            Self::ZeroResidual | Self::GradientTolerance | Self::StepTolerance | Self::NoResonance
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            step_tol: 1e-12,
            max_iter: 400,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    /// Sum of squared residuals at `x`.
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Cost after the start and after every accepted step.
    pub history: Vec<f64>,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Central-difference Jacobian, one column per variable.
pub fn jacobian_central<F>(f: &F, x: &[f64], h: f64, m: usize) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut jac = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let up = f(&xp)?;
        xp[j] = x[j] - h;
        let down = f(&xp)?;
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    Some(jac)
}

/// Minimizes `‖f(x)‖²` subject to `lower ≤ x ≤ upper`.
///
/// `f` returns `None` when the residual cannot be evaluated; such trial
/// points are treated as rejected steps.
pub fn minimize<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &LmOptions) -> LmOutcome
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let clamp = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let Some(mut r) = f(&x).filter(|r| r.iter().all(|v| v.is_finite())) else {
        return LmOutcome {
            x,
            cost: f64::INFINITY,
            iterations: 0,
            termination: Termination::NonFiniteStart,
            history: Vec::new(),
        };
    };
    let m = r.len();
    let mut cost = sum_sq(&r);
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut iterations = 0;

    let finish = |x: Vec<f64>, cost, iterations, termination, history| LmOutcome {
        x,
        cost,
        iterations,
        termination,
        history,
    };

    loop {
        if cost == 0.0 {
            return finish(x, cost, iterations, Termination::ZeroResidual, history);
        }
        if iterations >= opts.max_iter {
            return finish(x, cost, iterations, Termination::MaxIterations, history);
        }
        let Some(jac) = jacobian_central(&f, &x, opts.fd_step, m) else {
            return finish(x, cost, iterations, Termination::Stalled, history);
        };
        let rv = DVector::from_column_slice(&r);
        let grad = jac.tr_mul(&rv);
        if grad.amax() < opts.grad_tol {
            return finish(x, cost, iterations, Termination::GradientTolerance, history);
        }
        let jtj = jac.tr_mul(&jac);
        let diag_floor = jtj.diagonal().max() * 1e-12;

        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                if lambda > 1e30 {
                    return finish(x, cost, iterations, Termination::Stalled, history);
                }
                continue;
            };
            let step = chol.solve(&(-&grad));
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp(&mut trial);
            let step_norm = trial
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if step_norm <= opts.step_tol * (x_norm + opts.step_tol) {
                return finish(x, cost, iterations, Termination::StepTolerance, history);
            }
            match f(&trial).filter(|r| r.iter().all(|v| v.is_finite())) {
                Some(r_new) if sum_sq(&r_new) < cost => {
                    x = trial;
                    cost = sum_sq(&r_new);
                    r = r_new;
                    history.push(cost);
                    lambda = (lambda / 10.0).max(1e-15);
                    iterations += 1;
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > 1e30 {
                        return finish(x, cost, iterations, Termination::Stalled, history);
                    }
                }
            }
        }
    }
}
