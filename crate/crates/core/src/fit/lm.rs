//! Levenberg-Marquardt for small dense least-squares problems.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step improves the objective by less than this fraction.
    pub tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-8,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Sum of squared residuals at `params`.
    pub objective: f64,
    /// Jacobian evaluations performed.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after the starting point and after every accepted step.
    pub trace: Vec<f64>,
}

const FD_STEP: f64 = 1e-7;
const MAX_LAMBDA: f64 = 1e12;

fn objective(r: &[f64]) -> f64 {
    let sse: f64 = r.iter().map(|v| v * v).sum();
    if sse.is_finite() {
        sse
    } else {
        f64::INFINITY
    }
}

/// Minimizes `sum(r(x)^2)` for a residual function writing `m` values.
///
/// The Jacobian is taken by forward differences. Damping is scaled by the
/// diagonal of `J^T J`, divided on accepted steps and multiplied on rejected
/// ones. The returned point is the best one visited.
pub fn levenberg_marquardt<F>(x0: &[f64], m: usize, mut residuals: F, opts: &LmOptions) -> LmOutcome
where
    F: FnMut(&[f64], &mut [f64]),
{
    let p = x0.len();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; m];
    residuals(&x, &mut r);
    let mut f = objective(&r);
    let mut trace = vec![f];
    let outcome = |x: Vec<f64>, f, iterations, converged, trace| LmOutcome {
        params: x,
        objective: f,
        iterations,
        converged,
        trace,
    };
    if !f.is_finite() || p == 0 {
        return outcome(x, f, 0, false, trace);
    }

    let mut lambda = opts.initial_lambda;
    let mut jac = DMatrix::<f64>::zeros(m, p);
    let mut r_step = vec![0.0; m];
    let mut x_step = x.clone();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iterations && f > 0.0 {
        iterations += 1;
        for j in 0..p {
            let h = FD_STEP * x[j].abs().max(1.0);
            x_step.copy_from_slice(&x);
            x_step[j] += h;
            residuals(&x_step, &mut r_step);
            for i in 0..m {
                jac[(i, j)] = (r_step[i] - r[i]) / h;
            }
        }
        if jac.iter().any(|v| !v.is_finite()) {
            break;
        }
        let jtj = jac.tr_mul(&jac);
        let jtr = jac.tr_mul(&DVector::from_column_slice(&r));
        let diag_floor = 1e-12 * (0..p).map(|j| jtj[(j, j)]).fold(1e-300, f64::max);

        let mut accepted = false;
        while lambda <= MAX_LAMBDA {
            let mut a = jtj.clone();
            for j in 0..p {
                a[(j, j)] += lambda * jtj[(j, j)].max(diag_floor);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&jtr));
            for j in 0..p {
                x_step[j] = x[j] + delta[j];
            }
            residuals(&x_step, &mut r_step);
            let f_new = objective(&r_step);
            if f_new < f {
                let improvement = (f - f_new) / f;
                std::mem::swap(&mut x, &mut x_step);
                std::mem::swap(&mut r, &mut r_step);
                f = f_new;
                trace.push(f);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if improvement < opts.tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at any damping
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    if f == 0.0 {
        converged = true;
    }
    outcome(x, f, iterations, converged, trace)
}
