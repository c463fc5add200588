//! Levenberg-Marquardt for small dense problems, with an optional projection
//! applied to every trial point (used for box constraints).

use nalgebra::{DMatrix, DVector};

const LAMBDA_MIN: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e16;
const DIAG_FLOOR: f64 = 1e-9;

pub(crate) trait LeastSquares {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// Maps a trial point onto the feasible set.
    fn project(&self, _x: &mut DVector<f64>) {}
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmConfig {
    pub max_iterations: usize,
    pub damping_init: f64,
    pub step_tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Cost after the initial point and after every accepted step.
    #[cfg(test)]
    pub history: Vec<f64>,
}

fn half_norm2(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

pub(crate) fn minimize(problem: &impl LeastSquares, x0: DVector<f64>, cfg: LmConfig) -> LmOutcome {
    let mut x = x0;
    problem.project(&mut x);
    let mut cost = half_norm2(&problem.residuals(&x));
    #[cfg(test)]
    let mut history = vec![cost];
    let mut lambda = cfg.damping_init;
    let mut converged = false;
    let mut iterations = 0;

    let mut jac = problem.jacobian(&x);
    let mut grad = jac.tr_mul(&problem.residuals(&x));
    let mut jtj = jac.tr_mul(&jac);

    while iterations < cfg.max_iterations {
        if cost == 0.0 || grad.amax() <= f64::MIN_POSITIVE {
            converged = true;
            break;
        }
        iterations += 1;

        let mut a = jtj.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda * jtj[(i, i)].max(DIAG_FLOOR);
        }
        let Some(chol) = a.cholesky() else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                break;
            }
            continue;
        };
        let delta = chol.solve(&(-&grad));
        let mut trial = &x + &delta;
        problem.project(&mut trial);
        let step = (&trial - &x).norm();
        if step < cfg.step_tol {
            converged = true;
            break;
        }

        let trial_cost = half_norm2(&problem.residuals(&trial));
        if trial_cost <= cost {
            x = trial;
            cost = trial_cost;
            #[cfg(test)]
            history.push(cost);
            lambda = (lambda / 10.0).max(LAMBDA_MIN);
            jac = problem.jacobian(&x);
            grad = jac.tr_mul(&problem.residuals(&x));
            jtj = jac.tr_mul(&jac);
        } else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                break;
            }
        }
    }

    LmOutcome {
        x,
        iterations,
        converged,
        #[cfg(test)]
        history,
    }
}
