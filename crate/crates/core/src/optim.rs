//! Bound-projected least-squares minimization shared by the daily-profile and
//! event-pulse fits.
//!
//! Two descent schemes are provided. Both only accept steps that lower the
//! objective, so the recorded objective trace is non-increasing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Descent scheme used by [`minimize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    /// Diagonally scaled gradient descent with step-size backtracking.
    GradientDescent,
    /// Gradient descent blended with Gauss-Newton steps through an adaptive
    /// damping factor.
    #[default]
    LevenbergMarquardt,
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" | "gradient-descent" => Ok(Solver::GradientDescent),
            "lm" | "levenberg-marquardt" => Ok(Solver::LevenbergMarquardt),
            other => Err(Error::Argument(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Initial step scale for gradient descent (dimensionless, applied to
    /// the diagonally scaled gradient).
    pub learning_rate: f64,
    /// Stop once the relative objective improvement of an accepted step
    /// drops below this.
    pub convergence_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub solver: Solver,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            learning_rate: 0.5,
            convergence_tol: 1e-8,
            restarts: 3,
            seed: 0,
            solver: Solver::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.restarts == 0 {
            return Err(Error::Argument("max_iterations and restarts must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.convergence_tol > 0.0) {
            return Err(Error::Argument(
                "learning_rate and convergence_tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A residual vector `r(p)` with its Jacobian, minimized as `sum(r^2)`.
pub trait LeastSquares {
    fn num_params(&self) -> usize;
    fn num_residuals(&self) -> usize;
    fn residuals(&self, params: &[f64], out: &mut [f64]);
    /// Row-major `num_residuals x num_params` Jacobian of the residuals.
    fn jacobian(&self, params: &[f64], out: &mut [f64]);
    /// Projects parameters back into their feasible box.
    fn project(&self, _params: &mut [f64]) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub params: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after the starting point and after every accepted step.
    pub trace: Vec<f64>,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

struct Workspace {
    r: Vec<f64>,
    jac: Vec<f64>,
    trial: Vec<f64>,
    trial_r: Vec<f64>,
}

impl Workspace {
    fn new(m: usize, n: usize) -> Self {
        Self {
            r: vec![0.0; m],
            jac: vec![0.0; m * n],
            trial: vec![0.0; n],
            trial_r: vec![0.0; m],
        }
    }
}

/// Gradient `J^T r` and the diagonal of `J^T J`.
fn gradient_and_curvature(jac: &[f64], r: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut g = vec![0.0; n];
    let mut d = vec![0.0; n];
    for (row, ri) in jac.chunks_exact(n).zip(r) {
        for j in 0..n {
            g[j] += row[j] * ri;
            d[j] += row[j] * row[j];
        }
    }
    (g, d)
}

pub fn minimize<P: LeastSquares>(problem: &P, init: &[f64], config: &FitConfig) -> Minimum {
    match config.solver {
        Solver::GradientDescent => gradient_descent(problem, init, config),
        Solver::LevenbergMarquardt => levenberg_marquardt(problem, init, config),
    }
}

fn gradient_descent<P: LeastSquares>(problem: &P, init: &[f64], config: &FitConfig) -> Minimum {
    let (m, n) = (problem.num_residuals(), problem.num_params());
    let mut ws = Workspace::new(m, n);
    let mut p = init.to_vec();
    problem.project(&mut p);
    problem.residuals(&p, &mut ws.r);
    let mut f = sum_sq(&ws.r);
    let mut trace = vec![f];
    let mut lr = config.learning_rate;
    let mut converged = f == 0.0;
    let mut iterations = 0;

    while !converged && iterations < config.max_iterations {
        iterations += 1;
        problem.jacobian(&p, &mut ws.jac);
        let (g, d) = gradient_and_curvature(&ws.jac, &ws.r, n);
        let dmax = d.iter().cloned().fold(0.0, f64::max);
        if dmax == 0.0 {
            converged = true;
            break;
        }
        let floor = dmax * 1e-12;

        let mut accepted = false;
        for _ in 0..60 {
            for j in 0..n {
                ws.trial[j] = p[j] - lr * g[j] / d[j].max(floor);
            }
            problem.project(&mut ws.trial);
            problem.residuals(&ws.trial, &mut ws.trial_r);
            let ft = sum_sq(&ws.trial_r);
            if ft < f {
                let rel = (f - ft) / f;
                std::mem::swap(&mut p, &mut ws.trial);
                std::mem::swap(&mut ws.r, &mut ws.trial_r);
                f = ft;
                trace.push(f);
                lr = (lr * 1.5).min(1e6);
                accepted = true;
                if rel < config.convergence_tol || f == 0.0 {
                    converged = true;
                }
                break;
            }
            lr *= 0.5;
        }
        if !accepted {
            // No descent direction survives projection: stationary point.
            converged = true;
        }
    }
    Minimum {
        params: p,
        objective: f,
        iterations,
        converged,
        trace,
    }
}

fn levenberg_marquardt<P: LeastSquares>(problem: &P, init: &[f64], config: &FitConfig) -> Minimum {
    let (m, n) = (problem.num_residuals(), problem.num_params());
    let mut ws = Workspace::new(m, n);
    let mut p = init.to_vec();
    problem.project(&mut p);
    problem.residuals(&p, &mut ws.r);
    let mut f = sum_sq(&ws.r);
    let mut trace = vec![f];
    let mut lambda = 1e-3;
    let mut converged = f == 0.0;
    let mut iterations = 0;

    while !converged && iterations < config.max_iterations {
        iterations += 1;
        problem.jacobian(&p, &mut ws.jac);
        let jac = DMatrix::from_row_slice(m, n, &ws.jac);
        let r = DVector::from_column_slice(&ws.r);
        let jtj = jac.tr_mul(&jac);
        let g = jac.tr_mul(&r);
        let dmax = (0..n).map(|j| jtj[(j, j)]).fold(0.0, f64::max);
        if dmax == 0.0 || g.amax() == 0.0 {
            converged = true;
            break;
        }

        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for j in 0..n {
                a[(j, j)] += lambda * jtj[(j, j)].max(dmax * 1e-12);
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => match a.lu().solve(&g) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                },
            };
            for j in 0..n {
                ws.trial[j] = p[j] - step[j];
            }
            problem.project(&mut ws.trial);
            problem.residuals(&ws.trial, &mut ws.trial_r);
            let ft = sum_sq(&ws.trial_r);
            if ft < f {
                let rel = (f - ft) / f;
                std::mem::swap(&mut p, &mut ws.trial);
                std::mem::swap(&mut ws.r, &mut ws.trial_r);
                f = ft;
                trace.push(f);
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel < config.convergence_tol || f == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            converged = true;
        }
    }
    Minimum {
        params: p,
        objective: f,
        iterations,
        converged,
        trace,
    }
}
