//! The solve, estimate, mark, refine loop.

use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_constraints, assemble_system};
use crate::element::space::{FeFunction, FeSpace};
use crate::error::{Error, Result};
use crate::estimator::{estimate, true_error, ErrorReport, Eta5Form, EstimatorBreakdown};
use crate::mesh::{bisect, initial_mesh, refine_uniform};
use crate::problems::ProblemSpec;
use crate::vi_solver::{kkt_residual, solve, KktResidual, SolverConfig, ViSolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub theta: f64,
    /// Stop once an iteration reaches this many DOFs.
    pub max_dofs: usize,
    pub max_iterations: usize,
    /// Refine every element instead of Dörfler marking.
    pub uniform: bool,
    /// Cells per side of the initial criss-cross mesh.
    pub initial_subdivisions: usize,
    pub eta5_form: Eta5Form,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            theta: 0.3,
            max_dofs: 30_000,
            max_iterations: 100,
            uniform: false,
            initial_subdivisions: 2,
            eta5_form: Eta5Form::Weighted,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidArgument(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if self.max_iterations == 0 || self.initial_subdivisions == 0 {
            return Err(Error::InvalidArgument("max_iterations and initial_subdivisions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iteration: usize,
    pub dofs: usize,
    pub elements: usize,
    pub eta: f64,
    /// `η1..η5` (not squared).
    pub eta_parts: [f64; 5],
    pub oscillation: f64,
    pub error: Option<ErrorReport>,
    pub mu: f64,
    pub lambda_summary: String,
    pub active_state: bool,
    pub solver_iterations: usize,
    pub kkt: KktResidual,
    pub min_angle: f64,
    pub wall_ms: f64,
}

/// Everything left after the last iteration.
#[derive(Debug, Clone)]
pub struct AdaptiveRun {
    pub records: Vec<RunRecord>,
    pub space: FeSpace,
    pub solution: ViSolution,
    pub estimator: EstimatorBreakdown,
}

/// Minimal set of elements, taken in descending indicator order (ties by
/// ascending id), whose indicators sum to at least `theta` of the total.
pub fn doerfler_mark(indicators: &[f64], theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, 1], got {theta}")));
    }
    if indicators.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument("indicators must be finite and nonnegative".into()));
    }
    let total: f64 = indicators.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroIndicators);
    }
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    let target = theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for t in order {
        if acc >= target || indicators[t] == 0.0 {
            break;
        }
        acc += indicators[t];
        marked.push(t);
    }
    Ok(marked)
}

/// Runs the loop until the DOF budget or iteration cap is reached.
/// `observer` sees each record as soon as it is complete.
pub fn adaptive_solve(
    problem: &ProblemSpec,
    config: &AdaptConfig,
    solver: &SolverConfig,
    mut observer: impl FnMut(&RunRecord),
) -> Result<AdaptiveRun> {
    config.validate()?;
    solver.validate()?;
    problem.validate()?;
    let mut mesh = initial_mesh(problem.domain, config.initial_subdivisions)?;
    let mut records: Vec<RunRecord> = Vec::new();
    for iteration in 0..config.max_iterations {
        let wrap = |e: Error| Error::Iteration {
            iteration,
            source: Box::new(e),
        };
        let start = Instant::now();
        let space = FeSpace::new(mesh).map_err(wrap)?;
        let (a, b) = assemble_system(&space, problem).map_err(wrap)?;
        let cs = assemble_constraints(&space, problem).map_err(wrap)?;
        let sol = solve(&a, &b.values, &cs, solver).map_err(wrap)?;
        let kkt = kkt_residual(&a, &b.values, &cs, &sol);
        let y = FeFunction {
            coefficients: sol.y.clone(),
        };
        let est = estimate(&space, &y, sol.mu, &sol.lambda, problem, config.eta5_form);
        let error = problem
            .exact
            .as_ref()
            .map(|ex| true_error(&space, &y, ex.state.as_ref(), problem.beta, Some(est.eta())));
        let record = RunRecord {
            iteration,
            dofs: space.num_dofs(),
            elements: space.mesh.num_elements(),
            eta: est.eta(),
            eta_parts: [est.part(1), est.part(2), est.part(3), est.part(4), est.part(5)],
            oscillation: est.oscillation_total(),
            error,
            mu: sol.mu,
            lambda_summary: sol.lambda_summary(),
            active_state: sol.active_state,
            solver_iterations: sol.iterations,
            kkt,
            min_angle: space.mesh.min_angle(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        info!(
            "iteration {iteration}: dofs = {}, eta = {:.4e}, error = {}",
            record.dofs,
            record.eta,
            record.error.map_or("-".to_string(), |e| format!("{:.4e}", e.energy_error))
        );
        observer(&record);
        let done = record.dofs >= config.max_dofs || iteration + 1 == config.max_iterations;
        records.push(record);
        if done {
            return Ok(AdaptiveRun {
                records,
                space,
                solution: sol,
                estimator: est,
            });
        }
        let next = if config.uniform {
            refine_uniform(&space.mesh)
        } else {
            let marked = doerfler_mark(&est.element, config.theta).map_err(wrap)?;
            bisect(&space.mesh, &marked)
        };
        mesh = next.map_err(wrap)?;
    }
    unreachable!("loop returns on its last iteration")
}

/// Least-squares slope of `log value` against `log dofs` over the last `window` records.
pub fn fit_slope(records: &[RunRecord], window: usize, value: impl Fn(&RunRecord) -> f64) -> Result<f64> {
    if window < 2 || records.len() < window {
        return Err(Error::NotEnoughRecords {
            have: records.len(),
            window,
        });
    }
    let pts: Vec<(f64, f64)> = records[records.len() - window..]
        .iter()
        .map(|r| ((r.dofs as f64).ln(), value(r).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("dofs do not vary over the window".into()));
    }
    Ok(sxy / sxx)
}
