//! Discrete variational inequality solvers.
//!
//! Multiplier convention: the certified solution satisfies
//! `A y = b + μ·s + Σ_k λ_k·c_k`, where `s` is the state row and `c_k` are the
//! control rows, with `μ ≥ 0`. Lower-bound multipliers are nonnegative and
//! upper-bound multipliers nonpositive.

use std::collections::HashMap;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::{Mat, Side};
use log::{debug, trace};
use serde::{Deserialize, Serialize};

use crate::assembly::{dot, ConstraintSet, ControlConstraints, SparseRow, SymmetricSparseMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Target relative residual of SPD solves.
    pub linear_tolerance: f64,
    pub pdas_max_iterations: usize,
    /// Scaling constant of the active-set switching rule.
    pub pdas_c: f64,
    pub complementarity_tolerance: f64,
    /// Equality QPs with more pinned rows than this use the saddle-point LU.
    pub schur_max_rows: usize,
    /// Skip the factorization and use preconditioned CG only.
    pub force_cg: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            linear_tolerance: 1e-12,
            pdas_max_iterations: 50,
            pdas_c: 1.0,
            complementarity_tolerance: 1e-9,
            schur_max_rows: 32,
            force_cg: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.linear_tolerance > 0.0 && self.pdas_c > 0.0 && self.complementarity_tolerance > 0.0)
            || self.pdas_max_iterations == 0
        {
            return Err(Error::InvalidArgument("solver settings must be positive".into()));
        }
        Ok(())
    }
}

fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn residual(a: &SymmetricSparseMatrix, x: &[f64], rhs: &[f64]) -> Vec<f64> {
    a.matvec(x).iter().zip(rhs).map(|(ax, r)| r - ax).collect()
}

/// Reusable SPD solver: sparse Cholesky with iterative refinement, falling
/// back to Jacobi-preconditioned CG when the factorization is unavailable.
pub struct SpdSolver<'a> {
    a: &'a SymmetricSparseMatrix,
    llt: Option<Llt<usize, f64>>,
    tolerance: f64,
}

impl<'a> SpdSolver<'a> {
    pub fn new(a: &'a SymmetricSparseMatrix, config: &SolverConfig) -> Self {
        let llt = if config.force_cg {
            None
        } else {
            match a.as_faer().sp_cholesky(Side::Lower) {
                Ok(l) => Some(l),
                Err(e) => {
                    debug!("cholesky failed ({e:?}), using CG");
                    None
                }
            }
        };
        SpdSolver {
            a,
            llt,
            tolerance: config.linear_tolerance,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn matrix(&self) -> &SymmetricSparseMatrix {
        self.a
    }

    fn factor_solve(llt: &Llt<usize, f64>, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = llt.solve(&b);
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let nb = norm2(rhs);
        if nb == 0.0 {
            return Ok(vec![0.0; rhs.len()]);
        }
        let target = self.tolerance * nb;
        let mut x = vec![0.0; rhs.len()];
        if let Some(llt) = &self.llt {
            x = Self::factor_solve(llt, rhs);
            let mut best = f64::INFINITY;
            for _ in 0..4 {
                let r = residual(self.a, &x, rhs);
                let nr = norm2(&r);
                if nr <= target {
                    return Ok(x);
                }
                if nr >= 0.5 * best {
                    // refinement stagnated at rounding level
                    trace!("refinement stalled at relative residual {:.2e}", nr / nb);
                    return Ok(x);
                }
                best = nr;
                let dx = Self::factor_solve(llt, &r);
                for (xi, d) in x.iter_mut().zip(dx) {
                    *xi += d;
                }
            }
            return Ok(x);
        }
        pcg(self.a, rhs, &mut x, target)?;
        Ok(x)
    }
}

/// Jacobi-preconditioned conjugate gradients from the initial guess in `x`.
fn pcg(a: &SymmetricSparseMatrix, rhs: &[f64], x: &mut [f64], target: f64) -> Result<()> {
    let n = rhs.len();
    let diag = a.diagonal();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let mut r = residual(a, x, rhs);
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_it = 10 * n.max(1);
    for _ in 0..max_it {
        if norm2(&r) <= target {
            return Ok(());
        }
        let ap = a.matvec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm2(&r);
    if res <= target {
        Ok(())
    } else {
        Err(Error::CgNotConverged {
            iterations: max_it,
            residual: res,
        })
    }
}

/// Solves `A x = rhs` to the configured relative residual.
pub fn solve_spd(a: &SymmetricSparseMatrix, rhs: &[f64], config: &SolverConfig) -> Result<Vec<f64>> {
    SpdSolver::new(a, config).solve(rhs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualityQpSolution {
    pub x: Vec<f64>,
    /// `A x = b + Σ_k multipliers[k]·rows[k]`.
    pub multipliers: Vec<f64>,
    /// Spectral condition number of the Schur complement (Schur path only).
    pub schur_condition: Option<f64>,
}

/// Combines precomputed `x0 = A⁻¹b` and `z_k = A⁻¹ row_k` into the solution
/// pinning every row to its target.
fn schur_combine(x0: &[f64], z: &[&[f64]], rows: &[&SparseRow], targets: &[f64]) -> Result<EqualityQpSolution> {
    let k = rows.len();
    if k == 0 {
        return Ok(EqualityQpSolution {
            x: x0.to_vec(),
            multipliers: vec![],
            schur_condition: None,
        });
    }
    let s = nalgebra::DMatrix::<f64>::from_fn(k, k, |i, j| 0.5 * (rows[i].apply(z[j]) + rows[j].apply(z[i])));
    let rhs = nalgebra::DVector::<f64>::from_fn(k, |i, _| targets[i] - rows[i].apply(x0));
    let eig = s.clone().symmetric_eigen();
    let (lmin, lmax) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lmin > lmax * 1e-14) {
        return Err(Error::SingularSchur);
    }
    let chol = s.cholesky().ok_or(Error::SingularSchur)?;
    let nu = chol.solve(&rhs);
    let mut x = x0.to_vec();
    for (j, zj) in z.iter().enumerate() {
        for (xi, zi) in x.iter_mut().zip(zj.iter()) {
            *xi += nu[j] * zi;
        }
    }
    Ok(EqualityQpSolution {
        x,
        multipliers: nu.iter().copied().collect(),
        schur_condition: Some(lmax / lmin),
    })
}

/// Saddle-point solve `[A -Cᵀ; -C 0][x; ν] = [b; -g]` by sparse LU.
fn saddle_solve(a: &SymmetricSparseMatrix, b: &[f64], rows: &[&SparseRow], targets: &[f64]) -> Result<EqualityQpSolution> {
    let n = a.dim();
    let k = rows.len();
    let mut trip: Vec<(usize, usize, f64)> = a.entries().collect();
    for (j, row) in rows.iter().enumerate() {
        for (&i, &v) in row.indices.iter().zip(&row.values) {
            trip.push((i, n + j, -v));
            trip.push((n + j, i, -v));
        }
    }
    let kkt = SymmetricSparseMatrix::from_triplets(n + k, trip)?;
    let lu = kkt.as_faer().sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let mut rhs = b.to_vec();
    rhs.extend(targets.iter().map(|t| -t));
    let solve = |r: &[f64]| {
        let mut m = Mat::<f64>::from_fn(r.len(), 1, |i, _| r[i]);
        lu.solve_in_place(m.as_mut());
        (0..r.len()).map(|i| m[(i, 0)]).collect::<Vec<f64>>()
    };
    let mut sol = solve(&rhs);
    for _ in 0..2 {
        let r = residual(&kkt, &sol, &rhs);
        if norm_inf(&r) <= 1e-15 * norm_inf(&rhs).max(1.0) {
            break;
        }
        let d = solve(&r);
        for (s, di) in sol.iter_mut().zip(d) {
            *s += di;
        }
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSchur);
    }
    let multipliers = sol.split_off(n);
    Ok(EqualityQpSolution {
        x: sol,
        multipliers,
        schur_condition: None,
    })
}

/// Minimizes `½xᵀAx - bᵀx` subject to `row_k(x) = target_k`.
pub fn solve_equality_qp(
    a: &SymmetricSparseMatrix,
    b: &[f64],
    rows: &[&SparseRow],
    targets: &[f64],
    config: &SolverConfig,
) -> Result<EqualityQpSolution> {
    if rows.len() != targets.len() {
        return Err(Error::InvalidArgument("one target per row required".into()));
    }
    if rows.len() > config.schur_max_rows {
        return saddle_solve(a, b, rows, targets);
    }
    let solver = SpdSolver::new(a, config);
    let x0 = solver.solve(b)?;
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| solver.solve(&r.to_dense(a.dim())))
        .collect::<Result<_>>()?;
    let zr: Vec<&[f64]> = z.iter().map(|v| v.as_slice()).collect();
    schur_combine(&x0, &zr, rows, targets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundStatus {
    Inactive,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViSolution {
    pub y: Vec<f64>,
    pub mu: f64,
    /// One entry in the integral case, one per element in the pointwise case.
    pub lambda: Vec<f64>,
    pub active_state: bool,
    /// Same layout as `lambda`.
    pub control_status: Vec<BoundStatus>,
    pub iterations: usize,
    pub schur_condition: Option<f64>,
}

impl ViSolution {
    /// Short text form of the control multiplier for tabular output.
    pub fn lambda_summary(&self) -> String {
        if self.lambda.len() == 1 {
            return format!("{:e}", self.lambda[0]);
        }
        let lower = self.control_status.iter().filter(|s| **s == BoundStatus::Lower).count();
        let upper = self.control_status.iter().filter(|s| **s == BoundStatus::Upper).count();
        format!("max|l|={:e};lower={lower};upper={upper}", norm_inf(&self.lambda))
    }
}

/// `½ yᵀ A y - bᵀ y`.
pub fn discrete_objective(a: &SymmetricSparseMatrix, b: &[f64], y: &[f64]) -> f64 {
    0.5 * a.quadratic_form(y) - dot(b, y)
}

fn rel_scale(v: f64) -> f64 {
    1.0 + v.abs()
}

/// Integral control case: exact enumeration of the four candidate active sets.
pub fn solve_case_i(
    a: &SymmetricSparseMatrix,
    b: &[f64],
    cs: &ConstraintSet,
    config: &SolverConfig,
) -> Result<ViSolution> {
    config.validate()?;
    let ControlConstraints::Integral { row: c_row, bound: c_bound } = &cs.control else {
        return Err(Error::ConstraintCase("integral control constraint expected"));
    };
    let solver = SpdSolver::new(a, config);
    let n = a.dim();
    let x0 = solver.solve(b)?;
    let zs = solver.solve(&cs.state_row.to_dense(n))?;
    let zc = solver.solve(&c_row.to_dense(n))?;
    let tol = config.complementarity_tolerance;
    let rows = [&cs.state_row, c_row];
    let bounds = [cs.state_bound, *c_bound];
    let z = [zs.as_slice(), zc.as_slice()];
    let candidates: [&[usize]; 4] = [&[], &[0], &[1], &[0, 1]];
    for (ci, active) in candidates.iter().enumerate() {
        let ar: Vec<&SparseRow> = active.iter().map(|&k| rows[k]).collect();
        let at: Vec<f64> = active.iter().map(|&k| bounds[k]).collect();
        let az: Vec<&[f64]> = active.iter().map(|&k| z[k]).collect();
        let sol = match schur_combine(&x0, &az, &ar, &at) {
            Ok(s) => s,
            Err(Error::SingularSchur) => continue,
            Err(e) => return Err(e),
        };
        let mut nu = [0.0; 2];
        for (j, &k) in active.iter().enumerate() {
            nu[k] = sol.multipliers[j];
        }
        let nu_scale = rel_scale(nu[0].abs().max(nu[1].abs()));
        let signs_ok = nu.iter().all(|&v| v >= -tol * nu_scale);
        let feasible = (0..2).all(|k| {
            let scale = rel_scale(bounds[k]).max(rows[k].norm_inf() * norm_inf(&sol.x));
            rows[k].apply(&sol.x) >= bounds[k] - tol * scale
        });
        trace!("candidate {ci}: nu = {nu:?}, signs_ok = {signs_ok}, feasible = {feasible}");
        if signs_ok && feasible {
            return Ok(ViSolution {
                y: sol.x,
                mu: nu[0].max(0.0),
                lambda: vec![nu[1].max(0.0)],
                active_state: active.contains(&0),
                control_status: vec![if active.contains(&1) {
                    BoundStatus::Lower
                } else {
                    BoundStatus::Inactive
                }],
                iterations: ci + 1,
                schur_condition: sol.schur_condition,
            });
        }
    }
    Err(Error::NoFeasibleCandidate)
}

/// Equality-QP solves for the active-set iteration, caching `A⁻¹ row` per row id.
struct PinnedSolver<'s, 'a> {
    solver: &'s SpdSolver<'a>,
    b: &'s [f64],
    x0: Vec<f64>,
    cache: HashMap<usize, Vec<f64>>,
    schur_max_rows: usize,
}

impl PinnedSolver<'_, '_> {
    fn solve(&mut self, ids: &[usize], rows: &[&SparseRow], targets: &[f64]) -> Result<EqualityQpSolution> {
        if rows.len() > self.schur_max_rows {
            return saddle_solve(self.solver.matrix(), self.b, rows, targets);
        }
        if self.cache.len() > 8 * self.schur_max_rows {
            self.cache.clear();
        }
        let n = self.solver.dim();
        for (&id, row) in ids.iter().zip(rows) {
            if !self.cache.contains_key(&id) {
                let z = self.solver.solve(&row.to_dense(n))?;
                self.cache.insert(id, z);
            }
        }
        let z: Vec<&[f64]> = ids.iter().map(|id| self.cache[id].as_slice()).collect();
        schur_combine(&self.x0, &z, rows, targets)
    }
}

/// Pointwise control case: primal-dual active sets on the element boxes,
/// with the scalar state constraint enumerated outside (inactive, then active).
pub fn solve_case_ii(
    a: &SymmetricSparseMatrix,
    b: &[f64],
    cs: &ConstraintSet,
    config: &SolverConfig,
) -> Result<ViSolution> {
    config.validate()?;
    let ControlConstraints::Pointwise { rows, lower, upper } = &cs.control else {
        return Err(Error::ConstraintCase("pointwise control constraints expected"));
    };
    let solver = SpdSolver::new(a, config);
    let x0 = solver.solve(b)?;
    let mut pinned = PinnedSolver {
        solver: &solver,
        b,
        x0,
        cache: HashMap::new(),
        schur_max_rows: config.schur_max_rows,
    };
    let tol = config.complementarity_tolerance;
    let first = pdas(&mut pinned, cs, rows, lower, upper, false, config)?;
    let s_val = cs.state_row.apply(&first.y);
    let scale = rel_scale(cs.state_bound).max(cs.state_row.norm_inf() * norm_inf(&first.y));
    if s_val >= cs.state_bound - tol * scale {
        return Ok(first);
    }
    debug!("state constraint violated by {:.3e}; pinning it", cs.state_bound - s_val);
    let mut second = pdas(&mut pinned, cs, rows, lower, upper, true, config)?;
    second.iterations += first.iterations;
    if second.mu < -tol * rel_scale(second.mu) {
        return Err(Error::NoFeasibleCandidate);
    }
    second.mu = second.mu.max(0.0);
    Ok(second)
}

const STATE_ID: usize = usize::MAX;

fn pdas(
    pinned: &mut PinnedSolver<'_, '_>,
    cs: &ConstraintSet,
    rows: &[SparseRow],
    lower: &[f64],
    upper: &[f64],
    state_active: bool,
    config: &SolverConfig,
) -> Result<ViSolution> {
    let nt = rows.len();
    let c = config.pdas_c;
    let mut status = vec![BoundStatus::Inactive; nt];
    let mut lambda = vec![0.0; nt];
    let mut history: Vec<Vec<BoundStatus>> = Vec::new();
    let mut current = solve_pinned(pinned, cs, rows, lower, upper, &status, state_active)?;
    for (t, l) in lambda.iter_mut().enumerate() {
        *l = current.1[t];
    }
    for it in 1..=config.pdas_max_iterations {
        let y = &current.0.x;
        let next: Vec<BoundStatus> = (0..nt)
            .map(|t| {
                let g = rows[t].apply(y);
                let area = cs.element_areas[t];
                if lambda[t] + c * (lower[t] - g) / area > 0.0 {
                    BoundStatus::Lower
                } else if lambda[t] + c * (upper[t] - g) / area < 0.0 {
                    BoundStatus::Upper
                } else {
                    BoundStatus::Inactive
                }
            })
            .collect();
        let (nl, nu) = (
            next.iter().filter(|s| **s == BoundStatus::Lower).count(),
            next.iter().filter(|s| **s == BoundStatus::Upper).count(),
        );
        trace!("pdas iteration {it}: |lower| = {nl}, |upper| = {nu}");
        if next == status {
            let (sol, lam, mu) = current;
            return Ok(ViSolution {
                y: sol.x,
                mu,
                lambda: lam,
                active_state: state_active,
                control_status: status,
                iterations: it,
                schur_condition: sol.schur_condition,
            });
        }
        if history.contains(&next) {
            return Err(Error::PdasCycling(it));
        }
        history.push(std::mem::replace(&mut status, next));
        current = solve_pinned(pinned, cs, rows, lower, upper, &status, state_active)?;
        lambda.clone_from(&current.1);
    }
    Err(Error::PdasMaxIterations(config.pdas_max_iterations))
}

/// Solves with the given element rows (and optionally the state row) pinned;
/// returns the solution, per-element multipliers and the state multiplier.
fn solve_pinned(
    pinned: &mut PinnedSolver<'_, '_>,
    cs: &ConstraintSet,
    rows: &[SparseRow],
    lower: &[f64],
    upper: &[f64],
    status: &[BoundStatus],
    state_active: bool,
) -> Result<(EqualityQpSolution, Vec<f64>, f64)> {
    let mut ids = Vec::new();
    let mut active_rows = Vec::new();
    let mut targets = Vec::new();
    if state_active {
        ids.push(STATE_ID);
        active_rows.push(&cs.state_row);
        targets.push(cs.state_bound);
    }
    for (t, s) in status.iter().enumerate() {
        let target = match s {
            BoundStatus::Lower => lower[t],
            BoundStatus::Upper => upper[t],
            BoundStatus::Inactive => continue,
        };
        ids.push(t);
        active_rows.push(&rows[t]);
        targets.push(target);
    }
    let sol = pinned.solve(&ids, &active_rows, &targets)?;
    let mut lambda = vec![0.0; rows.len()];
    let mut mu = 0.0;
    for (&id, &m) in ids.iter().zip(&sol.multipliers) {
        if id == STATE_ID {
            mu = m;
        } else {
            lambda[id] = m;
        }
    }
    Ok((sol, lambda, mu))
}

/// Dispatches on the constraint case.
pub fn solve(a: &SymmetricSparseMatrix, b: &[f64], cs: &ConstraintSet, config: &SolverConfig) -> Result<ViSolution> {
    if cs.is_pointwise() {
        solve_case_ii(a, b, cs, config)
    } else {
        solve_case_i(a, b, cs, config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    /// `‖A y - b - μ s - Σ λ c‖∞` over the largest sup-norm among the four
    /// terms (floored at 1).
    pub stationarity: f64,
    /// Largest primal or multiplier-sign violation, relative to `1 + |bound|`.
    pub feasibility: f64,
    /// Largest `|multiplier · slack|`, relative to `(1 + |multiplier|)(1 + |bound|)`.
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }
}

pub fn kkt_residual(a: &SymmetricSparseMatrix, b: &[f64], cs: &ConstraintSet, sol: &ViSolution) -> KktResidual {
    let y = &sol.y;
    let ay = a.matvec(y);
    let mut r: Vec<f64> = ay.iter().zip(b).map(|(ay, bi)| ay - bi).collect();
    cs.state_row.add_to(-sol.mu, &mut r);
    let mut term_scale = norm_inf(&ay).max(norm_inf(b)).max(sol.mu.abs() * cs.state_row.norm_inf()).max(1.0);
    let mut feas = (-sol.mu).max(0.0) / rel_scale(sol.mu);
    let slack = cs.state_row.apply(y) - cs.state_bound;
    feas = feas.max((-slack).max(0.0) / rel_scale(cs.state_bound));
    let mut comp = (sol.mu * slack).abs() / (rel_scale(sol.mu) * rel_scale(cs.state_bound));
    match &cs.control {
        ControlConstraints::Integral { row, bound } => {
            let lam = sol.lambda.first().copied().unwrap_or(0.0);
            row.add_to(-lam, &mut r);
            term_scale = term_scale.max(lam.abs() * row.norm_inf());
            let slack = row.apply(y) - bound;
            feas = feas.max((-slack).max(0.0) / rel_scale(*bound));
            feas = feas.max((-lam).max(0.0) / rel_scale(lam));
            comp = comp.max((lam * slack).abs() / (rel_scale(lam) * rel_scale(*bound)));
        }
        ControlConstraints::Pointwise { rows, lower, upper } => {
            for (t, row) in rows.iter().enumerate() {
                let lam = sol.lambda.get(t).copied().unwrap_or(0.0);
                row.add_to(-lam, &mut r);
                term_scale = term_scale.max(lam.abs() * row.norm_inf());
                let g = row.apply(y);
                let scale = rel_scale(lower[t]).max(rel_scale(upper[t]));
                feas = feas.max((lower[t] - g).max(0.0) / scale).max((g - upper[t]).max(0.0) / scale);
                let gap = if lam > 0.0 {
                    g - lower[t]
                } else if lam < 0.0 {
                    upper[t] - g
                } else {
                    0.0
                };
                comp = comp.max((lam * gap).abs() / (rel_scale(lam) * scale));
            }
        }
    }
    KktResidual {
        stationarity: norm_inf(&r) / term_scale,
        feasibility: feas,
        complementarity: comp,
    }
}
