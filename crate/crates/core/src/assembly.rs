//! Global system assembly: the discrete energy matrix, the load vector and the
//! constraint functionals.

use std::fmt::Write as _;

use faer::sparse::{SparseColMat, Triplet};

use crate::element::quadrature::cached_triangle_rule;
use crate::element::space::{FeFunction, FeSpace, SmoothFunction};
use crate::element::{frobenius, trace, LOCAL_DOFS};
use crate::error::{Error, Result};
use crate::problems::{ConstraintData, ProblemSpec};

/// Quadrature degree for the mass and Hessian Gram blocks (exact on P3 ⊕ bubble).
pub const MATRIX_DEGREE: usize = 6;
/// Quadrature degree for integrals of problem data.
pub const DATA_DEGREE: usize = 10;

/// Symmetric matrix in compressed sparse column form with both triangles stored.
#[derive(Debug, Clone)]
pub struct SymmetricSparseMatrix {
    inner: SparseColMat<usize, f64>,
}

impl SymmetricSparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed in a fixed order.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        triplets.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut merged: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::InvalidArgument(format!("entry ({r}, {c}) outside {dim}x{dim}")));
            }
            match merged.last_mut() {
                Some(t) if t.row == r && t.col == c => t.val += v,
                _ => merged.push(Triplet::new(r, c, v)),
            }
        }
        let inner = SparseColMat::try_new_from_triplets(dim, dim, &merged)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(SymmetricSparseMatrix { inner })
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.inner.compute_nnz()
    }

    pub fn as_faer(&self) -> &SparseColMat<usize, f64> {
        &self.inner
    }

    /// Column-wise traversal `(row, col, value)` in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let sym = self.inner.symbolic();
        let col_ptr = sym.col_ptr();
        let rows = sym.row_idx();
        let vals = self.inner.val();
        (0..self.dim()).flat_map(move |c| (col_ptr[c]..col_ptr[c + 1]).map(move |k| (rows[k], c, vals[k])))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        // symmetric, so the column sweep yields A x directly
        let mut out = vec![0.0; self.dim()];
        let sym = self.inner.symbolic();
        let (col_ptr, rows, vals) = (sym.col_ptr(), sym.row_idx(), self.inner.val());
        for (c, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in col_ptr[c]..col_ptr[c + 1] {
                acc += vals[k] * x[rows[k]];
            }
            *o = acc;
        }
        out
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim()];
        for (r, c, v) in self.entries() {
            if r == c {
                d[r] += v;
            }
        }
        d
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut m = vec![vec![0.0; n]; n];
        for (r, c, v) in self.entries() {
            m[r][c] += v;
        }
        m
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let d = self.to_dense();
        let scale = d.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for (r, c, v) in self.entries() {
            worst = worst.max((v - d[c][r]).abs());
        }
        worst / scale
    }

    /// Coordinate text dump, one `row col value` per line.
    pub fn to_coo_text(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.entries() {
            let _ = writeln!(s, "{r} {c} {v:.17e}");
        }
        s
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A linear functional stored as a dense vector over the DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFunctional {
    pub values: Vec<f64>,
}

impl LinearFunctional {
    pub fn apply(&self, x: &[f64]) -> f64 {
        dot(&self.values, x)
    }
}

/// A functional touching few DOFs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn apply(&self, x: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&i, v)| v * x[i]).sum()
    }

    /// `out += s · row`.
    pub fn add_to(&self, s: f64, out: &mut [f64]) {
        for (&i, v) in self.indices.iter().zip(&self.values) {
            out[i] += s * v;
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut d = vec![0.0; n];
        self.add_to(1.0, &mut d);
        d
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlConstraints {
    /// `∫_Ω(-Δ_h w) ≥ bound`.
    Integral { row: SparseRow, bound: f64 },
    /// `lower[T] ≤ ∫_T(-Δ w) ≤ upper[T]` for every element.
    Pointwise { rows: Vec<SparseRow>, lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    /// `∫_Ω w ≥ state_bound`.
    pub state_row: SparseRow,
    pub state_bound: f64,
    pub control: ControlConstraints,
    pub element_areas: Vec<f64>,
}

impl ConstraintSet {
    pub fn is_pointwise(&self) -> bool {
        matches!(self.control, ControlConstraints::Pointwise { .. })
    }
}

fn element_control_row(space: &FeSpace, t: usize) -> SparseRow {
    let local = space.locals[t].control_row();
    let mut row = SparseRow::default();
    for (j, d) in space.element_dofs(t).iter().enumerate() {
        if let Some(d) = d {
            if local[j] != 0.0 {
                row.indices.push(*d);
                row.values.push(local[j]);
            }
        }
    }
    row
}

/// `∫_T g dx` by the data quadrature.
pub fn element_integral(space: &FeSpace, t: usize, g: &dyn SmoothFunction) -> f64 {
    let geom = &space.locals[t].geometry;
    let rule = cached_triangle_rule(DATA_DEGREE);
    geom.area * rule.iter().map(|(p, w)| w * g.value(geom.point(p))).sum::<f64>()
}

/// Element stiffness: `β ∫ D²φ_i : D²φ_j + ∫ φ_i φ_j`.
pub fn local_matrix(space: &FeSpace, t: usize, beta: f64) -> [[f64; LOCAL_DOFS]; LOCAL_DOFS] {
    let el = &space.locals[t];
    let area = el.geometry.area;
    let mut k = [[0.0; LOCAL_DOFS]; LOCAL_DOFS];
    for (p, w) in cached_triangle_rule(MATRIX_DEGREE).iter() {
        let b = el.basis(p);
        let wa = w * area;
        for i in 0..LOCAL_DOFS {
            for j in i..LOCAL_DOFS {
                k[i][j] += wa * (beta * frobenius(&b.hessians[i], &b.hessians[j]) + b.values[i] * b.values[j]);
            }
        }
    }
    for i in 0..LOCAL_DOFS {
        for j in 0..i {
            k[i][j] = k[j][i];
        }
    }
    k
}

/// Element load: `∫ y_d φ_i - β ∫ f Δφ_i`.
pub fn local_load(space: &FeSpace, t: usize, problem: &ProblemSpec) -> [f64; LOCAL_DOFS] {
    let el = &space.locals[t];
    let area = el.geometry.area;
    let mut out = [0.0; LOCAL_DOFS];
    for (p, w) in cached_triangle_rule(DATA_DEGREE).iter() {
        let x = el.geometry.point(p);
        let (yd, f) = (problem.desired_state.value(x), problem.source.value(x));
        let b = el.basis(p);
        for i in 0..LOCAL_DOFS {
            out[i] += w * area * (yd * b.values[i] - problem.beta * f * trace(&b.hessians[i]));
        }
    }
    out
}

/// The matrix `A_h` and load vector `b`, with boundary vertex values eliminated.
pub fn assemble_system(space: &FeSpace, problem: &ProblemSpec) -> Result<(SymmetricSparseMatrix, LinearFunctional)> {
    problem.validate()?;
    let n = space.num_dofs();
    let mut triplets = Vec::with_capacity(space.mesh.num_elements() * LOCAL_DOFS * LOCAL_DOFS);
    let mut rhs = vec![0.0; n];
    for t in 0..space.mesh.num_elements() {
        let dofs = space.element_dofs(t);
        let k = local_matrix(space, t, problem.beta);
        let f = local_load(space, t, problem);
        for i in 0..LOCAL_DOFS {
            let Some(gi) = dofs[i] else { continue };
            rhs[gi] += f[i];
            for j in 0..LOCAL_DOFS {
                if let Some(gj) = dofs[j] {
                    triplets.push((gi, gj, k[i][j]));
                }
            }
        }
    }
    Ok((SymmetricSparseMatrix::from_triplets(n, triplets)?, LinearFunctional { values: rhs }))
}

/// State row, control row(s) and bounds. Bounds on `-Δ_h y` are shifted by the
/// source integral since the control is `-Δy - f`.
pub fn assemble_constraints(space: &FeSpace, problem: &ProblemSpec) -> Result<ConstraintSet> {
    let mesh = &space.mesh;
    let nt = mesh.num_elements();
    let element_areas: Vec<f64> = space.locals.iter().map(|l| l.geometry.area).collect();
    let state_row = SparseRow {
        indices: space.dofmap.bubble_dofs.clone(),
        values: element_areas.clone(),
    };
    let source_integrals: Vec<f64> = (0..nt).map(|t| element_integral(space, t, problem.source.as_ref())).collect();
    let control = match &problem.constraints {
        ConstraintData::Integral { delta1, .. } => {
            // interior edges cancel between neighbours, leaving the boundary flux
            let mut row = SparseRow::default();
            for (e, edge) in mesh.edges.iter().enumerate() {
                if !edge.boundary {
                    continue;
                }
                let t = edge.first;
                let j = mesh.element_edges[t].iter().position(|&x| x == e).expect("edge of its element");
                row.indices.push(space.dofmap.edge_dofs[e]);
                row.values.push(-mesh.elements[t].edge_sign(j) * space.locals[t].geometry.edge_lengths[j]);
            }
            ControlConstraints::Integral {
                row,
                bound: delta1 + source_integrals.iter().sum::<f64>(),
            }
        }
        ConstraintData::Pointwise { lower, upper, .. } => {
            let rows = (0..nt).map(|t| element_control_row(space, t)).collect();
            let lo: Vec<f64> = (0..nt)
                .map(|t| element_integral(space, t, lower.as_ref()) + source_integrals[t])
                .collect();
            let hi: Vec<f64> = (0..nt)
                .map(|t| element_integral(space, t, upper.as_ref()) + source_integrals[t])
                .collect();
            if let Some(t) = (0..nt).find(|&t| lo[t] >= hi[t]) {
                return Err(Error::InvalidArgument(format!("empty control box on element {t}")));
            }
            ControlConstraints::Pointwise { rows, lower: lo, upper: hi }
        }
    };
    Ok(ConstraintSet {
        state_row,
        state_bound: problem.constraints.state_bound(),
        control,
        element_areas,
    })
}

/// Per-element control rows, whatever the constraint case.
pub fn element_control_rows(space: &FeSpace) -> Vec<SparseRow> {
    (0..space.mesh.num_elements()).map(|t| element_control_row(space, t)).collect()
}

/// `∫_Ω w_h` for a discrete function.
pub fn integral(space: &FeSpace, f: &FeFunction) -> f64 {
    space
        .dofmap
        .bubble_dofs
        .iter()
        .zip(&space.locals)
        .map(|(&d, l)| l.geometry.area * f.coefficients[d])
        .sum()
}
