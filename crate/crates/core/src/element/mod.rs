//! Local Morley + cubic bubble element.
//!
//! The local space is `P2 ⊕ span{b_T}` with `b_T = 60 λ0 λ1 λ2`. Its seven
//! degrees of freedom are, in local order:
//!
//! * `0..3`: values at the vertices,
//! * `3..6`: mean over local edge `j` of the derivative along the *global* edge
//!   normal,
//! * `6`: the element mean `Q_T`.
//!
//! The nodal basis is obtained by inverting the 7x7 matrix of these functionals
//! applied to a barycentric monomial basis.

pub mod quadrature;
pub mod space;

use nalgebra::SMatrix;

use crate::error::{Error, Result};
use crate::mesh::ElementGeometry;

pub use quadrature::QuadratureRule;
pub use space::{DofMap, FeFunction, FeSpace};

pub type Vec2 = [f64; 2];
/// Symmetric 2x2 tensor stored as a full matrix.
pub type Mat2 = [[f64; 2]; 2];

pub const LOCAL_DOFS: usize = 7;
pub const BUBBLE_SCALE: f64 = 60.0;

/// Values, gradients and Hessians of the seven local basis functions at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalBasis {
    pub values: [f64; LOCAL_DOFS],
    pub gradients: [Vec2; LOCAL_DOFS],
    pub hessians: [Mat2; LOCAL_DOFS],
}

/// Barycentric derivatives of one raw basis function.
#[derive(Debug, Clone, Copy, Default)]
struct RawJet {
    value: f64,
    d1: [f64; 3],
    d2: [[f64; 3]; 3],
}

/// Raw functions `λ0², λ1², λ2², λ1λ2, λ2λ0, λ0λ1, 60 λ0λ1λ2`.
fn raw_jets(l: [f64; 3]) -> [RawJet; LOCAL_DOFS] {
    let mut out = [RawJet::default(); LOCAL_DOFS];
    for i in 0..3 {
        out[i].value = l[i] * l[i];
        out[i].d1[i] = 2.0 * l[i];
        out[i].d2[i][i] = 2.0;
    }
    for i in 0..3 {
        let (a, b) = ((i + 1) % 3, (i + 2) % 3);
        let r = &mut out[3 + i];
        r.value = l[a] * l[b];
        r.d1[a] = l[b];
        r.d1[b] = l[a];
        r.d2[a][b] = 1.0;
        r.d2[b][a] = 1.0;
    }
    let r = &mut out[6];
    r.value = BUBBLE_SCALE * l[0] * l[1] * l[2];
    for i in 0..3 {
        let (a, b) = ((i + 1) % 3, (i + 2) % 3);
        r.d1[i] = BUBBLE_SCALE * l[a] * l[b];
        r.d2[a][b] = BUBBLE_SCALE * l[i];
        r.d2[b][a] = BUBBLE_SCALE * l[i];
    }
    out
}

fn to_physical(jet: &RawJet, grads: &[Vec2; 3]) -> (f64, Vec2, Mat2) {
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for i in 0..3 {
        for k in 0..2 {
            g[k] += jet.d1[i] * grads[i][k];
        }
        for j in 0..3 {
            let c = jet.d2[i][j];
            if c != 0.0 {
                for r in 0..2 {
                    for s in 0..2 {
                        h[r][s] += c * grads[i][r] * grads[j][s];
                    }
                }
            }
        }
    }
    (jet.value, g, h)
}

/// The cubic bubble `60 λ0 λ1 λ2` with its gradient and Hessian.
pub fn bubble(geom: &ElementGeometry, l: [f64; 3]) -> (f64, Vec2, Mat2) {
    to_physical(&raw_jets(l)[6], &geom.barycentric_gradients)
}

/// Local element data: geometry, the global normals used by the edge DOFs, and
/// the coefficients of the nodal basis in the raw basis.
#[derive(Debug, Clone)]
pub struct LocalElement {
    pub geometry: ElementGeometry,
    /// Global normal of each local edge.
    pub normals: [Vec2; 3],
    /// `+1` where the global normal is outward.
    pub signs: [f64; 3],
    /// `coefficients[k][j]`: weight of raw function `k` in nodal function `j`.
    coefficients: [[f64; LOCAL_DOFS]; LOCAL_DOFS],
}

impl LocalElement {
    /// `signs[j]` orients the outward normal of local edge `j` into the global one.
    pub fn new(geometry: ElementGeometry, signs: [f64; 3]) -> Result<Self> {
        let mut normals = [[0.0; 2]; 3];
        for j in 0..3 {
            normals[j] = [signs[j] * geometry.outward_normals[j][0], signs[j] * geometry.outward_normals[j][1]];
        }
        let dofs = raw_dof_matrix(&geometry, &normals);
        let inv = dofs.try_inverse().ok_or(Error::SingularElement(usize::MAX))?;
        let mut coefficients = [[0.0; LOCAL_DOFS]; LOCAL_DOFS];
        for (k, row) in coefficients.iter_mut().enumerate() {
            for (j, c) in row.iter_mut().enumerate() {
                *c = inv[(k, j)];
            }
        }
        if !geometry.area.is_finite() || geometry.area <= 0.0 {
            return Err(Error::SingularElement(usize::MAX));
        }
        Ok(LocalElement {
            geometry,
            normals,
            signs,
            coefficients,
        })
    }

    /// Nodal basis at barycentric point `l`.
    pub fn basis(&self, l: [f64; 3]) -> LocalBasis {
        let jets = raw_jets(l);
        let mut raw = [(0.0, [0.0; 2], [[0.0; 2]; 2]); LOCAL_DOFS];
        for (k, jet) in jets.iter().enumerate() {
            raw[k] = to_physical(jet, &self.geometry.barycentric_gradients);
        }
        let mut out = LocalBasis {
            values: [0.0; LOCAL_DOFS],
            gradients: [[0.0; 2]; LOCAL_DOFS],
            hessians: [[[0.0; 2]; 2]; LOCAL_DOFS],
        };
        for j in 0..LOCAL_DOFS {
            for (k, (v, g, h)) in raw.iter().enumerate() {
                let c = self.coefficients[k][j];
                if c == 0.0 {
                    continue;
                }
                out.values[j] += c * v;
                for r in 0..2 {
                    out.gradients[j][r] += c * g[r];
                    for s in 0..2 {
                        out.hessians[j][r][s] += c * h[r][s];
                    }
                }
            }
        }
        out
    }

    /// Value, gradient and Hessian of `Σ_j coeffs[j] φ_j` at `l`.
    pub fn combine(&self, coeffs: &[f64; LOCAL_DOFS], l: [f64; 3]) -> (f64, Vec2, Mat2) {
        let b = self.basis(l);
        let mut v = 0.0;
        let mut g = [0.0; 2];
        let mut h = [[0.0; 2]; 2];
        for j in 0..LOCAL_DOFS {
            let c = coeffs[j];
            v += c * b.values[j];
            g[0] += c * b.gradients[j][0];
            g[1] += c * b.gradients[j][1];
            for r in 0..2 {
                for s in 0..2 {
                    h[r][s] += c * b.hessians[j][r][s];
                }
            }
        }
        (v, g, h)
    }

    /// The seven DOF functionals applied to a local function given by its
    /// derivative jets at arbitrary barycentric points.
    pub fn apply_dofs<F>(&self, f: F) -> [f64; LOCAL_DOFS]
    where
        F: Fn([f64; 3]) -> (f64, Vec2),
    {
        apply_dofs(&self.normals, f)
    }

    /// `∫_T (-Δ φ_j) dx` for the nodal basis: only the edge DOFs contribute,
    /// with `-σ_j |e_j|` by the divergence theorem.
    pub fn control_row(&self) -> [f64; LOCAL_DOFS] {
        let mut row = [0.0; LOCAL_DOFS];
        for j in 0..3 {
            row[3 + j] = -self.signs[j] * self.geometry.edge_lengths[j];
        }
        row
    }
}

fn apply_dofs<F>(normals: &[Vec2; 3], f: F) -> [f64; LOCAL_DOFS]
where
    F: Fn([f64; 3]) -> (f64, Vec2),
{
    let mut out = [0.0; LOCAL_DOFS];
    for (i, o) in out.iter_mut().take(3).enumerate() {
        let mut l = [0.0; 3];
        l[i] = 1.0;
        *o = f(l).0;
    }
    let edge = quadrature::cached_edge_rule(5);
    for j in 0..3 {
        let (a, b) = ((j + 1) % 3, (j + 2) % 3);
        let mut acc = 0.0;
        for (p, w) in edge.iter() {
            let mut l = [0.0; 3];
            l[a] = p[0];
            l[b] = p[1];
            let g = f(l).1;
            acc += w * (g[0] * normals[j][0] + g[1] * normals[j][1]);
        }
        out[3 + j] = acc;
    }
    let tri = quadrature::cached_triangle_rule(4);
    out[6] = tri.iter().map(|(p, w)| w * f(p).0).sum();
    out
}

fn raw_dof_matrix(geom: &ElementGeometry, normals: &[Vec2; 3]) -> SMatrix<f64, LOCAL_DOFS, LOCAL_DOFS> {
    let mut m = SMatrix::<f64, LOCAL_DOFS, LOCAL_DOFS>::zeros();
    for k in 0..LOCAL_DOFS {
        let col = apply_dofs(normals, |l| {
            let (v, g, _) = to_physical(&raw_jets(l)[k], &geom.barycentric_gradients);
            (v, g)
        });
        for i in 0..LOCAL_DOFS {
            m[(i, k)] = col[i];
        }
    }
    m
}

pub fn trace(h: &Mat2) -> f64 {
    h[0][0] + h[1][1]
}

pub fn frobenius(a: &Mat2, b: &Mat2) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}
