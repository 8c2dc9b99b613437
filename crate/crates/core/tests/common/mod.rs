//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls the library's basis, quadrature, estimator or solver
//! code; only meshes, DOF numbering and data closures are taken from it.

#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use morley_ocp::element::space::{FeSpace, SmoothFunction};
use morley_ocp::mesh::{bisect, initial_mesh, Domain, Mesh, Point2};

/// Random NVB mesh of a random rectangle with at most `max_elements` elements.
pub fn random_mesh(seed: u64, max_elements: usize) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x0, y0) = (rng.gen_range(-1.0..0.5), rng.gen_range(-1.0..0.5));
    let mut m = initial_mesh(Domain::new(x0, y0, x0 + rng.gen_range(0.7..2.0), y0 + rng.gen_range(0.7..2.0)), 1).unwrap();
    loop {
        let t = rng.gen_range(0..m.num_elements());
        let next = bisect(&m, &[t]).unwrap();
        if next.num_elements() > max_elements {
            return m;
        }
        m = next;
    }
}

const GL5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Three-point Gauss rule on `[0, 1]`, weights summing to one.
pub const GAUSS3: [(f64, f64); 3] = [
    (0.5 - 0.387_298_334_620_741_7, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.5 + 0.387_298_334_620_741_7, 5.0 / 18.0),
];

/// Collapsed 5x5 Gauss rule on the reference triangle: reference coordinates
/// and weights summing to one. Exact for total degree 8.
pub fn triangle_rule() -> Vec<([f64; 2], f64)> {
    let mut out = Vec::with_capacity(25);
    for &(tu, wu) in &GL5 {
        let u = 0.5 * (1.0 + tu);
        for &(tv, wv) in &GL5 {
            let v = 0.5 * (1.0 + tv);
            out.push(([u, v * (1.0 - u)], 2.0 * 0.25 * wu * wv * (1.0 - u)));
        }
    }
    out
}

/// Local P2 ⊕ bubble basis built from scaled monomials and the DOF matrix.
pub struct OracleElement {
    pub p: [Point2; 3],
    pub area: f64,
    pub diameter: f64,
    det: f64,
    centre: Point2,
    /// Column j holds the raw-basis coefficients of nodal function j.
    coef: DMatrix<f64>,
}

impl OracleElement {
    pub fn new(mesh: &Mesh, t: usize) -> Self {
        let v = mesh.elements[t].vertices;
        let p = [mesh.vertices[v[0]], mesh.vertices[v[1]], mesh.vertices[v[2]]];
        let det = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y);
        let len = |a: Point2, b: Point2| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
        let diameter = len(p[0], p[1]).max(len(p[1], p[2])).max(len(p[2], p[0]));
        let centre = Point2::new((p[0].x + p[1].x + p[2].x) / 3.0, (p[0].y + p[1].y + p[2].y) / 3.0);
        let mut el = OracleElement {
            p,
            area: 0.5 * det.abs(),
            diameter,
            det,
            centre,
            coef: DMatrix::identity(7, 7),
        };
        let mut m = DMatrix::<f64>::zeros(7, 7);
        for k in 0..7 {
            for i in 0..3 {
                m[(i, k)] = el.raw(k, p[i]).0;
            }
            for j in 0..3 {
                let (a, b) = (p[(j + 1) % 3], p[(j + 2) % 3]);
                let (ga, gb) = (v[(j + 1) % 3], v[(j + 2) % 3]);
                let (lo, hi) = if ga < gb { (a, b) } else { (b, a) };
                let l = len(lo, hi);
                let n = [-(hi.y - lo.y) / l, (hi.x - lo.x) / l];
                m[(3 + j, k)] = GAUSS3
                    .iter()
                    .map(|&(s, w)| {
                        let g = el.raw(k, Point2::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y))).1;
                        w * (g[0] * n[0] + g[1] * n[1])
                    })
                    .sum();
            }
            m[(6, k)] = el.integrate(|x| el.raw(k, x).0) / el.area;
        }
        el.coef = m.try_inverse().expect("oracle DOF matrix");
        el
    }

    pub fn point(&self, r: [f64; 2]) -> Point2 {
        let p = &self.p;
        Point2::new(
            p[0].x + r[0] * (p[1].x - p[0].x) + r[1] * (p[2].x - p[0].x),
            p[0].y + r[0] * (p[1].y - p[0].y) + r[1] * (p[2].y - p[0].y),
        )
    }

    /// `∫_T g` with the collapsed rule.
    pub fn integrate(&self, g: impl Fn(Point2) -> f64) -> f64 {
        self.area * triangle_rule().iter().map(|&(r, w)| w * g(self.point(r))).sum::<f64>()
    }

    fn bary(&self, x: Point2) -> [f64; 3] {
        let p = &self.p;
        let l1 = ((x.x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (x.y - p[0].y)) / self.det;
        let l2 = ((p[1].x - p[0].x) * (x.y - p[0].y) - (x.x - p[0].x) * (p[1].y - p[0].y)) / self.det;
        [1.0 - l1 - l2, l1, l2]
    }

    fn bary_gradients(&self) -> [[f64; 2]; 3] {
        let p = &self.p;
        let g1 = [(p[2].y - p[0].y) / self.det, -(p[2].x - p[0].x) / self.det];
        let g2 = [-(p[1].y - p[0].y) / self.det, (p[1].x - p[0].x) / self.det];
        [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2]
    }

    /// Raw function `k`: value, gradient, Hessian `(xx, xy, yy)`.
    fn raw(&self, k: usize, x: Point2) -> (f64, [f64; 2], [f64; 3]) {
        let h = self.diameter;
        let sx = (x.x - self.centre.x) / h;
        let sy = (x.y - self.centre.y) / h;
        let h2 = h * h;
        match k {
            0 => (1.0, [0.0, 0.0], [0.0; 3]),
            1 => (sx, [1.0 / h, 0.0], [0.0; 3]),
            2 => (sy, [0.0, 1.0 / h], [0.0; 3]),
            3 => (sx * sx, [2.0 * sx / h, 0.0], [2.0 / h2, 0.0, 0.0]),
            4 => (sx * sy, [sy / h, sx / h], [0.0, 1.0 / h2, 0.0]),
            5 => (sy * sy, [0.0, 2.0 * sy / h], [0.0, 0.0, 2.0 / h2]),
            _ => {
                let l = self.bary(x);
                let g = self.bary_gradients();
                let pair = |i: usize, j: usize, r: usize, c: usize| g[i][r] * g[j][c] + g[j][r] * g[i][c];
                let mut grad = [0.0; 2];
                for r in 0..2 {
                    grad[r] = 60.0 * (g[0][r] * l[1] * l[2] + l[0] * g[1][r] * l[2] + l[0] * l[1] * g[2][r]);
                }
                let hs = |r: usize, c: usize| 60.0 * (l[0] * pair(1, 2, r, c) + l[1] * pair(0, 2, r, c) + l[2] * pair(0, 1, r, c));
                (60.0 * l[0] * l[1] * l[2], grad, [hs(0, 0), hs(0, 1), hs(1, 1)])
            }
        }
    }

    /// Nodal basis function `j` at `x`.
    pub fn basis(&self, j: usize, x: Point2) -> (f64, [f64; 2], [f64; 3]) {
        let mut out = (0.0, [0.0; 2], [0.0; 3]);
        for k in 0..7 {
            let c = self.coef[(k, j)];
            let (v, g, h) = self.raw(k, x);
            out.0 += c * v;
            for r in 0..2 {
                out.1[r] += c * g[r];
            }
            for r in 0..3 {
                out.2[r] += c * h[r];
            }
        }
        out
    }

    pub fn eval(&self, local: &[f64; 7], x: Point2) -> (f64, [f64; 2], [f64; 3]) {
        let mut out = (0.0, [0.0; 2], [0.0; 3]);
        for (j, &c) in local.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let (v, g, h) = self.basis(j, x);
            out.0 += c * v;
            for r in 0..2 {
                out.1[r] += c * g[r];
            }
            for r in 0..3 {
                out.2[r] += c * h[r];
            }
        }
        out
    }
}

pub fn local_values(space: &FeSpace, y: &[f64], t: usize) -> [f64; 7] {
    let mut c = [0.0; 7];
    for (k, d) in space.element_dofs(t).iter().enumerate() {
        if let Some(d) = d {
            c[k] = y[*d];
        }
    }
    c
}

/// Dense `β Σ ∫ D²φ_i : D²φ_j + ∫ φ_i φ_j`.
pub fn oracle_matrix(space: &FeSpace, beta: f64) -> DMatrix<f64> {
    let n = space.num_dofs();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for t in 0..space.mesh.num_elements() {
        let el = OracleElement::new(&space.mesh, t);
        let dofs = space.element_dofs(t);
        for (r, w) in triangle_rule() {
            let x = el.point(r);
            let vals: Vec<_> = (0..7).map(|j| el.basis(j, x)).collect();
            for i in 0..7 {
                for j in 0..7 {
                    if let (Some(gi), Some(gj)) = (dofs[i], dofs[j]) {
                        let (vi, _, hi) = vals[i];
                        let (vj, _, hj) = vals[j];
                        let hh = hi[0] * hj[0] + 2.0 * hi[1] * hj[1] + hi[2] * hj[2];
                        a[(gi, gj)] += w * el.area * (beta * hh + vi * vj);
                    }
                }
            }
        }
    }
    a
}

pub struct OracleEstimate {
    pub eta1: Vec<f64>,
    pub eta5: Vec<f64>,
    /// Squared `(η2, η3, η4)` keyed by sorted global endpoint pair.
    pub edges: HashMap<(usize, usize), [f64; 3]>,
}

/// Brute-force residual estimator. `rhs(x)` is `y_d(x) - βΔf(x)`;
/// `lambda` is one scalar or one value per element; `weighted` selects
/// `h²|T|λ²` over `h²λ²`.
pub fn oracle_estimator(
    space: &FeSpace,
    y: &[f64],
    mu: f64,
    lambda: &[f64],
    beta: f64,
    rhs: &dyn Fn(Point2) -> f64,
    weighted: bool,
) -> OracleEstimate {
    let mesh = &space.mesh;
    let nt = mesh.num_elements();
    let els: Vec<OracleElement> = (0..nt).map(|t| OracleElement::new(mesh, t)).collect();
    let locals: Vec<[f64; 7]> = (0..nt).map(|t| local_values(space, y, t)).collect();
    let mut eta1 = Vec::with_capacity(nt);
    let mut eta5 = Vec::with_capacity(nt);
    for t in 0..nt {
        let el = &els[t];
        let r2 = el.integrate(|x| {
            let r = rhs(x) + mu - el.eval(&locals[t], x).0;
            r * r
        });
        eta1.push(el.diameter.powi(4) * r2 / beta);
        let lam = if lambda.len() == 1 { lambda[0] } else { lambda[t] };
        let w = if weighted { el.area } else { 1.0 };
        eta5.push(el.diameter.powi(2) * w * lam * lam / beta);
    }
    // element pairs sharing two vertices
    let mut edges = HashMap::new();
    for t in 0..nt {
        for s in t + 1..nt {
            let vt = mesh.elements[t].vertices;
            let vs = mesh.elements[s].vertices;
            let shared: Vec<usize> = vt.iter().copied().filter(|v| vs.contains(v)).collect();
            if shared.len() != 2 {
                continue;
            }
            let (a, b) = (mesh.vertices[shared[0]], mesh.vertices[shared[1]]);
            let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
            let n = [(b.y - a.y) / len, -(b.x - a.x) / len];
            let (mut i2, mut i3) = (0.0, 0.0);
            for &(q, w) in &GAUSS3 {
                let x = Point2::new(a.x + q * (b.x - a.x), a.y + q * (b.y - a.y));
                let (_, gt, ht) = els[t].eval(&locals[t], x);
                let (_, gs, hs) = els[s].eval(&locals[s], x);
                let dn = (gt[0] - gs[0]) * n[0] + (gt[1] - gs[1]) * n[1];
                let nn = |h: [f64; 3]| h[0] * n[0] * n[0] + 2.0 * h[1] * n[0] * n[1] + h[2] * n[1] * n[1];
                let dnn = nn(ht) - nn(hs);
                i2 += w * len * dn * dn;
                i3 += w * len * dnn * dnn;
            }
            let jt = laplacian_gradient(&els[t], &locals[t]);
            let js = laplacian_gradient(&els[s], &locals[s]);
            let j4 = (jt[0] - js[0]) * n[0] + (jt[1] - js[1]) * n[1];
            let key = (shared[0].min(shared[1]), shared[0].max(shared[1]));
            edges.insert(
                key,
                [beta * i2 / len, beta * len * i3, beta * len.powi(3) * len * j4 * j4],
            );
        }
    }
    OracleEstimate { eta1, eta5, edges }
}

/// `∇Δy` on an element from the affine Laplacian at its vertices.
fn laplacian_gradient(el: &OracleElement, local: &[f64; 7]) -> [f64; 2] {
    let lap: Vec<f64> = el
        .p
        .iter()
        .map(|&x| {
            let h = el.eval(local, x).2;
            h[0] + h[2]
        })
        .collect();
    let m = nalgebra::Matrix2::new(
        el.p[1].x - el.p[0].x,
        el.p[1].y - el.p[0].y,
        el.p[2].x - el.p[0].x,
        el.p[2].y - el.p[0].y,
    );
    let g = m.lu().solve(&nalgebra::Vector2::new(lap[1] - lap[0], lap[2] - lap[0])).unwrap();
    [g[0], g[1]]
}

/// One inequality `row · y ≥ bound` (`upper == false`) or `row · y ≤ bound`.
#[derive(Clone)]
pub struct Inequality {
    pub row: DVector<f64>,
    pub bound: f64,
    pub upper: bool,
}

/// Dense equality-constrained QP: minimise `½yᵀAy - bᵀy` with the given
/// rows held at their bounds. Returns `y` and one signed multiplier per row
/// in the convention `A y = b + Σ m_k row_k`.
pub fn dense_equality_qp(a: &DMatrix<f64>, b: &DVector<f64>, rows: &[(DVector<f64>, f64)]) -> Option<(DVector<f64>, Vec<f64>)> {
    let n = a.nrows();
    let m = rows.len();
    let mut k = DMatrix::<f64>::zeros(n + m, n + m);
    let mut r = DVector::<f64>::zeros(n + m);
    k.view_mut((0, 0), (n, n)).copy_from(a);
    r.rows_mut(0, n).copy_from(b);
    for (j, (row, g)) in rows.iter().enumerate() {
        for i in 0..n {
            k[(i, n + j)] = -row[i];
            k[(n + j, i)] = -row[i];
        }
        r[n + j] = -g;
    }
    let sol = k.full_piv_lu().solve(&r)?;
    Some((sol.rows(0, n).into_owned(), (0..m).map(|j| sol[n + j]).collect()))
}

pub fn objective(a: &DMatrix<f64>, b: &DVector<f64>, y: &DVector<f64>) -> f64 {
    0.5 * y.dot(&(a * y)) - b.dot(y)
}

/// Searches every assignment of each constraint group to one of its
/// statuses (index 0 = inactive) and returns the KKT point. Each group is a
/// list of inequalities of which at most one is active.
pub fn enumerate_active_sets(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    groups: &[Vec<Inequality>],
    tol: f64,
) -> Option<(DVector<f64>, Vec<f64>)> {
    let sizes: Vec<usize> = groups.iter().map(|g| g.len() + 1).collect();
    let total: usize = sizes.iter().product();
    let mut best: Option<(f64, DVector<f64>, Vec<f64>)> = None;
    for code in 0..total {
        let mut c = code;
        let choice: Vec<usize> = sizes
            .iter()
            .map(|&s| {
                let v = c % s;
                c /= s;
                v
            })
            .collect();
        let active: Vec<&Inequality> = groups.iter().zip(&choice).filter(|(_, &k)| k > 0).map(|(g, &k)| &g[k - 1]).collect();
        let rows: Vec<(DVector<f64>, f64)> = active.iter().map(|q| (q.row.clone(), q.bound)).collect();
        let Some((y, mult)) = dense_equality_qp(a, b, &rows) else { continue };
        let scale = 1.0 + y.amax();
        let signs_ok = active.iter().zip(&mult).all(|(q, &m)| if q.upper { m <= tol * (1.0 + m.abs()) } else { m >= -tol * (1.0 + m.abs()) });
        let feasible = groups.iter().flatten().all(|q| {
            let v = q.row.dot(&y);
            if q.upper {
                v <= q.bound + tol * scale * (1.0 + q.bound.abs())
            } else {
                v >= q.bound - tol * scale * (1.0 + q.bound.abs())
            }
        });
        if !(signs_ok && feasible) {
            continue;
        }
        let mut per_group = vec![0.0; groups.len()];
        let mut it = mult.iter();
        for (g, &k) in choice.iter().enumerate() {
            if k > 0 {
                per_group[g] = *it.next().unwrap();
            }
        }
        let f = objective(a, b, &y);
        if best.as_ref().is_none_or(|(bf, _, _)| f < *bf) {
            best = Some((f, y, per_group));
        }
    }
    best.map(|(_, y, m)| (y, m))
}

/// Projected gradient ascent on the dual of `min ½yᵀAy - bᵀy` subject to
/// `R y ≥ g`, run in the reduced multiplier space.
pub fn projected_gradient_dual(a: &DMatrix<f64>, b: &DVector<f64>, rows: &[(DVector<f64>, f64)]) -> (DVector<f64>, Vec<f64>) {
    let chol = a.clone().cholesky().expect("SPD");
    let ainv_b = chol.solve(b);
    let ainv_r: Vec<DVector<f64>> = rows.iter().map(|(r, _)| chol.solve(r)).collect();
    let m = rows.len();
    let s = DMatrix::from_fn(m, m, |i, j| rows[i].0.dot(&ainv_r[j]));
    let r0 = DVector::from_iterator(m, rows.iter().map(|(r, _)| r.dot(&ainv_b)));
    let g = DVector::from_iterator(m, rows.iter().map(|(_, g)| *g));
    let step = 1.0 / s.symmetric_eigenvalues().amax();
    let mut mult = DVector::<f64>::zeros(m);
    for _ in 0..2_000_000 {
        let grad = &g - &r0 - &s * &mult;
        let next = (&mult + grad * step).map(|v| v.max(0.0));
        let change = (&next - &mult).amax();
        mult = next;
        if change <= 1e-16 * (1.0 + mult.amax()) {
            break;
        }
    }
    let mut y = ainv_b;
    for (k, v) in ainv_r.iter().enumerate() {
        y += v * mult[k];
    }
    (y, mult.iter().copied().collect())
}

/// Polynomial `Σ c x^i y^j` with exact derivatives.
#[derive(Debug, Clone, Default)]
pub struct Poly(pub Vec<(f64, i32, i32)>);

impl Poly {
    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Vec::new();
        for &(c, i, j) in &self.0 {
            for &(d, k, l) in &other.0 {
                out.push((c * d, i + k, j + l));
            }
        }
        Poly(out)
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|&(c, i, j)| (s * c, i, j)).collect())
    }

    pub fn laplacian_poly(&self) -> Poly {
        let mut out = Vec::new();
        for &(c, i, j) in &self.0 {
            if i >= 2 {
                out.push((c * (i * (i - 1)) as f64, i - 2, j));
            }
            if j >= 2 {
                out.push((c * (j * (j - 1)) as f64, i, j - 2));
            }
        }
        Poly(out)
    }

    /// Exact integral over `[0, 1]²`.
    pub fn unit_square_integral(&self) -> f64 {
        self.0.iter().map(|&(c, i, j)| c / ((i + 1) as f64 * (j + 1) as f64)).sum()
    }
}

fn mono(x: f64, i: i32) -> f64 {
    if i < 0 {
        0.0
    } else {
        x.powi(i)
    }
}

impl SmoothFunction for Poly {
    fn value(&self, p: Point2) -> f64 {
        self.0.iter().map(|&(c, i, j)| c * mono(p.x, i) * mono(p.y, j)).sum()
    }
    fn gradient(&self, p: Point2) -> [f64; 2] {
        let mut g = [0.0; 2];
        for &(c, i, j) in &self.0 {
            g[0] += c * i as f64 * mono(p.x, i - 1) * mono(p.y, j);
            g[1] += c * j as f64 * mono(p.x, i) * mono(p.y, j - 1);
        }
        g
    }
    fn hessian(&self, p: Point2) -> [[f64; 2]; 2] {
        let mut h = [[0.0; 2]; 2];
        for &(c, i, j) in &self.0 {
            let (fi, fj) = (i as f64, j as f64);
            h[0][0] += c * fi * (fi - 1.0) * mono(p.x, i - 2) * mono(p.y, j);
            h[0][1] += c * fi * fj * mono(p.x, i - 1) * mono(p.y, j - 1);
            h[1][1] += c * fj * (fj - 1.0) * mono(p.x, i) * mono(p.y, j - 2);
        }
        h[1][0] = h[0][1];
        h
    }
}

/// `x(1-x)y(1-y)`, vanishing on the unit square's boundary.
pub fn square_bubble() -> Poly {
    Poly(vec![(1.0, 1, 1), (-1.0, 2, 1), (-1.0, 1, 2), (1.0, 2, 2)])
}

/// Five smooth test functions vanishing on `∂(0,1)²`, all of degree ≤ 8.
pub fn test_polynomials() -> Vec<Poly> {
    let b = square_bubble();
    vec![
        b.clone(),
        b.mul(&Poly(vec![(1.0, 1, 0)])),
        b.mul(&Poly(vec![(1.0, 2, 0), (1.0, 0, 1)])).scale(3.0),
        b.mul(&Poly(vec![(2.0, 2, 2), (-1.0, 0, 0)])),
        b.mul(&b).scale(40.0),
    ]
}
