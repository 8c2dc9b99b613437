//! Residual a posteriori estimator and true-error evaluation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::element::quadrature::{cached_edge_rule, cached_triangle_rule};
use crate::element::space::{FeFunction, FeSpace, SmoothFunction};
use crate::element::{trace, Mat2, Vec2};
use crate::problems::ProblemSpec;

/// Quadrature degree for element residuals and true errors.
pub const ERROR_DEGREE: usize = 8;
const RESIDUAL_DEGREE: usize = 10;

/// How the control multiplier enters the element term `η5_T²`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Eta5Form {
    /// `β⁻¹ h_T² λ_T²` with `λ_T` the multiplier value on `T`. Does not decay
    /// where the limit multiplier is nonzero.
    PointValue,
    /// `β⁻¹ h_T² ‖λ_h‖²_{L²(T)} = β⁻¹ h_T² |T| λ_T²`.
    #[default]
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorBreakdown {
    /// Squared element terms.
    pub eta1: Vec<f64>,
    pub eta5: Vec<f64>,
    /// Squared edge terms; zero on boundary edges.
    pub eta2: Vec<f64>,
    pub eta3: Vec<f64>,
    pub eta4: Vec<f64>,
    /// `η1_T² + η5_T² + ½ Σ_{interior e ⊂ ∂T} (η2_e² + η3_e² + η4_e²)`.
    pub element: Vec<f64>,
    /// Squared data oscillation `h_T⁴ ‖y_d - ȳ_d‖²_{L²(T)}`; reported, not summed.
    pub oscillation: Vec<f64>,
    /// Squared totals of η1..η5.
    pub totals: [f64; 5],
    pub total_squared: f64,
}

impl EstimatorBreakdown {
    pub fn eta(&self) -> f64 {
        self.total_squared.sqrt()
    }

    /// `η_k` (not squared), `k` in 1..=5.
    pub fn part(&self, k: usize) -> f64 {
        self.totals[k - 1].sqrt()
    }

    pub fn oscillation_total(&self) -> f64 {
        self.oscillation.iter().sum::<f64>().sqrt()
    }

    /// Per-element CSV: `element,eta_T_sq,eta1_sq,eta5_sq,edge_share_sq`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("element,eta_T_sq,eta1_sq,eta5_sq,edge_share_sq\n");
        for t in 0..self.element.len() {
            let share = self.element[t] - self.eta1[t] - self.eta5[t];
            let _ = writeln!(
                s,
                "{t},{:e},{:e},{:e},{:e}",
                self.element[t], self.eta1[t], self.eta5[t], share
            );
        }
        s
    }
}

/// Interior residual `y_d + μ - y_h - βΔf` integrated squared over each element,
/// and the data oscillation.
pub fn eta_interior(space: &FeSpace, y: &FeFunction, mu: f64, problem: &ProblemSpec) -> (Vec<f64>, Vec<f64>) {
    let beta = problem.beta;
    let rule = cached_triangle_rule(RESIDUAL_DEGREE);
    let mut eta1 = Vec::with_capacity(space.mesh.num_elements());
    let mut osc = Vec::with_capacity(space.mesh.num_elements());
    for (t, local) in space.locals.iter().enumerate() {
        let geom = &local.geometry;
        let coeffs = space.local_coefficients(y, t);
        let mut res = 0.0;
        let mut yd_mean = 0.0;
        let mut yd_sq = 0.0;
        for (p, w) in rule.iter() {
            let x = geom.point(p);
            let (v, _, _) = local.combine(&coeffs, p);
            let yd = problem.desired_state.value(x);
            let r = yd + mu - v - beta * problem.source.laplacian(x);
            res += w * r * r;
            yd_mean += w * yd;
            yd_sq += w * yd * yd;
        }
        let h = geom.diameter;
        eta1.push(h.powi(4) * geom.area * res / beta);
        osc.push(h.powi(4) * geom.area * (yd_sq - yd_mean * yd_mean).max(0.0));
    }
    (eta1, osc)
}

/// `η5_T²` from the control multiplier (scalar or per element).
pub fn eta_multiplier(space: &FeSpace, lambda: &[f64], beta: f64, form: Eta5Form) -> Vec<f64> {
    space
        .locals
        .iter()
        .enumerate()
        .map(|(t, local)| {
            let lam = if lambda.len() == 1 { lambda[0] } else { lambda.get(t).copied().unwrap_or(0.0) };
            let h = local.geometry.diameter;
            let weight = match form {
                Eta5Form::PointValue => 1.0,
                Eta5Form::Weighted => local.geometry.area,
            };
            h * h * weight * lam * lam / beta
        })
        .collect()
}

/// Gradient of `Δy_h` on element `t` (constant: the Laplacian is affine).
fn laplacian_gradient(space: &FeSpace, coeffs: &[f64; 7], t: usize) -> Vec2 {
    let local = &space.locals[t];
    let mut g = [0.0; 2];
    for i in 0..3 {
        let mut l = [0.0; 3];
        l[i] = 1.0;
        let lap = trace(&local.combine(coeffs, l).2);
        let gl = local.geometry.barycentric_gradients[i];
        g[0] += lap * gl[0];
        g[1] += lap * gl[1];
    }
    g
}

/// Barycentric coordinates in element `t` of the point `(1-s)·a + s·b`
/// on its edge with global endpoints `a`, `b`.
fn edge_barycentric(space: &FeSpace, t: usize, a: usize, b: usize, s: f64) -> [f64; 3] {
    let v = space.mesh.elements[t].vertices;
    let mut l = [0.0; 3];
    for i in 0..3 {
        if v[i] == a {
            l[i] = 1.0 - s;
        } else if v[i] == b {
            l[i] = s;
        }
    }
    l
}

/// Squared jump terms `(η2_e², η3_e², η4_e²)` on every edge; zero on the boundary.
pub fn eta_edges(space: &FeSpace, y: &FeFunction, beta: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mesh = &space.mesh;
    let ne = mesh.edges.len();
    let (mut e2, mut e3, mut e4) = (vec![0.0; ne], vec![0.0; ne], vec![0.0; ne]);
    let rule = cached_edge_rule(5);
    for (e, edge) in mesh.edges.iter().enumerate() {
        if edge.boundary {
            continue;
        }
        let frame = mesh.jump_frame(e);
        let minus = frame.minus.expect("interior edge");
        let n = frame.normal;
        let [a, b] = edge.endpoints;
        let cp = space.local_coefficients(y, frame.plus);
        let cm = space.local_coefficients(y, minus);
        let dlap_p = laplacian_gradient(space, &cp, frame.plus);
        let dlap_m = laplacian_gradient(space, &cm, minus);
        let j4 = (dlap_p[0] - dlap_m[0]) * n[0] + (dlap_p[1] - dlap_m[1]) * n[1];
        let (mut i2, mut i3) = (0.0, 0.0);
        for (p, w) in rule.iter() {
            let s = p[1];
            let (_, gp, hp) = space.locals[frame.plus].combine(&cp, edge_barycentric(space, frame.plus, a, b, s));
            let (_, gm, hm) = space.locals[minus].combine(&cm, edge_barycentric(space, minus, a, b, s));
            let dn = (gp[0] - gm[0]) * n[0] + (gp[1] - gm[1]) * n[1];
            let dnn = normal_normal(&hp, n) - normal_normal(&hm, n);
            i2 += w * dn * dn;
            i3 += w * dnn * dnn;
        }
        let h = edge.length;
        // quadrature weights sum to one: multiply by |e| for the line integral
        e2[e] = beta * i2;
        e3[e] = beta * h * h * i3;
        e4[e] = beta * h.powi(4) * j4 * j4;
    }
    (e2, e3, e4)
}

fn normal_normal(h: &Mat2, n: [f64; 2]) -> f64 {
    n[0] * (h[0][0] * n[0] + h[0][1] * n[1]) + n[1] * (h[1][0] * n[0] + h[1][1] * n[1])
}

/// Full estimator for a discrete solution with multipliers `mu`, `lambda`.
pub fn estimate(
    space: &FeSpace,
    y: &FeFunction,
    mu: f64,
    lambda: &[f64],
    problem: &ProblemSpec,
    form: Eta5Form,
) -> EstimatorBreakdown {
    let beta = problem.beta;
    let (eta1, oscillation) = eta_interior(space, y, mu, problem);
    let eta5 = eta_multiplier(space, lambda, beta, form);
    let (eta2, eta3, eta4) = eta_edges(space, y, beta);
    let mesh = &space.mesh;
    let element: Vec<f64> = (0..mesh.num_elements())
        .map(|t| {
            let share: f64 = mesh.element_edges[t]
                .iter()
                .filter(|&&e| !mesh.edges[e].boundary)
                .map(|&e| 0.5 * (eta2[e] + eta3[e] + eta4[e]))
                .sum();
            eta1[t] + eta5[t] + share
        })
        .collect();
    let totals = [
        eta1.iter().sum(),
        eta2.iter().sum(),
        eta3.iter().sum(),
        eta4.iter().sum(),
        eta5.iter().sum(),
    ];
    let total_squared = totals.iter().sum();
    EstimatorBreakdown {
        eta1,
        eta5,
        eta2,
        eta3,
        eta4,
        element,
        oscillation,
        totals,
        total_squared,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `(β |y* - y_h|²_{H²,h} + ‖y* - y_h‖²)^{1/2}`.
    pub energy_error: f64,
    pub l2_error: f64,
    /// Broken H² seminorm of the error.
    pub h2_error: f64,
    /// Estimator over energy error, when an estimator value is supplied.
    pub efficiency_index: Option<f64>,
}

/// Error of `y` against the exact state, by element-wise quadrature.
pub fn true_error(space: &FeSpace, y: &FeFunction, exact: &dyn SmoothFunction, beta: f64, eta: Option<f64>) -> ErrorReport {
    let rule = cached_triangle_rule(ERROR_DEGREE);
    let (mut l2, mut h2) = (0.0, 0.0);
    for (t, local) in space.locals.iter().enumerate() {
        let coeffs = space.local_coefficients(y, t);
        let (mut el2, mut eh2) = (0.0, 0.0);
        for (p, w) in rule.iter() {
            let x = local.geometry.point(p);
            let (v, _, h) = local.combine(&coeffs, p);
            let he = exact.hessian(x);
            let d = exact.value(x) - v;
            el2 += w * d * d;
            for r in 0..2 {
                for c in 0..2 {
                    let dh = he[r][c] - h[r][c];
                    eh2 += w * dh * dh;
                }
            }
        }
        l2 += local.geometry.area * el2;
        h2 += local.geometry.area * eh2;
    }
    let energy = (beta * h2 + l2).sqrt();
    ErrorReport {
        energy_error: energy,
        l2_error: l2.sqrt(),
        h2_error: h2.sqrt(),
        efficiency_index: eta.filter(|_| energy > 0.0).map(|e| e / energy),
    }
}
