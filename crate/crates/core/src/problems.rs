//! Benchmark problem data and manufactured problems.
//!
//! All data fields are finite sums of products `c · S_k(x) · S_l(y)` with
//! `S_0 = 1` and `S_k(t) = sin(kπt)`, so values, derivatives, Laplacians and
//! integrals are available in closed form.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::element::space::SmoothFunction;
use crate::element::{Mat2, Vec2};
use crate::error::{Error, Result};
use crate::mesh::{Domain, Point2};

/// One term `coef · S_kx(x) · S_ky(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub coef: f64,
    pub kx: u32,
    pub ky: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub terms: Vec<TrigTerm>,
}

/// `(S_k(t), S_k'(t), S_k''(t))`.
fn factor(k: u32, t: f64) -> (f64, f64, f64) {
    if k == 0 {
        return (1.0, 0.0, 0.0);
    }
    let w = k as f64 * PI;
    let (s, c) = (w * t).sin_cos();
    (s, w * c, -w * w * s)
}

fn factor_integral(k: u32, a: f64, b: f64) -> f64 {
    if k == 0 {
        return b - a;
    }
    let w = k as f64 * PI;
    ((w * a).cos() - (w * b).cos()) / w
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        TrigPoly::term(c, 0, 0)
    }

    pub fn term(coef: f64, kx: u32, ky: u32) -> Self {
        TrigPoly {
            terms: vec![TrigTerm { coef, kx, ky }],
        }
    }

    pub fn plus(mut self, other: &TrigPoly) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self
    }

    pub fn scale(mut self, s: f64) -> Self {
        for t in self.terms.iter_mut() {
            t.coef *= s;
        }
        self
    }

    /// Closed-form Laplacian (again a trigonometric polynomial).
    pub fn laplacian_poly(&self) -> TrigPoly {
        TrigPoly {
            terms: self
                .terms
                .iter()
                .filter(|t| t.kx + t.ky > 0)
                .map(|t| TrigTerm {
                    coef: -PI * PI * ((t.kx * t.kx + t.ky * t.ky) as f64) * t.coef,
                    ..*t
                })
                .collect(),
        }
    }

    pub fn integral(&self, d: &Domain) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * factor_integral(t.kx, d.x0, d.x1) * factor_integral(t.ky, d.y0, d.y1))
            .sum()
    }
}

impl SmoothFunction for TrigPoly {
    fn value(&self, p: Point2) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * factor(t.kx, p.x).0 * factor(t.ky, p.y).0)
            .sum()
    }

    fn gradient(&self, p: Point2) -> Vec2 {
        let mut g = [0.0; 2];
        for t in &self.terms {
            let (fx, dx, _) = factor(t.kx, p.x);
            let (fy, dy, _) = factor(t.ky, p.y);
            g[0] += t.coef * dx * fy;
            g[1] += t.coef * fx * dy;
        }
        g
    }

    fn hessian(&self, p: Point2) -> Mat2 {
        let mut h = [[0.0; 2]; 2];
        for t in &self.terms {
            let (fx, dx, ddx) = factor(t.kx, p.x);
            let (fy, dy, ddy) = factor(t.ky, p.y);
            h[0][0] += t.coef * ddx * fy;
            h[0][1] += t.coef * dx * dy;
            h[1][1] += t.coef * fx * ddy;
        }
        h[1][0] = h[0][1];
        h
    }
}

pub type Field = Arc<dyn SmoothFunction>;

/// Constraint data: integral control (case i) or pointwise control (case ii).
#[derive(Clone)]
pub enum ConstraintData {
    /// `∫ y ≥ delta2` and `∫ u ≥ delta1`.
    Integral { delta1: f64, delta2: f64 },
    /// `∫ y ≥ delta3` and `lower ≤ u ≤ upper`.
    Pointwise { delta3: f64, lower: Field, upper: Field },
}

impl ConstraintData {
    pub fn state_bound(&self) -> f64 {
        match self {
            ConstraintData::Integral { delta2, .. } => *delta2,
            ConstraintData::Pointwise { delta3, .. } => *delta3,
        }
    }
}

#[derive(Clone)]
pub struct ExactSolution {
    pub state: Field,
    pub control: Field,
    pub adjoint: Option<Field>,
    /// Set when the printed formulas are not the optimum of the printed data.
    pub reference_only: bool,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Domain,
    pub beta: f64,
    pub desired_state: Field,
    /// Source `f` in `-Δy = f + u`.
    pub source: Field,
    pub constraints: ConstraintData,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("beta", &self.beta)
            .field("case", &if self.is_pointwise() { "ii" } else { "i" })
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn is_pointwise(&self) -> bool {
        matches!(self.constraints, ConstraintData::Pointwise { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {}", self.beta)));
        }
        if let ConstraintData::Pointwise { lower, upper, .. } = &self.constraints {
            let d = self.domain;
            for i in 0..=10 {
                for j in 0..=10 {
                    let p = Point2::new(
                        d.x0 + (d.x1 - d.x0) * i as f64 / 10.0,
                        d.y0 + (d.y1 - d.y0) * j as f64 / 10.0,
                    );
                    if lower.value(p) >= upper.value(p) {
                        return Err(Error::InvalidArgument(format!("u_a >= u_b at ({}, {})", p.x, p.y)));
                    }
                }
            }
        }
        Ok(())
    }
}

fn sinsin(coef: f64, kx: u32, ky: u32) -> TrigPoly {
    TrigPoly::term(coef, kx, ky)
}

/// `max{p̃ + β δ̃1, 0} - p` with `p̃`, `δ̃1` the domain means.
fn projected_control(p: &TrigPoly, beta: f64, delta1: f64, d: &Domain) -> TrigPoly {
    let area = d.area();
    let shift = (p.integral(d) / area + beta * delta1 / area).max(0.0);
    TrigPoly::constant(shift).plus(&p.clone().scale(-1.0))
}

fn arc(p: TrigPoly) -> Field {
    Arc::new(p)
}

/// Benchmark problems 1 to 4.
pub fn example(id: u32) -> Result<ProblemSpec> {
    match id {
        1 => {
            let domain = Domain::unit_square();
            let beta = 1.0;
            let (delta1, delta2) = (0.0, -0.4);
            let p = sinsin(1.0, 2, 2).plus(&sinsin(3.0 / 8.0, 2, 4));
            let y = p.clone();
            let y_d = y.clone().plus(&p.laplacian_poly()).plus(&TrigPoly::constant(-0.4));
            let u = projected_control(&p, beta, delta1, &domain);
            let f = y.laplacian_poly().scale(-1.0).plus(&u.clone().scale(-1.0));
            Ok(ProblemSpec {
                name: "ex1".into(),
                domain,
                beta,
                desired_state: arc(y_d),
                source: arc(f),
                constraints: ConstraintData::Integral { delta1, delta2 },
                exact: Some(ExactSolution {
                    state: arc(y),
                    control: arc(u),
                    adjoint: Some(arc(p)),
                    reference_only: false,
                }),
            })
        }
        2 => {
            let domain = Domain::unit_square();
            let beta = 1.0;
            let (delta1, delta2) = (0.0, 100.0);
            let p = sinsin(1.0, 1, 1);
            let y_d = TrigPoly::default();
            let y = p.clone().scale(2.0 * PI * PI).plus(&y_d);
            let f = p
                .clone()
                .scale(4.0 * PI.powi(4))
                .plus(&p)
                .plus(&TrigPoly::constant(-4.0 / (PI * PI)));
            let u = projected_control(&p, beta, delta1, &domain);
            Ok(ProblemSpec {
                name: "ex2".into(),
                domain,
                beta,
                desired_state: arc(y_d),
                source: arc(f),
                constraints: ConstraintData::Integral { delta1, delta2 },
                exact: Some(ExactSolution {
                    state: arc(y),
                    control: arc(u),
                    adjoint: Some(arc(p)),
                    reference_only: true,
                }),
            })
        }
        3 => {
            let domain = Domain::new(-1.0, -1.0, 1.0, 1.0);
            let beta = 1.0;
            let (delta1, delta2) = (0.0, 0.0);
            let two_pi2 = 2.0 * PI * PI;
            let y = sinsin(-1.0 / two_pi2, 1, 1);
            let p = sinsin(1.0, 1, 1);
            let y_d = sinsin(-(two_pi2 + 1.0 / two_pi2), 1, 1).plus(&TrigPoly::constant(-0.6));
            let u = projected_control(&p, beta, delta1, &domain);
            Ok(ProblemSpec {
                name: "ex3".into(),
                domain,
                beta,
                desired_state: arc(y_d),
                source: arc(TrigPoly::default()),
                constraints: ConstraintData::Integral { delta1, delta2 },
                exact: Some(ExactSolution {
                    state: arc(y),
                    control: arc(u),
                    adjoint: Some(arc(p)),
                    reference_only: false,
                }),
            })
        }
        4 => Ok(ProblemSpec {
            name: "ex4".into(),
            domain: Domain::unit_square(),
            beta: 0.01,
            desired_state: arc(sinsin(10.0, 1, 0).plus(&sinsin(10.0, 0, 1))),
            source: arc(TrigPoly::default()),
            constraints: ConstraintData::Pointwise {
                delta3: 0.0,
                lower: arc(TrigPoly::constant(0.0)),
                upper: arc(TrigPoly::constant(30.0)),
            },
            exact: None,
        }),
        _ => Err(Error::UnknownProblem(format!("example {id}"))),
    }
}

/// Problem lookup by CLI name (`ex1`..`ex4`).
pub fn by_name(name: &str) -> Result<ProblemSpec> {
    match name {
        "ex1" => example(1),
        "ex2" => example(2),
        "ex3" => example(3),
        "ex4" => example(4),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Manufactured {
    /// Both constraints inactive; multipliers vanish.
    Inactive,
    /// State constraint exactly active with a known `μ > 0`.
    StateActive,
}

/// Manufactured case-i problem on the unit square built backwards from a random
/// `y*` so that `β Δ²y* + y* = y_d + μ - β Δf`.
///
/// Returns the problem and the continuous state multiplier `μ`.
pub fn manufactured(seed: u64, variant: Manufactured) -> (ProblemSpec, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = Domain::unit_square();
    let beta = rng.gen_range(0.5..2.0);
    let mut y = TrigPoly::default();
    for kx in 1..=2 {
        for ky in 1..=2 {
            y = y.plus(&sinsin(rng.gen_range(-1.0..1.0) / (kx * kx + ky * ky) as f64, kx, ky));
        }
    }
    // keep ∫y* away from zero so the active variant has a definite sign
    y = y.plus(&sinsin(rng.gen_range(0.5..1.0), 1, 1));
    let f = sinsin(rng.gen_range(-2.0..2.0), 1, 1);
    let mu = match variant {
        Manufactured::Inactive => 0.0,
        Manufactured::StateActive => rng.gen_range(0.5..1.5),
    };
    let bilap = y.laplacian_poly().laplacian_poly();
    let y_d = bilap
        .scale(beta)
        .plus(&y)
        .plus(&TrigPoly::constant(-mu))
        .plus(&f.laplacian_poly().scale(beta));
    let u = y.laplacian_poly().scale(-1.0).plus(&f.clone().scale(-1.0));
    let int_y = y.integral(&domain);
    let int_u = u.integral(&domain);
    let delta2 = match variant {
        Manufactured::Inactive => int_y - 1.0,
        Manufactured::StateActive => int_y,
    };
    let spec = ProblemSpec {
        name: format!("manufactured-{seed}"),
        domain,
        beta,
        desired_state: arc(y_d),
        source: arc(f),
        constraints: ConstraintData::Integral {
            delta1: int_u - 1.0,
            delta2,
        },
        exact: Some(ExactSolution {
            state: arc(y),
            control: arc(u),
            adjoint: None,
            reference_only: false,
        }),
    };
    (spec, mu)
}
