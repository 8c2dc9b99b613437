//! Gauss rules on `[0, 1]` and fully symmetric positive rules on triangles.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Highest polynomial degree supported by [`triangle_rule`].
pub const MAX_TRIANGLE_DEGREE: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Barycentric coordinates (triangle) or `(1 - t, t, 0)` (edge).
    pub points: Vec<[f64; 3]>,
    /// Weights summing to one; scale by the measure when integrating.
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]` (weights sum to one).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
    (nodes, weights)
}

/// Gauss rule on an edge exact to `degree`, as barycentric pairs on the edge.
pub fn edge_rule(degree: usize) -> QuadratureRule {
    let n = degree / 2 + 1;
    let (t, w) = gauss_legendre(n);
    QuadratureRule {
        points: t.iter().map(|&t| [1.0 - t, t, 0.0]).collect(),
        weights: w,
        exact_degree: 2 * n - 1,
    }
}

/// Triangle rule exact to `degree`: collapsed Gauss product rule averaged over
/// the six permutations of the barycentric coordinates.
pub fn triangle_rule(degree: usize) -> Result<QuadratureRule> {
    if degree > MAX_TRIANGLE_DEGREE {
        return Err(Error::UnsupportedDegree(degree));
    }
    if degree <= 1 {
        return Ok(QuadratureRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
            exact_degree: 1,
        });
    }
    let n = (degree + 3) / 2;
    let (g, w) = gauss_legendre(n);
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [1, 2, 0], [2, 0, 1], [0, 2, 1], [2, 1, 0], [1, 0, 2]];
    let mut points = Vec::with_capacity(6 * n * n);
    let mut weights = Vec::with_capacity(6 * n * n);
    for i in 0..n {
        for j in 0..n {
            let (u, v) = (g[i], g[j]);
            let x = u;
            let y = v * (1.0 - u);
            let base = [1.0 - x - y, x, y];
            let wt = 2.0 * w[i] * w[j] * (1.0 - u);
            for p in PERMS {
                points.push([base[p[0]], base[p[1]], base[p[2]]]);
                weights.push(wt / 6.0);
            }
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        exact_degree: degree,
    })
}

/// Cached triangle rule; panics only for degrees above [`MAX_TRIANGLE_DEGREE`].
pub fn cached_triangle_rule(degree: usize) -> &'static QuadratureRule {
    static RULES: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        (0..=MAX_TRIANGLE_DEGREE)
            .map(|d| triangle_rule(d).expect("supported degree"))
            .collect()
    });
    &rules[degree]
}

/// Cached edge rule for degrees up to 21.
pub fn cached_edge_rule(degree: usize) -> &'static QuadratureRule {
    static RULES: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (0..=21).map(edge_rule).collect());
    &rules[degree]
}

/// `∫_T λ0^a λ1^b λ2^c dx / |T| = 2 a! b! c! / (a+b+c+2)!`.
pub fn barycentric_monomial_mean(a: u32, b: u32, c: u32) -> f64 {
    let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
    2.0 * fact(a) * fact(b) * fact(c) / fact(a + b + c + 2)
}
