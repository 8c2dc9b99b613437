//! Conforming triangulations of an axis-aligned rectangle with newest vertex
//! bisection.
//!
//! Local conventions used throughout the crate:
//!
//! * element vertices are stored counter-clockwise;
//! * local edge `j` joins vertices `j+1` and `j+2` (mod 3), i.e. it is the edge
//!   opposite vertex `j`;
//! * a global edge is oriented from its lower vertex id to its higher one and its
//!   normal is the tangent rotated by +90 degrees.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closure recursion guard for [`bisect`].
pub const MAX_CLOSURE_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    fn midpoint(self, other: Point2) -> Point2 {
        Point2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle `(x0, x1) x (y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Domain {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Domain { x0, y0, x1, y1 }
    }

    pub fn unit_square() -> Self {
        Domain::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    pub vertices: [usize; 3],
    /// Local index of the refinement edge (the edge opposite that vertex).
    pub refinement_edge: usize,
    pub generation: u32,
}

impl Element {
    /// Global vertex ids of local edge `j`, in local (counter-clockwise) order.
    pub fn local_edge(&self, j: usize) -> (usize, usize) {
        (self.vertices[(j + 1) % 3], self.vertices[(j + 2) % 3])
    }

    /// `+1` when the global normal of local edge `j` points out of this element.
    pub fn edge_sign(&self, j: usize) -> f64 {
        let (a, b) = self.local_edge(j);
        if a > b {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Lower vertex id first.
    pub endpoints: [usize; 2],
    pub first: usize,
    pub second: Option<usize>,
    pub boundary: bool,
    /// Unit normal fixed by the global orientation convention.
    pub normal: [f64; 2],
    pub length: f64,
}

impl Edge {
    pub fn adjacent(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.first).chain(self.second)
    }
}

/// Per-element geometric data.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementGeometry {
    pub coords: [Point2; 3],
    pub area: f64,
    /// Diameter, i.e. the longest edge.
    pub diameter: f64,
    pub barycentric_gradients: [[f64; 2]; 3],
    pub edge_lengths: [f64; 3],
    pub outward_normals: [[f64; 2]; 3],
    pub edge_midpoints: [Point2; 3],
}

impl ElementGeometry {
    pub fn from_coords(coords: [Point2; 3]) -> Self {
        let [p0, p1, p2] = coords;
        let det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
        let area = 0.5 * det;
        let inv = 1.0 / det;
        let barycentric_gradients = [
            [(p1.y - p2.y) * inv, (p2.x - p1.x) * inv],
            [(p2.y - p0.y) * inv, (p0.x - p2.x) * inv],
            [(p0.y - p1.y) * inv, (p1.x - p0.x) * inv],
        ];
        let mut edge_lengths = [0.0; 3];
        let mut outward_normals = [[0.0; 2]; 3];
        let mut edge_midpoints = [p0; 3];
        for j in 0..3 {
            let a = coords[(j + 1) % 3];
            let b = coords[(j + 2) % 3];
            let len = a.dist(b);
            edge_lengths[j] = len;
            outward_normals[j] = [(b.y - a.y) / len, -(b.x - a.x) / len];
            edge_midpoints[j] = a.midpoint(b);
        }
        let diameter = edge_lengths.iter().cloned().fold(0.0, f64::max);
        ElementGeometry {
            coords,
            area,
            diameter,
            barycentric_gradients,
            edge_lengths,
            outward_normals,
            edge_midpoints,
        }
    }

    /// Physical point for barycentric coordinates `l`.
    pub fn point(&self, l: [f64; 3]) -> Point2 {
        let c = &self.coords;
        Point2::new(
            l[0] * c[0].x + l[1] * c[1].x + l[2] * c[2].x,
            l[0] * c[0].y + l[1] * c[1].y + l[2] * c[2].y,
        )
    }

    /// Smallest interior angle in degrees.
    pub fn min_angle(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..3 {
            let p = self.coords[i];
            let a = self.coords[(i + 1) % 3];
            let b = self.coords[(i + 2) % 3];
            let (ux, uy) = (a.x - p.x, a.y - p.y);
            let (vx, vy) = (b.x - p.x, b.y - p.y);
            let cos = (ux * vx + uy * vy) / (ux.hypot(uy) * vx.hypot(vy));
            best = best.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
        }
        best
    }
}

/// Plus/minus assignment for jumps across an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpFrame {
    pub plus: usize,
    pub minus: Option<usize>,
    /// Unit normal pointing from `plus` to `minus` (outward on the boundary).
    pub normal: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub domain: Domain,
    pub vertices: Vec<Point2>,
    pub elements: Vec<Element>,
    pub edges: Vec<Edge>,
    /// Global edge id of each local edge.
    pub element_edges: Vec<[usize; 3]>,
    pub vertex_on_boundary: Vec<bool>,
}

impl Mesh {
    /// Builds edge topology and boundary flags for a list of counter-clockwise
    /// triangles.
    pub fn from_parts(domain: Domain, vertices: Vec<Point2>, elements: Vec<Element>) -> Self {
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(elements.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(elements.len() * 3 / 2 + 4);
        let mut element_edges = Vec::with_capacity(elements.len());
        for (t, el) in elements.iter().enumerate() {
            let mut ids = [0usize; 3];
            for (j, id) in ids.iter_mut().enumerate() {
                let (a, b) = el.local_edge(j);
                let key = (a.min(b), a.max(b));
                *id = match lookup.get(&key) {
                    Some(&e) => {
                        edges[e].second = Some(t);
                        e
                    }
                    None => {
                        let (pa, pb) = (vertices[key.0], vertices[key.1]);
                        let length = pa.dist(pb);
                        let tx = (pb.x - pa.x) / length;
                        let ty = (pb.y - pa.y) / length;
                        edges.push(Edge {
                            endpoints: [key.0, key.1],
                            first: t,
                            second: None,
                            boundary: true,
                            normal: [-ty, tx],
                            length,
                        });
                        lookup.insert(key, edges.len() - 1);
                        edges.len() - 1
                    }
                };
            }
            element_edges.push(ids);
        }
        let mut vertex_on_boundary = vec![false; vertices.len()];
        for e in edges.iter_mut() {
            e.boundary = e.second.is_none();
            if e.boundary {
                vertex_on_boundary[e.endpoints[0]] = true;
                vertex_on_boundary[e.endpoints[1]] = true;
            }
        }
        Mesh {
            domain,
            vertices,
            elements,
            edges,
            element_edges,
            vertex_on_boundary,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn geometry(&self, t: usize) -> ElementGeometry {
        let v = self.elements[t].vertices;
        ElementGeometry::from_coords([self.vertices[v[0]], self.vertices[v[1]], self.vertices[v[2]]])
    }

    /// Plus/minus frame for edge `e`: the plus element is the one the global
    /// normal points out of.
    pub fn jump_frame(&self, e: usize) -> JumpFrame {
        let edge = &self.edges[e];
        let local = |t: usize| {
            self.element_edges[t]
                .iter()
                .position(|&id| id == e)
                .expect("edge belongs to adjacent element")
        };
        let first_sign = self.elements[edge.first].edge_sign(local(edge.first));
        match edge.second {
            None => {
                let n = if first_sign > 0.0 {
                    edge.normal
                } else {
                    [-edge.normal[0], -edge.normal[1]]
                };
                JumpFrame {
                    plus: edge.first,
                    minus: None,
                    normal: n,
                }
            }
            Some(second) => {
                let (plus, minus) = if first_sign > 0.0 {
                    (edge.first, second)
                } else {
                    (second, edge.first)
                };
                JumpFrame {
                    plus,
                    minus: Some(minus),
                    normal: edge.normal,
                }
            }
        }
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_elements()).map(|t| self.geometry(t).area).sum()
    }

    pub fn min_angle(&self) -> f64 {
        (0..self.num_elements())
            .map(|t| self.geometry(t).min_angle())
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks orientation, edge multiplicity, absence of hanging nodes and
    /// area conservation. Returns a description of the first violation.
    pub fn audit(&self) -> std::result::Result<(), String> {
        for (t, el) in self.elements.iter().enumerate() {
            let v = el.vertices;
            if v[0] == v[1] || v[1] == v[2] || v[0] == v[2] {
                return Err(format!("element {t} has repeated vertices"));
            }
            if self.geometry(t).area <= 0.0 {
                return Err(format!("element {t} is not positively oriented"));
            }
        }
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for el in &self.elements {
            for j in 0..3 {
                let (a, b) = el.local_edge(j);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        if let Some((k, c)) = count.iter().find(|(_, &c)| c > 2) {
            return Err(format!("edge {k:?} shared by {c} elements"));
        }
        for (e, edge) in self.edges.iter().enumerate() {
            let n = edge.adjacent().count();
            if edge.boundary != (n == 1) {
                return Err(format!("edge {e}: boundary flag inconsistent with {n} neighbours"));
            }
            if edge.boundary && !self.on_domain_boundary(edge) {
                return Err(format!("edge {e} is a boundary edge inside the domain (hanging node)"));
            }
            let [a, b] = edge.endpoints;
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let dot = edge.normal[0] * (pb.x - pa.x) + edge.normal[1] * (pb.y - pa.y);
            let nn = edge.normal[0].hypot(edge.normal[1]);
            if dot.abs() > 1e-12 * edge.length || (nn - 1.0).abs() > 1e-12 {
                return Err(format!("edge {e}: normal is not a unit perpendicular"));
            }
        }
        let area = self.total_area();
        let expect = self.domain.area();
        if ((area - expect) / expect).abs() > 1e-12 {
            return Err(format!("area {area} differs from domain area {expect}"));
        }
        Ok(())
    }

    fn on_domain_boundary(&self, edge: &Edge) -> bool {
        let d = self.domain;
        let tol = 1e-12 * (d.x1 - d.x0).abs().max((d.y1 - d.y0).abs());
        let on = |p: Point2| {
            let vertical = (p.x - d.x0).abs() <= tol || (p.x - d.x1).abs() <= tol;
            let horizontal = (p.y - d.y0).abs() <= tol || (p.y - d.y1).abs() <= tol;
            (vertical, horizontal)
        };
        let (a, b) = (on(self.vertices[edge.endpoints[0]]), on(self.vertices[edge.endpoints[1]]));
        let same_vertical = a.0 && b.0 && {
            let (pa, pb) = (self.vertices[edge.endpoints[0]], self.vertices[edge.endpoints[1]]);
            (pa.x - pb.x).abs() <= tol
        };
        let same_horizontal = a.1 && b.1 && {
            let (pa, pb) = (self.vertices[edge.endpoints[0]], self.vertices[edge.endpoints[1]]);
            (pa.y - pb.y).abs() <= tol
        };
        same_vertical || same_horizontal
    }

    /// Plain-text export: vertex count, `x y` lines, element count, `v0 v1 v2` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{}", self.vertices.len()).unwrap();
        for p in &self.vertices {
            writeln!(out, "{:.17e} {:.17e}", p.x, p.y).unwrap();
        }
        writeln!(out, "{}", self.elements.len()).unwrap();
        for el in &self.elements {
            let v = el.vertices;
            writeln!(out, "{} {} {}", v[0], v[1], v[2]).unwrap();
        }
        out
    }
}

/// Criss-cross mesh: each of the `n x n` cells is split into four triangles
/// through its centre. Refinement edges are the longest edges.
pub fn initial_mesh(domain: Domain, subdivisions: usize) -> Result<Mesh> {
    let (wx, wy) = (domain.x1 - domain.x0, domain.y1 - domain.y0);
    if !(wx > 0.0 && wy > 0.0) || !wx.is_finite() || !wy.is_finite() {
        return Err(Error::DegenerateDomain(wx, wy));
    }
    if subdivisions == 0 {
        return Err(Error::InvalidArgument("subdivisions must be at least 1".into()));
    }
    let n = subdivisions;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1) + n * n);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point2::new(
                domain.x0 + wx * i as f64 / n as f64,
                domain.y0 + wy * j as f64 / n as f64,
            ));
        }
    }
    let corner = |i: usize, j: usize| j * (n + 1) + i;
    let mut elements = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        for i in 0..n {
            let c = vertices.len();
            vertices.push(Point2::new(
                domain.x0 + wx * (i as f64 + 0.5) / n as f64,
                domain.y0 + wy * (j as f64 + 0.5) / n as f64,
            ));
            let (p00, p10, p11, p01) = (corner(i, j), corner(i + 1, j), corner(i + 1, j + 1), corner(i, j + 1));
            for [a, b] in [[p00, p10], [p10, p11], [p11, p01], [p01, p00]] {
                elements.push(Element {
                    vertices: [a, b, c],
                    refinement_edge: 0,
                    generation: 0,
                });
            }
        }
    }
    for el in elements.iter_mut() {
        el.refinement_edge = longest_edge(&vertices, el.vertices);
    }
    Ok(Mesh::from_parts(domain, vertices, elements))
}

/// Local index of the longest edge; ties go to the edge whose opposite vertex
/// has the larger id.
fn longest_edge(vertices: &[Point2], v: [usize; 3]) -> usize {
    let mut best = 0;
    let mut best_len = -1.0;
    for j in 0..3 {
        let len = vertices[v[(j + 1) % 3]].dist(vertices[v[(j + 2) % 3]]);
        let tie = (len - best_len).abs() <= 1e-12 * len.max(best_len);
        if (!tie && len > best_len) || (tie && v[j] > v[best]) {
            best = j;
            best_len = len;
        }
    }
    best
}

/// Mutable working copy used by [`bisect`].
struct Refiner {
    vertices: Vec<Point2>,
    elements: Vec<Element>,
    alive: Vec<bool>,
    adjacency: HashMap<(usize, usize), [Option<usize>; 2]>,
    midpoints: HashMap<(usize, usize), usize>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl Refiner {
    fn new(mesh: &Mesh) -> Self {
        let mut adjacency: HashMap<(usize, usize), [Option<usize>; 2]> = HashMap::new();
        for edge in &mesh.edges {
            adjacency.insert((edge.endpoints[0], edge.endpoints[1]), [Some(edge.first), edge.second]);
        }
        Refiner {
            vertices: mesh.vertices.clone(),
            elements: mesh.elements.clone(),
            alive: vec![true; mesh.elements.len()],
            adjacency,
            midpoints: HashMap::new(),
        }
    }

    fn refinement_key(&self, t: usize) -> (usize, usize) {
        let el = &self.elements[t];
        let (a, b) = el.local_edge(el.refinement_edge);
        key(a, b)
    }

    fn neighbour(&self, t: usize, k: (usize, usize)) -> Option<usize> {
        let slots = self.adjacency.get(&k)?;
        slots.iter().flatten().copied().find(|&s| s != t)
    }

    fn detach(&mut self, t: usize, k: (usize, usize)) {
        if let Some(slots) = self.adjacency.get_mut(&k) {
            for s in slots.iter_mut() {
                if *s == Some(t) {
                    *s = None;
                }
            }
            if slots.iter().all(Option::is_none) {
                self.adjacency.remove(&k);
            }
        }
    }

    fn attach(&mut self, t: usize, k: (usize, usize)) {
        let slots = self.adjacency.entry(k).or_insert([None, None]);
        if slots[0].is_none() {
            slots[0] = Some(t);
        } else {
            debug_assert!(slots[1].is_none(), "edge {k:?} already has two elements");
            slots[1] = Some(t);
        }
    }

    fn bisect_one(&mut self, t: usize) {
        let el = self.elements[t];
        let r = el.refinement_edge;
        let c = el.vertices[r];
        let a = el.vertices[(r + 1) % 3];
        let b = el.vertices[(r + 2) % 3];
        let m = match self.midpoints.get(&key(a, b)) {
            Some(&m) => m,
            None => {
                let m = self.vertices.len();
                self.vertices.push(self.vertices[a].midpoint(self.vertices[b]));
                self.midpoints.insert(key(a, b), m);
                m
            }
        };
        self.alive[t] = false;
        for (p, q) in [(c, a), (a, b), (b, c)] {
            self.detach(t, key(p, q));
        }
        let generation = el.generation + 1;
        let first = self.elements.len();
        self.elements.push(Element {
            vertices: [c, a, m],
            refinement_edge: 2,
            generation,
        });
        self.elements.push(Element {
            vertices: [c, m, b],
            refinement_edge: 1,
            generation,
        });
        self.alive.extend([true, true]);
        for (p, q) in [(c, a), (a, m), (m, c)] {
            self.attach(first, key(p, q));
        }
        for (p, q) in [(c, m), (m, b), (b, c)] {
            self.attach(first + 1, key(p, q));
        }
    }

    fn refine(&mut self, t: usize, depth: usize) -> Result<()> {
        if depth > MAX_CLOSURE_DEPTH {
            return Err(Error::ClosureDepth { element: t, depth });
        }
        while self.alive[t] {
            let k = self.refinement_key(t);
            match self.neighbour(t, k) {
                None => self.bisect_one(t),
                Some(n) if self.refinement_key(n) == k => {
                    self.bisect_one(t);
                    self.bisect_one(n);
                }
                Some(n) => self.refine(n, depth + 1)?,
            }
        }
        Ok(())
    }

    fn finish(self, domain: Domain) -> Mesh {
        let elements = self
            .elements
            .into_iter()
            .zip(self.alive)
            .filter_map(|(el, alive)| alive.then_some(el))
            .collect();
        Mesh::from_parts(domain, self.vertices, elements)
    }
}

/// Newest vertex bisection of every element in `marked`, followed by the
/// recursive conforming closure.
pub fn bisect(mesh: &Mesh, marked: &[usize]) -> Result<Mesh> {
    if let Some(&bad) = marked.iter().find(|&&t| t >= mesh.num_elements()) {
        return Err(Error::InvalidArgument(format!("marked element {bad} out of range")));
    }
    if marked.is_empty() {
        return Ok(mesh.clone());
    }
    let mut refiner = Refiner::new(mesh);
    for &t in marked {
        refiner.refine(t, 0)?;
    }
    Ok(refiner.finish(mesh.domain))
}

/// Bisects every element once (plus closure).
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    let all: Vec<usize> = (0..mesh.num_elements()).collect();
    bisect(mesh, &all)
}
