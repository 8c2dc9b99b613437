use crate::element::{quadrature, LocalElement, Mat2, Vec2, LOCAL_DOFS};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point2};

/// Global numbering: interior vertices, then all edges, then one bubble per
/// element. Boundary vertex values are pinned to zero and carry no DOF.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub vertex_dofs: Vec<Option<usize>>,
    pub edge_dofs: Vec<usize>,
    pub bubble_dofs: Vec<usize>,
    pub total_dofs: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut next = 0;
        let vertex_dofs = mesh
            .vertex_on_boundary
            .iter()
            .map(|&b| {
                (!b).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        let edge_dofs = (next..next + mesh.edges.len()).collect();
        next += mesh.edges.len();
        let bubble_dofs = (next..next + mesh.num_elements()).collect();
        next += mesh.num_elements();
        DofMap {
            vertex_dofs,
            edge_dofs,
            bubble_dofs,
            total_dofs: next,
        }
    }

    /// Global index of each local DOF (`None` for pinned boundary vertices).
    pub fn element_dofs(&self, mesh: &Mesh, t: usize) -> [Option<usize>; LOCAL_DOFS] {
        let v = mesh.elements[t].vertices;
        let e = mesh.element_edges[t];
        [
            self.vertex_dofs[v[0]],
            self.vertex_dofs[v[1]],
            self.vertex_dofs[v[2]],
            Some(self.edge_dofs[e[0]]),
            Some(self.edge_dofs[e[1]]),
            Some(self.edge_dofs[e[2]]),
            Some(self.bubble_dofs[t]),
        ]
    }
}

/// `W_h` on a mesh: the mesh, its DOF map and per-element nodal bases.
#[derive(Debug, Clone)]
pub struct FeSpace {
    pub mesh: Mesh,
    pub dofmap: DofMap,
    pub locals: Vec<LocalElement>,
}

/// Coefficient vector of a function in `W_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    pub coefficients: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(space: &FeSpace) -> Self {
        FeFunction {
            coefficients: vec![0.0; space.dofmap.total_dofs],
        }
    }
}

/// A smooth function with its first and second derivatives.
pub trait SmoothFunction: Send + Sync {
    fn value(&self, p: Point2) -> f64;
    fn gradient(&self, p: Point2) -> Vec2;
    fn hessian(&self, p: Point2) -> Mat2;

    fn laplacian(&self, p: Point2) -> f64 {
        let h = self.hessian(p);
        h[0][0] + h[1][1]
    }
}

impl FeSpace {
    pub fn new(mesh: Mesh) -> Result<Self> {
        let dofmap = DofMap::new(&mesh);
        let locals = (0..mesh.num_elements())
            .map(|t| {
                let el = &mesh.elements[t];
                let signs = [el.edge_sign(0), el.edge_sign(1), el.edge_sign(2)];
                LocalElement::new(mesh.geometry(t), signs).map_err(|_| Error::SingularElement(t))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeSpace { mesh, dofmap, locals })
    }

    pub fn num_dofs(&self) -> usize {
        self.dofmap.total_dofs
    }

    pub fn element_dofs(&self, t: usize) -> [Option<usize>; LOCAL_DOFS] {
        self.dofmap.element_dofs(&self.mesh, t)
    }

    /// Local coefficients of `f` on element `t` (pinned DOFs read as zero).
    pub fn local_coefficients(&self, f: &FeFunction, t: usize) -> [f64; LOCAL_DOFS] {
        let mut out = [0.0; LOCAL_DOFS];
        for (o, d) in out.iter_mut().zip(self.element_dofs(t)) {
            if let Some(d) = d {
                *o = f.coefficients[d];
            }
        }
        out
    }

    /// Value, gradient and Hessian of `f` on element `t` at barycentric `l`.
    pub fn evaluate(&self, f: &FeFunction, t: usize, l: [f64; 3]) -> (f64, Vec2, Mat2) {
        self.locals[t].combine(&self.local_coefficients(f, t), l)
    }

    /// The interpolation operator `I_h`: vertex values, edge means of the
    /// normal derivative and element means.
    pub fn interpolate(&self, xi: &dyn SmoothFunction) -> FeFunction {
        let mesh = &self.mesh;
        let mut c = vec![0.0; self.num_dofs()];
        for (v, dof) in self.dofmap.vertex_dofs.iter().enumerate() {
            if let Some(d) = dof {
                c[*d] = xi.value(mesh.vertices[v]);
            }
        }
        let edge_rule = quadrature::cached_edge_rule(11);
        for (e, edge) in mesh.edges.iter().enumerate() {
            let (a, b) = (mesh.vertices[edge.endpoints[0]], mesh.vertices[edge.endpoints[1]]);
            let mean: f64 = edge_rule
                .iter()
                .map(|(p, w)| {
                    let x = Point2::new(p[0] * a.x + p[1] * b.x, p[0] * a.y + p[1] * b.y);
                    let g = xi.gradient(x);
                    w * (g[0] * edge.normal[0] + g[1] * edge.normal[1])
                })
                .sum();
            c[self.dofmap.edge_dofs[e]] = mean;
        }
        let tri = quadrature::cached_triangle_rule(10);
        for (t, local) in self.locals.iter().enumerate() {
            let mean: f64 = tri.iter().map(|(p, w)| w * xi.value(local.geometry.point(p))).sum();
            c[self.dofmap.bubble_dofs[t]] = mean;
        }
        FeFunction { coefficients: c }
    }
}
