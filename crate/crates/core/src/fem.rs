//! Bilinear (Q1) finite elements on square cells with hanging-node
//! condensation and homogeneous Dirichlet elimination.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::mesh::{QuadMesh, Rect};
use crate::sparse::CsrMatrix;

/// Reference coordinates of the 2x2 Gauss points on the unit square.
pub const GAUSS_POINTS: [[f64; 2]; 4] = {
    const A: f64 = 0.5 - 0.288_675_134_594_812_9;
    const B: f64 = 0.5 + 0.288_675_134_594_812_9;
    [[A, A], [B, A], [A, B], [B, B]]
};

pub fn shape_values(p: [f64; 2]) -> [f64; 4] {
    let [x, y] = p;
    [(1.0 - x) * (1.0 - y), x * (1.0 - y), (1.0 - x) * y, x * y]
}

/// Gradients on the unit square, vertex order as in [`shape_values`].
pub fn shape_gradients(p: [f64; 2]) -> [[f64; 2]; 4] {
    let [x, y] = p;
    [[-(1.0 - y), -(1.0 - x)], [1.0 - y, -x], [-y, 1.0 - x], [y, x]]
}

/// Gradient products per Gauss point. The Q1 stiffness on a square does not
/// depend on the cell size in two dimensions.
fn gradient_products() -> [[[f64; 4]; 4]; 4] {
    let mut g = [[[0.0; 4]; 4]; 4];
    for (q, p) in GAUSS_POINTS.iter().enumerate() {
        let d = shape_gradients(*p);
        for i in 0..4 {
            for j in 0..4 {
                g[q][i][j] = d[i][0] * d[j][0] + d[i][1] * d[j][1];
            }
        }
    }
    g
}

/// Local stiffness matrix from the coefficient at the four Gauss points.
pub fn local_stiffness(a_q: [f64; 4]) -> [[f64; 4]; 4] {
    let g = gradient_products();
    let mut k = [[0.0; 4]; 4];
    for q in 0..4 {
        for i in 0..4 {
            for j in 0..4 {
                k[i][j] += 0.25 * a_q[q] * g[q][i][j];
            }
        }
    }
    k
}

/// Physical Gauss points of every leaf, four per leaf.
pub fn quadrature_points(mesh: &QuadMesh) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(4 * mesh.n_leaves());
    for k in 0..mesh.n_leaves() {
        let o = mesh.leaf_origin(k);
        let h = mesh.leaf_size(k);
        pts.extend(GAUSS_POINTS.iter().map(|g| [o[0] + g[0] * h, o[1] + g[1] * h]));
    }
    pts
}

/// Expansion of a vertex value in terms of unknowns.
fn vertex_expansion(mesh: &QuadMesh, v: usize) -> Vec<(u32, f64)> {
    if let Some(d) = mesh.dof_of_vertex(v) {
        return vec![(d as u32, 1.0)];
    }
    match mesh.hanging_masters(v) {
        Some(masters) => masters
            .iter()
            .filter_map(|&m| mesh.dof_of_vertex(m).map(|d| (d as u32, 0.5)))
            .collect(),
        None => Vec::new(),
    }
}

#[derive(Clone, Copy, Debug)]
struct Scatter {
    pos: u32,
    local: u8,
    weight: f64,
}

/// Sparsity pattern and scatter map of the condensed stiffness matrix.
#[derive(Clone, Debug)]
pub struct AssemblyPlan {
    pattern: CsrMatrix,
    scatter: Vec<Scatter>,
    offsets: Vec<usize>,
}

impl AssemblyPlan {
    pub fn new(mesh: &QuadMesh) -> Self {
        let n = mesh.n_free();
        let expansions: Vec<Vec<(u32, f64)>> =
            (0..mesh.n_vertices()).map(|v| vertex_expansion(mesh, v)).collect();
        let mut pairs = Vec::with_capacity(16 * mesh.n_leaves());
        for k in 0..mesh.n_leaves() {
            let vs = mesh.leaf_vertices(k);
            for &a in &vs {
                for &b in &vs {
                    for &(da, _) in &expansions[a] {
                        for &(db, _) in &expansions[b] {
                            pairs.push((da, db));
                        }
                    }
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let pattern = CsrMatrix::from_pattern(n, &pairs);
        let mut scatter = Vec::with_capacity(16 * mesh.n_leaves());
        let mut offsets = Vec::with_capacity(mesh.n_leaves() + 1);
        offsets.push(0);
        for k in 0..mesh.n_leaves() {
            let vs = mesh.leaf_vertices(k);
            for (i, &a) in vs.iter().enumerate() {
                for (j, &b) in vs.iter().enumerate() {
                    for &(da, wa) in &expansions[a] {
                        for &(db, wb) in &expansions[b] {
                            let pos = pattern.position(da as usize, db).expect("pattern entry");
                            scatter.push(Scatter { pos: pos as u32, local: (i * 4 + j) as u8, weight: wa * wb });
                        }
                    }
                }
            }
            offsets.push(scatter.len());
        }
        Self { pattern, scatter, offsets }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    /// Assembles the stiffness matrix from coefficient values at the
    /// quadrature points (four per leaf, in [`quadrature_points`] order).
    pub fn assemble(&self, a_q: &[f64], points: &[[f64; 2]]) -> Result<CsrMatrix> {
        let n_cells = self.offsets.len() - 1;
        if a_q.len() != 4 * n_cells {
            return Err(Error::Dimension { expected: 4 * n_cells, got: a_q.len() });
        }
        if let Some(q) = a_q.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
            let [x, y] = points.get(q).copied().unwrap_or([f64::NAN, f64::NAN]);
            return Err(Error::Coefficient { value: a_q[q], x, y });
        }
        let g = gradient_products();
        let mut m = self.pattern.clone();
        for k in 0..n_cells {
            let a = &a_q[4 * k..4 * k + 4];
            let mut loc = [0.0; 16];
            for q in 0..4 {
                let w = 0.25 * a[q];
                for i in 0..4 {
                    for j in 0..4 {
                        loc[i * 4 + j] += w * g[q][i][j];
                    }
                }
            }
            for s in &self.scatter[self.offsets[k]..self.offsets[k + 1]] {
                m.vals[s.pos as usize] += s.weight * loc[s.local as usize];
            }
        }
        Ok(m)
    }
}

/// Load vector `int f phi_v` for every vertex, before condensation.
pub fn vertex_load(mesh: &QuadMesh, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let mut b = vec![0.0; mesh.n_vertices()];
    let shapes = GAUSS_POINTS.map(shape_values);
    for k in 0..mesh.n_leaves() {
        let o = mesh.leaf_origin(k);
        let h = mesh.leaf_size(k);
        let vs = mesh.leaf_vertices(k);
        for (q, g) in GAUSS_POINTS.iter().enumerate() {
            let fq = 0.25 * h * h * f([o[0] + g[0] * h, o[1] + g[1] * h]);
            for i in 0..4 {
                b[vs[i]] += fq * shapes[q][i];
            }
        }
    }
    b
}

/// Restricts a vertex-space load to the unknowns.
pub fn condense(mesh: &QuadMesh, full: &[f64]) -> Vec<f64> {
    let mut b = vec![0.0; mesh.n_free()];
    for (v, &val) in full.iter().enumerate() {
        for (d, w) in vertex_expansion(mesh, v) {
            b[d as usize] += w * val;
        }
    }
    b
}

/// Vertex values from unknowns: Dirichlet vertices are zero and hanging
/// vertices take the mean of their edge endpoints.
pub fn expand(mesh: &QuadMesh, u: &[f64]) -> Vec<f64> {
    (0..mesh.n_vertices())
        .map(|v| vertex_expansion(mesh, v).iter().map(|&(d, w)| w * u[d as usize]).sum())
        .collect()
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Indicator of a rectangle smoothed by an isotropic Gaussian kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QoiWeight {
    pub region: Rect,
    pub sigma: f64,
}

impl Default for QoiWeight {
    fn default() -> Self {
        Self { region: Rect::new(0.25, -0.5, 0.5, -0.25), sigma: 0.25 }
    }
}

impl QoiWeight {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let r = &self.region;
        let s = self.sigma;
        let fx = normal_cdf((r.x1 - p[0]) / s) - normal_cdf((r.x0 - p[0]) / s);
        let fy = normal_cdf((r.y1 - p[1]) / s) - normal_cdf((r.y0 - p[1]) / s);
        fx * fy
    }
}

/// Source, goal functional and boundary layout of the model problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub source: f64,
    pub weight: QoiWeight,
}

impl Default for Problem {
    fn default() -> Self {
        Self { source: 1000.0, weight: QoiWeight::default() }
    }
}

impl Problem {
    pub fn primal_load(&self, mesh: &QuadMesh) -> Vec<f64> {
        let f = self.source;
        vertex_load(mesh, |_| f)
    }

    pub fn dual_load(&self, mesh: &QuadMesh) -> Vec<f64> {
        let w = self.weight;
        vertex_load(mesh, move |p| w.eval(p))
    }
}

/// `Q(u) = (w, u)` evaluated with the same quadrature as the loads.
pub fn evaluate_qoi(dual_vertex_load: &[f64], u_vertex: &[f64]) -> Result<f64> {
    if dual_vertex_load.len() != u_vertex.len() {
        return Err(Error::Dimension { expected: dual_vertex_load.len(), got: u_vertex.len() });
    }
    Ok(dual_vertex_load.iter().zip(u_vertex).map(|(w, u)| w * u).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cell_matches_laplace_element() {
        let k = local_stiffness([1.0; 4]);
        for i in 0..4 {
            assert!((k[i][i] - 2.0 / 3.0).abs() < 1e-14);
            assert!((k[i][3 - i] + 1.0 / 3.0).abs() < 1e-14);
        }
        assert!((k[0][1] + 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn primal_load_partition_of_unity() {
        let m = QuadMesh::reference_domain(4, 2).unwrap().refine_cells(&[1, 6]).unwrap();
        let b = Problem::default().primal_load(&m);
        assert!((b.iter().sum::<f64>() - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn interior_load_on_uniform_mesh() {
        let m = QuadMesh::reference_domain(8, 4).unwrap();
        let b = Problem::default().primal_load(&m);
        let v = m.find_vertex((QuadMesh::int_size(0) * 3, QuadMesh::int_size(0) * 2)).unwrap();
        assert!((b[v] - 1000.0 * 0.25 * 0.25).abs() < 1e-10);
        let c = condense(&m, &b);
        assert_eq!(c.len(), m.n_free());
    }

    #[test]
    fn weight_at_region_center() {
        let w = QoiWeight::default();
        let one = normal_cdf(0.5) - normal_cdf(-0.5);
        assert!((w.eval([0.375, -0.375]) - one * one).abs() < 1e-14);
        assert!((one * one - 0.14663).abs() < 1e-5);
        assert!(w.eval([-10.0, 10.0]) < 1e-12);
    }

    #[test]
    fn qoi_is_linear() {
        let m = QuadMesh::reference_domain(4, 2).unwrap().refine_uniform(1);
        let w = Problem::default().dual_load(&m);
        let u: Vec<f64> = (0..m.n_vertices()).map(|v| v as f64).collect();
        let z: Vec<f64> = (0..m.n_vertices()).map(|v| (v as f64).sin()).collect();
        let comb: Vec<f64> = u.iter().zip(&z).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let lhs = evaluate_qoi(&w, &comb).unwrap();
        let rhs = 2.0 * evaluate_qoi(&w, &u).unwrap() - 3.0 * evaluate_qoi(&w, &z).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
        assert_eq!(evaluate_qoi(&w, &vec![0.0; m.n_vertices()]).unwrap(), 0.0);
        assert!(evaluate_qoi(&w, &[1.0]).is_err());
    }

    #[test]
    fn rejects_nonpositive_coefficient() {
        let m = QuadMesh::reference_domain(2, 1).unwrap();
        let plan = AssemblyPlan::new(&m);
        let pts = quadrature_points(&m);
        let mut a = vec![1.0; pts.len()];
        a[3] = 0.0;
        assert!(matches!(plan.assemble(&a, &pts), Err(Error::Coefficient { .. })));
        a[3] = f64::NAN;
        assert!(plan.assemble(&a, &pts).is_err());
    }
}
