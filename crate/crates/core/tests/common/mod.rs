//! Oracles and mesh builders shared by the integration tests.
#![allow(dead_code)]

use amlmc::density::QuotientOperators;
use amlmc::mesh::{QuadMesh, Rect};
use amlmc::fem::{condense, expand, quadrature_points, vertex_load, AssemblyPlan};
use amlmc::solver::solve_reference;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Nodal interpolant honouring hanging-node constraints.
pub fn interpolate(mesh: &QuadMesh, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..mesh.n_vertices()).map(|v| {
        let [x, y] = mesh.vertex_point(v);
        f(x, y)
    }).collect();
    for v in 0..mesh.n_vertices() {
        if let Some([a, b]) = mesh.hanging_masters(v) {
            w[v] = 0.5 * (w[a] + w[b]);
        }
    }
    w
}

/// Refines `rounds` times, each time a random subset of about `frac` of the leaves.
pub fn random_refinement(mesh: &QuadMesh, rounds: usize, frac: f64, seed: u64) -> QuadMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = mesh.clone();
    for _ in 0..rounds {
        let marks: Vec<usize> = (0..m.n_leaves()).filter(|_| rng.gen::<f64>() < frac).collect();
        m = m.refine_cells(&marks).expect("refinement");
    }
    m
}

/// Largest error of the averaged quotients against `(wxx, wyy)` over
/// non-hanging vertices.
pub fn quotient_error(mesh: &QuadMesh, w: impl Fn(f64, f64) -> f64, wxx: impl Fn(f64, f64) -> f64, wyy: impl Fn(f64, f64) -> f64) -> f64 {
    let ops = QuotientOperators::new(mesh, &mesh.assemble_lines());
    let d = ops.apply_averaged(&interpolate(mesh, &w));
    let mut err: f64 = 0.0;
    for v in 0..mesh.n_vertices() {
        if mesh.is_hanging(v) {
            continue;
        }
        let [x, y] = mesh.vertex_point(v);
        err = err.max((d[0][v] - wxx(x, y)).abs()).max((d[1][v] - wyy(x, y)).abs());
    }
    err
}

pub fn unit_square(n: usize) -> QuadMesh {
    QuadMesh::new(Rect::new(0.0, 0.0, 1.0, 1.0), n, n, None).unwrap()
}

const GAUSS: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

/// Condensed stiffness matrix assembled densely: element integrals with
/// 2x2 Gauss points on every leaf, then `P^T K P` with the hanging-node
/// prolongation `P`.
pub fn dense_stiffness(mesh: &QuadMesh, a: impl Fn([f64; 2]) -> f64) -> nalgebra::DMatrix<f64> {
    let nv = mesh.n_vertices();
    let mut k_full = nalgebra::DMatrix::<f64>::zeros(nv, nv);
    for leaf in 0..mesh.n_leaves() {
        let h = mesh.leaf_size(leaf);
        let [x0, y0] = mesh.leaf_origin(leaf);
        let vs = mesh.leaf_vertices(leaf);
        let corner: Vec<(bool, bool)> = vs
            .iter()
            .map(|&v| {
                let [x, y] = mesh.vertex_point(v);
                ((x - x0) / h > 0.5, (y - y0) / h > 0.5)
            })
            .collect();
        let grad = |(cx, cy): (bool, bool), s: f64, t: f64| {
            let fx = if cx { s } else { 1.0 - s };
            let fy = if cy { t } else { 1.0 - t };
            let dx = if cx { 1.0 } else { -1.0 };
            let dy = if cy { 1.0 } else { -1.0 };
            [dx * fy, fx * dy]
        };
        for &s in &GAUSS {
            for &t in &GAUSS {
                let aq = a([x0 + s * h, y0 + t * h]);
                for i in 0..4 {
                    for j in 0..4 {
                        let gi = grad(corner[i], s, t);
                        let gj = grad(corner[j], s, t);
                        k_full[(vs[i], vs[j])] += 0.25 * aq * (gi[0] * gj[0] + gi[1] * gj[1]);
                    }
                }
            }
        }
    }
    let p = prolongation(mesh);
    p.transpose() * k_full * p
}

/// Maps free values to all vertex values.
pub fn prolongation(mesh: &QuadMesh) -> nalgebra::DMatrix<f64> {
    let mut p = nalgebra::DMatrix::<f64>::zeros(mesh.n_vertices(), mesh.n_free());
    for v in 0..mesh.n_vertices() {
        if let Some(d) = mesh.dof_of_vertex(v) {
            p[(v, d)] = 1.0;
        } else if let Some(masters) = mesh.hanging_masters(v) {
            for m in masters {
                if let Some(d) = mesh.dof_of_vertex(m) {
                    p[(v, d)] += 0.5;
                }
            }
        }
    }
    p
}

pub fn assembled_stiffness(mesh: &QuadMesh, a: impl Fn([f64; 2]) -> f64) -> Vec<Vec<f64>> {
    let pts = quadrature_points(mesh);
    let a_q: Vec<f64> = pts.iter().map(|&p| a(p)).collect();
    AssemblyPlan::new(mesh).assemble(&a_q, &pts).unwrap().to_dense()
}

/// `u = sin(pi x) sin(pi y)` on the unit square with `a = 1`; returns
/// `(h, |Q(u) - Q(u_h)|)` with `Q(u) = int u` on `n x n` grids.
pub fn manufactured_qoi_error(n: usize) -> (f64, f64) {
    use std::f64::consts::PI;
    let mesh = unit_square(n);
    let pts = quadrature_points(&mesh);
    let a = AssemblyPlan::new(&mesh).assemble(&vec![1.0; pts.len()], &pts).unwrap();
    let f = |p: [f64; 2]| 2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin();
    let b = condense(&mesh, &vertex_load(&mesh, f));
    let x = solve_reference(&a, &b).unwrap().x;
    let u = expand(&mesh, &x);
    let w = vertex_load(&mesh, |_| 1.0);
    let q: f64 = w.iter().zip(&u).map(|(w, u)| w * u).sum();
    (1.0 / n as f64, (q - 4.0 / (PI * PI)).abs())
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_fit(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x.ln(), b + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let num: f64 = pts.iter().map(|(x, y)| (x.ln() - mx) * (y.ln() - my)).sum();
    let den: f64 = pts.iter().map(|(x, _)| (x.ln() - mx).powi(2)).sum();
    num / den
}
