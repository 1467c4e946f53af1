//! Error density from averaged second difference quotients of the primal
//! and dual solutions, its bounded version, indicators and norms.
//!
//! Quotients are linear in the nodal vector, so each mesh gets one sparse
//! operator per direction that maps vertex values to averaged quotients.

use crate::mesh::{LineStructure, QuadMesh};
use crate::sparse::CsrMatrix;

type Row = Vec<(u32, f64)>;

fn combine(rows: &[Row], terms: &[(usize, f64)]) -> Row {
    let mut out: Row = Vec::new();
    for &(k, c) in terms {
        for &(v, w) in &rows[k] {
            out.push((v, c * w));
        }
    }
    out.sort_unstable_by_key(|e| e.0);
    let mut merged: Row = Vec::with_capacity(out.len());
    for (v, w) in out {
        match merged.last_mut() {
            Some(last) if last.0 == v => last.1 += w,
            _ => merged.push((v, w)),
        }
    }
    merged
}

fn rows_to_csr(rows: &[Row]) -> CsrMatrix {
    let n = rows.len();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for r in rows {
        for &(c, v) in r {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    CsrMatrix { n, row_ptr, cols, vals }
}

/// Three-point second difference weights for spacings `h1` (left) and `h2`.
pub fn second_difference_weights(h1: f64, h2: f64) -> [f64; 3] {
    [2.0 / (h1 * (h1 + h2)), -2.0 / (h1 * h2), 2.0 / (h2 * (h1 + h2))]
}

/// Maximal runs of each line that lie on cell edges, with hanging
/// vertices removed. Hanging values are edge interpolants, so using them as
/// data would spoil the quotients of smooth functions.
fn line_runs(mesh: &QuadMesh, lines: &std::collections::BTreeMap<i64, Vec<usize>>, horizontal: bool) -> Vec<Vec<usize>> {
    let along = |v: usize| {
        let (x, y) = mesh.vertex_key(v);
        if horizontal { x } else { y }
    };
    let mut runs = Vec::new();
    for (&at, line) in lines {
        let mut run: Vec<usize> = Vec::new();
        for (n, &v) in line.iter().enumerate() {
            if n > 0 {
                let mid = (along(line[n - 1]) + along(v)) / 2;
                if !mesh.on_cell_edge(horizontal, mid, at) && !run.is_empty() {
                    runs.push(std::mem::take(&mut run));
                }
            }
            if !mesh.is_hanging(v) {
                run.push(v);
            }
        }
        if !run.is_empty() {
            runs.push(run);
        }
    }
    runs
}

/// Sparse maps from vertex values to second difference quotients.
#[derive(Clone, Debug)]
pub struct QuotientOperators {
    /// Raw quotients in x and y, hanging vertices interpolated.
    pub raw: [CsrMatrix; 2],
    /// Averaged quotients in x and y.
    pub averaged: [CsrMatrix; 2],
}

impl QuotientOperators {
    pub fn new(mesh: &QuadMesh, lines: &LineStructure) -> Self {
        let nv = mesh.n_vertices();
        let runs_x = line_runs(mesh, &lines.y_lines, true);
        let runs_y = line_runs(mesh, &lines.x_lines, false);
        let coord = |v: usize, dir: usize| mesh.vertex_point(v)[dir];

        // Neighbours of each vertex within its run, per direction.
        let mut neighbours: [Vec<Vec<usize>>; 2] = [vec![Vec::new(); nv], vec![Vec::new(); nv]];
        for (dir, runs) in [&runs_x, &runs_y].into_iter().enumerate() {
            for run in runs {
                for (n, &v) in run.iter().enumerate() {
                    if n > 0 {
                        neighbours[dir][v].push(run[n - 1]);
                    }
                    if n + 1 < run.len() {
                        neighbours[dir][v].push(run[n + 1]);
                    }
                }
            }
        }

        let hanging_fix = |rows: &mut Vec<Row>| {
            for v in 0..nv {
                if let Some([a, b]) = mesh.hanging_masters(v) {
                    rows[v] = combine(rows, &[(a, 0.5), (b, 0.5)]);
                }
            }
        };

        let mut raw_ops = Vec::with_capacity(2);
        let mut avg_ops = Vec::with_capacity(2);
        for (dir, runs) in [&runs_x, &runs_y].into_iter().enumerate() {
            let mut rows: Vec<Option<Row>> = vec![None; nv];
            for run in runs.iter().filter(|r| r.len() >= 3) {
                let m = run.len();
                for n in 1..m - 1 {
                    let h1 = coord(run[n], dir) - coord(run[n - 1], dir);
                    let h2 = coord(run[n + 1], dir) - coord(run[n], dir);
                    let w = second_difference_weights(h1, h2);
                    let mut r: Row = vec![(run[n - 1] as u32, w[0]), (run[n] as u32, w[1]), (run[n + 1] as u32, w[2])];
                    r.sort_unstable_by_key(|e| e.0);
                    rows[run[n]] = Some(r);
                }
                rows[run[0]] = rows[run[1]].clone();
                rows[run[m - 1]] = rows[run[m - 2]].clone();
            }
            // Vertices on runs too short for a quotient borrow from their
            // neighbours along the orthogonal direction.
            let other = 1 - dir;
            loop {
                let mut filled = Vec::new();
                for v in 0..nv {
                    if rows[v].is_some() || mesh.is_hanging(v) {
                        continue;
                    }
                    let known: Vec<usize> =
                        neighbours[other][v].iter().copied().filter(|&w| rows[w].is_some()).collect();
                    if !known.is_empty() {
                        let c = 1.0 / known.len() as f64;
                        let mut r: Row = Vec::new();
                        for w in known {
                            r.extend(rows[w].as_ref().unwrap().iter().map(|&(k, x)| (k, c * x)));
                        }
                        filled.push((v, r));
                    }
                }
                if filled.is_empty() {
                    break;
                }
                for (v, r) in filled {
                    let dense = vec![r];
                    rows[v] = Some(combine(&dense, &[(0, 1.0)]));
                }
            }
            parent_line_fill(mesh, &mut rows);
            let mut raw: Vec<Row> = rows.into_iter().map(|r| r.unwrap_or_default()).collect();
            hanging_fix(&mut raw);

            let mut avg: Vec<Row> = (0..nv).map(|v| raw[v].clone()).collect();
            for v in 0..nv {
                if mesh.is_hanging(v) {
                    continue;
                }
                let nb = &neighbours[dir][v];
                if nb.is_empty() {
                    continue;
                }
                let c = 1.0 / (nb.len() + 1) as f64;
                let terms: Vec<(usize, f64)> =
                    std::iter::once((v, c)).chain(nb.iter().map(|&w| (w, c))).collect();
                avg[v] = combine(&raw, &terms);
            }
            hanging_fix(&mut avg);
            raw_ops.push(rows_to_csr(&raw));
            avg_ops.push(rows_to_csr(&avg));
        }
        let [rx, ry]: [CsrMatrix; 2] = raw_ops.try_into().expect("two directions");
        let [ax, ay]: [CsrMatrix; 2] = avg_ops.try_into().expect("two directions");
        Self { raw: [rx, ry], averaged: [ax, ay] }
    }

    pub fn apply_raw(&self, w: &[f64]) -> [Vec<f64>; 2] {
        [apply(&self.raw[0], w), apply(&self.raw[1], w)]
    }

    pub fn apply_averaged(&self, w: &[f64]) -> [Vec<f64>; 2] {
        [apply(&self.averaged[0], w), apply(&self.averaged[1], w)]
    }

    pub fn nnz(&self) -> usize {
        self.averaged[0].nnz() + self.averaged[1].nnz()
    }
}

/// Vertices still without a quotient, e.g. the centre of an isolated
/// refined cell, take the mean quotient of the corners of the nearest
/// ancestor cell that has any, which lie on coarser lines.
fn parent_line_fill(mesh: &QuadMesh, rows: &mut [Option<Row>]) {
    let missing: Vec<usize> = (0..rows.len()).filter(|&v| rows[v].is_none() && !mesh.is_hanging(v)).collect();
    if missing.is_empty() {
        return;
    }
    let mut leaf_at: Vec<Option<usize>> = vec![None; rows.len()];
    for k in 0..mesh.n_leaves() {
        for v in mesh.leaf_vertices(k) {
            leaf_at[v].get_or_insert(k);
        }
    }
    let cells = mesh.cells();
    let mut filled = Vec::new();
    for v in missing {
        let Some(k) = leaf_at[v] else { continue };
        let mut cell = mesh.leaf_cell(k);
        while let Some(p) = cell.parent {
            cell = &cells[p as usize];
            let s = QuadMesh::int_size(cell.level);
            let (x, y) = (cell.i as i64 * s, cell.j as i64 * s);
            let corners: Vec<usize> = [(x, y), (x + s, y), (x, y + s), (x + s, y + s)]
                .into_iter()
                .filter_map(|key| mesh.find_vertex(key))
                .filter(|&c| rows[c].is_some() && !mesh.is_hanging(c))
                .collect();
            if !corners.is_empty() {
                let c = 1.0 / corners.len() as f64;
                let known: Vec<Row> = corners.iter().map(|&w| rows[w].clone().unwrap()).collect();
                let terms: Vec<(usize, f64)> = (0..known.len()).map(|i| (i, c)).collect();
                filled.push((v, combine(&known, &terms)));
                break;
            }
        }
    }
    for (v, r) in filled {
        rows[v] = Some(r);
    }
}

fn apply(m: &CsrMatrix, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.n];
    m.matvec(w, &mut out);
    out
}

/// Unbounded per-cell density from averaged quotients of `u` and `phi` and
/// the coefficient at the vertices.
pub fn density_cells(mesh: &QuadMesh, a_vertex: &[f64], du: &[Vec<f64>; 2], dphi: &[Vec<f64>; 2]) -> Vec<f64> {
    (0..mesh.n_leaves())
        .map(|k| {
            mesh.leaf_vertices(k)
                .iter()
                .map(|&v| a_vertex[v] * (du[0][v] * dphi[0][v] + du[1][v] * dphi[1][v]))
                .sum::<f64>()
                / 48.0
        })
        .collect()
}

/// `(L1, L1/2)` of a piecewise constant density with cell sizes `h`.
pub fn density_norms(rho: &[f64], h: &[f64]) -> (f64, f64) {
    let l1 = rho.iter().zip(h).map(|(r, h)| r.abs() * h * h).sum();
    (l1, scaling_numerator(rho, h).powi(2))
}

/// `int |rho|^(1/2)`.
pub fn scaling_numerator(rho: &[f64], h: &[f64]) -> f64 {
    rho.iter().zip(h).map(|(r, h)| r.abs().sqrt() * h * h).sum()
}

/// Lower bound of the density magnitude.
pub fn lower_bound(rho_tilde: &[f64], h: &[f64], area: f64, tol: f64) -> f64 {
    density_norms(rho_tilde, h).1 / (area * area) * tol.sqrt()
}

/// Bounded density: magnitudes raised to at least `delta`, zero counted as
/// positive. With `upper` set, magnitudes are also capped at the mirrored
/// bound `L1/2(rho) / area^2 / sqrt(tol)`.
pub fn bound_density(rho_tilde: &[f64], h: &[f64], area: f64, tol: f64, upper: bool) -> (Vec<f64>, f64) {
    let delta = lower_bound(rho_tilde, h, area, tol);
    let cap = if upper { density_norms(rho_tilde, h).1 / (area * area) / tol.sqrt() } else { f64::INFINITY };
    let bar = rho_tilde
        .iter()
        .map(|&r| {
            let sign = if r < 0.0 { -1.0 } else { 1.0 };
            sign * r.abs().max(delta).min(cap.max(delta))
        })
        .collect();
    (bar, delta)
}

/// Indicators `rho_bar h^4` with their signed and unsigned sums.
pub fn indicators(rho_bar: &[f64], h: &[f64]) -> (Vec<f64>, f64, f64) {
    let r: Vec<f64> = rho_bar.iter().zip(h).map(|(p, h)| p * h.powi(4)).collect();
    let e = r.iter().sum();
    let e_abs = r.iter().map(|x| x.abs()).sum();
    (r, e, e_abs)
}

#[derive(Clone, Debug, Default)]
pub struct DensityField {
    pub rho_tilde: Vec<f64>,
    pub rho_bar: Vec<f64>,
    pub indicators: Vec<f64>,
    pub delta: f64,
    pub e_est: f64,
    pub e_est_abs: f64,
    /// `L1` norm of the bounded density.
    pub l1: f64,
    /// `L1/2` quasi-norm of the bounded density.
    pub l_half: f64,
    /// `int |rho_bar|^(1/2)`.
    pub scaling_numerator: f64,
}

impl DensityField {
    pub fn new(rho_tilde: Vec<f64>, h: &[f64], area: f64, tol: f64, upper: bool) -> Self {
        let (rho_bar, delta) = bound_density(&rho_tilde, h, area, tol, upper);
        let (ind, e_est, e_est_abs) = indicators(&rho_bar, h);
        let (l1, l_half) = density_norms(&rho_bar, h);
        let scaling_numerator = scaling_numerator(&rho_bar, h);
        Self { rho_tilde, rho_bar, indicators: ind, delta, e_est, e_est_abs, l1, l_half, scaling_numerator }
    }
}
