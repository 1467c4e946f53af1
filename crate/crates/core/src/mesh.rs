//! Quadtree meshes of square cells with 2:1 edge balance.
//!
//! Cells live in an arena. Coordinates are stored as integers in units of
//! `h0 / 2^MAX_LEVEL`, so vertex identity is exact and hashing is cheap.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_LEVEL: u32 = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VertexKind {
    Interior,
    Dirichlet,
    Neumann,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cell {
    pub level: u32,
    pub i: u32,
    pub j: u32,
    pub parent: Option<u32>,
    /// Lower-left, lower-right, upper-left, upper-right.
    pub children: Option<[u32; 4]>,
}

/// Hanging vertex -> the two endpoints of the coarse edge it sits on.
pub type ConstraintMap = BTreeMap<usize, [(usize, f64); 2]>;

#[derive(Clone, Debug)]
pub struct QuadMesh {
    domain: Rect,
    nx: u32,
    ny: u32,
    h0: f64,
    neumann_top: Option<(f64, f64)>,
    cells: Vec<Cell>,
    leaves: Vec<u32>,
    leaf_of: Vec<u32>,
    verts: Vec<(i64, i64)>,
    vert_index: HashMap<(i64, i64), u32>,
    cell_verts: Vec<[u32; 4]>,
    kinds: Vec<VertexKind>,
    hanging: Vec<Option<[u32; 2]>>,
    dofs: Vec<Option<u32>>,
    n_dofs: usize,
}

const DIRS: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

impl QuadMesh {
    /// Uniform `nx` x `ny` grid of square cells over `domain`.
    ///
    /// `neumann_top` is an x-interval on the top edge carrying a natural
    /// boundary condition; the rest of the boundary is Dirichlet.
    pub fn new(domain: Rect, nx: usize, ny: usize, neumann_top: Option<(f64, f64)>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidMesh("nx and ny must be at least 1".into()));
        }
        let (w, h) = (domain.x1 - domain.x0, domain.y1 - domain.y0);
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidMesh("domain must have positive area".into()));
        }
        let hx = w / nx as f64;
        let hy = h / ny as f64;
        if ((hx - hy) / hx).abs() > 1e-12 {
            return Err(Error::InvalidMesh(format!("cells must be square, got {hx} x {hy}")));
        }
        let mut cells = Vec::with_capacity(nx * ny);
        for j in 0..ny as u32 {
            for i in 0..nx as u32 {
                cells.push(Cell { level: 0, i, j, parent: None, children: None });
            }
        }
        let mut mesh = Self {
            domain,
            nx: nx as u32,
            ny: ny as u32,
            h0: hx,
            neumann_top,
            cells,
            leaves: Vec::new(),
            leaf_of: Vec::new(),
            verts: Vec::new(),
            vert_index: HashMap::new(),
            cell_verts: Vec::new(),
            kinds: Vec::new(),
            hanging: Vec::new(),
            dofs: Vec::new(),
            n_dofs: 0,
        };
        mesh.rebuild();
        Ok(mesh)
    }

    /// The rectangle `[-1,1] x [-1,0]` with a Neumann segment `[-1,0] x {0}`.
    pub fn reference_domain(nx: usize, ny: usize) -> Result<Self> {
        Self::new(Rect::new(-1.0, -1.0, 1.0, 0.0), nx, ny, Some((-1.0, 0.0)))
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn base_dims(&self) -> (usize, usize) {
        (self.nx as usize, self.ny as usize)
    }

    pub fn neumann_top(&self) -> Option<(f64, f64)> {
        self.neumann_top
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_cell(&self, leaf: usize) -> &Cell {
        &self.cells[self.leaves[leaf] as usize]
    }

    pub fn leaf_level(&self, leaf: usize) -> u32 {
        self.leaf_cell(leaf).level
    }

    pub fn leaf_size(&self, leaf: usize) -> f64 {
        self.h0 / (1u64 << self.leaf_level(leaf)) as f64
    }

    /// Lower-left corner of a leaf.
    pub fn leaf_origin(&self, leaf: usize) -> [f64; 2] {
        let c = self.leaf_cell(leaf);
        let h = self.leaf_size(leaf);
        [self.domain.x0 + c.i as f64 * h, self.domain.y0 + c.j as f64 * h]
    }

    pub fn leaf_center(&self, leaf: usize) -> [f64; 2] {
        let o = self.leaf_origin(leaf);
        let h = self.leaf_size(leaf);
        [o[0] + 0.5 * h, o[1] + 0.5 * h]
    }

    /// Corner vertices of a leaf in the order lower-left, lower-right,
    /// upper-left, upper-right.
    pub fn leaf_vertices(&self, leaf: usize) -> [usize; 4] {
        self.cell_verts[leaf].map(|v| v as usize)
    }

    pub fn n_vertices(&self) -> usize {
        self.verts.len()
    }

    /// Number of vertices, counting hanging and Dirichlet ones.
    pub fn dof_count(&self) -> usize {
        self.verts.len()
    }

    pub fn vertex_key(&self, v: usize) -> (i64, i64) {
        self.verts[v]
    }

    pub fn vertex_point(&self, v: usize) -> [f64; 2] {
        let (x, y) = self.verts[v];
        self.int_to_point(x, y)
    }

    pub fn vertex_kind(&self, v: usize) -> VertexKind {
        self.kinds[v]
    }

    pub fn hanging_masters(&self, v: usize) -> Option<[usize; 2]> {
        self.hanging[v].map(|m| m.map(|x| x as usize))
    }

    pub fn is_hanging(&self, v: usize) -> bool {
        self.hanging[v].is_some()
    }

    pub fn find_vertex(&self, key: (i64, i64)) -> Option<usize> {
        self.vert_index.get(&key).map(|&v| v as usize)
    }

    /// Index of the unknown for a vertex, `None` for Dirichlet or hanging.
    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        self.dofs[v].map(|d| d as usize)
    }

    pub fn n_free(&self) -> usize {
        self.n_dofs
    }

    pub fn smallest_cell_size(&self) -> f64 {
        (0..self.n_leaves()).map(|k| self.leaf_size(k)).fold(f64::INFINITY, f64::min)
    }

    pub fn max_level(&self) -> u32 {
        (0..self.n_leaves()).map(|k| self.leaf_level(k)).max().unwrap_or(0)
    }

    pub fn n_hanging(&self) -> usize {
        self.hanging.iter().filter(|h| h.is_some()).count()
    }

    pub fn int_to_point(&self, x: i64, y: i64) -> [f64; 2] {
        let unit = self.h0 / (1u64 << MAX_LEVEL) as f64;
        [self.domain.x0 + x as f64 * unit, self.domain.y0 + y as f64 * unit]
    }

    /// Integer length of a cell edge at `level`.
    pub fn int_size(level: u32) -> i64 {
        1i64 << (MAX_LEVEL - level)
    }

    pub fn hanging_constraints(&self) -> ConstraintMap {
        self.hanging
            .iter()
            .enumerate()
            .filter_map(|(v, m)| m.map(|[a, b]| (v, [(a as usize, 0.5), (b as usize, 0.5)])))
            .collect()
    }

    /// Deepest existing cell covering position `(i, j)` of the grid at `level`.
    fn find_cell(&self, level: u32, i: i64, j: i64) -> Option<u32> {
        if i < 0 || j < 0 {
            return None;
        }
        let (ri, rj) = (i >> level, j >> level);
        if ri >= self.nx as i64 || rj >= self.ny as i64 {
            return None;
        }
        let mut c = (rj * self.nx as i64 + ri) as u32;
        let mut l = 0;
        while l < level {
            match self.cells[c as usize].children {
                Some(ch) => {
                    let shift = level - l - 1;
                    let bx = (i >> shift) & 1;
                    let by = (j >> shift) & 1;
                    c = ch[(by * 2 + bx) as usize];
                    l += 1;
                }
                None => break,
            }
        }
        Some(c)
    }

    fn split(&mut self, c: u32) {
        if self.cells[c as usize].children.is_some() {
            return;
        }
        let Cell { level, i, j, .. } = self.cells[c as usize];
        if level >= MAX_LEVEL {
            return;
        }
        for (di, dj) in DIRS {
            while let Some(n) = self.find_cell(level, i as i64 + di, j as i64 + dj) {
                if self.cells[n as usize].level < level {
                    self.split(n);
                } else {
                    break;
                }
            }
        }
        let base = self.cells.len() as u32;
        for q in 0..4u32 {
            self.cells.push(Cell {
                level: level + 1,
                i: 2 * i + (q & 1),
                j: 2 * j + (q >> 1),
                parent: Some(c),
                children: None,
            });
        }
        self.cells[c as usize].children = Some([base, base + 1, base + 2, base + 3]);
    }

    /// Splits the marked leaves and refines further until 2:1 balance holds.
    pub fn refine_cells(&self, marks: &[usize]) -> Result<QuadMesh> {
        let mut out = self.clone();
        let targets: Vec<u32> = marks
            .iter()
            .map(|&m| {
                self.leaves
                    .get(m)
                    .copied()
                    .ok_or_else(|| Error::InvalidMesh(format!("leaf index {m} out of range")))
            })
            .collect::<Result<_>>()?;
        for c in targets {
            out.split(c);
        }
        out.rebuild();
        Ok(out)
    }

    pub fn refine_uniform(&self, times: usize) -> QuadMesh {
        let mut m = self.clone();
        for _ in 0..times {
            let all: Vec<usize> = (0..m.n_leaves()).collect();
            m = m.refine_cells(&all).expect("leaf indices in range");
        }
        m
    }

    /// Checks edge adjacency between all pairs of leaves.
    pub fn is_balanced(&self) -> bool {
        (0..self.n_leaves()).all(|k| {
            let Cell { level, i, j, .. } = *self.leaf_cell(k);
            DIRS.iter().all(|&(di, dj)| match self.find_cell(level, i as i64 + di, j as i64 + dj) {
                Some(n) => self.cells[n as usize].level + 1 >= level,
                None => true,
            })
        })
    }

    fn collect_leaves(&self, c: u32, out: &mut Vec<u32>) {
        match self.cells[c as usize].children {
            Some(ch) => ch.iter().for_each(|&k| self.collect_leaves(k, out)),
            None => out.push(c),
        }
    }

    fn rebuild(&mut self) {
        let mut leaves = Vec::new();
        for r in 0..(self.nx * self.ny) {
            self.collect_leaves(r, &mut leaves);
        }
        let mut corner_keys = Vec::with_capacity(leaves.len());
        let mut keys = Vec::with_capacity(leaves.len() * 4);
        for &c in &leaves {
            let cell = &self.cells[c as usize];
            let s = Self::int_size(cell.level);
            let (x, y) = (cell.i as i64 * s, cell.j as i64 * s);
            let k = [(x, y), (x + s, y), (x, y + s), (x + s, y + s)];
            keys.extend_from_slice(&k);
            corner_keys.push(k);
        }
        keys.sort_unstable_by_key(|&(x, y)| (y, x));
        keys.dedup();
        let vert_index: HashMap<(i64, i64), u32> =
            keys.iter().enumerate().map(|(n, &k)| (k, n as u32)).collect();
        let cell_verts: Vec<[u32; 4]> =
            corner_keys.iter().map(|k| k.map(|key| vert_index[&key])).collect();

        let mut hanging = vec![None; keys.len()];
        for (ck, cv) in corner_keys.iter().zip(&cell_verts) {
            for (a, b) in [(0, 1), (2, 3), (0, 2), (1, 3)] {
                let mid = ((ck[a].0 + ck[b].0) / 2, (ck[a].1 + ck[b].1) / 2);
                if let Some(&m) = vert_index.get(&mid) {
                    hanging[m as usize] = Some([cv[a], cv[b]]);
                }
            }
        }

        let top = self.ny as i64 * Self::int_size(0);
        let right = self.nx as i64 * Self::int_size(0);
        let kinds: Vec<VertexKind> = keys
            .iter()
            .enumerate()
            .map(|(n, &(x, y))| {
                let on_boundary = x == 0 || y == 0 || x == right || y == top;
                if !on_boundary {
                    return VertexKind::Interior;
                }
                if y == top && x > 0 && x < right {
                    if let Some((a, b)) = self.neumann_top {
                        let px = self.int_to_point(x, y)[0];
                        let eps = 1e-12 * self.h0;
                        if px > a + eps && px < b - eps {
                            return VertexKind::Neumann;
                        }
                    }
                }
                debug_assert!(hanging[n].is_none());
                VertexKind::Dirichlet
            })
            .collect();

        let mut n_dofs = 0u32;
        let dofs = (0..keys.len())
            .map(|v| {
                if kinds[v] == VertexKind::Dirichlet || hanging[v].is_some() {
                    None
                } else {
                    n_dofs += 1;
                    Some(n_dofs - 1)
                }
            })
            .collect();

        let mut leaf_of = vec![u32::MAX; self.cells.len()];
        for (n, &c) in leaves.iter().enumerate() {
            leaf_of[c as usize] = n as u32;
        }
        self.leaf_of = leaf_of;
        self.leaves = leaves;
        self.verts = keys;
        self.vert_index = vert_index;
        self.cell_verts = cell_verts;
        self.kinds = kinds;
        self.hanging = hanging;
        self.dofs = dofs;
        self.n_dofs = n_dofs as usize;
    }

    /// Groups vertices into horizontal lines (`by_y = true`) or vertical ones.
    ///
    /// Rows of root cells are processed recursively: split cells send their
    /// lower children to one pass and upper children to another (left and
    /// right children for vertical lines), and each pass records the edge
    /// vertices of its unsplit cells. Lines with equal coordinates merge.
    pub fn assemble_lines(&self) -> LineStructure {
        LineStructure { y_lines: self.lines_along(true), x_lines: self.lines_along(false) }
    }

    fn lines_along(&self, by_y: bool) -> BTreeMap<i64, Vec<usize>> {
        let mut dict: BTreeMap<i64, BTreeMap<i64, usize>> = BTreeMap::new();
        let (rows, cols) = if by_y { (self.ny, self.nx) } else { (self.nx, self.ny) };
        for r in 0..rows {
            let roots: Vec<u32> = (0..cols)
                .map(|c| if by_y { r * self.nx + c } else { c * self.nx + r })
                .collect();
            self.assemble_line(&roots, by_y, &mut dict);
        }
        dict.into_iter().map(|(k, line)| (k, line.into_values().collect())).collect()
    }

    fn assemble_line(&self, cells: &[u32], by_y: bool, dict: &mut BTreeMap<i64, BTreeMap<i64, usize>>) {
        // Child slots on the near side of the sweep and on the far side.
        let (near, far) = if by_y { ([0, 1], [2, 3]) } else { ([0, 2], [1, 3]) };
        let mut left = Vec::with_capacity(cells.len() * 2);
        let mut right = Vec::new();
        for &c in cells {
            match self.cells[c as usize].children {
                Some(ch) => {
                    left.extend(near.iter().map(|&q| ch[q]));
                    right.extend(far.iter().map(|&q| ch[q]));
                }
                None => left.push(c),
            }
        }
        if right.is_empty() {
            for &c in cells {
                let v = self.cell_verts[self.leaf_of[c as usize] as usize];
                for q in near.iter().chain(far.iter()) {
                    let (x, y) = self.verts[v[*q] as usize];
                    let (key, along) = if by_y { (y, x) } else { (x, y) };
                    dict.entry(key).or_default().insert(along, v[*q] as usize);
                }
            }
            return;
        }
        self.assemble_line(&left, by_y, dict);
        self.assemble_line(&right, by_y, dict);
    }

    /// Index of the leaf for every arena cell (`usize::MAX` for inner cells).
    pub fn leaf_of_cell(&self, c: usize) -> Option<usize> {
        match self.leaf_of[c] {
            u32::MAX => None,
            n => Some(n as usize),
        }
    }

    /// Whether the point at integer position `along` on the horizontal line
    /// `y = at` (vertical line `x = at` when `horizontal` is false) lies on
    /// a cell edge rather than inside a cell.
    pub fn on_cell_edge(&self, horizontal: bool, along: i64, at: i64) -> bool {
        let (x, y) = if horizontal { (along, at) } else { (at, along) };
        let top = self.ny as i64 * Self::int_size(0);
        let right = self.nx as i64 * Self::int_size(0);
        if (horizontal && (at == 0 || at == top)) || (!horizontal && (at == 0 || at == right)) {
            return true;
        }
        match self.find_cell(MAX_LEVEL, x, y) {
            Some(c) => {
                let cell = &self.cells[c as usize];
                let s = Self::int_size(cell.level);
                if horizontal {
                    cell.j as i64 * s == y
                } else {
                    cell.i as i64 * s == x
                }
            }
            None => false,
        }
    }

    /// Leaf containing a point, if the point lies in the closed domain.
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        let unit = self.h0 / (1u64 << MAX_LEVEL) as f64;
        let fx = ((p[0] - self.domain.x0) / unit).floor() as i64;
        let fy = ((p[1] - self.domain.y0) / unit).floor() as i64;
        let right = self.nx as i64 * Self::int_size(0);
        let top = self.ny as i64 * Self::int_size(0);
        let x = fx.clamp(0, right - 1);
        let y = fy.clamp(0, top - 1);
        if fx < -1 || fy < -1 || fx > right || fy > top {
            return None;
        }
        let c = self.find_cell(MAX_LEVEL, x, y)?;
        self.leaf_of_cell(c as usize)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let d = self.domain;
        let _ = writeln!(s, "amlmc-mesh 1");
        let _ = writeln!(s, "domain {:?} {:?} {:?} {:?}", d.x0, d.y0, d.x1, d.y1);
        let _ = writeln!(s, "base {} {}", self.nx, self.ny);
        match self.neumann_top {
            Some((a, b)) => {
                let _ = writeln!(s, "neumann_top {a:?} {b:?}");
            }
            None => {
                let _ = writeln!(s, "neumann_top none");
            }
        }
        let _ = writeln!(s, "cells {}", self.n_leaves());
        for k in 0..self.n_leaves() {
            let c = self.leaf_cell(k);
            let _ = writeln!(s, "{} {} {}", c.level, c.i, c.j);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<QuadMesh> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            let (n, l) = lines.next().ok_or(Error::Parse { line: 0, msg: format!("missing {what}") })?;
            Ok((n + 1, l.split_whitespace().collect()))
        };
        let perr = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };
        let num = |line: usize, s: &str| -> Result<f64> { s.parse().map_err(|_| perr(line, "bad number")) };
        let int = |line: usize, s: &str| -> Result<u32> { s.parse().map_err(|_| perr(line, "bad integer")) };

        let (n, h) = next("header")?;
        if h != ["amlmc-mesh", "1"] {
            return Err(perr(n, "unknown header"));
        }
        let (n, d) = next("domain")?;
        if d.len() != 5 || d[0] != "domain" {
            return Err(perr(n, "expected domain x0 y0 x1 y1"));
        }
        let domain = Rect::new(num(n, d[1])?, num(n, d[2])?, num(n, d[3])?, num(n, d[4])?);
        let (n, b) = next("base")?;
        if b.len() != 3 || b[0] != "base" {
            return Err(perr(n, "expected base nx ny"));
        }
        let (nx, ny) = (int(n, b[1])? as usize, int(n, b[2])? as usize);
        let (n, t) = next("neumann_top")?;
        let neumann_top = match t.as_slice() {
            ["neumann_top", "none"] => None,
            ["neumann_top", a, b] => Some((num(n, a)?, num(n, b)?)),
            _ => return Err(perr(n, "expected neumann_top a b | none")),
        };
        let (n, c) = next("cells")?;
        if c.len() != 2 || c[0] != "cells" {
            return Err(perr(n, "expected cells N"));
        }
        let count = int(n, c[1])? as usize;
        let mut mesh = QuadMesh::new(domain, nx, ny, neumann_top)?;
        let mut wanted = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, f) = next("cell")?;
            if f.len() != 3 {
                return Err(perr(n, "expected level i j"));
            }
            wanted.push((n, int(n, f[0])?, int(n, f[1])? as i64, int(n, f[2])? as i64));
        }
        for &(n, level, i, j) in &wanted {
            if level > MAX_LEVEL {
                return Err(perr(n, "level too deep"));
            }
            loop {
                let c = mesh.find_cell(level, i, j).ok_or_else(|| perr(n, "cell outside domain"))?;
                let cl = mesh.cells[c as usize].level;
                if cl >= level {
                    break;
                }
                mesh.split(c);
            }
        }
        mesh.rebuild();
        let ok = mesh.n_leaves() == count
            && wanted.iter().enumerate().all(|(k, &(_, l, i, j))| {
                let c = mesh.leaf_cell(k);
                c.level == l && c.i as i64 == i && c.j as i64 == j
            });
        if !ok {
            return Err(Error::Parse { line: 0, msg: "cell list is not a balanced leaf set".into() });
        }
        Ok(mesh)
    }
}

impl PartialEq for QuadMesh {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain
            && self.nx == other.nx
            && self.ny == other.ny
            && self.neumann_top == other.neumann_top
            && self.n_leaves() == other.n_leaves()
            && (0..self.n_leaves()).all(|k| {
                let (a, b) = (self.leaf_cell(k), other.leaf_cell(k));
                a.level == b.level && a.i == b.i && a.j == b.j
            })
            && self.kinds == other.kinds
    }
}

#[derive(Clone, Debug, Default)]
pub struct LineStructure {
    /// Horizontal lines keyed by integer y, vertices sorted by x.
    pub y_lines: BTreeMap<i64, Vec<usize>>,
    /// Vertical lines keyed by integer x, vertices sorted by y.
    pub x_lines: BTreeMap<i64, Vec<usize>>,
}
