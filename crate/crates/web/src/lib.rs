//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Mesh cells are returned as flat `[x0, y0, size, ...]` arrays and per-cell
//! values are appended as a fourth entry when present.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use amlmc::adapt::MeshHierarchy;
use amlmc::context::SolveMode;
use amlmc::field::{sample_rng, Coefficient};
use amlmc::mesh::QuadMesh;
use amlmc::setup::{Example, Setup};
use wasm_bindgen::prelude::*;

const DEMO_TAG: u8 = 5;
/// Deepest mesh the demo builds; deeper meshes take seconds in the browser.
pub const MAX_MESH: usize = 8;

thread_local! {
    static HIERARCHIES: RefCell<HashMap<(u8, u64), Arc<MeshHierarchy>>> = RefCell::new(HashMap::new());
    static COEFFICIENTS: RefCell<HashMap<u64, Coefficient>> = RefCell::new(HashMap::new());
}

fn setup(example: u8, sigma2: f64) -> amlmc::Result<Setup> {
    let s = Setup { max_depth: MAX_MESH + 1, ..Setup::new(Example::try_from(example)?, sigma2) };
    s.validate()?;
    Ok(s)
}

fn hierarchy(s: &Setup) -> amlmc::Result<Arc<MeshHierarchy>> {
    let key = (u8::from(s.example), s.sigma2.to_bits());
    if let Some(h) = HIERARCHIES.with(|c| c.borrow().get(&key).cloned()) {
        return Ok(h);
    }
    let h = Arc::new(s.hierarchy()?);
    HIERARCHIES.with(|c| c.borrow_mut().insert(key, h.clone()));
    Ok(h)
}

fn matern(sigma2: f64) -> amlmc::Result<Coefficient> {
    if let Some(c) = COEFFICIENTS.with(|c| c.borrow().get(&sigma2.to_bits()).cloned()) {
        return Ok(c);
    }
    let c = setup(2, sigma2)?.coefficient()?;
    COEFFICIENTS.with(|m| m.borrow_mut().insert(sigma2.to_bits(), c.clone()));
    Ok(c)
}

fn check_mesh(k: usize) -> amlmc::Result<()> {
    if k > MAX_MESH {
        return Err(amlmc::Error::InvalidParameter(format!("mesh index {k} above {MAX_MESH}")));
    }
    Ok(())
}

fn cells(mesh: &QuadMesh, values: Option<&[f64]>) -> Vec<f64> {
    let stride = if values.is_some() { 4 } else { 3 };
    let mut out = Vec::with_capacity(stride * mesh.n_leaves());
    for k in 0..mesh.n_leaves() {
        let [x, y] = mesh.leaf_origin(k);
        out.extend([x, y, mesh.leaf_size(k)]);
        if let Some(v) = values {
            out.push(v[k]);
        }
    }
    out
}

/// Cells of adaptive mesh `k` for example 0 or the unit coefficient.
pub fn mesh_cells(example: u8, k: usize) -> amlmc::Result<Vec<f64>> {
    check_mesh(k)?;
    let s = setup(example, 1.0)?;
    Ok(cells(&hierarchy(&s)?.level(k)?.ctx.mesh, None))
}

/// Log-coefficient of one Matérn draw on an `n` by `n / 2` grid of cell
/// centres, row by row from the bottom.
pub fn field_grid(sigma2: f64, seed: u64, n: usize) -> amlmc::Result<Vec<f64>> {
    if n < 2 || n > 512 {
        return Err(amlmc::Error::InvalidParameter(format!("grid size {n} outside 2..=512")));
    }
    let field = matern(sigma2)?.draw(&mut sample_rng(seed, DEMO_TAG, 0, 0))?;
    let ny = n / 2;
    let h = 2.0 / n as f64;
    let mut out = Vec::with_capacity(n * ny);
    for j in 0..ny {
        for i in 0..n {
            let p = [-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h];
            out.push(field.eval(p).ln());
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityResult {
    /// `[x0, y0, size, log10 |rho|]` per cell.
    pub cells: Vec<f64>,
    pub qoi: f64,
    pub e_est: f64,
}

/// Bounded error density of the same Matérn draw as [`field_grid`] on
/// hierarchy mesh `k`.
pub fn density(sigma2: f64, seed: u64, k: usize) -> amlmc::Result<DensityResult> {
    check_mesh(k)?;
    let s = setup(2, sigma2)?;
    let mesh = hierarchy(&s)?.level(k)?;
    let field = matern(sigma2)?.draw(&mut sample_rng(seed, DEMO_TAG, 0, 0))?;
    let e = mesh.evaluate(&field, SolveMode::Reference, s.adapt.upper_bound)?;
    let log_rho: Vec<f64> = e.density.rho_bar.iter().map(|r| r.abs().max(1e-300).log10()).collect();
    Ok(DensityResult { cells: cells(&mesh.ctx.mesh, Some(&log_rho)), qoi: e.qoi, e_est: e.density.e_est })
}

fn js(e: amlmc::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = meshCells)]
pub fn mesh_cells_js(example: u8, k: usize) -> Result<Vec<f64>, JsError> {
    mesh_cells(example, k).map_err(js)
}

#[wasm_bindgen(js_name = fieldGrid)]
pub fn field_grid_js(sigma2: f64, seed: u32, n: usize) -> Result<Vec<f64>, JsError> {
    field_grid(sigma2, seed as u64, n).map_err(js)
}

#[wasm_bindgen]
pub struct DensityView {
    inner: DensityResult,
}

#[wasm_bindgen]
impl DensityView {
    pub fn cells(&self) -> Vec<f64> {
        self.inner.cells.clone()
    }

    pub fn qoi(&self) -> f64 {
        self.inner.qoi
    }

    #[wasm_bindgen(js_name = errorEstimate)]
    pub fn error_estimate(&self) -> f64 {
        self.inner.e_est
    }
}

#[wasm_bindgen(js_name = errorDensity)]
pub fn error_density_js(sigma2: f64, seed: u32, k: usize) -> Result<DensityView, JsError> {
    density(sigma2, seed as u64, k).map(|inner| DensityView { inner }).map_err(js)
}

#[wasm_bindgen(js_name = maxMesh)]
pub fn max_mesh() -> usize {
    MAX_MESH
}
