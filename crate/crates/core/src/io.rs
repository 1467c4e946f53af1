//! Hierarchy persistence and CSV tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::{HierarchyConfig, MeshHierarchy};
use crate::error::{Error, Result};
use crate::fem::Problem;
use crate::field::{FieldSample, FourierMode};
use crate::mesh::QuadMesh;
use crate::mlmc::{level_stats, LevelRecord, Sample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshEntry {
    pub file: String,
    pub tol: f64,
    pub script_n: f64,
    pub rounds: usize,
    pub cells: usize,
    pub vertices: usize,
    pub smallest_cell: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyManifest {
    pub config: HierarchyConfig,
    /// Constant coefficient the meshes were adapted to.
    pub field: f64,
    pub base: String,
    pub meshes: Vec<MeshEntry>,
    /// Modes of the random field basis, when one is used in sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<FourierMode>>,
}

/// Writes every mesh generated so far and a manifest. Repeated calls with
/// the same hierarchy produce identical bytes.
pub fn save_hierarchy(dir: &Path, h: &MeshHierarchy, field: f64, basis: Option<Vec<FourierMode>>) -> Result<HierarchyManifest> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("base.mesh"), h.base().to_text())?;
    let mut meshes = Vec::new();
    for (k, l) in h.levels().iter().enumerate() {
        let file = format!("mesh_{k:02}.mesh");
        fs::write(dir.join(&file), l.ctx.mesh.to_text())?;
        meshes.push(MeshEntry {
            file,
            tol: l.tol,
            script_n: l.script_n,
            rounds: l.rounds,
            cells: l.ctx.mesh.n_leaves(),
            vertices: l.ctx.mesh.n_vertices(),
            smallest_cell: l.ctx.mesh.smallest_cell_size(),
        });
    }
    let manifest = HierarchyManifest { config: *h.config(), field, base: "base.mesh".into(), meshes, basis };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn load_hierarchy(dir: &Path, problem: Problem) -> Result<(MeshHierarchy, HierarchyManifest)> {
    let manifest: HierarchyManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let base = QuadMesh::from_text(&fs::read_to_string(dir.join(&manifest.base))?)?;
    let h = MeshHierarchy::new(base, FieldSample::Constant(manifest.field), problem, manifest.config)?;
    let meshes = manifest
        .meshes
        .iter()
        .map(|e| Ok((QuadMesh::from_text(&fs::read_to_string(dir.join(&e.file))?)?, e.script_n, e.rounds)))
        .collect::<Result<Vec<_>>>()?;
    h.restore(meshes)?;
    Ok((h, manifest))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: usize,
    pub mean: f64,
    pub e: f64,
    pub v: f64,
    pub w: f64,
    pub m: u64,
    pub mean_lo: f64,
    pub mean_hi: f64,
    pub v_lo: f64,
    pub v_hi: f64,
    pub zeros: u64,
}

pub fn level_rows(records: &[LevelRecord]) -> Vec<LevelRow> {
    level_stats(records)
        .iter()
        .zip(records)
        .map(|(s, r)| LevelRow {
            level: s.level,
            mean: s.mean,
            e: s.e,
            v: s.v,
            w: s.w,
            m: s.m,
            mean_lo: s.mean_ci.0,
            mean_hi: s.mean_ci.1,
            v_lo: s.v_ci.0,
            v_hi: s.v_ci.1,
            zeros: r.zeros,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub key: String,
    pub level: usize,
    pub k_coarse: Option<usize>,
    pub k_fine: usize,
    pub delta: f64,
    pub q_fine: f64,
    pub q_coarse: f64,
    pub e_est: f64,
    pub work: f64,
}

pub fn sample_rows(seed: u64, samples: &[Sample]) -> Vec<SampleRow> {
    samples
        .iter()
        .map(|s| SampleRow {
            key: format!("{seed}:{}:{}", s.level, s.n),
            level: s.level,
            k_coarse: s.k_coarse,
            k_fine: s.k_fine,
            delta: s.delta(),
            q_fine: s.q_fine,
            q_coarse: s.q_coarse,
            e_est: s.e_est,
            work: s.work.total(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkRow {
    pub tol: f64,
    pub realization: usize,
    pub estimate: f64,
    pub error: f64,
    pub levels: usize,
    pub total_work: f64,
    pub sqrt_work_tol2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub level: usize,
    pub k_fine: usize,
    pub e_est: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub ladder: String,
    pub mesh: usize,
    pub dofs: usize,
    pub cells: usize,
    pub smallest_cell: f64,
    pub qoi: f64,
    pub e_est: f64,
    pub e_est_abs: f64,
    pub l1: f64,
    pub l_half: f64,
}

/// Writes `rows` as CSV preceded by a `# config <hash>` line.
pub fn write_csv<T: Serialize>(path: &Path, hash: &str, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "# config {hash}")?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r).map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
        }
        w.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    r.deserialize().map(|x| x.map_err(|e| Error::InvalidParameter(format!("csv: {e}")))).collect()
}
