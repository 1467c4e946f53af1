//! Deterministic goal-oriented generation of the auxiliary mesh hierarchy.

use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::context::{Evaluation, MeshContext, SolveMode, WorkUnits};
use crate::error::{Error, Result};
use crate::fem::Problem;
use crate::field::FieldSample;
use crate::mesh::QuadMesh;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptParams {
    pub c_refine: f64,
    pub c_stop: f64,
    /// Growth factor of the cell-count control between levels.
    pub growth: f64,
    /// Iterative solver tolerance as a fraction of the level tolerance.
    pub solver_fraction: f64,
    /// Cap the density magnitude from above as well as below.
    pub upper_bound: bool,
    /// Refinement rounds allowed per level before giving up.
    pub max_rounds: usize,
}

impl Default for AdaptParams {
    fn default() -> Self {
        Self { c_refine: 2.5, c_stop: 3.0, growth: 2.0, solver_fraction: 0.1, upper_bound: false, max_rounds: 200 }
    }
}

/// `TOL_k = first * ratio^k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSequence {
    pub first: f64,
    pub ratio: f64,
}

impl Default for ToleranceSequence {
    fn default() -> Self {
        Self { first: 1.0 / 32.0, ratio: 0.5 }
    }
}

impl ToleranceSequence {
    pub fn tol(&self, k: usize) -> f64 {
        self.first * self.ratio.powi(k as i32)
    }
}

pub fn stopping_satisfied(indicators: &[f64], tol: f64, script_n: f64, c_stop: f64) -> bool {
    let max = indicators.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    max < c_stop * tol / script_n
}

pub fn mark_cells(indicators: &[f64], tol: f64, script_n: f64, c_refine: f64) -> Vec<usize> {
    let threshold = c_refine * tol / script_n;
    indicators.iter().enumerate().filter(|(_, r)| r.abs() >= threshold).map(|(k, _)| k).collect()
}

/// Goal quantities of a mesh for the unit coefficient. For a spatially
/// constant coefficient `a` the goal value and error estimate scale as
/// `1/a` and the scaling numerator as `a^(-1/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitSummary {
    pub qoi: f64,
    pub e_est: f64,
    pub e_est_abs: f64,
    pub scaling_numerator: f64,
    pub work: WorkUnits,
}

/// One mesh with the tolerance its density bound refers to.
#[derive(Debug)]
pub struct LevelMesh {
    pub ctx: MeshContext,
    pub tol: f64,
    /// Cell-count control at exit of the refinement loop.
    pub script_n: f64,
    /// Refinement rounds spent building this mesh.
    pub rounds: usize,
    unit: OnceLock<UnitSummary>,
}

impl LevelMesh {
    pub fn new(ctx: MeshContext, tol: f64, script_n: f64, rounds: usize) -> Self {
        Self { ctx, tol, script_n, rounds, unit: OnceLock::new() }
    }

    pub fn evaluate(&self, field: &FieldSample, mode: SolveMode, upper_bound: bool) -> Result<Evaluation> {
        self.ctx.evaluate(field, mode, self.tol, upper_bound)
    }

    /// Cached reference solution for the unit coefficient.
    pub fn unit_summary(&self, upper_bound: bool) -> Result<UnitSummary> {
        if let Some(s) = self.unit.get() {
            return Ok(*s);
        }
        let e = self.evaluate(&FieldSample::Constant(1.0), SolveMode::Reference, upper_bound)?;
        let s = UnitSummary {
            qoi: e.qoi,
            e_est: e.density.e_est,
            e_est_abs: e.density.e_est_abs,
            scaling_numerator: e.density.scaling_numerator,
            work: e.work,
        };
        Ok(*self.unit.get_or_init(|| s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub params: AdaptParams,
    pub tolerances: ToleranceSequence,
    /// Largest number of meshes the hierarchy may grow to.
    pub max_depth: usize,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self { params: AdaptParams::default(), tolerances: ToleranceSequence::default(), max_depth: 14 }
    }
}

/// Adaptive meshes for a decreasing tolerance sequence, built from a
/// deterministic coefficient and extended on demand.
#[derive(Debug)]
pub struct MeshHierarchy {
    base: QuadMesh,
    field: FieldSample,
    problem: Problem,
    config: HierarchyConfig,
    levels: RwLock<Vec<Arc<LevelMesh>>>,
}

impl MeshHierarchy {
    pub fn new(base: QuadMesh, field: FieldSample, problem: Problem, config: HierarchyConfig) -> Result<Self> {
        let p = &config.params;
        if !(p.growth > 1.0 && p.c_refine > 0.0 && p.c_stop > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid adaptivity parameters {p:?}")));
        }
        if !(config.tolerances.first > 0.0 && config.tolerances.ratio > 0.0 && config.tolerances.ratio < 1.0) {
            return Err(Error::InvalidParameter("tolerances must be positive and strictly decreasing".into()));
        }
        Ok(Self { base, field, problem, config, levels: RwLock::new(Vec::new()) })
    }

    /// Builds the first `depth` meshes eagerly.
    pub fn generate(base: QuadMesh, field: FieldSample, problem: Problem, config: HierarchyConfig, depth: usize) -> Result<Self> {
        let h = Self::new(base, field, problem, config)?;
        if depth > 0 {
            h.level(depth - 1)?;
        }
        Ok(h)
    }

    pub fn config(&self) -> &HierarchyConfig {
        &self.config
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn base(&self) -> &QuadMesh {
        &self.base
    }

    pub fn len(&self) -> usize {
        self.levels.read().expect("hierarchy lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tol(&self, k: usize) -> f64 {
        self.config.tolerances.tol(k)
    }

    /// Mesh `k`, generating missing meshes up to the depth limit.
    pub fn level(&self, k: usize) -> Result<Arc<LevelMesh>> {
        if let Some(l) = self.levels.read().expect("hierarchy lock").get(k) {
            return Ok(l.clone());
        }
        if k >= self.config.max_depth {
            return Err(Error::HierarchyExhausted { depth: self.config.max_depth, key: String::new() });
        }
        let mut levels = self.levels.write().expect("hierarchy lock");
        while levels.len() <= k {
            let next = match levels.last() {
                Some(prev) => self.refine_to(prev.ctx.mesh.clone(), prev.script_n, levels.len())?,
                None => self.refine_to(self.base.clone(), self.base.n_leaves() as f64, 0)?,
            };
            levels.push(Arc::new(next));
        }
        Ok(levels[k].clone())
    }

    pub fn levels(&self) -> Vec<Arc<LevelMesh>> {
        self.levels.read().expect("hierarchy lock").clone()
    }

    /// Restores previously generated meshes, e.g. from disk. Later meshes
    /// are still generated on demand from the last restored one.
    pub fn restore(&self, meshes: Vec<(QuadMesh, f64, usize)>) -> Result<()> {
        let mut levels = self.levels.write().expect("hierarchy lock");
        if !levels.is_empty() {
            return Err(Error::InvalidParameter("hierarchy already populated".into()));
        }
        for (k, (mesh, script_n, rounds)) in meshes.into_iter().enumerate() {
            if k >= self.config.max_depth {
                return Err(Error::HierarchyExhausted { depth: self.config.max_depth, key: format!("restore mesh {k}") });
            }
            let ctx = MeshContext::new(mesh, &self.problem);
            levels.push(Arc::new(LevelMesh::new(ctx, self.tol(k), script_n, rounds)));
        }
        Ok(())
    }

    fn refine_to(&self, mut mesh: QuadMesh, prev_script_n: f64, k: usize) -> Result<LevelMesh> {
        let p = &self.config.params;
        let tol = self.tol(k);
        let mut script_n = p.growth * prev_script_n;
        let mode = SolveMode::Iterative { tol_iter: p.solver_fraction * tol };
        for round in 0..p.max_rounds {
            let ctx = MeshContext::new(mesh, &self.problem);
            let eval = ctx.evaluate(&self.field, mode, tol, p.upper_bound)?;
            let ind = &eval.density.indicators;
            if stopping_satisfied(ind, tol, script_n, p.c_stop) {
                return Ok(LevelMesh::new(ctx, tol, script_n, round));
            }
            let mut marks = mark_cells(ind, tol, script_n, p.c_refine);
            if marks.is_empty() {
                let worst = (0..ind.len()).max_by(|&a, &b| ind[a].abs().total_cmp(&ind[b].abs())).unwrap_or(0);
                marks.push(worst);
            }
            mesh = ctx.mesh.refine_cells(&marks)?;
            script_n = script_n.max(mesh.n_leaves() as f64);
        }
        Err(Error::InvalidParameter(format!("mesh {k} did not satisfy the stopping test in {} rounds", p.max_rounds)))
    }
}

/// Uniform refinements of a base mesh, mesh `k` refined `offset + k` times
/// and built on first use.
#[derive(Debug)]
pub struct UniformLadder {
    base: QuadMesh,
    problem: Problem,
    offset: usize,
    tolerances: ToleranceSequence,
    max_depth: usize,
    levels: RwLock<Vec<Arc<LevelMesh>>>,
}

impl UniformLadder {
    pub fn new(base: QuadMesh, problem: Problem, offset: usize, tolerances: ToleranceSequence, max_depth: usize) -> Self {
        Self { base, problem, offset, tolerances, max_depth, levels: RwLock::new(Vec::new()) }
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.levels.read().expect("ladder lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn level(&self, k: usize) -> Result<Arc<LevelMesh>> {
        if let Some(l) = self.levels.read().expect("ladder lock").get(k) {
            return Ok(l.clone());
        }
        if k >= self.max_depth {
            return Err(Error::HierarchyExhausted { depth: self.max_depth, key: String::new() });
        }
        let mut levels = self.levels.write().expect("ladder lock");
        while levels.len() <= k {
            let j = levels.len();
            let mesh = self.base.refine_uniform(self.offset + j);
            let n = mesh.n_leaves() as f64;
            levels.push(Arc::new(LevelMesh::new(MeshContext::new(mesh, &self.problem), self.tolerances.tol(j), n, 0)));
        }
        Ok(levels[k].clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopping_is_strict_and_monotone() {
        assert!(stopping_satisfied(&[0.0, 0.0], 1.0, 1.0, 3.0));
        assert!(!stopping_satisfied(&[3.0], 1.0, 1.0, 3.0));
        assert!(!stopping_satisfied(&[-3.0], 1.0, 1.0, 3.0));
        assert!(stopping_satisfied(&[2.9], 1.0, 1.0, 3.0));
        assert!(!stopping_satisfied(&[2.9], 1.0, 2.0, 3.0));
    }

    #[test]
    fn marking_threshold() {
        assert_eq!(mark_cells(&[1.0, 2.0, 3.0], 1.0, 1.0, 0.5), vec![0, 1, 2]);
        assert!(mark_cells(&[0.1, 0.2], 1.0, 1.0, 2.5).is_empty());
        assert_eq!(mark_cells(&[1.0, -2.5], 1.0, 1.0, 2.5), vec![1]);
        assert_eq!(mark_cells(&[1.0, 2.5], 2.0, 1.0, 2.5), Vec::<usize>::new());
    }

    #[test]
    fn huge_stopping_constant_keeps_base_mesh() {
        let base = QuadMesh::reference_domain(4, 2).unwrap();
        let config = HierarchyConfig {
            params: AdaptParams { c_stop: 1e30, ..Default::default() },
            ..Default::default()
        };
        let h = MeshHierarchy::generate(base.clone(), FieldSample::Constant(1.0), Problem::default(), config, 1).unwrap();
        assert_eq!(h.level(0).unwrap().ctx.mesh, base);
    }
}
