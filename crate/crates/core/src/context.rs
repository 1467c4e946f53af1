//! Everything that depends on a mesh but not on the coefficient, plus the
//! per-sample pipeline: assemble, solve, estimate.

use serde::{Deserialize, Serialize};

use crate::density::{density_cells, DensityField, QuotientOperators};
use crate::error::Result;
use crate::fem::{condense, expand, quadrature_points, AssemblyPlan, Problem};
use crate::field::FieldSample;
use crate::mesh::QuadMesh;
use crate::solver::{solve_primal_dual, solve_reference};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkUnits {
    /// Coefficient evaluations weighted by their cost.
    pub assembly: f64,
    /// Iterations times matrix nonzeros.
    pub solve: f64,
    /// `N log2(N)^2` for `N` cells.
    pub estimation: f64,
}

impl WorkUnits {
    pub fn total(&self) -> f64 {
        self.assembly + self.solve + self.estimation
    }
}

impl std::ops::Add for WorkUnits {
    type Output = WorkUnits;
    fn add(self, o: WorkUnits) -> WorkUnits {
        WorkUnits {
            assembly: self.assembly + o.assembly,
            solve: self.solve + o.solve,
            estimation: self.estimation + o.estimation,
        }
    }
}

impl std::ops::AddAssign for WorkUnits {
    fn add_assign(&mut self, o: WorkUnits) {
        *self = *self + o;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolveMode {
    Reference,
    Iterative { tol_iter: f64 },
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub qoi: f64,
    pub density: DensityField,
    /// Primal and dual solutions at all vertices.
    pub u: Vec<f64>,
    pub phi: Vec<f64>,
    pub iterations: (usize, usize),
    pub work: WorkUnits,
}

#[derive(Debug)]
pub struct MeshContext {
    pub mesh: QuadMesh,
    pub quotients: QuotientOperators,
    pub plan: AssemblyPlan,
    pub quad_points: Vec<[f64; 2]>,
    pub vertex_points: Vec<[f64; 2]>,
    pub sizes: Vec<f64>,
    pub primal_rhs: Vec<f64>,
    pub dual_rhs: Vec<f64>,
    /// `int w phi_v` per vertex; the goal functional is its dot product
    /// with vertex values.
    pub qoi_weights: Vec<f64>,
    pub area: f64,
}

impl MeshContext {
    pub fn new(mesh: QuadMesh, problem: &Problem) -> Self {
        let lines = mesh.assemble_lines();
        let quotients = QuotientOperators::new(&mesh, &lines);
        let plan = AssemblyPlan::new(&mesh);
        let quad_points = quadrature_points(&mesh);
        let vertex_points = (0..mesh.n_vertices()).map(|v| mesh.vertex_point(v)).collect();
        let sizes = (0..mesh.n_leaves()).map(|k| mesh.leaf_size(k)).collect();
        let primal_rhs = condense(&mesh, &problem.primal_load(&mesh));
        let qoi_weights = problem.dual_load(&mesh);
        let dual_rhs = condense(&mesh, &qoi_weights);
        let area = mesh.domain().area();
        Self { mesh, quotients, plan, quad_points, vertex_points, sizes, primal_rhs, dual_rhs, qoi_weights, area }
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_leaves()
    }

    pub fn estimation_work(&self) -> f64 {
        let n = self.n_cells() as f64;
        n * n.log2().max(1.0).powi(2)
    }

    pub fn assembly_work(&self, field: &FieldSample) -> f64 {
        (self.quad_points.len() + self.vertex_points.len()) as f64 * field.cost_per_point()
    }

    /// Solves primal and dual problems for one coefficient and estimates the
    /// goal error. `density_tol` enters the lower bound of the density.
    pub fn evaluate(&self, field: &FieldSample, mode: SolveMode, density_tol: f64, upper_bound: bool) -> Result<Evaluation> {
        let a_q = field.eval_many(&self.quad_points);
        let a_v = field.eval_many(&self.vertex_points);
        let k = self.plan.assemble(&a_q, &self.quad_points)?;
        let (u, phi, iterations, solve_work) = match mode {
            SolveMode::Reference => {
                let p = solve_reference(&k, &self.primal_rhs)?;
                let d = solve_reference(&k, &self.dual_rhs)?;
                (p.x, d.x, (p.iterations, d.iterations), p.work + d.work)
            }
            SolveMode::Iterative { tol_iter } => {
                let r = solve_primal_dual(&k, &self.primal_rhs, &k, &self.dual_rhs, tol_iter)?;
                let its = (r.iterations_primal, r.iterations_dual);
                (r.u, r.phi, its, r.work)
            }
        };
        let u = expand(&self.mesh, &u);
        let phi = expand(&self.mesh, &phi);
        let qoi = self.qoi_weights.iter().zip(&u).map(|(w, x)| w * x).sum();
        let du = self.quotients.apply_averaged(&u);
        let dphi = self.quotients.apply_averaged(&phi);
        let rho = density_cells(&self.mesh, &a_v, &du, &dphi);
        let density = DensityField::new(rho, &self.sizes, self.area, density_tol, upper_bound);
        let work = WorkUnits {
            assembly: self.assembly_work(field),
            solve: solve_work,
            estimation: self.estimation_work(),
        };
        Ok(Evaluation { qoi, density, u, phi, iterations, work })
    }
}
