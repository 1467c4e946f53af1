//! Jacobi-preconditioned conjugate gradients: a tight reference solve and
//! the lockstep primal/dual iteration with goal-oriented stopping.

use crate::error::{Error, Result};
use crate::sparse::{dot, CsrMatrix};

pub const REFERENCE_RTOL: f64 = 1e-12;

pub fn iteration_cap(n: usize) -> usize {
    ((100.0 * (n as f64).sqrt()).ceil() as usize).max(100)
}

struct Pcg<'a> {
    a: &'a CsrMatrix,
    dinv: &'a [f64],
    x: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
    rz: f64,
    iterations: usize,
}

impl<'a> Pcg<'a> {
    fn new(a: &'a CsrMatrix, dinv: &'a [f64], b: &[f64]) -> Self {
        let r = b.to_vec();
        let z: Vec<f64> = r.iter().zip(dinv).map(|(r, d)| r * d).collect();
        let rz = dot(&r, &z);
        Self { a, dinv, x: vec![0.0; b.len()], p: z.clone(), ap: vec![0.0; b.len()], r, z, rz, iterations: 0 }
    }

    fn exhausted(&self) -> bool {
        self.rz == 0.0
    }

    fn step(&mut self) -> Result<()> {
        self.a.matvec(&self.p, &mut self.ap);
        let pap = dot(&self.p, &self.ap);
        if !(pap > 0.0) {
            return Err(Error::NoConvergence { iterations: self.iterations, residual: self.residual_norm() });
        }
        let alpha = self.rz / pap;
        for i in 0..self.x.len() {
            self.x[i] += alpha * self.p[i];
            self.r[i] -= alpha * self.ap[i];
            self.z[i] = self.r[i] * self.dinv[i];
        }
        let rz = dot(&self.r, &self.z);
        let beta = rz / self.rz;
        for i in 0..self.p.len() {
            self.p[i] = self.z[i] + beta * self.p[i];
        }
        self.rz = rz;
        self.iterations += 1;
        Ok(())
    }

    fn residual_norm(&self) -> f64 {
        dot(&self.r, &self.r).sqrt()
    }
}

fn inverse_diagonal(a: &CsrMatrix) -> Result<Vec<f64>> {
    a.diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { Ok(1.0 / d) } else { Err(Error::NoConvergence { iterations: 0, residual: f64::NAN }) })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ReferenceSolve {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub work: f64,
}

/// Solves `A x = b` to relative residual [`REFERENCE_RTOL`].
pub fn solve_reference(a: &CsrMatrix, b: &[f64]) -> Result<ReferenceSolve> {
    if b.len() != a.n {
        return Err(Error::Dimension { expected: a.n, got: b.len() });
    }
    let dinv = inverse_diagonal(a)?;
    let mut cg = Pcg::new(a, &dinv, b);
    let target = REFERENCE_RTOL * dot(b, b).sqrt();
    let cap = iteration_cap(a.n);
    while cg.residual_norm() > target && !cg.exhausted() {
        if cg.iterations >= cap {
            return Err(Error::NoConvergence { iterations: cg.iterations, residual: cg.residual_norm() });
        }
        cg.step()?;
    }
    let work = (cg.iterations * a.nnz()) as f64;
    Ok(ReferenceSolve { x: cg.x, iterations: cg.iterations, work })
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub u: Vec<f64>,
    pub phi: Vec<f64>,
    pub iterations_primal: usize,
    pub iterations_dual: usize,
    /// `|(r_p, phi)|` at the returned iterates.
    pub goal_residual_primal: f64,
    /// `|(r_d, u)|` at the returned iterates.
    pub goal_residual_dual: f64,
    pub work: f64,
}

/// Advances primal and dual PCG in lockstep. After every step each active
/// solver stops once its residual tested against the partner's current
/// iterate drops below `tol_iter`; a stopped solver keeps its last iterate.
pub fn solve_primal_dual(
    a_p: &CsrMatrix,
    b_p: &[f64],
    a_d: &CsrMatrix,
    b_d: &[f64],
    tol_iter: f64,
) -> Result<SolveReport> {
    if !(tol_iter > 0.0) {
        return Err(Error::InvalidParameter(format!("tol_iter must be positive, got {tol_iter}")));
    }
    for (m, b) in [(a_p, b_p), (a_d, b_d)] {
        if b.len() != m.n {
            return Err(Error::Dimension { expected: m.n, got: b.len() });
        }
    }
    let dinv_p = inverse_diagonal(a_p)?;
    let dinv_d = inverse_diagonal(a_d)?;
    let mut p = Pcg::new(a_p, &dinv_p, b_p);
    let mut d = Pcg::new(a_d, &dinv_d, b_d);
    let cap = iteration_cap(a_p.n.max(a_d.n));
    let (mut active_p, mut active_d) = (true, true);
    let (mut gp, mut gd);
    loop {
        if active_p {
            if p.exhausted() {
                active_p = false;
            } else {
                p.step()?;
            }
        }
        if active_d {
            if d.exhausted() {
                active_d = false;
            } else {
                d.step()?;
            }
        }
        gp = dot(&p.r, &d.x).abs();
        gd = dot(&d.r, &p.x).abs();
        if active_p && gp < tol_iter {
            active_p = false;
        }
        if active_d && gd < tol_iter {
            active_d = false;
        }
        if !active_p && !active_d {
            break;
        }
        if p.iterations.max(d.iterations) >= cap {
            return Err(Error::NoConvergence {
                iterations: p.iterations.max(d.iterations),
                residual: gp.max(gd),
            });
        }
    }
    let work = (p.iterations * a_p.nnz() + d.iterations * a_d.nnz()) as f64;
    Ok(SolveReport {
        iterations_primal: p.iterations,
        iterations_dual: d.iterations,
        goal_residual_primal: gp,
        goal_residual_dual: gd,
        u: p.x,
        phi: d.x,
        work,
    })
}
