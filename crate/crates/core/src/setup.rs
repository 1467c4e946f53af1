//! Ready-made configurations of the three model examples.
//!
//! Example 0 uses the deterministic coefficient `a = e^2`. Example 1 uses a
//! lognormal constant `a = exp(sigma Z)`. Example 2 uses a lognormal Matérn
//! field.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptParams, HierarchyConfig, MeshHierarchy, ToleranceSequence, UniformLadder};
use crate::error::{Error, Result};
use crate::fem::Problem;
use crate::field::{Coefficient, FieldSample, FourierBasis, MaternParams};
use crate::mesh::QuadMesh;
use crate::mlmc::{default_level_tolerances, Sampler, Scheme};

pub const BASE_DIMS: (usize, usize) = (4, 2);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Example {
    Deterministic,
    LognormalConstant,
    Matern,
}

impl TryFrom<u8> for Example {
    type Error = Error;
    fn try_from(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Example::Deterministic),
            1 => Ok(Example::LognormalConstant),
            2 => Ok(Example::Matern),
            _ => Err(Error::InvalidParameter(format!("unknown example {id}, expected 0, 1 or 2"))),
        }
    }
}

impl From<Example> for u8 {
    fn from(e: Example) -> u8 {
        match e {
            Example::Deterministic => 0,
            Example::LognormalConstant => 1,
            Example::Matern => 2,
        }
    }
}

/// Everything needed to build meshes and samplers for one example.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub example: Example,
    pub sigma2: f64,
    pub adapt: AdaptParams,
    /// Deepest hierarchy mesh generated on demand.
    pub max_depth: usize,
    /// Uniform refinements of the base mesh on SMLMC level 0.
    pub smlmc_offset: usize,
    /// Samples used to estimate the scaling factor of level 0.
    pub n_pilot: usize,
    /// Use the closed form for spatially constant coefficients.
    pub fast_path: bool,
}

impl Setup {
    pub fn new(example: Example, sigma2: f64) -> Self {
        Self { example, sigma2, adapt: AdaptParams::default(), max_depth: 22, smlmc_offset: 2, n_pilot: 200, fast_path: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.example != Example::Deterministic && !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidParameter("max_depth must be positive".into()));
        }
        Ok(())
    }

    pub fn problem(&self) -> Problem {
        Problem::default()
    }

    pub fn base_mesh(&self) -> QuadMesh {
        QuadMesh::reference_domain(BASE_DIMS.0, BASE_DIMS.1).expect("base mesh")
    }

    pub fn coefficient(&self) -> Result<Coefficient> {
        Ok(match self.example {
            Example::Deterministic => Coefficient::Deterministic(std::f64::consts::E.powi(2)),
            Example::LognormalConstant => Coefficient::LognormalConstant { sigma2: self.sigma2 },
            Example::Matern => {
                let basis = FourierBasis::new(MaternParams::new(self.sigma2), &self.base_mesh().domain())?;
                Coefficient::Matern(Arc::new(basis))
            }
        })
    }

    /// Coefficient the deterministic hierarchy is adapted to.
    pub fn hierarchy_field(&self) -> FieldSample {
        match self.example {
            Example::Deterministic => FieldSample::Constant(std::f64::consts::E.powi(2)),
            _ => FieldSample::Constant(1.0),
        }
    }

    pub fn level_tolerances(&self) -> ToleranceSequence {
        default_level_tolerances(self.sigma2)
    }

    /// Example 0 halves from `2^-5`; the random examples start at the
    /// first level tolerance so level 0 samples find their mesh.
    pub fn hierarchy_tolerances(&self) -> ToleranceSequence {
        match self.example {
            Example::Deterministic => ToleranceSequence::default(),
            _ => ToleranceSequence { first: self.level_tolerances().first, ratio: 0.5 },
        }
    }

    pub fn hierarchy_config(&self) -> HierarchyConfig {
        HierarchyConfig { params: self.adapt, tolerances: self.hierarchy_tolerances(), max_depth: self.max_depth }
    }

    /// Hierarchy with no meshes generated yet.
    pub fn hierarchy(&self) -> Result<MeshHierarchy> {
        self.validate()?;
        MeshHierarchy::new(self.base_mesh(), self.hierarchy_field(), self.problem(), self.hierarchy_config())
    }

    pub fn ladder(&self) -> UniformLadder {
        UniformLadder::new(self.base_mesh(), self.problem(), self.smlmc_offset, self.level_tolerances(), self.max_depth)
    }

    pub fn sampler(&self, scheme: Scheme, seed: u64, hierarchy: Option<Arc<MeshHierarchy>>) -> Result<Sampler> {
        self.validate()?;
        let coef = self.coefficient()?;
        let mut s = match scheme {
            Scheme::Smlmc => Sampler::smlmc(coef, Arc::new(self.ladder()), seed),
            Scheme::Amlmc => {
                let h = match hierarchy {
                    Some(h) => h,
                    None => Arc::new(self.hierarchy()?),
                };
                Sampler::amlmc(coef, h, self.level_tolerances(), self.n_pilot, seed)?
            }
        };
        s.constant_fast_path = self.fast_path;
        s.upper_bound = self.adapt.upper_bound;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_ids_round_trip() {
        for id in 0..3u8 {
            assert_eq!(u8::from(Example::try_from(id).unwrap()), id);
        }
        assert!(Example::try_from(3).is_err());
        let s: Setup = serde_json::from_str(&serde_json::to_string(&Setup::new(Example::Matern, 1.0)).unwrap()).unwrap();
        assert_eq!(s.example, Example::Matern);
    }

    #[test]
    fn hierarchy_tolerances_per_example() {
        assert_eq!(Setup::new(Example::Deterministic, 0.0).hierarchy_tolerances().tol(0), 1.0 / 32.0);
        assert_eq!(Setup::new(Example::LognormalConstant, 4.0).hierarchy_tolerances().tol(1), 2.0);
        assert_eq!(Setup::new(Example::Matern, 1.0).hierarchy_tolerances().tol(0), 2.0);
    }
}
