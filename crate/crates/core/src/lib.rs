//! Goal-oriented adaptive finite elements and multilevel Monte Carlo for
//! `-div(a grad u) = f` with a lognormal diffusivity `a`.

pub mod adapt;
pub mod analysis;
pub mod context;
pub mod density;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod field;
pub mod io;
pub mod mesh;
pub mod mlmc;
pub mod setup;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
