//! Compromise decisions for stochastic programs: replication solvers (sample
//! average approximation, Kelley cutting planes, stochastic decomposition for
//! two-stage quadratic programs), the compromise problems that aggregate them,
//! and the reliability statistics used to study the aggregate.

pub mod cutplane;
pub mod desk;
pub mod document;
pub mod error;
pub mod linalg;
pub mod model;
pub mod qp;
pub mod reliability;
pub mod rng;
pub mod saa;
pub mod sd;
pub mod sqqp;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
