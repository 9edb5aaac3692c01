//! Certified lower bounds on the minimum cost of constrained decentralized
//! control problems over a finite horizon.
//!
//! The pipeline: stack the plant ([`system`]), relax the information graph
//! to its smallest partially nested supergraph ([`graph`]), and solve the
//! resulting finite-dimensional conic program over causal affine Youla
//! parameters ([`bound`]). A companion robust affine policy gives an upper
//! bound; [`sim`] validates both by Monte Carlo.

pub mod bound;
pub mod conic;
pub mod disturbance;
pub mod error;
pub mod graph;
pub mod instances;
pub mod linalg;
pub mod policy;
pub mod problem_file;
pub mod report;
pub mod sim;
pub mod system;

pub use bound::{certify, BoundReport, ConstraintData, CostData, Options, Problem};
pub use disturbance::DisturbanceModel;
pub use error::{Error, Result};
pub use graph::InfoGraph;
pub use linalg::ZeroTest;
pub use system::{LtvSystem, StackedSystem, SubsystemDims};
