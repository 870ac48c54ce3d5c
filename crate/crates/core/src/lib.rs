//! Cluster states of globally coupled phase oscillators: existence, linear
//! stability, bump-function design of transverse stability, simulation of
//! heteroclinic cycling and the reduced three-cluster phase portrait.

pub mod cluster;
pub mod coupling;
pub mod error;
pub mod linalg;
pub mod par;
pub mod portrait;
pub mod simulator;
pub mod stability;

pub use cluster::{ClusterState, Partition, SolveOptions};
pub use coupling::{BumpPerturbation, Coupling, FourierCoupling, Phase, PerturbedCoupling};
pub use error::{Error, Result};
pub use par::Exec;
