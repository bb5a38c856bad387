//! TDE-GNN: graph neural network layers built as discretizations of
//! higher-order ODEs with learned temporal coefficients, together with the
//! analysis tools (stability root condition, finite-difference basis
//! decomposition, stencil consistency) and a nonlinear-pendulum experiment
//! harness.

pub mod analysis;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod models;
pub mod pendulum;
pub mod rng;
pub mod temporal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{normalized_laplacian, Graph, SparseOperator};
pub use rng::{RngStream, RootRng};
pub use tensor::{Tape, Tensor};
