//! Koopman-matrix identification from snapshot data, posed as semidefinite
//! programs with modular LMI regularizers and constraints.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

// `!(x > 0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod backend;
pub mod bilinear;
pub mod edmd;
pub mod error;
pub mod io;
pub mod lifting;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod sdp;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub type KoopmanModel = model::KoopmanModel<f64>;
pub type SnapshotDataset = lifting::SnapshotDataset<f64>;
pub type Episode = lifting::Episode<f64>;
pub type LiftedMatrices = lifting::LiftedMatrices<f64>;
pub type EdmdMatrices = edmd::EdmdMatrices<f64>;
pub type RegularizedGram = edmd::RegularizedGram<f64>;
pub type SdpProblem = sdp::SdpProblem<f64>;
pub type SdpSolution = sdp::SdpSolution<f64>;
pub type SolverSettings = backend::SolverSettings<f64>;

pub use lifting::{InputLifting, LiftingSpec};
