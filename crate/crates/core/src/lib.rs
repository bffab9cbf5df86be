//! Binary matching pursuit for tensor latent feature models.
//!
//! A tensor is approximated by a sparse combination of atoms
//! `refold_S(z v^T)` with a binary code `z` over the modes in `S` and a unit
//! real feature vector `v` over the remaining modes. Atoms are chosen
//! greedily along the steepest descent direction of the squared loss, each
//! choice reducing to a Boolean quadratic program solved through a MAXCUT
//! relaxation, and all coefficients are refit after every new atom.

pub mod bench;
pub mod bmp;
pub mod boolquad;
pub mod error;
pub mod io;
pub mod linalg;
pub mod seed;
pub mod tensor;

pub use bmp::{
    adjust_weights, fit, fit_with_observer, gradient, greedy_atom_search, matrix_lfm_fit,
    parse_partitions, reconstruct, Atom, FitConfig, FitTrace, Model, Objective, Partition,
    StopReason, TraceRecord,
};
pub use boolquad::{BoolQuadProblem, SdpSolverConfig, Solver};
pub use error::{Error, Result};
pub use tensor::{MaskTensor, ModeSubset, Tensor};
