//! Matrix Shuffle-Exchange networks for algorithmic tasks on `n x n` grids.
//!
//! The crate bundles a small reverse-mode autodiff engine, the Z-order and
//! quaternary shuffle permutations, the model itself, task generators with
//! reference solvers, and a training harness with a command-line front end.

pub mod autodiff;
pub mod cli;
pub mod gradcheck;
pub mod harness;
pub mod model;
pub mod perm;
pub mod tasks;
