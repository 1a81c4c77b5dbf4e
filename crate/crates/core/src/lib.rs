//! Spectral laboratory for top-swap card shuffles.
//!
//! A configuration spreads `n` distinct cards over `k` labeled decks; a move
//! picks two positions uniformly and exchanges the tops of the two decks
//! above them. This crate provides exact state-space enumeration and ranking,
//! transition kernels and their single-line encodings for two decks,
//! Dirichlet forms, sparse and dense spectral-gap computation, Monte Carlo
//! relaxation estimates, and identity/inequality verification sweeps.

pub mod error;
pub mod kernels;
pub mod linalg;
pub mod montecarlo;
pub mod space;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::ExecMode;
