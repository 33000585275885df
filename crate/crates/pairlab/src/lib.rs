//! Desk-scale laboratory for pair-based deep metric learning losses.
//!
//! Every loss in this crate is a function of the batch cosine-similarity
//! matrix `S` and the label vector `y`. Writing them that way exposes a
//! shared structure: the gradient of any such loss assigns each ordered
//! pair `(i, j)` a weight `w_ij = |dL/dS_ij|`, negative pairs being pushed
//! apart (`dL/dS_ij >= 0`) and positive pairs pulled together
//! (`dL/dS_ij <= 0`). The [`gpw`] module provides that weight-extraction
//! machinery plus a finite-difference oracle; [`losses`] implements the
//! classic pair losses and the multi-similarity loss with its iterative
//! mining and weighting steps; [`trainer`] and [`eval`] run small seeded
//! retrieval experiments end to end; [`cli`] exposes it all as commands.

pub mod cli;
pub mod config;
pub mod embedding;
mod error;
pub mod eval;
pub mod gpw;
pub mod losses;
pub mod trainer;

pub use error::{Error, Result};
