//! Finite-dimensional quantum permutations of (possibly infinite) index sets,
//! quantum automorphisms of graph families, the Pauli matrix model for
//! four-point quantum permutations, and free wreath corepresentation calculus.
//!
//! Everything is desk-scale: dense complex matrices with explicit tolerances,
//! exact rational rotation arithmetic where group words must be compared
//! exactly, and exact integer bookkeeping for the combinatorial layers.

pub mod error;
pub mod graphs;
pub mod linalg;
pub mod pauli;
pub mod qaut;
pub mod qperm;
pub mod rep;
pub mod wreath;

pub use error::{Error, Result};
pub use linalg::{CMatrix, Tolerance};
