//! Fixed-point circuits for equilibrium problems: an algebraic circuit IR,
//! pseudogates and OPT-gates, problem compilers, a numeric fixed-point solver
//! and exact verifiers.

pub mod circuit;
pub mod rational;
pub mod pseudogate;
pub mod optgate;
pub mod verify;
pub mod solver;
pub mod selftest;
pub mod compilers;
pub mod io;
pub mod fixtures;
