//! Calculus of variations on time scales with an unbounded horizon.
//!
//! The crate models a time scale as a finite ordered grid whose gaps are
//! either genuine jumps or samples of a continuum, and builds nabla
//! derivatives, nabla integrals, Euler-Lagrange residuals, transversality
//! quantities and a direct solver on top of it.

pub mod cli;
pub mod expr;
pub mod fundamental;
pub mod nabla;
pub mod solver;
pub mod timescale;
pub mod variational;
