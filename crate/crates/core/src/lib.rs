//! Structure-preserving solver for a boundary-damped piezoelectric system:
//! linear elasticity coupled to Maxwell's equations through a piezoelectric
//! tensor, closed by dissipative feedback boundary conditions.
//!
//! The discretization is built so that the continuous energy algebra
//! survives exactly: integration-by-parts partners are stored once and
//! applied as matrix/transpose pairs, the implicit midpoint rule reproduces
//! the energy balance to solver tolerance, and dense desk-scale eigenvalue
//! checks cross-validate the observed decay rate.

pub mod dynamics;
pub mod element;
pub mod energy;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod materials;
pub mod operators;
pub mod resolvent;

pub use error::{Error, Result};
pub use grid::{build_grid, BoxGrid};
pub use materials::MaterialSet;
pub use operators::{assemble, DiscreteSystem, FieldState};
