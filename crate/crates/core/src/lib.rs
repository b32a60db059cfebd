//! Super Korteweg–de Vries systems whose fields take values in a graded algebra.
//!
//! The algebra is chosen at run time (scalar, Grassmann or symplectic
//! backend). The crate evolves the modified, extended, Grassmann SKdV and
//! Gardner systems pseudo-spectrally, implements the Miura and Gardner maps
//! and the supersymmetry variation, tracks the conserved quantities H0–H6,
//! and carries a small differential-polynomial engine that regenerates the
//! conserved densities from the Gardner recursion.

pub mod algebra;
pub mod checks;
pub mod dynamics;
pub mod exec;
pub mod fields;
pub mod invariants;
pub mod snapshot;
pub mod symbolic;
pub mod transforms;

pub mod cli;

pub use algebra::{Algebra, AlgebraDescriptor, EvenValue, OddValue};
pub use dynamics::{Scheme, SystemKind, SystemState};
pub use fields::{EvenField, OddField, PeriodicGrid};
