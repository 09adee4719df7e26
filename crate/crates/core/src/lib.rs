//! Emitter lattices coupled through a photonic Dirac cone.
//!
//! Units: lengths in the lattice constant `a`, frequencies in the emitter
//! decay rate `gamma`, reported as offsets from the bare emitter frequency.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bands;
pub mod dynamics;
pub mod edge;
pub mod env;
pub mod error;
pub mod greens;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod quad;
pub mod special;
pub mod topology;
pub mod units;

pub use error::{Error, Result};
pub use lattice::{basis_transform, lattice_vectors, Basis, GreensMatrix, LatticeGeometry, Valley};
pub use units::{derive_params, parse_config, Config, PhysicalParams};
