//! Exact light-cone simulation of one-dimensional cellular automata with
//! particle-like defects: stepping, particle-system verification, defect
//! detection and walk-based asymptotic statistics.

pub mod defects;
pub mod error;
pub mod lattice;
pub mod measures;
pub mod rng;
pub mod particles;
pub mod raster;
pub mod rules;
pub mod walk;
pub mod experiments;

pub use error::{Error, ErrorClass, Result};
pub use lattice::{Alphabet, Configuration, Pattern, Symbol};
pub use measures::MeasureSpec;
pub use rules::{Dynamics, LocalRule, PcaSpec};
