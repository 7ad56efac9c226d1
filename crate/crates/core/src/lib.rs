//! Denjoy-Carleman weight sequences, holomorphic approximation on confocal
//! ellipses and a discrete Cauchy-transform solver for the dbar equation.

pub mod dbar;
pub mod error;
pub mod extension;
pub mod gallery;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod jet;
pub mod joris;
pub mod ledger;
pub mod model;
pub mod scalar;
pub mod selftest;
pub mod weights;

pub use error::{Error, Result};
pub use jet::Jet;
pub use scalar::{Ext, Real};

pub type Jet64 = Jet<f64>;
pub type JetExt = Jet<Ext>;
pub use weights::{Condition, GrowthReport, SequenceKind, WeightSequence};
