//! Fractional Ornstein-Uhlenbeck processes driven by fBm with `H > 1/2`:
//! simulation, Malliavin-calculus operators, integration by parts,
//! Clark-Ocone representation and log-Sobolev bounds on a uniform grid.

pub mod clark_ocone;
pub mod error;
pub mod fracops;
pub mod girsanov;
pub mod grid;
pub mod kernel;
pub mod lsi;
pub mod malliavin;
pub mod mc;
pub mod quad;
pub mod simulate;
pub mod special;

pub use error::{FouError, Result};
