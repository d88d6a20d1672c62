//! Ring-resonator design helpers: phase matching, resonance combs and WDM couplers.

pub mod comb;
pub mod dispersion;
pub mod wdm;

pub use comb::*;
pub use dispersion::*;
pub use wdm::*;
