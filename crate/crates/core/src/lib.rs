//! Numerical verification of semi-connections, generator decompositions and
//! skew products for equivariant diffusions on principal bundles, together
//! with the LeJan-Watanabe connection and Weitzenböck machinery for
//! derivative flows.

pub mod bundle;
pub mod diffeo;
pub mod error;
pub mod frame_flow;
pub mod geometry;
pub mod group;
pub mod hormander;
pub mod linalg;
pub mod lw;
pub mod sde;
pub mod stats;
pub mod systems;

pub use error::{Error, Result};
