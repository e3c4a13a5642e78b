//! Hybrid skeleton and cage deformation.
//!
//! A skin is driven both by a skeleton (skinning weights) and by a closed
//! cage (mean value coordinates). [`sync::SyncSession`] keeps the skin,
//! skeleton and cage synchronized in their rest and current poses under
//! any interleaving of joint rotations and cage edits.

pub mod anim;
pub mod coords;
pub mod error;
pub mod model;
pub mod protocol;
pub mod report;
pub mod rigs;
pub mod script;
pub mod select;
pub mod skinning;
pub mod sync;

pub use error::{Error, Result};
