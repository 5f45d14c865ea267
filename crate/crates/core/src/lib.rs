//! Multimodal representation binding with adaptive anchors.
//!
//! The crate bundles a small dense-network toolkit, a synthetic multimodal
//! data generator, contrastive binding losses and training loops, downstream
//! evaluation, and numerical checks of the supporting bounds.

pub mod anchors;
pub mod binder;
pub mod error;
pub mod evalsuite;
pub mod experiment;
pub mod losses;
pub mod numkit;
pub mod synthgen;
pub mod theory;

pub use error::{Error, Result};
