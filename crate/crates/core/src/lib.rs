//! Sparse-view cone-beam reconstruction of thin tubular structures with an
//! additive 3D Gaussian representation.
//!
//! The crate covers the acquisition geometry, a matched forward/adjoint
//! projector pair, the Gaussian volume model with analytic gradients, the
//! reconstruction loop with adaptive density control, an FDK baseline, a
//! procedural vessel phantom and DRR factory, and the evaluation metrics.

pub mod checks;
pub mod error;
pub mod fbp;
pub mod gaussian;
pub mod geometry;
pub mod metrics;
pub mod phantom;
pub mod projector;
pub mod recon;
pub mod volume;

pub use error::{Error, Result};
