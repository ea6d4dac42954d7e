//! Coarse-to-fine choroid segmentation for 3D OCT volumes.
//!
//! The crate covers volume ingestion and synthetic phantoms, a z-pyramid,
//! edge and vesselness cost functions, an exact multi-surface graph-cut
//! solver, the segmentation pipeline with thin-plate-spline smoothing, and
//! the agreement statistics used to evaluate it.

pub mod costs;
pub mod error;
pub mod graphseg;
pub mod io;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod pyramid;
pub mod tps;
pub mod volume;

pub use error::{Error, Result};
