//! Simulation toolkit for a spherical directly-connected antenna array
//! (DCAA) used for integrated sensing and communication, with a hybrid
//! beamforming planar array as baseline.

// `!(x > 0.0)` deliberately rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod numerics;
pub mod response;
pub mod sensing;
pub mod signalchain;

pub use analysis::{Architecture, ResolutionResult};
pub use error::{DcaaError, Result};
pub use geometry::{DcaaLayout, DesignSpec, PlacedSupa};
pub use harness::config::{ElementChoice, RunConfig};
pub use harness::metrics::TrialOutcome;
pub use harness::scenario::SwarmScenario;
pub use numerics::{Direction, ElementPattern, Orientation};
pub use response::{ArrayManifold, DcaaArray, KpcArray, KpcCodebook};
pub use sensing::{MusicSpectrum, Peak, PeakOptions, ScanGrid, SubspaceDecomposition};
pub use signalchain::{Path, PathSet, SelectionMap, SnapshotMatrix};
