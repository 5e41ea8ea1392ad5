//! Shared fixtures for the benchmarks.

use dcaa_core::harness::config::{ElementChoice, RunConfig};
use dcaa_core::signalchain::{select_supas, substream, synthesize_snapshots, Path, PathSet};
use dcaa_core::{DcaaArray, Direction, SelectionMap, SnapshotMatrix};
use num_complex::Complex64;

/// Default sphere, three sources near (40, 40) degrees and their snapshots.
pub struct Fixture {
    pub cfg: RunConfig,
    pub array: DcaaArray,
    pub paths: PathSet,
    pub selection: SelectionMap,
    pub snapshots: SnapshotMatrix,
}

impl Fixture {
    pub fn new() -> Self {
        let cfg = RunConfig::default();
        let array = cfg.dcaa_array(ElementChoice::Directive).expect("default layout");
        let paths = PathSet::new(
            [(39.0, 41.0), (41.5, 39.0), (40.0, 38.5)]
                .iter()
                .map(|&(az, el)| Path { dir: Direction::from_degrees(az, el), alpha: Complex64::new(1.0, 0.0) })
                .collect(),
        );
        let mut rng = substream(1, &[]);
        let (pt, sigma2) = cfg.power.powers();
        let selection = select_supas(&array, &paths, cfg.n_rf, pt, sigma2, cfg.selection, &mut rng).unwrap();
        let snapshots = synthesize_snapshots(&array, &paths, &selection, &cfg.snapshot_params(), &mut rng).unwrap();
        Self { cfg, array, paths, selection, snapshots }
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}
