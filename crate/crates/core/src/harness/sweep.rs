//! Sweep drivers. Every table is computed in parallel over independent work
//! units, each with its own RNG stream, and written in unit order, so the
//! files do not depend on the worker count.

use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{resolution_map, write_resolution_csv, Architecture};
use crate::error::{DcaaError, Result};
use crate::geometry::{approx_sphere_radius, min_sphere_radius, DesignSpec};
use crate::harness::config::{ElementChoice, RunConfig};
use crate::harness::metrics::{average_missed, match_and_rmse, median, score_trial, TrialOutcome};
use crate::harness::output::{fmt_f64, Manifest};
use crate::harness::scenario::generate_scenario;
use crate::numerics::Direction;
use crate::response::{envelope, ArrayManifold, KpcArray};
use crate::sensing::{estimate_directions, estimate_records, write_spectrum_csv, MusicSpectrum, ScanGrid};
use crate::signalchain::{channel, select_supas, substream, synthesize_snapshots, uplink_rate, CoefficientLaw, Path as Ray, PathSet};

const TAG_SCENARIO: u64 = 1;
const TAG_SENSING: u64 = 2;
const TAG_RATE_USER: u64 = 3;
const TAG_RATE_SELECT: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Design,
    Beampattern,
    Resolution,
    RadiusSweep,
    Music,
    Montecarlo,
    Rate,
}

impl SweepKind {
    pub const ALL: [SweepKind; 7] = [
        Self::Design,
        Self::Beampattern,
        Self::Resolution,
        Self::RadiusSweep,
        Self::Music,
        Self::Montecarlo,
        Self::Rate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Design => "design",
            Self::Beampattern => "beampattern",
            Self::Resolution => "resolution",
            Self::RadiusSweep => "radius-sweep",
            Self::Music => "music",
            Self::Montecarlo => "montecarlo",
            Self::Rate => "rate",
        }
    }
}

impl FromStr for SweepKind {
    type Err = DcaaError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| DcaaError::Config(format!("unknown sweep {s:?}")))
    }
}

fn arch_index(arch: Architecture) -> u64 {
    match arch {
        Architecture::Dcaa => 0,
        Architecture::UpaKpc => 1,
    }
}

fn element_index(e: ElementChoice) -> u64 {
    match e {
        ElementChoice::Directive => 0,
        ElementChoice::Isotropic => 1,
    }
}

/// Runs `f` on a pool of `threads` workers (the global pool when unset).
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| DcaaError::Config(format!("thread pool: {e}")))?
            .install(f)),
    }
}

/// Either manifold behind one reference.
pub enum Manifold {
    Dcaa(crate::response::DcaaArray),
    Kpc(KpcArray),
}

impl Manifold {
    pub fn build(cfg: &RunConfig, arch: Architecture, elements: ElementChoice) -> Result<Self> {
        Ok(match arch {
            Architecture::Dcaa => Self::Dcaa(cfg.dcaa_array(elements)?),
            Architecture::UpaKpc => Self::Kpc(cfg.kpc_array(elements)),
        })
    }

    pub fn as_dyn(&self) -> &dyn ArrayManifold {
        match self {
            Self::Dcaa(a) => a,
            Self::Kpc(a) => a,
        }
    }
}

/// Selection, snapshots and MUSIC for one path set; model order is the
/// number of paths.
pub fn sense<A: ArrayManifold + ?Sized, R: Rng + ?Sized>(
    array: &A,
    paths: &PathSet,
    cfg: &RunConfig,
    grid: &ScanGrid,
    rng: &mut R,
) -> Result<MusicSpectrum> {
    let params = cfg.snapshot_params();
    let sel = select_supas(array, paths, cfg.n_rf, params.pt, params.sigma2, cfg.selection, rng)?;
    let snap = synthesize_snapshots(array, paths, &sel, &params, rng)?;
    let opts = cfg.scan.peak_options(paths.len());
    estimate_directions(array, &sel, &snap.y, paths.len(), grid, &opts)
}

/// The planar baseline: the same pipeline with KPC beams as ports.
pub fn kpc_baseline_estimator<R: Rng + ?Sized>(
    cfg: &RunConfig,
    kpc: &KpcArray,
    paths: &PathSet,
    grid: &ScanGrid,
    rng: &mut R,
) -> Result<Vec<Direction>> {
    Ok(sense(kpc, paths, cfg, grid, rng)?.peaks.iter().map(|p| p.dir).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmTrial {
    pub center_index: usize,
    pub trial: usize,
    pub arch: Architecture,
    pub outcome: std::result::Result<TrialOutcome, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmCell {
    pub center: Direction,
    pub arch: Architecture,
    pub trials: usize,
    pub failures: usize,
    pub epsilon: f64,
    pub median_missed: f64,
    pub rmse_phi_deg: f64,
    pub rmse_theta_deg: f64,
    pub matched: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub centers: Vec<Direction>,
    pub trials: Vec<SwarmTrial>,
    pub cells: Vec<SwarmCell>,
}

impl MonteCarloReport {
    pub fn cell(&self, center_index: usize, arch: Architecture) -> Option<&SwarmCell> {
        let c = self.centers.get(center_index)?;
        self.cells.iter().find(|x| x.center == *c && x.arch == arch)
    }

    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| t.outcome.is_err()).count()
    }
}

/// Paired swarm trials over the configured centres: every architecture
/// sees the same scenario draw in a given `(centre, trial)` unit.
pub fn run_montecarlo(cfg: &RunConfig) -> Result<MonteCarloReport> {
    let grid = cfg.scan.grid()?;
    let arrays = cfg
        .architectures
        .iter()
        .map(|&a| Ok((a, Manifold::build(cfg, a, cfg.elements)?)))
        .collect::<Result<Vec<_>>>()?;
    let centers = cfg.swarm.centers();
    let units: Vec<(usize, usize)> = (0..centers.len()).flat_map(|c| (0..cfg.trials).map(move |t| (c, t))).collect();
    let per_unit: Vec<Vec<SwarmTrial>> = units
        .par_iter()
        .map(|&(ci, t)| {
            let scenario = cfg.swarm.scenario(centers[ci], cfg.coefficient_law);
            let mut srng = substream(cfg.seed, &[TAG_SCENARIO, ci as u64, t as u64]);
            let paths = generate_scenario(&scenario, &mut srng);
            arrays
                .iter()
                .map(|(arch, array)| {
                    let outcome = paths.as_ref().map_err(|e| e.to_string()).and_then(|paths| {
                        let mut rng = substream(cfg.seed, &[TAG_SENSING, arch_index(*arch), ci as u64, t as u64]);
                        sense(array.as_dyn(), paths, cfg, &grid, &mut rng)
                            .and_then(|spec| {
                                let est = spec.peaks.iter().map(|p| p.dir).collect();
                                score_trial(cfg.design.m, paths.directions(), est, None)
                            })
                            .map_err(|e| e.to_string())
                    });
                    SwarmTrial { center_index: ci, trial: t, arch: *arch, outcome }
                })
                .collect()
        })
        .collect();
    let trials: Vec<SwarmTrial> = per_unit.into_iter().flatten().collect();
    let mut cells = Vec::new();
    for (ci, &center) in centers.iter().enumerate() {
        for &(arch, _) in &arrays {
            let ok: Vec<TrialOutcome> = trials
                .iter()
                .filter(|t| t.center_index == ci && t.arch == arch)
                .filter_map(|t| t.outcome.as_ref().ok().cloned())
                .collect();
            let (rp, rt) = match_and_rmse(&ok).unwrap_or((f64::NAN, f64::NAN));
            let missed: Vec<f64> = ok.iter().map(|o| o.missed() as f64).collect();
            cells.push(SwarmCell {
                center,
                arch,
                trials: cfg.trials,
                failures: cfg.trials - ok.len(),
                epsilon: average_missed(&ok),
                median_missed: median(&missed),
                rmse_phi_deg: rp,
                rmse_theta_deg: rt,
                matched: ok.iter().map(|o| o.detected()).sum(),
            });
        }
    }
    Ok(MonteCarloReport { centers, trials, cells })
}

pub fn write_montecarlo(dir: &Path, report: &MonteCarloReport) -> Result<Vec<String>> {
    let mut w = csv::Writer::from_path(dir.join("swarm_summary.csv"))?;
    w.write_record([
        "center_phi_deg",
        "center_theta_deg",
        "arch",
        "trials",
        "failures",
        "epsilon",
        "median_missed",
        "rmse_phi_deg",
        "rmse_theta_deg",
        "matched",
    ])?;
    for c in &report.cells {
        let (az, el) = c.center.to_degrees();
        w.write_record([
            fmt_f64(az),
            fmt_f64(el),
            c.arch.to_string(),
            c.trials.to_string(),
            c.failures.to_string(),
            fmt_f64(c.epsilon),
            fmt_f64(c.median_missed),
            fmt_f64(c.rmse_phi_deg),
            fmt_f64(c.rmse_theta_deg),
            c.matched.to_string(),
        ])?;
    }
    w.flush()?;

    let mut t = csv::Writer::from_path(dir.join("swarm_trials.csv"))?;
    t.write_record(["center_phi_deg", "center_theta_deg", "arch", "trial", "status", "targets", "peaks", "detected", "missed", "spurious", "error"])?;
    let mut e = csv::Writer::from_path(dir.join("swarm_estimates.csv"))?;
    e.write_record(["center_phi_deg", "center_theta_deg", "arch", "trial", "kind", "index", "phi_deg", "theta_deg", "matched_to"])?;
    for tr in &report.trials {
        let (az, el) = report.centers[tr.center_index].to_degrees();
        let head = [fmt_f64(az), fmt_f64(el), tr.arch.to_string(), tr.trial.to_string()];
        match &tr.outcome {
            Ok(o) => {
                let counts = [o.truth.len(), o.estimates.len(), o.detected(), o.missed(), o.spurious()];
                t.write_record(head.iter().cloned().chain(["ok".into()]).chain(counts.map(|c| c.to_string())).chain([String::new()]))?;
                for (kind, dirs) in [("truth", &o.truth), ("estimate", &o.estimates)] {
                    for (i, d) in dirs.iter().enumerate() {
                        let partner = o.pairs.iter().find_map(|p| match kind {
                            "truth" => (p.truth == i).then_some(p.estimate),
                            _ => (p.estimate == i).then_some(p.truth),
                        });
                        let (pa, pe) = d.to_degrees();
                        e.write_record(head.iter().cloned().chain([
                            kind.into(),
                            i.to_string(),
                            fmt_f64(pa),
                            fmt_f64(pe),
                            partner.map_or(String::new(), |p| p.to_string()),
                        ]))?;
                    }
                }
            }
            Err(msg) => {
                t.write_record(head.iter().cloned().chain(["failed".into()]).chain(std::iter::repeat_n(String::new(), 5)).chain([msg.clone()]))?;
            }
        }
    }
    t.flush()?;
    e.flush()?;
    Ok(vec!["swarm_summary.csv".into(), "swarm_trials.csv".into(), "swarm_estimates.csv".into()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub elements: ElementChoice,
    pub arch: Architecture,
    pub snr_db: f64,
    pub trials: usize,
    pub failures: usize,
    pub mean_rate: f64,
    pub std_error: f64,
    /// Per-trial rates in trial order (`None` for failed trials); users are
    /// shared across architectures, so rows pair up trial by trial.
    #[serde(skip)]
    pub samples: Vec<Option<f64>>,
}

/// Spectral efficiency of a single line-of-sight user drawn uniformly in
/// the rate region, after energy-based selection at each SNR.
pub fn run_rate(cfg: &RunConfig) -> Result<Vec<RateRow>> {
    let region = cfg.rate.region_deg.to_radians();
    let mut rows = Vec::new();
    for &elements in &cfg.rate.elements {
        for &arch in &cfg.architectures {
            let array = Manifold::build(cfg, arch, elements)?;
            for (si, &snr_db) in cfg.rate.snr_db.iter().enumerate() {
                let sigma2 = 10f64.powf(-snr_db / 10.0);
                let rates: Vec<std::result::Result<f64, String>> = (0..cfg.rate.trials)
                    .into_par_iter()
                    .map(|t| {
                        let mut urng = substream(cfg.seed, &[TAG_RATE_USER, si as u64, t as u64]);
                        let dir = if region > 0.0 {
                            Direction::new(urng.random_range(-region..=region), urng.random_range(-region..=region))
                        } else {
                            Direction::new(0.0, 0.0)
                        };
                        let paths = PathSet::new(vec![Ray { dir, alpha: CoefficientLaw::UnitMagnitude.draw(&mut urng) }]);
                        let mut rng = substream(
                            cfg.seed,
                            &[TAG_RATE_SELECT, arch_index(arch), element_index(elements), si as u64, t as u64],
                        );
                        let a = array.as_dyn();
                        let sel = select_supas(a, &paths, cfg.n_rf, 1.0, sigma2, cfg.selection, &mut rng).map_err(|e| e.to_string())?;
                        let h = channel(a, &paths);
                        uplink_rate(&sel.apply(&h), a.side(), 1.0, sigma2).map_err(|e| e.to_string())
                    })
                    .collect();
                let ok: Vec<f64> = rates.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
                let n = ok.len() as f64;
                let mean = ok.iter().sum::<f64>() / n;
                let var = ok.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                rows.push(RateRow {
                    elements,
                    arch,
                    snr_db,
                    trials: cfg.rate.trials,
                    failures: rates.len() - ok.len(),
                    mean_rate: mean,
                    std_error: (var / n).sqrt(),
                    samples: rates.iter().map(|r| r.as_ref().ok().copied()).collect(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_rate(dir: &Path, rows: &[RateRow]) -> Result<Vec<String>> {
    let mut w = csv::Writer::from_path(dir.join("rate.csv"))?;
    w.write_record(["elements", "arch", "snr_db", "trials", "failures", "mean_rate_bps_hz", "std_error"])?;
    for r in rows {
        let elements = match r.elements {
            ElementChoice::Directive => "directive",
            ElementChoice::Isotropic => "isotropic",
        };
        w.write_record([
            elements.into(),
            r.arch.to_string(),
            fmt_f64(r.snr_db),
            r.trials.to_string(),
            r.failures.to_string(),
            fmt_f64(r.mean_rate),
            fmt_f64(r.std_error),
        ])?;
    }
    w.flush()?;
    Ok(vec!["rate.csv".into()])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusRow {
    pub m: usize,
    pub carrier_ghz: f64,
    pub wavelength_m: f64,
    pub supas: usize,
    pub radius_min_m: f64,
    pub radius_approx_m: f64,
}

pub fn run_radius_sweep(cfg: &RunConfig) -> Result<Vec<RadiusRow>> {
    let d = &cfg.design;
    let mut rows = Vec::new();
    for &m in &cfg.radius_sweep.m {
        for &f in &cfg.radius_sweep.carriers_ghz {
            let spec = DesignSpec::new(m, d.phi_max_deg.to_radians(), d.theta_max_deg.to_radians(), f * 1e9);
            let supas = crate::geometry::design_orientations(&spec)?.len();
            rows.push(RadiusRow {
                m,
                carrier_ghz: f,
                wavelength_m: spec.wavelength(),
                supas,
                radius_min_m: min_sphere_radius(&spec),
                radius_approx_m: approx_sphere_radius(&spec),
            });
        }
    }
    Ok(rows)
}

pub fn write_radius(dir: &Path, rows: &[RadiusRow]) -> Result<Vec<String>> {
    let mut w = csv::Writer::from_path(dir.join("radius.csv"))?;
    w.write_record(["M", "carrier_ghz", "wavelength_m", "supas", "radius_min_m", "radius_approx_m"])?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            fmt_f64(r.carrier_ghz),
            fmt_f64(r.wavelength_m),
            r.supas.to_string(),
            fmt_f64(r.radius_min_m),
            fmt_f64(r.radius_approx_m),
        ])?;
    }
    w.flush()?;
    Ok(vec!["radius.csv".into()])
}

/// Strongest-port envelope over the beam-pattern grid, per architecture.
pub fn write_beampattern(dir: &Path, cfg: &RunConfig) -> Result<Vec<String>> {
    let grid = cfg.beampattern.directions()?;
    let mut files = Vec::new();
    for &arch in &cfg.architectures {
        let array = Manifold::build(cfg, arch, cfg.elements)?;
        let env = envelope(array.as_dyn(), &grid);
        let name = format!("beampattern_{arch}.csv");
        let mut w = csv::Writer::from_path(dir.join(&name))?;
        w.write_record(["phi_deg", "theta_deg", "magnitude", "best_port"])?;
        for s in &env {
            let (az, el) = s.dir.to_degrees();
            w.write_record([fmt_f64(az), fmt_f64(el), fmt_f64(s.magnitude), s.best_port.map_or(String::new(), |p| p.to_string())])?;
        }
        w.flush()?;
        files.push(name);
    }
    Ok(files)
}

pub fn write_resolution(dir: &Path, cfg: &RunConfig) -> Result<Vec<String>> {
    let grid = cfg.resolution.directions()?;
    let mut files = Vec::new();
    for &arch in &cfg.architectures {
        let rows = resolution_map(arch, cfg.design.m, &grid);
        let name = format!("resolution_{arch}.csv");
        write_resolution_csv(&dir.join(&name), &rows)?;
        files.push(name);
    }
    Ok(files)
}

pub fn write_design(dir: &Path, cfg: &RunConfig) -> Result<Vec<String>> {
    let layout = cfg.design.layout()?;
    let export = layout.to_export();
    std::fs::write(dir.join("layout.json"), serde_json::to_string_pretty(&export)? + "\n")?;
    let mut w = csv::Writer::from_path(dir.join("layout.csv"))?;
    w.write_record(["n", "p", "q", "eta_deg", "vartheta_deg", "x_m", "y_m", "z_m"])?;
    for s in &export.supas {
        w.write_record([
            s.n.to_string(),
            s.p.to_string(),
            s.q.to_string(),
            fmt_f64(s.eta_rad.to_degrees()),
            fmt_f64(s.vartheta_rad.to_degrees()),
            fmt_f64(s.center_m[0]),
            fmt_f64(s.center_m[1]),
            fmt_f64(s.center_m[2]),
        ])?;
    }
    w.flush()?;
    Ok(vec!["layout.json".into(), "layout.csv".into()])
}

/// One MUSIC run per architecture on `paths` (by default a swarm draw at
/// the first configured centre).
pub fn write_music(dir: &Path, cfg: &RunConfig, paths: Option<&PathSet>) -> Result<Vec<String>> {
    let drawn;
    let paths = match paths {
        Some(p) => p,
        None => {
            let center = *cfg.swarm.centers().first().ok_or_else(|| DcaaError::Config("no swarm centre".into()))?;
            let scenario = cfg.swarm.scenario(center, cfg.coefficient_law);
            drawn = generate_scenario(&scenario, &mut substream(cfg.seed, &[TAG_SCENARIO, 0, 0]))?;
            &drawn
        }
    };
    paths.validate()?;
    let grid = cfg.scan.grid()?;
    let mut files = Vec::new();
    for &arch in &cfg.architectures {
        let array = Manifold::build(cfg, arch, cfg.elements)?;
        let mut rng = substream(cfg.seed, &[TAG_SENSING, arch_index(arch), 0, 0]);
        let spec = sense(array.as_dyn(), paths, cfg, &grid, &mut rng)?;
        let name = format!("spectrum_{arch}.csv");
        write_spectrum_csv(&dir.join(&name), &spec)?;
        let est = format!("estimates_{arch}.json");
        std::fs::write(dir.join(&est), serde_json::to_string_pretty(&estimate_records(&spec.peaks))? + "\n")?;
        files.extend([name, est]);
    }
    let truth: Vec<_> = paths
        .directions()
        .iter()
        .map(|d| {
            let (phi_deg, theta_deg) = d.to_degrees();
            serde_json::json!({ "phi_deg": phi_deg, "theta_deg": theta_deg })
        })
        .collect();
    std::fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&truth)? + "\n")?;
    files.push("truth.json".into());
    Ok(files)
}

/// Runs one sweep into `cfg.out_dir` and writes its manifest.
pub fn run_sweep(cfg: &RunConfig, kind: SweepKind, music_paths: Option<&PathSet>) -> Result<Manifest> {
    cfg.validate()?;
    let dir = cfg.out_dir.as_path();
    std::fs::create_dir_all(dir)?;
    let threads = cfg.threads.unwrap_or_else(rayon::current_num_threads);
    let mut manifest = Manifest::new(kind.name(), cfg, threads);
    let (files, failed) = with_pool(cfg.threads, || -> Result<(Vec<String>, usize)> {
        Ok(match kind {
            SweepKind::Design => (write_design(dir, cfg)?, 0),
            SweepKind::Beampattern => (write_beampattern(dir, cfg)?, 0),
            SweepKind::Resolution => (write_resolution(dir, cfg)?, 0),
            SweepKind::RadiusSweep => (write_radius(dir, &run_radius_sweep(cfg)?)?, 0),
            SweepKind::Music => (write_music(dir, cfg, music_paths)?, 0),
            SweepKind::Montecarlo => {
                let report = run_montecarlo(cfg)?;
                (write_montecarlo(dir, &report)?, report.failures())
            }
            SweepKind::Rate => {
                let rows = run_rate(cfg)?;
                let failed = rows.iter().map(|r| r.failures).sum();
                (write_rate(dir, &rows)?, failed)
            }
        })
    })??;
    manifest.outputs = files;
    manifest.failed_trials = failed;
    manifest.write(dir)?;
    Ok(manifest)
}
