//! Run configuration shared by every harness command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::Architecture;
use crate::error::{DcaaError, Result};
use crate::geometry::{design_layout, min_sphere_radius, DesignSpec, DcaaLayout};
use crate::harness::scenario::SwarmScenario;
use crate::numerics::{Direction, ElementPattern};
use crate::response::{build_kpc, DcaaArray, KpcArray};
use crate::sensing::{PeakOptions, ScanGrid};
use crate::signalchain::{CoefficientLaw, MeasurementMode, PathCoherence, SnapshotParams, SymbolModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementChoice {
    Isotropic,
    /// The 3GPP elements of each architecture (12.79 dB / 0.3 pi on the
    /// sphere, 0 dB / pi on the planar array).
    Directive,
}

impl ElementChoice {
    pub fn pattern(self, arch: Architecture) -> ElementPattern {
        match (self, arch) {
            (Self::Isotropic, _) => ElementPattern::isotropic(),
            (Self::Directive, Architecture::Dcaa) => ElementPattern::dcaa_directive(),
            (Self::Directive, Architecture::UpaKpc) => ElementPattern::upa_directive(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(rename = "M")]
    pub m: usize,
    pub phi_max_deg: f64,
    pub theta_max_deg: f64,
    pub carrier_hz: f64,
    /// Sphere radius; the collision-free minimum when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_m: Option<f64>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            m: 16,
            phi_max_deg: 90.0,
            theta_max_deg: 90.0,
            carrier_hz: 39e9,
            radius_m: None,
        }
    }
}

impl DesignConfig {
    pub fn spec(&self) -> DesignSpec {
        DesignSpec::new(self.m, self.phi_max_deg.to_radians(), self.theta_max_deg.to_radians(), self.carrier_hz)
    }

    pub fn layout(&self) -> Result<DcaaLayout> {
        let spec = self.spec();
        match self.radius_m {
            None => design_layout(&spec),
            Some(r) => crate::geometry::place_supas(&crate::geometry::design_orientations(&spec)?, r, &spec),
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius_m.unwrap_or_else(|| min_sphere_radius(&self.spec()))
    }
}

/// Transmit SNR `Pt / sigma2`, or both powers explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum PowerConfig {
    Snr { snr_db: f64 },
    Explicit { pt: f64, sigma2: f64 },
}

impl PowerConfig {
    /// `(pt, sigma2)`; SNR settings use unit transmit power.
    pub fn powers(&self) -> (f64, f64) {
        match *self {
            Self::Snr { snr_db } => (1.0, 10f64.powf(-snr_db / 10.0)),
            Self::Explicit { pt, sigma2 } => (pt, sigma2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwarmConfig {
    pub centers_phi_deg: Vec<f64>,
    pub centers_theta_deg: Vec<f64>,
    pub half_width_deg: f64,
    pub targets: usize,
    pub include_los: bool,
    /// LoS direction `[phi, theta]` in degrees; the box centre when unset.
    pub los_deg: Option<[f64; 2]>,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            centers_phi_deg: vec![0.0, 20.0, 40.0, 60.0],
            centers_theta_deg: vec![0.0, 20.0, 40.0, 60.0],
            half_width_deg: 2.5,
            targets: 3,
            include_los: false,
            los_deg: None,
        }
    }
}

impl SwarmConfig {
    /// Centres in row-major order: elevation slow, azimuth fast.
    pub fn centers(&self) -> Vec<Direction> {
        self.centers_theta_deg
            .iter()
            .flat_map(|&el| self.centers_phi_deg.iter().map(move |&az| Direction::from_degrees(az, el)))
            .collect()
    }

    pub fn scenario(&self, center: Direction, law: CoefficientLaw) -> SwarmScenario {
        SwarmScenario {
            center,
            half_width_deg: self.half_width_deg,
            targets: self.targets,
            include_los: self.include_los,
            los: self.los_deg.map(|[a, e]| Direction::from_degrees(a, e)),
            coefficient_law: law,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub step_deg: f64,
    pub phi_max_deg: f64,
    pub theta_max_deg: f64,
    pub neighborhood: usize,
    pub floor_db: Option<f64>,
    pub refine: bool,
    pub polish_candidates: usize,
    pub gain_floor_db: Option<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            step_deg: 0.25,
            phi_max_deg: 90.0,
            theta_max_deg: 90.0,
            neighborhood: 1,
            floor_db: Some(30.0),
            refine: true,
            polish_candidates: 16,
            gain_floor_db: Some(10.0),
        }
    }
}

impl ScanConfig {
    pub fn grid(&self) -> Result<ScanGrid> {
        ScanGrid::symmetric(self.phi_max_deg.to_radians(), self.theta_max_deg.to_radians(), self.step_deg.to_radians())
    }

    pub fn peak_options(&self, max_peaks: usize) -> PeakOptions {
        PeakOptions {
            max_peaks,
            neighborhood: self.neighborhood,
            floor_db: self.floor_db,
            refine: self.refine,
            polish_candidates: self.polish_candidates,
            gain_floor_db: self.gain_floor_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateConfig {
    pub snr_db: Vec<f64>,
    /// The user is drawn uniformly in `[-x, x]^2` degrees.
    pub region_deg: f64,
    pub trials: usize,
    pub elements: Vec<ElementChoice>,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            snr_db: (0..=8).map(|i| -10.0 + 5.0 * i as f64).collect(),
            region_deg: 60.0,
            trials: 200,
            elements: vec![ElementChoice::Directive, ElementChoice::Isotropic],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadiusSweepConfig {
    pub m: Vec<usize>,
    pub carriers_ghz: Vec<f64>,
}

impl Default for RadiusSweepConfig {
    fn default() -> Self {
        Self {
            m: vec![8, 16, 32],
            carriers_ghz: vec![10.0, 20.0, 28.0, 39.0, 60.0, 100.0, 140.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    pub step_deg: f64,
    pub phi_max_deg: f64,
    pub theta_max_deg: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            step_deg: 1.0,
            phi_max_deg: 90.0,
            theta_max_deg: 90.0,
        }
    }
}

impl MapConfig {
    pub fn directions(&self) -> Result<Vec<Direction>> {
        let grid = ScanGrid::symmetric(self.phi_max_deg.to_radians(), self.theta_max_deg.to_radians(), self.step_deg.to_radians())?;
        Ok((0..grid.elevations.len())
            .flat_map(|r| (0..grid.azimuths.len()).map(move |c| (r, c)))
            .map(|(r, c)| grid.direction(r, c))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub architectures: Vec<Architecture>,
    pub design: DesignConfig,
    pub elements: ElementChoice,
    #[serde(rename = "N_RF")]
    pub n_rf: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub power: PowerConfig,
    /// Monte-Carlo trials per swarm centre, `Q`.
    pub trials: usize,
    pub selection: MeasurementMode,
    pub symbol_model: SymbolModel,
    pub coefficient_law: CoefficientLaw,
    pub coherence: PathCoherence,
    pub swarm: SwarmConfig,
    pub scan: ScanConfig,
    pub rate: RateConfig,
    pub radius_sweep: RadiusSweepConfig,
    pub beampattern: MapConfig,
    pub resolution: MapConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; all available cores when unset.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            architectures: vec![Architecture::Dcaa, Architecture::UpaKpc],
            design: DesignConfig::default(),
            elements: ElementChoice::Directive,
            n_rf: 8,
            k: 128,
            power: PowerConfig::Snr { snr_db: 20.0 },
            trials: 100,
            selection: MeasurementMode::Noisy,
            symbol_model: SymbolModel::Cscg,
            coefficient_law: CoefficientLaw::UnitMagnitude,
            coherence: PathCoherence::Decorrelated,
            swarm: SwarmConfig::default(),
            scan: ScanConfig::default(),
            rate: RateConfig::default(),
            radius_sweep: RadiusSweepConfig::default(),
            beampattern: MapConfig { step_deg: 0.5, ..MapConfig::default() },
            resolution: MapConfig::default(),
            out_dir: PathBuf::from("out"),
            seed: 0,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| DcaaError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DcaaError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serialises"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DcaaError::Config(msg));
        self.design.spec().validate().map_err(|e| DcaaError::Config(e.to_string()))?;
        if let Some(r) = self.design.radius_m {
            let min = min_sphere_radius(&self.design.spec());
            if r < min {
                return bad(format!("radius {r} m is below the collision-free minimum {min} m"));
            }
        }
        if self.architectures.is_empty() {
            return bad("at least one architecture is required".into());
        }
        if self.k == 0 || self.trials == 0 {
            return bad("K and trials must be positive".into());
        }
        let order = self.swarm.targets + usize::from(self.swarm.include_los);
        if order == 0 || order >= self.n_rf {
            return bad(format!("model order {order} needs 1 <= order < N_RF = {}", self.n_rf));
        }
        if self.swarm.targets > crate::harness::metrics::MAX_MATCH_TARGETS {
            return bad(format!("at most {} targets", crate::harness::metrics::MAX_MATCH_TARGETS));
        }
        let (pt, sigma2) = self.power.powers();
        if !(pt > 0.0 && sigma2 > 0.0 && pt.is_finite() && sigma2.is_finite()) {
            return bad(format!("powers must be positive and finite (Pt = {pt}, sigma2 = {sigma2})"));
        }
        if let CoefficientLaw::Rician { k_factor } = self.coefficient_law {
            if !(k_factor >= 0.0) {
                return bad("Rician K-factor must be non-negative".into());
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        for c in self.swarm.centers() {
            self.swarm.scenario(c, self.coefficient_law).validate()?;
        }
        for (name, step) in [
            ("scan", self.scan.step_deg),
            ("beampattern", self.beampattern.step_deg),
            ("resolution", self.resolution.step_deg),
        ] {
            if !(step > 0.0) {
                return bad(format!("{name} step must be positive"));
            }
        }
        if self.rate.trials == 0 || !(self.rate.region_deg >= 0.0 && self.rate.region_deg <= 90.0) {
            return bad("rate trials must be positive and the region within [0, 90] deg".into());
        }
        if self.radius_sweep.m.iter().any(|&m| m < 2) || self.radius_sweep.carriers_ghz.iter().any(|&f| !(f > 0.0)) {
            return bad("radius sweep needs M >= 2 and positive carriers".into());
        }
        self.scan.grid().map_err(|e| DcaaError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn snapshot_params(&self) -> SnapshotParams {
        let (pt, sigma2) = self.power.powers();
        SnapshotParams {
            k: self.k,
            pt,
            sigma2,
            symbol_model: self.symbol_model,
            coherence: self.coherence,
        }
    }

    pub fn dcaa_array(&self, elements: ElementChoice) -> Result<DcaaArray> {
        Ok(DcaaArray::new(self.design.layout()?, elements.pattern(Architecture::Dcaa)))
    }

    /// The planar baseline shares the sub-array side and coverage limits.
    pub fn kpc_array(&self, elements: ElementChoice) -> KpcArray {
        let spec = self.design.spec();
        KpcArray::new(build_kpc(spec.m, spec.phi_max, spec.theta_max), elements.pattern(Architecture::UpaKpc))
    }
}
