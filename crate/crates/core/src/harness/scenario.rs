//! UAV-swarm scenario draws.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DcaaError, Result};
use crate::numerics::Direction;
use crate::signalchain::{CoefficientLaw, Path, PathSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwarmScenario {
    pub center: Direction,
    /// Half-width of the square target box, degrees.
    pub half_width_deg: f64,
    pub targets: usize,
    /// Prepend a line-of-sight path at `los` (or at the centre if unset).
    pub include_los: bool,
    pub los: Option<Direction>,
    pub coefficient_law: CoefficientLaw,
}

impl SwarmScenario {
    pub fn new(center: Direction) -> Self {
        Self {
            center,
            half_width_deg: 2.5,
            targets: 3,
            include_los: false,
            los: None,
            coefficient_law: CoefficientLaw::UnitMagnitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.half_width_deg.to_radians();
        if !(h >= 0.0) || !h.is_finite() {
            return Err(DcaaError::Config(format!("box half-width {} deg", self.half_width_deg)));
        }
        let corners = [
            Direction::new(self.center.azimuth - h, self.center.elevation - h),
            Direction::new(self.center.azimuth + h, self.center.elevation + h),
        ];
        if corners.iter().any(|d| !d.is_in_domain()) {
            let (az, el) = self.center.to_degrees();
            return Err(DcaaError::Config(format!(
                "box of half-width {} deg around ({az}, {el}) deg leaves the coverage region",
                self.half_width_deg
            )));
        }
        if let Some(los) = self.los.filter(|_| self.include_los) {
            if !los.is_in_domain() {
                return Err(DcaaError::Config("LoS direction outside the coverage region".into()));
            }
        }
        Ok(())
    }

    /// Inclusive bounds `(az_lo, az_hi, el_lo, el_hi)` of the box, radians.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let h = self.half_width_deg.to_radians();
        let c = self.center;
        (c.azimuth - h, c.azimuth + h, c.elevation - h, c.elevation + h)
    }
}

/// Targets uniform over the box, LoS (if any) first; coefficients follow
/// the scenario's law, the LoS always unit magnitude with random phase.
pub fn generate_scenario<R: Rng + ?Sized>(scenario: &SwarmScenario, rng: &mut R) -> Result<PathSet> {
    scenario.validate()?;
    let (az_lo, az_hi, el_lo, el_hi) = scenario.bounds();
    let mut paths = Vec::with_capacity(scenario.targets + 1);
    if scenario.include_los {
        paths.push(Path {
            dir: scenario.los.unwrap_or(scenario.center),
            alpha: CoefficientLaw::UnitMagnitude.draw(rng),
        });
    }
    for _ in 0..scenario.targets {
        let az = if az_hi > az_lo { rng.random_range(az_lo..=az_hi) } else { az_lo };
        let el = if el_hi > el_lo { rng.random_range(el_lo..=el_hi) } else { el_lo };
        paths.push(Path {
            dir: Direction::new(az, el),
            alpha: scenario.coefficient_law.draw(rng),
        });
    }
    Ok(PathSet::new(paths))
}

/// Number of leading non-target paths in a generated set.
pub fn los_offset(scenario: &SwarmScenario) -> usize {
    usize::from(scenario.include_los)
}
