//! Spherical layout design: sub-array orientations, flat indexing, sphere
//! radius, physical placement and the collision-freedom check.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{DcaaError, Result};
use crate::numerics::{rotation_matrix, wavelength, Orientation};

/// Inputs to the layout design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// Antennas per sub-array side.
    pub m: usize,
    /// Azimuth coverage limit, radians.
    pub phi_max: f64,
    /// Elevation coverage limit, radians.
    pub theta_max: f64,
    pub carrier_hz: f64,
    /// Element spacing, meters.
    pub spacing_m: f64,
}

impl DesignSpec {
    /// Half-wavelength spacing at the given carrier.
    pub fn new(m: usize, phi_max: f64, theta_max: f64, carrier_hz: f64) -> Self {
        Self {
            m,
            phi_max,
            theta_max,
            carrier_hz,
            spacing_m: 0.5 * wavelength(carrier_hz),
        }
    }

    pub fn wavelength(&self) -> f64 {
        wavelength(self.carrier_hz)
    }

    pub fn validate(&self) -> Result<()> {
        let half_pi = std::f64::consts::FRAC_PI_2 + 1e-12;
        if self.m < 2 {
            return Err(DcaaError::Domain(format!(
                "sub-array side M = {} must be at least 2",
                self.m
            )));
        }
        if !(self.phi_max > 0.0 && self.phi_max <= half_pi) {
            return Err(DcaaError::Domain(format!("phi_max {} out of (0, pi/2]", self.phi_max)));
        }
        if !(self.theta_max > 0.0 && self.theta_max <= half_pi) {
            return Err(DcaaError::Domain(format!(
                "theta_max {} out of (0, pi/2]",
                self.theta_max
            )));
        }
        if !(self.spacing_m > 0.0 && self.carrier_hz > 0.0) {
            return Err(DcaaError::Domain("spacing and carrier must be positive".into()));
        }
        Ok(())
    }

    /// Elevation step between layers, `arcsin(2/M)`.
    pub fn elevation_step(&self) -> f64 {
        (2.0 / self.m as f64).asin()
    }

    /// Number of layers on each side of the equator, `N_theta`.
    pub fn layer_count(&self) -> usize {
        floor_count(self.theta_max / self.elevation_step())
    }

    /// Azimuth step at a given pitch, or `None` when `2/(M cos pitch) > 1`.
    pub fn azimuth_step(&self, pitch: f64) -> Option<f64> {
        let arg = 2.0 / (self.m as f64 * pitch.cos());
        (arg <= 1.0 && arg > 0.0).then(|| arg.asin())
    }

    /// Sub-arrays on each side of `yaw = 0` in the layer at `pitch`.
    pub fn azimuth_count(&self, pitch: f64) -> usize {
        self.azimuth_step(pitch)
            .map(|step| floor_count(self.phi_max / step))
            .unwrap_or(0)
    }
}

fn floor_count(x: f64) -> usize {
    (x + 1e-12).floor().max(0.0) as usize
}

/// A designed orientation with its layer labels and 1-based flat index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayeredOrientation {
    pub n: usize,
    pub p: i32,
    pub q: i32,
    pub orientation: Orientation,
}

/// Orientations ordered by layer `q` ascending, then `p` ascending.
pub fn design_orientations(spec: &DesignSpec) -> Result<Vec<LayeredOrientation>> {
    spec.validate()?;
    let step = spec.elevation_step();
    let n_theta = spec.layer_count() as i32;
    let mut out = Vec::new();
    for q in -n_theta..=n_theta {
        let pitch = q as f64 * step;
        let n_eta = spec.azimuth_count(pitch) as i32;
        let az_step = spec.azimuth_step(pitch).unwrap_or(0.0);
        for p in -n_eta..=n_eta {
            out.push(LayeredOrientation {
                n: out.len() + 1,
                p,
                q,
                orientation: Orientation::new(p as f64 * az_step, pitch),
            });
        }
    }
    Ok(out)
}

/// Flat 1-based index of `(p, q)` from the per-layer counts.
pub fn flat_index(spec: &DesignSpec, p: i32, q: i32) -> Option<usize> {
    let n_theta = spec.layer_count() as i32;
    if q.abs() > n_theta {
        return None;
    }
    let step = spec.elevation_step();
    let count = |k: i32| spec.azimuth_count(k as f64 * step) as i32;
    let n_eta = count(q);
    if p.abs() > n_eta {
        return None;
    }
    let before: i32 = (-n_theta..q).map(|k| 2 * count(k) + 1).sum();
    Some((p + n_eta + 1 + before) as usize)
}

/// Minimum collision-free sphere radius, `M d / (sqrt(2) tan(asin(2/M) / 2))`.
pub fn min_sphere_radius(spec: &DesignSpec) -> f64 {
    let m = spec.m as f64;
    m * spec.spacing_m / (2f64.sqrt() * (0.5 * (2.0 / m).asin()).tan())
}

/// Large-M approximation of [`min_sphere_radius`], `M^2 lambda / (2 sqrt 2)`.
pub fn approx_sphere_radius(spec: &DesignSpec) -> f64 {
    let m = spec.m as f64;
    m * m * spec.wavelength() / (2.0 * 2f64.sqrt())
}

/// One placed sub-array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedSupa {
    pub n: usize,
    pub p: i32,
    pub q: i32,
    pub orientation: Orientation,
    /// Center on the sphere, meters.
    pub center: Vector3<f64>,
    /// Corner (reference) element position, meters.
    pub reference: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcaaLayout {
    pub m: usize,
    pub spacing_m: f64,
    pub wavelength_m: f64,
    pub radius_m: f64,
    pub supas: Vec<PlacedSupa>,
}

impl DcaaLayout {
    pub fn len(&self) -> usize {
        self.supas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supas.is_empty()
    }

    /// Circumradius of one sub-array, `M d / sqrt(2)`.
    pub fn circumradius(&self) -> f64 {
        self.m as f64 * self.spacing_m / 2f64.sqrt()
    }

    pub fn to_export(&self) -> LayoutExport {
        LayoutExport {
            m: self.m,
            d_m: self.spacing_m,
            lambda_m: self.wavelength_m,
            r_m: self.radius_m,
            supas: self
                .supas
                .iter()
                .map(|s| SupaExport {
                    n: s.n,
                    p: s.p,
                    q: s.q,
                    eta_rad: s.orientation.yaw,
                    vartheta_rad: s.orientation.pitch,
                    center_m: [s.center.x, s.center.y, s.center.z],
                    ref_antenna_m: [s.reference.x, s.reference.y, s.reference.z],
                })
                .collect(),
        }
    }
}

/// JSON schema of an exported layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutExport {
    #[serde(rename = "M")]
    pub m: usize,
    pub d_m: f64,
    pub lambda_m: f64,
    #[serde(rename = "R_m")]
    pub r_m: f64,
    pub supas: Vec<SupaExport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupaExport {
    pub n: usize,
    pub p: i32,
    pub q: i32,
    pub eta_rad: f64,
    pub vartheta_rad: f64,
    pub center_m: [f64; 3],
    pub ref_antenna_m: [f64; 3],
}

/// Places each sub-array tangent to a sphere of radius `radius_m`, facing
/// outwards along its orientation.
pub fn place_supas(
    orientations: &[LayeredOrientation],
    radius_m: f64,
    spec: &DesignSpec,
) -> Result<DcaaLayout> {
    spec.validate()?;
    let min_r = min_sphere_radius(spec);
    if !(radius_m >= min_r * (1.0 - 1e-12)) {
        return Err(DcaaError::Collision {
            radius_m,
            min_radius_m: min_r,
        });
    }
    let side = spec.m as f64 * spec.spacing_m;
    let supas = orientations
        .iter()
        .map(|o| {
            let rot = rotation_matrix(o.orientation.yaw, o.orientation.pitch)?;
            let (u1, u2) = rot.side_vectors();
            let center = radius_m * o.orientation.boresight().unit_vector();
            let reference = center - 0.5 * side * (u1 + u2);
            Ok(PlacedSupa {
                n: o.n,
                p: o.p,
                q: o.q,
                orientation: o.orientation,
                center,
                reference,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DcaaLayout {
        m: spec.m,
        spacing_m: spec.spacing_m,
        wavelength_m: spec.wavelength(),
        radius_m,
        supas,
    })
}

/// Designs and places a layout at the minimum radius.
pub fn design_layout(spec: &DesignSpec) -> Result<DcaaLayout> {
    let orientations = design_orientations(spec)?;
    place_supas(&orientations, min_sphere_radius(spec), spec)
}

/// Angle between two vectors, robust near 0 and pi.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Same-layer separation cosine for adjacent sub-arrays at `pitch`,
/// `c^2 sqrt(1 - 4/(M c)^2) + s^2` with `c = cos pitch`, `s = sin pitch`.
pub fn same_layer_separation_cos(m: usize, pitch: f64) -> f64 {
    let (s, c) = pitch.sin_cos();
    let t = 2.0 / (m as f64 * c);
    c * c * (1.0 - t * t).sqrt() + s * s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationReport {
    /// Smallest pairwise angular separation, radians (`+inf` with no pairs).
    pub min_angle: f64,
    /// 1-based indices of the closest pair.
    pub closest_pair: Option<(usize, usize)>,
}

/// Checks the minimum pairwise angular separation against `asin(2/M)` and,
/// at the minimum radius, against the circumcircle tangency bound.
pub fn verify_separation(layout: &DcaaLayout) -> Result<SeparationReport> {
    if layout.is_empty() {
        return Err(DcaaError::Domain("empty layout".into()));
    }
    let mut report = SeparationReport {
        min_angle: f64::INFINITY,
        closest_pair: None,
    };
    for (i, a) in layout.supas.iter().enumerate() {
        for b in &layout.supas[i + 1..] {
            let angle = angle_between(&a.center, &b.center);
            if angle < report.min_angle {
                report.min_angle = angle;
                report.closest_pair = Some((a.n, b.n));
            }
        }
    }
    let Some((first, second)) = report.closest_pair else {
        return Ok(report);
    };
    let design_bound = (2.0 / layout.m as f64).asin();
    let tangency_bound = 2.0 * (layout.circumradius() / layout.radius_m).atan();
    let mut bound = design_bound;
    if tangency_bound <= design_bound * (1.0 + 1e-9) {
        bound = bound.max(tangency_bound);
    } else {
        // sphere is smaller than the collision-free radius
        bound = tangency_bound;
    }
    if report.min_angle < bound - 1e-12 {
        return Err(DcaaError::SeparationViolation {
            first,
            second,
            angle_rad: report.min_angle,
            bound_rad: bound,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn full(m: usize) -> DesignSpec {
        DesignSpec::new(m, FRAC_PI_2, FRAC_PI_2, 39e9)
    }

    #[test]
    fn layer_and_total_counts_m16() {
        let spec = full(16);
        assert_eq!(spec.layer_count(), 12);
        assert_eq!(spec.azimuth_count(0.0), 12);
        let o = design_orientations(&spec).unwrap();
        assert_eq!(o.len(), 397);
        assert_eq!(o.iter().filter(|x| x.q == 0).count(), 25);
        // polar caps hold a single sub-array
        assert_eq!(o.iter().filter(|x| x.q == 12).count(), 1);
    }

    #[test]
    fn orientation_design_is_symmetric() {
        let spec = full(8);
        let o = design_orientations(&spec).unwrap();
        for a in &o {
            let mirror = o.iter().find(|b| b.p == -a.p && b.q == -a.q).unwrap();
            assert_eq!(mirror.orientation.yaw, -a.orientation.yaw);
            assert_eq!(mirror.orientation.pitch, -a.orientation.pitch);
        }
    }

    #[test]
    fn flat_index_is_bijective() {
        for m in [6, 8, 16] {
            let spec = full(m);
            let o = design_orientations(&spec).unwrap();
            let mut seen = vec![false; o.len() + 1];
            for x in &o {
                let n = flat_index(&spec, x.p, x.q).unwrap();
                assert_eq!(n, x.n);
                assert!(!seen[n]);
                seen[n] = true;
            }
            assert!(seen[1..].iter().all(|&s| s));
        }
    }

    #[test]
    fn too_small_array_is_rejected() {
        assert!(design_orientations(&full(1)).is_err());
    }

    #[test]
    fn radius_values_m16_39ghz() {
        let spec = full(16);
        let r = min_sphere_radius(&spec);
        // M d / (sqrt2 tan(asin(1/8)/2)), d = c / (2 * 39 GHz)
        assert!((r - 0.693_02).abs() < 5e-5, "{r}");
        let a = approx_sphere_radius(&spec);
        assert!((a - 0.695_75).abs() < 5e-5, "{a}");
    }

    #[test]
    fn radius_approximation_converges() {
        for m in [16usize, 24, 32, 64, 128] {
            let spec = full(m);
            let ratio = min_sphere_radius(&spec) / approx_sphere_radius(&spec);
            assert!((ratio - 1.0).abs() < 0.01, "m={m} ratio={ratio}");
        }
    }

    #[test]
    fn axis_placement() {
        let spec = full(16);
        let o = [LayeredOrientation {
            n: 1,
            p: 0,
            q: 0,
            orientation: Orientation::new(0.0, 0.0),
        }];
        let r = min_sphere_radius(&spec) * 1.5;
        let layout = place_supas(&o, r, &spec).unwrap();
        let c = layout.supas[0].center;
        assert!((c - Vector3::new(r, 0.0, 0.0)).norm() < 1e-12);
        let md = 16.0 * spec.spacing_m;
        let expected_ref = Vector3::new(r, -0.5 * md, -0.5 * md);
        assert!((layout.supas[0].reference - expected_ref).norm() < 1e-12);
    }

    #[test]
    fn below_minimum_radius_collides() {
        let spec = full(16);
        let o = design_orientations(&spec).unwrap();
        let err = place_supas(&o, 0.2705, &spec).unwrap_err();
        assert!(matches!(err, DcaaError::Collision { .. }));
    }

    #[test]
    fn full_layout_centers_on_sphere() {
        let spec = full(16);
        let layout = design_layout(&spec).unwrap();
        assert_eq!(layout.len(), 397);
        for s in &layout.supas {
            assert!((s.center.norm() - layout.radius_m).abs() < 1e-9);
            let rot = s.orientation.rotation().unwrap();
            let (u1, u2) = rot.side_vectors();
            let rebuilt = s.center - 0.5 * 16.0 * spec.spacing_m * (u1 + u2);
            assert!((rebuilt - s.reference).norm() < 1e-12);
        }
    }

    #[test]
    fn separation_bound_holds() {
        for m in [8usize, 16] {
            let layout = design_layout(&full(m)).unwrap();
            let rep = verify_separation(&layout).unwrap();
            assert!(rep.min_angle >= (2.0 / m as f64).asin() - 1e-12);
            // circumcircles never overlap at the minimum radius
            let alpha_star = 2.0 * (layout.circumradius() / layout.radius_m).atan();
            let chord_min = 2.0 * layout.radius_m * (alpha_star / 2.0).sin();
            for (i, a) in layout.supas.iter().enumerate() {
                for b in &layout.supas[i + 1..] {
                    assert!((a.center - b.center).norm() >= chord_min - 1e-9);
                }
            }
        }
        let m16 = verify_separation(&design_layout(&full(16)).unwrap()).unwrap();
        assert!(m16.min_angle >= 0.125_33 - 1e-5);
    }

    #[test]
    fn single_supa_has_infinite_separation() {
        let spec = full(16);
        let o = [LayeredOrientation {
            n: 1,
            p: 0,
            q: 0,
            orientation: Orientation::new(0.0, 0.0),
        }];
        let layout = place_supas(&o, min_sphere_radius(&spec), &spec).unwrap();
        let rep = verify_separation(&layout).unwrap();
        assert!(rep.min_angle.is_infinite());
        assert!(rep.closest_pair.is_none());
    }

    #[test]
    fn violation_reports_pair() {
        let spec = full(16);
        let mk = |n, yaw| LayeredOrientation {
            n,
            p: 0,
            q: 0,
            orientation: Orientation::new(yaw, 0.0),
        };
        let layout = place_supas(&[mk(1, 0.0), mk(2, 0.05)], min_sphere_radius(&spec), &spec).unwrap();
        match verify_separation(&layout) {
            Err(DcaaError::SeparationViolation { first, second, .. }) => {
                assert_eq!((first, second), (1, 2))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn same_layer_formula_matches_dot_product() {
        for m in [8usize, 16] {
            let spec = full(m);
            let o = design_orientations(&spec).unwrap();
            for a in &o {
                if let Some(b) = o.iter().find(|b| b.q == a.q && b.p == a.p + 1) {
                    let va = a.orientation.boresight().unit_vector();
                    let vb = b.orientation.boresight().unit_vector();
                    let direct = angle_between(&va, &vb);
                    let closed = same_layer_separation_cos(m, a.orientation.pitch).acos();
                    assert!((direct - closed).abs() < 1e-10, "m={m} q={}", a.q);
                }
            }
        }
    }

    #[test]
    fn same_layer_cosine_strictly_decreasing() {
        for m in [8usize, 16] {
            let upper = (2.0 / m as f64).acos();
            let mut prev = same_layer_separation_cos(m, 0.0);
            let steps = 20_000;
            for i in 1..steps {
                let pitch = upper * i as f64 / steps as f64;
                let v = same_layer_separation_cos(m, pitch);
                assert!(v < prev, "m={m} pitch={pitch}");
                prev = v;
            }
        }
        assert!(same_layer_separation_cos(16, 0.0) < 1.0);
    }

    #[test]
    fn export_has_expected_fields() {
        let layout = design_layout(&full(8)).unwrap();
        let v = serde_json::to_value(layout.to_export()).unwrap();
        for key in ["M", "d_m", "lambda_m", "R_m", "supas"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let first = &v["supas"][0];
        for key in ["n", "p", "q", "eta_rad", "vartheta_rad", "center_m", "ref_antenna_m"] {
            assert!(first.get(key).is_some(), "{key}");
        }
    }
}
