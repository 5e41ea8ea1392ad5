//! Angles, rotations, wave vectors, the Dirichlet kernel and the element
//! radiation pattern shared by the rest of the crate.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DcaaError, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// An arrival or observation direction.
///
/// Azimuth is measured anti-clockwise from +x in the xy-plane, elevation
/// from the xy-plane (positive above). The physical domain is
/// `[-pi/2, pi/2]` on both axes; cuts used for null searches may evaluate
/// patterns slightly outside it, so the fields are public and unchecked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Direction {
    pub const fn new(azimuth: f64, elevation: f64) -> Self {
        Self { azimuth, elevation }
    }

    /// Checked constructor enforcing the `[-pi/2, pi/2]` domain.
    pub fn try_new(azimuth: f64, elevation: f64) -> Result<Self> {
        let d = Self::new(azimuth, elevation);
        if d.is_in_domain() {
            Ok(d)
        } else {
            Err(DcaaError::Domain(format!(
                "direction ({azimuth}, {elevation}) rad outside [-pi/2, pi/2]"
            )))
        }
    }

    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self::new(azimuth_deg.to_radians(), elevation_deg.to_radians())
    }

    pub fn to_degrees(self) -> (f64, f64) {
        (self.azimuth.to_degrees(), self.elevation.to_degrees())
    }

    pub fn is_in_domain(&self) -> bool {
        let ok = |a: f64| a.is_finite() && a.abs() <= FRAC_PI_2 + 1e-12;
        ok(self.azimuth) && ok(self.elevation)
    }

    pub fn wave_vector(&self) -> WaveVector {
        WaveVector::from_direction(*self)
    }

    /// Outward unit vector pointing from the origin towards the source.
    pub fn unit_vector(&self) -> Vector3<f64> {
        let (sa, ca) = self.azimuth.sin_cos();
        let (se, ce) = self.elevation.sin_cos();
        Vector3::new(ce * ca, ce * sa, se)
    }
}

/// Boresight orientation of a planar sub-array: yaw about z, then pitch
/// about y, no self-spin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub yaw: f64,
    pub pitch: f64,
}

impl Orientation {
    pub const fn new(yaw: f64, pitch: f64) -> Self {
        Self { yaw, pitch }
    }

    /// The direction this orientation points at.
    pub fn boresight(&self) -> Direction {
        Direction::new(self.yaw, self.pitch)
    }

    pub fn rotation(&self) -> Result<RotationMatrix> {
        rotation_matrix(self.yaw, self.pitch)
    }
}

/// Propagation direction of an incoming plane wave,
/// `k = -[cos(el)cos(az), cos(el)sin(az), sin(el)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveVector(pub Vector3<f64>);

impl WaveVector {
    pub fn from_direction(dir: Direction) -> Self {
        Self(-dir.unit_vector())
    }

    pub fn dot(&self, v: &Vector3<f64>) -> f64 {
        self.0.dot(v)
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }
}

/// Proper rotation `R = Rz(yaw) * Ry(pitch)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub Matrix3<f64>);

impl RotationMatrix {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Rotated side vectors `(R*[0,1,0], R*[0,0,1])`.
    pub fn side_vectors(&self) -> (Vector3<f64>, Vector3<f64>) {
        (self.0.column(1).into_owned(), self.0.column(2).into_owned())
    }

    /// Inward-facing plane normal of the rotated array, `-R*[1,0,0]`.
    pub fn normal(&self) -> Vector3<f64> {
        -self.0.column(0).into_owned()
    }
}

pub fn rotation_matrix(yaw: f64, pitch: f64) -> Result<RotationMatrix> {
    if !(pitch.abs() < FRAC_PI_2) || !yaw.is_finite() {
        return Err(DcaaError::Domain(format!(
            "pitch {pitch} rad must satisfy |pitch| < pi/2"
        )));
    }
    let (se, ce) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    #[rustfmt::skip]
    let rz = Matrix3::new(
        ce, -se, 0.0,
        se,  ce, 0.0,
        0.0, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let ry = Matrix3::new(
        cp, 0.0, -sp,
        0.0, 1.0, 0.0,
        sp, 0.0,  cp,
    );
    Ok(RotationMatrix(rz * ry))
}

/// Below this `|sin(pi x / 2)|` the ratio form of the kernel is 0/0 and
/// the finite sum is used instead.
const DIRICHLET_SINGULAR: f64 = 1e-9;

/// Normalised Dirichlet kernel `H_M(x) = (1/M) sum_{m<M} exp(j pi m x)`.
pub fn dirichlet_kernel(x: f64, m: usize) -> Complex64 {
    debug_assert!(m >= 1);
    let mf = m as f64;
    let den = (0.5 * PI * x).sin();
    if den.abs() < DIRICHLET_SINGULAR {
        let sum: Complex64 = (0..m)
            .map(|i| Complex64::from_polar(1.0, PI * i as f64 * x))
            .sum();
        return sum / mf;
    }
    let amp = (0.5 * PI * mf * x).sin() / (mf * den);
    Complex64::from_polar(amp, 0.5 * PI * (mf - 1.0) * x)
}

/// Real amplitude part of the kernel, `sin(pi M x / 2) / (M sin(pi x / 2))`.
///
/// `H_M(x) = dirichlet_amplitude(x, M) * exp(j pi (M-1) x / 2)` for all `x`.
#[inline]
pub(crate) fn dirichlet_amplitude(x: f64, mf: f64) -> f64 {
    let den = (0.5 * PI * x).sin();
    if den.abs() < DIRICHLET_SINGULAR {
        // limit at x = 2k is (-1)^(k (M + 1))
        let k = (0.5 * x).round() as i64;
        let parity = (k * (mf as i64 + 1)).rem_euclid(2);
        return if parity == 0 { 1.0 } else { -1.0 };
    }
    (0.5 * PI * mf * x).sin() / (mf * den)
}

/// Parameterised element radiation pattern (3GPP style).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementPattern {
    /// Peak gain A0 in dB.
    pub peak_gain_db: f64,
    /// Elevation 3 dB beamwidth, radians.
    pub theta_3db: f64,
    /// Azimuth 3 dB beamwidth, radians.
    pub phi_3db: f64,
    /// Maximum attenuation A_max in dB.
    pub a_max_db: f64,
    /// Vertical side-lobe attenuation SLA_V in dB.
    pub sla_v_db: f64,
    pub isotropic: bool,
}

impl ElementPattern {
    pub const fn isotropic() -> Self {
        Self {
            peak_gain_db: 0.0,
            theta_3db: PI,
            phi_3db: PI,
            a_max_db: 30.0,
            sla_v_db: 30.0,
            isotropic: true,
        }
    }

    pub const fn three_gpp(peak_gain_db: f64, theta_3db: f64, phi_3db: f64) -> Self {
        Self {
            peak_gain_db,
            theta_3db,
            phi_3db,
            a_max_db: 30.0,
            sla_v_db: 30.0,
            isotropic: false,
        }
    }

    /// Directive element used on every sub-array of the sphere.
    pub const fn dcaa_directive() -> Self {
        Self::three_gpp(12.79, 0.3 * PI, 0.3 * PI)
    }

    /// Wide element used on the hybrid-beamforming planar baseline.
    pub const fn upa_directive() -> Self {
        Self::three_gpp(0.0, PI, PI)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.theta_3db > 0.0
            && self.phi_3db > 0.0
            && self.a_max_db >= 0.0
            && self.sla_v_db >= 0.0
            && self.peak_gain_db.is_finite();
        if ok {
            Ok(())
        } else {
            Err(DcaaError::Domain(format!("invalid element pattern {self:?}")))
        }
    }

    /// Gain in dB at an angular offset from the element boresight.
    pub fn gain_db(&self, d_phi: f64, d_theta: f64) -> f64 {
        if self.isotropic {
            return 0.0;
        }
        let vert = (12.0 * (d_theta / self.theta_3db).powi(2)).min(self.sla_v_db);
        let horiz = (12.0 * (d_phi / self.phi_3db).powi(2)).min(self.a_max_db);
        self.peak_gain_db - (vert + horiz).min(self.a_max_db)
    }

    /// Linear power gain.
    pub fn gain(&self, d_phi: f64, d_theta: f64) -> f64 {
        if self.isotropic {
            return 1.0;
        }
        10f64.powf(self.gain_db(d_phi, d_theta) / 10.0)
    }

    /// Linear amplitude gain, `sqrt(gain)`.
    #[inline]
    pub fn amplitude(&self, d_phi: f64, d_theta: f64) -> f64 {
        if self.isotropic {
            return 1.0;
        }
        10f64.powf(self.gain_db(d_phi, d_theta) / 20.0)
    }

    pub fn peak_gain(&self) -> f64 {
        self.gain(0.0, 0.0)
    }
}

pub fn element_gain(pattern: &ElementPattern, d_phi: f64, d_theta: f64) -> f64 {
    pattern.gain(d_phi, d_theta)
}

/// Wavelength for a carrier frequency in Hz.
pub fn wavelength(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}
