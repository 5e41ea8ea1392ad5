//! Complex responses of a single sub-array, the whole sphere, and the
//! Kronecker-product-codebook (KPC) planar baseline.
//!
//! Both architectures are exposed through [`ArrayManifold`]: a set of
//! output ports (sub-arrays or beams), each with a complex response to a
//! far-field plane wave. Everything downstream (selection, snapshot
//! synthesis, MUSIC) works on that trait only.

use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::DcaaLayout;
use crate::numerics::{dirichlet_amplitude, dirichlet_kernel, Direction, ElementPattern, Orientation};

/// Direction with its trigonometry precomputed; hot loops build one per
/// grid cell and evaluate every port against it.
#[derive(Debug, Clone, Copy)]
pub struct Look {
    pub dir: Direction,
    pub sin_az: f64,
    pub cos_az: f64,
    pub sin_el: f64,
    pub cos_el: f64,
}

impl Look {
    pub fn new(dir: Direction) -> Self {
        let (sin_az, cos_az) = dir.azimuth.sin_cos();
        let (sin_el, cos_el) = dir.elevation.sin_cos();
        Self {
            dir,
            sin_az,
            cos_az,
            sin_el,
            cos_el,
        }
    }

    /// Wave vector `k` of this direction.
    #[inline]
    pub fn wave_vector(&self) -> Vector3<f64> {
        Vector3::new(
            -self.cos_el * self.cos_az,
            -self.cos_el * self.sin_az,
            -self.sin_el,
        )
    }
}

impl From<Direction> for Look {
    fn from(dir: Direction) -> Self {
        Self::new(dir)
    }
}

/// Output ports of a receive architecture.
pub trait ArrayManifold: Sync {
    fn port_count(&self) -> usize;

    /// Sub-array side `M`; each port sums `M^2` element noises.
    fn side(&self) -> usize;

    fn port_response(&self, port: usize, look: &Look) -> Complex64;

    fn response_vector(&self, dir: Direction) -> Vec<Complex64> {
        let look = Look::new(dir);
        (0..self.port_count())
            .map(|n| self.port_response(n, &look))
            .collect()
    }

    /// Responses of the listed ports, written into `out`.
    fn steering_into(&self, ports: &[usize], look: &Look, out: &mut [Complex64]) {
        for (o, &p) in out.iter_mut().zip(ports) {
            *o = self.port_response(p, look);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupaResponseParams {
    pub m: usize,
    pub orientation: Orientation,
    pub pattern: ElementPattern,
}

/// Direct-sum array factor `f = M^2 H_M(x1) H_M(x2)` of a rotated
/// sub-array, without the element gain.
pub fn supa_array_factor(m: usize, orientation: Orientation, dir: Direction) -> Complex64 {
    let (x1, x2) = supa_arguments(orientation, dir);
    let mf = m as f64;
    mf * mf * dirichlet_kernel(x1, m) * dirichlet_kernel(x2, m)
}

/// Kernel arguments `(cos(el) sin(az - yaw), sin(el) cos(pitch) - cos(el) sin(pitch) cos(az - yaw))`.
pub fn supa_arguments(orientation: Orientation, dir: Direction) -> (f64, f64) {
    let d = dir.azimuth - orientation.yaw;
    let (se, ce) = dir.elevation.sin_cos();
    let (sp, cp) = orientation.pitch.sin_cos();
    (ce * d.sin(), se * cp - ce * sp * d.cos())
}

/// Response of one sub-array including the element gain.
pub fn supa_response(params: &SupaResponseParams, dir: Direction) -> Complex64 {
    let o = params.orientation;
    let amp = params
        .pattern
        .amplitude(o.yaw - dir.azimuth, o.pitch - dir.elevation);
    amp * supa_array_factor(params.m, o, dir)
}

#[derive(Debug, Clone, Copy)]
struct PortGeometry {
    yaw: f64,
    pitch: f64,
    sin_yaw: f64,
    cos_yaw: f64,
    sin_pitch: f64,
    cos_pitch: f64,
    center: Vector3<f64>,
    /// Reference element position scaled by `2 pi / lambda`.
    reference_phase: Vector3<f64>,
}

/// The spherical array as a manifold whose ports are the sub-arrays.
#[derive(Debug, Clone)]
pub struct DcaaArray {
    pub layout: DcaaLayout,
    pub pattern: ElementPattern,
    ports: Vec<PortGeometry>,
}

impl DcaaArray {
    pub fn new(layout: DcaaLayout, pattern: ElementPattern) -> Self {
        let wavenumber = 2.0 * PI / layout.wavelength_m;
        let ports = layout
            .supas
            .iter()
            .map(|s| {
                let (sin_yaw, cos_yaw) = s.orientation.yaw.sin_cos();
                let (sin_pitch, cos_pitch) = s.orientation.pitch.sin_cos();
                PortGeometry {
                    yaw: s.orientation.yaw,
                    pitch: s.orientation.pitch,
                    sin_yaw,
                    cos_yaw,
                    sin_pitch,
                    cos_pitch,
                    center: s.center,
                    reference_phase: wavenumber * s.reference,
                }
            })
            .collect();
        Self {
            layout,
            pattern,
            ports,
        }
    }

    /// Whether the sphere shadows sub-array `port` from `look`.
    ///
    /// Grazing incidence (`k . p = 0`) counts as illuminated.
    #[inline]
    pub fn is_blocked(&self, port: usize, look: &Look) -> bool {
        look.wave_vector().dot(&self.ports[port].center) > 0.0
    }

    /// Response of the sub-array `port` with blockage but without the
    /// reference-element phase.
    pub fn local_response(&self, port: usize, look: &Look) -> Complex64 {
        let g = &self.ports[port];
        let params = SupaResponseParams {
            m: self.layout.m,
            orientation: Orientation::new(g.yaw, g.pitch),
            pattern: self.pattern,
        };
        if self.is_blocked(port, look) {
            Complex64::new(0.0, 0.0)
        } else {
            supa_response(&params, look.dir)
        }
    }
}

impl ArrayManifold for DcaaArray {
    fn port_count(&self) -> usize {
        self.ports.len()
    }

    fn side(&self) -> usize {
        self.layout.m
    }

    #[inline]
    fn port_response(&self, port: usize, look: &Look) -> Complex64 {
        let g = &self.ports[port];
        let k = look.wave_vector();
        if k.dot(&g.center) > 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let mf = self.layout.m as f64;
        let cos_d = look.cos_az * g.cos_yaw + look.sin_az * g.sin_yaw;
        let sin_d = look.sin_az * g.cos_yaw - look.cos_az * g.sin_yaw;
        let x1 = look.cos_el * sin_d;
        let x2 = look.sin_el * g.cos_pitch - look.cos_el * g.sin_pitch * cos_d;
        let gain = self
            .pattern
            .amplitude(g.yaw - look.dir.azimuth, g.pitch - look.dir.elevation);
        let amp = mf * mf * gain * dirichlet_amplitude(x1, mf) * dirichlet_amplitude(x2, mf);
        let phase = 0.5 * PI * (mf - 1.0) * (x1 + x2) - k.dot(&g.reference_phase);
        Complex64::from_polar(amp, phase)
    }
}

/// Full response vector of the sphere, aligned with the layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct DcaaResponseVector(pub Vec<Complex64>);

pub fn dcaa_response(array: &DcaaArray, dir: Direction) -> DcaaResponseVector {
    DcaaResponseVector(array.response_vector(dir))
}

/// Per-direction maximum port magnitude and the (0-based) port attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeSample {
    pub dir: Direction,
    pub magnitude: f64,
    pub best_port: Option<usize>,
}

pub fn envelope<A: ArrayManifold + ?Sized>(array: &A, grid: &[Direction]) -> Vec<EnvelopeSample> {
    use rayon::prelude::*;
    grid.par_iter()
        .map(|&dir| {
            let look = Look::new(dir);
            let mut best = (0.0, None);
            for n in 0..array.port_count() {
                let mag = array.port_response(n, &look).norm();
                if mag > best.0 {
                    best = (mag, Some(n));
                }
            }
            EnvelopeSample {
                dir,
                magnitude: best.0,
                best_port: best.1,
            }
        })
        .collect()
}

/// One KPC beam; `sin_phi = 2p/M`, `sin_theta = 2q/M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Codeword {
    pub p: i32,
    pub q: i32,
    pub sin_phi: f64,
    pub sin_theta: f64,
}

impl Codeword {
    /// Direction of the main-lobe peak, `(asin(sin_phi / cos theta_q), theta_q)`,
    /// or `None` when that arcsine does not exist.
    pub fn peak_direction(&self) -> Option<Direction> {
        let el = self.sin_theta.asin();
        let s = self.sin_phi / el.cos();
        (s.abs() <= 1.0).then(|| Direction::new(s.asin(), el))
    }

    /// Weight vector `c_h(phi_p) (x) c_v(theta_q)` of length `M^2`.
    ///
    /// The horizontal factor is the slow index so that it lines up with the
    /// `a_1 (x) a_2` ordering of [`upa_steering`].
    pub fn weights(&self, m: usize) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(m * m);
        for a in 0..m {
            for b in 0..m {
                let phase = PI * (a as f64 * self.sin_phi + b as f64 * self.sin_theta);
                out.push(Complex64::from_polar(1.0, phase));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpcCodebook {
    pub m: usize,
    /// Elevation codebook size.
    pub n_v: usize,
    /// Azimuth codebook size.
    pub n_h: usize,
    /// Ordered by `q` ascending, then `p` ascending.
    pub codewords: Vec<Codeword>,
}

pub fn build_kpc(m: usize, phi_max: f64, theta_max: f64) -> KpcCodebook {
    let step = 2.0 / m as f64;
    let half = |lim: f64| ((lim.sin() / step) + 1e-12).floor() as i32;
    let (hv, hh) = (half(theta_max), half(phi_max));
    let mut codewords = Vec::with_capacity(((2 * hv + 1) * (2 * hh + 1)) as usize);
    for q in -hv..=hv {
        for p in -hh..=hh {
            codewords.push(Codeword {
                p,
                q,
                sin_phi: p as f64 * step,
                sin_theta: q as f64 * step,
            });
        }
    }
    KpcCodebook {
        m,
        n_v: (2 * hv + 1) as usize,
        n_h: (2 * hh + 1) as usize,
        codewords,
    }
}

/// Planar array steering vector `a_1 (x) a_2` of an `M x M` half-wavelength
/// array in the yz-plane, without element gain.
pub fn upa_steering(m: usize, dir: Direction) -> Vec<Complex64> {
    let k = dir.wave_vector();
    let u1 = k.0.y; // u1 = [0,1,0]
    let u2 = k.0.z; // u2 = [0,0,1]
    let mut out = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            out.push(Complex64::from_polar(1.0, -PI * (a as f64 * u1 + b as f64 * u2)));
        }
    }
    out
}

/// Beam pattern of a KPC codeword (closed Dirichlet-product form).
pub fn kpc_response(m: usize, codeword: &Codeword, pattern: &ElementPattern, dir: Direction) -> Complex64 {
    kpc_steered_response(m, codeword.sin_phi, codeword.sin_theta, pattern, dir)
}

/// KPC beam pattern for continuous steering sines.
pub fn kpc_steered_response(
    m: usize,
    sin_phi: f64,
    sin_theta: f64,
    pattern: &ElementPattern,
    dir: Direction,
) -> Complex64 {
    let mf = m as f64;
    let x1 = dir.elevation.cos() * dir.azimuth.sin() - sin_phi;
    let x2 = dir.elevation.sin() - sin_theta;
    pattern.amplitude(dir.azimuth, dir.elevation) * mf * mf * dirichlet_kernel(x1, m) * dirichlet_kernel(x2, m)
}

/// Same quantity as [`kpc_response`], computed as the explicit inner
/// product `c^H a` over all `M^2` elements.
pub fn kpc_response_inner(m: usize, codeword: &Codeword, pattern: &ElementPattern, dir: Direction) -> Complex64 {
    let a = upa_steering(m, dir);
    let c = codeword.weights(m);
    let dot: Complex64 = c.iter().zip(&a).map(|(ci, ai)| ci.conj() * ai).sum();
    pattern.amplitude(dir.azimuth, dir.elevation) * dot
}

/// The planar baseline as a manifold whose ports are KPC beams.
#[derive(Debug, Clone)]
pub struct KpcArray {
    pub codebook: KpcCodebook,
    pub pattern: ElementPattern,
}

impl KpcArray {
    pub fn new(codebook: KpcCodebook, pattern: ElementPattern) -> Self {
        Self { codebook, pattern }
    }
}

impl ArrayManifold for KpcArray {
    fn port_count(&self) -> usize {
        self.codebook.codewords.len()
    }

    fn side(&self) -> usize {
        self.codebook.m
    }

    #[inline]
    fn port_response(&self, port: usize, look: &Look) -> Complex64 {
        let c = &self.codebook.codewords[port];
        let mf = self.codebook.m as f64;
        let x1 = look.cos_el * look.sin_az - c.sin_phi;
        let x2 = look.sin_el - c.sin_theta;
        let gain = self.pattern.amplitude(look.dir.azimuth, look.dir.elevation);
        let amp = mf * mf * gain * dirichlet_amplitude(x1, mf) * dirichlet_amplitude(x2, mf);
        Complex64::from_polar(amp, 0.5 * PI * (mf - 1.0) * (x1 + x2))
    }
}
