//! Null curves, main-lobe widths and first-null angular resolution of the
//! sub-array beam and of KPC beams, plus a brute-force null search used to
//! check the closed forms.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DcaaError, Result};
use crate::harness::output::fmt_f64;
use crate::numerics::{dirichlet_amplitude, Direction, Orientation};

/// Which Dirichlet factor vanishes, together with its source beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum NullFamily {
    /// `cos(el) sin(az - yaw) = 2p/M`.
    SupaU1 { orientation: Orientation },
    /// `sin(el) cos(pitch) - cos(el) sin(pitch) cos(az - yaw) = 2q/M`.
    SupaU2 { orientation: Orientation },
    /// `sin(el) = sin_theta + 2m/M`.
    KpcElevation { sin_theta: f64 },
    /// `cos(el) sin(az) = sin_phi + 2n/M`.
    KpcAzimuth { sin_phi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullCurveSpec {
    pub side: usize,
    pub order: i32,
    pub family: NullFamily,
}

impl NullCurveSpec {
    pub fn validate(&self) -> Result<()> {
        let m = self.side as i32;
        if self.side < 2 {
            return Err(DcaaError::Domain(format!("array side must be at least 2, got {}", self.side)));
        }
        if self.order == 0 {
            return Err(DcaaError::Domain("null order must be non-zero".into()));
        }
        // Multiples of M put the kernel on a grating lobe, not a null.
        if self.order % m == 0 {
            return Err(DcaaError::Domain(format!("null order {} is a multiple of M={m}", self.order)));
        }
        let limit = match self.family {
            NullFamily::SupaU1 { .. } => m / 2,
            NullFamily::SupaU2 { .. } => m,
            NullFamily::KpcElevation { .. } | NullFamily::KpcAzimuth { .. } => 2 * m,
        };
        if self.order.abs() > limit {
            return Err(DcaaError::Domain(format!("null order {} exceeds {limit}", self.order)));
        }
        Ok(())
    }
}

/// A one-dimensional cut through direction space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cut {
    /// Elevation held fixed; solutions are azimuths.
    FixedElevation(f64),
    /// Azimuth held fixed; solutions are elevations.
    FixedAzimuth(f64),
}

const DOMAIN_EPS: f64 = 1e-12;

fn keep_in_domain(mut v: Vec<f64>) -> Vec<f64> {
    v.retain(|x| x.is_finite() && x.abs() <= FRAC_PI_2 + DOMAIN_EPS);
    for x in v.iter_mut() {
        *x = x.clamp(-FRAC_PI_2, FRAC_PI_2);
    }
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    v
}

fn in_unit(v: f64) -> bool {
    v.abs() <= 1.0 + 1e-15
}

fn asin_c(v: f64) -> f64 {
    v.clamp(-1.0, 1.0).asin()
}

fn acos_c(v: f64) -> f64 {
    v.clamp(-1.0, 1.0).acos()
}

/// Angles `x` with `sin(x) = v`, within one turn either side of zero.
fn sin_solutions(v: f64) -> Vec<f64> {
    if !in_unit(v) {
        return Vec::new();
    }
    let a = asin_c(v);
    (-2..=2).map(|n: i32| if n % 2 == 0 { a } else { -a } + n as f64 * PI).collect()
}

/// Angles `x` with `cos(x) = v`, within one turn either side of zero.
fn cos_solutions(v: f64) -> Vec<f64> {
    if !in_unit(v) {
        return Vec::new();
    }
    let a = acos_c(v);
    (-1..=1).flat_map(|k| [a + 2.0 * PI * k as f64, -a + 2.0 * PI * k as f64]).collect()
}

/// Solutions of a null condition on a cut, restricted to `[-pi/2, pi/2]`.
///
/// Degenerate cases (the condition does not involve the free variable)
/// yield an empty list.
pub fn null_directions(spec: &NullCurveSpec, cut: Cut) -> Result<Vec<f64>> {
    spec.validate()?;
    let rhs = 2.0 * spec.order as f64 / spec.side as f64;
    let raw = match (spec.family, cut) {
        (NullFamily::SupaU1 { orientation: o }, Cut::FixedElevation(el)) => {
            let c = el.cos();
            if c.abs() < 1e-300 {
                Vec::new()
            } else {
                sin_solutions(rhs / c).into_iter().map(|d| o.yaw + d).collect()
            }
        }
        (NullFamily::SupaU1 { orientation: o }, Cut::FixedAzimuth(az)) => {
            let s = (az - o.yaw).sin();
            if s == 0.0 {
                Vec::new()
            } else {
                cos_solutions(rhs / s)
            }
        }
        (NullFamily::SupaU2 { orientation: o }, Cut::FixedAzimuth(az)) => {
            let a = o.pitch.cos();
            let b = o.pitch.sin() * (az - o.yaw).cos();
            let rho = a.hypot(b);
            let delta = b.atan2(a);
            sin_solutions(rhs / rho).into_iter().map(|t| delta + t).collect()
        }
        (NullFamily::SupaU2 { orientation: o }, Cut::FixedElevation(el)) => {
            let den = el.cos() * o.pitch.sin();
            if den == 0.0 {
                Vec::new()
            } else {
                let v = (el.sin() * o.pitch.cos() - rhs) / den;
                cos_solutions(v).into_iter().map(|d| o.yaw + d).collect()
            }
        }
        (NullFamily::KpcElevation { sin_theta }, Cut::FixedAzimuth(_)) => sin_solutions(sin_theta + rhs),
        (NullFamily::KpcElevation { .. }, Cut::FixedElevation(_)) => Vec::new(),
        (NullFamily::KpcAzimuth { sin_phi }, Cut::FixedElevation(el)) => {
            let c = el.cos();
            if c.abs() < 1e-300 {
                Vec::new()
            } else {
                sin_solutions((sin_phi + rhs) / c)
            }
        }
        (NullFamily::KpcAzimuth { sin_phi }, Cut::FixedAzimuth(az)) => {
            let s = az.sin();
            if s == 0.0 {
                Vec::new()
            } else {
                cos_solutions((sin_phi + rhs) / s)
            }
        }
    };
    Ok(keep_in_domain(raw))
}

/// Null-to-null main-lobe widths `(azimuth, elevation)` of a sub-array
/// pointing at elevation `pitch`.
pub fn supa_beamwidth(m: usize, pitch: f64) -> Result<(f64, f64)> {
    let mf = m as f64;
    let arg = 2.0 / (mf * pitch.cos());
    if !(arg <= 1.0) || m < 2 {
        return Err(DcaaError::Domain(format!(
            "azimuth beamwidth undefined: 2/(M cos(pitch)) = {arg}"
        )));
    }
    Ok((2.0 * arg.asin(), 2.0 * (2.0 / mf).asin()))
}

/// First-null angular resolution at one desired direction.
///
/// Undefined axes carry `NaN` and a cleared flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionResult {
    pub desired: Direction,
    pub gamma_v: f64,
    pub gamma_h: f64,
    pub defined_v: bool,
    pub defined_h: bool,
    /// `(below, above)` first nulls on the elevation cut.
    pub theta_nulls: Option<(f64, f64)>,
    /// `(below, above)` first nulls on the azimuth cut.
    pub phi_nulls: Option<(f64, f64)>,
}

impl ResolutionResult {
    fn from_nulls(desired: Direction, theta: Option<(f64, f64)>, phi: Option<(f64, f64)>) -> Self {
        let half = |p: Option<(f64, f64)>| p.map_or(f64::NAN, |(lo, hi)| 0.5 * (hi - lo));
        Self {
            desired,
            gamma_v: half(theta),
            gamma_h: half(phi),
            defined_v: theta.is_some(),
            defined_h: phi.is_some(),
            theta_nulls: theta,
            phi_nulls: phi,
        }
    }
}

/// Resolution of the sphere: the beam of the sub-array whose boresight is
/// the desired direction.
pub fn dcaa_resolution(m: usize, desired: Direction) -> ResolutionResult {
    let mf = m as f64;
    let gv = (2.0 / mf).asin();
    let arg = 2.0 / (mf * desired.elevation.cos());
    let theta = Some((desired.elevation - gv, desired.elevation + gv));
    let gh = arg.asin();
    let phi = (arg <= 1.0).then_some((desired.azimuth - gh, desired.azimuth + gh));
    // Keep the half-widths exact rather than re-deriving them from the nulls.
    ResolutionResult {
        gamma_v: gv,
        gamma_h: if arg <= 1.0 { gh } else { f64::NAN },
        ..ResolutionResult::from_nulls(desired, theta, phi)
    }
}

/// Branch scalars of the closed-form planar-array resolution, with the null
/// sets they summarise. Angles are for the reflected direction
/// `(|az|, |el|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpaResolutionTerms {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Vertical branch 1..=6 in the order E-F, G-F, A-B, A-C, D-B, D-C.
    pub vertical_case: u8,
    /// Horizontal branch 1..=4; 4 is undefined.
    pub horizontal_case: u8,
    /// Half-widths read off the branch table.
    pub branch_gamma_v: f64,
    pub branch_gamma_h: f64,
    pub theta_plus: Vec<f64>,
    pub theta_minus: Vec<f64>,
    pub phi_plus: Vec<f64>,
    pub phi_minus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpaResolution {
    pub result: ResolutionResult,
    pub terms: UpaResolutionTerms,
}

/// KPC steering sines whose beam peaks at `peak`.
pub fn kpc_steering_for_peak(peak: Direction) -> (f64, f64) {
    (peak.elevation.cos() * peak.azimuth.sin(), peak.elevation.sin())
}

fn split_sets(values: Vec<f64>, pivot: f64) -> (Vec<f64>, Vec<f64>) {
    let tol = 1e-12;
    let mut plus: Vec<f64> = values.iter().copied().filter(|&v| v > pivot + tol).collect();
    let mut minus: Vec<f64> = values.into_iter().filter(|&v| v < pivot - tol).collect();
    plus.sort_by(f64::total_cmp);
    minus.sort_by(f64::total_cmp);
    plus.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    minus.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    (plus, minus)
}

fn nearest_pair(plus: &[f64], minus: &[f64]) -> Option<(f64, f64)> {
    Some((*minus.last()?, *plus.first()?))
}

/// Resolution of a planar array whose KPC beam peaks at `desired`.
///
/// The null sets are built from every solution of the Dirichlet null
/// conditions on both cuts; the branch table is evaluated alongside for
/// reporting. Other quadrants are reflected onto `az, el >= 0`.
pub fn upa_resolution(m: usize, desired: Direction) -> UpaResolution {
    let mf = m as f64;
    let az = desired.azimuth.abs();
    let el = desired.elevation.abs();
    let (sp, sq) = kpc_steering_for_peak(Direction::new(az, el));
    let step = 2.0 / mf;
    let orders: Vec<i32> = (-2 * m as i32..=2 * m as i32).filter(|k| k % m as i32 != 0).collect();

    // Elevation cut through the peak azimuth.
    let sin_az = az.sin();
    let mut theta_nulls = Vec::new();
    for &k in &orders {
        theta_nulls.extend(sin_solutions(sq + step * k as f64));
        if sin_az > 0.0 {
            theta_nulls.extend(cos_solutions((sp + step * k as f64) / sin_az));
        }
    }
    let (theta_plus, theta_minus) = split_sets(theta_nulls, el);

    // Azimuth cut through the peak elevation.
    let cos_el = el.cos();
    let mut phi_nulls = Vec::new();
    for &k in &orders {
        phi_nulls.extend(sin_solutions((sp + step * k as f64) / cos_el));
    }
    let (phi_plus, phi_minus) = split_sets(phi_nulls, az);

    let flip = |p: Option<(f64, f64)>, neg: bool| {
        p.map(|(lo, hi)| if neg { (-hi, -lo) } else { (lo, hi) })
    };
    let theta_pair = nearest_pair(&theta_plus, &theta_minus);
    let phi_pair = nearest_pair(&phi_plus, &phi_minus);
    let theta_pair = if desired.elevation < 0.0 { flip(theta_pair, true) } else { theta_pair };
    let phi_pair = if desired.azimuth < 0.0 { flip(phi_pair, true) } else { phi_pair };
    let result = ResolutionResult::from_nulls(desired, theta_pair, phi_pair);

    let terms = upa_branch_terms(m, sp, el, theta_plus, theta_minus, phi_plus, phi_minus);
    UpaResolution { result, terms }
}

fn upa_branch_terms(
    m: usize,
    sp: f64,
    el: f64,
    theta_plus: Vec<f64>,
    theta_minus: Vec<f64>,
    phi_plus: Vec<f64>,
    phi_minus: Vec<f64>,
) -> UpaResolutionTerms {
    let a2 = 2.0 / m as f64;
    let (s, c) = el.sin_cos();
    let ratio = a2 / sp;
    let x = s + a2;
    let y = c * (1.0 + ratio);
    let z = c * (1.0 - ratio);
    let asin_n = |v: f64| if in_unit(v) { asin_c(v) } else { f64::NAN };
    let acos_n = |v: f64| if in_unit(v) { acos_c(v) } else { f64::NAN };
    let e = asin_n(x);
    let f = asin_n(s - a2);
    let g = PI - f;
    let a = e.min(acos_n(z));
    let b = f.max(-acos_n(z));
    let cc = f.max(acos_n(y));
    // Nearest upper null when `X > 1`: the smaller of the two candidates.
    let d = g.min(acos_n(z));

    let vertical_case = match (x <= 1.0, y <= 1.0, z.abs() <= 1.0) {
        (true, false, false) => 1,
        (false, false, false) => 2,
        (true, false, true) => 3,
        (true, true, true) => 4,
        (false, false, true) => 5,
        (false, true, true) => 6,
        _ => 0,
    };
    let width_v = match vertical_case {
        1 => e - f,
        2 => g - f,
        3 => a - b,
        4 => a - cc,
        5 => d - b,
        6 => d - cc,
        _ => f64::NAN,
    };

    let p = (sp + a2) / c;
    let q = (sp - a2) / c;
    let (horizontal_case, width_h) = match (in_unit(p), in_unit(q)) {
        (true, true) => (1, asin_c(p) - asin_c(q)),
        (false, true) => (2, PI - 2.0 * asin_c(q)),
        (true, false) => (3, PI + 2.0 * asin_c(p)),
        (false, false) => (4, f64::NAN),
    };

    UpaResolutionTerms {
        a,
        b,
        c: cc,
        d,
        e,
        f,
        g,
        x,
        y,
        z,
        vertical_case,
        horizontal_case,
        branch_gamma_v: 0.5 * width_v,
        branch_gamma_h: 0.5 * width_h,
        theta_plus,
        theta_minus,
        phi_plus,
        phi_minus,
    }
}

/// Scan parameters of the brute-force null search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub step: f64,
    pub span: f64,
    pub tolerance: f64,
    pub null_threshold: f64,
}

impl OracleOptions {
    /// Defaults for an `M x M` aperture (peak magnitude `M^2`).
    pub fn for_side(m: usize) -> Self {
        let mf = m as f64;
        Self {
            step: 5e-4,
            span: 2.0 * PI,
            tolerance: 1e-11,
            null_threshold: 1e-8 * mf * mf,
        }
    }
}

fn golden_min<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 { x1 } else { x2 }
}

/// First zero of `|g|` moving from `start` in direction `sign`.
pub fn first_null<F: Fn(f64) -> f64>(g: F, start: f64, sign: f64, opts: &OracleOptions) -> Option<f64> {
    scan_for_null(&g, start, sign, opts)
}

fn scan_for_null(g: &dyn Fn(f64) -> f64, start: f64, sign: f64, opts: &OracleOptions) -> Option<f64> {
    let n = (opts.span / opts.step).ceil() as usize;
    let at = |i: usize| start + sign * opts.step * i as f64;
    let mut prev = g(at(0));
    let mut cur = g(at(1));
    for i in 1..n {
        let next = g(at(i + 1));
        if cur <= prev && cur <= next {
            let (a, b) = (at(i - 1), at(i + 1));
            let t = golden_min(&|x| g(x), a.min(b), a.max(b), opts.tolerance);
            if g(t) < opts.null_threshold {
                // Nulls of the two factors can share one coarse dip; look
                // for a nearer one between the previous sample and `t`.
                let reach = (t - at(i - 1)).abs();
                if reach > 4.0 * opts.tolerance && opts.step > 1e-7 {
                    let fine = OracleOptions { step: opts.step / 64.0, span: reach, ..*opts };
                    if let Some(near) = scan_for_null(g, at(i - 1), sign, &fine) {
                        if sign * (t - near) > 2.0 * opts.tolerance {
                            return Some(near);
                        }
                    }
                }
                return Some(t);
            }
        }
        prev = cur;
        cur = next;
    }
    None
}

/// Half null-to-null widths of `pattern` (a magnitude) on the two cuts
/// through `desired`, found by scanning outward and refining each dip.
pub fn numerical_resolution_oracle<F>(pattern: F, desired: Direction, opts: &OracleOptions) -> Result<ResolutionResult>
where
    F: Fn(Direction) -> f64,
{
    let v = |t: f64| pattern(Direction::new(desired.azimuth, t));
    let h = |t: f64| pattern(Direction::new(t, desired.elevation));
    let axis = |g: &dyn Fn(f64) -> f64, start: f64, name: &'static str| -> Result<(f64, f64)> {
        let hi = first_null(g, start, 1.0, opts).ok_or(DcaaError::SearchFailure { axis: name })?;
        let lo = first_null(g, start, -1.0, opts).ok_or(DcaaError::SearchFailure { axis: name })?;
        Ok((lo, hi))
    };
    let theta = axis(&v, desired.elevation, "elevation")?;
    let phi = axis(&h, desired.azimuth, "azimuth")?;
    Ok(ResolutionResult::from_nulls(desired, Some(theta), Some(phi)))
}

/// Array-factor magnitude of the sub-array whose boresight is `desired`.
pub fn dcaa_pattern(m: usize, desired: Direction) -> impl Fn(Direction) -> f64 {
    let mf = m as f64;
    let o = Orientation::new(desired.azimuth, desired.elevation);
    move |d: Direction| {
        let (x1, x2) = crate::response::supa_arguments(o, d);
        mf * mf * (dirichlet_amplitude(x1, mf) * dirichlet_amplitude(x2, mf)).abs()
    }
}

/// Array-factor magnitude of the KPC beam peaking at `desired`.
pub fn upa_pattern(m: usize, desired: Direction) -> impl Fn(Direction) -> f64 {
    let mf = m as f64;
    let (sp, sq) = kpc_steering_for_peak(desired);
    move |d: Direction| {
        let x1 = d.elevation.cos() * d.azimuth.sin() - sp;
        let x2 = d.elevation.sin() - sq;
        mf * mf * (dirichlet_amplitude(x1, mf) * dirichlet_amplitude(x2, mf)).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Dcaa,
    UpaKpc,
}

impl std::str::FromStr for Architecture {
    type Err = DcaaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dcaa" => Ok(Self::Dcaa),
            "upa-kpc" => Ok(Self::UpaKpc),
            other => Err(DcaaError::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Dcaa => "dcaa",
            Self::UpaKpc => "upa-kpc",
        })
    }
}

pub fn resolution(arch: Architecture, m: usize, desired: Direction) -> ResolutionResult {
    match arch {
        Architecture::Dcaa => dcaa_resolution(m, desired),
        Architecture::UpaKpc => upa_resolution(m, desired).result,
    }
}

/// Closed-form resolution over a grid of desired directions.
pub fn resolution_map(arch: Architecture, m: usize, grid: &[Direction]) -> Vec<ResolutionResult> {
    grid.par_iter().map(|&d| resolution(arch, m, d)).collect()
}

pub fn write_resolution_csv(path: &Path, rows: &[ResolutionResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["phi_deg", "theta_deg", "gamma_v_deg", "gamma_h_deg", "defined_v", "defined_h"])?;
    for r in rows {
        let (az, el) = r.desired.to_degrees();
        w.write_record([
            fmt_f64(az),
            fmt_f64(el),
            fmt_f64(r.gamma_v.to_degrees()),
            fmt_f64(r.gamma_h.to_degrees()),
            r.defined_v.to_string(),
            r.defined_h.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
