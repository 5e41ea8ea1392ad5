//! Two-dimensional MUSIC over the post-selection steering vectors.

use std::path::Path;

use nalgebra::{DMatrix, Matrix6, SymmetricEigen, Vector6};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DcaaError, Result};
use crate::harness::output::fmt_f64;
use crate::numerics::Direction;
use crate::response::{ArrayManifold, Look};
use crate::signalchain::SelectionMap;

/// Below this steering-vector norm a cell is treated as fully shadowed.
pub const MIN_STEERING_NORM: f64 = 1e-12;

/// `C = Y Y^H / K`, symmetrised so it is exactly Hermitian.
pub fn sample_covariance(y: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let k = y.ncols();
    if k == 0 {
        return Err(DcaaError::Config("snapshot matrix has no columns".into()));
    }
    let c = y * y.adjoint() / Complex64::new(k as f64, 0.0);
    Ok((&c + c.adjoint()) * Complex64::new(0.5, 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceDecomposition {
    /// `N_RF x order`.
    pub signal: DMatrix<Complex64>,
    /// `N_RF x (N_RF - order)`.
    pub noise: DMatrix<Complex64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
}

/// Hermitian eigendecomposition split into the top-`order` (signal) and
/// remaining (noise) eigenvectors.
pub fn subspace_split(c: &DMatrix<Complex64>, order: usize) -> Result<SubspaceDecomposition> {
    let n = c.nrows();
    if c.ncols() != n {
        return Err(DcaaError::Numerical("covariance is not square".into()));
    }
    if order == 0 || order >= n {
        return Err(DcaaError::ModelOrder { order, n_rf: n });
    }
    if c.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(DcaaError::Numerical("covariance has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(c.clone());
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let cols = |range: &[usize]| {
        DMatrix::from_columns(&range.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>())
    };
    Ok(SubspaceDecomposition {
        signal: cols(&idx[..order]),
        noise: cols(&idx[order..]),
        eigenvalues: idx.iter().map(|&i| eig.eigenvalues[i]).collect(),
    })
}

/// Rectangular scan grid; both axes strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub azimuths: Vec<f64>,
    pub elevations: Vec<f64>,
}

impl ScanGrid {
    /// `[-az_max, az_max] x [-el_max, el_max]` at `step` radians, endpoints
    /// included.
    pub fn symmetric(az_max: f64, el_max: f64, step: f64) -> Result<Self> {
        Self::window(-az_max, az_max, -el_max, el_max, step)
    }

    pub fn window(az_lo: f64, az_hi: f64, el_lo: f64, el_hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(az_hi >= az_lo) || !(el_hi >= el_lo) {
            return Err(DcaaError::Config(format!("invalid scan window or step {step}")));
        }
        let axis = |lo: f64, hi: f64| {
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| lo + step * i as f64).collect::<Vec<_>>()
        };
        Ok(Self {
            azimuths: axis(az_lo, az_hi),
            elevations: axis(el_lo, el_hi),
        })
    }

    pub fn len(&self) -> usize {
        self.azimuths.len() * self.elevations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn direction(&self, row: usize, col: usize) -> Direction {
        Direction::new(self.azimuths[col], self.elevations[row])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub dir: Direction,
    pub value: f64,
    /// `(row, col)` of the grid cell.
    pub cell: (usize, usize),
}

/// Spectrum values laid out row-major, one row per elevation.
#[derive(Debug, Clone, PartialEq)]
pub struct MusicSpectrum {
    pub grid: ScanGrid,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    /// `|h|^2` of the selected ports per cell; empty when unknown.
    pub gain: Vec<f64>,
    pub peaks: Vec<Peak>,
}

impl MusicSpectrum {
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.grid.azimuths.len() + col;
        self.valid[i].then_some(self.values[i])
    }

    /// Cell with the largest valid value.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let w = self.grid.azimuths.len();
        let mut best: Option<(usize, f64)> = None;
        for (i, (&v, &ok)) in self.values.iter().zip(&self.valid).enumerate() {
            if ok && best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| (i / w, i % w))
    }
}

fn noise_rows(decomp: &SubspaceDecomposition) -> Vec<Vec<Complex64>> {
    (0..decomp.noise.ncols())
        .map(|j| decomp.noise.column(j).iter().map(|x| x.conj()).collect())
        .collect()
}

fn pseudo_value<A: ArrayManifold + ?Sized>(
    en_h: &[Vec<Complex64>],
    array: &A,
    selection: &SelectionMap,
    look: &Look,
    h: &mut [Complex64],
) -> Option<(f64, f64)> {
    array.steering_into(&selection.indices, look, h);
    let norm2: f64 = h.iter().map(|x| x.norm_sqr()).sum();
    if norm2.sqrt() < MIN_STEERING_NORM {
        return None;
    }
    let den: f64 = en_h
        .iter()
        .map(|e| e.iter().zip(h.iter()).map(|(a, b)| a * b).sum::<Complex64>().norm_sqr())
        .sum();
    Some((norm2 / den.max(norm2 * f64::EPSILON * f64::EPSILON), norm2))
}

/// Normalised MUSIC pseudo-spectrum `|h|^2 / |E_n^H h|^2` on `grid`.
///
/// The normalisation removes the dependence on the steering-vector norm,
/// which otherwise lets weakly illuminated (near-shadowed) directions
/// dominate. Shadowed cells are flagged invalid.
pub fn music_spectrum<A: ArrayManifold + ?Sized>(
    decomp: &SubspaceDecomposition,
    array: &A,
    selection: &SelectionMap,
    grid: &ScanGrid,
) -> MusicSpectrum {
    let n_rf = selection.len();
    let en_h = noise_rows(decomp);
    let az_trig: Vec<(f64, f64)> = grid.azimuths.iter().map(|a| a.sin_cos()).collect();
    let rows: Vec<(Vec<f64>, Vec<bool>, Vec<f64>)> = grid
        .elevations
        .par_iter()
        .map(|&el| {
            let (sin_el, cos_el) = el.sin_cos();
            let mut h = vec![Complex64::new(0.0, 0.0); n_rf];
            let mut vals = Vec::with_capacity(az_trig.len());
            let mut ok = Vec::with_capacity(az_trig.len());
            let mut gain = Vec::with_capacity(az_trig.len());
            for (&az, &(sin_az, cos_az)) in grid.azimuths.iter().zip(&az_trig) {
                let look = Look {
                    dir: Direction::new(az, el),
                    sin_az,
                    cos_az,
                    sin_el,
                    cos_el,
                };
                match pseudo_value(&en_h, array, selection, &look, &mut h) {
                    Some((v, g)) => {
                        vals.push(v);
                        ok.push(true);
                        gain.push(g);
                    }
                    None => {
                        vals.push(0.0);
                        ok.push(false);
                        gain.push(0.0);
                    }
                }
            }
            (vals, ok, gain)
        })
        .collect();
    let mut values = Vec::with_capacity(grid.len());
    let mut valid = Vec::with_capacity(grid.len());
    let mut gain = Vec::with_capacity(grid.len());
    for (v, o, g) in rows {
        values.extend(v);
        valid.extend(o);
        gain.extend(g);
    }
    MusicSpectrum {
        grid: grid.clone(),
        values,
        valid,
        gain,
        peaks: Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakOptions {
    pub max_peaks: usize,
    /// Half-width of the comparison window in cells (1 = 8-neighbourhood).
    pub neighborhood: usize,
    /// Discard peaks more than this many dB below the strongest one.
    pub floor_db: Option<f64>,
    pub refine: bool,
    /// Number of strongest grid maxima re-evaluated off-grid before ranking
    /// (0 disables). Peaks of the full-sphere manifold are often much
    /// narrower than a scan cell, so grid values alone rank them poorly.
    pub polish_candidates: usize,
    /// Search sector: ignore maxima where the selected ports see less than
    /// this many dB of the best steering power on the grid. Outside it the
    /// normalised spectrum is dominated by round-off, and when all selected
    /// beams share a factor (e.g. one KPC azimuth codeword) it is flat along
    /// that factor, so far sidelobes tie with the true peaks.
    pub gain_floor_db: Option<f64>,
}

impl PeakOptions {
    pub fn new(max_peaks: usize) -> Self {
        Self {
            max_peaks,
            neighborhood: 1,
            floor_db: None,
            refine: true,
            polish_candidates: (4 * max_peaks).max(16),
            gain_floor_db: Some(10.0),
        }
    }
}

/// Strict local maxima of the spectrum, strongest first.
pub fn find_peaks(spectrum: &MusicSpectrum, opts: &PeakOptions) -> Vec<Peak> {
    let (h, w) = (spectrum.grid.elevations.len(), spectrum.grid.azimuths.len());
    let r = opts.neighborhood.max(1) as isize;
    let min_gain = match opts.gain_floor_db {
        Some(db) if !spectrum.gain.is_empty() => {
            spectrum.gain.iter().copied().fold(0.0, f64::max) * 10f64.powf(-db / 10.0)
        }
        _ => 0.0,
    };
    let mut peaks = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let Some(v) = spectrum.at(row, col) else { continue };
            if min_gain > 0.0 && spectrum.gain[row * w + col] < min_gain {
                continue;
            }
            let mut is_max = true;
            'win: for dr in -r..=r {
                for dc in -r..=r {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (rr, cc) = (row as isize + dr, col as isize + dc);
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        continue;
                    }
                    if let Some(u) = spectrum.at(rr as usize, cc as usize) {
                        if u >= v {
                            is_max = false;
                            break 'win;
                        }
                    }
                }
            }
            if is_max {
                peaks.push(Peak {
                    dir: spectrum.grid.direction(row, col),
                    value: v,
                    cell: (row, col),
                });
            }
        }
    }
    peaks.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.cell.cmp(&b.cell)));
    if let (Some(db), Some(top)) = (opts.floor_db, peaks.first().map(|p| p.value)) {
        let min = top * 10f64.powf(-db / 10.0);
        peaks.retain(|p| p.value >= min);
    }
    peaks.truncate(opts.max_peaks);
    if opts.refine {
        for p in &mut peaks {
            p.dir = refine_peak(spectrum, p.cell);
        }
    }
    peaks
}

/// Least-squares quadratic fit of `log10 P` over the 3x3 block around a
/// peak; the vertex offset is clamped to half a cell.
fn refine_peak(spectrum: &MusicSpectrum, (row, col): (usize, usize)) -> Direction {
    let g = &spectrum.grid;
    let base = g.direction(row, col);
    let (h, w) = (g.elevations.len(), g.azimuths.len());
    if row == 0 || col == 0 || row + 1 >= h || col + 1 >= w {
        return base;
    }
    let mut ata = Matrix6::<f64>::zeros();
    let mut atb = Vector6::<f64>::zeros();
    let mut count = 0;
    for dr in -1i32..=1 {
        for dc in -1i32..=1 {
            let Some(v) = spectrum.at((row as i32 + dr) as usize, (col as i32 + dc) as usize) else { continue };
            let (x, y) = (dc as f64, dr as f64);
            let phi = Vector6::new(1.0, x, y, x * x, x * y, y * y);
            ata += phi * phi.transpose();
            atb += phi * v.max(f64::MIN_POSITIVE).log10();
            count += 1;
        }
    }
    if count < 6 {
        return base;
    }
    let Some(c) = ata.lu().solve(&atb) else { return base };
    let (b, cc, d, e, f) = (c[1], c[2], c[3], c[4], c[5]);
    let det = 4.0 * d * f - e * e;
    if !(d < 0.0 && det > 0.0) {
        return base;
    }
    let dx = ((-2.0 * f * b + e * cc) / det).clamp(-0.5, 0.5);
    let dy = ((-2.0 * d * cc + e * b) / det).clamp(-0.5, 0.5);
    let step_az = g.azimuths[col + 1] - g.azimuths[col];
    let step_el = g.elevations[row + 1] - g.elevations[row];
    Direction::new(base.azimuth + dx * step_az, base.elevation + dy * step_el)
}

/// Full estimator: covariance, subspace split, spectrum, peaks.
pub fn estimate_directions<A: ArrayManifold + ?Sized>(
    array: &A,
    selection: &SelectionMap,
    y: &DMatrix<Complex64>,
    order: usize,
    grid: &ScanGrid,
    opts: &PeakOptions,
) -> Result<MusicSpectrum> {
    let c = sample_covariance(y)?;
    let decomp = subspace_split(&c, order)?;
    let mut spec = music_spectrum(&decomp, array, selection, grid);
    spec.peaks = if opts.polish_candidates == 0 {
        find_peaks(&spec, opts)
    } else {
        polish_peaks(&decomp, array, selection, &spec, opts)
    };
    Ok(spec)
}

const MAX_RECENTER: usize = 4;

fn cell_pitch(axis: &[f64]) -> f64 {
    if axis.len() > 1 { (axis[1] - axis[0]).abs() } else { 1e-3 }
}

/// Grid maxima followed by a local off-grid ascent of each candidate; the
/// candidates are then re-ranked by their polished values. A second pass
/// samples a finer patch around each candidate, since a narrow peak close
/// to a stronger one need not be a maximum on the grid at all.
pub fn polish_peaks<A: ArrayManifold + ?Sized>(
    decomp: &SubspaceDecomposition,
    array: &A,
    selection: &SelectionMap,
    spectrum: &MusicSpectrum,
    opts: &PeakOptions,
) -> Vec<Peak> {
    let coarse = PeakOptions {
        max_peaks: opts.polish_candidates.max(opts.max_peaks),
        floor_db: None,
        refine: true,
        ..*opts
    };
    let en_h = noise_rows(decomp);
    let g = &spectrum.grid;
    let pitch = [cell_pitch(&g.azimuths), cell_pitch(&g.elevations)];
    let outer = (
        (g.azimuths[0], g.azimuths[g.azimuths.len() - 1]),
        (g.elevations[0], g.elevations[g.elevations.len() - 1]),
    );
    let evaluator = || {
        let mut h = vec![Complex64::new(0.0, 0.0); selection.len()];
        let en_h = &en_h;
        move |d: Direction| {
            let (sa, ca) = d.azimuth.sin_cos();
            let (se, ce) = d.elevation.sin_cos();
            let look = Look { dir: d, sin_az: sa, cos_az: ca, sin_el: se, cos_el: ce };
            pseudo_value(en_h, array, selection, &look, &mut h).map(|(v, _)| v)
        }
    };
    let climb = |p: &Peak| {
        let mut eval = evaluator();
        let step = [pitch[0] / 2.0, pitch[1] / 2.0];
        let (mut dir, mut value) = (p.dir, p.value);
        // The grid maximum can sit a few cells off a narrow peak; follow
        // the ascent when it stops on the edge of its one-cell box.
        for _ in 0..MAX_RECENTER {
            let bounds = (
                ((dir.azimuth - pitch[0]).max(outer.0 .0), (dir.azimuth + pitch[0]).min(outer.0 .1)),
                ((dir.elevation - pitch[1]).max(outer.1 .0), (dir.elevation + pitch[1]).min(outer.1 .1)),
            );
            let (d, v) = simplex_ascent(&mut eval, dir, value, step, bounds);
            let on_edge = |x: f64, (lo, hi): (f64, f64), (olo, ohi): (f64, f64)| {
                let eps = 1e-6 * (hi - lo);
                (x - lo < eps && lo > olo) || (hi - x < eps && hi < ohi)
            };
            let moved = v > value;
            (dir, value) = if moved { (d, v) } else { (dir, value) };
            if !(moved && (on_edge(d.azimuth, bounds.0, outer.0) || on_edge(d.elevation, bounds.1, outer.1))) {
                break;
            }
        }
        Peak { dir, value, cell: p.cell }
    };
    let tol = 0.01 * pitch[0].min(pitch[1]);
    // No floor yet: a grid maximum far below the eventual top can sit
    // between two narrow peaks that only the finer patch reveals.
    let mut kept = rank_distinct(find_peaks(spectrum, &coarse).par_iter().map(climb).collect(), tol, None);

    let zoomed: Vec<Peak> = kept
        .par_iter()
        .flat_map_iter(|p| {
            let mut eval = evaluator();
            let n = 2 * ZOOM_CELLS * ZOOM_FACTOR + 1;
            let at = |i: usize, j: usize| {
                let off = |k: usize, w: f64| (k as f64 - (ZOOM_CELLS * ZOOM_FACTOR) as f64) * w / ZOOM_FACTOR as f64;
                Direction::new(
                    (p.dir.azimuth + off(j, pitch[0])).clamp(outer.0 .0, outer.0 .1),
                    (p.dir.elevation + off(i, pitch[1])).clamp(outer.1 .0, outer.1 .1),
                )
            };
            let vals: Vec<f64> =
                (0..n * n).map(|k| eval(at(k / n, k % n)).unwrap_or(f64::NEG_INFINITY)).collect();
            let mut starts = Vec::new();
            for i in 1..n - 1 {
                for j in 1..n - 1 {
                    let v = vals[i * n + j];
                    let is_max = (i - 1..=i + 1)
                        .flat_map(|a| (j - 1..=j + 1).map(move |b| (a, b)))
                        .filter(|&(a, b)| (a, b) != (i, j))
                        .all(|(a, b)| vals[a * n + b] < v);
                    if is_max {
                        starts.push(Peak { dir: at(i, j), value: v, cell: p.cell });
                    }
                }
            }
            starts.into_iter()
        })
        .collect();
    let extra: Vec<Peak> = zoomed.par_iter().map(climb).collect();
    kept.extend(extra);
    let mut kept = rank_distinct(kept, tol, opts.floor_db);
    kept.truncate(opts.max_peaks);
    kept
}

const ZOOM_CELLS: usize = 4;
const ZOOM_FACTOR: usize = 8;

/// Strongest first, dropping near-coincident maxima and those below the
/// floor. Distinct maxima may share a grid cell: true peaks are much
/// narrower than the grid.
fn rank_distinct(mut peaks: Vec<Peak>, tol: f64, floor_db: Option<f64>) -> Vec<Peak> {
    peaks.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.cell.cmp(&b.cell)));
    let mut kept: Vec<Peak> = Vec::with_capacity(peaks.len());
    for p in peaks {
        let dup = kept.iter().any(|k| {
            (k.dir.azimuth - p.dir.azimuth).abs() < tol && (k.dir.elevation - p.dir.elevation).abs() < tol
        });
        if !dup {
            kept.push(p);
        }
    }
    if let (Some(db), Some(top)) = (floor_db, kept.first().map(|p| p.value)) {
        let min = top * 10f64.powf(-db / 10.0);
        kept.retain(|p| p.value >= min);
    }
    kept
}

/// Nelder-Mead ascent inside a box. Only comparisons of `f` are used, so
/// the very narrow, tilted ridges of a high-SNR spectrum are followed where
/// an axis-aligned search would stall.
fn simplex_ascent(
    f: &mut impl FnMut(Direction) -> Option<f64>,
    start: Direction,
    start_value: f64,
    step: [f64; 2],
    ((az_lo, az_hi), (el_lo, el_hi)): ((f64, f64), (f64, f64)),
) -> (Direction, f64) {
    const MIN_SIZE: f64 = 1e-9;
    let clamp = |p: [f64; 2]| [p[0].clamp(az_lo, az_hi), p[1].clamp(el_lo, el_hi)];
    let mut value = |p: [f64; 2]| f(Direction::new(p[0], p[1])).unwrap_or(f64::NEG_INFINITY);
    let x0 = [start.azimuth, start.elevation];
    let mut s: [([f64; 2], f64); 3] = [(x0, start_value), ([0.0; 2], 0.0), ([0.0; 2], 0.0)];
    s[0].1 = value(x0).max(start_value);
    for (i, v) in s.iter_mut().enumerate().skip(1) {
        let mut p = x0;
        // Step towards the box interior when the start sits on an edge.
        let hi = if i == 1 { az_hi } else { el_hi };
        let sign = if p[i - 1] + step[i - 1] <= hi { 1.0 } else { -1.0 };
        p[i - 1] += sign * step[i - 1];
        let p = clamp(p);
        *v = (p, value(p));
    }
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| clamp([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    for _ in 0..400 {
        s.sort_by(|a, b| b.1.total_cmp(&a.1));
        let size = s[1..]
            .iter()
            .map(|(p, _)| ((p[0] - s[0].0[0]).abs()).max((p[1] - s[0].0[1]).abs()))
            .fold(0.0, f64::max);
        if size < MIN_SIZE {
            break;
        }
        let c = [(s[0].0[0] + s[1].0[0]) / 2.0, (s[0].0[1] + s[1].0[1]) / 2.0];
        let worst = s[2];
        let r = lerp(c, worst.0, -1.0);
        let fr = value(r);
        if fr > s[0].1 {
            let e = lerp(c, worst.0, -2.0);
            let fe = value(e);
            s[2] = if fe > fr { (e, fe) } else { (r, fr) };
        } else if fr > s[1].1 {
            s[2] = (r, fr);
        } else {
            let (k, fk) = if fr > worst.1 {
                let k = lerp(c, r, 0.5);
                (k, value(k))
            } else {
                let k = lerp(c, worst.0, 0.5);
                (k, value(k))
            };
            if fk > worst.1.max(fr) {
                s[2] = (k, fk);
            } else {
                let best = s[0].0;
                for v in s[1..].iter_mut() {
                    let p = lerp(best, v.0, 0.5);
                    *v = (p, value(p));
                }
            }
        }
    }
    s.sort_by(|a, b| b.1.total_cmp(&a.1));
    (Direction::new(s[0].0[0], s[0].0[1]), s[0].1)
}

pub fn write_spectrum_csv(path: &Path, spectrum: &MusicSpectrum) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["phi_deg", "theta_deg", "p_music", "valid"])?;
    let cols = spectrum.grid.azimuths.len();
    for (i, (&v, &ok)) in spectrum.values.iter().zip(&spectrum.valid).enumerate() {
        let d = spectrum.grid.direction(i / cols, i % cols);
        let (az, el) = d.to_degrees();
        w.write_record([fmt_f64(az), fmt_f64(el), fmt_f64(v), ok.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub phi_deg: f64,
    pub theta_deg: f64,
    pub value: f64,
}

pub fn estimate_records(peaks: &[Peak]) -> Vec<EstimateRecord> {
    peaks
        .iter()
        .map(|p| {
            let (az, el) = p.dir.to_degrees();
            EstimateRecord {
                phi_deg: az,
                theta_deg: el,
                value: p.value,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{design_layout, DesignSpec};
    use crate::numerics::ElementPattern;
    use crate::response::DcaaArray;
    use crate::signalchain::{
        select_supas, substream, synthesize_snapshots, MeasurementMode, Path as Ray, PathCoherence, PathSet,
        SnapshotParams, SymbolModel,
    };
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn frob(m: &DMatrix<Complex64>) -> f64 {
        m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = substream(seed, &[]);
        DMatrix::from_fn(rows, cols, |_, _| crate::signalchain::cscg(&mut rng, 1.0))
    }

    #[test]
    fn covariance_of_single_column_is_rank_one() {
        let y = DMatrix::from_column_slice(3, 1, &[cx(1.0, 0.0), cx(0.0, 1.0), cx(0.5, -0.5)]);
        let c = sample_covariance(&y).unwrap();
        let d = subspace_split(&c, 1).unwrap();
        assert!(d.eigenvalues[1].abs() < 1e-12 && d.eigenvalues[2].abs() < 1e-12);
        assert!((d.eigenvalues[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn covariance_trace_and_hermitian() {
        let y = random_matrix(6, 40, 1);
        let c = sample_covariance(&y).unwrap();
        assert!(frob(&(&c - c.adjoint())) < 1e-12);
        let d = subspace_split(&c, 2).unwrap();
        let sum: f64 = d.eigenvalues.iter().sum();
        assert!((sum - frob(&y).powi(2) / 40.0).abs() < 1e-9 * sum);
        assert!(d.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(d.eigenvalues.iter().all(|&e| e > -1e-12));
    }

    #[test]
    fn orthogonal_columns_give_scaled_identity_on_span() {
        let mut y = DMatrix::<Complex64>::zeros(4, 2);
        y[(0, 0)] = cx(2.0, 0.0);
        y[(1, 1)] = cx(0.0, 2.0);
        let c = sample_covariance(&y).unwrap();
        assert_eq!(c[(0, 0)], cx(2.0, 0.0));
        assert_eq!(c[(1, 1)], cx(2.0, 0.0));
        assert_eq!(c[(0, 1)], cx(0.0, 0.0));
    }

    fn check_contract(c: &DMatrix<Complex64>, order: usize) {
        let d = subspace_split(c, order).unwrap();
        let e = DMatrix::from_columns(
            &d.signal.column_iter().chain(d.noise.column_iter()).collect::<Vec<_>>(),
        );
        let n = c.nrows();
        assert!(frob(&(e.adjoint() * &e - DMatrix::identity(n, n))) < 1e-9);
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            d.eigenvalues.iter().map(|&x| cx(x, 0.0)),
        ));
        assert!(frob(&(&e * lam * e.adjoint() - c)) < 1e-9 * frob(c).max(1.0));
        assert!(frob(&(d.noise.adjoint() * &d.signal)) < 1e-9);
    }

    #[test]
    fn eigendecomposition_contract() {
        check_contract(&DMatrix::identity(5, 5), 2);
        let y = random_matrix(8, 30, 2);
        check_contract(&sample_covariance(&y).unwrap(), 3);
    }

    #[test]
    fn model_order_error() {
        let c = DMatrix::<Complex64>::identity(4, 4);
        assert!(matches!(subspace_split(&c, 4), Err(DcaaError::ModelOrder { .. })));
        assert!(matches!(subspace_split(&c, 0), Err(DcaaError::ModelOrder { .. })));
    }

    #[test]
    fn noiseless_two_sources_have_rank_two() {
        let h = random_matrix(8, 2, 3);
        let x = random_matrix(2, 20, 4);
        let c = sample_covariance(&(h * x)).unwrap();
        let d = subspace_split(&c, 2).unwrap();
        assert!(d.eigenvalues[1] > 1e-3);
        assert!(d.eigenvalues[2..].iter().all(|e| e.abs() < 1e-12 * d.eigenvalues[0]));
    }

    fn dcaa() -> DcaaArray {
        DcaaArray::new(
            design_layout(&DesignSpec::new(16, FRAC_PI_2, FRAC_PI_2, 39e9)).unwrap(),
            ElementPattern::dcaa_directive(),
        )
    }

    fn run(
        arr: &DcaaArray,
        dirs: &[Direction],
        sigma2: f64,
        grid: &ScanGrid,
        opts: &PeakOptions,
        seed: u64,
    ) -> MusicSpectrum {
        let mut rng = substream(seed, &[]);
        let paths = PathSet::new(dirs.iter().map(|&dir| Ray { dir, alpha: cx(1.0, 0.0) }).collect());
        let sel = select_supas(arr, &paths, 8, 1.0, sigma2, MeasurementMode::Noiseless, &mut rng).unwrap();
        let params = SnapshotParams {
            k: 128,
            pt: 1.0,
            sigma2,
            symbol_model: SymbolModel::Cscg,
            coherence: PathCoherence::Decorrelated,
        };
        let snap = synthesize_snapshots(arr, &paths, &sel, &params, &mut rng).unwrap();
        estimate_directions(arr, &sel, &snap.y, dirs.len(), grid, opts).unwrap()
    }

    #[test]
    fn noiseless_source_at_argmax_cell() {
        let arr = dcaa();
        let step = 0.1f64.to_radians();
        let mut rng = substream(12, &[]);
        for t in 0..4 {
            let centre = Direction::new(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2));
            let grid = ScanGrid::window(
                centre.azimuth - 0.3,
                centre.azimuth + 0.3,
                centre.elevation - 0.3,
                centre.elevation + 0.3,
                step,
            )
            .unwrap();
            let (row, col) = (rng.random_range(0..grid.elevations.len()), rng.random_range(0..grid.azimuths.len()));
            let truth = grid.direction(row, col);
            let spec = run(&arr, &[truth], 0.0, &grid, &PeakOptions::new(1), t);
            assert_eq!(spec.argmax(), Some((row, col)), "trial {t}");
            assert!(spec.values.iter().zip(&spec.valid).all(|(v, ok)| !ok || (v.is_finite() && *v > 0.0)));
        }
    }

    #[test]
    fn two_sources_resolved() {
        let arr = dcaa();
        let g = (2.0f64 / 16.0).asin();
        let a = Direction::new(0.2, 0.1);
        let b = Direction::new(0.2 + 2.0 * (2.0 / (16.0 * 0.1f64.cos())).asin(), 0.1 + 0.5 * g);
        let grid = ScanGrid::window(-0.3, 0.9, -0.5, 0.7, 0.25f64.to_radians()).unwrap();
        let opts = PeakOptions { floor_db: Some(20.0), ..PeakOptions::new(2) };
        let spec = run(&arr, &[a, b], 1e-3, &grid, &opts, 5);
        assert_eq!(spec.peaks.len(), 2);
        for t in [a, b] {
            let best = spec
                .peaks
                .iter()
                .map(|p| (p.dir.azimuth - t.azimuth).hypot(p.dir.elevation - t.elevation))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.5f64.to_radians(), "{best}");
        }
    }

    #[test]
    fn peaks_closer_than_two_cells_are_separated() {
        let arr = dcaa();
        let a = Direction::from_degrees(30.0, 25.0);
        let b = Direction::from_degrees(30.3, 25.25);
        let c = Direction::from_degrees(31.5, 24.0);
        let grid = ScanGrid::window(0.35, 0.75, 0.25, 0.65, 0.25f64.to_radians()).unwrap();
        let opts = PeakOptions { floor_db: Some(30.0), ..PeakOptions::new(3) };
        let spec = run(&arr, &[a, b, c], 1e-2, &grid, &opts, 9);
        assert_eq!(spec.peaks.len(), 3);
        for t in [a, b, c] {
            let best = spec
                .peaks
                .iter()
                .map(|p| (p.dir.azimuth - t.azimuth).hypot(p.dir.elevation - t.elevation))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.01f64.to_radians(), "{t:?} {best}");
        }
    }

    #[test]
    fn gain_floor_skips_unlit_maxima() {
        let grid = ScanGrid::window(0.0, 0.4, 0.0, 0.0, 0.1).unwrap();
        let spec = MusicSpectrum {
            values: vec![0.0, 5.0, 0.0, 9.0, 0.0],
            valid: vec![true; 5],
            gain: vec![1.0, 1.0, 1.0, 1e-6, 1.0],
            grid,
            peaks: Vec::new(),
        };
        let lit = find_peaks(&spec, &PeakOptions { refine: false, ..PeakOptions::new(2) });
        assert_eq!(lit.iter().map(|p| p.cell.1).collect::<Vec<_>>(), vec![1]);
        let all = find_peaks(&spec, &PeakOptions { refine: false, gain_floor_db: None, ..PeakOptions::new(2) });
        assert_eq!(all.iter().map(|p| p.cell.1).collect::<Vec<_>>(), vec![3, 1]);
    }

    #[test]
    fn constant_spectrum_has_no_peaks() {
        let grid = ScanGrid::window(0.0, 0.1, 0.0, 0.1, 0.01).unwrap();
        let spec = MusicSpectrum {
            values: vec![1.0; grid.len()],
            valid: vec![true; grid.len()],
            gain: Vec::new(),
            grid,
            peaks: Vec::new(),
        };
        assert!(find_peaks(&spec, &PeakOptions::new(5)).is_empty());
    }

    #[test]
    fn quadratic_refinement_finds_vertex() {
        let grid = ScanGrid::window(0.0, 1.0, 0.0, 1.0, 0.1).unwrap();
        let (x0, y0) = (0.43, 0.57);
        let values: Vec<f64> = grid
            .elevations
            .iter()
            .flat_map(|&el| grid.azimuths.iter().map(move |&az| 10f64.powf(-3.0 * ((az - x0).powi(2) + 2.0 * (el - y0).powi(2)))))
            .collect();
        let spec = MusicSpectrum { valid: vec![true; values.len()], gain: Vec::new(), values, grid, peaks: Vec::new() };
        let p = find_peaks(&spec, &PeakOptions::new(1));
        assert_eq!(p.len(), 1);
        assert!((p[0].dir.azimuth - x0).abs() < 1e-9 && (p[0].dir.elevation - y0).abs() < 1e-9);
    }

    #[test]
    fn scaling_snapshots_keeps_peaks() {
        let arr = dcaa();
        let truth = Direction::new(0.3, -0.2);
        let paths = PathSet::new(vec![Ray { dir: truth, alpha: cx(1.0, 0.0) }]);
        let mut rng = substream(6, &[]);
        let sel = select_supas(&arr, &paths, 8, 1.0, 0.0, MeasurementMode::Noiseless, &mut rng).unwrap();
        let params = SnapshotParams {
            k: 64,
            pt: 1.0,
            sigma2: 0.01,
            symbol_model: SymbolModel::Cscg,
            coherence: PathCoherence::Decorrelated,
        };
        let snap = synthesize_snapshots(&arr, &paths, &sel, &params, &mut rng).unwrap();
        let grid = ScanGrid::window(0.1, 0.5, -0.4, 0.0, 0.005).unwrap();
        let opts = PeakOptions::new(1);
        let a = estimate_directions(&arr, &sel, &snap.y, 1, &grid, &opts).unwrap();
        let scaled = &snap.y * cx(-3.0, 7.5);
        let b = estimate_directions(&arr, &sel, &scaled, 1, &grid, &opts).unwrap();
        assert_eq!(a.peaks[0].cell, b.peaks[0].cell);
    }

    #[test]
    fn shadowed_cells_are_invalid() {
        let arr = dcaa();
        // Select only ports that face +x; directions from -x shadow all of them.
        let sel = SelectionMap {
            indices: arr
                .layout
                .supas
                .iter()
                .filter(|s| s.p == 0 && s.q == 0)
                .map(|s| s.n - 1)
                .collect(),
        };
        let c = DMatrix::<Complex64>::identity(1, 1);
        let decomp = SubspaceDecomposition {
            signal: DMatrix::zeros(1, 0),
            noise: c,
            eigenvalues: vec![1.0],
        };
        struct Back<'a>(&'a DcaaArray);
        impl ArrayManifold for Back<'_> {
            fn port_count(&self) -> usize {
                self.0.port_count()
            }
            fn side(&self) -> usize {
                self.0.side()
            }
            fn port_response(&self, port: usize, look: &Look) -> Complex64 {
                // Mirror the look direction to the far side of the sphere.
                let d = Direction::new(look.dir.azimuth, look.dir.elevation);
                let mut l = Look::new(d);
                l.cos_az = -l.cos_az;
                l.cos_el = l.cos_el.abs();
                self.0.port_response(port, &l)
            }
        }
        let grid = ScanGrid::window(-0.2, 0.2, -0.2, 0.2, 0.1).unwrap();
        let spec = music_spectrum(&decomp, &Back(&arr), &sel, &grid);
        assert!(spec.valid.iter().all(|v| !v));
        assert!(find_peaks(&spec, &PeakOptions::new(3)).is_empty());
    }

    #[test]
    fn spectrum_csv_and_estimates() {
        let grid = ScanGrid::window(0.0, 0.02, 0.0, 0.01, 0.01).unwrap();
        let spec = MusicSpectrum {
            values: vec![1.0, 2.0, 1.5, 0.0, 0.0, 0.0],
            valid: vec![true, true, true, false, false, false],
            gain: Vec::new(),
            grid,
            peaks: Vec::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_spectrum_csv(&p, &spec).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().nth(4).unwrap().ends_with(",0,false"));
        let peaks = find_peaks(&spec, &PeakOptions { refine: false, ..PeakOptions::new(3) });
        assert_eq!(peaks.len(), 1);
        let rec = estimate_records(&peaks);
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"phi_deg\""));
    }
}
