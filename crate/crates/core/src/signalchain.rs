//! Received-signal synthesis: multipath channel, port selection by swept
//! energy, snapshot collection and the uplink rate.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DcaaError, Result};
use crate::numerics::Direction;
use crate::response::{ArrayManifold, Look};

/// Independent ChaCha8 stream for `(master, key...)`.
///
/// Streams never overlap, so trials can be drawn in any order or thread.
pub fn substream(master: u64, key: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &k in key {
        h = splitmix(h ^ k);
    }
    rng.set_stream(h);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `CN(0, var)` sample.
pub fn cscg<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub dir: Direction,
    pub alpha: Complex64,
}

/// Propagation paths; when a line-of-sight path exists it is entry 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn new(paths: Vec<Path>) -> Self {
        Self { paths }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn directions(&self) -> Vec<Direction> {
        self.paths.iter().map(|p| p.dir).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.paths.iter().enumerate() {
            if !p.alpha.re.is_finite() || !p.alpha.im.is_finite() || p.alpha.norm() == 0.0 {
                return Err(DcaaError::Domain(format!("path {i} has coefficient {}", p.alpha)));
            }
            if !p.dir.is_in_domain() {
                return Err(DcaaError::Domain(format!("path {i} direction outside [-pi/2, pi/2]^2")));
            }
        }
        Ok(())
    }
}

/// Law of the path coefficients `alpha_l`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum CoefficientLaw {
    /// `|alpha| = 1`, uniform phase.
    #[default]
    UnitMagnitude,
    /// `CN(0, 1)`.
    Rayleigh,
    /// Unit-power Rician with the given K-factor (linear).
    Rician { k_factor: f64 },
}

impl CoefficientLaw {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        match *self {
            Self::UnitMagnitude => Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)),
            Self::Rayleigh => cscg(rng, 1.0),
            Self::Rician { k_factor } => {
                let los = (k_factor / (k_factor + 1.0)).sqrt();
                let phase = rng.random_range(0.0..2.0 * PI);
                Complex64::from_polar(los, phase) + cscg(rng, 1.0 / (k_factor + 1.0))
            }
        }
    }
}

/// `h = sum_l alpha_l r(dir_l)` over all ports.
pub fn channel<A: ArrayManifold + ?Sized>(array: &A, paths: &PathSet) -> Vec<Complex64> {
    let mut h = vec![Complex64::new(0.0, 0.0); array.port_count()];
    for p in &paths.paths {
        let look = Look::new(p.dir);
        for (n, hn) in h.iter_mut().enumerate() {
            *hn += p.alpha * array.port_response(n, &look);
        }
    }
    h
}

/// Selected ports in ascending index order (the rows of `S`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMap {
    pub indices: Vec<usize>,
}

impl SelectionMap {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.indices.iter().map(|&i| v[i]).collect()
    }
}

/// The `n_rf` largest energies; ties go to the lower index.
pub fn top_ports(energies: &[f64], n_rf: usize) -> Result<SelectionMap> {
    if n_rf == 0 || n_rf > energies.len() {
        return Err(DcaaError::Config(format!(
            "N_RF = {n_rf} must be in 1..={}",
            energies.len()
        )));
    }
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[b].total_cmp(&energies[a]).then(a.cmp(&b)));
    let mut indices = order[..n_rf].to_vec();
    indices.sort_unstable();
    Ok(SelectionMap { indices })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementMode {
    /// Energies are `|h_n|^2` exactly.
    Noiseless,
    /// Each port is measured once as `|sqrt(Pt) h_n + z_n|^2`.
    #[default]
    Noisy,
}

/// Energies seen by `ceil(N / N_RF)` sweeps of `n_rf` ports each.
pub fn sweep_energies<R: Rng + ?Sized>(
    h: &[Complex64],
    n_rf: usize,
    side: usize,
    pt: f64,
    sigma2: f64,
    mode: MeasurementMode,
    rng: &mut R,
) -> Vec<f64> {
    let var = (side * side) as f64 * sigma2;
    let amp = pt.sqrt();
    let mut out = vec![0.0; h.len()];
    for sweep in h.chunks(n_rf.max(1)).zip(out.chunks_mut(n_rf.max(1))) {
        for (hn, e) in sweep.0.iter().zip(sweep.1.iter_mut()) {
            *e = match mode {
                MeasurementMode::Noiseless => hn.norm_sqr(),
                MeasurementMode::Noisy => (amp * hn + cscg(rng, var)).norm_sqr(),
            };
        }
    }
    out
}

/// Energy-maximising selection of `n_rf` ports for the given paths.
pub fn select_supas<A: ArrayManifold + ?Sized, R: Rng + ?Sized>(
    array: &A,
    paths: &PathSet,
    n_rf: usize,
    pt: f64,
    sigma2: f64,
    mode: MeasurementMode,
    rng: &mut R,
) -> Result<SelectionMap> {
    let h = channel(array, paths);
    top_ports(&sweep_energies(&h, n_rf, array.side(), pt, sigma2, mode, rng), n_rf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymbolModel {
    /// Unit-power circularly-symmetric Gaussian.
    #[default]
    Cscg,
    Qpsk,
    /// `x_s[k] = 1` for every slot.
    Unit,
}

impl SymbolModel {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        match self {
            Self::Cscg => cscg(rng, 1.0),
            Self::Qpsk => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let re = if rng.random::<bool>() { s } else { -s };
                let im = if rng.random::<bool>() { s } else { -s };
                Complex64::new(re, im)
            }
            Self::Unit => Complex64::new(1.0, 0.0),
        }
    }
}

/// How path contributions combine from slot to slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathCoherence {
    /// Each non-reference path gets a fresh uniform phase every slot, so
    /// the source covariance has full rank.
    #[default]
    Decorrelated,
    /// All paths carry the same symbol; the signal covariance is rank one.
    Coherent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotParams {
    pub k: usize,
    pub pt: f64,
    pub sigma2: f64,
    pub symbol_model: SymbolModel,
    pub coherence: PathCoherence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    /// `N_RF x K`; column `k` is the received vector of slot `k`.
    pub y: DMatrix<Complex64>,
    /// Unit-power symbols `x_s[k] / sqrt(Pt)`.
    pub symbols: Vec<Complex64>,
    pub sigma2: f64,
    pub pt: f64,
}

/// `y[k] = S (sum_l alpha_l r_l e^{j psi_l[k]}) x_s[k] + S z[k]` with
/// `z[k] ~ CN(0, M^2 sigma^2 I)`.
pub fn synthesize_snapshots<A: ArrayManifold + ?Sized, R: Rng + ?Sized>(
    array: &A,
    paths: &PathSet,
    selection: &SelectionMap,
    params: &SnapshotParams,
    rng: &mut R,
) -> Result<SnapshotMatrix> {
    if params.k == 0 {
        return Err(DcaaError::Config("K must be at least 1".into()));
    }
    if let Some(&bad) = selection.indices.iter().find(|&&i| i >= array.port_count()) {
        return Err(DcaaError::Config(format!("selected port {bad} does not exist")));
    }
    let n_rf = selection.len();
    let steering: Vec<Vec<Complex64>> = paths
        .paths
        .iter()
        .map(|p| {
            let look = Look::new(p.dir);
            let mut v = vec![Complex64::new(0.0, 0.0); n_rf];
            array.steering_into(&selection.indices, &look, &mut v);
            v.iter_mut().for_each(|x| *x *= p.alpha);
            v
        })
        .collect();
    let noise_var = (array.side() * array.side()) as f64 * params.sigma2;
    let amp = params.pt.sqrt();
    let mut y = DMatrix::<Complex64>::zeros(n_rf, params.k);
    let mut symbols = Vec::with_capacity(params.k);
    for k in 0..params.k {
        let x = params.symbol_model.draw(rng);
        symbols.push(x);
        let mut col = y.column_mut(k);
        for (l, s) in steering.iter().enumerate() {
            let w = match params.coherence {
                PathCoherence::Coherent => amp * x,
                PathCoherence::Decorrelated if l == 0 => amp * x,
                PathCoherence::Decorrelated => amp * x * Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)),
            };
            for (c, sv) in col.iter_mut().zip(s) {
                *c += w * sv;
            }
        }
        if noise_var > 0.0 {
            for c in col.iter_mut() {
                *c += cscg(rng, noise_var);
            }
        }
    }
    Ok(SnapshotMatrix {
        y,
        symbols,
        sigma2: params.sigma2,
        pt: params.pt,
    })
}

/// `log2(1 + |h_c|^2 Pt / (M^2 sigma^2))`.
pub fn uplink_rate(h_c: &[Complex64], side: usize, pt: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(DcaaError::Domain(format!("noise power must be positive, got {sigma2}")));
    }
    let energy: f64 = h_c.iter().map(|x| x.norm_sqr()).sum();
    Ok((energy * pt / ((side * side) as f64 * sigma2)).ln_1p() / std::f64::consts::LN_2)
}

/// Transmit power: a bare number is linear (same unit as `sigma2`);
/// `{"dbm": x}` is converted to watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PowerSpec {
    Linear(f64),
    Dbm { dbm: f64 },
}

impl PowerSpec {
    pub fn linear(&self) -> f64 {
        match *self {
            Self::Linear(x) => x,
            Self::Dbm { dbm } => 10f64.powf((dbm - 30.0) / 10.0),
        }
    }
}

/// One path of a scenario file. Omitted coefficients, or `"alpha": "random"`,
/// are drawn from the coefficient law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub phi_deg: f64,
    pub theta_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_re: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_im: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
}

fn default_k() -> usize {
    128
}

/// Scenario input document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub paths: Vec<PathSpec>,
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    #[serde(rename = "Pt", alias = "Pt_dbm_or_linear")]
    pub pt: PowerSpec,
    pub sigma2: f64,
    #[serde(rename = "N_RF")]
    pub n_rf: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub symbol_model: SymbolModel,
    #[serde(default)]
    pub coefficient_law: CoefficientLaw,
    #[serde(default)]
    pub coherence: PathCoherence,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(DcaaError::Config("K must be at least 1".into()));
        }
        if !(self.sigma2 >= 0.0) || !(self.pt.linear() > 0.0) {
            return Err(DcaaError::Config("Pt must be positive and sigma2 non-negative".into()));
        }
        for (i, p) in self.paths.iter().enumerate() {
            match (&p.alpha, p.alpha_re, p.alpha_im) {
                (Some(tag), None, None) if tag == "random" => {}
                (Some(tag), _, _) => {
                    return Err(DcaaError::Config(format!("path {i}: alpha must be \"random\", got {tag:?}")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Resolve random coefficients with the scenario's own seed.
    pub fn path_set(&self) -> Result<PathSet> {
        let mut rng = substream(self.seed, &[0x7061_7468]);
        let paths = self
            .paths
            .iter()
            .map(|p| {
                let alpha = match (p.alpha_re, p.alpha_im) {
                    (None, None) => self.coefficient_law.draw(&mut rng),
                    (re, im) => Complex64::new(re.unwrap_or(0.0), im.unwrap_or(0.0)),
                };
                Path {
                    dir: Direction::from_degrees(p.phi_deg, p.theta_deg),
                    alpha,
                }
            })
            .collect();
        let set = PathSet::new(paths);
        set.validate()?;
        Ok(set)
    }

    pub fn snapshot_params(&self) -> SnapshotParams {
        SnapshotParams {
            k: self.k,
            pt: self.pt.linear(),
            sigma2: self.sigma2,
            symbol_model: self.symbol_model,
            coherence: self.coherence,
        }
    }
}
