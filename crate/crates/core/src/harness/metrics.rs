//! Detection and accuracy metrics: gated target matching, missed targets,
//! per-axis RMSE.

use serde::{Deserialize, Serialize};

use crate::analysis::dcaa_resolution;
use crate::error::{DcaaError, Result};
use crate::numerics::Direction;

/// Exhaustive matching is exponential in the target count.
pub const MAX_MATCH_TARGETS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub truth: usize,
    pub estimate: usize,
    /// `estimate - truth`, radians.
    pub err_phi: f64,
    pub err_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub truth: Vec<Direction>,
    pub estimates: Vec<Direction>,
    pub pairs: Vec<MatchedPair>,
    pub rate: Option<f64>,
}

impl TrialOutcome {
    pub fn detected(&self) -> usize {
        self.pairs.len()
    }

    pub fn missed(&self) -> usize {
        self.truth.len() - self.pairs.len()
    }

    /// Estimates left without a target (side lobes, split peaks).
    pub fn spurious(&self) -> usize {
        self.estimates.len() - self.pairs.len()
    }
}

/// `card(S) - card(S_hat)`, clamped at zero; the second value is the
/// clamped excess.
pub fn missed_targets(n_true: usize, n_est: usize) -> (usize, usize) {
    (n_true.saturating_sub(n_est), n_est.saturating_sub(n_true))
}

/// Per-axis acceptance half-widths `(phi, theta)`: twice the sphere's
/// local resolution. Where the azimuth resolution is undefined the azimuth
/// is unconstrained.
pub fn detection_gate(m: usize, truth: Direction) -> (f64, f64) {
    let r = dcaa_resolution(m, truth);
    let gh = if r.defined_h { 2.0 * r.gamma_h } else { std::f64::consts::PI };
    (gh, 2.0 * r.gamma_v)
}

/// Assigns estimates to targets: the most admissible pairs first, then the
/// least total squared angular error, by exhaustive search.
pub fn match_estimates(truth: &[Direction], estimates: &[Direction], gates: &[(f64, f64)]) -> Result<Vec<MatchedPair>> {
    if truth.len() > MAX_MATCH_TARGETS {
        return Err(DcaaError::Config(format!(
            "{} targets exceed the exhaustive matching limit {MAX_MATCH_TARGETS}",
            truth.len()
        )));
    }
    if gates.len() != truth.len() {
        return Err(DcaaError::Config("one gate per target is required".into()));
    }
    let cost = |t: usize, e: usize| -> Option<f64> {
        let dp = estimates[e].azimuth - truth[t].azimuth;
        let dt = estimates[e].elevation - truth[t].elevation;
        (dp.abs() <= gates[t].0 && dt.abs() <= gates[t].1).then_some(dp * dp + dt * dt)
    };
    let mut best: (usize, f64, Vec<Option<usize>>) = (0, 0.0, vec![None; truth.len()]);
    let mut current = vec![None; truth.len()];
    let mut used = vec![false; estimates.len()];
    search(0, 0, 0.0, &cost, &mut current, &mut used, &mut best);
    Ok(best
        .2
        .iter()
        .enumerate()
        .filter_map(|(t, e)| {
            e.map(|e| MatchedPair {
                truth: t,
                estimate: e,
                err_phi: estimates[e].azimuth - truth[t].azimuth,
                err_theta: estimates[e].elevation - truth[t].elevation,
            })
        })
        .collect())
}

type Best = (usize, f64, Vec<Option<usize>>);

fn search(
    t: usize,
    count: usize,
    total: f64,
    cost: &impl Fn(usize, usize) -> Option<f64>,
    current: &mut Vec<Option<usize>>,
    used: &mut Vec<bool>,
    best: &mut Best,
) {
    if t == current.len() {
        if count > best.0 || (count == best.0 && total < best.1) {
            *best = (count, total, current.clone());
        }
        return;
    }
    for e in 0..used.len() {
        if used[e] {
            continue;
        }
        if let Some(c) = cost(t, e) {
            used[e] = true;
            current[t] = Some(e);
            search(t + 1, count + 1, total + c, cost, current, used, best);
            current[t] = None;
            used[e] = false;
        }
    }
    search(t + 1, count, total, cost, current, used, best);
}

/// Gated matching of one trial's estimates.
pub fn score_trial(m: usize, truth: Vec<Direction>, estimates: Vec<Direction>, rate: Option<f64>) -> Result<TrialOutcome> {
    let gates: Vec<_> = truth.iter().map(|&d| detection_gate(m, d)).collect();
    let pairs = match_estimates(&truth, &estimates, &gates)?;
    Ok(TrialOutcome { truth, estimates, pairs, rate })
}

/// Mean missed targets over trials.
pub fn average_missed(outcomes: &[TrialOutcome]) -> f64 {
    if outcomes.is_empty() {
        return f64::NAN;
    }
    outcomes.iter().map(|o| o.missed() as f64).sum::<f64>() / outcomes.len() as f64
}

/// `(RMSE_phi, RMSE_theta)` in degrees over every matched pair.
pub fn match_and_rmse(outcomes: &[TrialOutcome]) -> Result<(f64, f64)> {
    let pairs: Vec<&MatchedPair> = outcomes.iter().flat_map(|o| &o.pairs).collect();
    if pairs.is_empty() {
        return Err(DcaaError::EmptyMatch);
    }
    let n = pairs.len() as f64;
    let rms = |f: fn(&MatchedPair) -> f64| (pairs.iter().map(|p| f(p).powi(2)).sum::<f64>() / n).sqrt().to_degrees();
    Ok((rms(|p| p.err_phi), rms(|p| p.err_theta)))
}

/// Median of a non-empty slice of counts (mean of the middle pair).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
