//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criterion 9 runs the 2x2-centre smoke grid by default; set
//! `DCAA_ACCEPTANCE_FULL=1` for the full 4x4 grid.

use std::f64::consts::FRAC_PI_2;
use std::time::{Duration, Instant};

use dcaa_core::analysis::{
    dcaa_pattern, dcaa_resolution, null_directions, numerical_resolution_oracle, upa_pattern, upa_resolution, Cut,
    NullCurveSpec, NullFamily, OracleOptions,
};
use dcaa_core::geometry::{design_layout, design_orientations, verify_separation, DesignSpec};
use dcaa_core::harness::config::{ElementChoice, RunConfig, SwarmConfig};
use dcaa_core::harness::sweep::{run_montecarlo, run_rate, run_sweep, MonteCarloReport, RateRow, SweepKind};
use dcaa_core::numerics::{Direction, ElementPattern, Orientation};
use dcaa_core::response::{build_kpc, envelope, kpc_steered_response, supa_array_factor, DcaaArray};
use dcaa_core::sensing::{estimate_directions, PeakOptions, ScanGrid};
use dcaa_core::signalchain::{
    select_supas, substream, synthesize_snapshots, MeasurementMode, Path, PathCoherence, PathSet, SnapshotParams,
    SymbolModel,
};
use dcaa_core::Architecture;
use num_complex::Complex64;
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn full_spec(m: usize) -> DesignSpec {
    DesignSpec::new(m, FRAC_PI_2, FRAC_PI_2, 39e9)
}

fn c1_layout_counts() -> Verdict {
    let spec = full_spec(16);
    let n_theta = spec.layer_count();
    let n = design_orientations(&spec).unwrap().len();
    verdict(n_theta == 12 && n == 397, format!("N_theta = {n_theta}, N = {n}"))
}

fn c2_codebook_counts() -> Verdict {
    let kpc = build_kpc(16, FRAC_PI_2, FRAC_PI_2);
    let ok = kpc.n_v == 17 && kpc.n_h == 17 && kpc.codewords.len() == 289;
    verdict(ok, format!("N_v = {}, N_h = {}, codewords = {}", kpc.n_v, kpc.n_h, kpc.codewords.len()))
}

fn c3_separation() -> Verdict {
    let mut pass = true;
    let mut detail = Vec::new();
    for m in [8usize, 16] {
        let layout = design_layout(&full_spec(m)).unwrap();
        let rep = verify_separation(&layout).unwrap();
        let bound = (2.0 / m as f64).asin();
        pass &= rep.min_angle >= bound - 1e-12;
        detail.push(format!("M={m}: min {:.9} rad vs asin(2/M) {:.9}", rep.min_angle, bound));
    }
    verdict(pass, detail.join("; "))
}

fn c4_resolution_consistency() -> Verdict {
    let m = 16;
    let opts = OracleOptions::for_side(m);
    let axis = linspace(2f64.to_radians(), 80f64.to_radians(), 10);
    let (mut worst_dcaa, mut worst_upa) = (0.0f64, 0.0f64);
    let (mut compared, mut undefined, mut bad) = (0, 0, 0);
    for &az in &axis {
        for &el in &axis {
            let d = Direction::new(az, el);
            let cf = dcaa_resolution(m, d);
            match numerical_resolution_oracle(dcaa_pattern(m, d), d, &opts) {
                Ok(or) => {
                    worst_dcaa = worst_dcaa.max((cf.gamma_v - or.gamma_v).abs());
                    if cf.defined_h {
                        worst_dcaa = worst_dcaa.max((cf.gamma_h - or.gamma_h).abs());
                    } else {
                        undefined += 1;
                    }
                    compared += 1;
                }
                Err(_) => bad += 1,
            }
            let up = upa_resolution(m, d).result;
            match numerical_resolution_oracle(upa_pattern(m, d), d, &opts) {
                Ok(or) => {
                    worst_upa = worst_upa.max((up.gamma_v - or.gamma_v).abs());
                    if up.defined_h {
                        worst_upa = worst_upa.max((up.gamma_h - or.gamma_h).abs());
                    } else {
                        undefined += 1;
                    }
                    compared += 1;
                }
                // The oracle may only fail where the closed form is undefined.
                Err(_) if !up.defined_h => undefined += 1,
                Err(_) => bad += 1,
            }
        }
    }
    let pass = worst_dcaa < 1e-6 && worst_upa < 1e-6 && bad == 0;
    verdict(
        pass,
        format!(
            "max |closed - oracle|: DCAA {worst_dcaa:.2e}, UPA {worst_upa:.2e} rad; {compared} comparisons, \
             {undefined} undefined azimuth widths skipped, {bad} unexplained oracle failures"
        ),
    )
}

fn c5_coverage() -> Verdict {
    let array = DcaaArray::new(design_layout(&full_spec(8)).unwrap(), ElementPattern::isotropic());
    let grid: Vec<Direction> = (-90..=90)
        .flat_map(|el| (-90..=90).map(move |az| Direction::from_degrees(az as f64, el as f64)))
        .collect();
    let env = envelope(&array, &grid);
    let worst = env.iter().min_by(|a, b| a.magnitude.total_cmp(&b.magnitude)).unwrap();
    let (az, el) = worst.dir.to_degrees();
    verdict(worst.magnitude > 15.0, format!("min envelope {:.3} at ({az:.0}, {el:.0}) deg over {} directions", worst.magnitude, grid.len()))
}

fn c6_null_exactness() -> Verdict {
    let m = 16usize;
    let mf = m as f64;
    let iso = ElementPattern::isotropic();
    let mut rng = substream(2024, &[6]);
    let mut worst = 0.0f64;
    let mut evaluated = 0;
    while evaluated < 200 {
        let family_pick = rng.random_range(0..4);
        let o = Orientation::new(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2));
        let (sp, sq) = (2.0 * rng.random_range(-8..=8) as f64 / mf, 2.0 * rng.random_range(-8..=8) as f64 / mf);
        let (family, limit) = match family_pick {
            0 => (NullFamily::SupaU1 { orientation: o }, m as i32 / 2),
            1 => (NullFamily::SupaU2 { orientation: o }, m as i32),
            2 => (NullFamily::KpcElevation { sin_theta: sq }, 2 * m as i32),
            _ => (NullFamily::KpcAzimuth { sin_phi: sp }, 2 * m as i32),
        };
        let order = loop {
            let k = rng.random_range(-limit..=limit);
            if k != 0 && k % m as i32 != 0 {
                break k;
            }
        };
        let spec = NullCurveSpec { side: m, order, family };
        let c = rng.random_range(-1.5..1.5);
        let cut = if rng.random::<bool>() { Cut::FixedElevation(c) } else { Cut::FixedAzimuth(c) };
        let sols = null_directions(&spec, cut).unwrap();
        if sols.is_empty() {
            continue;
        }
        let t = sols[rng.random_range(0..sols.len())];
        let d = match cut {
            Cut::FixedElevation(el) => Direction::new(t, el),
            Cut::FixedAzimuth(az) => Direction::new(az, t),
        };
        let f = match family {
            NullFamily::SupaU1 { .. } | NullFamily::SupaU2 { .. } => supa_array_factor(m, o, d),
            _ => kpc_steered_response(m, sp, sq, &iso, d),
        };
        worst = worst.max(f.norm() / (mf * mf));
        evaluated += 1;
    }
    verdict(worst < 1e-9, format!("{evaluated} null directions, max |f|/M^2 = {worst:.2e}"))
}

fn c7_music_exactness() -> Verdict {
    let cfg = RunConfig::default();
    let array = cfg.dcaa_array(ElementChoice::Directive).unwrap();
    let grid = ScanGrid::symmetric(FRAC_PI_2, FRAC_PI_2, 0.1f64.to_radians()).unwrap();
    let limit = 80.0f64.to_radians();
    let mut rng = substream(7, &[7]);
    let mut hits = 0;
    let mut misses = Vec::new();
    for t in 0..20u64 {
        let (row, col) = loop {
            let (r, c) = (rng.random_range(0..grid.elevations.len()), rng.random_range(0..grid.azimuths.len()));
            if grid.elevations[r].abs() <= limit && grid.azimuths[c].abs() <= limit {
                break (r, c);
            }
        };
        let truth = grid.direction(row, col);
        let paths = PathSet::new(vec![Path { dir: truth, alpha: Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)) }]);
        let sel = select_supas(&array, &paths, 8, 1.0, 0.0, MeasurementMode::Noiseless, &mut rng).unwrap();
        let params = SnapshotParams { k: 16, pt: 1.0, sigma2: 0.0, symbol_model: SymbolModel::Cscg, coherence: PathCoherence::Decorrelated };
        let snap = synthesize_snapshots(&array, &paths, &sel, &params, &mut rng).unwrap();
        let opts = PeakOptions { polish_candidates: 0, refine: false, ..PeakOptions::new(1) };
        let spec = estimate_directions(&array, &sel, &snap.y, 1, &grid, &opts).unwrap();
        if spec.argmax() == Some((row, col)) {
            hits += 1;
        } else {
            misses.push(t);
        }
    }
    verdict(hits == 20, format!("{hits}/20 sources at the argmax cell of a 0.1 deg full-coverage grid; misses {misses:?}"))
}

fn swarm_cfg(centers: &[f64], trials: usize) -> RunConfig {
    RunConfig {
        trials,
        swarm: SwarmConfig { centers_phi_deg: centers.to_vec(), centers_theta_deg: centers.to_vec(), ..SwarmConfig::default() },
        ..RunConfig::default()
    }
}

fn c8_swarm_detection() -> Verdict {
    let cfg = RunConfig {
        swarm: SwarmConfig { centers_phi_deg: vec![40.0], centers_theta_deg: vec![40.0], ..SwarmConfig::default() },
        trials: 50,
        ..RunConfig::default()
    };
    let r = run_montecarlo(&cfg).unwrap();
    let d = r.cell(0, Architecture::Dcaa).unwrap();
    let u = r.cell(0, Architecture::UpaKpc).unwrap();
    let missed = |arch| -> Vec<usize> {
        let mut h = vec![0; 4];
        for t in r.trials.iter().filter(|t| t.arch == arch) {
            if let Ok(o) = &t.outcome {
                h[o.missed().min(3)] += 1;
            }
        }
        h
    };
    verdict(
        d.median_missed == 0.0 && u.median_missed >= 1.0,
        format!(
            "median missed DCAA {} (eps {:.2}, histogram {:?}), UPA-KPC {} (eps {:.2}, histogram {:?}); need 0 and >= 1",
            d.median_missed,
            d.epsilon,
            missed(Architecture::Dcaa),
            u.median_missed,
            u.epsilon,
            missed(Architecture::UpaKpc),
        ),
    )
}

fn judge_grid(r: &MonteCarloReport) -> Verdict {
    let n = r.centers.len();
    let (mut eps_ok, mut rp_ok, mut rt_ok) = (0, 0, 0);
    let mut theta_le_phi = Vec::new();
    let mut table = Vec::new();
    for ci in 0..n {
        let d = r.cell(ci, Architecture::Dcaa).unwrap();
        let u = r.cell(ci, Architecture::UpaKpc).unwrap();
        eps_ok += usize::from(d.epsilon <= u.epsilon);
        rp_ok += usize::from(d.rmse_phi_deg <= u.rmse_phi_deg);
        rt_ok += usize::from(d.rmse_theta_deg <= u.rmse_theta_deg);
        theta_le_phi.push(d.rmse_theta_deg <= d.rmse_phi_deg);
        let (az, el) = r.centers[ci].to_degrees();
        table.push(format!(
            "({az:.0},{el:.0}): eps {:.2}/{:.2} rmse_phi {:.3}/{:.3} rmse_theta {:.3}/{:.3}",
            d.epsilon, u.epsilon, d.rmse_phi_deg, u.rmse_phi_deg, d.rmse_theta_deg, u.rmse_theta_deg
        ));
    }
    let need = (0.8 * n as f64).ceil() as usize;
    let all_theta = theta_le_phi.iter().all(|&b| b);
    let pass = eps_ok >= need && rp_ok >= need && rt_ok >= need && all_theta;
    verdict(
        pass,
        format!(
            "DCAA no worse at eps {eps_ok}/{n}, rmse_phi {rp_ok}/{n}, rmse_theta {rt_ok}/{n} (need {need}); \
             DCAA rmse_theta <= rmse_phi at {}/{n}. [DCAA/UPA] {}",
            theta_le_phi.iter().filter(|&&b| b).count(),
            table.join("; ")
        ),
    )
}

fn c9_swarm_grid() -> Verdict {
    let full = std::env::var("DCAA_ACCEPTANCE_FULL").is_ok_and(|v| v == "1");
    let centers: &[f64] = if full { &[0.0, 20.0, 40.0, 60.0] } else { &[20.0, 40.0] };
    let r = run_montecarlo(&swarm_cfg(centers, 50)).unwrap();
    let mut v = judge_grid(&r);
    v.detail = format!("{} grid: {}", if full { "full 4x4" } else { "smoke 2x2" }, v.detail);
    v
}

/// Paired mean difference `a - b` and its standard error.
fn paired_difference(a: &RateRow, b: &RateRow) -> (f64, f64) {
    let diffs: Vec<f64> = a.samples.iter().zip(&b.samples).filter_map(|(x, y)| Some((*x)? - (*y)?)).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn c10_rate() -> Verdict {
    let rows = run_rate(&RunConfig::default()).unwrap();
    let find = |e, a, s| rows.iter().find(|r| r.elements == e && r.arch == a && r.snr_db == s).unwrap();
    let snrs: Vec<f64> = (0..=8).map(|i| -10.0 + 5.0 * i as f64).collect();
    let (mut directive_ok, mut iso_ok) = (true, true);
    let mut notes = Vec::new();
    for &s in &snrs {
        let dd = find(ElementChoice::Directive, Architecture::Dcaa, s);
        let du = find(ElementChoice::Directive, Architecture::UpaKpc, s);
        directive_ok &= dd.mean_rate > du.mean_rate;
        let id = find(ElementChoice::Isotropic, Architecture::Dcaa, s);
        let iu = find(ElementChoice::Isotropic, Architecture::UpaKpc, s);
        // Tie: the paired DCAA - UPA gap within two standard errors.
        let (gap, se) = paired_difference(id, iu);
        let ok = gap <= 2.0 * se;
        iso_ok &= ok;
        notes.push(format!(
            "{s:+.0} dB: directive {:.2} vs {:.2}, isotropic gap {gap:+.4} (se {se:.4}){}",
            dd.mean_rate,
            du.mean_rate,
            if ok { "" } else { " !" }
        ));
    }
    verdict(
        directive_ok && iso_ok,
        format!(
            "directive DCAA > UPA at all SNRs: {directive_ok}; isotropic UPA >= DCAA or tied: {iso_ok}. {}",
            notes.join("; ")
        ),
    )
}

fn c11_determinism() -> Verdict {
    let base = RunConfig {
        trials: 3,
        swarm: SwarmConfig { centers_phi_deg: vec![40.0, -20.0], centers_theta_deg: vec![40.0], ..SwarmConfig::default() },
        rate: dcaa_core::harness::config::RateConfig { trials: 40, ..Default::default() },
        ..RunConfig::default()
    };
    let root = tempfile::tempdir().unwrap();
    let mut files_compared = 0;
    let mut mismatches = Vec::new();
    for kind in [SweepKind::Montecarlo, SweepKind::Rate, SweepKind::Music, SweepKind::RadiusSweep] {
        let mut outputs = Vec::new();
        for threads in [1usize, 8] {
            let dir = root.path().join(format!("{}-{threads}", kind.name()));
            let cfg = RunConfig { threads: Some(threads), out_dir: dir.clone(), ..base.clone() };
            let m = run_sweep(&cfg, kind, None).unwrap();
            let csvs: Vec<(String, Vec<u8>)> = m
                .outputs
                .iter()
                .filter(|f| f.ends_with(".csv"))
                .map(|f| (f.clone(), std::fs::read(dir.join(f)).unwrap()))
                .collect();
            outputs.push(csvs);
        }
        for ((name, a), (_, b)) in outputs[0].iter().zip(&outputs[1]) {
            files_compared += 1;
            if a != b {
                mismatches.push(name.clone());
            }
        }
    }
    verdict(
        mismatches.is_empty() && files_compared > 0,
        format!("{files_compared} CSV files compared between 1 and 8 workers; differing: {mismatches:?}"),
    )
}

type Criterion = fn() -> Verdict;

fn main() {
    let criteria: [(&str, Criterion); 11] = [
        ("layout counts", c1_layout_counts),
        ("codebook counts", c2_codebook_counts),
        ("separation theorem", c3_separation),
        ("resolution consistency", c4_resolution_consistency),
        ("coverage", c5_coverage),
        ("null exactness", c6_null_exactness),
        ("MUSIC exactness", c7_music_exactness),
        ("swarm detection at (40,40)", c8_swarm_detection),
        ("swarm grid trends", c9_swarm_grid),
        ("spectral efficiency trends", c10_rate),
        ("determinism", c11_determinism),
    ];
    // Comma-separated criterion numbers, e.g. DCAA_ACCEPTANCE_ONLY=8,9.
    let only: Option<Vec<usize>> = std::env::var("DCAA_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let t0 = Instant::now();
        let v = run();
        let dt: Duration = t0.elapsed();
        println!(
            "criterion {n:>2} {:<4} {name} [{:.1} s]: {}",
            if v.pass { "PASS" } else { "FAIL" },
            dt.as_secs_f64(),
            v.detail
        );
        if !v.pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        match &only {
            Some(o) => println!("acceptance: selected criteria {o:?} passed"),
            None => println!("acceptance: all criteria passed"),
        }
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
