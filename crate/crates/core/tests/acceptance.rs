//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so every line is printed in order:
//! `cargo test -p muonium --test acceptance --release`. Criteria listed in `KNOWN_RED` have a
//! recorded blocking analysis; they still run at their stated tolerance and print FAIL. The
//! process exits non-zero when any other criterion fails, or when a known-red one starts
//! passing so the list gets updated.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use muonium::analytic::{demur_sweep, dq_shift_curve, drive_coefficient, DEFAULT_EXCLUSION_MT};
use muonium::dynamics::{
    initial_state, propagate, synth_decay_histograms, templates, AsymmetryTrace, Geometry, PropagateOptions,
    PulseSequence, RelaxationModel, Sampling, SynthParams,
};
use muonium::fitkit::{
    asymmetry_from_histograms, chi2_grid, demur_chi2, fit_model, ramsey_extract, Axis, DemurDatum, FitOptions,
    GridOptions, ModelSpec, ParamSpec, RamseyShot,
};
use muonium::operators as ops;
use muonium::spectra::{
    demur_numeric, fft_spectrum, find_peaks, narrowing_fwhm_map, rabi_damping_vs_drive, rabi_map, DampingOptions,
    DemurNumericPoint, DemurNumericSpec, RabiMapSpec, Window,
};
use muonium::spinsys::{build_static_hamiltonian, level_diagram, resonance_field, transition_table};
use muonium::SpinSystem;

/// Criteria that cannot pass as stated; see the decisions ledger for the analysis.
const KNOWN_RED: &[u8] = &[3, 7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn muonium() -> SpinSystem {
    SpinSystem::isotropic(2.0023, 4497.0)
}

/// (3,4) resonance of the isotropic system and the drive giving ν₁ = 6.95 MHz there.
const B_RES: f64 = 82.525;
const B1_695: f64 = 0.9462196485;
const NU1: f64 = 6.95;

fn rabi_scan() -> muonium::spectra::RabiMap {
    let sys = muonium();
    let nu34 = level_diagram(&sys, B_RES).unwrap().splitting(4, 3).abs();
    let fields: Vec<f64> = (0..13).map(|k| 81.925 + 0.1 * k as f64).collect();
    let mut spec = RabiMapSpec::new(nu34);
    spec.band_mhz = Some((0.5, 60.0));
    rabi_map(&sys, &fields, &[B1_695], &spec).unwrap()
}

fn c1_two_level_law() -> Outcome {
    let m = rabi_scan();
    let mut worst: f64 = 0.0;
    for (i, &b) in m.b0_mt.iter().enumerate() {
        let want = (NU1 * NU1 + (7.67 * (B_RES - b)).powi(2)).sqrt();
        worst = worst.max((m.nu_eff[i][0] - want).abs() / want);
    }
    outcome(worst <= 0.01 && m.n_flagged == 0, format!("13 fields, worst relative deviation {:.3}%", 100.0 * worst))
}

fn c2_rabi_amplitude() -> Outcome {
    let m = rabi_scan();
    // A_osc = p34·(1 − (Ω/ν_eff)²) = p34·(ν₁/ν_eff)², Ω and ν_eff from the simulated scan.
    let shape: Vec<f64> = m.nu_eff.iter().map(|r| (NU1 / r[0]).powi(2)).collect();
    let amp: Vec<f64> = m.amplitude.iter().map(|r| r[0]).collect();
    let p34 = amp.iter().zip(&shape).map(|(a, s)| a * s).sum::<f64>() / shape.iter().map(|s| s * s).sum::<f64>();
    let worst = amp.iter().zip(&shape).map(|(a, s)| (a - p34 * s).abs() / a).fold(0.0, f64::max);
    outcome(
        worst <= 0.02,
        format!("best-fit p34 {p34:.3}, worst amplitude deviation {:.2}%", 100.0 * worst),
    )
}

fn c3_zero_field() -> Outcome {
    let a = 4500.0;
    let sys = SpinSystem::isotropic(2.0023, a);
    let b1 = 0.95;
    let nu1 = transition_table(&sys, 0.0).unwrap().rabi_frequency(3, 4, b1).unwrap();
    let nu34 = level_diagram(&sys, 0.0).unwrap().splitting(4, 3).abs();
    let opts = PropagateOptions::lab(0.01, 100).with_sampling(Sampling::BinAverage);
    let mut ok = true;
    let mut parts = Vec::new();
    for delta in [3.0, 6.0, 10.0] {
        let seq = templates::demur_cw(b1, a + delta, 2000.0, Geometry::LF);
        let p = propagate(&initial_state(Geometry::LF), &sys, 0.0, &seq, &RelaxationModel::none(), &opts).unwrap();
        let s = fft_spectrum(&p.trace, Window::Hann, 8).unwrap();
        let mut peaks = find_peaks(&s, Some((0.5, 50.0)), 0.05);
        peaks.sort_by(|x, y| y.magnitude.total_cmp(&x.magnitude));
        if peaks.len() < 2 {
            ok = false;
            parts.push(format!("Ω={delta}: fewer than two components"));
            continue;
        }
        let (f1, f2) = (peaks[0].freq, peaks[1].freq);
        let omega = a + delta - nu34;
        let nu_eff = (nu1 * nu1 + omega * omega).sqrt();
        let tol = 2.0 * s.resolution();
        let (sum, diff) = (f1 + f2, (f1 - f2).abs());
        ok &= (sum - 2.0 * nu_eff).abs() <= tol && (diff - 2.0 * omega.abs()).abs() <= tol;
        parts.push(format!(
            "Ω={omega:.1}: sum {sum:.2} vs {:.2}, diff {diff:.2} vs {:.2}",
            2.0 * nu_eff,
            2.0 * omega.abs()
        ));
    }
    outcome(ok, parts.join("; "))
}

fn c4_ramsey() -> Outcome {
    let sys = muonium();
    let rho0 = initial_state(Geometry::LF);
    let nu34 = level_diagram(&sys, B_RES).unwrap().splitting(4, 3).abs();
    let nu1 = transition_table(&sys, B_RES).unwrap().rabi_frequency(3, 4, B1_695).unwrap();
    let t_half = 1000.0 / (4.0 * nu1);
    let opts = PropagateOptions::rotating(1.0).with_sampling(Sampling::BinAverage);
    let none = RelaxationModel::none();
    let run = |seq: &PulseSequence| propagate(&rho0, &sys, B_RES, seq, &none, &opts).unwrap().trace;
    let last = |t: &AsymmetryTrace| *t.values.last().unwrap();

    // τ = 0: two π/2 pulses against one π pulse, and both against the deepest CW dip.
    let t0 = 200.0;
    let double = last(&run(&templates::ramsey(t0, t_half, 0.0, 0.0, B1_695, nu34, 600.0, Geometry::LF)));
    let single = last(&run(&templates::rabi(t0, 2.0 * t_half, B1_695, nu34, 600.0, Geometry::LF)));
    let cw = run(&templates::demur_cw(B1_695, nu34, 2.0 * t_half + 5.0, Geometry::LF));
    let start = cw.values[0];
    let dip = cw.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let inversion = (start - single) / (start - dip);
    let step_ok = (double - single).abs() < 1e-6 && inversion > 0.98;

    // Detuned fringes.
    let omega = 5.0;
    let taus: Vec<f64> = (0..=40).map(|k| 10.0 * k as f64).collect();
    let t_end = 800.0;
    let jobs: Vec<(f64, f64)> = taus.iter().flat_map(|&t| [(t, 0.0), (t, std::f64::consts::PI)]).collect();
    let shots: Vec<RamseyShot> = jobs
        .par_iter()
        .map(|&(tau, ph)| {
            let seq = templates::ramsey(t0, t_half, tau, ph, B1_695, nu34 + omega, t_end, Geometry::LF);
            RamseyShot { tau_ns: tau, phase_rad: ph, trace: run(&seq) }
        })
        .collect();
    let fr = ramsey_extract(&shots, (t0 - 100.0, t0), (t_end - 100.0, t_end + 0.5)).unwrap();
    let tr = fr.to_trace().unwrap();
    let n = tr.len();
    let tr = tr.with_sigma(vec![1.0; n]).unwrap();
    let params = vec![
        ParamSpec::free("amp", 0.2, -2.0, 2.0),
        ParamSpec::free("freq", omega, 0.5, 30.0),
        ParamSpec::fixed("rate", 0.0),
        ParamSpec::free("phase", 0.0, -7.0, 7.0),
        ParamSpec::free("offset", 0.0, -1.0, 1.0),
    ];
    let r = fit_model(&tr, &ModelSpec::damped_cosine_with_offset(), &params, &FitOptions::default()).unwrap();
    let f = r.value("freq").unwrap();
    let rel = (f - omega).abs() / omega;
    outcome(
        step_ok && rel <= 0.005,
        format!(
            "τ=0 double π/2 {double:.6} vs π {single:.6} (inversion {:.1}%); fringe {f:.4} MHz vs {omega} ({:.3}%)",
            100.0 * inversion,
            100.0 * rel
        ),
    )
}

fn c5_oracle_equivalence() -> Outcome {
    let sys = SpinSystem::silicon_bc();
    let fields: Vec<f64> = (0..=60).map(|k| 138.0 + 0.05 * k as f64).collect();
    let spec = DemurNumericSpec { fit_lines: false, ..DemurNumericSpec::new(3900.0, 0.677) };
    let pts = demur_numeric(&sys, &fields, &spec).unwrap();
    let mut n = 0;
    let mut good = 0;
    for p in pts.iter().filter(|p| !p.analytic.flagged) {
        n += 1;
        let tol = p.resolution.max(0.1);
        if (p.nu12_fft - p.analytic.nu12_tr.abs()).abs() <= tol && (p.nu34_fft - p.analytic.nu34_tr.abs()).abs() <= tol {
            good += 1;
        }
    }
    let frac = good as f64 / n.max(1) as f64;
    outcome(n > 0 && frac >= 0.95, format!("{good}/{n} non-flagged fields agree ({:.1}%)", 100.0 * frac))
}

/// Noisy line positions on the unflagged fields of a 137.0–141.6 mT sweep; `noise_seed`
/// `None` gives the noiseless data set.
fn demur_data(noise_seed: Option<u64>, sigma: f64) -> Vec<DemurDatum> {
    let sys = SpinSystem { g_e: 1.9999, ..SpinSystem::silicon_bc() };
    let fields: Vec<f64> = (0..=46).map(|k| 137.0 + 0.1 * k as f64).collect();
    let truth = demur_sweep(&sys, &fields, 3900.0, drive_coefficient(&sys, 0.677), DEFAULT_EXCLUSION_MT).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed.unwrap_or(0));
    let noise = Normal::new(0.0, sigma).unwrap();
    let scale = if noise_seed.is_some() { 1.0 } else { 0.0 };
    truth
        .iter()
        .filter(|p| !p.flagged)
        .map(|p| DemurDatum {
            b0_mt: p.b0_mt,
            nu12: p.nu12_tr + scale * noise.sample(&mut rng),
            sigma12: sigma,
            nu34: p.nu34_tr + scale * noise.sample(&mut rng),
            sigma34: sigma,
        })
        .collect()
}

fn demur_grid(data: &[DemurDatum]) -> muonium::fitkit::Chi2Map {
    let base = SpinSystem::silicon_bc();
    chi2_grid(
        &Axis::new("g_e", 1.9989, 2.0009, 11),
        &Axis::new("B1_mT", 0.577, 0.777, 11),
        &GridOptions::default(),
        |g, b| demur_chi2(data, &base, 3900.0, g, b),
    )
    .unwrap()
}

fn c6_grid_recovery() -> Outcome {
    let (g_true, b1_true, sigma) = (1.9999, 0.677, 0.05);
    let monotone = |m: &muonium::fitkit::Chi2Map| m.level_minima.windows(2).all(|w| w[1] <= w[0]);
    let dchi2_truth = |d: &[DemurDatum], m: &muonium::fitkit::Chi2Map| {
        demur_chi2(d, &SpinSystem::silicon_bc(), 3900.0, g_true, b1_true) - m.best.2
    };

    // Noiseless data: the truth must sit inside the 68% region.
    let asimov = demur_data(None, sigma);
    let m = demur_grid(&asimov);
    let ((xl, xh), (yl, yh)) = m.region_68;
    let inside = (xl..=xh).contains(&g_true) && (yl..=yh).contains(&b1_true) && dchi2_truth(&asimov, &m) <= 2.30;
    let asimov_ok = inside && monotone(&m) && m.converged;

    // Noisy replicates: the 68% region must contain the truth about 68% of the time.
    let replicates = 200u64;
    let reps: Vec<(bool, bool)> = (0..replicates)
        .into_par_iter()
        .map(|seed| {
            let d = demur_data(Some(seed), sigma);
            let m = demur_grid(&d);
            (dchi2_truth(&d, &m) <= 2.30, monotone(&m) && m.converged)
        })
        .collect();
    let coverage = reps.iter().filter(|r| r.0).count() as f64 / replicates as f64;
    let all_monotone = reps.iter().all(|r| r.1);
    outcome(
        asimov_ok && all_monotone && (0.58..=0.78).contains(&coverage),
        format!(
            "{} points; noiseless best g {:.7} B1 {:.5}, 68% box g [{xl:.7}, {xh:.7}] B1 [{yl:.5}, {yh:.5}]; \
             joint 68% coverage {coverage:.3} over {replicates} noisy sets; minima non-increasing everywhere: {}",
            asimov.len(),
            m.best.0,
            m.best.1,
            all_monotone && monotone(&m)
        ),
    )
}

fn c7_dq_shift() -> Outcome {
    let sys = SpinSystem::silicon_bc();
    let b1 = [0.1, 0.2, 0.3, 0.4, 0.53, 2.735];
    let pts = dq_shift_curve(&sys, 3900.0, &b1).unwrap();
    let top = pts.last().unwrap();
    let top_ok = (top.shift - 9.11).abs() <= 0.15 && (top.nu_rabi - 6.79).abs() <= 0.1;
    let mut worst: f64 = 0.0;
    for p in pts.iter().filter(|p| p.nu_rabi < 2.0) {
        worst = worst.max((p.shift_analytic - p.shift).abs() / p.shift.abs());
    }
    outcome(
        top_ok && worst <= 0.05,
        format!(
            "B1 2.735 mT: shift {:.3} MHz at ν_Rabi {:.3} MHz (want 9.11±0.15 at 6.79±0.1); analytic vs numeric below 2 MHz worst {:.2}%",
            top.shift,
            top.nu_rabi,
            100.0 * worst
        ),
    )
}

fn c8_resonant_damping() -> Outcome {
    let sys = SpinSystem::silicon_bc();
    let nu_uw = 3900.0;
    let fields: Vec<f64> = (0..=92).map(|k| 137.0 + 0.05 * k as f64).collect();
    let mut spec = DemurNumericSpec::new(nu_uw, 0.677);
    spec.t_end_ns = 3000.0;
    spec.relaxation = Some(RelaxationModel::electron_muon(13.2, 0.95, 5.0));
    let pts = demur_numeric(&sys, &fields, &spec).unwrap();
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, j) in [(1, 3), (2, 4)] {
        let b_res = resonance_field(&sys, i, j, nu_uw, 137.0, 141.6).unwrap();
        let lambdas: [(&str, Field); 2] = [("λ12", |p| p.lambda12), ("λ34", |p| p.lambda34)];
        for (name, lam) in lambdas {
            let all: Vec<f64> = pts.iter().map(lam).collect();
            let med = median(&mut all.clone());
            let (b_pk, v_pk) = pts
                .iter()
                .filter(|p| (p.b0_mt - b_res).abs() <= 0.5)
                .map(|p| (p.b0_mt, lam(p)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            let hit = (b_pk - b_res).abs() <= 0.3 && v_pk >= 2.0 * med;
            ok &= hit;
            parts.push(format!("{name} peak {v_pk:.1} at {b_pk:.2} vs ({i},{j}) {b_res:.3}"));
        }
    }
    outcome(ok, parts.join("; "))
}

fn c9_narrowing() -> Outcome {
    let sys = SpinSystem::silicon_bc();
    let pts = rabi_damping_vs_drive(&sys, 3900.0, &[0.53, 1.3, 2.735], 4.2, &DampingOptions::default()).unwrap();
    let rates: Vec<f64> = pts.iter().map(|p| p.damping).collect();
    let decreasing = rates.windows(2).all(|w| w[1] < w[0]) && pts.iter().all(|p| !p.flagged);
    let m = narrowing_fwhm_map(&[1.0, 2000.0], &[0.0, 200.0], 0.4, 4.2).unwrap();
    let (offset_limit, drive_limit) = (m.fwhm[0][1], m.fwhm[1][0]);
    let limits = (offset_limit - 4.2).abs() <= 0.02 * 4.2 && (drive_limit - 0.4).abs() <= 0.02 * 0.4;
    outcome(
        decreasing && limits,
        format!(
            "damping {:.3}/{:.3}/{:.3} μs⁻¹ at ν_Rabi {:.2}/{:.2}/{:.2} MHz; FWHM limits {offset_limit:.3} and {drive_limit:.3} MHz",
            rates[0], rates[1], rates[2], pts[0].nu_rabi, pts[1].nu_rabi, pts[2].nu_rabi
        ),
    )
}

fn c10_coverage() -> Outcome {
    let model = ModelSpec::damped_cosine_with_offset();
    let names = model.parameter_names();
    let truth = [("amp", 0.18), ("freq", 4.0), ("rate", 0.6), ("phase", 0.4), ("offset", 0.02)];
    let values: Vec<f64> = names.iter().map(|n| truth.iter().find(|t| t.0 == n).unwrap().1).collect();
    let compiled = model.compile(&names).unwrap();
    let a0 = 0.25;
    let times: Vec<f64> = (0..2000).map(|k| 4.0 * k as f64).collect();
    let pol: Vec<f64> = times.iter().map(|&t| compiled.eval(&values, t) / a0).collect();
    let clean = AsymmetryTrace::new(times, pol).unwrap();
    let replicates = 300;
    let hits: Vec<Vec<bool>> = (0..replicates)
        .into_par_iter()
        .map(|k| {
            let mut sp = SynthParams::new(4e6, a0, Geometry::LF, 10_000 + k as u64);
            sp.alpha = 1.0;
            let h = synth_decay_histograms(&clean, &sp).unwrap();
            let tr = asymmetry_from_histograms(&h, 10).unwrap();
            let params: Vec<ParamSpec> = names
                .iter()
                .zip(&values)
                .map(|(n, &v)| match n.as_str() {
                    "rate" => ParamSpec::free(n, v, 0.0, 50.0),
                    "phase" => ParamSpec::free(n, v, -7.0, 7.0),
                    _ => ParamSpec::unbounded(n, v),
                })
                .collect();
            let r = fit_model(&tr, &model, &params, &FitOptions { multistart: Some(1), ..FitOptions::default() }).unwrap();
            names
                .iter()
                .zip(&values)
                .map(|(n, &v)| match r.error(n) {
                    Some(e) => (r.value(n).unwrap() - v).abs() <= e,
                    None => false,
                })
                .collect()
        })
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (j, n) in names.iter().enumerate() {
        let c = hits.iter().filter(|h| h[j]).count() as f64 / replicates as f64;
        ok &= (0.58..=0.78).contains(&c);
        parts.push(format!("{n} {c:.3}"));
    }
    outcome(ok, format!("{replicates} replicates, coverage {}", parts.join(", ")))
}

fn c11_properties() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let unif = rand_distr::Uniform::new(0.0, 1.0);
    let mut u = || unif.sample(&mut rng);

    // Hermiticity of static Hamiltonians at random fields and couplings.
    for _ in 0..50 {
        let sys = SpinSystem::axial(1.9 + 0.2 * u(), 200.0 * u() - 100.0, 100.0 * u());
        let h = build_static_hamiltonian(&sys, 500.0 * u()).unwrap();
        if ops::hermiticity_defect(&h) > 1e-12 * ops::norm(&h).max(1.0) {
            failures.push("Hamiltonian not Hermitian".to_string());
            break;
        }
    }

    // Trace preservation (with relaxation) and purity conservation (without).
    let si = SpinSystem::silicon_bc();
    for k in 0..8 {
        let b0 = 137.0 + 4.0 * u();
        let b1 = 0.2 + 1.5 * u();
        let geom = if k % 2 == 0 { Geometry::LF } else { Geometry::TF };
        let seq = templates::rabi(10.0, 50.0 + 150.0 * u(), b1, 3900.0, 300.0, geom);
        let rho0 = initial_state(geom);
        let o = PropagateOptions::rotating(1.0).with_sampling(Sampling::BinAverage);
        let relax = RelaxationModel::electron_muon(13.2 * u(), u(), 5.0 * u());
        let p = propagate(&rho0, &si, b0, &seq, &relax, &o).unwrap();
        if let Err(e) = ops::check_density(&p.final_state) {
            failures.push(format!("dissipative run: {e}"));
        }
        let q = propagate(&rho0, &si, b0, &seq, &RelaxationModel::none(), &o).unwrap();
        if (ops::purity(&q.final_state) - ops::purity(&rho0)).abs() > 1e-9 {
            failures.push("purity not conserved".to_string());
        }
    }

    // Lab frame against the rotating-wave frame for a weak resonant drive.
    let sys = muonium();
    let nu34 = level_diagram(&sys, B_RES).unwrap().splitting(4, 3).abs();
    let seq = templates::demur_cw(0.2, nu34, 400.0, Geometry::LF);
    let rho0 = initial_state(Geometry::LF);
    let rot = propagate(&rho0, &sys, B_RES, &seq, &RelaxationModel::none(),
        &PropagateOptions::rotating(1.0).with_sampling(Sampling::BinAverage)).unwrap();
    let lab = propagate(&rho0, &sys, B_RES, &seq, &RelaxationModel::none(),
        &PropagateOptions::lab(0.005, 200).with_sampling(Sampling::BinAverage)).unwrap();
    let n = rot.trace.len().min(lab.trace.len());
    let frame_dev = (1..n).map(|k| (rot.trace.values[k] - lab.trace.values[k]).abs()).fold(0.0, f64::max);
    if frame_dev > 0.01 {
        failures.push(format!("lab vs rotating deviation {frame_dev:.4}"));
    }

    // Closed-form muon frequencies against the diagonalization.
    let mut oracle_dev: f64 = 0.0;
    for _ in 0..50 {
        let b0 = 1.0 + 400.0 * u();
        let d = level_diagram(&si, b0).unwrap();
        let (w12, w34) = si.muon_frequencies_closed_form(b0);
        oracle_dev = oracle_dev.max((d.splitting(1, 2).abs() - w12.abs()).abs());
        oracle_dev = oracle_dev.max((d.splitting(3, 4).abs() - w34.abs()).abs());
    }
    if oracle_dev > 1e-6 {
        failures.push(format!("closed-form muon frequency deviation {oracle_dev:e} MHz"));
    }

    // Byte-exact reproducibility of seeded synthesis and of a CLI run under different
    // worker counts.
    let tr = AsymmetryTrace::new((0..500).map(|k| 10.0 * k as f64).collect(), vec![0.3; 500]).unwrap();
    let sp = SynthParams::new(1e6, 0.25, Geometry::LF, 99);
    let h1 = muonium::io::histograms_table(&synth_decay_histograms(&tr, &sp).unwrap()).to_csv();
    let h2 = muonium::io::histograms_table(&synth_decay_histograms(&tr, &sp).unwrap()).to_csv();
    if h1 != h2 {
        failures.push("seeded synthesis not byte-identical".to_string());
    }
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, workers: &str| {
        let out = dir.path().join(sub);
        let code = muonium::cli::main_with_args([
            "muonium", "reproduce", "fig11", "--out-dir", out.to_str().unwrap(), "--workers", workers,
        ]);
        assert_eq!(code, 0);
        std::fs::read(out.join("rabi_map.csv")).unwrap()
    };
    if run("a", "1") != run("b", "3") {
        failures.push("CLI artifacts differ between runs".to_string());
    }

    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("all properties hold (frame deviation {frame_dev:.1e}, oracle deviation {oracle_dev:.1e} MHz)")
        } else {
            failures.join("; ")
        },
    )
}

type Field = fn(&DemurNumericPoint) -> f64;

type Criterion = (u8, &'static str, f64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "two-level Rabi law", 60.0, c1_two_level_law),
        (2, "Rabi amplitude law", 60.0, c2_rabi_amplitude),
        (3, "zero-field Rabi components", 120.0, c3_zero_field),
        (4, "Ramsey composition and fringes", 60.0, c4_ramsey),
        (5, "analytic vs numeric muon lines", 300.0, c5_oracle_equivalence),
        (6, "chi2 grid parameter recovery", 300.0, c6_grid_recovery),
        (7, "double-quantum shift", 300.0, c7_dq_shift),
        (8, "resonant muon damping", 300.0, c8_resonant_damping),
        (9, "inhomogeneous narrowing", 300.0, c9_narrowing),
        (10, "1-sigma coverage", 600.0, c10_coverage),
        (11, "property suite", 300.0, c11_properties),
    ];
    let mut unexpected = Vec::new();
    for (id, name, budget, f) in criteria {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        let pass = o.pass && secs < budget;
        let tag = if pass { "PASS" } else { "FAIL" };
        let known = KNOWN_RED.contains(&id);
        println!(
            "{tag} criterion {id:>2} {name}: {} [{secs:.1} s of {budget:.0} s]{}",
            o.detail,
            if known && !pass { " (known red)" } else { "" }
        );
        if pass == known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected acceptance outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
