use rayon::prelude::*;
use serde_json::json;

use crate::analytic::{demur_sweep, dq_shift_curve, drive_coefficient};
use crate::config::{ExperimentConfig, InputKind};
use crate::dynamics::{
    ensemble_average, initial_state, propagate, synth_decay_histograms, AsymmetryTrace, Frame, PropagateOptions,
    PulseSequence, RelaxationModel, SynthParams,
};
use crate::error::{Error, Result};
use crate::fitkit::{asymmetry_from_histograms, fit_model, ramsey_extract, FitOptions, FitReport, RamseyShot};
use crate::io::{self, fmt_f64, Table};
use crate::spectra::{
    demur_numeric, fft_spectrum, find_peaks, narrowing_fwhm_map, rabi_damping_vs_drive, rabi_map, DampingOptions,
    DemurNumericSpec, RabiMapSpec,
};
use crate::spinsys::breit_rabi_sweep;

use super::output::RunContext;
use super::Task;

/// Width of the Ramsey before/after averaging windows, ns.
const RAMSEY_WINDOW_NS: f64 = 100.0;

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub fn run(task: Task, cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    match task {
        Task::Levels => levels(cfg, ctx),
        Task::Transitions => transitions(cfg, ctx),
        Task::Simulate => simulate(cfg, ctx),
        Task::Demur => demur(cfg, ctx),
        Task::RabiMap => rabi_map_cmd(cfg, ctx),
        Task::ShiftCurve => shift_curve(cfg, ctx),
        Task::Narrowing => narrowing(cfg, ctx),
        Task::Fit => fit(cfg, ctx),
        Task::Synth => synth(cfg, ctx),
    }
}

fn levels(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let sweep = breit_rabi_sweep(&cfg.system, &cfg.fields()?)?;
    let diagrams: Vec<_> = sweep.iter().map(|(d, _)| d).collect();
    let energies: Vec<_> = diagrams.iter().map(|d| json!({ "B0_mT": d.field_mt, "E_MHz": d.energies })).collect();
    ctx.table("levels", &io::levels_table(&diagrams), &energies, json!({ "points": diagrams.len() }))
}

fn transitions(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let sweep = breit_rabi_sweep(&cfg.system, &cfg.fields()?)?;
    let tables: Vec<_> = sweep.iter().map(|(_, t)| t).collect();
    ctx.table("transitions", &io::transitions_table(&tables), &tables, json!({ "points": tables.len() }))
}

fn propagate_options(cfg: &ExperimentConfig) -> Result<PropagateOptions> {
    let sim = &cfg.simulation;
    if !(sim.dt_ns > 0.0) {
        return Err(config_err("[simulation] dt_ns must be > 0"));
    }
    let base = match sim.frame {
        Frame::Rotating => PropagateOptions::rotating(sim.dt_ns),
        Frame::Lab => PropagateOptions::lab(sim.dt_ns, sim.record_every),
    };
    Ok(base.with_sampling(sim.sampling))
}

/// One trace, averaged over the electron line when `line_fwhm_MHz` > 0.
fn simulate_trace(
    cfg: &ExperimentConfig,
    seq: &PulseSequence,
    b0_mt: f64,
    relax: &RelaxationModel,
    opts: &PropagateOptions,
) -> Result<AsymmetryTrace> {
    let sim = &cfg.simulation;
    let rho0 = initial_state(seq.geometry);
    let run = |offset: f64| -> Result<AsymmetryTrace> {
        let o = opts.clone().with_offset(sim.electron_offset_mhz + offset);
        Ok(propagate(&rho0, &cfg.system, b0_mt, seq, relax, &o)?.trace)
    };
    if sim.line_fwhm_mhz > 0.0 {
        ensemble_average(sim.line_fwhm_mhz, sim.quadrature_points, run)
    } else {
        run(0.0)
    }
}

fn detuned(mut seq: PulseSequence, detuning: f64) -> PulseSequence {
    for s in &mut seq.segments {
        s.freq += detuning;
    }
    seq
}

fn simulate(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let sb = cfg.sequence_block()?;
    if sb.duration_list_ns.is_some() {
        return flip_angle(cfg, ctx);
    }
    if sb.tau_list_ns.is_some() {
        return ramsey_fringes(cfg, ctx);
    }
    let fields = cfg.fields()?;
    let detunings = cfg.drive.as_ref().and_then(|d| d.detuning_list_mhz.clone()).unwrap_or_else(|| vec![0.0]);
    let relax = cfg.relaxation_model()?;
    let opts = propagate_options(cfg)?;
    let base = sb.build(cfg.drive.as_ref(), &cfg.system, None, None, None)?;
    let jobs: Vec<(f64, f64)> = fields.iter().flat_map(|&b| detunings.iter().map(move |&d| (b, d))).collect();
    ctx.log(format!("simulating {} trace(s)", jobs.len()));
    let traces: Vec<AsymmetryTrace> = jobs
        .par_iter()
        .map(|&(b, d)| simulate_trace(cfg, &detuned(base.clone(), d), b, &relax, &opts))
        .collect::<Result<_>>()?;

    let single = jobs.len() == 1;
    let stem = |base: &str, k: usize| if single { base.to_string() } else { format!("{base}_{k:03}") };
    let a = &cfg.analysis;
    let mut peaks = Table::new(&["B0_mT", "detuning_MHz", "freq_MHz", "magnitude"]);
    let mut peak_data = Vec::new();
    for (k, (tr, &(b, d))) in traces.iter().zip(&jobs).enumerate() {
        let meta = json!({ "B0_mT": b, "detuning_MHz": d, "geometry": base.geometry });
        ctx.table(&stem("trace", k), &io::trace_table(tr), tr, meta.clone())?;
        if a.spectrum {
            let s = fft_spectrum(tr, a.window, a.pad_factor)?;
            for p in find_peaks(&s, a.band_mhz, a.peak_min_rel) {
                peaks.push_f64(&[b, d, p.freq, p.magnitude]);
                peak_data.push(json!({ "B0_mT": b, "detuning_MHz": d, "freq_MHz": p.freq, "magnitude": p.magnitude }));
            }
            ctx.table(&stem("spectrum", k), &io::spectrum_table(&s), &s, meta.clone())?;
        }
        if a.model.is_some() {
            let r = fit_trace(cfg, ctx, tr)?;
            ctx.json(&stem("fit_report", k), &r, meta)?;
        }
    }
    if a.spectrum {
        ctx.table("peaks", &peaks, &peak_data, json!({ "min_rel": a.peak_min_rel, "band_MHz": a.band_mhz }))?;
    }
    Ok(())
}

/// Final polarization after each pulse length of a Rabi sweep.
fn flip_angle(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let sb = cfg.sequence_block()?;
    let durations = sb.duration_list_ns.clone().unwrap_or_default();
    let fields = cfg.fields()?;
    let relax = cfg.relaxation_model()?;
    let opts = propagate_options(cfg)?;
    let jobs: Vec<(f64, f64)> = fields.iter().flat_map(|&b| durations.iter().map(move |&d| (b, d))).collect();
    ctx.log(format!("flip-angle sweep over {} point(s)", jobs.len()));
    let finals: Vec<f64> = jobs
        .par_iter()
        .map(|&(b, d)| {
            let seq = sb.build(cfg.drive.as_ref(), &cfg.system, Some(d), None, None)?;
            let tr = simulate_trace(cfg, &seq, b, &relax, &opts)?;
            Ok(*tr.values.last().unwrap_or(&f64::NAN))
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["B0_mT", "duration_ns", "polarization"]);
    let mut data = Vec::new();
    for (&(b, d), &p) in jobs.iter().zip(&finals) {
        t.push_f64(&[b, d, p]);
        data.push(json!({ "B0_mT": b, "duration_ns": d, "polarization": p }));
    }
    ctx.table("flip_angle", &t, &data, json!({ "t_end_ns": sb.t_end_ns, "ramp_ns": sb.ramp_ns }))
}

/// Phase-cycled Ramsey: the fringe is the before/after polarization change, half-differenced
/// between the cycle phases.
fn ramsey_fringes(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let sb = cfg.sequence_block()?;
    let taus = sb.tau_list_ns.clone().unwrap_or_default();
    let phases = sb.phase_cycle_rad.clone().unwrap_or_else(|| vec![0.0, std::f64::consts::PI]);
    if !(sb.t_start_ns > 0.0) {
        return Err(config_err("[sequence] Ramsey fringes need t_start_ns > 0 for the reference window"));
    }
    let before = ((sb.t_start_ns - RAMSEY_WINDOW_NS).max(0.0), sb.t_start_ns);
    let after = (sb.t_end_ns - RAMSEY_WINDOW_NS, sb.t_end_ns + 0.5 * cfg.simulation.dt_ns);
    let fields = cfg.fields()?;
    let relax = cfg.relaxation_model()?;
    let opts = propagate_options(cfg)?;

    let mut t = Table::new(&["B0_mT", "tau_ns", "delta_A", "quadrature"]);
    let mut data = Vec::new();
    for (k, &b) in fields.iter().enumerate() {
        let jobs: Vec<(f64, f64)> = taus.iter().flat_map(|&tau| phases.iter().map(move |&ph| (tau, ph))).collect();
        ctx.log(format!("Ramsey at {b} mT: {} shot(s)", jobs.len()));
        let shots: Vec<RamseyShot> = jobs
            .par_iter()
            .map(|&(tau, ph)| {
                let seq = sb.build(cfg.drive.as_ref(), &cfg.system, None, Some(tau), Some(ph))?;
                let trace = simulate_trace(cfg, &seq, b, &relax, &opts)?;
                Ok(RamseyShot { tau_ns: tau, phase_rad: ph, trace })
            })
            .collect::<Result<_>>()?;
        let fringes = ramsey_extract(&shots, before, after)?;
        for p in &fringes.points {
            t.push(vec![
                fmt_f64(b),
                fmt_f64(p.tau_ns),
                fmt_f64(p.value),
                p.quadrature.map(fmt_f64).unwrap_or_default(),
            ]);
        }
        data.push(json!({ "B0_mT": b, "fringes": fringes }));
        if cfg.analysis.model.is_some() {
            let tr = fringes.to_trace()?;
            let r = fit_trace(cfg, ctx, &tr)?;
            let stem = if fields.len() == 1 { "fringe_fit".to_string() } else { format!("fringe_fit_{k:03}") };
            ctx.json(&stem, &r, json!({ "B0_mT": b }))?;
        }
    }
    ctx.table("fringes", &t, &data, json!({ "window_before_ns": before, "window_after_ns": after }))
}

fn fit_trace(cfg: &ExperimentConfig, ctx: &RunContext, trace: &AsymmetryTrace) -> Result<FitReport> {
    let a = &cfg.analysis;
    let model = a.model.as_ref().ok_or_else(|| config_err("[analysis] needs a model to fit"))?;
    if a.params.is_empty() {
        return Err(config_err("[analysis] needs params to fit"));
    }
    let mut trace = match a.fit_window_ns {
        Some((t0, t1)) => trace.window(t0, t1),
        None => trace.clone(),
    };
    // Noiseless simulations and sigma-less files get unit weights; errors then carry no scale.
    if trace.sigma.is_none() {
        ctx.log("no per-point sigma; fitting with unit weights");
        let n = trace.len();
        trace = trace.with_sigma(vec![1.0; n])?;
    }
    let opts = FitOptions { multistart: a.multistart, seed: ctx.seed, ..FitOptions::default() };
    fit_model(&trace, model, &a.params, &opts)
}

fn demur(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let fields = cfg.fields()?;
    let d = cfg.drive()?;
    let (nu_uw, b1) = (d.nu_uw(&cfg.system)?, d.b1()?);
    let nu1 = drive_coefficient(&cfg.system, b1);
    let a = &cfg.analysis;
    let pts = demur_sweep(&cfg.system, &fields, nu_uw, nu1, a.exclusion_mt)?;
    let meta = json!({ "nu_uw_MHz": nu_uw, "B1_mT": b1, "nu1_MHz": nu1, "exclusion_mT": a.exclusion_mt });
    ctx.table("demur", &io::demur_table(&pts), &pts, meta.clone())?;
    if a.numeric {
        let relax = cfg.relaxation_model()?;
        let spec = DemurNumericSpec {
            t_end_ns: cfg.sequence.as_ref().map(|s| s.t_end_ns).unwrap_or(DemurNumericSpec::new(0.0, 0.0).t_end_ns),
            dt_ns: cfg.simulation.dt_ns,
            window: a.window,
            pad_factor: a.pad_factor,
            peak_min_rel: a.peak_min_rel,
            exclusion_mt: a.exclusion_mt,
            relaxation: cfg.relaxation.as_ref().map(|_| relax),
            fit_lines: a.numeric_fit,
            ..DemurNumericSpec::new(nu_uw, b1)
        };
        ctx.log(format!("numeric DEMUR over {} field(s)", fields.len()));
        let num = demur_numeric(&cfg.system, &fields, &spec)?;
        ctx.table("demur_numeric", &io::demur_numeric_table(&num), &num, json!({ "spec": spec }))?;
    }
    Ok(())
}

fn rabi_map_cmd(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let fields = cfg.fields()?;
    let d = cfg.drive()?;
    let a = &cfg.analysis;
    let spec = RabiMapSpec {
        geometry: d.geometry,
        t_end_ns: cfg.sequence.as_ref().map(|s| s.t_end_ns).unwrap_or(RabiMapSpec::new(0.0).t_end_ns),
        dt_ns: cfg.simulation.dt_ns,
        band_mhz: a.band_mhz,
        window: a.window,
        pad_factor: a.pad_factor,
        noise_floor: a.noise_floor,
        relaxation: match &cfg.relaxation {
            Some(r) => Some(r.model()?),
            None => None,
        },
        ..RabiMapSpec::new(d.nu_uw(&cfg.system)?)
    };
    let b1 = d.b1_values()?;
    ctx.log(format!("Rabi map {} x {}", fields.len(), b1.len()));
    let m = rabi_map(&cfg.system, &fields, &b1, &spec)?;
    ctx.table("rabi_map", &io::rabi_map_table(&m), &m, json!({ "spec": spec, "n_flagged": m.n_flagged }))
}

fn shift_curve(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let d = cfg.drive()?;
    let nu_uw = d.nu_uw(&cfg.system)?;
    let pts = dq_shift_curve(&cfg.system, nu_uw, &d.b1_values()?)?;
    ctx.table("shift_curve", &io::shift_table(&pts), &pts, json!({ "nu_uw_MHz": nu_uw }))
}

fn narrowing(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let a = &cfg.analysis;
    let (nu1, omega) = match (&a.nu1_list_mhz, &a.omega_list_mhz) {
        (Some(n), Some(o)) => (n.clone(), o.clone()),
        _ => return Err(config_err("[analysis] narrowing needs nu1_list_MHz and omega_list_MHz")),
    };
    let m = narrowing_fwhm_map(&nu1, &omega, a.nu1_fwhm_mhz, a.omega_fwhm_mhz)?;
    let meta = json!({ "nu1_fwhm_MHz": a.nu1_fwhm_mhz, "omega_fwhm_MHz": a.omega_fwhm_mhz });
    ctx.table("narrowing_map", &io::narrowing_table(&m), &m, meta)?;
    if let Some(fwhm) = a.damping_line_fwhm_mhz {
        let d = cfg.drive()?;
        let mut opts = DampingOptions::default();
        if let Some(s) = &cfg.sequence {
            opts.t_end_ns = s.t_end_ns;
        }
        if let Some(n) = a.damping_points {
            opts.n_points = n;
        }
        let nu_uw = d.nu_uw(&cfg.system)?;
        ctx.log("damping versus drive");
        let pts = rabi_damping_vs_drive(&cfg.system, nu_uw, &d.b1_values()?, fwhm, &opts)?;
        let meta = json!({ "nu_uw_MHz": nu_uw, "line_fwhm_MHz": fwhm, "options": opts });
        ctx.table("damping", &io::damping_table(&pts), &pts, meta)?;
    }
    Ok(())
}

fn fit(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let a = &cfg.analysis;
    let input = a.input.as_ref().ok_or_else(|| config_err("[analysis] fit needs input"))?;
    let path = ctx.resolve_input(input);
    ctx.log(format!("reading {}", path.display()));
    let trace = match a.input_kind {
        InputKind::Trace => io::read_trace_csv(&path)?,
        InputKind::Histograms => {
            let alpha = cfg.synth.as_ref().map(|s| s.alpha).unwrap_or(1.0);
            asymmetry_from_histograms(&io::read_histograms_csv(&path, alpha)?, a.min_counts)?
        }
    };
    let r = fit_trace(cfg, ctx, &trace)?;
    let meta = json!({ "input": input, "points": trace.len(), "reduced_chi2": r.reduced_chi2() });
    ctx.json("fit_report", &r, meta.clone())?;
    let mut t = Table::new(&["name", "value", "error", "fixed"]);
    let mut rows = Vec::new();
    for (k, n) in r.names.iter().enumerate() {
        let fixed = !r.free.contains(n);
        t.push(vec![
            n.clone(),
            fmt_f64(r.values[k]),
            r.errors[k].map(fmt_f64).unwrap_or_default(),
            fixed.to_string(),
        ]);
        rows.push(json!({ "name": n, "value": r.values[k], "error": r.errors[k], "fixed": fixed }));
    }
    ctx.table("fit_params", &t, &rows, meta)
}

fn synth(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let s = cfg.synth.as_ref().ok_or_else(|| config_err("synth needs a [synth] block"))?;
    let b0 = cfg.field.as_ref().map(|_| cfg.fields()).transpose()?.map(|f| f[0]).unwrap_or(0.0);
    let trace = match &s.truth {
        Some(truth) => {
            let model = cfg.analysis.model.as_ref().ok_or_else(|| config_err("[synth] truth needs [analysis] model"))?;
            let names = model.parameter_names();
            let values = names
                .iter()
                .map(|n| truth.get(n).copied().ok_or_else(|| config_err(format!("[synth.truth] missing {n}"))))
                .collect::<Result<Vec<f64>>>()?;
            let compiled = model.compile(&names)?;
            let t_end = cfg.sequence_block()?.t_end_ns;
            let bin = s.bin_ns.unwrap_or(cfg.simulation.dt_ns);
            if !(bin > 0.0) {
                return Err(config_err("[synth] bin_ns must be > 0"));
            }
            let n = (t_end / bin).floor() as usize + 1;
            let times: Vec<f64> = (0..n).map(|k| k as f64 * bin).collect();
            // The model is an asymmetry; synthesis takes a polarization.
            let p = times.iter().map(|&t| compiled.eval(&values, t) / s.a0_max).collect();
            AsymmetryTrace::new(times, p)?
        }
        None => {
            if s.bin_ns.is_some() {
                return Err(config_err("[synth] bin_ns applies to truth mode; simulated traces use the simulation grid"));
            }
            let seq = cfg.sequence_block()?.build(cfg.drive.as_ref(), &cfg.system, None, None, None)?;
            simulate_trace(cfg, &seq, b0, &cfg.relaxation_model()?, &propagate_options(cfg)?)?
        }
    };
    let params = SynthParams {
        n_muons: s.n_muons,
        alpha: s.alpha,
        a0_max: s.a0_max,
        f_dia: s.f_dia,
        phi_dia: s.phi_dia_rad,
        b0_mt: b0,
        geometry: cfg.geometry(),
        seed: ctx.seed,
    };
    let h = synth_decay_histograms(&trace, &params)?;
    ctx.table("histograms", &io::histograms_table(&h), &h, json!({ "params": params, "clipped": h.clipped }))?;
    if let Some(truth) = &s.truth {
        ctx.json("truth", truth, json!({ "A0_max": s.a0_max }))?;
    }
    Ok(())
}
