//! Piecewise-constant propagation in the rotating frame and Magnus-stepped propagation in
//! the lab frame.

use std::collections::HashMap;

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::constants::TWO_PI;
use crate::error::{invalid, Error, Result};
use crate::operators::{self as ops, real, unvec_rowmajor, vec_rowmajor, OperatorMatrix, C64, I, ZERO};
use crate::spinsys::{diagonalize, static_hamiltonian_unchecked, SpinSystem};

use super::relaxation::{damping_superoperator, hamiltonian_superoperator, Liouvillian, RelaxationModel};
use super::{AsymmetryTrace, Geometry, PulseSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Rotating,
    Lab,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Observable at the grid instants.
    Instant,
    /// Observable averaged over the bin centred on each grid instant. Suppresses aliasing of
    /// GHz hyperfine oscillations on ns grids.
    BinAverage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagateOptions {
    /// Output grid spacing (rotating frame) or integration step (lab frame), ns.
    pub dt_ns: f64,
    pub frame: Frame,
    pub sampling: Sampling,
    /// Sense of the rotating frame, ±1. `None` picks the sense that makes the drive-allowed
    /// transition nearest the drive frequency co-rotating.
    pub frame_sense: Option<i8>,
    /// Lab frame only: record every n integration steps.
    pub record_every: usize,
    /// Extra electron Zeeman offset δ·S_z, MHz.
    pub electron_offset_mhz: f64,
    /// Multiplies every segment's B₁.
    pub b1_scale: f64,
    /// Rotating-frame frequency when the sequence has no pulses.
    pub frame_freq_mhz: Option<f64>,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions {
            dt_ns: 1.0,
            frame: Frame::Rotating,
            sampling: Sampling::Instant,
            frame_sense: None,
            record_every: 1,
            electron_offset_mhz: 0.0,
            b1_scale: 1.0,
            frame_freq_mhz: None,
        }
    }
}

impl PropagateOptions {
    pub fn rotating(dt_ns: f64) -> Self {
        PropagateOptions { dt_ns, ..Default::default() }
    }

    pub fn lab(dt_ns: f64, record_every: usize) -> Self {
        PropagateOptions { dt_ns, frame: Frame::Lab, record_every, ..Default::default() }
    }

    pub fn with_sampling(mut self, s: Sampling) -> Self {
        self.sampling = s;
        self
    }

    pub fn with_offset(mut self, delta_mhz: f64) -> Self {
        self.electron_offset_mhz = delta_mhz;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Propagation {
    /// 2⟨I_z⟩ (LF) or 2⟨I_x⟩ (TF) in the lab frame.
    pub trace: AsymmetryTrace,
    /// 2⟨I_y⟩ for TF.
    pub trace_perp: Option<AsymmetryTrace>,
    /// Lab-frame density matrix at t_end.
    pub final_state: OperatorMatrix,
    pub frame_sense: i8,
    pub frame_freq_mhz: f64,
}

fn observables(geometry: Geometry) -> Vec<OperatorMatrix> {
    match geometry {
        Geometry::LF => vec![ops::iz() * real(2.0)],
        Geometry::TF => vec![ops::ix() * real(2.0), ops::iy() * real(2.0)],
    }
}

/// Sense that makes the drive-allowed transition nearest `nu` co-rotate with the frame.
pub fn auto_frame_sense(sys: &SpinSystem, h_static: &OperatorMatrix, nu: f64) -> Result<i8> {
    let d = diagonalize(h_static)?;
    let g = d.to_eigenbasis(&sys.frame_generator());
    let x = d.to_eigenbasis(&sys.drive_operator());
    let mut best: Option<(f64, i8)> = None;
    for i in 0..4 {
        for j in 0..4 {
            if i == j || x[(i, j)].norm() < 1e-6 {
                continue;
            }
            let de = d.energies[i] - d.energies[j];
            let dg = g[(i, i)].re - g[(j, j)].re;
            if de <= 0.0 || dg.abs() < 0.5 {
                continue;
            }
            let miss = (de - nu).abs();
            let sense = if dg > 0.0 { 1 } else { -1 };
            if best.map(|(m, _)| miss < m).unwrap_or(true) {
                best = Some((miss, sense));
            }
        }
    }
    Ok(best.map(|(_, s)| s).unwrap_or(1))
}

/// Propagates ρ₀ through `seq` and records the muon polarization along the geometry axis.
pub fn propagate(
    rho0: &OperatorMatrix,
    sys: &SpinSystem,
    b0_mt: f64,
    seq: &PulseSequence,
    relax: &RelaxationModel,
    opts: &PropagateOptions,
) -> Result<Propagation> {
    sys.validate()?;
    seq.validate()?;
    relax.validate()?;
    if !(opts.dt_ns.is_finite() && opts.dt_ns > 0.0) {
        return Err(invalid(format!("dt must be positive, got {}", opts.dt_ns)));
    }
    if !(b0_mt.is_finite() && b0_mt >= 0.0) {
        return Err(invalid(format!("B0 must be >= 0, got {b0_mt}")));
    }
    if !opts.electron_offset_mhz.is_finite() || !opts.b1_scale.is_finite() {
        return Err(invalid("offset and B1 scale must be finite"));
    }
    ops::check_density(rho0).map_err(|e| invalid(format!("initial state: {e}")))?;
    match opts.frame {
        Frame::Rotating => propagate_rotating(rho0, sys, b0_mt, seq, relax, opts),
        Frame::Lab => propagate_lab(rho0, sys, b0_mt, seq, relax, opts),
    }
}

fn static_with_offset(sys: &SpinSystem, b0: f64, delta: f64) -> OperatorMatrix {
    static_hamiltonian_unchecked(sys, b0) + ops::sz() * real(delta)
}

/// Time grid and cut points shared by the piecewise-constant driver.
struct Schedule {
    grid: Vec<f64>,
    cuts: Vec<f64>,
}

fn schedule(seq: &PulseSequence, dt: f64, sampling: Sampling) -> Schedule {
    let t_end = seq.t_end;
    let n = (t_end / dt + 1e-9).floor() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let mut cuts: Vec<f64> = grid.clone();
    if sampling == Sampling::BinAverage {
        for k in 0..n {
            let h = (k as f64 + 0.5) * dt;
            if h < t_end {
                cuts.push(h);
            }
        }
    }
    cuts.push(t_end);
    for s in &seq.segments {
        cuts.push(s.t_start);
        cuts.push(s.end());
        if seq.ramp > 0.0 && s.duration > 0.0 {
            let r = seq.ramp.min(0.5 * s.duration);
            let m = (r / 0.25).ceil().max(1.0) as usize;
            for k in 1..m {
                let x = r * k as f64 / m as f64;
                cuts.push(s.t_start + x);
                cuts.push(s.end() - x);
            }
        }
    }
    cuts.retain(|&t| (0.0..=t_end).contains(&t));
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    Schedule { grid, cuts }
}

fn quantize(h: f64) -> i64 {
    (h * 1e9).round() as i64
}

/// exp(Ah) and ∫₀ʰ exp(As)ds via the block exponential [[A, 1], [0, 0]].
fn exp_and_integral(l: &Liouvillian, h: f64) -> (Liouvillian, Liouvillian) {
    let mut big = SMatrix::<C64, 32, 32>::zeros();
    for r in 0..16 {
        for c in 0..16 {
            big[(r, c)] = l[(r, c)] * h;
        }
        big[(r, 16 + r)] = real(h);
    }
    let e = big.exp();
    let p = e.fixed_view::<16, 16>(0, 0).into_owned();
    let phi = e.fixed_view::<16, 16>(0, 16).into_owned();
    (p, phi)
}

// One per segment, never in a hot collection, so the variant size gap does not matter.
#[allow(clippy::large_enum_variant)]
enum Generator {
    Unitary { v: OperatorMatrix, e: [f64; 4], obs: Vec<OperatorMatrix> },
    Dissipative { l: Liouvillian },
}

#[allow(clippy::large_enum_variant)]
enum StepProp {
    Unitary { u: OperatorMatrix, m: Option<[[C64; 4]; 4]> },
    Dissipative { p: Liouvillian, phi: Option<Liouvillian> },
}

fn build_step(gen: &Generator, h: f64, want_integral: bool) -> StepProp {
    match gen {
        Generator::Unitary { v, e, .. } => {
            let mut d = OperatorMatrix::zeros();
            for k in 0..4 {
                let ph = -TWO_PI * e[k] * h * 1e-3;
                d[(k, k)] = C64::new(ph.cos(), ph.sin());
            }
            let u = v * d * v.adjoint();
            let m = want_integral.then(|| {
                let mut m = [[ZERO; 4]; 4];
                for a in 0..4 {
                    for b in 0..4 {
                        let w = TWO_PI * (e[a] - e[b]) * 1e-3;
                        let x = w * h;
                        m[a][b] = if x.abs() < 1e-6 {
                            C64::new(h, -0.5 * x * h)
                        } else {
                            (C64::new(0.0, -x).exp() - 1.0) / C64::new(0.0, -w)
                        };
                    }
                }
                m
            });
            StepProp::Unitary { u, m }
        }
        Generator::Dissipative { l } => {
            if want_integral {
                let (p, phi) = exp_and_integral(l, h);
                StepProp::Dissipative { p, phi: Some(phi) }
            } else {
                StepProp::Dissipative { p: (l * real(h)).exp(), phi: None }
            }
        }
    }
}

fn propagate_rotating(
    rho0: &OperatorMatrix,
    sys: &SpinSystem,
    b0: f64,
    seq: &PulseSequence,
    relax: &RelaxationModel,
    opts: &PropagateOptions,
) -> Result<Propagation> {
    let nu = match seq.common_frequency()? {
        Some(f) => f,
        None => opts.frame_freq_mhz.unwrap_or(0.0),
    };
    let h0 = static_with_offset(sys, b0, opts.electron_offset_mhz);
    let sense = match opts.frame_sense {
        Some(s) if s == 1 || s == -1 => s,
        Some(s) => return Err(invalid(format!("frame sense must be ±1, got {s}"))),
        None => auto_frame_sense(sys, &h0, nu)?,
    };
    let c = sense as f64;
    let gen_op = sys.frame_generator();
    let muon_rotates = sys.is_isotropic();
    let (dx, dy) = if muon_rotates {
        let r = sys.gamma_mu_mt() / sys.gamma_e();
        (ops::sx() - ops::ix() * real(r), ops::sy() - ops::iy() * real(r))
    } else {
        (ops::sx(), ops::sy())
    };
    let obs = observables(seq.geometry);
    let frame_rotates_obs = muon_rotates && seq.geometry == Geometry::TF;
    if frame_rotates_obs && opts.sampling == Sampling::BinAverage {
        return Err(invalid(
            "bin averaging of a transverse observable in a co-rotating muon frame is not supported",
        ));
    }
    let dissipative = !relax.is_zero();
    let damping = if dissipative {
        let basis = diagonalize(&h0)?.eigenvectors;
        Some(damping_superoperator(relax, &basis))
    } else {
        None
    };
    let h_frame = h0 - gen_op * real(c * nu);
    let nu1_per_mt = 0.5 * sys.gamma_e() * opts.b1_scale;

    let sched = schedule(seq, opts.dt_ns, opts.sampling);
    let want_integral = opts.sampling == Sampling::BinAverage;

    let mut gens: Vec<Generator> = Vec::new();
    let mut gen_index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut cache: HashMap<(usize, i64), StepProp> = HashMap::new();

    let mut rho = *rho0;
    let n_grid = sched.grid.len();
    let n_obs = obs.len();
    let mut values = vec![vec![0.0; n_grid]; n_obs];
    let mut acc = vec![vec![0.0; n_grid]; n_obs];
    let mut next_grid = 0usize;

    let record = |rho: &OperatorMatrix, t: f64, out: &mut Vec<Vec<f64>>, k: usize| {
        if frame_rotates_obs {
            let th = TWO_PI * c * nu * t * 1e-3;
            let (x, y) = (ops::expect(rho, &obs[0]), ops::expect(rho, &obs[1]));
            out[0][k] = x * th.cos() - y * th.sin();
            out[1][k] = y * th.cos() + x * th.sin();
        } else {
            for (o, op) in obs.iter().enumerate() {
                out[o][k] = ops::expect(rho, op);
            }
        }
    };

    for w in 0..sched.cuts.len() {
        let a = sched.cuts[w];
        if next_grid < n_grid && (sched.grid[next_grid] - a).abs() < 1e-9 {
            if !want_integral {
                record(&rho, a, &mut values, next_grid);
            }
            next_grid += 1;
        }
        if w + 1 == sched.cuts.len() {
            break;
        }
        let b = sched.cuts[w + 1];
        let mid = 0.5 * (a + b);
        let (amp, phase) = match seq.envelope_at(mid) {
            Some((k, env)) => {
                let s = &seq.segments[k];
                let amp = env * s.b1 * nu1_per_mt;
                if amp == 0.0 {
                    (0.0, 0.0)
                } else {
                    (amp, s.phase)
                }
            }
            None => (0.0, 0.0),
        };
        let key = (amp.to_bits(), phase.to_bits());
        let gi = match gen_index.get(&key) {
            Some(&g) => g,
            None => {
                let h = h_frame + (dx * real(phase.cos()) + dy * real(c * phase.sin())) * real(amp);
                let g = match &damping {
                    None => {
                        let eig = h.symmetric_eigen();
                        let v = eig.eigenvectors;
                        let e = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2], eig.eigenvalues[3]];
                        let obs_t = obs.iter().map(|o| v.adjoint() * o * v).collect();
                        Generator::Unitary { v, e, obs: obs_t }
                    }
                    Some(dmp) => Generator::Dissipative { l: hamiltonian_superoperator(&h) + dmp },
                };
                gens.push(g);
                gen_index.insert(key, gens.len() - 1);
                gens.len() - 1
            }
        };
        let q = quantize(b - a);
        let hq = q as f64 * 1e-9;
        let step = cache.entry((gi, q)).or_insert_with(|| build_step(&gens[gi], hq, want_integral));
        let bin = ((mid / opts.dt_ns) + 0.5).floor() as usize;
        match (step, &gens[gi]) {
            (StepProp::Unitary { u, m }, Generator::Unitary { v, obs: obs_t, .. }) => {
                if let Some(m) = m {
                    let rt = v.adjoint() * rho * v;
                    for (o, ot) in obs_t.iter().enumerate() {
                        let mut s = ZERO;
                        for x in 0..4 {
                            for y in 0..4 {
                                s += rt[(x, y)] * ot[(y, x)] * m[x][y];
                            }
                        }
                        if bin < n_grid {
                            acc[o][bin] += s.re;
                        }
                    }
                }
                rho = *u * rho * u.adjoint();
            }
            (StepProp::Dissipative { p, phi }, _) => {
                let vr = vec_rowmajor(&rho);
                if let Some(phi) = phi {
                    let integ = unvec_rowmajor(&(*phi * vr));
                    for (o, op) in obs.iter().enumerate() {
                        if bin < n_grid {
                            acc[o][bin] += ops::expect(&integ, op);
                        }
                    }
                }
                rho = unvec_rowmajor(&(*p * vr));
            }
            _ => return Err(Error::Numerical("propagator cache mismatch".into())),
        }
    }
    if want_integral {
        for k in 0..n_grid {
            let lo = ((k as f64 - 0.5) * opts.dt_ns).max(0.0);
            let hi = ((k as f64 + 0.5) * opts.dt_ns).min(seq.t_end);
            let width = hi - lo;
            for o in 0..n_obs {
                values[o][k] = if width > 0.0 { acc[o][k] / width } else { f64::NAN };
            }
        }
        // A grid point sitting exactly on t_end has a zero-width bin.
        for o in 0..n_obs {
            if let Some(last) = values[o].last_mut() {
                if last.is_nan() {
                    *last = ops::expect(&rho, &obs[o]);
                }
            }
        }
    }
    let th = TWO_PI * c * nu * seq.t_end * 1e-3;
    let r = ops::rotation(&gen_op, th);
    let final_state = r * rho * r.adjoint();
    finish(sched.grid, values, final_state, sense, nu)
}

fn finish(
    grid: Vec<f64>,
    mut values: Vec<Vec<f64>>,
    final_state: OperatorMatrix,
    sense: i8,
    nu: f64,
) -> Result<Propagation> {
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite observable".into()));
    }
    let perp = if values.len() > 1 { Some(values.pop().unwrap()) } else { None };
    let main = values.pop().unwrap();
    Ok(Propagation {
        trace: AsymmetryTrace { times: grid.clone(), values: main, sigma: None },
        trace_perp: perp.map(|v| AsymmetryTrace { times: grid, values: v, sigma: None }),
        final_state,
        frame_sense: sense,
        frame_freq_mhz: nu,
    })
}

fn propagate_lab(
    rho0: &OperatorMatrix,
    sys: &SpinSystem,
    b0: f64,
    seq: &PulseSequence,
    relax: &RelaxationModel,
    opts: &PropagateOptions,
) -> Result<Propagation> {
    let dt = opts.dt_ns;
    let nu_max = seq.segments.iter().map(|s| s.freq.abs()).fold(0.0, f64::max);
    if nu_max > 0.0 && dt > 1.0 / (20.0 * nu_max * 1e-3) {
        return Err(invalid(format!(
            "lab-frame step {dt} ns is too coarse for {nu_max} MHz; need dt <= {:.6} ns",
            1.0 / (20.0 * nu_max * 1e-3)
        )));
    }
    if opts.record_every == 0 {
        return Err(invalid("record_every must be >= 1"));
    }
    let hs = static_with_offset(sys, b0, opts.electron_offset_mhz);
    let x = sys.drive_operator();
    let comm = ops::commutator(&hs, &x);
    let k = TWO_PI * 1e-3;
    let u0 = ops::unitary_from_hermitian(&hs, dt * 1e-3);
    let basis = if relax.is_zero() { None } else { Some(diagonalize(&hs)?.eigenvectors) };
    let obs = observables(seq.geometry);
    let n_steps = (seq.t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let stride = opts.record_every;
    let n_rec = n_steps / stride + 1;
    let grid: Vec<f64> = (0..n_rec).map(|j| (j * stride) as f64 * dt).collect();
    let mut values = vec![vec![0.0; n_rec]; obs.len()];
    let mut acc = vec![vec![0.0; n_rec]; obs.len()];
    let averaging = opts.sampling == Sampling::BinAverage;
    let nu1_per_mt = 0.5 * sys.gamma_e() * opts.b1_scale;
    let drive = |t: f64| -> f64 {
        match seq.envelope_at(t) {
            Some((j, env)) => {
                let s = &seq.segments[j];
                2.0 * nu1_per_mt * s.b1 * env * (TWO_PI * s.freq * t * 1e-3 + s.phase).cos()
            }
            None => 0.0,
        }
    };
    let gauss = 3f64.sqrt() / 6.0;
    let magnus_c = 3f64.sqrt() / 12.0;
    let mut rho = *rho0;
    let eval = |rho: &OperatorMatrix| -> Vec<f64> { obs.iter().map(|o| ops::expect(rho, o)).collect() };
    let mut prev_vals = eval(&rho);
    for (o, v) in prev_vals.iter().enumerate() {
        values[o][0] = *v;
    }
    let t_rec = stride as f64 * dt;
    for step in 0..n_steps {
        let t = step as f64 * dt;
        let g1 = drive(t + dt * (0.5 - gauss));
        let g2 = drive(t + dt * (0.5 + gauss));
        let u = if g1 == 0.0 && g2 == 0.0 {
            u0
        } else {
            let omega = (hs + x * real(0.5 * (g1 + g2))) * (-I * (k * dt))
                - comm * real(magnus_c * dt * dt * k * k * (g1 - g2));
            omega.exp()
        };
        match &basis {
            None => rho = u * rho * u.adjoint(),
            Some(b) => {
                rho = relax.apply_damping(&rho, b, 0.5 * dt);
                rho = u * rho * u.adjoint();
                rho = relax.apply_damping(&rho, b, 0.5 * dt);
            }
        }
        let vals = eval(&rho);
        if averaging {
            let mid = t + 0.5 * dt;
            let bin = (mid / t_rec + 0.5).floor() as usize;
            if bin < n_rec {
                for o in 0..obs.len() {
                    acc[o][bin] += 0.5 * dt * (prev_vals[o] + vals[o]);
                }
            }
        }
        if (step + 1) % stride == 0 {
            let j = (step + 1) / stride;
            if j < n_rec && !averaging {
                for o in 0..obs.len() {
                    values[o][j] = vals[o];
                }
            }
        }
        prev_vals = vals;
    }
    if averaging {
        let t_last = n_steps as f64 * dt;
        for j in 0..n_rec {
            let lo = ((j as f64 - 0.5) * t_rec).max(0.0);
            let hi = ((j as f64 + 0.5) * t_rec).min(t_last);
            for o in 0..obs.len() {
                values[o][j] = if hi > lo { acc[o][j] / (hi - lo) } else { prev_vals[o] };
            }
        }
    }
    finish(grid, values, rho, 1, 0.0)
}
