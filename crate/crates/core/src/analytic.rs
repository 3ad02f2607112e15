//! Closed-form driven-system results: two-level Rabi formulas and the three-step tilted-frame
//! diagonalization of the axial system under a microwave drive.
//!
//! Frequencies are linear (MHz). `nu1` is the drive coefficient in H₁ = ν₁·S_x, i.e.
//! ν₁ = γ_e·B₁/2 for a linearly polarized field of amplitude B₁.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::TWO_PI;
use crate::dynamics::AsymmetryTrace;
use crate::error::{invalid, Error, Result};
use crate::operators::{self as ops, real, OperatorMatrix, C64};
use crate::spinsys::{level_diagram, static_hamiltonian_unchecked, Hyperfine, SpinSystem};

/// √(ν₁² + Ω²).
pub fn effective_rabi(nu1: f64, omega: f64) -> f64 {
    nu1.hypot(omega)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RabiAmplitudes {
    pub a_osc: f64,
    pub a_static: f64,
    /// ν₁ = Ω = 0, where the ratio is undefined and A_osc is set to 0 by continuity.
    pub degenerate: bool,
}

/// Oscillating and static amplitudes of a driven two-level muon signal.
pub fn rabi_amplitudes(p34: f64, p_sigma: f64, nu1: f64, omega: f64) -> Result<RabiAmplitudes> {
    for (n, v) in [("p34", p34), ("p_sigma", p_sigma), ("nu1", nu1), ("Omega", omega)] {
        if !v.is_finite() {
            return Err(invalid(format!("{n} must be finite")));
        }
    }
    if !(0.0 <= p34 && p34 <= p_sigma && p_sigma <= 1.0) {
        return Err(invalid(format!("need 0 <= p34 <= p_sigma <= 1, got {p34}, {p_sigma}")));
    }
    let eff2 = nu1 * nu1 + omega * omega;
    if eff2 == 0.0 {
        return Ok(RabiAmplitudes { a_osc: 0.0, a_static: p_sigma, degenerate: true });
    }
    let a_osc = p34 * nu1 * nu1 / eff2;
    Ok(RabiAmplitudes { a_osc, a_static: p_sigma - a_osc, degenerate: false })
}

/// Drive coefficient ν₁ for a linear field amplitude B₁.
pub fn drive_coefficient(sys: &SpinSystem, b1_mt: f64) -> f64 {
    0.5 * sys.gamma_e() * b1_mt
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltedFrameAngles {
    pub xi: f64,
    pub eta: f64,
    pub theta13: f64,
    pub theta24: f64,
    pub theta: f64,
    pub chi_zq: f64,
    pub chi_dq: f64,
    /// A denominator vanished exactly and its angle was set to ±π/2.
    pub on_resonance: bool,
}

/// Every intermediate quantity of the tilted-frame construction at one operating point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltedFrame {
    pub angles: TiltedFrameAngles,
    /// Electron offset ν_S − ν_uw.
    pub omega_s: f64,
    /// Signed muon frequencies of the two electron manifolds and their sum and difference.
    pub omega12: f64,
    pub omega34: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub omega13_dt: f64,
    pub omega24_dt: f64,
    pub omega_s_dt: f64,
    pub omega_minus_dt: f64,
    /// Multi-quantum coupling ν₁·sin η·cos θ kept after truncation.
    pub w_mq: f64,
    /// Denominators of θ₁₃, θ₂₄, χ_zq, χ_dq; each vanishes on its resonance.
    pub denominators: [f64; 4],
}

/// Plain arctangent of num/den with the limit ±π/2 when den = 0.
fn atan_ratio(num: f64, den: f64, hit: &mut bool) -> f64 {
    if den == 0.0 {
        *hit = true;
        if num == 0.0 {
            0.0
        } else {
            std::f64::consts::FRAC_PI_2.copysign(num)
        }
    } else {
        (num / den).atan()
    }
}

fn axial_parts(sys: &SpinSystem) -> Result<(f64, f64)> {
    sys.validate()?;
    match sys.hyperfine {
        Hyperfine::Axial { a_par, a_perp } => Ok((a_par, a_perp)),
        Hyperfine::Isotropic { .. } => Err(invalid(
            "tilted-frame formulas need an axial hyperfine tensor; use axial(g, A, 0) for the secular limit",
        )),
    }
}

pub fn tilted_frame(sys: &SpinSystem, b0_mt: f64, nu_uw: f64, nu1: f64) -> Result<TiltedFrame> {
    axial_parts(sys)?;
    for (n, v) in [("B0", b0_mt), ("nu_uw", nu_uw), ("nu1", nu1)] {
        if !v.is_finite() {
            return Err(invalid(format!("{n} must be finite")));
        }
    }
    if nu1 < 0.0 {
        return Err(invalid(format!("nu1 must be >= 0, got {nu1}")));
    }
    let mut hit = false;
    let omega_s = sys.nu_s(b0_mt) - nu_uw;
    // Per manifold the muon sees (x, z); rotating by −arctan(x/z) about y leaves z/cos(α)·I_z.
    let [(xp, zp), (xm, zm)] = sys.muon_vectors(b0_mt);
    let mut manifold = |x: f64, z: f64| {
        let a = atan_ratio(x, z, &mut hit);
        let c = if z == 0.0 { x.abs() } else { z / a.cos() };
        (a, c)
    };
    let (ap, omega12) = manifold(xp, zp);
    let (am, omega34) = manifold(xm, zm);
    let xi = -0.5 * (ap + am);
    let eta = -0.5 * (ap - am);
    let omega_plus = omega12 + omega34;
    let omega_minus = omega12 - omega34;

    let w_sq = nu1 * eta.cos();
    let d13 = omega_s + 0.5 * omega_minus;
    let d24 = omega_s - 0.5 * omega_minus;
    let theta13 = atan_ratio(-w_sq, d13, &mut hit);
    let theta24 = atan_ratio(-w_sq, d24, &mut hit);
    let omega13_dt = d13 * theta13.cos() - w_sq * theta13.sin();
    let omega24_dt = d24 * theta24.cos() - w_sq * theta24.sin();
    let theta = 0.5 * (theta13 - theta24);
    let omega_s_dt = 0.5 * (omega13_dt + omega24_dt);
    let omega_minus_dt = omega13_dt - omega24_dt;

    let w_mq = nu1 * eta.sin() * theta.cos();
    let d_zq = omega_s_dt - 0.5 * omega_plus;
    let d_dq = -omega_s_dt - 0.5 * omega_plus;
    let chi_zq = atan_ratio(w_mq, d_zq, &mut hit);
    let chi_dq = atan_ratio(w_mq, d_dq, &mut hit);
    Ok(TiltedFrame {
        angles: TiltedFrameAngles { xi, eta, theta13, theta24, theta, chi_zq, chi_dq, on_resonance: hit },
        omega_s,
        omega12,
        omega34,
        omega_plus,
        omega_minus,
        omega13_dt,
        omega24_dt,
        omega_s_dt,
        omega_minus_dt,
        w_mq,
        denominators: [d13, d24, d_zq, d_dq],
    })
}

pub fn tilted_angles(sys: &SpinSystem, b0_mt: f64, nu_uw: f64, nu1: f64) -> Result<TiltedFrameAngles> {
    Ok(tilted_frame(sys, b0_mt, nu_uw, nu1)?.angles)
}

/// Which multi-quantum coherence the third frame rotation diagonalizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MqBranch {
    /// Zero-quantum (2,3): Ω_S^dt enters with a plus sign.
    ZeroQuantum,
    /// Double-quantum (1,4): Ω_S^dt enters with a minus sign.
    DoubleQuantum,
}

impl TiltedFrame {
    /// (Ω_S^tr, ω_I^tr) for one branch.
    pub fn triply_tilted(&self, branch: MqBranch) -> (f64, f64) {
        let (s, chi) = match branch {
            MqBranch::ZeroQuantum => (1.0, self.angles.chi_zq),
            MqBranch::DoubleQuantum => (-1.0, self.angles.chi_dq),
        };
        let c2 = (0.5 * chi).cos().powi(2);
        let s2 = (0.5 * chi).sin().powi(2);
        let cross = 0.5 * self.w_mq * chi.sin();
        let om = s * self.omega_s_dt;
        let half_plus = 0.5 * self.omega_plus;
        (om * c2 + half_plus * s2 + cross, om * s2 + half_plus * c2 - cross)
    }

    /// Frame rotations U₁, U₂ and the branch's U₃.
    pub fn unitaries(&self, branch: MqBranch) -> [OperatorMatrix; 3] {
        let a = &self.angles;
        let sz_iy2 = ops::sz() * ops::iy() * real(2.0);
        let u1 = ops::rotation(&(ops::iy() * real(a.xi) + sz_iy2 * real(a.eta)), 1.0);
        let g2 = ops::sy() * real(0.5 * (a.theta13 + a.theta24)) + ops::sy() * ops::iz() * real(a.theta13 - a.theta24);
        let u2 = ops::rotation(&g2, 1.0);
        let (gen, chi) = match branch {
            MqBranch::ZeroQuantum => (ops::sx() * ops::iy() - ops::sy() * ops::ix(), a.chi_zq),
            MqBranch::DoubleQuantum => (ops::sx() * ops::iy() + ops::sy() * ops::ix(), -a.chi_dq),
        };
        let u3 = ops::rotation(&gen, chi);
        [u1, u2, u3]
    }

    /// Doubly-tilted Hamiltonian with only the branch's multi-quantum term kept.
    pub fn truncated_hamiltonian(&self, branch: MqBranch) -> OperatorMatrix {
        let xx = ops::sx() * ops::ix();
        let yy = ops::sy() * ops::iy();
        let mq = match branch {
            MqBranch::ZeroQuantum => (xx + yy) * real(self.w_mq),
            MqBranch::DoubleQuantum => (yy - xx) * real(self.w_mq),
        };
        ops::sz() * real(self.omega_s_dt)
            + ops::iz() * real(0.5 * self.omega_plus)
            + ops::sz() * ops::iz() * real(self.omega_minus_dt)
            + mq
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemurPoint {
    pub b0_mt: f64,
    /// Driven muon frequencies, signed: ν₃₄ is negative where level 3 lies below level 4.
    pub nu12_tr: f64,
    pub nu34_tr: f64,
    /// Past the zero-/double-quantum crossing, where the muon branch continues in Ω_S^tr.
    pub zq_substituted: bool,
    pub dq_substituted: bool,
    /// Within the exclusion window of a single- or multi-quantum discontinuity.
    pub flagged: bool,
}

pub const DEFAULT_EXCLUSION_MT: f64 = 0.05;

pub fn demur_eigenfrequencies(sys: &SpinSystem, b0_mt: f64, nu_uw: f64, nu1: f64) -> Result<DemurPoint> {
    demur_eigenfrequencies_with(sys, b0_mt, nu_uw, nu1, DEFAULT_EXCLUSION_MT)
}

pub fn demur_eigenfrequencies_with(
    sys: &SpinSystem,
    b0_mt: f64,
    nu_uw: f64,
    nu1: f64,
    exclusion_mt: f64,
) -> Result<DemurPoint> {
    if !(exclusion_mt.is_finite() && exclusion_mt >= 0.0) {
        return Err(invalid(format!("exclusion window must be >= 0, got {exclusion_mt}")));
    }
    let f = tilted_frame(sys, b0_mt, nu_uw, nu1)?;
    let (_, wi_zq) = f.triply_tilted(MqBranch::ZeroQuantum);
    let (_, wi_dq) = f.triply_tilted(MqBranch::DoubleQuantum);
    // Plain arctangents keep χ on the muon-like branch on both sides of each crossing, so
    // beyond a crossing ω_I^tr already equals the Ω_S^tr of the continued branch.
    let wt = wi_zq + wi_dq - 0.5 * f.omega_plus;
    let [_, _, d_zq, d_dq] = f.denominators;
    let mut flagged = f.angles.on_resonance;
    if exclusion_mt > 0.0 && !flagged {
        let lo = tilted_frame(sys, (b0_mt - exclusion_mt).max(0.0), nu_uw, nu1)?;
        let hi = tilted_frame(sys, b0_mt + exclusion_mt, nu_uw, nu1)?;
        flagged = (0..4).any(|k| {
            let a = lo.denominators[k];
            let b = f.denominators[k];
            let c = hi.denominators[k];
            a * b <= 0.0 || b * c <= 0.0
        });
    }
    Ok(DemurPoint {
        b0_mt,
        nu12_tr: wt + 0.5 * f.omega_minus_dt,
        nu34_tr: wt - 0.5 * f.omega_minus_dt,
        zq_substituted: d_zq > 0.0,
        dq_substituted: d_dq < 0.0,
        flagged,
    })
}

pub fn demur_sweep(
    sys: &SpinSystem,
    b0_list: &[f64],
    nu_uw: f64,
    nu1: f64,
    exclusion_mt: f64,
) -> Result<Vec<DemurPoint>> {
    b0_list
        .par_iter()
        .map(|&b| demur_eigenfrequencies_with(sys, b, nu_uw, nu1, exclusion_mt))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftPoint {
    pub b1_mt: f64,
    /// Splitting of the dressed pair at the minimum.
    pub nu_rabi: f64,
    /// Static ν₁₄ at the minimizing field minus ν_uw.
    pub shift: f64,
    pub b0_min_mt: f64,
    /// Same shift from the χ_dq crossing condition.
    pub shift_analytic: f64,
}

/// Dressed splitting of the two rotating-frame eigenstates with most weight on the static
/// levels 1 and 4.
pub fn dq_dressed_splitting(sys: &SpinSystem, b0_mt: f64, nu_uw: f64, nu1: f64) -> Result<f64> {
    let d = level_diagram(sys, b0_mt)?;
    let h = static_hamiltonian_unchecked(sys, b0_mt) - ops::sz() * real(nu_uw) + ops::sx() * real(nu1);
    let eig = h.symmetric_eigen();
    let mut w: Vec<(f64, usize)> = (0..4)
        .map(|k| {
            let v = eig.eigenvectors.column(k);
            let p1 = d.eigenvectors.column(0).dotc(&v).norm_sqr();
            let p4 = d.eigenvectors.column(3).dotc(&v).norm_sqr();
            (p1 + p4, k)
        })
        .collect();
    w.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok((eig.eigenvalues[w[0].1] - eig.eigenvalues[w[1].1]).abs())
}

fn static_dq_frequency(sys: &SpinSystem, b0_mt: f64) -> Result<f64> {
    Ok(level_diagram(sys, b0_mt)?.splitting(1, 4))
}

fn static_dq_field(sys: &SpinSystem, nu_uw: f64) -> Result<f64> {
    let guess = nu_uw / sys.gamma_e();
    let (mut lo, mut hi) = (0.5 * guess, 1.5 * guess);
    let f = |b: f64| static_dq_frequency(sys, b).map(|v| v - nu_uw);
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if flo * fhi > 0.0 {
        return Err(Error::Numerical(format!("no (1,4) resonance at {nu_uw} MHz")));
    }
    for _ in 0..100 {
        let m = 0.5 * (lo + hi);
        if (f(m)? > 0.0) == (fhi > 0.0) {
            hi = m;
        } else {
            lo = m;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Minimizes the dressed (1,4) splitting over B₀: 51-point grid spanning ±3ν₁ in electron
/// offset, then golden section to 1 kHz.
pub fn dq_shift_numeric(sys: &SpinSystem, nu_uw: f64, b1_mt: f64) -> Result<(f64, f64, f64)> {
    if !(b1_mt.is_finite() && b1_mt > 0.0) {
        return Err(invalid(format!("B1 must be > 0, got {b1_mt}")));
    }
    axial_parts(sys)?;
    let nu1 = drive_coefficient(sys, b1_mt);
    let b14 = static_dq_field(sys, nu_uw)?;
    let half = 3.0 * nu1 / sys.gamma_e();
    let n = 51;
    let grid: Vec<f64> = (0..n).map(|k| b14 - half + 2.0 * half * k as f64 / (n - 1) as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&b| dq_dressed_splitting(sys, b, nu_uw, nu1)).collect::<Result<_>>()?;
    let k = (0..n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    if k == 0 || k == n - 1 {
        let dump: Vec<String> = grid.iter().zip(&vals).map(|(b, v)| format!("{b:.4}:{v:.4}")).collect();
        return Err(Error::Numerical(format!(
            "dressed splitting minimum not bracketed for B1 = {b1_mt} mT; sweep {}",
            dump.join(" ")
        )));
    }
    let (mut a, mut b) = (grid[k - 1], grid[k + 1]);
    let tol = 1e-3 / sys.gamma_e();
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let f = |x: f64| dq_dressed_splitting(sys, x, nu_uw, nu1);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    let b_min = 0.5 * (a + b);
    let nu_rabi = f(b_min)?;
    Ok((b_min, nu_rabi, static_dq_frequency(sys, b_min)? - nu_uw))
}

/// Shift of the (1,4) resonance from the χ_dq crossing −Ω_S^dt = ω₊/2.
pub fn dq_shift_analytic(sys: &SpinSystem, nu_uw: f64, b1_mt: f64) -> Result<f64> {
    let nu1 = drive_coefficient(sys, b1_mt);
    let b14 = static_dq_field(sys, nu_uw)?;
    let den = |b: f64| tilted_frame(sys, b, nu_uw, nu1).map(|f| f.denominators[3]);
    let step = 0.002;
    let slope = sys.gamma_e() * step;
    let n = 1500;
    let mut best: Option<(f64, f64)> = None;
    let mut prev_b = b14 - n as f64 * step;
    let mut prev = den(prev_b)?;
    for k in (-(n as i64) + 1)..=(n as i64) {
        let b = b14 + k as f64 * step;
        let cur = den(b)?;
        // A genuine zero crossing moves by about one slope step; jumps are discontinuities.
        if prev * cur <= 0.0 && (prev - cur).abs() < 3.0 * slope {
            let dist = (0.5 * (b + prev_b) - b14).abs();
            if best.map(|(_, bd)| dist < bd).unwrap_or(true) {
                best = Some((prev_b, dist));
            }
        }
        prev = cur;
        prev_b = b;
    }
    let (mut lo, _) = best.ok_or_else(|| Error::Numerical("χ_dq crossing not found".into()))?;
    let mut hi = lo + step;
    let flo = den(lo)?;
    for _ in 0..60 {
        let m = 0.5 * (lo + hi);
        if (den(m)? > 0.0) == (flo > 0.0) {
            lo = m;
        } else {
            hi = m;
        }
    }
    Ok(static_dq_frequency(sys, 0.5 * (lo + hi))? - nu_uw)
}

pub fn dq_shift_curve(sys: &SpinSystem, nu_uw: f64, b1_list: &[f64]) -> Result<Vec<ShiftPoint>> {
    b1_list
        .par_iter()
        .map(|&b1| {
            let (b0_min_mt, nu_rabi, shift) = dq_shift_numeric(sys, nu_uw, b1)?;
            let shift_analytic = dq_shift_analytic(sys, nu_uw, b1)?;
            Ok(ShiftPoint { b1_mt: b1, nu_rabi, shift, b0_min_mt, shift_analytic })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticTrace {
    /// 2⟨I_x⟩ for an initially x-polarized muon.
    pub trace: AsymmetryTrace,
    pub branch: MqBranch,
    /// False when ν₁·sin η exceeds |ω₊|/10 and the truncation is unreliable.
    pub valid: bool,
}

/// TF signal under CW drive from the triply-tilted frame: transform ρ₀ in, evolve under the
/// diagonal truncated Hamiltonian, transform back. `branch` defaults to the multi-quantum
/// resonance nearer in offset.
pub fn analytic_tf_trace(
    sys: &SpinSystem,
    b0_mt: f64,
    nu_uw: f64,
    nu1: f64,
    times_ns: &[f64],
    branch: Option<MqBranch>,
) -> Result<AnalyticTrace> {
    let f = tilted_frame(sys, b0_mt, nu_uw, nu1)?;
    let branch = branch.unwrap_or(if f.denominators[2].abs() <= f.denominators[3].abs() {
        MqBranch::ZeroQuantum
    } else {
        MqBranch::DoubleQuantum
    });
    let [u1, u2, u3] = f.unitaries(branch);
    let w = u3 * u2 * u1;
    let h_tr = u3 * f.truncated_hamiltonian(branch) * u3.adjoint();
    let energies: Vec<f64> = (0..4).map(|k| h_tr[(k, k)].re).collect();
    let rho0 = ops::identity() * real(0.25) + ops::ix() * real(0.5);
    let obs = ops::ix() * real(2.0);
    let r = w * rho0 * w.adjoint();
    let o = w * obs * w.adjoint();
    let values = times_ns
        .iter()
        .map(|&t| {
            let mut s = C64::new(0.0, 0.0);
            for a in 0..4 {
                for b in 0..4 {
                    let ph = -TWO_PI * (energies[a] - energies[b]) * t * 1e-3;
                    s += r[(a, b)] * C64::new(ph.cos(), ph.sin()) * o[(b, a)];
                }
            }
            s.re
        })
        .collect();
    let trace = AsymmetryTrace::new(times_ns.to_vec(), values)?;
    let valid = (nu1 * f.angles.eta.sin()).abs() <= 0.1 * f.omega_plus.abs();
    Ok(AnalyticTrace { trace, branch, valid })
}
