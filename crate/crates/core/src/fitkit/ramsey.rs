use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::constants::TWO_PI;
use crate::dynamics::AsymmetryTrace;
use crate::error::{invalid, Result};

/// One recorded trace of a two-pulse experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct RamseyShot {
    pub tau_ns: f64,
    /// Phase of the second pulse.
    pub phase_rad: f64,
    pub trace: AsymmetryTrace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    pub tau_ns: f64,
    /// Half difference of the 0 and π shots; negative for net polarization loss.
    pub value: f64,
    /// Half difference of the π/2 and 3π/2 shots when a four-step cycle is present.
    pub quadrature: Option<f64>,
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fringes {
    pub points: Vec<FringePoint>,
    /// Delays without a complete 0/π pair.
    pub dropped: usize,
}

impl Fringes {
    pub fn to_trace(&self) -> Result<AsymmetryTrace> {
        let t = self.points.iter().map(|p| p.tau_ns).collect();
        let v = self.points.iter().map(|p| p.value).collect();
        let tr = AsymmetryTrace::new(t, v)?;
        if self.points.iter().all(|p| p.sigma.is_some()) {
            tr.with_sigma(self.points.iter().map(|p| p.sigma.unwrap()).collect())
        } else {
            Ok(tr)
        }
    }
}

fn window_mean(tr: &AsymmetryTrace, w: (f64, f64)) -> Result<(f64, Option<f64>)> {
    let sub = tr.window(w.0, w.1);
    if sub.is_empty() {
        return Err(invalid(format!("window [{}, {}) ns holds no samples", w.0, w.1)));
    }
    let n = sub.len() as f64;
    let sigma = sub.sigma.as_ref().map(|s| s.iter().map(|x| x * x).sum::<f64>().sqrt() / n);
    Ok((sub.mean(), sigma))
}

fn phase_slot(phase: f64) -> Option<usize> {
    let p = phase.rem_euclid(TWO_PI);
    [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2, TWO_PI]
        .iter()
        .position(|&c| (p - c).abs() < 1e-6)
        .map(|k| k % 4)
}

/// Fringe values ΔA(τ) = mean(after) − mean(before), phase-cycled over the second pulse.
pub fn ramsey_extract(shots: &[RamseyShot], window_before: (f64, f64), window_after: (f64, f64)) -> Result<Fringes> {
    let mut taus: Vec<f64> = shots.iter().map(|s| s.tau_ns).collect();
    taus.sort_by(|a, b| a.total_cmp(b));
    taus.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let mut points = Vec::new();
    let mut dropped = 0;
    for &tau in &taus {
        let mut slots: [Option<(f64, Option<f64>)>; 4] = [None; 4];
        for s in shots.iter().filter(|s| (s.tau_ns - tau).abs() < 1e-9) {
            let k = phase_slot(s.phase_rad)
                .ok_or_else(|| invalid(format!("second-pulse phase {} is not a multiple of π/2", s.phase_rad)))?;
            let (b, sb) = window_mean(&s.trace, window_before)?;
            let (a, sa) = window_mean(&s.trace, window_after)?;
            let sig = match (sa, sb) {
                (Some(x), Some(y)) => Some(x.hypot(y)),
                _ => None,
            };
            slots[k] = Some((a - b, sig));
        }
        let half = |p: Option<(f64, Option<f64>)>, q: Option<(f64, Option<f64>)>| {
            p.zip(q).map(|((x, sx), (y, sy))| (0.5 * (x - y), sx.zip(sy).map(|(u, v)| 0.5 * u.hypot(v))))
        };
        match half(slots[0], slots[2]) {
            Some((value, sigma)) => points.push(FringePoint {
                tau_ns: tau,
                value,
                quadrature: half(slots[1], slots[3]).map(|q| q.0),
                sigma,
            }),
            None => dropped += 1,
        }
    }
    Ok(Fringes { points, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shot(tau: f64, phase: f64, before: f64, after: f64) -> RamseyShot {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 10.0).collect();
        let v = t.iter().map(|&x| if x < 100.0 { before } else { after }).collect();
        RamseyShot { tau_ns: tau, phase_rad: phase, trace: AsymmetryTrace::new(t, v).unwrap() }
    }

    #[test]
    fn two_step_cycle_takes_half_difference() {
        let shots = vec![shot(0.0, 0.0, 1.0, -1.0), shot(0.0, PI, 1.0, 1.0), shot(10.0, 0.0, 1.0, 0.2)];
        let f = ramsey_extract(&shots, (0.0, 100.0), (100.0, 200.0)).unwrap();
        assert_eq!(f.points.len(), 1);
        assert_eq!(f.dropped, 1);
        assert!((f.points[0].value + 1.0).abs() < 1e-12);
        assert!(f.points[0].quadrature.is_none());
    }

    #[test]
    fn four_step_cycle_gives_quadrature() {
        let shots = vec![
            shot(5.0, 0.0, 1.0, 0.4),
            shot(5.0, FRAC_PI_2, 1.0, 0.9),
            shot(5.0, PI, 1.0, 1.0),
            shot(5.0, -FRAC_PI_2, 1.0, 0.3),
        ];
        let f = ramsey_extract(&shots, (0.0, 100.0), (100.0, 200.0)).unwrap();
        assert!((f.points[0].value + 0.3).abs() < 1e-12);
        assert!((f.points[0].quadrature.unwrap() - 0.3).abs() < 1e-12);
    }
}
