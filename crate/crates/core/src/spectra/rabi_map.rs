use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::TWO_PI;
use crate::dynamics::{
    initial_state, propagate, templates, AsymmetryTrace, Geometry, PropagateOptions, RelaxationModel, Sampling,
};
use crate::error::{invalid, Result};
use crate::spinsys::SpinSystem;

use super::{dominant_peak, fft_spectrum, Window};

/// Drive and analysis settings shared by every cell of a map. The drive is switched on at
/// t = 0 and stays on until `t_end_ns`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiMapSpec {
    #[serde(rename = "nu_uw_MHz")]
    pub nu_uw_mhz: f64,
    #[serde(default = "default_geometry")]
    pub geometry: Geometry,
    #[serde(default = "default_t_end", rename = "t_end_ns")]
    pub t_end_ns: f64,
    #[serde(default = "default_dt", rename = "dt_ns")]
    pub dt_ns: f64,
    /// Search band for the oscillation frequency, MHz.
    #[serde(default, rename = "band_MHz")]
    pub band_mhz: Option<(f64, f64)>,
    #[serde(default = "default_window")]
    pub window: Window,
    #[serde(default = "default_pad")]
    pub pad_factor: usize,
    /// Cells whose peak magnitude falls below this are flagged. The default sits above the
    /// few-10⁻³ residue of aliased hyperfine oscillations left by bin averaging.
    #[serde(default = "default_floor")]
    pub noise_floor: f64,
    #[serde(default)]
    pub relaxation: Option<RelaxationModel>,
}

fn default_geometry() -> Geometry {
    Geometry::LF
}
fn default_t_end() -> f64 {
    2000.0
}
fn default_dt() -> f64 {
    1.0
}
fn default_window() -> Window {
    Window::Hann
}
fn default_pad() -> usize {
    8
}
fn default_floor() -> f64 {
    1e-2
}

impl RabiMapSpec {
    pub fn new(nu_uw_mhz: f64) -> Self {
        RabiMapSpec {
            nu_uw_mhz,
            geometry: default_geometry(),
            t_end_ns: default_t_end(),
            dt_ns: default_dt(),
            band_mhz: None,
            window: default_window(),
            pad_factor: default_pad(),
            noise_floor: default_floor(),
            relaxation: None,
        }
    }
}

/// Rows follow `b0_mt`, columns follow `b1_mt`. Flagged cells hold NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RabiMap {
    #[serde(rename = "B0_mT")]
    pub b0_mt: Vec<f64>,
    #[serde(rename = "B1_mT")]
    pub b1_mt: Vec<f64>,
    pub nu_eff: Vec<Vec<f64>>,
    pub amplitude: Vec<Vec<f64>>,
    /// Mean level of the fitted oscillation.
    pub offset: Vec<Vec<f64>>,
    pub n_flagged: usize,
}

/// Least-squares C + a·cos(2πνt) + b·sin(2πνt); returns (C, √(a² + b²)).
pub fn oscillation_amplitude(trace: &AsymmetryTrace, freq_mhz: f64) -> Result<(f64, f64)> {
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for (&t, &y) in trace.times.iter().zip(&trace.values) {
        let ph = TWO_PI * freq_mhz * t * 1e-3;
        let row = Vector3::new(1.0, ph.cos(), ph.sin());
        ata += row * row.transpose();
        atb += row * y;
    }
    let x = ata
        .try_inverse()
        .ok_or_else(|| invalid("oscillation fit is singular; trace too short for this frequency"))?
        * atb;
    Ok((x[0], x[1].hypot(x[2])))
}

/// Dominant oscillation of one driven trace: (ν_eff, amplitude, offset), or `None` when no
/// peak clears the noise floor.
pub fn rabi_point(sys: &SpinSystem, b0_mt: f64, b1_mt: f64, spec: &RabiMapSpec) -> Result<Option<(f64, f64, f64)>> {
    let seq = templates::demur_cw(b1_mt, spec.nu_uw_mhz, spec.t_end_ns, spec.geometry);
    let opts = PropagateOptions::rotating(spec.dt_ns).with_sampling(Sampling::BinAverage);
    let relax = spec.relaxation.clone().unwrap_or_else(RelaxationModel::none);
    let p = propagate(&initial_state(spec.geometry), sys, b0_mt, &seq, &relax, &opts)?;
    let s = fft_spectrum(&p.trace, spec.window, spec.pad_factor)?;
    match dominant_peak(&s, spec.band_mhz) {
        Some(pk) if pk.magnitude >= spec.noise_floor => {
            let (c, a) = oscillation_amplitude(&p.trace, pk.freq)?;
            Ok(Some((pk.freq, a, c)))
        }
        _ => Ok(None),
    }
}

pub fn rabi_map(sys: &SpinSystem, b0_list: &[f64], b1_list: &[f64], spec: &RabiMapSpec) -> Result<RabiMap> {
    if b0_list.is_empty() || b1_list.is_empty() {
        return Err(invalid("Rabi map needs non-empty B0 and B1 grids"));
    }
    sys.validate()?;
    let n1 = b1_list.len();
    let cells: Vec<Option<(f64, f64, f64)>> = (0..b0_list.len() * n1)
        .into_par_iter()
        .map(|k| rabi_point(sys, b0_list[k / n1], b1_list[k % n1], spec))
        .collect::<Result<_>>()?;
    let mut nu_eff = vec![vec![f64::NAN; n1]; b0_list.len()];
    let mut amplitude = nu_eff.clone();
    let mut offset = nu_eff.clone();
    let mut n_flagged = 0;
    for (k, c) in cells.iter().enumerate() {
        match c {
            Some((f, a, o)) => {
                nu_eff[k / n1][k % n1] = *f;
                amplitude[k / n1][k % n1] = *a;
                offset[k / n1][k % n1] = *o;
            }
            None => n_flagged += 1,
        }
    }
    Ok(RabiMap { b0_mt: b0_list.to_vec(), b1_mt: b1_list.to_vec(), nu_eff, amplitude, offset, n_flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinsys::{level_diagram, transition_table};

    #[test]
    fn amplitude_fit_recovers_cosine() {
        let t: Vec<f64> = (0..800).map(|k| k as f64).collect();
        let v = t.iter().map(|&x| 0.2 + 0.37 * (TWO_PI * 5.5 * x * 1e-3 - 1.1).cos()).collect();
        let (c, a) = oscillation_amplitude(&AsymmetryTrace::new(t, v).unwrap(), 5.5).unwrap();
        assert!((c - 0.2).abs() < 1e-12 && (a - 0.37).abs() < 1e-12);
    }

    #[test]
    fn zero_drive_cells_are_flagged() {
        let sys = SpinSystem::isotropic(2.0023, 4497.0);
        let nu = level_diagram(&sys, 82.5).unwrap().splitting(4, 3);
        let mut spec = RabiMapSpec::new(nu);
        spec.t_end_ns = 1500.0;
        let m = rabi_map(&sys, &[82.5], &[0.0, 0.8], &spec).unwrap();
        assert_eq!(m.n_flagged, 1);
        assert!(m.nu_eff[0][0].is_nan() && m.nu_eff[0][1] > 0.0);
    }

    #[test]
    fn on_resonance_frequency_is_linear_in_weak_drive() {
        let sys = SpinSystem::isotropic(2.0023, 4497.0);
        let b0 = 82.5;
        let nu = level_diagram(&sys, b0).unwrap().splitting(4, 3);
        let mut spec = RabiMapSpec::new(nu);
        spec.t_end_ns = 2000.0;
        let b1 = [0.2, 0.4, 0.8];
        let m = rabi_map(&sys, &[b0], &b1, &spec).unwrap();
        let rabi = transition_table(&sys, b0).unwrap();
        for (j, &b) in b1.iter().enumerate() {
            let want = rabi.rabi_frequency(3, 4, b).unwrap();
            assert!((m.nu_eff[0][j] - want).abs() < 0.01 * want, "{} vs {want}", m.nu_eff[0][j]);
        }
    }
}
