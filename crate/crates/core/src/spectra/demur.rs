//! Numerical TF DEMUR: propagate under CW drive, read the muon lines from the spectrum and
//! from a two-line damped fit seeded by the analytic eigenfrequencies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{demur_eigenfrequencies_with, drive_coefficient, DemurPoint, DEFAULT_EXCLUSION_MT};
use crate::dynamics::{initial_state, propagate, templates, Geometry, PropagateOptions, RelaxationModel, Sampling};
use crate::error::Result;
use crate::fitkit::{fit_model, Component, FitOptions, ModelSpec, ParamSpec};
use crate::spinsys::SpinSystem;

use super::{fft_spectrum, find_peaks, Window};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemurNumericSpec {
    #[serde(rename = "nu_uw_MHz")]
    pub nu_uw_mhz: f64,
    #[serde(rename = "B1_mT")]
    pub b1_mt: f64,
    #[serde(default = "default_t_end", rename = "t_end_ns")]
    pub t_end_ns: f64,
    #[serde(default = "default_dt", rename = "dt_ns")]
    pub dt_ns: f64,
    #[serde(default = "default_window")]
    pub window: Window,
    #[serde(default = "default_pad")]
    pub pad_factor: usize,
    /// Spectral lines weaker than this fraction of the strongest are ignored.
    #[serde(default = "default_min_rel")]
    pub peak_min_rel: f64,
    #[serde(default = "default_exclusion", rename = "exclusion_mT")]
    pub exclusion_mt: f64,
    #[serde(default)]
    pub relaxation: Option<RelaxationModel>,
    /// Run the two-line fit; without it the fit columns are NaN.
    #[serde(default = "default_fit_lines")]
    pub fit_lines: bool,
}

fn default_t_end() -> f64 {
    4000.0
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
fn default_min_rel() -> f64 {
    0.05
}
fn default_fit_lines() -> bool {
    true
}
fn default_exclusion() -> f64 {
    DEFAULT_EXCLUSION_MT
}

impl DemurNumericSpec {
    pub fn new(nu_uw_mhz: f64, b1_mt: f64) -> Self {
        DemurNumericSpec {
            nu_uw_mhz,
            b1_mt,
            t_end_ns: default_t_end(),
            dt_ns: default_dt(),
            window: default_window(),
            pad_factor: default_pad(),
            peak_min_rel: default_min_rel(),
            exclusion_mt: default_exclusion(),
            relaxation: None,
            fit_lines: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemurNumericPoint {
    #[serde(rename = "B0_mT")]
    pub b0_mt: f64,
    pub analytic: DemurPoint,
    /// Spectral line nearest each analytic |ν|; NaN when no line clears the threshold.
    pub nu12_fft: f64,
    pub nu34_fft: f64,
    /// Unpadded resolution 1/T of the spectrum, MHz.
    pub resolution: f64,
    pub nu12_fit: f64,
    pub nu34_fit: f64,
    /// Fitted exponential damping of each line, μs⁻¹.
    pub lambda12: f64,
    pub lambda34: f64,
    pub fit_converged: bool,
}

/// Half-width of the frequency bound around each analytic seed in the two-line fit, MHz.
const FIT_FREQ_HALF_WIDTH: f64 = 3.0;

pub fn demur_numeric_point(sys: &SpinSystem, b0_mt: f64, spec: &DemurNumericSpec) -> Result<DemurNumericPoint> {
    let nu1 = drive_coefficient(sys, spec.b1_mt);
    let analytic = demur_eigenfrequencies_with(sys, b0_mt, spec.nu_uw_mhz, nu1, spec.exclusion_mt)?;
    let seq = templates::demur_cw(spec.b1_mt, spec.nu_uw_mhz, spec.t_end_ns, Geometry::TF);
    let opts = PropagateOptions::rotating(spec.dt_ns).with_sampling(Sampling::BinAverage);
    let relax = spec.relaxation.clone().unwrap_or_else(RelaxationModel::none);
    let p = propagate(&initial_state(Geometry::TF), sys, b0_mt, &seq, &relax, &opts)?;

    let s = fft_spectrum(&p.trace, spec.window, spec.pad_factor)?;
    let peaks = find_peaks(&s, Some((2.0 * s.resolution(), f64::INFINITY)), spec.peak_min_rel);
    let nearest = |f: f64| {
        peaks
            .iter()
            .map(|q| q.freq)
            .min_by(|a, b| (a - f).abs().total_cmp(&(b - f).abs()))
            .unwrap_or(f64::NAN)
    };

    let (f12, f34) = (analytic.nu12_tr.abs(), analytic.nu34_tr.abs());
    let mut point = DemurNumericPoint {
        b0_mt,
        analytic,
        nu12_fft: nearest(f12),
        nu34_fft: nearest(f34),
        resolution: s.resolution(),
        nu12_fit: f64::NAN,
        nu34_fit: f64::NAN,
        lambda12: f64::NAN,
        lambda34: f64::NAN,
        fit_converged: false,
    };
    if !spec.fit_lines {
        return Ok(point);
    }

    // Unit weights: the trace is noiseless, only the curvature scale matters.
    let trace = p.trace.clone().with_sigma(vec![1.0; p.trace.len()])?;
    let model = ModelSpec::new(vec![
        Component::damped_cosine("l12_"),
        Component::damped_cosine("l34_"),
        Component::constant("offset"),
    ]);
    let w = FIT_FREQ_HALF_WIDTH;
    let params = vec![
        ParamSpec::free("l12_amp", 0.4, 0.0, 2.0),
        ParamSpec::free("l12_freq", f12, (f12 - w).max(0.0), f12 + w),
        ParamSpec::free("l12_rate", 1.0, 0.0, 200.0),
        ParamSpec::free("l12_phase", 0.0, -7.0, 7.0),
        ParamSpec::free("l34_amp", 0.4, 0.0, 2.0),
        ParamSpec::free("l34_freq", f34, (f34 - w).max(0.0), f34 + w),
        ParamSpec::free("l34_rate", 5.0, 0.0, 200.0),
        ParamSpec::free("l34_phase", 0.0, -7.0, 7.0),
        ParamSpec::free("offset", 0.0, -1.0, 1.0),
    ];
    let fo = FitOptions { multistart: Some(1), ..FitOptions::default() };
    let r = fit_model(&trace, &model, &params, &fo)?;
    let v = |n: &str| r.value(n).unwrap_or(f64::NAN);
    point.nu12_fit = v("l12_freq");
    point.nu34_fit = v("l34_freq");
    point.lambda12 = v("l12_rate");
    point.lambda34 = v("l34_rate");
    point.fit_converged = r.converged;
    Ok(point)
}

pub fn demur_numeric(sys: &SpinSystem, b0_list: &[f64], spec: &DemurNumericSpec) -> Result<Vec<DemurNumericPoint>> {
    sys.validate()?;
    b0_list.par_iter().map(|&b| demur_numeric_point(sys, b, spec)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undriven_lines_match_static_muon_frequencies() {
        let sys = SpinSystem::silicon_bc();
        let p = demur_numeric_point(&sys, 139.3, &DemurNumericSpec { t_end_ns: 2000.0, ..DemurNumericSpec::new(3900.0, 0.0) }).unwrap();
        let (w12, w34) = sys.muon_frequencies_closed_form(139.3);
        assert!((p.nu12_fft - w12.abs()).abs() < 0.05, "{} vs {w12}", p.nu12_fft);
        assert!((p.nu34_fft - w34.abs()).abs() < 0.05, "{} vs {w34}", p.nu34_fft);
        assert!(p.lambda12 < 1e-3 && p.lambda34 < 1e-3);
    }

    #[test]
    fn muon_dephasing_rates_recovered_off_resonance() {
        let sys = SpinSystem::silicon_bc();
        let mut spec = DemurNumericSpec::new(3900.0, 0.0);
        spec.t_end_ns = 3000.0;
        spec.relaxation = Some(RelaxationModel::electron_muon(0.0, 0.95, 5.0));
        let p = demur_numeric_point(&sys, 139.3, &spec).unwrap();
        assert!((p.lambda12 - 0.95).abs() < 0.01, "{}", p.lambda12);
        assert!((p.lambda34 - 5.0).abs() < 0.05, "{}", p.lambda34);
    }
}
