//! Fourier spectra of simulated traces, numerical DEMUR lines, Rabi-frequency maps and
//! inhomogeneous narrowing.

pub mod demur;
pub mod narrowing;
pub mod rabi_map;

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::AsymmetryTrace;
use crate::error::{invalid, Result};

pub use demur::{demur_numeric, demur_numeric_point, DemurNumericPoint, DemurNumericSpec};
pub use narrowing::{narrowing_fwhm, narrowing_fwhm_map, rabi_damping_vs_drive, DampingOptions, DampingPoint, NarrowingMap};
pub use rabi_map::{oscillation_amplitude, rabi_map, RabiMap, RabiMapSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    Hann,
}

impl Window {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            // Periodic form; its bins fall exactly on the unpadded grid.
            Window::Hann => (0..n)
                .map(|k| 0.5 - 0.5 * (std::f64::consts::TAU * k as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// One-sided magnitude spectrum. A cosine of amplitude a reads a at its bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// MHz, from 0 to the Nyquist frequency.
    pub freqs: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub window: Window,
    pub pad_factor: usize,
    pub detrended: bool,
    pub dt_ns: f64,
    pub n_samples: usize,
    /// Σ of the window weights, which fixes the magnitude scale.
    pub window_sum: f64,
    /// Σ (w·x)² of the windowed, detrended samples.
    pub time_energy: f64,
}

impl Spectrum {
    /// Padded bin spacing, MHz.
    pub fn bin_width(&self) -> f64 {
        self.freqs.get(1).copied().unwrap_or(0.0)
    }

    /// Unpadded resolution 1/T, MHz.
    pub fn resolution(&self) -> f64 {
        1e3 / (self.n_samples as f64 * self.dt_ns)
    }

    /// Energy recovered from the one-sided magnitudes; equals `time_energy` by Parseval.
    pub fn energy(&self) -> f64 {
        let n_fft = self.n_samples * self.pad_factor;
        let last = self.magnitude.len() - 1;
        let mut s = 0.0;
        for (k, &m) in self.magnitude.iter().enumerate() {
            let edge = k == 0 || (n_fft.is_multiple_of(2) && k == last);
            s += if edge {
                (m * self.window_sum).powi(2)
            } else {
                2.0 * (0.5 * m * self.window_sum).powi(2)
            };
        }
        s / n_fft as f64
    }
}

/// Mean-removed, windowed, zero-padded magnitude spectrum of a uniformly sampled trace.
pub fn fft_spectrum(trace: &AsymmetryTrace, window: Window, pad_factor: usize) -> Result<Spectrum> {
    trace.validate()?;
    if trace.len() < 4 {
        return Err(invalid("spectrum needs at least 4 samples"));
    }
    if pad_factor == 0 {
        return Err(invalid("pad factor must be >= 1"));
    }
    let dt = trace.uniform_step().ok_or_else(|| invalid("spectrum needs a uniform time grid"))?;
    let n = trace.len();
    let mean = trace.mean();
    let w = window.weights(n);
    let window_sum: f64 = w.iter().sum();
    let n_fft = n * pad_factor;
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut time_energy = 0.0;
    for k in 0..n {
        let v = w[k] * (trace.values[k] - mean);
        time_energy += v * v;
        buf[k] = Complex::new(v, 0.0);
    }
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    let half = n_fft / 2;
    let df = 1e3 / (n_fft as f64 * dt);
    let freqs = (0..=half).map(|k| k as f64 * df).collect();
    let magnitude = (0..=half)
        .map(|k| {
            let edge = k == 0 || (n_fft.is_multiple_of(2) && k == half);
            let scale = if edge { 1.0 } else { 2.0 };
            scale * buf[k].norm() / window_sum
        })
        .collect();
    Ok(Spectrum {
        freqs,
        magnitude,
        window,
        pad_factor,
        detrended: true,
        dt_ns: dt,
        n_samples: n,
        window_sum,
        time_energy,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub freq: f64,
    pub magnitude: f64,
}

/// Vertex of the parabola through three equally spaced samples, as an offset in bins.
fn vertex(a: f64, b: f64, c: f64) -> f64 {
    let den = a - 2.0 * b + c;
    if den.abs() < 1e-300 {
        0.0
    } else {
        (0.5 * (a - c) / den).clamp(-0.5, 0.5)
    }
}

fn refine(s: &Spectrum, k: usize) -> Peak {
    let m = &s.magnitude;
    if k == 0 || k + 1 >= m.len() {
        return Peak { freq: s.freqs[k], magnitude: m[k] };
    }
    let (a, b, c) = (m[k - 1], m[k], m[k + 1]);
    // Parabola in log magnitude is exact for Gaussian-like main lobes and close for Hann.
    let tiny = 1e-9 * b;
    let (d, mag) = if a <= tiny || c <= tiny {
        (0.0, b)
    } else if a > 0.0 && c > 0.0 {
        let (la, lb, lc) = (a.ln(), b.ln(), c.ln());
        let d = vertex(la, lb, lc);
        (d, (lb - 0.25 * (la - lc) * d).exp())
    } else {
        let d = vertex(a, b, c);
        (d, b - 0.25 * (a - c) * d)
    };
    Peak { freq: s.freqs[k] + d * s.bin_width(), magnitude: mag }
}

/// Local maxima inside `band` (MHz, inclusive) with magnitude ≥ `min_rel` × the band maximum,
/// strongest first, positions refined by parabolic interpolation.
pub fn find_peaks(s: &Spectrum, band: Option<(f64, f64)>, min_rel: f64) -> Vec<Peak> {
    let (lo, hi) = band.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let m = &s.magnitude;
    let inside: Vec<usize> = (0..m.len()).filter(|&k| s.freqs[k] >= lo && s.freqs[k] <= hi).collect();
    let top = inside.iter().map(|&k| m[k]).fold(0.0, f64::max);
    if top <= 0.0 {
        return Vec::new();
    }
    let mut out: Vec<Peak> = inside
        .iter()
        .copied()
        .filter(|&k| {
            let left = k == 0 || m[k] > m[k - 1];
            let right = k + 1 == m.len() || m[k] >= m[k + 1];
            left && right && m[k] >= min_rel * top
        })
        .map(|k| refine(s, k))
        .collect();
    out.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    out
}

/// Strongest local maximum in `band`; excludes the lowest 2/T where the removed mean leaks.
pub fn dominant_peak(s: &Spectrum, band: Option<(f64, f64)>) -> Option<Peak> {
    let floor = 2.0 * s.resolution();
    let (lo, hi) = band.unwrap_or((floor, f64::INFINITY));
    find_peaks(s, Some((lo.max(floor), hi)), 0.0).into_iter().next()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn tone(f: f64, n: usize, dt: f64) -> AsymmetryTrace {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let v = t.iter().map(|&x| 0.4 + 0.3 * (TAU * f * x * 1e-3 + 0.7).cos()).collect();
        AsymmetryTrace::new(t, v).unwrap()
    }

    #[test]
    fn on_bin_cosine_reads_its_amplitude() {
        let s = fft_spectrum(&tone(10.0, 1000, 1.0), Window::Rectangular, 1).unwrap();
        let p = dominant_peak(&s, None).unwrap();
        assert!((p.freq - 10.0).abs() < 1e-9);
        assert!((p.magnitude - 0.3).abs() < 1e-9);
    }

    #[test]
    fn constant_trace_has_zero_spectrum() {
        let t: Vec<f64> = (0..64).map(|k| k as f64).collect();
        let s = fft_spectrum(&AsymmetryTrace::new(t, vec![0.7; 64]).unwrap(), Window::Hann, 4).unwrap();
        assert!(s.magnitude.iter().all(|&m| m < 1e-12));
        assert!(dominant_peak(&s, None).map(|p| p.magnitude < 1e-12).unwrap_or(true));
    }

    #[test]
    fn off_bin_tone_within_a_tenth_of_a_bin() {
        for f in [7.13, 7.39, 12.777, 31.05] {
            let s = fft_spectrum(&tone(f, 1500, 1.0), Window::Hann, 8).unwrap();
            let p = dominant_peak(&s, None).unwrap();
            assert!((p.freq - f).abs() < 0.1 * s.bin_width(), "{f}: {}", p.freq);
        }
    }

    #[test]
    fn parseval_holds_for_all_windows_and_padding() {
        let tr = tone(9.3, 777, 0.5);
        for w in [Window::Rectangular, Window::Hann] {
            for pad in [1, 3, 8] {
                let s = fft_spectrum(&tr, w, pad).unwrap();
                assert!((s.energy() - s.time_energy).abs() <= 1e-9 * s.time_energy);
            }
        }
    }

    #[test]
    fn non_uniform_grid_rejected() {
        let tr = AsymmetryTrace::new(vec![0.0, 1.0, 2.0, 3.5, 4.0], vec![0.0; 5]).unwrap();
        assert!(fft_spectrum(&tr, Window::Hann, 1).is_err());
    }
}
