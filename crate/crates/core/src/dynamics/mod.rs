//! Density-matrix propagation through microwave pulse sequences.

pub mod ensemble;
pub mod propagate;
pub mod relaxation;
pub mod sequence;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::operators::{self as ops, real, OperatorMatrix};

pub use ensemble::{ensemble_average, ensemble_average_with, gauss_hermite, Broadening};
pub use propagate::{propagate, Frame, PropagateOptions, Propagation, Sampling};
pub use relaxation::{apply_relaxation_basis, RelaxationModel};
pub use sequence::{templates, PulseSegment, PulseSequence};
pub use synth::{synth_decay_histograms, Histograms, SynthParams};

/// LF observes the muon polarization along B₀, TF perpendicular to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Geometry {
    LF,
    TF,
}

/// Time-stamped observable with optional per-point standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl AsymmetryTrace {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let t = AsymmetryTrace { times, values, sigma: None };
        t.validate()?;
        Ok(t)
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != self.times.len() {
            return Err(invalid("sigma length differs from time grid"));
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(invalid("times and values differ in length"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("times must be strictly increasing"));
        }
        if let Some(s) = &self.sigma {
            if s.len() != self.times.len() {
                return Err(invalid("sigma length differs from time grid"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Grid spacing if uniform to 1e-6 relative.
    pub fn uniform_step(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let dt = (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64;
        let ok = self.times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt.abs());
        if ok {
            Some(dt)
        } else {
            None
        }
    }

    /// Points with t in [t0, t1).
    pub fn window(&self, t0: f64, t1: f64) -> AsymmetryTrace {
        let idx: Vec<usize> = (0..self.len()).filter(|&k| self.times[k] >= t0 && self.times[k] < t1).collect();
        AsymmetryTrace {
            times: idx.iter().map(|&k| self.times[k]).collect(),
            values: idx.iter().map(|&k| self.values[k]).collect(),
            sigma: self.sigma.as_ref().map(|s| idx.iter().map(|&k| s[k]).collect()),
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }
}

/// ρ₀ with the muon fully polarized along z (LF) or x (TF) and the electron unpolarized.
pub fn initial_state(geometry: Geometry) -> OperatorMatrix {
    initial_state_polarized(geometry, 1.0)
}

/// ρ₀ = ¼·1 + (p/2)·I_axis for muon polarization p ∈ [−1, 1].
pub fn initial_state_polarized(geometry: Geometry, p: f64) -> OperatorMatrix {
    let axis = match geometry {
        Geometry::LF => ops::iz(),
        Geometry::TF => ops::ix(),
    };
    ops::identity() * real(0.25) + axis * real(0.5 * p)
}
