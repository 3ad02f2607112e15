use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::constants::{GAMMA_MU_MHZ_PER_T, TWO_PI};
use crate::error::{invalid, Result};

/// One additive term of an asymmetry model. Fields hold parameter names; parameters with the
/// same name are shared between components. Time in ns, frequencies in MHz, rates in μs⁻¹,
/// lifetimes in μs, phases in rad.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Component {
    /// A·exp(−λt)·cos(2πνt + φ).
    DampedCosine { amp: String, freq: String, rate: String, phase: String },
    /// A·exp(−t/τ)·cos(2πνt + φ).
    DampedCosineTau { amp: String, freq: String, tau: String, phase: String },
    Constant { amp: String },
    /// A·exp(−λt).
    ExpDecay { amp: String, rate: String },
    /// Damped precession at the muon frequency of one electron manifold of an axial centre,
    /// computed from (A_par, A_perp) at a fixed field.
    MuonPrecession {
        amp: String,
        rate: String,
        phase: String,
        a_par: String,
        a_perp: String,
        #[serde(rename = "B0_mT")]
        b0_mt: f64,
        /// +1 for the upper manifold (ν₁₂), −1 for the lower (ν₃₄).
        manifold: i8,
    },
}

impl Component {
    pub fn damped_cosine(prefix: &str) -> Self {
        Component::DampedCosine {
            amp: format!("{prefix}amp"),
            freq: format!("{prefix}freq"),
            rate: format!("{prefix}rate"),
            phase: format!("{prefix}phase"),
        }
    }

    pub fn constant(name: &str) -> Self {
        Component::Constant { amp: name.to_string() }
    }

    fn names(&self) -> Vec<&str> {
        match self {
            Component::DampedCosine { amp, freq, rate, phase } => vec![amp, freq, rate, phase],
            Component::DampedCosineTau { amp, freq, tau, phase } => vec![amp, freq, tau, phase],
            Component::Constant { amp } => vec![amp],
            Component::ExpDecay { amp, rate } => vec![amp, rate],
            Component::MuonPrecession { amp, rate, phase, a_par, a_perp, .. } => vec![amp, rate, phase, a_par, a_perp],
        }
    }
}

/// Sum of components evaluated at t − origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub components: Vec<Component>,
    #[serde(default, rename = "origin_ns")]
    pub origin: f64,
}

impl ModelSpec {
    pub fn new(components: Vec<Component>) -> Self {
        ModelSpec { components, origin: 0.0 }
    }

    pub fn with_origin(mut self, t0: f64) -> Self {
        self.origin = t0;
        self
    }

    /// Damped cosine plus constant offset, parameters amp/freq/rate/phase/offset.
    pub fn damped_cosine_with_offset() -> Self {
        Self::new(vec![Component::damped_cosine(""), Component::constant("offset")])
    }

    /// Parameter names in order of first appearance.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.components {
            for n in c.names() {
                if !out.iter().any(|o| o == n) {
                    out.push(n.to_string());
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(invalid("model has no components"));
        }
        if !self.origin.is_finite() {
            return Err(invalid("model origin must be finite"));
        }
        for c in &self.components {
            if let Component::MuonPrecession { b0_mt, manifold, .. } = c {
                if !b0_mt.is_finite() || !(*manifold == 1 || *manifold == -1) {
                    return Err(invalid("muon precession needs finite B0 and manifold ±1"));
                }
            }
            if c.names().iter().any(|n| n.is_empty()) {
                return Err(invalid("empty parameter name"));
            }
        }
        Ok(())
    }

    /// Resolves parameter names to indices into `names`.
    pub fn compile(&self, names: &[String]) -> Result<CompiledModel> {
        self.validate()?;
        let map: HashMap<&str, usize> = names.iter().enumerate().map(|(k, n)| (n.as_str(), k)).collect();
        let idx = |n: &String| map.get(n.as_str()).copied().ok_or_else(|| invalid(format!("parameter '{n}' not supplied")));
        let mut terms = Vec::with_capacity(self.components.len());
        for c in &self.components {
            terms.push(match c {
                Component::DampedCosine { amp, freq, rate, phase } => Term::Cos {
                    amp: idx(amp)?,
                    freq: idx(freq)?,
                    decay: Decay::Rate(idx(rate)?),
                    phase: idx(phase)?,
                },
                Component::DampedCosineTau { amp, freq, tau, phase } => Term::Cos {
                    amp: idx(amp)?,
                    freq: idx(freq)?,
                    decay: Decay::Tau(idx(tau)?),
                    phase: idx(phase)?,
                },
                Component::Constant { amp } => Term::Const(idx(amp)?),
                Component::ExpDecay { amp, rate } => Term::Exp { amp: idx(amp)?, rate: idx(rate)? },
                Component::MuonPrecession { amp, rate, phase, a_par, a_perp, b0_mt, manifold } => Term::Muon {
                    amp: idx(amp)?,
                    rate: idx(rate)?,
                    phase: idx(phase)?,
                    a_par: idx(a_par)?,
                    a_perp: idx(a_perp)?,
                    nu_i: GAMMA_MU_MHZ_PER_T * 1e-3 * b0_mt,
                    sign: *manifold as f64,
                },
            });
        }
        Ok(CompiledModel { terms, origin: self.origin })
    }
}

#[derive(Clone, Copy, Debug)]
enum Decay {
    Rate(usize),
    Tau(usize),
}

#[derive(Clone, Copy, Debug)]
enum Term {
    Cos { amp: usize, freq: usize, decay: Decay, phase: usize },
    Const(usize),
    Exp { amp: usize, rate: usize },
    Muon { amp: usize, rate: usize, phase: usize, a_par: usize, a_perp: usize, nu_i: f64, sign: f64 },
}

#[derive(Clone, Debug)]
pub struct CompiledModel {
    terms: Vec<Term>,
    origin: f64,
}

/// Muon precession frequency of one manifold: |(±A_perp/2, −ν_I ± A_par/2)|.
pub fn muon_frequency(a_par: f64, a_perp: f64, nu_i: f64, sign: f64) -> f64 {
    (0.5 * a_perp).hypot(-nu_i + sign * 0.5 * a_par)
}

impl CompiledModel {
    pub fn eval(&self, p: &[f64], t_ns: f64) -> f64 {
        let t = (t_ns - self.origin) * 1e-3;
        let mut s = 0.0;
        for term in &self.terms {
            s += match *term {
                Term::Cos { amp, freq, decay, phase } => {
                    let d = match decay {
                        Decay::Rate(r) => (-p[r] * t).exp(),
                        Decay::Tau(k) => (-t / p[k]).exp(),
                    };
                    p[amp] * d * (TWO_PI * p[freq] * t + p[phase]).cos()
                }
                Term::Const(a) => p[a],
                Term::Exp { amp, rate } => p[amp] * (-p[rate] * t).exp(),
                Term::Muon { amp, rate, phase, a_par, a_perp, nu_i, sign } => {
                    let nu = muon_frequency(p[a_par], p[a_perp], nu_i, sign);
                    p[amp] * (-p[rate] * t).exp() * (TWO_PI * nu * t + p[phase]).cos()
                }
            };
        }
        s
    }
}
