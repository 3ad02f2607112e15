//! Physical constants in the units used across the crate: MHz, mT, ns.

/// Bohr magneton over Planck constant, MHz/mT.
pub const MU_B_MHZ_PER_MT: f64 = 13.996245;

/// Muon gyromagnetic ratio over 2π, MHz/T.
pub const GAMMA_MU_MHZ_PER_T: f64 = 135.5388;

/// Free-electron g-factor magnitude.
pub const G_FREE_ELECTRON: f64 = 2.0023193;

/// Muon lifetime, ns.
pub const MUON_LIFETIME_NS: f64 = 2197.0;

/// Converts ns·MHz products into cycles.
pub const NS_MHZ: f64 = 1e-3;

/// Relaxation rates are quoted in μs⁻¹; multiply by this to get ns⁻¹.
pub const PER_US_TO_PER_NS: f64 = 1e-3;

pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Converts a Gaussian FWHM into its standard deviation.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}
