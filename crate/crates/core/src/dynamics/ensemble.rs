//! Quadrature averages over inhomogeneous distributions of the electron offset or of B₁.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::fwhm_to_sigma;
use crate::error::{invalid, Result};

use super::AsymmetryTrace;

/// Nodes and weights of the n-point Gauss–Hermite rule for a standard normal density,
/// from the Golub–Welsch eigenproblem. Weights sum to 1; nodes ascend.
pub fn gauss_hermite(n: usize) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(invalid("quadrature needs at least one node"));
    }
    if n == 1 {
        return Ok(vec![(0.0, 1.0)]);
    }
    // Jacobi matrix of the probabilists' Hermite recurrence.
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = j.symmetric_eigen();
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = rule.iter().map(|r| r.1).sum();
    for r in &mut rule {
        r.1 /= total;
    }
    // Symmetrize so the centre node is exactly 0 for odd n.
    for k in 0..n / 2 {
        let x = 0.5 * (rule[n - 1 - k].0 - rule[k].0);
        let w = 0.5 * (rule[n - 1 - k].1 + rule[k].1);
        rule[k] = (-x, w);
        rule[n - 1 - k] = (x, w);
    }
    if n % 2 == 1 {
        rule[n / 2].0 = 0.0;
    }
    Ok(rule)
}

/// Distribution of a parameter around its nominal value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Broadening {
    /// Gaussian with the given full width at half maximum, in the parameter's units.
    Gaussian { fwhm: f64 },
    /// Values x₀ + h·cos(πu) with u uniform on [0, 1]: the arcsine law of a standing-wave
    /// field profile sampled uniformly in space.
    Sinusoidal { half_range: f64 },
}

impl Broadening {
    /// Offsets from the nominal value and their weights (summing to 1).
    pub fn nodes(&self, n: usize) -> Result<Vec<(f64, f64)>> {
        if n == 0 || n.is_multiple_of(2) {
            return Err(invalid(format!("quadrature size must be odd and >= 1, got {n}")));
        }
        match *self {
            Broadening::Gaussian { fwhm } => {
                if !(fwhm.is_finite() && fwhm >= 0.0) {
                    return Err(invalid(format!("FWHM must be >= 0, got {fwhm}")));
                }
                let s = fwhm_to_sigma(fwhm);
                Ok(gauss_hermite(n)?.into_iter().map(|(x, w)| (s * x, w)).collect())
            }
            Broadening::Sinusoidal { half_range } => {
                if !(half_range.is_finite() && half_range >= 0.0) {
                    return Err(invalid(format!("half range must be >= 0, got {half_range}")));
                }
                // Gauss–Chebyshev: exact for the arcsine density.
                let w = 1.0 / n as f64;
                Ok((0..n)
                    .map(|k| {
                        let x = ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos();
                        (-half_range * x, w)
                    })
                    .collect())
            }
        }
    }
}

/// Weighted average of `simulate(offset)` over the Gaussian offset distribution. Nodes run
/// in parallel; the reduction order is fixed so the result is scheduling independent.
pub fn ensemble_average<F>(fwhm: f64, n_points: usize, simulate: F) -> Result<AsymmetryTrace>
where
    F: Fn(f64) -> Result<AsymmetryTrace> + Sync,
{
    ensemble_average_with(&Broadening::Gaussian { fwhm }, n_points, simulate)
}

pub fn ensemble_average_with<F>(dist: &Broadening, n_points: usize, simulate: F) -> Result<AsymmetryTrace>
where
    F: Fn(f64) -> Result<AsymmetryTrace> + Sync,
{
    let nodes = dist.nodes(n_points)?;
    let traces: Vec<AsymmetryTrace> = nodes.par_iter().map(|&(x, _)| simulate(x)).collect::<Result<_>>()?;
    let first = &traces[0];
    let mut values = vec![0.0; first.len()];
    for ((_, w), tr) in nodes.iter().zip(&traces) {
        if tr.times != first.times {
            return Err(invalid("ensemble members returned different time grids"));
        }
        for (acc, v) in values.iter_mut().zip(&tr.values) {
            *acc += w * v;
        }
    }
    Ok(AsymmetryTrace { times: first.times.clone(), values, sigma: None })
}
