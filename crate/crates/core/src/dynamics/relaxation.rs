use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::constants::{PER_US_TO_PER_NS, TWO_PI};
use crate::error::{invalid, Result};
use crate::operators::{kron4, real, OperatorMatrix, C64, I};
use crate::spinsys::LevelDiagram;

pub type Liouvillian = SMatrix<C64, 16, 16>;

/// Phenomenological relaxation in the static eigenbasis. Rates in μs⁻¹.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RelaxationModel {
    /// rates[i][j] damps the coherence between levels i+1 and j+1; kept symmetric.
    pub rates: [[f64; 4]; 4],
    /// Uniform relaxation of the whole density matrix towards the maximally mixed state.
    pub rate_t1: f64,
}

impl RelaxationModel {
    pub fn none() -> Self {
        Self::default()
    }

    /// Sets the dephasing rate of the (i, j) coherence, labels 1-based.
    pub fn with_rate(mut self, i: usize, j: usize, rate: f64) -> Self {
        self.rates[i - 1][j - 1] = rate;
        self.rates[j - 1][i - 1] = rate;
        self
    }

    pub fn with_t1(mut self, rate: f64) -> Self {
        self.rate_t1 = rate;
        self
    }

    /// Electron dephasing on (1,3), (2,4), (1,4), (2,3) and muon dephasing on (1,2), (3,4).
    pub fn electron_muon(electron: f64, muon12: f64, muon34: f64) -> Self {
        Self::none()
            .with_rate(1, 3, electron)
            .with_rate(2, 4, electron)
            .with_rate(1, 4, electron)
            .with_rate(2, 3, electron)
            .with_rate(1, 2, muon12)
            .with_rate(3, 4, muon34)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            for j in 0..4 {
                let r = self.rates[i][j];
                if !r.is_finite() || r < 0.0 {
                    return Err(invalid(format!("relaxation rate ({},{}) = {r}", i + 1, j + 1)));
                }
                if (r - self.rates[j][i]).abs() > 0.0 {
                    return Err(invalid("relaxation rates must be symmetric"));
                }
            }
        }
        if !self.rate_t1.is_finite() || self.rate_t1 < 0.0 {
            return Err(invalid(format!("T1 rate = {}", self.rate_t1)));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.rate_t1 == 0.0 && self.rates.iter().flatten().all(|&r| r == 0.0)
    }

    /// Exact action of the pure damping over `t_ns` on a density matrix, given the static
    /// eigenbasis. Dephasing and uniform T1 commute, so the map factorizes per element.
    pub fn apply_damping(&self, rho: &OperatorMatrix, basis: &OperatorMatrix, t_ns: f64) -> OperatorMatrix {
        let mut s = basis.adjoint() * rho * basis;
        let r1 = self.rate_t1 * PER_US_TO_PER_NS;
        let e1 = (-r1 * t_ns).exp();
        let tr = s.trace();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    s[(i, i)] = s[(i, i)] * e1 + tr * (0.25 * (1.0 - e1));
                } else {
                    let r = self.rates[i][j] * PER_US_TO_PER_NS + r1;
                    s[(i, j)] *= (-r * t_ns).exp();
                }
            }
        }
        basis * s * basis.adjoint()
    }
}

/// Damping superoperator (ns⁻¹) in the product basis, row-major vectorization.
/// `diagram` supplies the static eigenbasis in which the rates are defined.
pub fn apply_relaxation_basis(relax: &RelaxationModel, diagram: &LevelDiagram) -> Liouvillian {
    damping_superoperator(relax, &diagram.eigenvectors)
}

pub(crate) fn damping_superoperator(relax: &RelaxationModel, basis: &OperatorMatrix) -> Liouvillian {
    let mut diag = Liouvillian::zeros();
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                diag[(4 * i + j, 4 * i + j)] = real(-relax.rates[i][j] * PER_US_TO_PER_NS);
            }
        }
    }
    // ρ_s = W†ρW  ⇔  vec ρ_s = (W† ⊗ Wᵀ) vec ρ
    let to_s = kron4(&basis.adjoint(), &basis.transpose());
    let from_s = kron4(basis, &basis.map(|z| z.conj()));
    let mut d = from_s * diag * to_s;
    if relax.rate_t1 > 0.0 {
        let r1 = relax.rate_t1 * PER_US_TO_PER_NS;
        let mut t1 = Liouvillian::identity() * real(-r1);
        // + r1·Tr(ρ)·I/4
        for a in 0..4 {
            for b in 0..4 {
                t1[(4 * a + a, 4 * b + b)] += real(0.25 * r1);
            }
        }
        d += t1;
    }
    d
}

/// −i2π[H, ·] in ns⁻¹ for H in MHz.
pub fn hamiltonian_superoperator(h: &OperatorMatrix) -> Liouvillian {
    let id = OperatorMatrix::identity();
    (kron4(h, &id) - kron4(&id, &h.transpose())) * (-I * (TWO_PI * 1e-3))
}
