//! Product-operator algebra for one electron spin and one muon spin.
//!
//! Basis order is |m_S, m_I⟩ = |++⟩, |+−⟩, |−+⟩, |−−⟩.

use nalgebra::{Matrix2, Matrix4, SMatrix};
use num_complex::Complex64;

pub type C64 = Complex64;

/// 4×4 complex matrix in the product basis. Holds Hamiltonians (MHz) and density matrices.
pub type OperatorMatrix = Matrix4<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

fn pauli_half(which: char) -> Matrix2<C64> {
    let h = C64::new(0.5, 0.0);
    match which {
        'x' => Matrix2::new(ZERO, h, h, ZERO),
        'y' => Matrix2::new(ZERO, -I * 0.5, I * 0.5, ZERO),
        'z' => Matrix2::new(h, ZERO, ZERO, -h),
        _ => Matrix2::identity(),
    }
}

pub fn kron(a: &Matrix2<C64>, b: &Matrix2<C64>) -> OperatorMatrix {
    let mut out = OperatorMatrix::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn identity() -> OperatorMatrix {
    OperatorMatrix::identity()
}

pub fn sx() -> OperatorMatrix {
    kron(&pauli_half('x'), &Matrix2::identity())
}
pub fn sy() -> OperatorMatrix {
    kron(&pauli_half('y'), &Matrix2::identity())
}
pub fn sz() -> OperatorMatrix {
    kron(&pauli_half('z'), &Matrix2::identity())
}
pub fn ix() -> OperatorMatrix {
    kron(&Matrix2::identity(), &pauli_half('x'))
}
pub fn iy() -> OperatorMatrix {
    kron(&Matrix2::identity(), &pauli_half('y'))
}
pub fn iz() -> OperatorMatrix {
    kron(&Matrix2::identity(), &pauli_half('z'))
}

/// Scalar coupling S·I.
pub fn s_dot_i() -> OperatorMatrix {
    sx() * ix() + sy() * iy() + sz() * iz()
}

pub fn dagger(m: &OperatorMatrix) -> OperatorMatrix {
    m.adjoint()
}

pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    a * b - b * a
}

/// Frobenius norm.
pub fn norm(m: &OperatorMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn hermiticity_defect(m: &OperatorMatrix) -> f64 {
    norm(&(m - m.adjoint()))
}

/// True when ‖H − H†‖ ≤ tol·max(‖H‖, 1e-300).
pub fn is_hermitian(m: &OperatorMatrix, rel_tol: f64) -> bool {
    hermiticity_defect(m) <= rel_tol * norm(m).max(1e-300)
}

pub fn trace(m: &OperatorMatrix) -> C64 {
    m.trace()
}

/// Re Tr(ρ O).
pub fn expect(rho: &OperatorMatrix, op: &OperatorMatrix) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        for k in 0..4 {
            acc += (rho[(i, k)] * op[(k, i)]).re;
        }
    }
    acc
}

pub fn purity(rho: &OperatorMatrix) -> f64 {
    expect(rho, rho)
}

/// Eigenvalues of the Hermitian part, ascending.
pub fn hermitian_eigenvalues(m: &OperatorMatrix) -> [f64; 4] {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    [ev[0], ev[1], ev[2], ev[3]]
}

/// Checks the density-matrix invariants: Hermitian, unit trace, positive semidefinite.
pub fn check_density(rho: &OperatorMatrix) -> Result<(), String> {
    if hermiticity_defect(rho) > 1e-10 {
        return Err(format!("density matrix not Hermitian (defect {:e})", hermiticity_defect(rho)));
    }
    let tr = trace(rho);
    if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
        return Err(format!("density matrix trace {tr} != 1"));
    }
    let ev = hermitian_eigenvalues(rho);
    if ev[0] < -1e-10 {
        return Err(format!("density matrix has negative eigenvalue {:e}", ev[0]));
    }
    Ok(())
}

/// exp(−i·2π·H·t) for Hermitian H in MHz and t in ns×1e-3 (i.e. t in μs).
pub fn unitary_from_hermitian(h: &OperatorMatrix, t_us: f64) -> OperatorMatrix {
    let eig = h.symmetric_eigen();
    let v = eig.eigenvectors;
    let mut d = OperatorMatrix::zeros();
    for k in 0..4 {
        let ph = -std::f64::consts::TAU * eig.eigenvalues[k] * t_us;
        d[(k, k)] = C64::new(ph.cos(), ph.sin());
    }
    v * d * v.adjoint()
}

/// exp(−i·angle·G) for Hermitian generator G.
pub fn rotation(generator: &OperatorMatrix, angle: f64) -> OperatorMatrix {
    unitary_from_hermitian(generator, angle / std::f64::consts::TAU)
}

/// Row-major vectorization: index a*4+b holds ρ[a,b].
pub fn vec_rowmajor(m: &OperatorMatrix) -> SMatrix<C64, 16, 1> {
    let mut v = SMatrix::<C64, 16, 1>::zeros();
    for a in 0..4 {
        for b in 0..4 {
            v[a * 4 + b] = m[(a, b)];
        }
    }
    v
}

pub fn unvec_rowmajor(v: &SMatrix<C64, 16, 1>) -> OperatorMatrix {
    let mut m = OperatorMatrix::zeros();
    for a in 0..4 {
        for b in 0..4 {
            m[(a, b)] = v[a * 4 + b];
        }
    }
    m
}

/// Kronecker product of two 4×4 matrices, 16×16.
pub fn kron4(a: &OperatorMatrix, b: &OperatorMatrix) -> SMatrix<C64, 16, 16> {
    let mut out = SMatrix::<C64, 16, 16>::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..4 {
                for l in 0..4 {
                    out[(4 * i + k, 4 * j + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spin_commutation_relations() {
        let lhs = commutator(&sx(), &sy());
        assert!(norm(&(lhs - sz() * I)) < 1e-15);
        let lhs = commutator(&ix(), &iy());
        assert!(norm(&(lhs - iz() * I)) < 1e-15);
        assert!(norm(&commutator(&sx(), &ix())) < 1e-15);
    }

    #[test]
    fn basis_order_puts_electron_first() {
        let z = sz();
        assert_eq!(z[(0, 0)].re, 0.5);
        assert_eq!(z[(1, 1)].re, 0.5);
        assert_eq!(z[(2, 2)].re, -0.5);
        let m = iz();
        assert_eq!(m[(1, 1)].re, -0.5);
        assert_eq!(m[(2, 2)].re, 0.5);
    }

    #[test]
    fn s_dot_i_spectrum_is_triplet_singlet() {
        let ev = hermitian_eigenvalues(&s_dot_i());
        assert!((ev[0] + 0.75).abs() < 1e-12);
        for e in &ev[1..] {
            assert!((e - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn vec_roundtrip_and_kron_action() {
        let a = sx() + iy() * real(0.3);
        let b = sz() * iz() + ix();
        let x = sy() + identity() * real(0.1);
        // vec(A X B) = (A ⊗ Bᵀ) vec(X) for row-major vectorization
        let lhs = vec_rowmajor(&(a * x * b));
        let rhs = kron4(&a, &b.transpose()) * vec_rowmajor(&x);
        assert!((lhs - rhs).norm() < 1e-14);
        assert_eq!(unvec_rowmajor(&vec_rowmajor(&x)), x);
    }

    #[test]
    fn rotation_about_sz_turns_sx_into_sy() {
        let u = rotation(&sz(), std::f64::consts::FRAC_PI_2);
        let r = u * sx() * u.adjoint();
        assert!(norm(&(r - sy())) < 1e-12);
    }
}
