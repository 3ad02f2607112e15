//! Static spin Hamiltonians, level diagrams and transition tables.

use serde::{Deserialize, Serialize};

use crate::constants::{GAMMA_MU_MHZ_PER_T, MU_B_MHZ_PER_MT};
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::operators::{self as ops, real, OperatorMatrix, C64};

/// Hyperfine coupling in MHz.
///
/// An axial tensor with `a_perp = 0` keeps only the secular S_zI_z term and is therefore
/// not the same Hamiltonian as the isotropic contact coupling A·S·I.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Hyperfine {
    Isotropic {
        #[serde(rename = "A_iso_MHz")]
        a_iso: f64,
    },
    Axial {
        #[serde(rename = "A_par_MHz")]
        a_par: f64,
        #[serde(rename = "A_perp_MHz")]
        a_perp: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSystem {
    pub g_e: f64,
    /// Muon gyromagnetic ratio over 2π, MHz/T.
    #[serde(rename = "gamma_mu_MHz_per_T", default = "default_gamma_mu")]
    pub gamma_mu: f64,
    /// Bohr magneton over h, MHz/mT.
    #[serde(rename = "mu_B_MHz_per_mT", default = "default_mu_b")]
    pub mu_b: f64,
    pub hyperfine: Hyperfine,
}

fn default_gamma_mu() -> f64 {
    GAMMA_MU_MHZ_PER_T
}
fn default_mu_b() -> f64 {
    MU_B_MHZ_PER_MT
}

impl SpinSystem {
    pub fn isotropic(g_e: f64, a_iso: f64) -> Self {
        SpinSystem {
            g_e,
            gamma_mu: GAMMA_MU_MHZ_PER_T,
            mu_b: MU_B_MHZ_PER_MT,
            hyperfine: Hyperfine::Isotropic { a_iso },
        }
    }

    pub fn axial(g_e: f64, a_par: f64, a_perp: f64) -> Self {
        SpinSystem {
            g_e,
            gamma_mu: GAMMA_MU_MHZ_PER_T,
            mu_b: MU_B_MHZ_PER_MT,
            hyperfine: Hyperfine::Axial { a_par, a_perp },
        }
    }

    /// Bond-centred muonium in silicon at the literature hyperfine values.
    pub fn silicon_bc() -> Self {
        Self::axial(1.9999, 67.6, 35.6)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("g_e", self.g_e)?;
        ensure_finite("gamma_mu", self.gamma_mu)?;
        ensure_finite("mu_b", self.mu_b)?;
        if self.g_e <= 0.0 || self.gamma_mu <= 0.0 || self.mu_b <= 0.0 {
            return Err(invalid("g_e, gamma_mu and mu_b must be positive"));
        }
        match self.hyperfine {
            Hyperfine::Isotropic { a_iso } => ensure_finite("A_iso", a_iso),
            Hyperfine::Axial { a_par, a_perp } => {
                ensure_finite("A_par", a_par)?;
                ensure_finite("A_perp", a_perp)?;
                if a_perp < 0.0 {
                    return Err(invalid("A_perp must be >= 0"));
                }
                Ok(())
            }
        }
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self.hyperfine, Hyperfine::Isotropic { .. })
    }

    /// Electron gyromagnetic ratio magnitude, MHz/mT.
    pub fn gamma_e(&self) -> f64 {
        self.g_e * self.mu_b
    }

    /// Muon gyromagnetic ratio, MHz/mT.
    pub fn gamma_mu_mt(&self) -> f64 {
        self.gamma_mu * 1e-3
    }

    pub fn nu_s(&self, b0_mt: f64) -> f64 {
        self.gamma_e() * b0_mt
    }

    pub fn nu_i(&self, b0_mt: f64) -> f64 {
        self.gamma_mu_mt() * b0_mt
    }

    /// (A_par, A_perp) with the isotropic case mapped to (A_iso, 0).
    pub fn hyperfine_components(&self) -> (f64, f64) {
        match self.hyperfine {
            Hyperfine::Isotropic { a_iso } => (a_iso, 0.0),
            Hyperfine::Axial { a_par, a_perp } => (a_par, a_perp),
        }
    }

    /// Generator of the rotating frame. S_z for axial systems; F_z = S_z + I_z for the
    /// isotropic coupling, which commutes with F_z but not with S_z.
    pub fn frame_generator(&self) -> OperatorMatrix {
        if self.is_isotropic() {
            ops::sz() + ops::iz()
        } else {
            ops::sz()
        }
    }

    /// Magnetic-moment operator coupled by a field along x, in units of γ_e:
    /// S_x − (γ_μ/γ_e)·I_x.
    pub fn drive_operator(&self) -> OperatorMatrix {
        ops::sx() - ops::ix() * real(self.gamma_mu_mt() / self.gamma_e())
    }

    /// Signed muon precession vectors per electron manifold m_S = ±½, as (x, z) in MHz.
    pub fn muon_vectors(&self, b0_mt: f64) -> [(f64, f64); 2] {
        let (a_par, a_perp) = self.hyperfine_components();
        let nu_i = self.nu_i(b0_mt);
        [
            (0.5 * a_perp, -nu_i + 0.5 * a_par),
            (-0.5 * a_perp, -nu_i - 0.5 * a_par),
        ]
    }

    /// Closed-form muon-sector frequencies (ν₁₂, ν₃₄) of the axial system.
    pub fn muon_frequencies_closed_form(&self, b0_mt: f64) -> (f64, f64) {
        let [(x1, z1), (x2, z2)] = self.muon_vectors(b0_mt);
        ((x1 * x1 + z1 * z1).sqrt(), (x2 * x2 + z2 * z2).sqrt())
    }

    /// Closed-form eigenvalues for the secular axial case (A_perp = 0), by label 1..4.
    pub fn secular_energies(&self, b0_mt: f64) -> [f64; 4] {
        let (a_par, _) = self.hyperfine_components();
        let nu_s = self.nu_s(b0_mt);
        let nu_i = self.nu_i(b0_mt);
        let e = |ms: f64, mi: f64| ms * nu_s - mi * nu_i + a_par * ms * mi;
        [e(0.5, 0.5), e(0.5, -0.5), e(-0.5, 0.5), e(-0.5, -0.5)]
    }
}

/// H₀/h in MHz. Electron Zeeman enters as +ν_S S_z, muon Zeeman as −ν_I I_z.
pub fn build_static_hamiltonian(sys: &SpinSystem, b0_mt: f64) -> Result<OperatorMatrix> {
    sys.validate()?;
    ensure_finite("B0", b0_mt)?;
    if b0_mt < 0.0 {
        return Err(invalid(format!("B0 must be >= 0, got {b0_mt}")));
    }
    Ok(static_hamiltonian_unchecked(sys, b0_mt))
}

pub(crate) fn static_hamiltonian_unchecked(sys: &SpinSystem, b0_mt: f64) -> OperatorMatrix {
    let zeeman = ops::sz() * real(sys.nu_s(b0_mt)) - ops::iz() * real(sys.nu_i(b0_mt));
    let hf = match sys.hyperfine {
        Hyperfine::Isotropic { a_iso } => ops::s_dot_i() * real(a_iso),
        Hyperfine::Axial { a_par, a_perp } => {
            ops::sz() * ops::iz() * real(a_par) + ops::sz() * ops::ix() * real(a_perp)
        }
    };
    zeeman + hf
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelDiagram {
    pub field_mt: f64,
    /// Energies E/h in MHz; index k holds level k+1.
    pub energies: [f64; 4],
    /// Column k is the eigenvector of level k+1.
    pub eigenvectors: OperatorMatrix,
    pub labels: [usize; 4],
}

impl LevelDiagram {
    /// E_i − E_j for 1-based labels.
    pub fn splitting(&self, i: usize, j: usize) -> f64 {
        self.energies[i - 1] - self.energies[j - 1]
    }

    pub fn column(&self, k: usize) -> nalgebra::Vector4<C64> {
        self.eigenvectors.column(k).into_owned()
    }

    /// V·diag(E)·V†.
    pub fn reconstruct(&self) -> OperatorMatrix {
        let mut d = OperatorMatrix::zeros();
        for k in 0..4 {
            d[(k, k)] = real(self.energies[k]);
        }
        self.eigenvectors * d * self.eigenvectors.adjoint()
    }

    /// Operator expressed in this eigenbasis: V† O V.
    pub fn to_eigenbasis(&self, op: &OperatorMatrix) -> OperatorMatrix {
        self.eigenvectors.adjoint() * op * self.eigenvectors
    }
}

const DEGENERACY_TOL: f64 = 1e-9;

fn sorted_eigen(h: &OperatorMatrix) -> (Vec<f64>, OperatorMatrix) {
    let eig = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut v = OperatorMatrix::zeros();
    let mut e = Vec::with_capacity(4);
    for (col, &k) in idx.iter().enumerate() {
        e.push(eig.eigenvalues[k]);
        v.set_column(col, &eig.eigenvectors.column(k));
    }
    (e, v)
}

/// Within groups of degenerate eigenvalues, rotate the eigenvectors so that I_z (then S_z)
/// is diagonal. Makes outputs deterministic at exact degeneracies.
fn resolve_degeneracies(e: &[f64], v: &mut OperatorMatrix) {
    let scale = e.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut start = 0;
    while start < 4 {
        let mut end = start + 1;
        while end < 4 && (e[end] - e[start]).abs() <= DEGENERACY_TOL * scale {
            end += 1;
        }
        if end - start > 1 {
            let n = end - start;
            let sub = v.columns(start, n).into_owned();
            let mut basis = nalgebra::DMatrix::<C64>::from_fn(4, n, |r, c| sub[(r, c)]);
            for op in [ops::iz(), ops::sz()] {
                let opd = nalgebra::DMatrix::<C64>::from_fn(4, 4, |r, c| op[(r, c)]);
                let proj = basis.adjoint() * &opd * &basis;
                let proj = (&proj + proj.adjoint()) * C64::new(0.5, 0.0);
                let eig = proj.symmetric_eigen();
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
                let rotated = &basis * &eig.eigenvectors;
                basis = nalgebra::DMatrix::from_fn(4, n, |r, c| rotated[(r, order[c])]);
                let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
                let distinct = vals.windows(2).all(|w| (w[0] - w[1]).abs() > 1e-9);
                if distinct {
                    break;
                }
            }
            for c in 0..n {
                for r in 0..4 {
                    v[(r, start + c)] = basis[(r, c)];
                }
            }
        }
        start = end;
    }
}

/// Rotates each eigenvector so its largest component is real and positive.
fn fix_phases(v: &mut OperatorMatrix) {
    for c in 0..4 {
        let mut best = 0;
        for r in 1..4 {
            if v[(r, c)].norm() > v[(best, c)].norm() + 1e-12 {
                best = r;
            }
        }
        let z = v[(best, c)];
        if z.norm() > 0.0 {
            let ph = z.conj() / z.norm();
            for r in 0..4 {
                v[(r, c)] *= ph;
            }
        }
    }
}

const PERMUTATIONS: [[usize; 4]; 24] = [
    [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
    [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
    [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
    [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
];

/// Picks perm[k] = label index of the k-th vector maximizing total |overlap|² with the
/// reference columns. Exact ties go to higher energy on lower label.
fn best_assignment(v: &OperatorMatrix, reference: &OperatorMatrix, e: &[f64]) -> ([usize; 4], f64) {
    let mut ov = [[0.0f64; 4]; 4];
    for k in 0..4 {
        for l in 0..4 {
            ov[k][l] = reference.column(l).dotc(&v.column(k)).norm_sqr();
        }
    }
    let mut rank = [0usize; 4];
    for k in 0..4 {
        rank[k] = e.iter().filter(|&&x| x < e[k]).count();
    }
    let mut best = PERMUTATIONS[0];
    let mut best_score = f64::NEG_INFINITY;
    let mut best_tie = usize::MAX;
    let mut best_min = 0.0;
    for p in PERMUTATIONS.iter() {
        let score: f64 = (0..4).map(|k| ov[k][p[k]]).sum();
        let tie: usize = (0..4).map(|k| (p[k] + 1) * rank[k]).sum();
        let better = score > best_score + 1e-9
            || ((score - best_score).abs() <= 1e-9 && tie < best_tie);
        if better {
            best = *p;
            best_score = score;
            best_tie = tie;
            best_min = (0..4).map(|k| ov[k][p[k]]).fold(f64::INFINITY, f64::min);
        }
    }
    (best, best_min)
}

fn assemble(field_mt: f64, e: &[f64], v: &OperatorMatrix, perm: &[usize; 4]) -> LevelDiagram {
    let mut energies = [0.0; 4];
    let mut vecs = OperatorMatrix::zeros();
    for k in 0..4 {
        energies[perm[k]] = e[k];
        vecs.set_column(perm[k], &v.column(k));
    }
    LevelDiagram { field_mt, energies, eigenvectors: vecs, labels: [1, 2, 3, 4] }
}

/// Hermitian eigen-decomposition with levels labeled by adiabatic connection to the
/// product states |++⟩, |+−⟩, |−+⟩, |−−⟩ (labels 1..4).
pub fn diagonalize(h: &OperatorMatrix) -> Result<LevelDiagram> {
    diagonalize_at(h, f64::NAN)
}

pub(crate) fn diagonalize_at(h: &OperatorMatrix, field_mt: f64) -> Result<LevelDiagram> {
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }
    if !ops::is_hermitian(h, 1e-10) {
        return Err(Error::Contract(format!(
            "matrix is not Hermitian (defect {:e})",
            ops::hermiticity_defect(h)
        )));
    }
    let (e, mut v) = sorted_eigen(h);
    resolve_degeneracies(&e, &mut v);
    fix_phases(&mut v);
    let (perm, _) = best_assignment(&v, &OperatorMatrix::identity(), &e);
    Ok(assemble(field_mt, &e, &v, &perm))
}

/// Diagonalizes the static Hamiltonian at one field.
pub fn level_diagram(sys: &SpinSystem, b0_mt: f64) -> Result<LevelDiagram> {
    let h = build_static_hamiltonian(sys, b0_mt)?;
    diagonalize_at(&h, b0_mt)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub i: usize,
    pub j: usize,
    pub nu_mhz: f64,
    pub gamma_mhz_per_mt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub field_mt: f64,
    pub rows: Vec<Transition>,
}

impl TransitionTable {
    pub fn get(&self, i: usize, j: usize) -> Option<&Transition> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.rows.iter().find(|t| t.i == a && t.j == b)
    }

    /// Rabi frequency of transition (i,j) for a linearly polarized field of amplitude B₁.
    pub fn rabi_frequency(&self, i: usize, j: usize, b1_mt: f64) -> Option<f64> {
        self.get(i, j).map(|t| 0.5 * t.gamma_mhz_per_mt * b1_mt)
    }
}

/// Transition table for an already labeled diagram.
///
/// γ_ij = 2|⟨i|(γ_e S_x − γ_μ I_x)|j⟩| in MHz/mT. A linearly polarized field of amplitude
/// B₁ drives transition (i,j) at the Rabi frequency γ_ij·B₁/2.
pub fn transition_table_for(sys: &SpinSystem, diagram: &LevelDiagram) -> TransitionTable {
    let moment = sys.drive_operator() * real(sys.gamma_e());
    let m = diagram.to_eigenbasis(&moment);
    let mut rows = Vec::with_capacity(6);
    for i in 0..4 {
        for j in (i + 1)..4 {
            rows.push(Transition {
                i: i + 1,
                j: j + 1,
                nu_mhz: (diagram.energies[i] - diagram.energies[j]).abs(),
                gamma_mhz_per_mt: 2.0 * m[(i, j)].norm(),
            });
        }
    }
    TransitionTable { field_mt: diagram.field_mt, rows }
}

pub fn transition_table(sys: &SpinSystem, b0_mt: f64) -> Result<TransitionTable> {
    let d = level_diagram(sys, b0_mt)?;
    Ok(transition_table_for(sys, &d))
}

/// Level diagrams along a field sweep with labels carried by eigenvector overlap.
pub fn breit_rabi_sweep(
    sys: &SpinSystem,
    b0_list: &[f64],
) -> Result<Vec<(LevelDiagram, TransitionTable)>> {
    if b0_list.is_empty() {
        return Err(invalid("field list is empty"));
    }
    let mut out: Vec<(LevelDiagram, TransitionTable)> = Vec::with_capacity(b0_list.len());
    for &b in b0_list {
        let fresh = level_diagram(sys, b)?;
        let d = match out.last() {
            None => fresh,
            Some((prev, _)) => {
                let h = static_hamiltonian_unchecked(sys, b);
                let (e, mut v) = sorted_eigen(&h);
                resolve_degeneracies(&e, &mut v);
                fix_phases(&mut v);
                let (perm, min_ov) = best_assignment(&v, &prev.eigenvectors, &e);
                if min_ov > 0.5 {
                    assemble(b, &e, &v, &perm)
                } else {
                    fresh
                }
            }
        };
        let t = transition_table_for(sys, &d);
        out.push((d, t));
    }
    Ok(out)
}

/// Field at which the static splitting E_i − E_j (signed, labels 1-based) equals `nu_mhz`,
/// searched by bisection in [lo, hi].
pub fn resonance_field(
    sys: &SpinSystem,
    i: usize,
    j: usize,
    nu_mhz: f64,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    let f = |b: f64| -> Result<f64> { Ok(level_diagram(sys, b)?.splitting(i, j).abs() - nu_mhz) };
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a)?, f(b)?);
    if fa * fb > 0.0 {
        return Err(Error::Numerical(format!(
            "resonance ({i},{j}) at {nu_mhz} MHz not bracketed in [{lo}, {hi}] mT"
        )));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm == 0.0 || (b - a) < 1e-12 {
            return Ok(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    #[test]
    fn isotropic_zero_field_is_triplet_singlet() {
        let sys = SpinSystem::isotropic(2.0023, 4500.0);
        let d = level_diagram(&sys, 0.0).unwrap();
        let e = sorted(d.energies.to_vec());
        assert!((e[0] + 3375.0).abs() < 1e-9);
        for x in &e[1..] {
            assert!((x - 1125.0).abs() < 1e-9);
        }
        // singlet sits at label 3, the triplet m=0 state at label 2
        assert!((d.energies[2] + 3375.0).abs() < 1e-9);
        assert!((d.energies[1] - 1125.0).abs() < 1e-9);
    }

    #[test]
    fn zero_field_degenerate_basis_is_deterministic() {
        let sys = SpinSystem::isotropic(2.0023, 4500.0);
        let a = level_diagram(&sys, 0.0).unwrap();
        let b = level_diagram(&sys, 0.0).unwrap();
        assert_eq!(a, b);
        // triplet T+ is exactly |++⟩
        assert!((a.eigenvectors[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn secular_axial_matches_closed_form() {
        let sys = SpinSystem::axial(2.0, 120.0, 0.0);
        for b in [0.0, 10.0, 138.1, 500.0] {
            let d = level_diagram(&sys, b).unwrap();
            let cf = sys.secular_energies(b);
            for k in 0..4 {
                assert!((d.energies[k] - cf[k]).abs() < 1e-9, "b={b} k={k}");
            }
            let h = build_static_hamiltonian(&sys, b).unwrap();
            for r in 0..4 {
                for c in 0..4 {
                    if r != c {
                        assert_eq!(h[(r, c)].norm(), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn silicon_muon_frequencies_match_closed_form() {
        let sys = SpinSystem::silicon_bc();
        let d = level_diagram(&sys, 138.1).unwrap();
        let (n12, n34) = sys.muon_frequencies_closed_form(138.1);
        assert!((d.splitting(1, 2).abs() - n12).abs() < 1e-6);
        assert!((d.splitting(3, 4).abs() - n34).abs() < 1e-6);
        assert!((n12 - 23.33).abs() < 0.02, "{n12}");
        assert!((n34 - 55.45).abs() < 0.02, "{n34}");
    }

    #[test]
    fn identity_and_diagonal_inputs() {
        let d = diagonalize(&OperatorMatrix::identity()).unwrap();
        assert!(d.energies.iter().all(|e| (e - 1.0).abs() < 1e-14));
        let mut h = OperatorMatrix::zeros();
        let diag = [3.0, -1.0, 2.0, 0.5];
        for k in 0..4 {
            h[(k, k)] = real(diag[k]);
        }
        let d = diagonalize(&h).unwrap();
        for k in 0..4 {
            assert!((d.energies[k] - diag[k]).abs() < 1e-14);
            assert!((d.eigenvectors[(k, k)].norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let mut h = OperatorMatrix::identity();
        h[(0, 1)] = real(1.0);
        assert!(matches!(diagonalize(&h), Err(Error::Contract(_))));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let sys = SpinSystem::isotropic(2.0, f64::NAN);
        assert!(build_static_hamiltonian(&sys, 1.0).is_err());
        let sys = SpinSystem::isotropic(2.0, 4500.0);
        assert!(build_static_hamiltonian(&sys, -1.0).is_err());
        assert!(build_static_hamiltonian(&sys, f64::INFINITY).is_err());
        assert!(breit_rabi_sweep(&sys, &[]).is_err());
    }

    #[test]
    fn secular_axial_has_no_flip_flop_moment() {
        let sys = SpinSystem::axial(2.0, 67.6, 0.0);
        let t = transition_table(&sys, 139.0).unwrap();
        assert!(t.get(1, 4).unwrap().gamma_mhz_per_mt < 1e-12);
        assert!(t.get(2, 3).unwrap().gamma_mhz_per_mt < 1e-12);
        assert!(t.get(1, 3).unwrap().gamma_mhz_per_mt > 0.9 * sys.gamma_e());
    }

    #[test]
    fn silicon_double_quantum_moment_near_quarter_gamma_e() {
        let sys = SpinSystem::silicon_bc();
        let t = transition_table(&sys, 140.0).unwrap();
        let g14 = t.get(1, 4).unwrap().gamma_mhz_per_mt;
        let ratio = g14 / (sys.gamma_e() / 4.0);
        assert!((ratio - 1.0).abs() < 0.25, "γ14/(γe/4) = {ratio}");
    }

    /// The 3↔4 moment follows from the mixing angle of the m_F = 0 pair:
    /// |3⟩ = −sinζ|+−⟩ + cosζ|−+⟩ with tan 2ζ = A/(ν_S + ν_I), so γ₃₄ = γ_e sinζ + γ_μ cosζ,
    /// which tends to the muon moment at high field.
    #[test]
    fn isotropic_gamma34_matches_mixing_angle() {
        let sys = SpinSystem::isotropic(2.0023, 4497.0);
        for b in [10.0, 82.5, 300.0, 3000.0] {
            let t = transition_table(&sys, b).unwrap();
            let zeta = 0.5 * (4497.0f64).atan2(sys.nu_s(b) + sys.nu_i(b));
            let want = sys.gamma_e() * zeta.sin() + sys.gamma_mu_mt() * zeta.cos();
            let got = t.get(3, 4).unwrap().gamma_mhz_per_mt;
            assert!((got - want).abs() < 1e-9 * want, "b={b}: {got} vs {want}");
        }
        let t = transition_table(&sys, 82.5).unwrap();
        let ratio = t.get(3, 4).unwrap().gamma_mhz_per_mt / sys.gamma_e();
        assert!((ratio - 0.5).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn isotropic_nu34_at_resonance_field() {
        let sys = SpinSystem::isotropic(2.0023, 4500.0);
        let d = level_diagram(&sys, 82.525).unwrap();
        let nu34 = d.splitting(4, 3);
        assert!(nu34 > 0.0);
        assert!((nu34 / 3629.0 - 1.0).abs() < 0.02, "{nu34}");
    }

    #[test]
    fn sweep_labels_are_continuous_and_sum_rule_holds() {
        let sys = SpinSystem::isotropic(2.0023, 4500.0);
        let fields: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        let sweep = breit_rabi_sweep(&sys, &fields).unwrap();
        for (d, t) in &sweep {
            let n = |i, j| t.get(i, j).unwrap().nu_mhz;
            let e = &d.energies;
            assert!(((e[0] - e[3]) - ((e[0] - e[1]) + (e[1] - e[3]))).abs() < 1e-9);
            assert!(n(3, 4) >= 0.0);
        }
        let nu34: Vec<f64> = sweep.iter().map(|(d, _)| d.splitting(4, 3)).collect();
        for w in nu34[60..=90].windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn single_field_sweep_matches_diagonalize() {
        let sys = SpinSystem::silicon_bc();
        let s = breit_rabi_sweep(&sys, &[139.0]).unwrap();
        assert_eq!(s[0].0, level_diagram(&sys, 139.0).unwrap());
    }

    #[test]
    fn resonance_field_of_isotropic_nu34() {
        let sys = SpinSystem::isotropic(2.0023, 4500.0);
        let b = resonance_field(&sys, 4, 3, 3629.0, 50.0, 100.0).unwrap();
        let d = level_diagram(&sys, b).unwrap();
        assert!((d.splitting(4, 3) - 3629.0).abs() < 1e-6);
    }
}
