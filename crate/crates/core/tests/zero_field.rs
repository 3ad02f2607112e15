//! Structure of the muon signal under a drive near the zero-field hyperfine line.
//!
//! At B0 = 0 the drive couples the singlet to the m_F = ±1 triplet pair, so the muon
//! polarization oscillates at two frequencies (√(δ² + 4g²) ± δ)/2, where δ is the drive
//! detuning from the hyperfine line and g = ν₁/√2 the coupling to each triplet state. Their
//! difference is |δ| and their sum is √(δ² + 4g²).

use muonium::dynamics::{initial_state, propagate, templates, Geometry, PropagateOptions, RelaxationModel, Sampling};
use muonium::spectra::{fft_spectrum, find_peaks, Window};
use muonium::spinsys::{level_diagram, transition_table};
use muonium::SpinSystem;

#[test]
fn two_components_at_dressed_splittings() {
    let a = 4500.0;
    let b1 = 0.95;
    let sys = SpinSystem::isotropic(2.0023, a);
    let nu1 = transition_table(&sys, 0.0).unwrap().rabi_frequency(3, 4, b1).unwrap();
    let hf = level_diagram(&sys, 0.0).unwrap().splitting(4, 3).abs();
    let opts = PropagateOptions::lab(0.01, 100).with_sampling(Sampling::BinAverage);
    for offset in [3.0, 10.0] {
        let seq = templates::demur_cw(b1, a + offset, 2000.0, Geometry::LF);
        let p = propagate(&initial_state(Geometry::LF), &sys, 0.0, &seq, &RelaxationModel::none(), &opts).unwrap();
        let s = fft_spectrum(&p.trace, Window::Hann, 8).unwrap();
        let mut peaks = find_peaks(&s, Some((0.5, 50.0)), 0.05);
        peaks.sort_by(|x, y| y.magnitude.total_cmp(&x.magnitude));
        assert!(peaks.len() >= 2, "offset {offset}: {peaks:?}");
        let (hi, lo) = (peaks[0].freq.max(peaks[1].freq), peaks[0].freq.min(peaks[1].freq));

        let delta = a + offset - hf;
        let g = nu1 / std::f64::consts::SQRT_2;
        let root = (delta * delta + 4.0 * g * g).sqrt();
        let tol = 2.0 * s.resolution();
        assert!((hi - (root + delta.abs()) / 2.0).abs() <= tol, "offset {offset}: upper {hi} vs {}", (root + delta.abs()) / 2.0);
        assert!((lo - (root - delta.abs()) / 2.0).abs() <= tol, "offset {offset}: lower {lo} vs {}", (root - delta.abs()) / 2.0);
    }
}
