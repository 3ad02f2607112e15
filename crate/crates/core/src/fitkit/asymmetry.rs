use crate::dynamics::{AsymmetryTrace, Histograms};
use crate::error::{invalid, Result};

pub const DEFAULT_MIN_COUNTS: u64 = 10;

/// A = (N_B − αN_F)/(N_B + αN_F) with Poisson errors propagated to first order. Bins whose
/// total count is below `min_counts` are dropped.
pub fn asymmetry_from_histograms(h: &Histograms, min_counts: u64) -> Result<AsymmetryTrace> {
    if h.times.len() != h.n_f.len() || h.times.len() != h.n_b.len() {
        return Err(invalid("histogram columns differ in length"));
    }
    if !(h.alpha.is_finite() && h.alpha > 0.0) {
        return Err(invalid(format!("alpha must be > 0, got {}", h.alpha)));
    }
    let a = h.alpha;
    let mut t = Vec::new();
    let mut v = Vec::new();
    let mut s = Vec::new();
    for k in 0..h.times.len() {
        let (f, b) = (h.n_f[k], h.n_b[k]);
        if f + b < min_counts.max(1) {
            continue;
        }
        let (f, b) = (f as f64, b as f64);
        let den = b + a * f;
        t.push(h.times[k]);
        v.push((b - a * f) / den);
        // Var(N) = N, floored at one count so empty channels keep a finite weight.
        let (vf, vb) = (f.max(1.0), b.max(1.0));
        s.push(2.0 * a * (f * f * vb + b * b * vf).sqrt() / (den * den));
    }
    AsymmetryTrace::new(t, v)?.with_sigma(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_counts_give_expected_asymmetry_and_error() {
        let h = Histograms { times: vec![0.0, 1.0, 2.0], n_f: vec![600, 5, 400], n_b: vec![1400, 4, 1600], alpha: 1.0, clipped: 0 };
        let tr = asymmetry_from_histograms(&h, DEFAULT_MIN_COUNTS).unwrap();
        assert_eq!(tr.times, vec![0.0, 2.0]);
        assert!((tr.values[0] - 0.4).abs() < 1e-12);
        // σ_A = sqrt((1 − A²)/N) for α = 1
        let want = ((1.0 - 0.16) / 2000.0f64).sqrt();
        assert!((tr.sigma.as_ref().unwrap()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn alpha_corrects_detector_imbalance() {
        let h = Histograms { times: vec![0.0], n_f: vec![1000], n_b: vec![1300], alpha: 1.3, clipped: 0 };
        let tr = asymmetry_from_histograms(&h, 10).unwrap();
        assert!(tr.values[0].abs() < 1e-12);
    }
}
