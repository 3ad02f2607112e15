//! Iteratively refined two-parameter χ² grids and their Δχ² confidence regions.

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{demur_eigenfrequencies_with, drive_coefficient};
use crate::error::{invalid, Result};
use crate::spinsys::SpinSystem;

/// Δχ² enclosing 68.3% for two jointly estimated parameters.
pub const DELTA_CHI2_2D: f64 = 2.30;
/// Δχ² of a one-parameter 68.3% profile interval.
pub const DELTA_CHI2_1D: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    /// Odd, so each refined grid is centred on a node of the previous one.
    pub n: usize,
}

impl Axis {
    pub fn new(name: &str, lo: f64, hi: f64, n: usize) -> Self {
        Axis { name: name.to_string(), lo, hi, n }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(invalid(format!("axis '{}' needs finite lo < hi", self.name)));
        }
        if self.n < 3 || self.n.is_multiple_of(2) {
            return Err(invalid(format!("axis '{}' needs an odd node count >= 3", self.name)));
        }
        Ok(())
    }

    fn nodes(&self, centre: f64, half: f64) -> Vec<f64> {
        (0..self.n).map(|k| centre - half + 2.0 * half * k as f64 / (self.n - 1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub refinements: usize,
    pub zoom: f64,
    /// Nodes per axis of the final contour grid.
    pub contour_n: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { refinements: 3, zoom: 5.0, contour_n: 61 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLevel {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// chi2[i][j] at (xs[i], ys[j]).
    pub chi2: Vec<Vec<f64>>,
    pub best: (usize, usize),
}

impl GridLevel {
    fn eval<F: Fn(f64, f64) -> f64 + Sync>(xs: Vec<f64>, ys: Vec<f64>, f: &F) -> Self {
        let chi2: Vec<Vec<f64>> = xs.par_iter().map(|&x| ys.iter().map(|&y| f(x, y)).collect()).collect();
        let mut best = (0, 0);
        let mut m = f64::INFINITY;
        for (i, row) in chi2.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v < m {
                    m = v;
                    best = (i, j);
                }
            }
        }
        GridLevel { xs, ys, chi2, best }
    }

    pub fn min(&self) -> f64 {
        self.chi2[self.best.0][self.best.1]
    }

    fn on_edge(&self) -> bool {
        let (i, j) = self.best;
        i == 0 || j == 0 || i == self.xs.len() - 1 || j == self.ys.len() - 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chi2Map {
    pub x_name: String,
    pub y_name: String,
    pub levels: Vec<GridLevel>,
    pub level_minima: Vec<f64>,
    /// (x, y, χ²) at the minimum.
    pub best: (f64, f64, f64),
    /// Grid sized from the local curvature, used for the contours and intervals.
    pub contour: GridLevel,
    pub contour_levels: [f64; 2],
    /// One-parameter intervals from the Δχ² = 1 profile.
    pub x_interval: (f64, f64),
    pub y_interval: (f64, f64),
    /// Bounding box of the joint Δχ² = 2.30 region.
    pub region_68: ((f64, f64), (f64, f64)),
    pub converged: bool,
    pub flags: Vec<String>,
}

/// Crossing of `level` by the profile `v` on either side of its minimum, by linear
/// interpolation. Falls back to the grid end when the profile never rises that high.
fn crossing(xs: &[f64], v: &[f64], level: f64) -> ((f64, f64), bool) {
    let k = (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    let mut clipped = false;
    let mut lo = xs[0];
    let mut found = false;
    for i in (0..k).rev() {
        if v[i] >= level {
            let t = (level - v[i + 1]) / (v[i] - v[i + 1]);
            lo = xs[i + 1] + t * (xs[i] - xs[i + 1]);
            found = true;
            break;
        }
    }
    clipped |= !found;
    let mut hi = xs[xs.len() - 1];
    found = false;
    for i in (k + 1)..v.len() {
        if v[i] >= level {
            let t = (level - v[i - 1]) / (v[i] - v[i - 1]);
            hi = xs[i - 1] + t * (xs[i] - xs[i - 1]);
            found = true;
            break;
        }
    }
    clipped |= !found;
    ((lo, hi), clipped)
}

pub fn chi2_grid<F>(x: &Axis, y: &Axis, opts: &GridOptions, objective: F) -> Result<Chi2Map>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    x.validate()?;
    y.validate()?;
    if !(opts.zoom > 1.0) || opts.contour_n < 5 {
        return Err(invalid("zoom must exceed 1 and the contour grid needs >= 5 nodes"));
    }
    let mut flags = Vec::new();
    let mut hx = 0.5 * (x.hi - x.lo);
    let mut hy = 0.5 * (y.hi - y.lo);
    let mut levels = vec![GridLevel::eval(x.nodes(x.lo + hx, hx), y.nodes(y.lo + hy, hy), &objective)];
    let mut converged = !levels[0].on_edge();
    if !converged {
        flags.push("minimum on the outer grid edge".to_string());
    }
    let mut recentres = 0;
    let mut done = 0;
    while done < opts.refinements {
        let prev = levels.last().unwrap();
        let (cx, cy) = (prev.xs[prev.best.0], prev.ys[prev.best.1]);
        // A minimum on the edge of a zoomed grid re-centres at the same scale first.
        if levels.len() > 1 && prev.on_edge() && recentres < 5 {
            recentres += 1;
        } else {
            hx /= opts.zoom;
            hy /= opts.zoom;
            done += 1;
        }
        let lvl = GridLevel::eval(x.nodes(cx, hx), y.nodes(cy, hy), &objective);
        levels.push(lvl);
    }
    let last = levels.last().unwrap();
    if levels.len() > 1 && last.on_edge() {
        converged = false;
        flags.push("minimum on the edge of the refined grid".to_string());
    }
    let level_minima: Vec<f64> = levels.iter().map(|l| l.min()).collect();
    let (bx, by) = (last.xs[last.best.0], last.ys[last.best.1]);
    let fmin = last.min();

    // Curvature from central differences on the final spacing.
    let sx = 2.0 * hx / (x.n - 1) as f64;
    let sy = 2.0 * hy / (y.n - 1) as f64;
    let f = |a: f64, b: f64| objective(a, b);
    let hxx = (f(bx + sx, by) - 2.0 * fmin + f(bx - sx, by)) / (sx * sx);
    let hyy = (f(bx, by + sy) - 2.0 * fmin + f(bx, by - sy)) / (sy * sy);
    let hxy = (f(bx + sx, by + sy) - f(bx + sx, by - sy) - f(bx - sx, by + sy) + f(bx - sx, by - sy)) / (4.0 * sx * sy);
    let hess = Matrix2::new(hxx, hxy, hxy, hyy);
    let (ex, ey) = match hess.try_inverse() {
        Some(inv) if hxx > 0.0 && hess.determinant() > 0.0 => ((2.0 * inv[(0, 0)]).sqrt(), (2.0 * inv[(1, 1)]).sqrt()),
        _ => {
            flags.push("curvature not positive definite; contour grid uses the refined span".to_string());
            (hx, hy)
        }
    };
    let cn = if opts.contour_n.is_multiple_of(2) { opts.contour_n + 1 } else { opts.contour_n };
    let cax = Axis { n: cn, ..x.clone() };
    let cay = Axis { n: cn, ..y.clone() };
    let contour = GridLevel::eval(cax.nodes(bx, 4.0 * ex), cay.nodes(by, 4.0 * ey), &objective);
    let cmin = contour.min().min(fmin);
    let prof_x: Vec<f64> = contour.chi2.iter().map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min)).collect();
    let prof_y: Vec<f64> = (0..contour.ys.len())
        .map(|j| contour.chi2.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let (x_interval, cx) = crossing(&contour.xs, &prof_x, cmin + DELTA_CHI2_1D);
    let (y_interval, cy) = crossing(&contour.ys, &prof_y, cmin + DELTA_CHI2_1D);
    if cx || cy {
        flags.push("profile interval clipped by the contour grid".to_string());
    }
    let mut rx = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ry = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, row) in contour.chi2.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v <= cmin + DELTA_CHI2_2D {
                rx = (rx.0.min(contour.xs[i]), rx.1.max(contour.xs[i]));
                ry = (ry.0.min(contour.ys[j]), ry.1.max(contour.ys[j]));
            }
        }
    }
    Ok(Chi2Map {
        x_name: x.name.clone(),
        y_name: y.name.clone(),
        levels,
        level_minima,
        best: (bx, by, fmin),
        contour,
        contour_levels: [DELTA_CHI2_2D, DELTA_CHI2_1D],
        x_interval,
        y_interval,
        region_68: (rx, ry),
        converged,
        flags,
    })
}

/// Measured driven muon frequencies at one field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemurDatum {
    #[serde(rename = "B0_mT")]
    pub b0_mt: f64,
    pub nu12: f64,
    pub sigma12: f64,
    pub nu34: f64,
    pub sigma34: f64,
}

/// χ² of analytic DEMUR eigenfrequencies against data for trial (g_e, B₁). `base` supplies
/// the hyperfine tensor; its g-factor is replaced by `g_e`.
pub fn demur_chi2(data: &[DemurDatum], base: &SpinSystem, nu_uw: f64, g_e: f64, b1_mt: f64) -> f64 {
    let sys = SpinSystem { g_e, ..*base };
    let nu1 = drive_coefficient(&sys, b1_mt);
    data.iter()
        .map(|d| match demur_eigenfrequencies_with(&sys, d.b0_mt, nu_uw, nu1, 0.0) {
            Ok(p) => ((p.nu12_tr - d.nu12) / d.sigma12).powi(2) + ((p.nu34_tr - d.nu34) / d.sigma34).powi(2),
            Err(_) => f64::INFINITY,
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_objective_recovers_minimum_and_ellipse() {
        // χ² = χ²₀ + ΔᵀC⁻¹Δ with known covariance C.
        let (x0, y0) = (1.9999, 0.677);
        let (sx, sy, rho) = (4e-4, 0.011, 0.4);
        let det = 1.0 - rho * rho;
        let f = move |x: f64, y: f64| {
            let (u, v) = ((x - x0) / sx, (y - y0) / sy);
            3.0 + (u * u - 2.0 * rho * u * v + v * v) / det
        };
        let m = chi2_grid(&Axis::new("g", 1.995, 2.005, 21), &Axis::new("b1", 0.5, 0.9, 21), &GridOptions::default(), f).unwrap();
        assert!(m.converged, "{:?}", m.flags);
        let res_x = 0.01 / 20.0 / 125.0;
        assert!((m.best.0 - x0).abs() <= res_x);
        for w in m.level_minima.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let step = m.contour.xs[1] - m.contour.xs[0];
        assert!(((m.x_interval.1 - m.x_interval.0) / 2.0 - sx).abs() < step, "{:?}", m.x_interval);
        let stepy = m.contour.ys[1] - m.contour.ys[0];
        assert!(((m.y_interval.1 - m.y_interval.0) / 2.0 - sy).abs() < stepy);
        // Joint 2.30 region extends √2.30·σ along each axis.
        assert!(((m.region_68.0 .1 - m.region_68.0 .0) / 2.0 - 2.30f64.sqrt() * sx).abs() < 2.0 * step);
    }

    #[test]
    fn edge_minimum_is_flagged() {
        let m = chi2_grid(&Axis::new("a", 0.0, 1.0, 5), &Axis::new("b", 0.0, 1.0, 5), &GridOptions::default(), |x, y| {
            (x - 3.0).powi(2) + y * y
        })
        .unwrap();
        assert!(!m.converged);
    }

    #[test]
    fn even_axis_rejected() {
        assert!(chi2_grid(&Axis::new("a", 0.0, 1.0, 4), &Axis::new("b", 0.0, 1.0, 5), &GridOptions::default(), |_, _| 0.0).is_err());
    }
}
