//! Bounded Levenberg–Marquardt for weighted least squares, with multistart and profile
//! intervals.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::AsymmetryTrace;
use crate::error::{invalid, Error, Result};

use super::model::{CompiledModel, ModelSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub init: f64,
    #[serde(default = "neg_inf")]
    pub lo: f64,
    #[serde(default = "pos_inf")]
    pub hi: f64,
    #[serde(default)]
    pub fixed: bool,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

impl ParamSpec {
    pub fn free(name: &str, init: f64, lo: f64, hi: f64) -> Self {
        ParamSpec { name: name.to_string(), init, lo, hi, fixed: false }
    }

    pub fn unbounded(name: &str, init: f64) -> Self {
        Self::free(name, init, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn fixed(name: &str, value: f64) -> Self {
        ParamSpec { name: name.to_string(), init: value, lo: value, hi: value, fixed: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Number of starts; `None` uses 8 for multi-component models and 1 otherwise.
    pub multistart: Option<usize>,
    /// Relative jitter of the extra starts.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iter: 400, multistart: None, jitter: 0.1, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// 1σ errors from the inverse curvature; `None` for fixed parameters or when the
    /// curvature matrix is singular.
    pub errors: Vec<Option<f64>>,
    pub chi2: f64,
    pub dof: i64,
    /// Covariance of the free parameters, ordered as `free`.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub free: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub starts: usize,
    pub flags: Vec<String>,
}

impl FitReport {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| self.values[k])
    }

    pub fn error(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).and_then(|k| self.errors[k])
    }

    pub fn reduced_chi2(&self) -> f64 {
        if self.dof > 0 {
            self.chi2 / self.dof as f64
        } else {
            f64::NAN
        }
    }
}

/// Everything needed to evaluate χ² for one data set and parametrization.
pub(crate) struct Problem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
    model: CompiledModel,
    pub(crate) specs: Vec<ParamSpec>,
    pub(crate) free: Vec<usize>,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(trace: &'a AsymmetryTrace, model: &ModelSpec, params: &[ParamSpec]) -> Result<Self> {
        trace.validate()?;
        let sigma = trace.sigma.as_ref().ok_or_else(|| invalid("fit needs per-point sigma"))?;
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("sigma must be positive and finite"));
        }
        if trace.is_empty() {
            return Err(invalid("no data points"));
        }
        let names = model.parameter_names();
        let mut specs = Vec::with_capacity(names.len());
        for n in &names {
            let s = params
                .iter()
                .find(|p| &p.name == n)
                .ok_or_else(|| invalid(format!("no initial value for '{n}'")))?;
            specs.push(s.clone());
        }
        for p in params {
            if !names.contains(&p.name) {
                return Err(invalid(format!("parameter '{}' is not used by the model", p.name)));
            }
            if params.iter().filter(|q| q.name == p.name).count() > 1 {
                return Err(invalid(format!("parameter '{}' given twice", p.name)));
            }
            if !p.init.is_finite() || p.lo.is_nan() || p.hi.is_nan() || p.lo > p.hi {
                return Err(invalid(format!("bad bounds or init for '{}'", p.name)));
            }
            if p.init < p.lo || p.init > p.hi {
                return Err(invalid(format!("init of '{}' outside its bounds", p.name)));
            }
        }
        let free = (0..specs.len()).filter(|&k| !specs[k].fixed && specs[k].lo < specs[k].hi).collect();
        Ok(Problem {
            t: &trace.times,
            y: &trace.values,
            w: sigma.iter().map(|s| 1.0 / s).collect(),
            model: model.compile(&names)?,
            specs,
            free,
        })
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for k in 0..self.t.len() {
            out[k] = (self.y[k] - self.model.eval(p, self.t[k])) * self.w[k];
        }
    }

    pub(crate) fn chi2(&self, p: &[f64]) -> f64 {
        let mut r = vec![0.0; self.t.len()];
        self.residuals(p, &mut r);
        r.iter().map(|x| x * x).sum()
    }

    fn clamp(&self, p: &mut [f64]) {
        for (k, s) in self.specs.iter().enumerate() {
            p[k] = p[k].clamp(s.lo, s.hi);
        }
    }

    /// ∂r/∂p for the free parameters by central differences, staying inside bounds.
    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let n = self.t.len();
        let mut j = DMatrix::<f64>::zeros(n, self.free.len());
        let mut q = p.to_vec();
        let mut rp = vec![0.0; n];
        let mut rm = vec![0.0; n];
        for (c, &k) in self.free.iter().enumerate() {
            let h = 1e-6 * (p[k].abs() + 1e-3);
            let up = (p[k] + h).min(self.specs[k].hi);
            let dn = (p[k] - h).max(self.specs[k].lo);
            q[k] = up;
            self.residuals(&q, &mut rp);
            q[k] = dn;
            self.residuals(&q, &mut rm);
            q[k] = p[k];
            let span = up - dn;
            if span > 0.0 {
                for r in 0..n {
                    j[(r, c)] = (rp[r] - rm[r]) / span;
                }
            }
        }
        j
    }

    /// Local descent from `start`. Returns (params, χ², iterations, converged).
    pub(crate) fn descend(&self, start: &[f64], max_iter: usize) -> (Vec<f64>, f64, usize, bool) {
        let n = self.t.len();
        let mut p = start.to_vec();
        self.clamp(&mut p);
        if self.free.is_empty() {
            return (p.clone(), self.chi2(&p), 0, true);
        }
        let mut r = vec![0.0; n];
        self.residuals(&p, &mut r);
        let mut chi2: f64 = r.iter().map(|x| x * x).sum();
        let mut mu = 1e-3;
        let mut converged = false;
        let mut it = 0;
        while it < max_iter {
            it += 1;
            let j = self.jacobian(&p);
            let a = j.transpose() * &j;
            // r = (y − f)/σ, so ∂r/∂p = −∂f/∂p/σ and the descent step solves (A + μD)δ = −Jᵀr.
            let g = -(j.transpose() * DVector::from_column_slice(&r));
            let mut improved = false;
            let mut stalled = false;
            loop {
                let mut m = a.clone();
                for d in 0..m.nrows() {
                    m[(d, d)] += mu * a[(d, d)].max(1e-12);
                }
                let step = match m.clone().cholesky() {
                    Some(ch) => ch.solve(&g),
                    None => match m.lu().solve(&g) {
                        Some(s) => s,
                        None => {
                            mu *= 10.0;
                            if mu > 1e16 {
                                stalled = true;
                                break;
                            }
                            continue;
                        }
                    },
                };
                let mut q = p.clone();
                for (c, &k) in self.free.iter().enumerate() {
                    q[k] += step[c];
                }
                self.clamp(&mut q);
                let mut rq = vec![0.0; n];
                self.residuals(&q, &mut rq);
                let c2: f64 = rq.iter().map(|x| x * x).sum();
                if c2.is_finite() && c2 <= chi2 {
                    let gain = chi2 - c2;
                    let moved = self.free.iter().any(|&k| (q[k] - p[k]).abs() > 1e-12 * (p[k].abs() + 1e-9));
                    p = q;
                    r = rq;
                    chi2 = c2;
                    mu = (mu * 0.3).max(1e-15);
                    improved = true;
                    if gain <= 1e-13 * chi2.max(1e-300) || !moved {
                        converged = true;
                    }
                    break;
                }
                mu *= 10.0;
                if mu > 1e16 {
                    stalled = true;
                    break;
                }
            }
            if converged || chi2 == 0.0 {
                converged = true;
                break;
            }
            if stalled || !improved {
                // No downhill step at any damping: a (possibly bounded) stationary point.
                converged = true;
                break;
            }
        }
        (p, chi2, it, converged)
    }

    pub(crate) fn report(&self, p: Vec<f64>, chi2: f64, iterations: usize, converged: bool, starts: usize) -> FitReport {
        let nfree = self.free.len();
        let mut flags = Vec::new();
        if !converged {
            flags.push("max_iterations".to_string());
        }
        let j = self.jacobian(&p);
        let a = j.transpose() * &j;
        let cov = if nfree == 0 {
            None
        } else {
            a.clone().try_inverse().filter(|c| c.iter().all(|x| x.is_finite()) && (0..nfree).all(|d| c[(d, d)] > 0.0))
        };
        if nfree > 0 && cov.is_none() {
            flags.push("singular_curvature".to_string());
        }
        let mut errors = vec![None; self.specs.len()];
        if let Some(c) = &cov {
            for (col, &k) in self.free.iter().enumerate() {
                errors[k] = Some(c[(col, col)].sqrt());
            }
        }
        for &k in &self.free {
            let s = &self.specs[k];
            if p[k] == s.lo || p[k] == s.hi {
                flags.push(format!("at_bound:{}", s.name));
            }
        }
        FitReport {
            names: self.specs.iter().map(|s| s.name.clone()).collect(),
            values: p,
            errors,
            chi2,
            dof: self.t.len() as i64 - nfree as i64,
            covariance: cov.map(|c| (0..nfree).map(|r| (0..nfree).map(|q| c[(r, q)]).collect()).collect()),
            free: self.free.iter().map(|&k| self.specs[k].name.clone()).collect(),
            converged,
            iterations,
            starts,
            flags,
        }
    }
}

/// Weighted least-squares fit of `model` to a trace with per-point σ.
pub fn fit_model(trace: &AsymmetryTrace, model: &ModelSpec, params: &[ParamSpec], opts: &FitOptions) -> Result<FitReport> {
    let prob = Problem::new(trace, model, params)?;
    let starts = opts.multistart.unwrap_or(if model.components.len() > 1 { 8 } else { 1 }).max(1);
    let init: Vec<f64> = prob.specs.iter().map(|s| s.init).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Vec<f64>, f64, usize, bool)> = None;
    let mut total_iter = 0;
    for s in 0..starts {
        let mut x = init.clone();
        if s > 0 {
            for &k in &prob.free {
                let z: f64 = rng.sample(StandardNormal);
                let spec = &prob.specs[k];
                let scale = if spec.lo.is_finite() && spec.hi.is_finite() {
                    (spec.hi - spec.lo).min(x[k].abs().max(1e-3) * 10.0)
                } else {
                    x[k].abs().max(1e-3)
                };
                x[k] += opts.jitter * scale * z;
            }
        }
        let run = prob.descend(&x, opts.max_iter);
        total_iter += run.2;
        if best.as_ref().map(|b| run.1 < b.1).unwrap_or(true) {
            best = Some(run);
        }
    }
    let (p, chi2, _, conv) = best.ok_or_else(|| Error::Numerical("no fit start".into()))?;
    if !chi2.is_finite() {
        return Err(Error::Numerical("χ² is not finite at the best fit".into()));
    }
    Ok(prob.report(p, chi2, total_iter, conv, starts))
}

/// Interval where the profile χ² stays within `delta_chi2` of the minimum, refitting the
/// other parameters at each trial value.
pub fn profile_interval(
    trace: &AsymmetryTrace,
    model: &ModelSpec,
    params: &[ParamSpec],
    report: &FitReport,
    name: &str,
    delta_chi2: f64,
) -> Result<(f64, f64)> {
    let k = report.names.iter().position(|n| n == name).ok_or_else(|| invalid(format!("unknown parameter '{name}'")))?;
    let best = report.values[k];
    let spec = params.iter().find(|p| p.name == name).ok_or_else(|| invalid(format!("unknown parameter '{name}'")))?;
    if spec.fixed {
        return Err(invalid(format!("'{name}' is fixed")));
    }
    let target = report.chi2 + delta_chi2;
    let profile = |v: f64| -> Result<f64> {
        let ps: Vec<ParamSpec> = params
            .iter()
            .map(|p| {
                if p.name == name {
                    ParamSpec::fixed(name, v)
                } else {
                    let j = report.names.iter().position(|n| n == &p.name).unwrap();
                    ParamSpec { init: report.values[j], ..p.clone() }
                }
            })
            .collect();
        let prob = Problem::new(trace, model, &ps)?;
        let init: Vec<f64> = prob.specs.iter().map(|s| s.init).collect();
        Ok(prob.descend(&init, 200).1)
    };
    let step0 = report.errors[k].unwrap_or(1e-2 * best.abs().max(1e-3));
    let side = |dir: f64| -> Result<f64> {
        let limit = if dir > 0.0 { spec.hi } else { spec.lo };
        let mut inner = best;
        let mut step = step0;
        let mut outer = best + dir * step;
        let mut tries = 0;
        loop {
            if (dir > 0.0 && outer >= limit) || (dir < 0.0 && outer <= limit) {
                outer = limit;
                if profile(outer)? < target {
                    return Ok(limit);
                }
                break;
            }
            if profile(outer)? >= target {
                break;
            }
            inner = outer;
            step *= 2.0;
            outer = best + dir * step;
            tries += 1;
            if tries > 40 {
                return Err(Error::Numerical(format!("profile of '{name}' does not reach Δχ² = {delta_chi2}")));
            }
        }
        for _ in 0..40 {
            let mid = 0.5 * (inner + outer);
            if profile(mid)? < target {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        Ok(0.5 * (inner + outer))
    };
    Ok((side(-1.0)?, side(1.0)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitkit::model::Component;

    fn synth(model: &ModelSpec, p: &[f64], n: usize, dt: f64) -> AsymmetryTrace {
        let c = model.compile(&model.parameter_names()).unwrap();
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let y = t.iter().map(|&x| c.eval(p, x)).collect();
        AsymmetryTrace::new(t, y).unwrap().with_sigma(vec![0.01; n]).unwrap()
    }

    fn dc_params(init: [f64; 5]) -> Vec<ParamSpec> {
        vec![
            ParamSpec::free("amp", init[0], 0.0, 1.0),
            ParamSpec::free("freq", init[1], 0.0, 50.0),
            ParamSpec::free("rate", init[2], 0.0, 20.0),
            ParamSpec::free("phase", init[3], -4.0, 4.0),
            ParamSpec::free("offset", init[4], -1.0, 1.0),
        ]
    }

    #[test]
    fn noiseless_damped_cosine_recovered() {
        let m = ModelSpec::damped_cosine_with_offset();
        let truth = [0.35, 7.40, 1.515, 0.3, 0.613];
        let tr = synth(&m, &truth, 1500, 1.0);
        let r = fit_model(&tr, &m, &dc_params([0.3, 7.3, 1.0, 0.0, 0.6]), &FitOptions::default()).unwrap();
        for (k, t) in truth.iter().enumerate() {
            assert!((r.values[k] / t - 1.0).abs() < 1e-6, "{} {} vs {t}", r.names[k], r.values[k]);
        }
        assert!(r.chi2 < 1e-10 * 1500.0);
        assert_eq!(r.dof, 1495);
        assert!(r.errors.iter().all(|e| e.unwrap() >= 0.0));
    }

    #[test]
    fn rate_and_lifetime_give_same_minimum() {
        let m = ModelSpec::damped_cosine_with_offset();
        let truth = [0.3, 5.0, 2.0, 0.0, 0.5];
        let mut tr = synth(&m, &truth, 800, 1.0);
        for (k, v) in tr.values.iter_mut().enumerate() {
            *v += 0.01 * ((k * 7919 % 101) as f64 / 50.0 - 1.0);
        }
        let a = fit_model(&tr, &m, &dc_params([0.3, 5.0, 2.0, 0.0, 0.5]), &FitOptions::default()).unwrap();
        let mt = ModelSpec::new(vec![
            Component::DampedCosineTau { amp: "amp".into(), freq: "freq".into(), tau: "tau".into(), phase: "phase".into() },
            Component::constant("offset"),
        ]);
        let ps = vec![
            ParamSpec::free("amp", 0.3, 0.0, 1.0),
            ParamSpec::free("freq", 5.0, 0.0, 50.0),
            ParamSpec::free("tau", 0.5, 0.01, 100.0),
            ParamSpec::free("phase", 0.0, -4.0, 4.0),
            ParamSpec::free("offset", 0.5, -1.0, 1.0),
        ];
        let b = fit_model(&tr, &mt, &ps, &FitOptions { multistart: Some(1), ..Default::default() }).unwrap();
        assert!((a.chi2 - b.chi2).abs() < 1e-8 * a.chi2.max(1.0), "{} vs {}", a.chi2, b.chi2);
    }

    #[test]
    fn fixed_parameters_are_not_moved() {
        let m = ModelSpec::damped_cosine_with_offset();
        let tr = synth(&m, &[0.3, 5.0, 1.0, 0.0, 0.5], 300, 2.0);
        let mut ps = dc_params([0.25, 5.1, 1.2, 0.0, 0.45]);
        ps[3] = ParamSpec::fixed("phase", 0.0);
        let r = fit_model(&tr, &m, &ps, &FitOptions::default()).unwrap();
        assert_eq!(r.value("phase"), Some(0.0));
        assert_eq!(r.error("phase"), None);
        assert_eq!(r.dof, 296);
    }

    #[test]
    fn missing_sigma_and_bad_init_rejected() {
        let m = ModelSpec::damped_cosine_with_offset();
        let tr = AsymmetryTrace::new(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert!(fit_model(&tr, &m, &dc_params([0.3, 5.0, 1.0, 0.0, 0.5]), &FitOptions::default()).is_err());
        let tr = tr.with_sigma(vec![1.0, 1.0]).unwrap();
        assert!(fit_model(&tr, &m, &dc_params([3.0, 5.0, 1.0, 0.0, 0.5]), &FitOptions::default()).is_err());
    }

    #[test]
    fn degenerate_model_flags_singular_curvature() {
        // Zero amplitude leaves frequency, rate and phase unidentifiable.
        let m = ModelSpec::damped_cosine_with_offset();
        let tr = synth(&m, &[0.0, 5.0, 1.0, 0.0, 0.5], 100, 1.0);
        let mut ps = dc_params([0.0, 5.0, 1.0, 0.0, 0.5]);
        ps[0] = ParamSpec::fixed("amp", 0.0);
        let r = fit_model(&tr, &m, &ps, &FitOptions::default()).unwrap();
        assert!(r.flags.iter().any(|f| f == "singular_curvature"));
    }

    #[test]
    fn profile_interval_matches_curvature_for_linear_parameter() {
        let m = ModelSpec::new(vec![Component::constant("c")]);
        let n = 100;
        let tr = AsymmetryTrace::new((0..n).map(|k| k as f64).collect(), (0..n).map(|k| 0.5 + 0.01 * ((k % 3) as f64 - 1.0)).collect())
            .unwrap()
            .with_sigma(vec![0.1; n])
            .unwrap();
        let ps = vec![ParamSpec::unbounded("c", 0.4)];
        let r = fit_model(&tr, &m, &ps, &FitOptions::default()).unwrap();
        let (lo, hi) = profile_interval(&tr, &m, &ps, &r, "c", 1.0).unwrap();
        let s = r.error("c").unwrap();
        assert!((s - 0.01).abs() < 1e-9);
        assert!((hi - r.values[0] - s).abs() < 1e-6 && (r.values[0] - lo - s).abs() < 1e-6);
    }
}
