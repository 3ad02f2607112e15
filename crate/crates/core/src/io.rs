//! CSV and JSON serialization of traces, histograms, sweeps and maps.
//!
//! Dialect: comma separated, '.' decimal, one header row, LF line endings, floats with 9
//! significant digits. Identical numbers always print identically, so identical results give
//! byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::analytic::{DemurPoint, ShiftPoint};
use crate::dynamics::{AsymmetryTrace, Histograms};
use crate::error::{Error, Result};
use crate::fitkit::Chi2Map;
use crate::spectra::{DampingPoint, DemurNumericPoint, NarrowingMap, RabiMap, Spectrum};
use crate::spinsys::{LevelDiagram, TransitionTable};

/// `x` with 9 significant digits, shortest form: fixed notation for exponents in [−5, 9),
/// scientific otherwise, trailing zeros dropped. Non-finite values print as `nan`, `inf`,
/// `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Header plus rows, rendered in the fixed dialect.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| fmt_f64(v)).collect());
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.header.join(","));
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        s
    }
}

pub fn trace_table(trace: &AsymmetryTrace) -> Table {
    let mut t = Table::new(&["t_ns", "value", "sigma"]);
    for k in 0..trace.len() {
        let sigma = trace.sigma.as_ref().map(|s| fmt_f64(s[k])).unwrap_or_default();
        t.push(vec![fmt_f64(trace.times[k]), fmt_f64(trace.values[k]), sigma]);
    }
    t
}

pub fn histograms_table(h: &Histograms) -> Table {
    let mut t = Table::new(&["t_ns", "N_F", "N_B"]);
    for k in 0..h.times.len() {
        t.push(vec![fmt_f64(h.times[k]), h.n_f[k].to_string(), h.n_b[k].to_string()]);
    }
    t
}

/// One row per field: E1..E4 in MHz, labels as carried along the sweep.
pub fn levels_table(diagrams: &[&LevelDiagram]) -> Table {
    let mut t = Table::new(&["B0_mT", "E1_MHz", "E2_MHz", "E3_MHz", "E4_MHz"]);
    for d in diagrams {
        let e = d.energies;
        t.push_f64(&[d.field_mt, e[0], e[1], e[2], e[3]]);
    }
    t
}

pub fn transitions_table(tables: &[&TransitionTable]) -> Table {
    let mut t = Table::new(&["B0_mT", "i", "j", "nu_MHz", "gamma_MHz_per_mT"]);
    for tab in tables {
        for r in &tab.rows {
            t.push(vec![
                fmt_f64(tab.field_mt),
                r.i.to_string(),
                r.j.to_string(),
                fmt_f64(r.nu_mhz),
                fmt_f64(r.gamma_mhz_per_mt),
            ]);
        }
    }
    t
}

/// Flags are `|`-joined tokens: `zq` and `dq` for substituted branches, `excluded` inside a
/// discontinuity window.
pub fn demur_table(points: &[DemurPoint]) -> Table {
    let mut t = Table::new(&["B0_mT", "nu12_MHz", "nu34_MHz", "flags"]);
    for p in points {
        let mut flags = Vec::new();
        if p.zq_substituted {
            flags.push("zq");
        }
        if p.dq_substituted {
            flags.push("dq");
        }
        if p.flagged {
            flags.push("excluded");
        }
        t.push(vec![fmt_f64(p.b0_mt), fmt_f64(p.nu12_tr), fmt_f64(p.nu34_tr), flags.join("|")]);
    }
    t
}

/// Numeric DEMUR lines next to the analytic ones; `fit_converged` is 0 or 1.
pub fn demur_numeric_table(points: &[DemurNumericPoint]) -> Table {
    let mut t = Table::new(&[
        "B0_mT",
        "nu12_analytic_MHz",
        "nu34_analytic_MHz",
        "nu12_fft_MHz",
        "nu34_fft_MHz",
        "resolution_MHz",
        "nu12_fit_MHz",
        "nu34_fit_MHz",
        "lambda12_per_us",
        "lambda34_per_us",
        "fit_converged",
    ]);
    for p in points {
        t.push_f64(&[
            p.b0_mt,
            p.analytic.nu12_tr.abs(),
            p.analytic.nu34_tr.abs(),
            p.nu12_fft,
            p.nu34_fft,
            p.resolution,
            p.nu12_fit,
            p.nu34_fit,
            p.lambda12,
            p.lambda34,
            if p.fit_converged { 1.0 } else { 0.0 },
        ]);
    }
    t
}

pub fn shift_table(points: &[ShiftPoint]) -> Table {
    let mut t = Table::new(&["nu_rabi_MHz", "shift_MHz", "B1_mT", "B0_min_mT", "shift_analytic_MHz"]);
    for p in points {
        t.push_f64(&[p.nu_rabi, p.shift, p.b1_mt, p.b0_min_mt, p.shift_analytic]);
    }
    t
}

/// Long format; flagged cells keep their row with `nan` entries.
pub fn rabi_map_table(m: &RabiMap) -> Table {
    let mut t = Table::new(&["B0_mT", "B1_mT", "nu_eff_MHz", "amplitude"]);
    for (i, &b0) in m.b0_mt.iter().enumerate() {
        for (j, &b1) in m.b1_mt.iter().enumerate() {
            t.push_f64(&[b0, b1, m.nu_eff[i][j], m.amplitude[i][j]]);
        }
    }
    t
}

pub fn spectrum_table(s: &Spectrum) -> Table {
    let mut t = Table::new(&["freq_MHz", "magnitude"]);
    for (f, m) in s.freqs.iter().zip(&s.magnitude) {
        t.push_f64(&[*f, *m]);
    }
    t
}

pub fn narrowing_table(m: &NarrowingMap) -> Table {
    let mut t = Table::new(&["nu1_MHz", "omega_MHz", "fwhm_MHz"]);
    for (i, &n) in m.nu1_mhz.iter().enumerate() {
        for (j, &o) in m.omega_mhz.iter().enumerate() {
            t.push_f64(&[n, o, m.fwhm[i][j]]);
        }
    }
    t
}

pub fn damping_table(points: &[DampingPoint]) -> Table {
    let mut t = Table::new(&["B1_mT", "B0_mT", "nu_rabi_MHz", "damping_per_us", "damping_err_per_us", "flagged"]);
    for p in points {
        t.push(vec![
            fmt_f64(p.b1_mt),
            fmt_f64(p.b0_mt),
            fmt_f64(p.nu_rabi),
            fmt_f64(p.damping),
            p.damping_err.map(fmt_f64).unwrap_or_default(),
            p.flagged.to_string(),
        ]);
    }
    t
}

/// Every evaluated grid node of every refinement level, then the contour grid as level
/// `contour`.
pub fn chi2_map_table(m: &Chi2Map) -> Table {
    let mut t = Table::new(&["level", &m.x_name, &m.y_name, "chi2"]);
    let mut emit = |label: String, lv: &crate::fitkit::GridLevel| {
        for (i, &x) in lv.xs.iter().enumerate() {
            for (j, &y) in lv.ys.iter().enumerate() {
                t.push(vec![label.clone(), fmt_f64(x), fmt_f64(y), fmt_f64(lv.chi2[i][j])]);
            }
        }
    };
    for (k, lv) in m.levels.iter().enumerate() {
        emit(k.to_string(), lv);
    }
    emit("contour".into(), &m.contour);
    t
}

/// Pretty JSON with a trailing newline. Non-finite floats become `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Io(format!("{}: missing column '{name}'", path.display())))
}

fn parse_f64(s: &str, path: &Path, line: u64, col: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Io(format!("{}:{line}: column '{col}' is not a number: '{s}'", path.display())))
}

/// Reads `t_ns,value[,sigma]`. A sigma column must be filled on every row or on none.
pub fn read_trace_csv(path: &Path) -> Result<AsymmetryTrace> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| Error::Io(e.to_string()))?.clone();
    let ct = column(&headers, "t_ns", path)?;
    let cv = column(&headers, "value", path)?;
    let cs = headers.iter().position(|h| h == "sigma");
    let (mut t, mut v, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        t.push(parse_f64(&rec[ct], path, line, "t_ns")?);
        v.push(parse_f64(&rec[cv], path, line, "value")?);
        if let Some(c) = cs {
            if !rec[c].is_empty() {
                s.push(parse_f64(&rec[c], path, line, "sigma")?);
            }
        }
    }
    let trace = AsymmetryTrace::new(t, v)?;
    if s.is_empty() {
        Ok(trace)
    } else if s.len() == trace.len() {
        trace.with_sigma(s)
    } else {
        Err(Error::Io(format!("{}: sigma filled on only some rows", path.display())))
    }
}

/// Reads `t_ns,N_F,N_B`; `alpha` is not stored in the file.
pub fn read_histograms_csv(path: &Path, alpha: f64) -> Result<Histograms> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| Error::Io(e.to_string()))?.clone();
    let ct = column(&headers, "t_ns", path)?;
    let cf = column(&headers, "N_F", path)?;
    let cb = column(&headers, "N_B", path)?;
    let (mut times, mut n_f, mut n_b) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        times.push(parse_f64(&rec[ct], path, line, "t_ns")?);
        let count = |c: usize, name: &str| -> Result<u64> {
            rec[c]
                .parse::<u64>()
                .map_err(|_| Error::Io(format!("{}:{line}: column '{name}' is not a count", path.display())))
        };
        n_f.push(count(cf, "N_F")?);
        n_b.push(count(cb, "N_B")?);
    }
    Ok(Histograms { times, n_f, n_b, alpha, clipped: 0 })
}
