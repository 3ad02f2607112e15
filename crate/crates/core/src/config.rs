//! Experiment definitions read from TOML (or JSON) files.
//!
//! Every physical key carries its unit in the name (`B0_mT`, `nu_uw_MHz`, `dt_ns`,
//! `electron_per_us`) and unknown keys are rejected, so a misspelt or unit-less key is an
//! error rather than a silently ignored default.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{templates, Frame, Geometry, PulseSegment, PulseSequence, RelaxationModel, Sampling};
use crate::error::{Error, Result};
use crate::fitkit::{ModelSpec, ParamSpec};
use crate::spectra::Window;
use crate::spinsys::{level_diagram, SpinSystem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SpinSystem,
    #[serde(default)]
    pub field: Option<FieldBlock>,
    #[serde(default)]
    pub drive: Option<DriveBlock>,
    #[serde(default)]
    pub sequence: Option<SequenceBlock>,
    #[serde(default)]
    pub relaxation: Option<RelaxationBlock>,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default)]
    pub synth: Option<SynthBlock>,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub seed: u64,
}

/// Exactly one of a single field, an explicit list or a linear sweep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldBlock {
    #[serde(default, rename = "B0_mT")]
    pub b0_mt: Option<f64>,
    #[serde(default, rename = "B0_list_mT")]
    pub b0_list_mt: Option<Vec<f64>>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(rename = "start_mT")]
    pub start_mt: f64,
    #[serde(rename = "stop_mT")]
    pub stop_mt: f64,
    /// Includes both ends.
    pub points: usize,
}

impl FieldBlock {
    pub fn fields(&self) -> Result<Vec<f64>> {
        let set = [self.b0_mt.is_some(), self.b0_list_mt.is_some(), self.sweep.is_some()];
        if set.iter().filter(|&&s| s).count() != 1 {
            return Err(config_err("[field] needs exactly one of B0_mT, B0_list_mT, sweep"));
        }
        let out = if let Some(b) = self.b0_mt {
            vec![b]
        } else if let Some(l) = &self.b0_list_mt {
            l.clone()
        } else {
            let s = self.sweep.as_ref().expect("checked above");
            if s.points < 2 {
                return Err(config_err("[field.sweep] points must be >= 2"));
            }
            (0..s.points)
                .map(|k| s.start_mt + (s.stop_mt - s.start_mt) * k as f64 / (s.points - 1) as f64)
                .collect()
        };
        if out.is_empty() || out.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(config_err("[field] values must be finite and >= 0 mT"));
        }
        Ok(out)
    }
}

/// The drive frequency is given directly or as the static splitting of a transition at a
/// reference field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveBlock {
    #[serde(default, rename = "nu_uw_MHz")]
    pub nu_uw_mhz: Option<f64>,
    #[serde(default)]
    pub resonant_with: Option<ResonantWith>,
    #[serde(default, rename = "B1_mT")]
    pub b1_mt: Option<f64>,
    #[serde(default, rename = "B1_list_mT")]
    pub b1_list_mt: Option<Vec<f64>>,
    /// Added to the drive frequency from `nu_uw_MHz` or `resonant_with`.
    #[serde(default, rename = "detuning_MHz")]
    pub detuning_mhz: f64,
    /// Further offsets on top of `detuning_MHz`; `simulate` runs once per entry.
    #[serde(default, rename = "detuning_list_MHz")]
    pub detuning_list_mhz: Option<Vec<f64>>,
    #[serde(default = "default_geometry")]
    pub geometry: Geometry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonantWith {
    /// 1-based level labels.
    pub transition: (usize, usize),
    #[serde(rename = "B0_mT")]
    pub b0_mt: f64,
}

fn default_geometry() -> Geometry {
    Geometry::LF
}

impl DriveBlock {
    pub fn nu_uw(&self, sys: &SpinSystem) -> Result<f64> {
        let base = match (self.nu_uw_mhz, &self.resonant_with) {
            (Some(nu), None) => nu,
            (None, Some(r)) => {
                let (i, j) = r.transition;
                if !(1..=4).contains(&i) || !(1..=4).contains(&j) || i == j {
                    return Err(config_err("[drive.resonant_with] transition needs two distinct labels in 1..=4"));
                }
                level_diagram(sys, r.b0_mt)?.splitting(i, j).abs()
            }
            _ => return Err(config_err("[drive] needs exactly one of nu_uw_MHz, resonant_with")),
        };
        Ok(base + self.detuning_mhz)
    }

    /// The single drive amplitude, or the list.
    pub fn b1_values(&self) -> Result<Vec<f64>> {
        match (self.b1_mt, &self.b1_list_mt) {
            (Some(b), None) => Ok(vec![b]),
            (None, Some(l)) if !l.is_empty() => Ok(l.clone()),
            _ => Err(config_err("[drive] needs exactly one of B1_mT, B1_list_mT")),
        }
    }

    pub fn b1(&self) -> Result<f64> {
        self.b1_mt.ok_or_else(|| config_err("[drive] needs B1_mT"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Rabi,
    Ramsey,
    TransientNutation,
    InversionRecovery,
    DemurCw,
}

/// Either a named template filled from the drive block or explicit segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceBlock {
    #[serde(default)]
    pub template: Option<Template>,
    #[serde(default)]
    pub segments: Option<Vec<PulseSegment>>,
    #[serde(rename = "t_end_ns")]
    pub t_end_ns: f64,
    #[serde(default, rename = "t_start_ns")]
    pub t_start_ns: f64,
    /// Rabi pulse length.
    #[serde(default, rename = "duration_ns")]
    pub duration_ns: Option<f64>,
    /// Sweeps the Rabi pulse length; each entry gives one final-state sample.
    #[serde(default, rename = "duration_list_ns")]
    pub duration_list_ns: Option<Vec<f64>>,
    /// Ramsey π/2 pulse length.
    #[serde(default, rename = "t_half_ns")]
    pub t_half_ns: Option<f64>,
    #[serde(default, rename = "tau_ns")]
    pub tau_ns: Option<f64>,
    #[serde(default, rename = "tau_list_ns")]
    pub tau_list_ns: Option<Vec<f64>>,
    /// Phases of the second Ramsey pulse combined by phase cycling.
    #[serde(default, rename = "phase_cycle_rad")]
    pub phase_cycle_rad: Option<Vec<f64>>,
    #[serde(default, rename = "phase2_rad")]
    pub phase2_rad: f64,
    #[serde(default, rename = "t_pi_ns")]
    pub t_pi_ns: Option<f64>,
    #[serde(default, rename = "delay_ns")]
    pub delay_ns: Option<f64>,
    #[serde(default, rename = "t_detect_ns")]
    pub t_detect_ns: Option<f64>,
    #[serde(default, rename = "ramp_ns")]
    pub ramp_ns: f64,
    #[serde(default)]
    pub max_segments: Option<usize>,
}

fn need(v: Option<f64>, key: &str) -> Result<f64> {
    v.ok_or_else(|| config_err(format!("[sequence] template needs {key}")))
}

impl SequenceBlock {
    /// Builds the sequence; `duration` and `tau` override the configured single values so
    /// sweeps can reuse one block.
    pub fn build(
        &self,
        drive: Option<&DriveBlock>,
        sys: &SpinSystem,
        duration: Option<f64>,
        tau: Option<f64>,
        phase2: Option<f64>,
    ) -> Result<PulseSequence> {
        let geometry = drive.map(|d| d.geometry).unwrap_or(Geometry::LF);
        let mut seq = match (&self.template, &self.segments) {
            (None, Some(segs)) => PulseSequence::new(segs.clone(), self.t_end_ns, geometry),
            (Some(t), None) => {
                let d = drive.ok_or_else(|| config_err("sequence templates need a [drive] block"))?;
                let (b1, nu) = (d.b1()?, d.nu_uw(sys)?);
                let t0 = self.t_start_ns;
                let t_end = self.t_end_ns;
                match t {
                    Template::Rabi => {
                        let dur = need(duration.or(self.duration_ns), "duration_ns")?;
                        templates::rabi(t0, dur, b1, nu, t_end, geometry)
                    }
                    Template::Ramsey => templates::ramsey(
                        t0,
                        need(self.t_half_ns, "t_half_ns")?,
                        need(tau.or(self.tau_ns), "tau_ns")?,
                        phase2.unwrap_or(self.phase2_rad),
                        b1,
                        nu,
                        t_end,
                        geometry,
                    ),
                    Template::TransientNutation => templates::transient_nutation(t0, b1, nu, t_end, geometry),
                    Template::InversionRecovery => templates::inversion_recovery(
                        t0,
                        need(self.t_pi_ns, "t_pi_ns")?,
                        need(self.delay_ns, "delay_ns")?,
                        need(self.t_detect_ns, "t_detect_ns")?,
                        b1,
                        nu,
                        t_end,
                        geometry,
                    ),
                    Template::DemurCw => templates::demur_cw(b1, nu, t_end, geometry),
                }
            }
            _ => return Err(config_err("[sequence] needs exactly one of template, segments")),
        };
        seq = seq.with_ramp(self.ramp_ns);
        if let Some(n) = self.max_segments {
            seq = seq.with_max_segments(n);
        }
        seq.validate().map_err(|e| config_err(format!("[sequence] {e}")))?;
        Ok(seq)
    }
}

/// Named coherence dephasing plus optional explicit per-pair rates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationBlock {
    #[serde(default)]
    pub electron_per_us: f64,
    #[serde(default)]
    pub muon12_per_us: f64,
    #[serde(default)]
    pub muon34_per_us: f64,
    #[serde(default, rename = "T1_per_us")]
    pub t1_per_us: f64,
    #[serde(default)]
    pub rates: Vec<PairRate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRate {
    pub i: usize,
    pub j: usize,
    pub rate_per_us: f64,
}

impl RelaxationBlock {
    pub fn model(&self) -> Result<RelaxationModel> {
        let mut m = RelaxationModel::electron_muon(self.electron_per_us, self.muon12_per_us, self.muon34_per_us)
            .with_t1(self.t1_per_us);
        for r in &self.rates {
            if !(1..=4).contains(&r.i) || !(1..=4).contains(&r.j) || r.i == r.j {
                return Err(config_err("[[relaxation.rates]] needs two distinct labels in 1..=4"));
            }
            m = m.with_rate(r.i, r.j, r.rate_per_us);
        }
        m.validate().map_err(|e| config_err(format!("[relaxation] {e}")))?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    #[serde(default = "default_frame")]
    pub frame: Frame,
    #[serde(default = "default_dt", rename = "dt_ns")]
    pub dt_ns: f64,
    #[serde(default = "default_sampling")]
    pub sampling: Sampling,
    /// Lab frame: record every n integration steps.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Gaussian electron line averaged by quadrature; 0 disables the ensemble.
    #[serde(default, rename = "line_fwhm_MHz")]
    pub line_fwhm_mhz: f64,
    #[serde(default = "default_quadrature")]
    pub quadrature_points: usize,
    #[serde(default, rename = "electron_offset_MHz")]
    pub electron_offset_mhz: f64,
}

fn default_frame() -> Frame {
    Frame::Rotating
}
fn default_dt() -> f64 {
    1.0
}
fn default_sampling() -> Sampling {
    Sampling::BinAverage
}
fn default_record_every() -> usize {
    1
}
fn default_quadrature() -> usize {
    21
}

impl Default for SimulationBlock {
    fn default() -> Self {
        SimulationBlock {
            frame: default_frame(),
            dt_ns: default_dt(),
            sampling: default_sampling(),
            record_every: default_record_every(),
            line_fwhm_mhz: 0.0,
            quadrature_points: default_quadrature(),
            electron_offset_mhz: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Trace,
    Histograms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisBlock {
    /// Data file for `fit`; relative paths resolve against the output directory first and
    /// the config file's directory second.
    #[serde(default)]
    pub input: Option<String>,
    #[serde(default = "default_input_kind")]
    pub input_kind: InputKind,
    #[serde(default = "default_min_counts")]
    pub min_counts: u64,
    #[serde(default, rename = "fit_window_ns")]
    pub fit_window_ns: Option<(f64, f64)>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    #[serde(default)]
    pub multistart: Option<usize>,
    #[serde(default = "default_window")]
    pub window: Window,
    #[serde(default = "default_pad")]
    pub pad_factor: usize,
    #[serde(default, rename = "band_MHz")]
    pub band_mhz: Option<(f64, f64)>,
    #[serde(default = "default_floor")]
    pub noise_floor: f64,
    /// Spectrum of each simulated trace alongside the trace.
    #[serde(default)]
    pub spectrum: bool,
    /// Peaks below this fraction of the strongest are not reported.
    #[serde(default = "default_peak_rel")]
    pub peak_min_rel: f64,
    /// `demur`: also propagate numerically and report the spectral peaks.
    #[serde(default)]
    pub numeric: bool,
    /// `demur`: fit two damped lines to each numeric trace.
    #[serde(default = "default_true")]
    pub numeric_fit: bool,
    #[serde(default = "default_exclusion", rename = "exclusion_mT")]
    pub exclusion_mt: f64,
    #[serde(default, rename = "nu1_list_MHz")]
    pub nu1_list_mhz: Option<Vec<f64>>,
    #[serde(default, rename = "omega_list_MHz")]
    pub omega_list_mhz: Option<Vec<f64>>,
    #[serde(default, rename = "nu1_fwhm_MHz")]
    pub nu1_fwhm_mhz: f64,
    #[serde(default, rename = "omega_fwhm_MHz")]
    pub omega_fwhm_mhz: f64,
    /// `narrowing`: electron line for the damping-versus-drive run; omitted skips the run.
    #[serde(default, rename = "damping_line_fwhm_MHz")]
    pub damping_line_fwhm_mhz: Option<f64>,
    #[serde(default)]
    pub damping_points: Option<usize>,
}

fn default_true() -> bool {
    true
}
fn default_input_kind() -> InputKind {
    InputKind::Trace
}
fn default_min_counts() -> u64 {
    crate::fitkit::DEFAULT_MIN_COUNTS
}
fn default_window() -> Window {
    Window::Hann
}
fn default_pad() -> usize {
    8
}
fn default_floor() -> f64 {
    1e-2
}
fn default_peak_rel() -> f64 {
    0.05
}
fn default_exclusion() -> f64 {
    crate::analytic::DEFAULT_EXCLUSION_MT
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        toml::from_str("").expect("analysis defaults")
    }
}

/// Poisson histogram synthesis. Without `truth` the simulated sequence supplies the
/// polarization; with it, the analysis model evaluated at `truth` supplies the asymmetry
/// A0_max·P(t) directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthBlock {
    pub n_muons: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(rename = "A0_max")]
    pub a0_max: f64,
    #[serde(default)]
    pub f_dia: f64,
    #[serde(default)]
    pub phi_dia_rad: f64,
    #[serde(default, rename = "bin_ns")]
    pub bin_ns: Option<f64>,
    #[serde(default)]
    pub truth: Option<std::collections::BTreeMap<String, f64>>,
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub format: Option<OutputFormat>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Parsed config with the raw bytes it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// Hex SHA-256 of the file bytes.
    pub hash: String,
    pub source: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentConfig {
    /// TOML unless the text starts with `{`, then JSON. Errors carry line/column and key.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| config_err(format!("{origin}: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| config_err(format!("{origin}: {e}")))?
        };
        cfg.system.validate().map_err(|e| config_err(format!("{origin}: [system] {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| config_err(format!("{}: not UTF-8", path.display())))?;
        let config = Self::parse(&text, &path.display().to_string())?;
        Ok(LoadedConfig { config, hash: sha256_hex(&bytes), source: path.display().to_string() })
    }

    pub fn from_str_named(text: &str, origin: &str) -> Result<LoadedConfig> {
        let config = Self::parse(text, origin)?;
        Ok(LoadedConfig { config, hash: sha256_hex(text.as_bytes()), source: origin.to_string() })
    }

    pub fn fields(&self) -> Result<Vec<f64>> {
        self.field.as_ref().ok_or_else(|| config_err("missing [field] block"))?.fields()
    }

    pub fn drive(&self) -> Result<&DriveBlock> {
        self.drive.as_ref().ok_or_else(|| config_err("missing [drive] block"))
    }

    pub fn sequence_block(&self) -> Result<&SequenceBlock> {
        self.sequence.as_ref().ok_or_else(|| config_err("missing [sequence] block"))
    }

    pub fn relaxation_model(&self) -> Result<RelaxationModel> {
        self.relaxation.as_ref().map(|r| r.model()).unwrap_or_else(|| Ok(RelaxationModel::none()))
    }

    pub fn geometry(&self) -> Geometry {
        self.drive.as_ref().map(|d| d.geometry).unwrap_or(Geometry::LF)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
[system]
g_e = 2.0023
[system.hyperfine]
kind = "isotropic"
A_iso_MHz = 4497.0
[field.sweep]
start_mT = 0.0
stop_mT = 100.0
points = 11
"#;

    #[test]
    fn minimal_toml_parses_with_defaults() {
        let c = ExperimentConfig::parse(MINIMAL, "t").unwrap();
        assert_eq!(c.seed, 3);
        let f = c.fields().unwrap();
        assert_eq!(f.len(), 11);
        assert!((f[10] - 100.0).abs() < 1e-12);
        assert_eq!(c.simulation.sampling, Sampling::BinAverage);
        assert_eq!(c.analysis.pad_factor, 8);
    }

    #[test]
    fn unknown_key_reports_its_name_and_line() {
        let bad = MINIMAL.replace("points = 11", "points = 11\nB0 = 5.0");
        let e = ExperimentConfig::parse(&bad, "cfg.toml").unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        let msg = e.to_string();
        assert!(msg.contains("B0") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn unit_less_drive_key_rejected() {
        let bad = format!("{MINIMAL}\n[drive]\nnu_uw = 100.0\nB1_mT = 0.1\n");
        assert!(ExperimentConfig::parse(&bad, "t").is_err());
    }

    #[test]
    fn json_is_accepted() {
        let c = ExperimentConfig::parse(MINIMAL, "t").unwrap();
        let j = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::parse(&j, "j").unwrap(), c);
    }

    #[test]
    fn ramsey_template_built_from_drive() {
        let text = format!(
            "{MINIMAL}\n[drive]\nresonant_with = {{ transition = [4, 3], B0_mT = 82.5 }}\nB1_mT = 0.2\n\
             [sequence]\ntemplate = \"ramsey\"\nt_start_ns = 100\nt_half_ns = 36\ntau_ns = 50\nt_end_ns = 600\n"
        );
        let c = ExperimentConfig::parse(&text, "t").unwrap();
        let seq = c.sequence_block().unwrap().build(c.drive.as_ref(), &c.system, None, Some(80.0), None).unwrap();
        assert_eq!(seq.segments.len(), 2);
        assert!((seq.segments[1].t_start - (100.0 + 36.0 + 80.0)).abs() < 1e-12);
    }

    #[test]
    fn field_block_needs_exactly_one_form() {
        let f = FieldBlock { b0_mt: Some(1.0), b0_list_mt: Some(vec![1.0]), sweep: None };
        assert!(f.fields().is_err());
        assert!(FieldBlock::default().fields().is_err());
    }
}
