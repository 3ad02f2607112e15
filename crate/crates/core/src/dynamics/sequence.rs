use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Geometry;

/// One rectangular microwave pulse. Phase refers to the lab waveform cos(2πνt + φ) with t
/// measured from muon arrival.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSegment {
    #[serde(rename = "t_start_ns")]
    pub t_start: f64,
    #[serde(rename = "duration_ns")]
    pub duration: f64,
    #[serde(rename = "B1_mT")]
    pub b1: f64,
    #[serde(rename = "phase_rad", default)]
    pub phase: f64,
    #[serde(rename = "freq_MHz")]
    pub freq: f64,
}

impl PulseSegment {
    pub fn end(&self) -> f64 {
        self.t_start + self.duration
    }
}

pub const DEFAULT_MAX_SEGMENTS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSequence {
    pub segments: Vec<PulseSegment>,
    #[serde(rename = "t_end_ns")]
    pub t_end: f64,
    pub geometry: Geometry,
    /// Linear rise and fall time applied inside each segment, ns.
    #[serde(rename = "ramp_ns", default)]
    pub ramp: f64,
    #[serde(default = "default_max_segments")]
    pub max_segments: usize,
}

fn default_max_segments() -> usize {
    DEFAULT_MAX_SEGMENTS
}

impl PulseSequence {
    pub fn new(segments: Vec<PulseSegment>, t_end: f64, geometry: Geometry) -> Self {
        PulseSequence { segments, t_end, geometry, ramp: 0.0, max_segments: DEFAULT_MAX_SEGMENTS }
    }

    pub fn free(t_end: f64, geometry: Geometry) -> Self {
        Self::new(Vec::new(), t_end, geometry)
    }

    pub fn with_ramp(mut self, ramp_ns: f64) -> Self {
        self.ramp = ramp_ns;
        self
    }

    pub fn with_max_segments(mut self, n: usize) -> Self {
        self.max_segments = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSequence(m));
        if !self.t_end.is_finite() || self.t_end <= 0.0 {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !self.ramp.is_finite() || self.ramp < 0.0 {
            return bad(format!("ramp must be >= 0, got {}", self.ramp));
        }
        if self.segments.len() > self.max_segments {
            return bad(format!(
                "{} segments exceed the limit of {}",
                self.segments.len(),
                self.max_segments
            ));
        }
        let mut prev_end = 0.0f64;
        for (k, s) in self.segments.iter().enumerate() {
            let fields = [s.t_start, s.duration, s.b1, s.phase, s.freq];
            if fields.iter().any(|x| !x.is_finite()) {
                return bad(format!("segment {k} has non-finite fields"));
            }
            if s.t_start < 0.0 || s.duration < 0.0 || s.b1 < 0.0 {
                return bad(format!("segment {k}: start, duration and B1 must be >= 0"));
            }
            if k > 0 && s.t_start < prev_end - 1e-9 {
                return bad(format!("segment {k} overlaps or precedes segment {}", k - 1));
            }
            prev_end = s.end();
        }
        if prev_end > self.t_end + 1e-9 {
            return bad(format!("last segment ends at {prev_end} ns after t_end {}", self.t_end));
        }
        Ok(())
    }

    /// Common drive frequency, if all segments share one.
    pub fn common_frequency(&self) -> Result<Option<f64>> {
        let mut f: Option<f64> = None;
        for s in &self.segments {
            match f {
                None => f = Some(s.freq),
                Some(v) if (v - s.freq).abs() > 1e-9 * v.abs().max(1.0) => {
                    return Err(Error::InvalidSequence(
                        "rotating frame requires one drive frequency for all segments".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(f)
    }

    /// Drive amplitude envelope factor in [0,1] and the active segment at time t.
    pub fn envelope_at(&self, t: f64) -> Option<(usize, f64)> {
        for (k, s) in self.segments.iter().enumerate() {
            if t >= s.t_start && t < s.end() {
                if self.ramp <= 0.0 {
                    return Some((k, 1.0));
                }
                let r = self.ramp.min(0.5 * s.duration);
                let rise = ((t - s.t_start) / r).min(1.0);
                let fall = ((s.end() - t) / r).min(1.0);
                return Some((k, rise.min(fall)));
            }
        }
        None
    }

    pub fn last_pulse_end(&self) -> f64 {
        self.segments.last().map(|s| s.end()).unwrap_or(0.0)
    }
}

/// Named sequence templates.
pub mod templates {
    use super::*;

    /// Single pulse from `t_start` lasting `duration`.
    pub fn rabi(t_start: f64, duration: f64, b1: f64, freq: f64, t_end: f64, geometry: Geometry) -> PulseSequence {
        PulseSequence::new(
            vec![PulseSegment { t_start, duration, b1, phase: 0.0, freq }],
            t_end,
            geometry,
        )
    }

    /// Continuous drive over the full window, as in CW double resonance.
    pub fn demur_cw(b1: f64, freq: f64, t_end: f64, geometry: Geometry) -> PulseSequence {
        rabi(0.0, t_end, b1, freq, t_end, geometry)
    }

    /// Long pulse whose transient nutation is recorded.
    pub fn transient_nutation(t_start: f64, b1: f64, freq: f64, t_end: f64, geometry: Geometry) -> PulseSequence {
        rabi(t_start, t_end - t_start, b1, freq, t_end, geometry)
    }

    /// Two pulses of length `t_half` separated by free evolution `tau`; the second pulse
    /// carries an extra phase `phase2`.
    #[allow(clippy::too_many_arguments)]
    pub fn ramsey(
        t_start: f64,
        t_half: f64,
        tau: f64,
        phase2: f64,
        b1: f64,
        freq: f64,
        t_end: f64,
        geometry: Geometry,
    ) -> PulseSequence {
        let s2 = t_start + t_half + tau;
        PulseSequence::new(
            vec![
                PulseSegment { t_start, duration: t_half, b1, phase: 0.0, freq },
                PulseSegment { t_start: s2, duration: t_half, b1, phase: phase2, freq },
            ],
            t_end,
            geometry,
        )
    }

    /// Inversion pulse, recovery delay, then a detection pulse.
    #[allow(clippy::too_many_arguments)]
    pub fn inversion_recovery(
        t_start: f64,
        t_pi: f64,
        delay: f64,
        t_detect: f64,
        b1: f64,
        freq: f64,
        t_end: f64,
        geometry: Geometry,
    ) -> PulseSequence {
        let s2 = t_start + t_pi + delay;
        PulseSequence::new(
            vec![
                PulseSegment { t_start, duration: t_pi, b1, phase: 0.0, freq },
                PulseSegment { t_start: s2, duration: t_detect, b1, phase: 0.0, freq },
            ],
            t_end,
            geometry,
        )
    }
}
