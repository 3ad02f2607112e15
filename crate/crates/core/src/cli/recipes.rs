//! Built-in configs for `reproduce`. Each recipe is an ordinary config file embedded at build
//! time, so `--config configs/<name>.toml` with the matching command gives the same artifacts.

use clap::ValueEnum;

use crate::config::{ExperimentConfig, LoadedConfig};
use crate::error::Result;

use super::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Effective Rabi frequency across the (3,4) resonance.
    #[value(name = "fig2")]
    Fig2,
    /// Phase-cycled Ramsey fringes.
    #[value(name = "fig3")]
    Fig3,
    /// Muon lines under continuous drive in Si, with dephasing.
    #[value(name = "fig4")]
    Fig4,
    /// Double-quantum resonance shift versus drive.
    #[value(name = "fig5c")]
    Fig5c,
    /// Rabi frequency over (B0, B1).
    #[value(name = "fig11")]
    Fig11,
    /// Zero-field lab-frame Rabi oscillations.
    #[value(name = "fig12")]
    Fig12,
    /// Numeric against analytic muon lines in Si.
    #[value(name = "fig13")]
    Fig13,
    /// Flip-angle sweep.
    #[value(name = "fig15-17")]
    Fig15to17,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5c => "fig5c",
            Figure::Fig11 => "fig11",
            Figure::Fig12 => "fig12",
            Figure::Fig13 => "fig13",
            Figure::Fig15to17 => "fig15-17",
        }
    }

    pub fn task(self) -> Task {
        match self {
            Figure::Fig2 | Figure::Fig11 => Task::RabiMap,
            Figure::Fig3 | Figure::Fig12 | Figure::Fig15to17 => Task::Simulate,
            Figure::Fig4 | Figure::Fig13 => Task::Demur,
            Figure::Fig5c => Task::ShiftCurve,
        }
    }

    pub fn config_text(self) -> &'static str {
        match self {
            Figure::Fig2 => include_str!("../../configs/fig2.toml"),
            Figure::Fig3 => include_str!("../../configs/fig3.toml"),
            Figure::Fig4 => include_str!("../../configs/fig4.toml"),
            Figure::Fig5c => include_str!("../../configs/fig5c.toml"),
            Figure::Fig11 => include_str!("../../configs/fig11.toml"),
            Figure::Fig12 => include_str!("../../configs/fig12.toml"),
            Figure::Fig13 => include_str!("../../configs/fig13.toml"),
            Figure::Fig15to17 => include_str!("../../configs/fig15-17.toml"),
        }
    }

    pub fn config(self) -> Result<LoadedConfig> {
        ExperimentConfig::from_str_named(self.config_text(), &format!("builtin:{}.toml", self.name()))
    }
}
