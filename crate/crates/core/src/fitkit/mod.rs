//! Weighted least-squares estimation for asymmetry traces and χ² grid searches.

pub mod asymmetry;
pub mod grid;
pub mod lm;
pub mod model;
pub mod ramsey;
pub mod two_zone;

pub use asymmetry::{asymmetry_from_histograms, DEFAULT_MIN_COUNTS};
pub use grid::{chi2_grid, demur_chi2, Axis, Chi2Map, DemurDatum, GridLevel, GridOptions};
pub use lm::{fit_model, profile_interval, FitOptions, FitReport, ParamSpec};
pub use model::{muon_frequency, Component, ModelSpec};
pub use ramsey::{ramsey_extract, FringePoint, Fringes, RamseyShot};
pub use two_zone::{two_zone_rabi_fit, ScanPoint, TwoZoneReport, TwoZoneSpec};
