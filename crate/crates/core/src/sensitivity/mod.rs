//! Sensitivity analysis for a hypothetical binary unmeasured confounder:
//! decision-propensity estimation, closed-form nuisance solves, dataset
//! augmentation, fractional-response re-estimation, grid search, and
//! calibration of the confounder-strength cap.

mod augment;
mod calibrate;
mod grid;
mod propensity;
mod solve;

pub use augment::{augment, reestimate, AugmentedRow, SensitivityParams};
pub use calibrate::{calibrate_theta, ThetaCalibration};
pub use grid::{grid_search, GridSpec, GroupBand, SensitivityCell, SensitivityResult};
pub use propensity::{fit_propensity, PropensityConfig, PropensityFit};
pub use solve::{mixture, posterior_u, solve_beta, solve_gamma};
