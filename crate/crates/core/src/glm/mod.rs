//! Weighted logistic regression by IRLS, with fractional-response
//! quasi-likelihood support and stratum fixed effects, plus the adjusted
//! and baseline disparity models and bootstrap confidence intervals.

mod adjusted;
mod bootstrap;
mod design;
mod irls;
mod linalg;

pub use adjusted::{fit_adjusted, fit_baseline, BaselineVariant, CovariateSets};
pub use bootstrap::{bootstrap_ci, BootstrapResult};
pub use design::{build_design, Design, DesignSpec, OneHotBlock, Outcome, Term};
pub use irls::{fit_logistic, AdjustedFit, FitOptions, FitTerm};
