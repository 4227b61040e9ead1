//! Estimation of preparedness-adjusted enrollment disparities.
//!
//! The pipeline mirrors a four-step design:
//!
//! 1. [`dataset`] loads or simulates cohort tables of unit records
//!    (group, stratum, enrollment decision, assessment participation and
//!    passage, covariates) and classifies units by information status.
//! 2. [`prepmodel`] fits a gradient-boosted probability model of assessment
//!    passage on complete-information units and scores every unit with an
//!    ex-ante success probability `mu`.
//! 3. [`glm`] fits weighted logistic regressions: the preparedness-adjusted
//!    model (decision ~ group + logit(mu) + stratum fixed effects), three
//!    baseline specifications, and bootstrap confidence intervals.
//! 4. [`sensitivity`] bounds the group coefficients under a hypothetical
//!    binary unmeasured confounder via closed-form nuisance solves, dataset
//!    augmentation, fractional-response re-estimation, and a grid search.

pub mod dataset;
pub mod error;
pub mod features;
pub mod glm;
pub mod prepmodel;
pub mod sensitivity;
pub mod util;

pub use error::{Error, Result};
