use serde::{Deserialize, Serialize};

use crate::dataset::CohortTable;
use crate::error::{Error, Result};

use super::design::{build_design, DesignSpec, Outcome, Term};
use super::irls::{fit_logistic, AdjustedFit, FitOptions};

/// The preparedness-adjusted regression:
/// decision ~ group + logit(mu) + stratum fixed effects.
pub fn fit_adjusted(table: &CohortTable, mu: &[f64]) -> Result<AdjustedFit> {
    let spec = DesignSpec::new(
        Outcome::Decision,
        vec![
            Term::Intercept,
            Term::GroupDummies,
            Term::PrepLogit,
            Term::StratumFixedEffects,
        ],
    );
    let design = build_design(table, &spec, Some(mu))?;
    fit_logistic(&design, &FitOptions::default())
}

/// Baseline regression variants contrasted with the adjusted model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineVariant {
    /// decision ~ group + stratum
    Raw,
    /// adds an extensive covariate list
    TraditionalI,
    /// adds a smaller selected covariate list
    TraditionalII,
}

impl BaselineVariant {
    pub fn label(self) -> &'static str {
        match self {
            BaselineVariant::Raw => "raw",
            BaselineVariant::TraditionalI => "traditional_1",
            BaselineVariant::TraditionalII => "traditional_2",
        }
    }
}

/// Named covariate lists for the two traditional baselines.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CovariateSets {
    pub traditional1: Vec<String>,
    pub traditional2: Vec<String>,
}

/// Fit one baseline disparity regression.
pub fn fit_baseline(
    table: &CohortTable,
    variant: BaselineVariant,
    covariate_sets: &CovariateSets,
) -> Result<AdjustedFit> {
    let mut terms = vec![Term::Intercept, Term::GroupDummies, Term::StratumFixedEffects];
    let extra = match variant {
        BaselineVariant::Raw => &[] as &[String],
        BaselineVariant::TraditionalI => {
            if covariate_sets.traditional1.is_empty() {
                return Err(Error::Config(
                    "traditional I requires a nonempty covariate set".to_string(),
                ));
            }
            &covariate_sets.traditional1
        }
        BaselineVariant::TraditionalII => {
            if covariate_sets.traditional2.is_empty() {
                return Err(Error::Config(
                    "traditional II requires a nonempty covariate set".to_string(),
                ));
            }
            &covariate_sets.traditional2
        }
    };
    terms.extend(extra.iter().map(|c| Term::Covariate(c.clone())));
    let design = build_design(table, &DesignSpec::new(Outcome::Decision, terms), None)?;
    fit_logistic(&design, &FitOptions::default())
}
