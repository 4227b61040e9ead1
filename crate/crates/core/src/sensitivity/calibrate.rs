use serde::{Deserialize, Serialize};

use crate::dataset::{CohortTable, Covariate};
use crate::error::{Error, Result};
use crate::glm::{build_design, fit_logistic, DesignSpec, FitOptions, Outcome, Term};
use crate::util::{mean, sample_sd};

/// Result of benchmarking the confounder cap against an observed covariate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaCalibration {
    /// log-odds coefficient of the binarized benchmark on the decision
    pub decision_coef: f64,
    /// log-odds coefficient of the binarized benchmark on passage
    /// (complete-information units)
    pub passage_coef: f64,
    /// the suggested cap: log(odds_bound)
    pub theta: f64,
    /// smallest integer odds multiplier covering both coefficients (>= 2)
    pub odds_bound: u32,
}

const FLAG_COLUMN: &str = "benchmark_flag";

fn flag_regression(
    table: &CohortTable,
    outcome: Outcome,
    flag: &[f64],
    companions: &[String],
) -> Result<f64> {
    let mut with_flag = table.clone();
    let mut covs = table.covariates().to_vec();
    if covs.iter().any(|c| c.name() == FLAG_COLUMN) {
        return Err(Error::Config(format!(
            "table already has a column named '{FLAG_COLUMN}'"
        )));
    }
    covs.push(Covariate::Numeric {
        name: FLAG_COLUMN.to_string(),
        values: flag.to_vec(),
        missing: vec![false; flag.len()],
    });
    with_flag.set_covariates(covs);

    let mut terms = vec![Term::Intercept, Term::StratumFixedEffects];
    terms.extend(companions.iter().map(|c| Term::Covariate(c.clone())));
    terms.push(Term::Covariate(FLAG_COLUMN.to_string()));
    let design = build_design(&with_flag, &DesignSpec::new(outcome, terms), None)?;
    let fit = fit_logistic(&design, &FitOptions::default())?;
    fit.coefficient(FLAG_COLUMN).ok_or_else(|| {
        Error::Numeric("benchmark flag was dropped as collinear; choose another benchmark".into())
    })
}

/// Calibrate the sensitivity cap against a strong observed covariate.
///
/// The benchmark is binarized at one standard deviation above its mean;
/// its log-odds association with the decision (all units) and with passage
/// (complete-information units) is estimated with stratum fixed effects and
/// the configured companion adjustments. The suggested cap is the larger
/// coefficient rounded up to the nearest log-integer, floored at log 2.
pub fn calibrate_theta(
    table: &CohortTable,
    benchmark: &str,
    companions: &[String],
) -> Result<ThetaCalibration> {
    let values = match table.covariate(benchmark) {
        Some(Covariate::Numeric { values, missing, .. }) => {
            if missing.iter().any(|&m| m) {
                return Err(Error::Config(format!(
                    "benchmark '{benchmark}' has missing cells; impute first"
                )));
            }
            values
        }
        Some(Covariate::Categorical { .. }) => {
            return Err(Error::Config(format!(
                "benchmark '{benchmark}' must be numeric"
            )))
        }
        None => {
            return Err(Error::Schema(format!(
                "benchmark covariate '{benchmark}' not found"
            )))
        }
    };
    let sd = sample_sd(values);
    if sd == 0.0 {
        return Err(Error::DegenerateTarget(format!(
            "benchmark '{benchmark}' is constant"
        )));
    }
    let threshold = mean(values) + sd;
    let flag: Vec<f64> = values.iter().map(|&v| f64::from(v > threshold)).collect();

    let decision_coef = flag_regression(table, Outcome::Decision, &flag, companions)?;

    let complete_rows = table.complete_rows();
    let complete = table.subset(&complete_rows);
    let complete_flag: Vec<f64> = complete_rows.iter().map(|&i| flag[i]).collect();
    let passage_coef = flag_regression(&complete, Outcome::Passed, &complete_flag, companions)?;

    let strongest = decision_coef.abs().max(passage_coef.abs());
    // round up on the odds-ratio scale, snapping values a hair above an
    // integer back down; never probe less than a doubling
    let odds_bound = ((strongest.exp() - 1e-6).ceil() as u32).max(2);
    Ok(ThetaCalibration {
        decision_coef,
        passage_coef,
        theta: f64::from(odds_bound).ln(),
        odds_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CohortTableBuilder, Factor};

    /// Construct a table where the flag's sample odds ratio is exact by
    /// counts on both regressions. Flag = 0: enrollment odds 1/2, passage
    /// odds 2/3 among the enrolled. Flag = 1: both odds multiplied by `or`.
    /// Counts are integral for `or` in {1, 3}.
    fn exact_or_table(or: f64) -> CohortTable {
        let n0 = 300;
        let enrolled0 = 100; // odds 1/2
        let passed0 = 40; // odds 2/3 among the 100 enrolled
        let n1 = 150;
        let enrolled1 = ((or / 2.0) * n1 as f64 / (1.0 + or / 2.0)).round() as usize;
        let passage_odds1 = (2.0 / 3.0) * or;
        let passed1 =
            (enrolled1 as f64 * passage_odds1 / (1.0 + passage_odds1)).round() as usize;

        let n = n0 + n1;
        let mut bench = Vec::with_capacity(n);
        let mut decision = Vec::with_capacity(n);
        let mut passed = Vec::with_capacity(n);
        for i in 0..n0 {
            bench.push(0.0);
            decision.push(u8::from(i < enrolled0));
            passed.push(u8::from(i < passed0));
        }
        for i in 0..n1 {
            bench.push(10.0); // far above mean + sd
            decision.push(u8::from(i < enrolled1));
            passed.push(u8::from(i < passed1));
        }
        CohortTableBuilder {
            unit_id: (0..n).map(|i| i.to_string()).collect(),
            group: Factor::from_labels(&vec!["g"; n]),
            stratum: Factor::from_labels(&vec!["s"; n]),
            cohort: Factor::from_labels(&vec!["c"; n]),
            assessed: decision.clone(),
            decision,
            passed,
            covariates: vec![Covariate::Numeric {
                name: "gpa".into(),
                values: bench,
                missing: vec![false; n],
            }],
            reference_group: None,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn exact_tripling_returns_log_three() {
        // s1 chosen so the sample odds ratio is exactly 3: odds 1/2 -> 3/2
        // means 90 of 150
        let table = exact_or_table(3.0);
        let cal = calibrate_theta(&table, "gpa", &[]).unwrap();
        assert_eq!(cal.odds_bound, 3);
        assert!((cal.theta - 3f64.ln()).abs() < 1e-12);
        assert!((cal.decision_coef - 3f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn zero_association_floors_at_log_two() {
        let table = exact_or_table(1.0);
        let cal = calibrate_theta(&table, "gpa", &[]).unwrap();
        assert_eq!(cal.odds_bound, 2);
        assert!((cal.theta - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_benchmark_rejected() {
        let mut table = exact_or_table(2.0);
        let covs = vec![Covariate::Numeric {
            name: "gpa".into(),
            values: vec![1.0; table.n_units()],
            missing: vec![false; table.n_units()],
        }];
        table.set_covariates(covs);
        let err = calibrate_theta(&table, "gpa", &[]).unwrap_err();
        assert!(matches!(err, Error::DegenerateTarget(_)), "{err}");
    }

    #[test]
    fn unknown_or_categorical_benchmark_rejected() {
        let table = exact_or_table(2.0);
        assert!(calibrate_theta(&table, "nope", &[]).is_err());
    }
}
