use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::table::{CohortTable, Covariate};

/// Imputation state: per-(column, cohort) means for numeric covariates,
/// recorded so held-out data can be imputed with training-set means.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputeReport {
    /// means[column][cohort level] = mean of observed cells
    pub means: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Replace missing numeric cells by the mean of their column within the
/// unit's cohort stratum; missing categorical cells become an explicit
/// `"(missing)"` level. Returns the imputed table and the means used.
pub fn impute_means(table: &CohortTable) -> Result<(CohortTable, ImputeReport)> {
    let mut report = ImputeReport::default();
    let cohort = table.cohort();
    for cov in table.covariates() {
        if let Covariate::Numeric { name, values, missing } = cov {
            let mut sums = vec![0.0f64; cohort.n_levels()];
            let mut counts = vec![0usize; cohort.n_levels()];
            for (row, (&v, &m)) in values.iter().zip(missing).enumerate() {
                if !m {
                    let c = cohort.codes()[row] as usize;
                    sums[c] += v;
                    counts[c] += 1;
                }
            }
            let mut col_means = BTreeMap::new();
            for (c, level) in cohort.levels().iter().enumerate() {
                // a cohort with no rows at all imposes no constraint
                let present = cohort.codes().iter().any(|&x| x as usize == c);
                if !present {
                    continue;
                }
                if counts[c] == 0 {
                    return Err(Error::AllMissing {
                        column: name.clone(),
                        cohort: level.clone(),
                    });
                }
                col_means.insert(level.clone(), sums[c] / counts[c] as f64);
            }
            report.means.insert(name.clone(), col_means);
        }
    }
    let imputed = impute_with(table, &report)?;
    Ok((imputed, report))
}

/// Apply previously recorded imputation means to a table (held-out data).
pub fn impute_with(table: &CohortTable, report: &ImputeReport) -> Result<CohortTable> {
    let cohort = table.cohort();
    let covariates = table
        .covariates()
        .iter()
        .map(|cov| match cov {
            Covariate::Numeric { name, values, missing } => {
                let col_means = report.means.get(name);
                let mut out = values.clone();
                for (row, &m) in missing.iter().enumerate() {
                    if m {
                        let level = cohort.level_of(row);
                        let mean = col_means.and_then(|cm| cm.get(level)).ok_or_else(|| {
                            Error::AllMissing {
                                column: name.clone(),
                                cohort: level.to_string(),
                            }
                        })?;
                        out[row] = *mean;
                    }
                }
                Ok(Covariate::Numeric {
                    name: name.clone(),
                    values: out,
                    missing: vec![false; missing.len()],
                })
            }
            Covariate::Categorical { name, levels, codes, missing } => {
                if !missing.iter().any(|&m| m) {
                    return Ok(cov.clone());
                }
                let mut levels = levels.clone();
                let missing_code = match levels.iter().position(|l| l == super::table::MISSING_LEVEL)
                {
                    Some(i) => i as u32,
                    None => {
                        levels.push(super::table::MISSING_LEVEL.to_string());
                        levels.len() as u32 - 1
                    }
                };
                let codes = codes
                    .iter()
                    .zip(missing)
                    .map(|(&c, &m)| if m { missing_code } else { c })
                    .collect();
                Ok(Covariate::Categorical {
                    name: name.clone(),
                    levels,
                    codes,
                    missing: vec![false; missing.len()],
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = table.clone();
    out.set_covariates(covariates);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::table::{CohortTableBuilder, Factor};

    fn table_with(
        cohorts: &[&str],
        numeric: Vec<(&str, Vec<f64>, Vec<bool>)>,
        categorical: Vec<(&str, Vec<&str>, Vec<bool>)>,
    ) -> CohortTable {
        let n = cohorts.len();
        let mut covariates: Vec<Covariate> = numeric
            .into_iter()
            .map(|(name, values, missing)| Covariate::Numeric {
                name: name.to_string(),
                values,
                missing,
            })
            .collect();
        for (name, labels, missing) in categorical {
            let f = Factor::from_labels(&labels);
            covariates.push(Covariate::Categorical {
                name: name.to_string(),
                levels: f.levels().to_vec(),
                codes: f.codes().to_vec(),
                missing,
            });
        }
        CohortTableBuilder {
            unit_id: (0..n).map(|i| i.to_string()).collect(),
            group: Factor::from_labels(&vec!["g"; n]),
            stratum: Factor::from_labels(&vec!["s"; n]),
            cohort: Factor::from_labels(cohorts),
            decision: vec![0; n],
            assessed: vec![0; n],
            passed: vec![0; n],
            covariates,
            reference_group: None,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn fills_with_column_mean_within_cohort() {
        let t = table_with(
            &["a", "a", "a"],
            vec![("x", vec![1.0, f64::NAN, 3.0], vec![false, true, false])],
            vec![],
        );
        let (imp, report) = impute_means(&t).unwrap();
        match imp.covariate("x").unwrap() {
            Covariate::Numeric { values, missing, .. } => {
                assert_eq!(values, &vec![1.0, 2.0, 3.0]);
                assert!(missing.iter().all(|&m| !m));
            }
            _ => panic!(),
        }
        assert_eq!(report.means["x"]["a"], 2.0);
    }

    #[test]
    fn uses_per_cohort_means() {
        let t = table_with(
            &["a", "a", "b", "b", "b"],
            vec![(
                "x",
                vec![2.0, 2.0, 10.0, f64::NAN, 10.0],
                vec![false, false, false, true, false],
            )],
            vec![],
        );
        let (imp, _) = impute_means(&t).unwrap();
        match imp.covariate("x").unwrap() {
            Covariate::Numeric { values, .. } => assert_eq!(values[3], 10.0),
            _ => panic!(),
        }
    }

    #[test]
    fn all_missing_in_one_cohort_errors() {
        let t = table_with(
            &["a", "a", "b"],
            vec![("x", vec![1.0, 2.0, f64::NAN], vec![false, false, true])],
            vec![],
        );
        let err = impute_means(&t).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("'x'") && msg.contains("'b'"), "{msg}");
    }

    #[test]
    fn categorical_missing_becomes_explicit_level() {
        let t = table_with(
            &["a", "a"],
            vec![],
            vec![("lang", vec!["en", "en"], vec![false, true])],
        );
        let (imp, _) = impute_means(&t).unwrap();
        match imp.covariate("lang").unwrap() {
            Covariate::Categorical { levels, codes, missing, .. } => {
                assert!(levels.contains(&"(missing)".to_string()));
                assert_eq!(codes[1], 1);
                assert!(missing.iter().all(|&m| !m));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn imputation_is_idempotent() {
        let t = table_with(
            &["a", "b", "a", "b"],
            vec![(
                "x",
                vec![1.0, f64::NAN, 3.0, 4.0],
                vec![false, true, false, false],
            )],
            vec![("lang", vec!["en", "es", "en", "es"], vec![false, false, true, false])],
        );
        let (once, _) = impute_means(&t).unwrap();
        let (twice, _) = impute_means(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn recorded_means_reusable_on_heldout() {
        let train = table_with(
            &["a", "a"],
            vec![("x", vec![4.0, 8.0], vec![false, false])],
            vec![],
        );
        let (_, report) = impute_means(&train).unwrap();
        let holdout = table_with(&["a"], vec![("x", vec![f64::NAN], vec![true])], vec![]);
        let imputed = impute_with(&holdout, &report).unwrap();
        match imputed.covariate("x").unwrap() {
            Covariate::Numeric { values, .. } => assert_eq!(values[0], 6.0),
            _ => panic!(),
        }
    }
}
