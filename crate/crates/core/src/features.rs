//! Feature encoding shared by the preparedness and propensity learners.
//!
//! Covariates and stratum indicators become model features; the group
//! column is excluded unless a learner explicitly opts in (the propensity
//! model may, the preparedness model cannot — there is no code path for it).

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::{CohortTable, Covariate, MISSING_LEVEL};
use crate::error::{Error, Result};

/// Whether the group column participates as a feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupColumn {
    Exclude,
    Include,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureSpec {
    Numeric {
        name: String,
    },
    /// A categorical feature; trees split one level vs the rest, which is
    /// equivalent to one-hot indicator splits.
    Categorical {
        name: String,
        levels: Vec<String>,
    },
}

impl FeatureSpec {
    pub fn name(&self) -> &str {
        match self {
            FeatureSpec::Numeric { name } => name,
            FeatureSpec::Categorical { name, .. } => name,
        }
    }
}

/// Frozen column order and categorical encodings for a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMetadata {
    pub features: Vec<FeatureSpec>,
    pub group_column: GroupColumn,
}

/// Name used for the stratum feature (distinct from covariate names).
pub const STRATUM_FEATURE: &str = "(stratum)";
/// Name used for the group feature when a learner opts in.
pub const GROUP_FEATURE: &str = "(group)";

impl FeatureMetadata {
    /// Freeze feature order and encodings from a table: covariates in table
    /// order, then stratum indicators, then (optionally) group indicators.
    pub fn from_table(table: &CohortTable, group_column: GroupColumn) -> Self {
        let mut features: Vec<FeatureSpec> = table
            .covariates()
            .iter()
            .map(|cov| match cov {
                Covariate::Numeric { name, .. } => FeatureSpec::Numeric { name: name.clone() },
                Covariate::Categorical { name, levels, .. } => FeatureSpec::Categorical {
                    name: name.clone(),
                    levels: levels.clone(),
                },
            })
            .collect();
        features.push(FeatureSpec::Categorical {
            name: STRATUM_FEATURE.to_string(),
            levels: table.stratum().levels().to_vec(),
        });
        if group_column == GroupColumn::Include {
            features.push(FeatureSpec::Categorical {
                name: GROUP_FEATURE.to_string(),
                levels: table.group().levels().to_vec(),
            });
        }
        Self { features, group_column }
    }
}

/// Feature-major encoded matrix.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub columns: Vec<FeatureValues>,
}

#[derive(Debug, Clone)]
pub enum FeatureValues {
    Numeric(Vec<f64>),
    /// Codes index the metadata's level list; a code equal to `n_levels`
    /// marks a level unseen at training time.
    Categorical { codes: Vec<u32>, n_levels: u32 },
}

/// Encode a table against frozen metadata.
///
/// Numeric covariates must be fully observed (impute first). Unseen
/// categorical levels map to the explicit missing level when the training
/// data had one, and otherwise to a virtual "unseen" code with a warning.
pub fn encode(table: &CohortTable, metadata: &FeatureMetadata) -> Result<FeatureMatrix> {
    let n_rows = table.n_units();
    let mut columns = Vec::with_capacity(metadata.features.len());
    for spec in &metadata.features {
        let col = match spec {
            FeatureSpec::Numeric { name } => {
                let cov = table.covariate(name).ok_or_else(|| {
                    Error::Schema(format!("table lacks numeric feature column '{name}'"))
                })?;
                match cov {
                    Covariate::Numeric { values, missing, .. } => {
                        if let Some(row) = missing.iter().position(|&m| m) {
                            return Err(Error::Invariant {
                                row,
                                message: format!(
                                    "numeric feature '{name}' has missing cells; impute first"
                                ),
                            });
                        }
                        FeatureValues::Numeric(values.clone())
                    }
                    Covariate::Categorical { .. } => {
                        return Err(Error::Schema(format!(
                            "feature '{name}' is categorical in the table but numeric in the model"
                        )))
                    }
                }
            }
            FeatureSpec::Categorical { name, levels } => {
                let (table_levels, codes, missing): (&[String], &[u32], Option<&[bool]>) =
                    if name == STRATUM_FEATURE {
                        (table.stratum().levels(), table.stratum().codes(), None)
                    } else if name == GROUP_FEATURE {
                        (table.group().levels(), table.group().codes(), None)
                    } else {
                        match table.covariate(name) {
                            Some(Covariate::Categorical { levels, codes, missing, .. }) => {
                                (levels, codes, Some(missing))
                            }
                            Some(Covariate::Numeric { .. }) => {
                                return Err(Error::Schema(format!(
                                    "feature '{name}' is numeric in the table but categorical in the model"
                                )))
                            }
                            None => {
                                return Err(Error::Schema(format!(
                                    "table lacks categorical feature column '{name}'"
                                )))
                            }
                        }
                    };
                // translate table codes into the model's level space
                let missing_code = levels.iter().position(|l| l == MISSING_LEVEL);
                let map: Vec<u32> = table_levels
                    .iter()
                    .map(|l| match levels.iter().position(|m| m == l) {
                        Some(i) => i as u32,
                        None => {
                            let fallback = missing_code.unwrap_or(levels.len());
                            warn!(
                                "feature '{name}': level '{l}' unseen at training; \
                                 mapped to {}",
                                if missing_code.is_some() { "the missing level" } else { "no level" }
                            );
                            fallback as u32
                        }
                    })
                    .collect();
                let codes = codes
                    .iter()
                    .enumerate()
                    .map(|(row, &c)| {
                        if missing.is_some_and(|m| m[row]) {
                            missing_code.map_or(levels.len() as u32, |i| i as u32)
                        } else {
                            map[c as usize]
                        }
                    })
                    .collect();
                FeatureValues::Categorical {
                    codes,
                    n_levels: levels.len() as u32,
                }
            }
        };
        columns.push(col);
    }
    Ok(FeatureMatrix { n_rows, columns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CohortTableBuilder, Factor};

    fn table(groups: &[&str], strata: &[&str], track: &[&str]) -> CohortTable {
        let n = groups.len();
        let f = Factor::from_labels(track);
        CohortTableBuilder {
            unit_id: (0..n).map(|i| i.to_string()).collect(),
            group: Factor::from_labels(groups),
            stratum: Factor::from_labels(strata),
            cohort: Factor::from_labels(&vec!["c"; n]),
            decision: vec![0; n],
            assessed: vec![0; n],
            passed: vec![0; n],
            covariates: vec![
                Covariate::Numeric {
                    name: "x".into(),
                    values: (0..n).map(|i| i as f64).collect(),
                    missing: vec![false; n],
                },
                Covariate::Categorical {
                    name: "track".into(),
                    levels: f.levels().to_vec(),
                    codes: f.codes().to_vec(),
                    missing: vec![false; n],
                },
            ],
            reference_group: None,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn group_is_structurally_excluded_by_default() {
        let t = table(&["a", "b"], &["s1", "s2"], &["u", "v"]);
        let meta = FeatureMetadata::from_table(&t, GroupColumn::Exclude);
        assert!(meta.features.iter().all(|f| f.name() != GROUP_FEATURE));
        assert!(meta.features.iter().any(|f| f.name() == STRATUM_FEATURE));
        let meta_g = FeatureMetadata::from_table(&t, GroupColumn::Include);
        assert!(meta_g.features.iter().any(|f| f.name() == GROUP_FEATURE));
    }

    #[test]
    fn unseen_level_maps_to_virtual_code() {
        let train = table(&["a", "a"], &["s1", "s2"], &["u", "v"]);
        let meta = FeatureMetadata::from_table(&train, GroupColumn::Exclude);
        let test = table(&["a", "a"], &["s1", "s2"], &["u", "w"]); // "w" unseen
        let m = encode(&test, &meta).unwrap();
        match &m.columns[1] {
            FeatureValues::Categorical { codes, n_levels } => {
                assert_eq!(codes[1], *n_levels);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn missing_numeric_rejected() {
        let mut t = table(&["a", "a"], &["s1", "s2"], &["u", "v"]);
        let mut covs = t.covariates().to_vec();
        if let Covariate::Numeric { missing, .. } = &mut covs[0] {
            missing[1] = true;
        }
        t.set_covariates(covs);
        let meta = FeatureMetadata::from_table(&t, GroupColumn::Exclude);
        assert!(encode(&t, &meta).is_err());
    }
}
