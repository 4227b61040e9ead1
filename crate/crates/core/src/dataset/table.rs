use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A categorical column with a frozen, explicit level ordering.
///
/// Codes index into `levels`; every cell is observed (missing categorical
/// values are modeled in [`Covariate::Categorical`], not here).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    levels: Vec<String>,
    codes: Vec<u32>,
}

impl Factor {
    pub fn new(levels: Vec<String>, codes: Vec<u32>) -> Result<Self> {
        for (row, &c) in codes.iter().enumerate() {
            if c as usize >= levels.len() {
                return Err(Error::Invariant {
                    row,
                    message: format!("factor code {c} out of range ({} levels)", levels.len()),
                });
            }
        }
        Ok(Self { levels, codes })
    }

    /// Build from raw labels, collecting levels in first-appearance order.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let mut codes = Vec::with_capacity(labels.len());
        for l in labels {
            let l = l.as_ref();
            let code = match levels.iter().position(|x| x == l) {
                Some(i) => i as u32,
                None => {
                    levels.push(l.to_string());
                    levels.len() as u32 - 1
                }
            };
            codes.push(code);
        }
        Self { levels, codes }
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_of(&self, row: usize) -> &str {
        &self.levels[self.codes[row] as usize]
    }

    pub fn code_for(&self, level: &str) -> Option<u32> {
        self.levels.iter().position(|l| l == level).map(|i| i as u32)
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            levels: self.levels.clone(),
            codes: rows.iter().map(|&r| self.codes[r]).collect(),
        }
    }

    /// Count of rows per level.
    pub fn level_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.levels.len()];
        for &c in &self.codes {
            counts[c as usize] += 1;
        }
        counts
    }
}

/// A named covariate column with a per-cell missing mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Covariate {
    Numeric {
        name: String,
        values: Vec<f64>,
        missing: Vec<bool>,
    },
    Categorical {
        name: String,
        levels: Vec<String>,
        codes: Vec<u32>,
        missing: Vec<bool>,
    },
}

/// Explicit level used when missing categorical cells are made observable.
pub const MISSING_LEVEL: &str = "(missing)";

impl Covariate {
    pub fn name(&self) -> &str {
        match self {
            Covariate::Numeric { name, .. } => name,
            Covariate::Categorical { name, .. } => name,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Covariate::Numeric { values, .. } => values.len(),
            Covariate::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_missing(&self) -> bool {
        match self {
            Covariate::Numeric { missing, .. } => missing.iter().any(|&m| m),
            Covariate::Categorical { missing, .. } => missing.iter().any(|&m| m),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        match self {
            Covariate::Numeric { name, values, missing } => Covariate::Numeric {
                name: name.clone(),
                values: rows.iter().map(|&r| values[r]).collect(),
                missing: rows.iter().map(|&r| missing[r]).collect(),
            },
            Covariate::Categorical { name, levels, codes, missing } => Covariate::Categorical {
                name: name.clone(),
                levels: levels.clone(),
                codes: rows.iter().map(|&r| codes[r]).collect(),
                missing: rows.iter().map(|&r| missing[r]).collect(),
            },
        }
    }
}

/// Per-unit information status.
///
/// `Complete` iff the unit both enrolled (decision = 1) and took the
/// assessment (assessed = 1), so its passage outcome is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InformationStatus {
    Complete,
    Incomplete,
}

/// Columnar table of unit records. Immutable after construction; all
/// operations that "modify" a table return a new one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTable {
    unit_id: Vec<String>,
    group: Factor,
    stratum: Factor,
    cohort: Factor,
    decision: Vec<u8>,
    assessed: Vec<u8>,
    passed: Vec<u8>,
    covariates: Vec<Covariate>,
    reference_group: u32,
}

/// Assembles a [`CohortTable`], validating invariants on `build`.
pub struct CohortTableBuilder {
    pub unit_id: Vec<String>,
    pub group: Factor,
    pub stratum: Factor,
    pub cohort: Factor,
    pub decision: Vec<u8>,
    pub assessed: Vec<u8>,
    pub passed: Vec<u8>,
    pub covariates: Vec<Covariate>,
    pub reference_group: Option<String>,
}

/// Default reference level used when the table has a group named this way.
pub const DEFAULT_REFERENCE: &str = "White";

impl CohortTableBuilder {
    pub fn build(self) -> Result<CohortTable> {
        let n = self.unit_id.len();
        let lens = [
            ("group", self.group.codes().len()),
            ("stratum", self.stratum.codes().len()),
            ("cohort", self.cohort.codes().len()),
            ("decision", self.decision.len()),
            ("assessed", self.assessed.len()),
            ("passed", self.passed.len()),
        ];
        for (name, len) in lens {
            if len != n {
                return Err(Error::Schema(format!(
                    "column '{name}' has {len} rows, expected {n}"
                )));
            }
        }
        for cov in &self.covariates {
            if cov.len() != n {
                return Err(Error::Schema(format!(
                    "covariate '{}' has {} rows, expected {n}",
                    cov.name(),
                    cov.len()
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for cov in &self.covariates {
            if !seen.insert(cov.name().to_string()) {
                return Err(Error::Schema(format!(
                    "duplicate covariate column '{}'",
                    cov.name()
                )));
            }
        }
        for row in 0..n {
            for (name, v) in [
                ("decision", self.decision[row]),
                ("assessed", self.assessed[row]),
                ("passed", self.passed[row]),
            ] {
                if v > 1 {
                    return Err(Error::Invariant {
                        row,
                        message: format!("{name} must be 0 or 1, got {v}"),
                    });
                }
            }
            if self.passed[row] == 1 && self.assessed[row] == 0 {
                return Err(Error::Invariant {
                    row,
                    message: "passed without assessed".to_string(),
                });
            }
        }
        let reference_group = match &self.reference_group {
            Some(level) => self.group.code_for(level).ok_or_else(|| {
                Error::Schema(format!("reference group '{level}' not among group levels"))
            })?,
            None => self.group.code_for(DEFAULT_REFERENCE).unwrap_or(0),
        };
        Ok(CohortTable {
            unit_id: self.unit_id,
            group: self.group,
            stratum: self.stratum,
            cohort: self.cohort,
            decision: self.decision,
            assessed: self.assessed,
            passed: self.passed,
            covariates: self.covariates,
            reference_group,
        })
    }
}

impl CohortTable {
    pub fn n_units(&self) -> usize {
        self.unit_id.len()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_id
    }

    pub fn group(&self) -> &Factor {
        &self.group
    }

    pub fn stratum(&self) -> &Factor {
        &self.stratum
    }

    pub fn cohort(&self) -> &Factor {
        &self.cohort
    }

    pub fn decision(&self) -> &[u8] {
        &self.decision
    }

    pub fn assessed(&self) -> &[u8] {
        &self.assessed
    }

    pub fn passed(&self) -> &[u8] {
        &self.passed
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn covariate(&self, name: &str) -> Option<&Covariate> {
        self.covariates.iter().find(|c| c.name() == name)
    }

    /// Code of the reference group level.
    pub fn reference_group(&self) -> u32 {
        self.reference_group
    }

    pub fn reference_group_level(&self) -> &str {
        &self.group.levels()[self.reference_group as usize]
    }

    /// Return a copy with a different reference group.
    pub fn with_reference_group(&self, level: &str) -> Result<Self> {
        let code = self.group.code_for(level).ok_or_else(|| {
            Error::Schema(format!("reference group '{level}' not among group levels"))
        })?;
        let mut t = self.clone();
        t.reference_group = code;
        Ok(t)
    }

    /// New table containing the given rows, in order. Rows may repeat
    /// (bootstrap resampling) and level orderings are preserved.
    pub fn subset(&self, rows: &[usize]) -> Self {
        CohortTable {
            unit_id: rows.iter().map(|&r| self.unit_id[r].clone()).collect(),
            group: self.group.subset(rows),
            stratum: self.stratum.subset(rows),
            cohort: self.cohort.subset(rows),
            decision: rows.iter().map(|&r| self.decision[r]).collect(),
            assessed: rows.iter().map(|&r| self.assessed[r]).collect(),
            passed: rows.iter().map(|&r| self.passed[r]).collect(),
            covariates: self.covariates.iter().map(|c| c.subset(rows)).collect(),
            reference_group: self.reference_group,
        }
    }

    pub(crate) fn set_covariates(&mut self, covariates: Vec<Covariate>) {
        debug_assert!(covariates.iter().all(|c| c.len() == self.n_units()));
        self.covariates = covariates;
    }

    /// Generic predicate filter; keeps rows where `keep(row)` is true.
    pub fn filter<F: Fn(usize) -> bool>(&self, keep: F) -> Self {
        let rows: Vec<usize> = (0..self.n_units()).filter(|&r| keep(r)).collect();
        self.subset(&rows)
    }

    /// Row indices of complete-information units.
    pub fn complete_rows(&self) -> Vec<usize> {
        classify_information(self)
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == InformationStatus::Complete)
            .map(|(i, _)| i)
            .collect()
    }

    /// Restriction to complete-information units.
    pub fn complete_subset(&self) -> Self {
        self.subset(&self.complete_rows())
    }
}

/// Classify each unit: `Complete` iff decision = 1 and assessed = 1.
pub fn classify_information(table: &CohortTable) -> Vec<InformationStatus> {
    table
        .decision()
        .iter()
        .zip(table.assessed())
        .map(|(&a, &t)| {
            if a == 1 && t == 1 {
                InformationStatus::Complete
            } else {
                InformationStatus::Incomplete
            }
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Minimal hand-built table for unit tests.
    pub fn small_table(
        groups: &[&str],
        strata: &[&str],
        decision: &[u8],
        assessed: &[u8],
        passed: &[u8],
        numeric: &[(&str, Vec<f64>)],
    ) -> CohortTable {
        let n = groups.len();
        let covariates = numeric
            .iter()
            .map(|(name, values)| Covariate::Numeric {
                name: name.to_string(),
                values: values.clone(),
                missing: vec![false; values.len()],
            })
            .collect();
        CohortTableBuilder {
            unit_id: (0..n).map(|i| format!("u{i}")).collect(),
            group: Factor::from_labels(groups),
            stratum: Factor::from_labels(strata),
            cohort: Factor::from_labels(&vec!["c0"; n]),
            decision: decision.to_vec(),
            assessed: assessed.to_vec(),
            passed: passed.to_vec(),
            covariates,
            reference_group: None,
        }
        .build()
        .unwrap()
    }
}
