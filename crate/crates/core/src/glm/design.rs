use serde::{Deserialize, Serialize};

use crate::dataset::{CohortTable, Covariate};
use crate::error::{Error, Result};
use crate::util::{clip_prob, logit};

/// Outcome column of a regression.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    /// the enrollment decision flag
    Decision,
    /// the assessment passage flag
    Passed,
    /// caller-supplied values in [0, 1] (fractional outcomes)
    Values(Vec<f64>),
}

/// Model terms. Stratum fixed effects are kept as a one-hot block that the
/// solver exploits; everything else becomes a dense column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    /// one dummy per non-reference group level
    GroupDummies,
    /// one dummy per stratum, first kept stratum absorbed by the intercept
    StratumFixedEffects,
    /// a named covariate column (numeric, or categorical expanded to
    /// dummies against its first level)
    Covariate(String),
    /// logit of the preparedness estimate supplied at build time
    PrepLogit,
}

/// Specification of one regression: outcome, terms, optional prior weights,
/// and a ridge penalty.
#[derive(Debug, Clone)]
pub struct DesignSpec {
    pub outcome: Outcome,
    pub terms: Vec<Term>,
    pub weights: Option<Vec<f64>>,
    pub ridge: f64,
}

impl DesignSpec {
    pub fn new(outcome: Outcome, terms: Vec<Term>) -> Self {
        Self {
            outcome,
            terms,
            weights: None,
            ridge: 0.0,
        }
    }
}

/// One-hot block: per-row column index (or [`OneHotBlock::NONE`] for rows of
/// the absorbed reference level).
#[derive(Debug, Clone)]
pub struct OneHotBlock {
    pub index: Vec<u32>,
    pub k: usize,
}

impl OneHotBlock {
    pub const NONE: u32 = u32::MAX;
}

/// A numeric design ready for the IRLS solver: a dense block plus an
/// optional one-hot block of stratum fixed effects.
#[derive(Debug, Clone)]
pub struct Design {
    /// coefficient names: dense columns first, then one-hot columns
    pub names: Vec<String>,
    /// n x d, row-major
    pub dense: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub onehot: Option<OneHotBlock>,
    pub y: Vec<f64>,
    pub weights: Vec<f64>,
    pub ridge: f64,
    /// strata removed for lacking outcome variation
    pub dropped_strata: Vec<String>,
}

impl Design {
    pub fn n_coefficients(&self) -> usize {
        self.names.len()
    }
}

fn outcome_values(table: &CohortTable, outcome: &Outcome) -> Result<Vec<f64>> {
    let values = match outcome {
        Outcome::Decision => table.decision().iter().map(|&v| f64::from(v)).collect(),
        Outcome::Passed => table.passed().iter().map(|&v| f64::from(v)).collect(),
        Outcome::Values(v) => {
            if v.len() != table.n_units() {
                return Err(Error::Numeric(format!(
                    "outcome has {} values for {} units",
                    v.len(),
                    table.n_units()
                )));
            }
            v.clone()
        }
    };
    for (row, &v) in values.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Invariant {
                row,
                message: format!("outcome value {v} outside [0, 1]"),
            });
        }
    }
    Ok(values)
}

/// Build a numeric design from a cohort table.
///
/// `mu` supplies the preparedness estimates when the spec includes
/// [`Term::PrepLogit`]; probabilities are clipped and logit-transformed
/// here. Strata with no outcome variation among positively weighted rows
/// are dropped (rows and dummy alike) and recorded.
pub fn build_design(table: &CohortTable, spec: &DesignSpec, mu: Option<&[f64]>) -> Result<Design> {
    let n_all = table.n_units();
    if n_all == 0 {
        return Err(Error::Numeric("cannot build a design over zero units".into()));
    }
    let y_all = outcome_values(table, &spec.outcome)?;
    let w_all = match &spec.weights {
        Some(w) => {
            if w.len() != n_all {
                return Err(Error::Numeric(format!(
                    "weights have {} entries for {n_all} units",
                    w.len()
                )));
            }
            for (row, &wi) in w.iter().enumerate() {
                if !wi.is_finite() || wi < 0.0 {
                    return Err(Error::Invariant {
                        row,
                        message: format!("weight {wi} is not a finite nonnegative real"),
                    });
                }
            }
            w.clone()
        }
        None => vec![1.0; n_all],
    };
    if spec.ridge < 0.0 {
        return Err(Error::Config("ridge penalty must be nonnegative".into()));
    }

    let wants_stratum_fe = spec.terms.contains(&Term::StratumFixedEffects);

    // strata without outcome variation contribute a separable likelihood
    // block; drop their rows and dummies
    let mut rows: Vec<usize> = (0..n_all).collect();
    let mut dropped_strata = Vec::new();
    let mut kept_strata: Vec<usize> = (0..table.stratum().n_levels()).collect();
    if wants_stratum_fe {
        let k = table.stratum().n_levels();
        let mut lo = vec![f64::INFINITY; k];
        let mut hi = vec![f64::NEG_INFINITY; k];
        let mut seen = vec![false; k];
        for i in 0..n_all {
            if w_all[i] > 0.0 {
                let s = table.stratum().codes()[i] as usize;
                seen[s] = true;
                lo[s] = lo[s].min(y_all[i]);
                hi[s] = hi[s].max(y_all[i]);
            }
        }
        let mut drop = vec![false; k];
        for s in 0..k {
            if !seen[s] || (lo[s] >= 1.0) || (hi[s] <= 0.0) {
                drop[s] = true;
                if seen[s] {
                    dropped_strata.push(table.stratum().levels()[s].clone());
                }
            }
        }
        if drop.iter().any(|&d| d) {
            rows.retain(|&i| !drop[table.stratum().codes()[i] as usize]);
            kept_strata.retain(|&s| !drop[s]);
        }
        if rows.is_empty() {
            return Err(Error::DegenerateTarget(
                "every stratum lacks outcome variation".to_string(),
            ));
        }
    }
    let n = rows.len();

    // assemble dense columns
    let mut names: Vec<String> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for term in &spec.terms {
        match term {
            Term::Intercept => {
                names.push("(Intercept)".to_string());
                columns.push(vec![1.0; n]);
            }
            Term::GroupDummies => {
                let reference = table.reference_group() as usize;
                for (code, level) in table.group().levels().iter().enumerate() {
                    if code == reference {
                        continue;
                    }
                    names.push(format!("group={level}"));
                    columns.push(
                        rows.iter()
                            .map(|&i| f64::from(table.group().codes()[i] as usize == code))
                            .collect(),
                    );
                }
            }
            Term::Covariate(name) => match table.covariate(name) {
                Some(Covariate::Numeric { values, missing, .. }) => {
                    if let Some(row) = missing.iter().position(|&m| m) {
                        return Err(Error::Invariant {
                            row,
                            message: format!("covariate '{name}' has missing cells; impute first"),
                        });
                    }
                    names.push(name.clone());
                    columns.push(rows.iter().map(|&i| values[i]).collect());
                }
                Some(Covariate::Categorical { levels, codes, missing, .. }) => {
                    if let Some(row) = missing.iter().position(|&m| m) {
                        return Err(Error::Invariant {
                            row,
                            message: format!("covariate '{name}' has missing cells; impute first"),
                        });
                    }
                    for (code, level) in levels.iter().enumerate().skip(1) {
                        names.push(format!("{name}={level}"));
                        columns.push(
                            rows.iter()
                                .map(|&i| f64::from(codes[i] as usize == code))
                                .collect(),
                        );
                    }
                }
                None => {
                    return Err(Error::Schema(format!(
                        "design references unknown covariate '{name}'"
                    )))
                }
            },
            Term::PrepLogit => {
                let mu = mu.ok_or_else(|| {
                    Error::Config("design includes logit(mu) but no mu values supplied".into())
                })?;
                if mu.len() != n_all {
                    return Err(Error::Numeric(format!(
                        "mu has {} values for {n_all} units",
                        mu.len()
                    )));
                }
                names.push("logit_mu".to_string());
                columns.push(rows.iter().map(|&i| logit(clip_prob(mu[i]))).collect());
            }
            Term::StratumFixedEffects => {} // handled as the one-hot block
        }
    }

    let d = columns.len();
    let mut dense = vec![0.0f64; n * d];
    for (j, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            dense[r * d + j] = v;
        }
    }

    let onehot = if wants_stratum_fe {
        // first kept stratum is the absorbed reference
        let mut col_of = vec![OneHotBlock::NONE; table.stratum().n_levels()];
        for (pos, &s) in kept_strata.iter().enumerate().skip(1) {
            col_of[s] = (pos - 1) as u32;
            names.push(format!("stratum={}", table.stratum().levels()[s]));
        }
        let index = rows
            .iter()
            .map(|&i| col_of[table.stratum().codes()[i] as usize])
            .collect();
        Some(OneHotBlock {
            index,
            k: kept_strata.len().saturating_sub(1),
        })
    } else {
        None
    };

    Ok(Design {
        names,
        dense,
        n,
        d,
        onehot,
        y: rows.iter().map(|&i| y_all[i]).collect(),
        weights: rows.iter().map(|&i| w_all[i]).collect(),
        ridge: spec.ridge,
        dropped_strata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CohortTableBuilder, Factor};

    fn table() -> CohortTable {
        CohortTableBuilder {
            unit_id: (0..6).map(|i| i.to_string()).collect(),
            group: Factor::from_labels(&["White", "Black", "White", "Black", "White", "Black"]),
            stratum: Factor::from_labels(&["s1", "s1", "s2", "s2", "s3", "s3"]),
            cohort: Factor::from_labels(&["c"; 6]),
            decision: vec![1, 0, 1, 0, 0, 0],
            assessed: vec![1, 0, 1, 1, 0, 0],
            passed: vec![1, 0, 0, 1, 0, 0],
            covariates: vec![Covariate::Numeric {
                name: "x".into(),
                values: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
                missing: vec![false; 6],
            }],
            reference_group: None,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn reference_group_is_excluded_from_dummies() {
        let t = table();
        let spec = DesignSpec::new(
            Outcome::Decision,
            vec![Term::Intercept, Term::GroupDummies],
        );
        let design = build_design(&t, &spec, None).unwrap();
        assert_eq!(design.names, vec!["(Intercept)", "group=Black"]);
    }

    #[test]
    fn stratum_without_variation_dropped_with_rows() {
        let t = table();
        // s3 has decision = 0 for both rows -> dropped
        let spec = DesignSpec::new(
            Outcome::Decision,
            vec![Term::Intercept, Term::GroupDummies, Term::StratumFixedEffects],
        );
        let design = build_design(&t, &spec, None).unwrap();
        assert_eq!(design.dropped_strata, vec!["s3".to_string()]);
        assert_eq!(design.n, 4);
        let onehot = design.onehot.as_ref().unwrap();
        assert_eq!(onehot.k, 1); // s1 absorbed, s2 dummy
        assert!(design.names.contains(&"stratum=s2".to_string()));
        assert!(!design.names.iter().any(|n| n.contains("s3")));
    }

    #[test]
    fn prep_logit_requires_mu() {
        let t = table();
        let spec = DesignSpec::new(Outcome::Decision, vec![Term::Intercept, Term::PrepLogit]);
        assert!(build_design(&t, &spec, None).is_err());
        let mu = vec![0.5; 6];
        let design = build_design(&t, &spec, Some(&mu)).unwrap();
        assert_eq!(design.names, vec!["(Intercept)", "logit_mu"]);
        assert!(design.dense[1].abs() < 1e-12); // logit(0.5) = 0
    }

    #[test]
    fn fractional_outcome_validated() {
        let t = table();
        let spec = DesignSpec::new(
            Outcome::Values(vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.5]),
            vec![Term::Intercept],
        );
        assert!(build_design(&t, &spec, None).is_err());
    }

    #[test]
    fn unknown_covariate_rejected() {
        let t = table();
        let spec = DesignSpec::new(
            Outcome::Decision,
            vec![Term::Intercept, Term::Covariate("nope".into())],
        );
        assert!(build_design(&t, &spec, None).is_err());
    }

    #[test]
    fn zero_weight_rows_do_not_rescue_a_stratum() {
        let t = table();
        // give s3's rows zero weight so the stratum has no weighted support
        let mut spec = DesignSpec::new(
            Outcome::Decision,
            vec![Term::Intercept, Term::StratumFixedEffects],
        );
        spec.weights = Some(vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        let design = build_design(&t, &spec, None).unwrap();
        assert!(!design.names.iter().any(|n| n.contains("s3")));
    }
}
