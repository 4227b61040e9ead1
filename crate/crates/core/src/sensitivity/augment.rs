use serde::{Deserialize, Serialize};

use crate::dataset::CohortTable;
use crate::error::{Error, Result};
use crate::glm::{fit_logistic, AdjustedFit, Design, FitOptions, OneHotBlock};
use crate::util::{clip_prob, logistic};

use super::solve::{solve_beta, solve_gamma};

/// One confounder hypothesis: prevalence in the reference group and in the
/// comparison group(s), and log-odds effects on the decision (`alpha`) and
/// the outcome (`delta`), both bounded by `theta_cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityParams {
    pub q_ref: f64,
    pub q_alt: f64,
    pub alpha: f64,
    pub delta: f64,
    pub theta_cap: f64,
}

impl SensitivityParams {
    pub fn zero(theta_cap: f64) -> Self {
        Self {
            q_ref: 0.0,
            q_alt: 0.0,
            alpha: 0.0,
            delta: 0.0,
            theta_cap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, q) in [("q_ref", self.q_ref), ("q_alt", self.q_alt)] {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Config(format!("{name} must lie in [0,1], got {q}")));
            }
        }
        if self.alpha.abs() > self.theta_cap + 1e-12 {
            return Err(Error::Config(format!(
                "|alpha| = {} exceeds the theta cap {}",
                self.alpha.abs(),
                self.theta_cap
            )));
        }
        if self.delta.abs() > self.theta_cap + 1e-12 {
            return Err(Error::Config(format!(
                "|delta| = {} exceeds the theta cap {}",
                self.delta.abs(),
                self.theta_cap
            )));
        }
        Ok(())
    }
}

/// One row of the confounder-augmented dataset: each base unit yields a
/// `u = 0` and a `u = 1` copy whose weights sum to one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentedRow {
    pub unit: usize,
    pub u: u8,
    pub weight: f64,
    /// Pr(decision = 1 | covariates, u) = logistic(gamma + u alpha)
    pub fractional_outcome: f64,
    /// preparedness adjusted for u: logistic(beta + u delta)
    pub mu_tilde: f64,
    /// exact logit of `mu_tilde` (= beta + u delta), kept to avoid
    /// round-tripping through the probability scale
    pub logit_mu_tilde: f64,
}

/// Internal structure-of-arrays form of the augmented data; rows alternate
/// (u=0, u=1) per unit.
pub(super) struct AugmentedColumns {
    pub y: Vec<f64>,
    pub weights: Vec<f64>,
    pub logit_mu_tilde: Vec<f64>,
}

/// Root `e = exp(g)` of `(1-q)e/(1+e) + q a e/(1+a e) = t` via the stable
/// quadratic, verified against the mixture identity arithmetically (no
/// transcendentals). `None` requests the slower bisection-backed solver.
#[inline]
fn mixture_root(t: f64, q: f64, a: f64) -> Option<f64> {
    if q == 0.0 || a == 1.0 {
        return Some(t / (1.0 - t));
    }
    if q == 1.0 {
        return Some(t / ((1.0 - t) * a));
    }
    let qa = a * (t - 1.0);
    let qb = t * (1.0 + a) - (1.0 - q) - q * a;
    let qc = t;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc <= 1e-12 {
        return None;
    }
    let sq = disc.sqrt();
    let qq = -0.5 * (qb + qb.signum() * sq);
    let r1 = qq / qa;
    let r2 = qc / qq;
    let root = if r1 > 0.0 { r1 } else { r2 };
    if !root.is_finite() || root <= 0.0 {
        return None;
    }
    let mix = (1.0 - q) * root / (1.0 + root) + q * a * root / (1.0 + a * root);
    if (mix - t).abs() > 1e-10 {
        return None;
    }
    Some(root)
}

/// Decision-side nuisances for one (q_ref, q_alt, alpha) combination,
/// shared by every delta value in the grid.
pub(super) struct DecisionNuisance {
    /// Pr(a=1 | ., u=0) and Pr(a=1 | ., u=1) per unit
    pub out0: Vec<f64>,
    pub out1: Vec<f64>,
    /// posterior Pr(u=1 | a=1, .) per unit
    pub w: Vec<f64>,
    /// the unit's group prevalence q
    pub q: Vec<f64>,
}

pub(super) fn decision_nuisance(
    table: &CohortTable,
    p_hat: &[f64],
    q_ref: f64,
    q_alt: f64,
    alpha: f64,
) -> Result<DecisionNuisance> {
    let n = table.n_units();
    if p_hat.len() != n {
        return Err(Error::Numeric(format!(
            "augment: {} propensities for {n} units",
            p_hat.len()
        )));
    }
    let reference = table.reference_group();
    let a = alpha.exp();
    let mut out = DecisionNuisance {
        out0: Vec::with_capacity(n),
        out1: Vec::with_capacity(n),
        w: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
    };
    for i in 0..n {
        let q = if table.group().codes()[i] == reference { q_ref } else { q_alt };
        let p = clip_prob(p_hat[i]);
        let e = match mixture_root(p, q, a) {
            Some(e) => e,
            None => solve_gamma(p, q, alpha)
                .map_err(|err| {
                    Error::Numeric(format!("unit {i}: decision-side solve failed: {err}"))
                })?
                .exp(),
        };
        let out0 = e / (1.0 + e);
        let ae = a * e;
        let out1 = ae / (1.0 + ae);
        let w = if q <= 0.0 {
            0.0
        } else if q >= 1.0 {
            1.0
        } else if alpha == 0.0 {
            q
        } else {
            q * out1 / ((1.0 - q) * out0 + q * out1)
        };
        out.out0.push(out0);
        out.out1.push(out1);
        out.w.push(w);
        out.q.push(q);
    }
    Ok(out)
}

pub(super) fn augment_columns_from(
    nuisance: &DecisionNuisance,
    mu_hat: &[f64],
    delta: f64,
) -> Result<AugmentedColumns> {
    let n = nuisance.out0.len();
    if mu_hat.len() != n {
        return Err(Error::Numeric(format!(
            "augment: {} preparedness values for {n} units",
            mu_hat.len()
        )));
    }
    let big_d = delta.exp();
    let mut y = Vec::with_capacity(2 * n);
    let mut weights = Vec::with_capacity(2 * n);
    let mut lmu = Vec::with_capacity(2 * n);
    for i in 0..n {
        let mu = clip_prob(mu_hat[i]);
        let w = nuisance.w[i];
        let beta = match mixture_root(mu, w, big_d) {
            Some(f) => f.ln(),
            None => solve_beta(mu, w, delta).map_err(|err| {
                Error::Numeric(format!("unit {i}: outcome-side solve failed: {err}"))
            })?,
        };
        y.push(nuisance.out0[i]);
        y.push(nuisance.out1[i]);
        weights.push(1.0 - nuisance.q[i]);
        weights.push(nuisance.q[i]);
        lmu.push(beta);
        lmu.push(beta + delta);
    }
    Ok(AugmentedColumns {
        y,
        weights,
        logit_mu_tilde: lmu,
    })
}

pub(super) fn augment_columns(
    table: &CohortTable,
    p_hat: &[f64],
    mu_hat: &[f64],
    params: &SensitivityParams,
) -> Result<AugmentedColumns> {
    params.validate()?;
    let nuisance = decision_nuisance(table, p_hat, params.q_ref, params.q_alt, params.alpha)?;
    augment_columns_from(&nuisance, mu_hat, params.delta)
}

/// Create the two-copies-per-unit augmented dataset for one confounder
/// hypothesis.
pub fn augment(
    table: &CohortTable,
    p_hat: &[f64],
    mu_hat: &[f64],
    params: &SensitivityParams,
) -> Result<Vec<AugmentedRow>> {
    let cols = augment_columns(table, p_hat, mu_hat, params)?;
    let n = table.n_units();
    let mut rows = Vec::with_capacity(2 * n);
    for i in 0..n {
        for u in 0..2usize {
            let at = 2 * i + u;
            rows.push(AugmentedRow {
                unit: i,
                u: u as u8,
                weight: cols.weights[at],
                fractional_outcome: cols.y[at],
                mu_tilde: logistic(cols.logit_mu_tilde[at]),
                logit_mu_tilde: cols.logit_mu_tilde[at],
            });
        }
    }
    Ok(rows)
}

/// Design skeleton for the fractional-response re-estimation: intercept,
/// group dummies, a logit(mu_tilde) column to be filled per cell, and the
/// stratum one-hot block (first level absorbed by the intercept). The
/// outcome, weights, and regressor column are overwritten per grid cell.
pub(super) fn augmented_design_template(table: &CohortTable) -> Design {
    let n = table.n_units();
    let n2 = 2 * n;
    let reference = table.reference_group() as usize;
    let group_levels = table.group().levels();
    let mut names = vec!["(Intercept)".to_string()];
    let mut dummy_cols: Vec<usize> = Vec::new();
    for (code, level) in group_levels.iter().enumerate() {
        if code != reference {
            names.push(format!("group={level}"));
            dummy_cols.push(code);
        }
    }
    names.push("logit_mu".to_string());
    let d = names.len();

    let mut dense = vec![0.0f64; n2 * d];
    for i in 0..n {
        let code = table.group().codes()[i] as usize;
        for u in 0..2usize {
            let base = (2 * i + u) * d;
            dense[base] = 1.0;
            for (j, &dummy_code) in dummy_cols.iter().enumerate() {
                dense[base + 1 + j] = f64::from(code == dummy_code);
            }
        }
    }

    let k = table.stratum().n_levels().saturating_sub(1);
    for level in table.stratum().levels().iter().skip(1) {
        names.push(format!("stratum={level}"));
    }
    let mut index = Vec::with_capacity(n2);
    for i in 0..n {
        let s = table.stratum().codes()[i];
        let col = if s == 0 { OneHotBlock::NONE } else { s - 1 };
        index.push(col);
        index.push(col);
    }

    Design {
        names,
        dense,
        n: n2,
        d,
        onehot: Some(OneHotBlock { index, k }),
        y: vec![0.0; n2],
        weights: vec![0.0; n2],
        ridge: 0.0,
        dropped_strata: Vec::new(),
    }
}

/// Fill one grid cell's outcome, weights, and logit(mu_tilde) column into a
/// template design, solving the outcome-side nuisance per unit.
pub(super) fn fill_cell(
    design: &mut Design,
    nuisance: &DecisionNuisance,
    mu_hat: &[f64],
    delta: f64,
) -> Result<()> {
    let n = nuisance.out0.len();
    debug_assert_eq!(design.n, 2 * n);
    if mu_hat.len() != n {
        return Err(Error::Numeric(format!(
            "augment: {} preparedness values for {n} units",
            mu_hat.len()
        )));
    }
    let d = design.d;
    let big_d = delta.exp();
    for i in 0..n {
        let mu = clip_prob(mu_hat[i]);
        let w = nuisance.w[i];
        let beta = match mixture_root(mu, w, big_d) {
            Some(f) => f.ln(),
            None => solve_beta(mu, w, delta).map_err(|err| {
                Error::Numeric(format!("unit {i}: outcome-side solve failed: {err}"))
            })?,
        };
        let at = 2 * i;
        design.y[at] = nuisance.out0[i];
        design.y[at + 1] = nuisance.out1[i];
        design.weights[at] = 1.0 - nuisance.q[i];
        design.weights[at + 1] = nuisance.q[i];
        design.dense[at * d + d - 1] = beta;
        design.dense[(at + 1) * d + d - 1] = beta + delta;
    }
    Ok(())
}

/// Build the fractional-response design over the augmented rows:
/// outcome = Pr(decision | ·, u), terms = group + stratum + logit(mu_tilde),
/// weights (1 - q, q).
pub(super) fn augmented_design(table: &CohortTable, cols: AugmentedColumns) -> Design {
    let mut design = augmented_design_template(table);
    let d = design.d;
    for (at, lmu) in cols.logit_mu_tilde.iter().enumerate() {
        design.dense[at * d + d - 1] = *lmu;
    }
    design.y = cols.y;
    design.weights = cols.weights;
    design
}

/// Re-estimate the preparedness-adjusted regression on an augmented
/// dataset: a fractional-response quasi-likelihood fit of the decision
/// probability on group, stratum, and logit(mu_tilde).
pub fn reestimate(table: &CohortTable, rows: &[AugmentedRow]) -> Result<AdjustedFit> {
    let n = table.n_units();
    if rows.len() != 2 * n {
        return Err(Error::Numeric(format!(
            "reestimate: expected {} augmented rows, got {}",
            2 * n,
            rows.len()
        )));
    }
    let mut cols = AugmentedColumns {
        y: Vec::with_capacity(2 * n),
        weights: Vec::with_capacity(2 * n),
        logit_mu_tilde: Vec::with_capacity(2 * n),
    };
    for (at, row) in rows.iter().enumerate() {
        if row.unit != at / 2 || usize::from(row.u) != at % 2 {
            return Err(Error::Numeric(
                "reestimate: augmented rows must alternate (u=0, u=1) per unit".into(),
            ));
        }
        cols.y.push(row.fractional_outcome);
        cols.weights.push(row.weight);
        cols.logit_mu_tilde.push(row.logit_mu_tilde);
    }
    let design = augmented_design(table, cols);
    fit_logistic(&design, &FitOptions::default())
}
