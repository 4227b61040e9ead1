use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{clip_prob, logit};

use super::design::{Design, OneHotBlock};
use super::linalg::{ordered_independent_columns, Cholesky};

/// Convergence: |deviance change| below this, or
const DEVIANCE_TOL: f64 = 1e-10;
/// gradient max-norm below this.
const GRADIENT_TOL: f64 = 1e-8;
/// Iteration cap for IRLS.
const MAX_ITERATIONS: usize = 100;
/// Coefficients beyond this magnitude indicate perfect separation.
const SEPARATION_THRESHOLD: f64 = 30.0;
/// Cap on the max-norm of one IRLS step; tames transient overshoot when
/// fitted probabilities saturate mid-iteration.
const STEP_CAP: f64 = 8.0;
/// Ridge applied automatically when separation is detected at ridge zero.
const SEPARATION_RIDGE: f64 = 1e-6;
/// Relative pivot tolerance for collinearity detection.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// starting coefficients aligned with the design's full name list
    pub warm_start: Option<Vec<f64>>,
    /// assume the design is full rank (grid cells reusing a checked
    /// structure); a singular system still fails cleanly downstream
    pub skip_rank_check: bool,
}

/// One fitted coefficient. Standard errors are on the log-odds scale;
/// `odds_ratio` is exactly `exp(coefficient)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitTerm {
    pub name: String,
    pub coefficient: f64,
    pub se: f64,
    pub odds_ratio: f64,
}

/// A fitted weighted logistic (or fractional-response quasi-logistic)
/// regression.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjustedFit {
    pub terms: Vec<FitTerm>,
    pub deviance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub dropped_strata: Vec<String>,
    /// columns removed as collinear (or without weighted support)
    pub dropped_columns: Vec<String>,
    /// true when a ridge of 1e-6 was applied after separation was detected
    pub separation_fallback: bool,
    pub ridge: f64,
}

impl AdjustedFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.coefficient)
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.se)
    }

    /// Log-odds coefficients of the group dummies, keyed by group level.
    pub fn group_effects(&self) -> BTreeMap<String, f64> {
        self.terms
            .iter()
            .filter_map(|t| {
                t.name
                    .strip_prefix("group=")
                    .map(|level| (level.to_string(), t.coefficient))
            })
            .collect()
    }

    /// Standard errors of the group dummies, keyed by group level.
    pub fn group_ses(&self) -> BTreeMap<String, f64> {
        self.terms
            .iter()
            .filter_map(|t| t.name.strip_prefix("group=").map(|l| (l.to_string(), t.se)))
            .collect()
    }

    /// Full coefficient vector aligned with `names`, zeros for dropped
    /// columns; usable as a warm start for a related design.
    pub fn coefficients_for(&self, names: &[String]) -> Vec<f64> {
        names
            .iter()
            .map(|n| self.coefficient(n).unwrap_or(0.0))
            .collect()
    }
}

struct Reduced<'a> {
    design: &'a Design,
    /// kept dense column indices
    dense_keep: Vec<usize>,
    /// kept one-hot columns, as a remap: old index -> new index or NONE
    onehot_remap: Vec<u32>,
    onehot_k: usize,
    dropped_columns: Vec<String>,
}

impl<'a> Reduced<'a> {
    fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .dense_keep
            .iter()
            .map(|&j| self.design.names[j].clone())
            .collect();
        for (old, &new) in self.onehot_remap.iter().enumerate() {
            if new != OneHotBlock::NONE {
                names.push(self.design.names[self.design.d + old].clone());
            }
        }
        names
    }

}

/// Detect empty or collinear columns using the prior-weighted Gram matrix.
fn rank_reduce(design: &Design) -> Reduced<'_> {
    let n = design.n;
    let d = design.d;
    let k = design.onehot.as_ref().map_or(0, |o| o.k);
    let mut dropped_columns = Vec::new();

    // one-hot support: drop columns with no positively weighted rows
    let mut support = vec![0.0f64; k];
    if let Some(oh) = &design.onehot {
        for i in 0..n {
            let g = oh.index[i];
            if g != OneHotBlock::NONE {
                support[g as usize] += design.weights[i];
            }
        }
    }
    let mut onehot_remap = vec![OneHotBlock::NONE; k];
    let mut kk = 0u32;
    for g in 0..k {
        if support[g] > 0.0 {
            onehot_remap[g] = kk;
            kk += 1;
        } else {
            dropped_columns.push(design.names[d + g].clone());
        }
    }

    // dense block: Schur complement of the (diagonal) one-hot block in the
    // prior-weighted Gram matrix, then ordered pivot scan
    let mut a = vec![0.0f64; d * d];
    let mut b = vec![0.0f64; k * d];
    let mut dg = vec![0.0f64; k];
    for i in 0..n {
        let w = design.weights[i];
        if w == 0.0 {
            continue;
        }
        let row = &design.dense[i * d..(i + 1) * d];
        for p in 0..d {
            let wp = w * row[p];
            for q in p..d {
                a[p * d + q] += wp * row[q];
            }
        }
        if let Some(oh) = &design.onehot {
            let g = oh.index[i];
            if g != OneHotBlock::NONE {
                let g = g as usize;
                dg[g] += w;
                for p in 0..d {
                    b[g * d + p] += w * row[p];
                }
            }
        }
    }
    for p in 0..d {
        for q in 0..p {
            a[p * d + q] = a[q * d + p];
        }
    }
    for g in 0..k {
        if dg[g] <= 0.0 {
            continue;
        }
        for p in 0..d {
            for q in 0..d {
                a[p * d + q] -= b[g * d + p] * b[g * d + q] / dg[g];
            }
        }
    }
    let dense_keep = ordered_independent_columns(&a, d, RANK_TOL);
    for j in 0..d {
        if !dense_keep.contains(&j) {
            dropped_columns.push(design.names[j].clone());
        }
    }

    Reduced {
        design,
        dense_keep,
        onehot_remap,
        onehot_k: kk as usize,
        dropped_columns,
    }
}

/// `(logistic(eta), softplus(eta))` sharing one `exp`; the log-likelihood
/// term is `y*eta - softplus(eta)`.
#[inline]
fn sigmoid_softplus(eta: f64) -> (f64, f64) {
    if eta >= 0.0 {
        let e = (-eta).exp();
        (1.0 / (1.0 + e), eta + e.ln_1p())
    } else {
        let e = eta.exp();
        (e / (1.0 + e), e.ln_1p())
    }
}

struct IrlsState {
    beta_dense: Vec<f64>,
    beta_onehot: Vec<f64>,
}

enum IrlsOutcome {
    Converged {
        state: IrlsState,
        deviance: f64,
        iterations: usize,
        cov_dense: Vec<f64>,
        se_onehot: Vec<f64>,
    },
    Separated,
    NoConvergence {
        iterations: usize,
        deviance: f64,
    },
}

#[allow(clippy::too_many_lines)]
fn irls(reduced: &Reduced<'_>, ridge: f64, warm: Option<(&[f64], &[f64])>) -> Result<IrlsOutcome> {
    let design = reduced.design;
    let n = design.n;
    let d = reduced.dense_keep.len();
    let k = reduced.onehot_k;

    // compact copies keep the hot loop free of index indirection
    let dense: std::borrow::Cow<'_, [f64]> =
        if d == design.d && reduced.dense_keep.iter().enumerate().all(|(a, &b)| a == b) {
            std::borrow::Cow::Borrowed(&design.dense)
        } else {
            let mut out = vec![0.0f64; n * d];
            for i in 0..n {
                let row = &design.dense[i * design.d..(i + 1) * design.d];
                for (jj, &j) in reduced.dense_keep.iter().enumerate() {
                    out[i * d + jj] = row[j];
                }
            }
            std::borrow::Cow::Owned(out)
        };
    let onehot_idx: Option<std::borrow::Cow<'_, [u32]>> = design.onehot.as_ref().map(|oh| {
        if reduced
            .onehot_remap
            .iter()
            .enumerate()
            .all(|(a, &b)| b == a as u32)
        {
            std::borrow::Cow::Borrowed(&oh.index[..])
        } else {
            std::borrow::Cow::Owned(
                oh.index
                    .iter()
                    .map(|&g| {
                        if g == OneHotBlock::NONE {
                            OneHotBlock::NONE
                        } else {
                            reduced.onehot_remap[g as usize]
                        }
                    })
                    .collect(),
            )
        }
    });

    let mut beta_d = vec![0.0f64; d];
    let mut beta_z = vec![0.0f64; k];
    match warm {
        Some((wd, wz)) => {
            beta_d.copy_from_slice(wd);
            beta_z.copy_from_slice(wz);
        }
        None => {
            // calibrated start: intercept at the logit of the weighted mean
            if let Some(pos) = reduced
                .dense_keep
                .iter()
                .position(|&j| design.names[j] == "(Intercept)")
            {
                let wsum: f64 = design.weights.iter().sum();
                if wsum > 0.0 {
                    let ybar = design
                        .y
                        .iter()
                        .zip(&design.weights)
                        .map(|(&y, &w)| y * w)
                        .sum::<f64>()
                        / wsum;
                    beta_d[pos] = logit(clip_prob(ybar));
                }
            }
        }
    }

    let mut a = vec![0.0f64; d * d];
    let mut b = vec![0.0f64; k * d];
    let mut dg = vec![0.0f64; k];
    let mut rhs_d = vec![0.0f64; d];
    let mut rhs_z = vec![0.0f64; k];
    let mut prev_deviance = f64::INFINITY;

    for iter in 0..MAX_ITERATIONS {
        a.fill(0.0);
        b.fill(0.0);
        dg.fill(0.0);
        rhs_d.fill(0.0);
        rhs_z.fill(0.0);
        let mut grad_d = vec![0.0f64; d];
        let mut grad_z = vec![0.0f64; k];
        let mut deviance = 0.0f64;

        for i in 0..n {
            let w = design.weights[i];
            if w == 0.0 {
                continue;
            }
            let row = &dense[i * d..(i + 1) * d];
            let g = onehot_idx.as_ref().map_or(OneHotBlock::NONE, |idx| idx[i]);
            let mut eta = if g == OneHotBlock::NONE { 0.0 } else { beta_z[g as usize] };
            for (jj, &x) in row.iter().enumerate() {
                eta += beta_d[jj] * x;
            }
            let (p, softplus) = sigmoid_softplus(eta);
            let y = design.y[i];
            deviance -= 2.0 * w * (y * eta - softplus);
            let var = (p * (1.0 - p)).max(1e-10);
            let wi = w * var;
            let z = eta + (y - p) / var;
            let score = w * (y - p);

            for (jj, &x) in row.iter().enumerate() {
                let wx = wi * x;
                rhs_d[jj] += wx * z;
                grad_d[jj] += score * x;
                let arow = &mut a[jj * d..(jj + 1) * d];
                for (qq, &xq) in row.iter().enumerate().skip(jj) {
                    arow[qq] += wx * xq;
                }
            }
            if g != OneHotBlock::NONE {
                let g = g as usize;
                dg[g] += wi;
                rhs_z[g] += wi * z;
                grad_z[g] += score;
                for (jj, &x) in row.iter().enumerate() {
                    b[g * d + jj] += wi * x;
                }
            }
        }

        // convergence at the current coefficients
        let mut grad_norm = 0.0f64;
        for (jj, gd) in grad_d.iter().enumerate() {
            grad_norm = grad_norm.max((gd - ridge * beta_d[jj]).abs());
        }
        for (g, gz) in grad_z.iter().enumerate() {
            grad_norm = grad_norm.max((gz - ridge * beta_z[g]).abs());
        }
        let dev_change = (prev_deviance - deviance).abs();
        if grad_norm < GRADIENT_TOL || dev_change < DEVIANCE_TOL {
            // symmetrize and invert for standard errors
            for p in 0..d {
                for q in 0..p {
                    a[p * d + q] = a[q * d + p];
                }
            }
            for j in 0..d {
                a[j * d + j] += ridge;
            }
            for g in 0..k {
                dg[g] += ridge;
            }
            let mut s = a.clone();
            for g in 0..k {
                for p in 0..d {
                    for q in 0..d {
                        s[p * d + q] -= b[g * d + p] * b[g * d + q] / dg[g];
                    }
                }
            }
            let chol = Cholesky::factor(&s, d).ok_or_else(|| {
                Error::Numeric("information matrix is not positive definite".into())
            })?;
            let cov_dense = chol.inverse();
            let mut se_onehot = Vec::with_capacity(k);
            for g in 0..k {
                let v: Vec<f64> = (0..d).map(|p| b[g * d + p] / dg[g]).collect();
                let mut quad = 0.0;
                for p in 0..d {
                    for q in 0..d {
                        quad += v[p] * cov_dense[p * d + q] * v[q];
                    }
                }
                se_onehot.push((1.0 / dg[g] + quad).sqrt());
            }
            return Ok(IrlsOutcome::Converged {
                state: IrlsState { beta_dense: beta_d, beta_onehot: beta_z },
                deviance,
                iterations: iter,
                cov_dense,
                se_onehot,
            });
        }
        prev_deviance = deviance;

        // weighted least squares step via the Schur complement of the
        // diagonal one-hot block
        for p in 0..d {
            for q in 0..p {
                a[p * d + q] = a[q * d + p];
            }
        }
        for j in 0..d {
            a[j * d + j] += ridge;
        }
        for g in 0..k {
            dg[g] += ridge;
        }
        let mut s = a.clone();
        let mut r = rhs_d.clone();
        for g in 0..k {
            let inv = 1.0 / dg[g];
            for p in 0..d {
                let bp = b[g * d + p] * inv;
                r[p] -= bp * rhs_z[g];
                for q in 0..d {
                    s[p * d + q] -= bp * b[g * d + q];
                }
            }
        }
        let chol = Cholesky::factor(&s, d).ok_or_else(|| {
            Error::Numeric("weighted normal equations are not positive definite".into())
        })?;
        let new_d = chol.solve(&r);
        let mut new_z = vec![0.0f64; k];
        for g in 0..k {
            let mut dot = 0.0;
            for p in 0..d {
                dot += b[g * d + p] * new_d[p];
            }
            new_z[g] = (rhs_z[g] - dot) / dg[g];
        }
        // damp the step so saturated probabilities cannot fling the
        // iterate; the fixed point is unchanged
        let mut step = 0.0f64;
        for (old, new) in beta_d.iter().zip(&new_d) {
            step = step.max((new - old).abs());
        }
        for (old, new) in beta_z.iter().zip(&new_z) {
            step = step.max((new - old).abs());
        }
        let damp = if step > STEP_CAP { STEP_CAP / step } else { 1.0 };
        for (old, new) in beta_d.iter_mut().zip(&new_d) {
            *old += damp * (new - *old);
        }
        for (old, new) in beta_z.iter_mut().zip(&new_z) {
            *old += damp * (new - *old);
        }

        let max_abs = beta_d
            .iter()
            .chain(beta_z.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        if max_abs > SEPARATION_THRESHOLD {
            return Ok(IrlsOutcome::Separated);
        }
    }
    Ok(IrlsOutcome::NoConvergence {
        iterations: MAX_ITERATIONS,
        deviance: prev_deviance,
    })
}

/// Fit a weighted logistic regression by iteratively reweighted least
/// squares, maximizing the Bernoulli (quasi-)log-likelihood. Fractional
/// outcomes in [0, 1] are handled identically; standard errors come from
/// the inverse observed information with dispersion fixed at 1.
///
/// Separation (a coefficient diverging past 30 in magnitude) triggers one
/// automatic refit with a ridge of 1e-6, flagged in the result; persistent
/// separation is an error advising an explicit ridge.
pub fn fit_logistic(design: &Design, options: &FitOptions) -> Result<AdjustedFit> {
    let reduced = if options.skip_rank_check {
        Reduced {
            design,
            dense_keep: (0..design.d).collect(),
            onehot_remap: (0..design.onehot.as_ref().map_or(0, |o| o.k) as u32).collect(),
            onehot_k: design.onehot.as_ref().map_or(0, |o| o.k),
            dropped_columns: Vec::new(),
        }
    } else {
        rank_reduce(design)
    };
    let names = reduced.names();
    let d = reduced.dense_keep.len();
    let k = reduced.onehot_k;

    let warm_vecs: Option<(Vec<f64>, Vec<f64>)> = options.warm_start.as_ref().map(|full| {
        debug_assert_eq!(full.len(), design.names.len());
        let wd: Vec<f64> = reduced.dense_keep.iter().map(|&j| full[j]).collect();
        let mut wz = vec![0.0f64; k];
        for (old, &new) in reduced.onehot_remap.iter().enumerate() {
            if new != OneHotBlock::NONE {
                wz[new as usize] = full[design.d + old];
            }
        }
        (wd, wz)
    });

    let mut ridge = design.ridge;
    let mut separation_fallback = false;
    loop {
        let outcome = irls(
            &reduced,
            ridge,
            warm_vecs.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())),
        )?;
        match outcome {
            IrlsOutcome::Converged {
                state,
                deviance,
                iterations,
                cov_dense,
                se_onehot,
            } => {
                let mut terms = Vec::with_capacity(d + k);
                for jj in 0..d {
                    let coefficient = state.beta_dense[jj];
                    terms.push(FitTerm {
                        name: names[jj].clone(),
                        coefficient,
                        se: cov_dense[jj * d + jj].sqrt(),
                        odds_ratio: coefficient.exp(),
                    });
                }
                for g in 0..k {
                    let coefficient = state.beta_onehot[g];
                    terms.push(FitTerm {
                        name: names[d + g].clone(),
                        coefficient,
                        se: se_onehot[g],
                        odds_ratio: coefficient.exp(),
                    });
                }
                return Ok(AdjustedFit {
                    terms,
                    deviance,
                    iterations,
                    converged: true,
                    dropped_strata: design.dropped_strata.clone(),
                    dropped_columns: reduced.dropped_columns.clone(),
                    separation_fallback,
                    ridge,
                });
            }
            IrlsOutcome::Separated => {
                if ridge == 0.0 {
                    ridge = SEPARATION_RIDGE;
                    separation_fallback = true;
                    continue;
                }
                return Err(Error::PerfectSeparation {
                    max_abs_coef: SEPARATION_THRESHOLD,
                });
            }
            IrlsOutcome::NoConvergence { iterations, deviance } => {
                return Err(Error::NonConvergence { iterations, deviance });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::design::{build_design, DesignSpec, Outcome, Term};
    use crate::util::logistic;
    use crate::dataset::{CohortTableBuilder, Covariate, Factor};
    use crate::dataset::CohortTable;

    fn table(decision: Vec<u8>, x: Vec<f64>, strata: Vec<&str>) -> CohortTable {
        let n = decision.len();
        CohortTableBuilder {
            unit_id: (0..n).map(|i| i.to_string()).collect(),
            group: Factor::from_labels(&vec!["g"; n]),
            stratum: Factor::from_labels(&strata),
            cohort: Factor::from_labels(&vec!["c"; n]),
            decision,
            assessed: vec![0; n],
            passed: vec![0; n],
            covariates: vec![Covariate::Numeric {
                name: "x".into(),
                values: x,
                missing: vec![false; n],
            }],
            reference_group: None,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn intercept_only_matches_logit_of_mean() {
        let t = table(vec![1, 0, 0, 0], vec![0.0; 4], vec!["s"; 4]);
        let spec = DesignSpec::new(Outcome::Decision, vec![Term::Intercept]);
        let design = build_design(&t, &spec, None).unwrap();
        let fit = fit_logistic(&design, &FitOptions::default()).unwrap();
        let b0 = fit.coefficient("(Intercept)").unwrap();
        assert!((b0 - logit(0.25)).abs() < 1e-8, "{b0}");
        assert!(fit.converged);
    }

    #[test]
    fn doubling_weights_keeps_coefficients_shrinks_se_by_sqrt2() {
        let t = table(
            vec![1, 0, 1, 0, 0, 1, 0, 1],
            vec![0.9, -0.4, -1.2, 0.1, 0.3, -0.8, 0.7, 1.0],
            vec!["s"; 8],
        );
        let spec = DesignSpec::new(
            Outcome::Decision,
            vec![Term::Intercept, Term::Covariate("x".into())],
        );
        let d1 = build_design(&t, &spec, None).unwrap();
        let fit1 = fit_logistic(&d1, &FitOptions::default()).unwrap();
        let mut spec2 = spec.clone();
        spec2.weights = Some(vec![2.0; 8]);
        let d2 = build_design(&t, &spec2, None).unwrap();
        let fit2 = fit_logistic(&d2, &FitOptions::default()).unwrap();
        for (a, b) in fit1.terms.iter().zip(&fit2.terms) {
            assert!((a.coefficient - b.coefficient).abs() < 1e-7);
            assert!((a.se / b.se - std::f64::consts::SQRT_2).abs() < 1e-6);
        }
    }

    #[test]
    fn score_equations_hold_at_convergence() {
        let t = table(
            vec![1, 0, 1, 0, 0, 1, 0, 0, 1, 1],
            vec![0.5, 0.7, -0.2, 0.1, -0.5, 1.4, 1.6, -0.3, 0.2, -0.1],
            vec!["s1", "s1", "s1", "s1", "s1", "s2", "s2", "s2", "s2", "s2"],
        );
        let spec = DesignSpec::new(
            Outcome::Decision,
            vec![Term::Intercept, Term::Covariate("x".into()), Term::StratumFixedEffects],
        );
        let design = build_design(&t, &spec, None).unwrap();
        let fit = fit_logistic(&design, &FitOptions::default()).unwrap();
        // recompute X' w (y - p) with the reported coefficients
        let beta = fit.coefficients_for(&design.names);
        let mut grad = vec![0.0f64; design.names.len()];
        for i in 0..design.n {
            let row = &design.dense[i * design.d..(i + 1) * design.d];
            let mut eta = 0.0;
            for (j, &x) in row.iter().enumerate() {
                eta += beta[j] * x;
            }
            if let Some(oh) = &design.onehot {
                let g = oh.index[i];
                if g != OneHotBlock::NONE {
                    eta += beta[design.d + g as usize];
                }
            }
            let resid = design.y[i] - logistic(eta);
            for (j, &x) in row.iter().enumerate() {
                grad[j] += design.weights[i] * resid * x;
            }
            if let Some(oh) = &design.onehot {
                let g = oh.index[i];
                if g != OneHotBlock::NONE {
                    grad[design.d + g as usize] += design.weights[i] * resid;
                }
            }
        }
        let max = grad.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(max < 1e-8, "score equations violated: {max}");
    }

    #[test]
    fn odds_ratios_are_exact_exponentials() {
        let t = table(vec![1, 0, 1, 0, 0], vec![0.1, 0.2, 0.5, -0.4, 0.9], vec!["s"; 5]);
        let spec = DesignSpec::new(
            Outcome::Decision,
            vec![Term::Intercept, Term::Covariate("x".into())],
        );
        let design = build_design(&t, &spec, None).unwrap();
        let fit = fit_logistic(&design, &FitOptions::default()).unwrap();
        for term in &fit.terms {
            assert_eq!(term.odds_ratio, term.coefficient.exp());
        }
    }

    #[test]
    fn separation_falls_back_to_ridge_and_flags_it() {
        let t = table(
            vec![0, 0, 0, 0, 1, 1, 1, 1],
            vec![-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0],
            vec!["s"; 8],
        );
        let spec = DesignSpec::new(
            Outcome::Decision,
            vec![Term::Intercept, Term::Covariate("x".into())],
        );
        let design = build_design(&t, &spec, None).unwrap();
        let fit = fit_logistic(&design, &FitOptions::default()).unwrap();
        assert!(fit.separation_fallback);
        assert!(fit.ridge > 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn collinear_column_is_dropped_by_name() {
        let n = 12;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / 3.0).collect();
        let mut t = table(
            (0..n).map(|i| u8::from(i % 3 == 0)).collect(),
            x.clone(),
            vec!["s"; n],
        );
        let mut covs = t.covariates().to_vec();
        covs.push(Covariate::Numeric {
            name: "x_copy".into(),
            values: x,
            missing: vec![false; n],
        });
        t.set_covariates(covs);
        let spec = DesignSpec::new(
            Outcome::Decision,
            vec![
                Term::Intercept,
                Term::Covariate("x".into()),
                Term::Covariate("x_copy".into()),
            ],
        );
        let design = build_design(&t, &spec, None).unwrap();
        let fit = fit_logistic(&design, &FitOptions::default()).unwrap();
        assert_eq!(fit.dropped_columns, vec!["x_copy".to_string()]);
        assert!(fit.coefficient("x").is_some());
        assert!(fit.coefficient("x_copy").is_none());
    }

    /// Fitting on duplicated rows with weights (1-q, q) equals fitting
    /// single rows with the weighted-mean outcome when covariates match.
    #[test]
    fn fractional_outcome_equals_weighted_duplicates() {
        let q = 0.3;
        let x = vec![0.2, -0.5, 1.1, 0.4, -0.9, 0.0];
        let y1 = [1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let y0 = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        // duplicated-row design
        let t2 = table(vec![0; 12], [x.clone(), x.clone()].concat(), vec!["s"; 12]);
        let mut spec2 = DesignSpec::new(
            Outcome::Values(y1.iter().chain(&y0).copied().collect()),
            vec![Term::Intercept, Term::Covariate("x".into())],
        );
        spec2.weights = Some([vec![q; 6], vec![1.0 - q; 6]].concat());
        let fit2 = fit_logistic(&build_design(&t2, &spec2, None).unwrap(), &FitOptions::default())
            .unwrap();
        // single rows with mean outcome
        let t1 = table(vec![0; 6], x, vec!["s"; 6]);
        let spec1 = DesignSpec::new(
            Outcome::Values((0..6).map(|i| q * y1[i] + (1.0 - q) * y0[i]).collect()),
            vec![Term::Intercept, Term::Covariate("x".into())],
        );
        let fit1 = fit_logistic(&build_design(&t1, &spec1, None).unwrap(), &FitOptions::default())
            .unwrap();
        for (a, b) in fit1.terms.iter().zip(&fit2.terms) {
            assert!((a.coefficient - b.coefficient).abs() < 1e-8);
        }
    }

    #[test]
    fn dropping_dead_stratum_leaves_other_coefficients_unchanged() {
        // s3 has no outcome variation; removing it must not move the rest
        let full = table(
            vec![1, 0, 1, 0, 1, 0, 0, 1, 0, 0],
            vec![0.3, 0.5, -0.2, -0.1, 0.8, 0.9, 0.1, 0.0, 0.1, 0.4],
            vec!["s1", "s1", "s1", "s1", "s2", "s2", "s2", "s2", "s3", "s3"],
        );
        let spec = DesignSpec::new(
            Outcome::Decision,
            vec![Term::Intercept, Term::Covariate("x".into()), Term::StratumFixedEffects],
        );
        let fit_full =
            fit_logistic(&build_design(&full, &spec, None).unwrap(), &FitOptions::default())
                .unwrap();
        assert_eq!(fit_full.dropped_strata, vec!["s3".to_string()]);

        let subset = full.filter(|r| full.stratum().level_of(r) != "s3");
        let fit_sub =
            fit_logistic(&build_design(&subset, &spec, None).unwrap(), &FitOptions::default())
                .unwrap();
        for term in &fit_sub.terms {
            let other = fit_full.coefficient(&term.name).unwrap();
            assert!(
                (term.coefficient - other).abs() < 1e-10,
                "{}: {} vs {}",
                term.name,
                term.coefficient,
                other
            );
        }
    }
}
