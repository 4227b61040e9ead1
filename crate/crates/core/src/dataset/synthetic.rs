use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::logistic;

use super::table::{CohortTable, CohortTableBuilder, Covariate, Factor};

/// A synthetic categorical covariate: levels and their log-odds
/// contributions to the success process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub name: String,
    pub levels: Vec<String>,
    pub outcome_weights: Vec<f64>,
}

/// Ground-truth unmeasured confounder: group-specific prevalence and its
/// log-odds effects on the decision (`alpha`) and the outcome (`delta`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfounderTruth {
    pub prevalence: BTreeMap<String, f64>,
    pub alpha: f64,
    pub delta: f64,
}

impl Default for ConfounderTruth {
    fn default() -> Self {
        Self {
            prevalence: BTreeMap::new(),
            alpha: 0.0,
            delta: 0.0,
        }
    }
}

/// Ground-truth parameters of a generated cohort. Doubles as the generator
/// configuration: fields left empty (outcome coefficients, stratum effects)
/// are drawn from the seed and recorded in the returned copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTruth {
    pub seed: u64,
    pub reference_group: String,
    /// group -> log-odds offset in the decision process
    pub true_group_effects: BTreeMap<String, f64>,
    /// group -> population share (normalized at generation)
    pub group_shares: BTreeMap<String, f64>,
    /// group -> mean shift applied to every numeric covariate; a nonzero
    /// shift plants a preparedness gap between groups
    pub group_covariate_shift: BTreeMap<String, f64>,
    pub true_prep_slope: f64,
    pub decision_intercept: f64,
    pub outcome_intercept: f64,
    /// numeric covariate weights in the success process; drawn when empty
    pub true_outcome_coefficients: Vec<f64>,
    pub categorical_covariates: Vec<CategoricalSpec>,
    pub stratum_effect_sd: f64,
    /// filled at generation
    pub stratum_effects: Vec<f64>,
    pub assessed_given_enrolled: f64,
    pub assessed_given_unenrolled: f64,
    pub true_confounder: ConfounderTruth,
    /// probability that a numeric cell is masked as missing
    pub missing_rate: f64,
    /// per-unit latent truths, filled at generation (not part of the config)
    pub latents: Option<Latents>,
}

/// Per-unit latent ground truth recorded by the generator; the oracle for
/// model-quality checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Latents {
    pub u: Vec<u8>,
    /// true success probability (includes the confounder's delta term)
    pub mu_true: Vec<f64>,
    /// success probability with the confounder term zeroed
    pub mu_no_u: Vec<f64>,
    /// true Bernoulli parameter of the decision draw
    pub decision_prob: Vec<f64>,
}

impl Default for SyntheticTruth {
    fn default() -> Self {
        let mut effects = BTreeMap::new();
        effects.insert("white".to_string(), 0.0);
        effects.insert("black".to_string(), 0.0);
        let mut shares = BTreeMap::new();
        shares.insert("white".to_string(), 0.5);
        shares.insert("black".to_string(), 0.5);
        Self {
            seed: 0,
            reference_group: "white".to_string(),
            true_group_effects: effects,
            group_shares: shares,
            group_covariate_shift: BTreeMap::new(),
            true_prep_slope: 1.0,
            decision_intercept: -1.2,
            outcome_intercept: -0.3,
            true_outcome_coefficients: Vec::new(),
            categorical_covariates: vec![CategoricalSpec {
                name: "track".to_string(),
                levels: vec!["std".to_string(), "adv".to_string(), "alt".to_string()],
                outcome_weights: vec![0.0, 0.3, -0.3],
            }],
            stratum_effect_sd: 0.4,
            stratum_effects: Vec::new(),
            assessed_given_enrolled: 0.85,
            assessed_given_unenrolled: 0.02,
            true_confounder: ConfounderTruth::default(),
            missing_rate: 0.0,
            latents: None,
        }
    }
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; one value per call keeps the draw order obvious.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn pick_weighted<R: Rng>(rng: &mut R, cumulative: &[f64]) -> usize {
    let r: f64 = rng.gen();
    cumulative.iter().position(|&c| r < c).unwrap_or(cumulative.len() - 1)
}

/// Generate a cohort with known ground truth.
///
/// Covariates are drawn as standard-normal numerics (plus configured
/// categoricals); strata are assigned multinomially with unequal sizes;
/// the decision, assessment, and passage flags follow the configured
/// logistic processes. With `alpha = delta = 0` the confounder enters
/// nowhere and conditional ignorability holds by construction.
pub fn generate_synthetic(
    config: &SyntheticTruth,
    n_units: usize,
    n_strata: usize,
    n_covariates: usize,
) -> Result<(CohortTable, SyntheticTruth)> {
    if n_units < 100 {
        return Err(Error::Config(format!(
            "n_units must be at least 100, got {n_units}"
        )));
    }
    if n_strata == 0 {
        return Err(Error::Config("n_strata must be positive".to_string()));
    }
    let groups: Vec<String> = config.true_group_effects.keys().cloned().collect();
    if groups.is_empty() {
        return Err(Error::Config("true_group_effects must name at least one group".into()));
    }
    if !groups.contains(&config.reference_group) {
        return Err(Error::Config(format!(
            "reference group '{}' not among configured groups",
            config.reference_group
        )));
    }
    for g in &groups {
        if let Some(&q) = config.true_confounder.prevalence.get(g) {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Config(format!(
                    "confounder prevalence for group '{g}' must lie in [0,1], got {q}"
                )));
            }
        }
    }
    for spec in &config.categorical_covariates {
        if spec.levels.len() != spec.outcome_weights.len() {
            return Err(Error::Config(format!(
                "categorical covariate '{}': {} levels but {} weights",
                spec.name,
                spec.levels.len(),
                spec.outcome_weights.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut truth = config.clone();

    // outcome coefficients: use configured ones or draw and record
    if truth.true_outcome_coefficients.is_empty() {
        truth.true_outcome_coefficients =
            (0..n_covariates).map(|_| 0.8 * standard_normal(&mut rng)).collect();
    } else if truth.true_outcome_coefficients.len() != n_covariates {
        return Err(Error::Config(format!(
            "true_outcome_coefficients has {} entries but n_covariates = {n_covariates}",
            truth.true_outcome_coefficients.len()
        )));
    }

    // unequal stratum sizes: multinomial over log-normal weights
    let raw: Vec<f64> = (0..n_strata).map(|_| (0.7 * standard_normal(&mut rng)).exp()).collect();
    let total: f64 = raw.iter().sum();
    let mut stratum_cum = Vec::with_capacity(n_strata);
    let mut acc = 0.0;
    for w in &raw {
        acc += w / total;
        stratum_cum.push(acc);
    }
    truth.stratum_effects = (0..n_strata)
        .map(|_| config.stratum_effect_sd * standard_normal(&mut rng))
        .collect();

    // group assignment probabilities
    let share_total: f64 = groups
        .iter()
        .map(|g| config.group_shares.get(g).copied().unwrap_or(1.0))
        .sum();
    let mut group_cum = Vec::with_capacity(groups.len());
    let mut acc = 0.0;
    for g in &groups {
        acc += config.group_shares.get(g).copied().unwrap_or(1.0) / share_total;
        group_cum.push(acc);
    }

    let width = (n_strata.max(2) as f64).log10().ceil() as usize;
    let stratum_levels: Vec<String> = (0..n_strata).map(|k| format!("s{k:0width$}")).collect();

    let mut group_codes = Vec::with_capacity(n_units);
    let mut stratum_codes = Vec::with_capacity(n_units);
    let mut cohort_codes = Vec::with_capacity(n_units);
    let mut numeric: Vec<Vec<f64>> = vec![Vec::with_capacity(n_units); n_covariates];
    let mut numeric_missing: Vec<Vec<bool>> = vec![Vec::with_capacity(n_units); n_covariates];
    let mut cat_codes: Vec<Vec<u32>> =
        vec![Vec::with_capacity(n_units); config.categorical_covariates.len()];
    let mut decision = Vec::with_capacity(n_units);
    let mut assessed = Vec::with_capacity(n_units);
    let mut passed = Vec::with_capacity(n_units);
    let mut latents = Latents::default();

    for _ in 0..n_units {
        let g = pick_weighted(&mut rng, &group_cum);
        let s = pick_weighted(&mut rng, &stratum_cum);
        let group_name = &groups[g];
        group_codes.push(g as u32);
        stratum_codes.push(s as u32);
        cohort_codes.push(rng.gen_range(0..2u32));

        let shift = truth.group_covariate_shift.get(group_name).copied().unwrap_or(0.0);
        let mut lin_out = truth.outcome_intercept;
        for (j, coef) in truth.true_outcome_coefficients.iter().enumerate() {
            let x = standard_normal(&mut rng) + shift;
            lin_out += coef * x;
            let miss = truth.missing_rate > 0.0 && rng.gen::<f64>() < truth.missing_rate;
            numeric[j].push(if miss { f64::NAN } else { x });
            numeric_missing[j].push(miss);
        }
        for (k, spec) in truth.categorical_covariates.iter().enumerate() {
            let level = rng.gen_range(0..spec.levels.len());
            lin_out += spec.outcome_weights[level];
            cat_codes[k].push(level as u32);
        }

        let q = truth
            .true_confounder
            .prevalence
            .get(group_name)
            .copied()
            .unwrap_or(0.0);
        let u = u8::from(rng.gen::<f64>() < q);

        let mu_no_u = logistic(lin_out);
        let mu = logistic(lin_out + f64::from(u) * truth.true_confounder.delta);

        // logit(mu_no_u) = lin_out by construction
        let lin_dec = truth.decision_intercept
            + truth.true_group_effects[group_name]
            + truth.stratum_effects[s]
            + truth.true_prep_slope * lin_out
            + f64::from(u) * truth.true_confounder.alpha;
        let p_dec = logistic(lin_dec);
        let a = u8::from(rng.gen::<f64>() < p_dec);
        // assessment-taking is independent of u given the decision
        let p_t = if a == 1 {
            truth.assessed_given_enrolled
        } else {
            truth.assessed_given_unenrolled
        };
        let t = u8::from(rng.gen::<f64>() < p_t);
        let r = if t == 1 { u8::from(rng.gen::<f64>() < mu) } else { 0 };

        decision.push(a);
        assessed.push(t);
        passed.push(r);
        latents.u.push(u);
        latents.mu_true.push(mu);
        latents.mu_no_u.push(mu_no_u);
        latents.decision_prob.push(p_dec);
    }

    // reject degenerate draws: a group with no variation in the decision
    let mut per_group = vec![(0usize, 0usize); groups.len()];
    for (i, &g) in group_codes.iter().enumerate() {
        per_group[g as usize].0 += 1;
        per_group[g as usize].1 += decision[i] as usize;
    }
    for (g, (count, ones)) in per_group.iter().enumerate() {
        if *count == 0 || *ones == 0 || ones == count {
            return Err(Error::DegenerateTarget(format!(
                "group '{}' has {} units with {} enrollments; adjust intercept or effects",
                groups[g], count, ones
            )));
        }
    }

    let mut covariates: Vec<Covariate> = numeric
        .into_iter()
        .zip(numeric_missing)
        .enumerate()
        .map(|(j, (values, missing))| Covariate::Numeric {
            name: format!("x{j}"),
            values,
            missing,
        })
        .collect();
    for (spec, codes) in truth.categorical_covariates.iter().zip(cat_codes) {
        covariates.push(Covariate::Categorical {
            name: spec.name.clone(),
            levels: spec.levels.clone(),
            codes,
            missing: vec![false; n_units],
        });
    }

    let id_width = (n_units as f64).log10().ceil() as usize;
    let table = CohortTableBuilder {
        unit_id: (0..n_units).map(|i| format!("u{i:0id_width$}")).collect(),
        group: Factor::new(groups.clone(), group_codes)?,
        stratum: Factor::new(stratum_levels, stratum_codes)?,
        cohort: Factor::new(vec!["c2011".to_string(), "c2012".to_string()], cohort_codes)?,
        decision,
        assessed,
        passed,
        covariates,
        reference_group: Some(truth.reference_group.clone()),
    }
    .build()?;

    truth.latents = Some(latents);
    Ok((table, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::mean;

    #[test]
    fn deterministic_given_seed() {
        let cfg = SyntheticTruth { seed: 11, ..Default::default() };
        let (a, ta) = generate_synthetic(&cfg, 500, 5, 3).unwrap();
        let (b, tb) = generate_synthetic(&cfg, 500, 5, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn no_confounding_means_u_uncorrelated_with_decision() {
        let mut cfg = SyntheticTruth { seed: 5, ..Default::default() };
        cfg.true_confounder.prevalence.insert("white".into(), 0.5);
        cfg.true_confounder.prevalence.insert("black".into(), 0.5);
        // alpha = delta = 0: u enters nowhere
        let (table, truth) = generate_synthetic(&cfg, 50_000, 8, 3).unwrap();
        let latents = truth.latents.unwrap();
        let u: Vec<f64> = latents.u.iter().map(|&v| f64::from(v)).collect();
        let a: Vec<f64> = table.decision().iter().map(|&v| f64::from(v)).collect();
        let (mu_u, mu_a) = (mean(&u), mean(&a));
        let cov: f64 = u.iter().zip(&a).map(|(x, y)| (x - mu_u) * (y - mu_a)).sum::<f64>()
            / (u.len() as f64);
        let corr = cov
            / (u.iter().map(|x| (x - mu_u).powi(2)).sum::<f64>() / u.len() as f64).sqrt()
            / (a.iter().map(|y| (y - mu_a).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
        assert!(corr.abs() < 0.02, "corr(u, a) = {corr}");
    }

    #[test]
    fn planted_delta_raises_passage_for_u1_within_preparedness_deciles() {
        let mut cfg = SyntheticTruth { seed: 9, ..Default::default() };
        cfg.true_confounder.prevalence.insert("white".into(), 0.5);
        cfg.true_confounder.prevalence.insert("black".into(), 0.5);
        cfg.true_confounder.delta = 3f64.ln();
        let (table, truth) = generate_synthetic(&cfg, 50_000, 8, 3).unwrap();
        let latents = truth.latents.unwrap();

        // sort assessed units into deciles of the u-free preparedness score
        let assessed: Vec<usize> = (0..table.n_units())
            .filter(|&i| table.assessed()[i] == 1)
            .collect();
        let mut order = assessed.clone();
        order.sort_by(|&a, &b| latents.mu_no_u[a].total_cmp(&latents.mu_no_u[b]));
        let chunk = order.len().div_ceil(10);
        let mut diff_sum = 0.0;
        let mut diff_n = 0usize;
        for dec in order.chunks(chunk) {
            let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
            for &i in dec {
                if latents.u[i] == 1 {
                    s1 += f64::from(table.passed()[i]);
                    n1 += 1;
                } else {
                    s0 += f64::from(table.passed()[i]);
                    n0 += 1;
                }
            }
            if n1 >= 30 && n0 >= 30 {
                diff_sum += s1 / n1 as f64 - s0 / n0 as f64;
                diff_n += 1;
            }
        }
        assert!(diff_n > 0);
        assert!(diff_sum / diff_n as f64 > 0.05, "mean decile gap {}", diff_sum / diff_n as f64);
    }

    #[test]
    fn degenerate_decision_rejected() {
        let cfg = SyntheticTruth {
            seed: 1,
            decision_intercept: -40.0,
            ..Default::default()
        };
        let err = generate_synthetic(&cfg, 500, 4, 2).unwrap_err();
        assert!(matches!(err, Error::DegenerateTarget(_)), "{err}");
    }

    #[test]
    fn small_tables_rejected() {
        let cfg = SyntheticTruth::default();
        assert!(generate_synthetic(&cfg, 50, 4, 2).is_err());
    }

    #[test]
    fn unequal_stratum_sizes() {
        let cfg = SyntheticTruth { seed: 3, ..Default::default() };
        let (table, _) = generate_synthetic(&cfg, 10_000, 10, 2).unwrap();
        let counts = table.stratum().level_counts();
        let max = *counts.iter().max().unwrap();
        let min = *counts.iter().min().unwrap();
        assert!(max > 2 * min, "sizes too equal: {counts:?}");
    }

    #[test]
    fn missing_rate_masks_cells() {
        let cfg = SyntheticTruth { seed: 3, missing_rate: 0.1, ..Default::default() };
        let (table, _) = generate_synthetic(&cfg, 1000, 4, 2).unwrap();
        let any_missing = table.covariates().iter().any(|c| c.has_missing());
        assert!(any_missing);
    }
}
