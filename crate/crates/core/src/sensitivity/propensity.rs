use serde::{Deserialize, Serialize};

use crate::dataset::{split_holdout, CohortTable};
use crate::error::Result;
use crate::features::{FeatureMetadata, GroupColumn};
use crate::prepmodel::{fit_boosted, predict_mu, BoostParams, PreparednessModel};

/// Configuration of the decision-propensity learner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropensityConfig {
    pub params: BoostParams,
    pub rounds: usize,
    /// whether the group column joins the features; the preparedness model
    /// never uses it, but the propensity target Pr(decision | group, x) may
    pub include_group: bool,
    /// held-out share used for the AUC report
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        Self {
            params: BoostParams::default(),
            rounds: crate::prepmodel::DEFAULT_ROUNDS,
            include_group: false,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Fitted decision propensities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropensityFit {
    /// Pr(decision = 1 | ·) for every unit, clipped to (0, 1)
    pub p_hat: Vec<f64>,
    /// out-of-sample AUC on the held-out split
    pub auc: f64,
    pub model: PreparednessModel,
}

/// Fit the decision-propensity model on the full table: same feature
/// pipeline as the preparedness model, decision as the target, with a
/// 90/10 split for the AUC report. Predictions cover every unit.
pub fn fit_propensity(table: &CohortTable, config: &PropensityConfig) -> Result<PropensityFit> {
    let group_column = if config.include_group {
        GroupColumn::Include
    } else {
        GroupColumn::Exclude
    };
    // metadata frozen on the full table so every level is encoded
    let metadata = FeatureMetadata::from_table(table, group_column);
    let (train, holdout) = split_holdout(table, 1.0 - config.holdout_fraction, config.seed)?;
    let labels = train.decision().to_vec();
    let model = fit_boosted(
        &train,
        &labels,
        &metadata,
        &config.params,
        config.rounds,
        Some((&holdout, holdout.decision())),
        config.seed,
    )?;
    let auc = model
        .training_report
        .eval_auc
        .expect("eval set was supplied");
    let p_hat = predict_mu(&model, table)?;
    Ok(PropensityFit { p_hat, auc, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticTruth};
    use crate::error::Error;
    use crate::prepmodel::auc;

    #[test]
    fn holdout_auc_close_to_bayes_auc() {
        let cfg = SyntheticTruth { seed: 61, ..Default::default() };
        let (table, truth) = generate_synthetic(&cfg, 20_000, 5, 3).unwrap();
        let latents = truth.latents.unwrap();
        let config = PropensityConfig {
            params: BoostParams { max_depth: 3, eta: 0.15, ..Default::default() },
            rounds: 200,
            include_group: true,
            holdout_fraction: 0.1,
            seed: 3,
        };
        let fit = fit_propensity(&table, &config).unwrap();
        // Bayes AUC by pair-counting on the generator's true decision probabilities
        let bayes = auc(&latents.decision_prob, table.decision()).unwrap();
        assert!(
            (fit.auc - bayes).abs() < 0.05,
            "model AUC {} vs Bayes AUC {bayes}",
            fit.auc
        );
        assert!(fit.p_hat.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn constant_decision_is_degenerate() {
        let cfg = SyntheticTruth { seed: 62, ..Default::default() };
        let (table, _) = generate_synthetic(&cfg, 500, 4, 2).unwrap();
        let all_zero = table.filter(|r| table.decision()[r] == 0);
        let err = fit_propensity(&all_zero, &PropensityConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateTarget(_)), "{err}");
    }
}
