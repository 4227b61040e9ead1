use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::{CohortTable, ImputeReport};
use crate::error::{Error, Result};
use crate::features::{encode, FeatureMatrix, FeatureMetadata, GroupColumn};
use crate::util::{clip_prob, logistic, logit};

use super::metrics::auc;
use super::tree::{bin_matrix, grow_tree, BoostParams, Tree};

/// Validation patience for early stopping, in boosting rounds.
pub const EARLY_STOP_PATIENCE: usize = 30;
/// Default number of boosting rounds.
pub const DEFAULT_ROUNDS: usize = 300;

/// Summary of one cross-validation grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvEntry {
    pub params: BoostParams,
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    pub rounds_requested: usize,
    pub rounds_used: usize,
    /// best validation AUC when an eval set was supplied
    pub eval_auc: Option<f64>,
    pub train_prevalence: f64,
    pub seed: u64,
    pub params: Option<BoostParams>,
    #[serde(default)]
    pub cv_table: Vec<CvEntry>,
}

/// A fitted boosted probability model: trees with log-odds leaf values,
/// a base score, frozen feature encodings, and the training report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreparednessModel {
    pub version: u32,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    pub feature_metadata: FeatureMetadata,
    pub training_report: TrainingReport,
    /// imputation means recorded for reuse on held-out data
    #[serde(default)]
    pub imputation: Option<ImputeReport>,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

impl PreparednessModel {
    /// Raw score (log-odds) for every row of an encoded matrix.
    fn score_matrix(&self, matrix: &FeatureMatrix) -> Vec<f64> {
        let mut scores = vec![self.base_score; matrix.n_rows];
        for tree in &self.trees {
            for (row, s) in scores.iter_mut().enumerate() {
                *s += self.learning_rate * tree.predict_row(matrix, row);
            }
        }
        scores
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.to_json()?.as_bytes())?;
        Ok(())
    }

    pub fn load<R: Read>(mut input: R) -> Result<Self> {
        let mut buf = String::new();
        input.read_to_string(&mut buf)?;
        let model: PreparednessModel = serde_json::from_str(&buf)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format version {}",
                model.version
            )));
        }
        Ok(model)
    }
}

/// Fit a gradient-boosted probability model.
///
/// Trees are grown greedily on logistic-loss gradients and hessians. When an
/// eval set is supplied, training stops once validation AUC has not improved
/// for [`EARLY_STOP_PATIENCE`] rounds and the ensemble is truncated at the
/// best round. Deterministic given the inputs; `seed` is recorded for
/// provenance and reserved for subsampling variants.
pub fn fit_boosted(
    train: &CohortTable,
    labels: &[u8],
    metadata: &FeatureMetadata,
    params: &BoostParams,
    rounds: usize,
    eval: Option<(&CohortTable, &[u8])>,
    seed: u64,
) -> Result<PreparednessModel> {
    if rounds == 0 {
        return Err(Error::Config("rounds must be positive".to_string()));
    }
    if labels.len() != train.n_units() {
        return Err(Error::Numeric(format!(
            "fit_boosted: {} labels for {} units",
            labels.len(),
            train.n_units()
        )));
    }
    let n = train.n_units();
    if n == 0 {
        return Err(Error::DegenerateTarget("empty training table".to_string()));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::DegenerateTarget(format!(
            "target is constant ({positives}/{n} positive)"
        )));
    }

    let matrix = encode(train, metadata)?;
    let binned = bin_matrix(&matrix);
    let eval_data = match eval {
        Some((table, eval_labels)) => {
            if eval_labels.len() != table.n_units() {
                return Err(Error::Numeric("fit_boosted: eval label length mismatch".into()));
            }
            Some((encode(table, metadata)?, eval_labels))
        }
        None => None,
    };

    let prevalence = positives as f64 / n as f64;
    let base_score = logit(clip_prob(prevalence));

    let mut margins = vec![base_score; n];
    let mut eval_margins = eval_data
        .as_ref()
        .map(|(m, _)| vec![base_score; m.n_rows]);

    let mut trees: Vec<Tree> = Vec::with_capacity(rounds);
    let mut grad = vec![0.0f64; n];
    let mut hess = vec![0.0f64; n];
    let mut deltas = vec![0.0f64; n];

    let mut best_auc = f64::NEG_INFINITY;
    let mut best_round = 0usize;
    let mut eval_auc = None;

    for round in 0..rounds {
        for i in 0..n {
            let p = logistic(margins[i]);
            grad[i] = p - f64::from(labels[i]);
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        let tree = grow_tree(&binned, &grad, &hess, params, &mut deltas);
        for i in 0..n {
            margins[i] += params.eta * deltas[i];
        }
        if let (Some((eval_matrix, eval_labels)), Some(em)) = (&eval_data, &mut eval_margins) {
            for (row, m) in em.iter_mut().enumerate() {
                *m += params.eta * tree.predict_row(eval_matrix, row);
            }
            let current = auc(em, eval_labels)?;
            if current > best_auc {
                best_auc = current;
                best_round = round;
            }
            trees.push(tree);
            if round - best_round >= EARLY_STOP_PATIENCE {
                break;
            }
        } else {
            trees.push(tree);
        }
    }

    if eval_data.is_some() {
        trees.truncate(best_round + 1);
        eval_auc = Some(best_auc);
    }

    let rounds_used = trees.len();
    Ok(PreparednessModel {
        version: MODEL_FORMAT_VERSION,
        base_score,
        learning_rate: params.eta,
        trees,
        feature_metadata: metadata.clone(),
        training_report: TrainingReport {
            rounds_requested: rounds,
            rounds_used,
            eval_auc,
            train_prevalence: prevalence,
            seed,
            params: Some(params.clone()),
            cv_table: Vec::new(),
        },
        imputation: None,
    })
}

/// Fit the passage model on complete-information units: the passage flag is
/// the target and the group column is structurally excluded from features.
pub fn fit_passage_model(
    complete_train: &CohortTable,
    params: &BoostParams,
    rounds: usize,
    eval: Option<&CohortTable>,
    seed: u64,
) -> Result<PreparednessModel> {
    let metadata = FeatureMetadata::from_table(complete_train, GroupColumn::Exclude);
    let labels = complete_train.passed().to_vec();
    let eval = eval.map(|t| (t, t.passed()));
    fit_boosted(complete_train, &labels, &metadata, params, rounds, eval, seed)
}

/// Probability predictions for every unit, clipped to (0, 1).
pub fn predict_mu(model: &PreparednessModel, table: &CohortTable) -> Result<Vec<f64>> {
    let matrix = encode(table, &model.feature_metadata)?;
    Ok(model
        .score_matrix(&matrix)
        .into_iter()
        .map(|s| clip_prob(logistic(s)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CohortTableBuilder, Covariate, Factor};

    fn table_with_x(x: Vec<f64>, passed: Vec<u8>) -> CohortTable {
        let n = x.len();
        CohortTableBuilder {
            unit_id: (0..n).map(|i| i.to_string()).collect(),
            group: Factor::from_labels(&vec!["g"; n]),
            stratum: Factor::from_labels(&vec!["s"; n]),
            cohort: Factor::from_labels(&vec!["c"; n]),
            decision: vec![1; n],
            assessed: vec![1; n],
            passed,
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
    fn separable_feature_reaches_perfect_holdout_auc() {
        let x: Vec<f64> = (0..200).map(|i| (i as f64 - 100.0) / 10.0).collect();
        let y: Vec<u8> = x.iter().map(|&v| u8::from(v > 0.0)).collect();
        let table = table_with_x(x, y);
        let params = BoostParams { max_depth: 1, eta: 0.5, ..Default::default() };
        let model = fit_passage_model(&table, &params, 20, None, 0).unwrap();
        let holdout = table_with_x(
            vec![-3.0, -1.0, -0.2, 0.2, 1.0, 3.0],
            vec![0, 0, 0, 1, 1, 1],
        );
        let mu = predict_mu(&model, &holdout).unwrap();
        assert_eq!(auc(&mu, holdout.passed()).unwrap(), 1.0);
    }

    #[test]
    fn constant_target_is_degenerate() {
        let table = table_with_x(vec![1.0, 2.0, 3.0], vec![1, 1, 1]);
        let err = fit_passage_model(&table, &BoostParams::default(), 10, None, 0).unwrap_err();
        assert!(matches!(err, Error::DegenerateTarget(_)), "{err}");
    }

    #[test]
    fn zero_rounds_rejected() {
        let table = table_with_x(vec![1.0, 2.0], vec![0, 1]);
        assert!(fit_passage_model(&table, &BoostParams::default(), 0, None, 0).is_err());
    }

    #[test]
    fn empty_ensemble_predicts_base_rate() {
        let table = table_with_x(vec![1.0, 2.0, 3.0, 4.0], vec![0, 1, 0, 1]);
        let mut model =
            fit_passage_model(&table, &BoostParams::default(), 5, None, 0).unwrap();
        model.trees.clear();
        model.base_score = 0.0;
        let mu = predict_mu(&model, &table).unwrap();
        assert!(mu.iter().all(|&m| (m - 0.5).abs() < 1e-15));
    }

    #[test]
    fn huge_leaf_is_clipped() {
        let table = table_with_x(vec![1.0, 2.0], vec![0, 1]);
        let mut model =
            fit_passage_model(&table, &BoostParams::default(), 1, None, 0).unwrap();
        model.trees = vec![Tree {
            nodes: vec![super::super::tree::Node::Leaf { value: 1e6 }],
        }];
        model.learning_rate = 1.0;
        let mu = predict_mu(&model, &table).unwrap();
        assert!(mu.iter().all(|&m| m == 1.0 - 1e-6));
    }

    #[test]
    fn prediction_is_row_order_invariant() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let y: Vec<u8> = x.iter().map(|&v| u8::from(v > 0.0)).collect();
        let table = table_with_x(x, y);
        let model = fit_passage_model(&table, &BoostParams::default(), 10, None, 0).unwrap();
        let mu = predict_mu(&model, &table).unwrap();
        let rev: Vec<usize> = (0..table.n_units()).rev().collect();
        let reversed = table.subset(&rev);
        let mu_rev = predict_mu(&model, &reversed).unwrap();
        for (i, &r) in rev.iter().enumerate() {
            assert_eq!(mu[r], mu_rev[i]);
        }
    }

    #[test]
    fn model_json_roundtrip() {
        let table = table_with_x(vec![1.0, 2.0, 3.0, 4.0], vec![0, 1, 0, 1]);
        let model = fit_passage_model(&table, &BoostParams::default(), 3, None, 7).unwrap();
        let mut buf = Vec::new();
        model.save(&mut buf).unwrap();
        let loaded = PreparednessModel::load(&buf[..]).unwrap();
        assert_eq!(model.trees, loaded.trees);
        assert_eq!(model.base_score, loaded.base_score);
        let a = predict_mu(&model, &table).unwrap();
        let b = predict_mu(&loaded, &table).unwrap();
        assert_eq!(a, b);
    }
}
