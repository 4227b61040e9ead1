use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::CohortTable;
use crate::error::{Error, Result};
use crate::features::FeatureMetadata;
use crate::util::mean;

use super::boost::{fit_boosted, CvEntry};
use super::metrics::auc;
use super::predict_mu;
use super::tree::BoostParams;

/// Candidate hyperparameter values searched by cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrid {
    pub max_depth: Vec<u32>,
    pub eta: Vec<f64>,
    pub min_child_weight: Vec<f64>,
    pub gamma: Vec<f64>,
    pub max_delta_step: Vec<f64>,
    pub folds: usize,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            max_depth: vec![2, 4, 6],
            eta: vec![0.05, 0.1, 0.3],
            min_child_weight: vec![1.0, 10.0],
            gamma: vec![0.0, 1.0],
            max_delta_step: vec![0.0, 1.0],
            folds: 5,
        }
    }
}

impl HyperGrid {
    /// A single-point grid, for runs with fixed hyperparameters.
    pub fn single(params: &BoostParams, folds: usize) -> Self {
        Self {
            max_depth: vec![params.max_depth],
            eta: vec![params.eta],
            min_child_weight: vec![params.min_child_weight],
            gamma: vec![params.gamma],
            max_delta_step: vec![params.max_delta_step],
            folds,
        }
    }

    pub fn points(&self) -> Vec<BoostParams> {
        let mut out = Vec::new();
        for &max_depth in &self.max_depth {
            for &eta in &self.eta {
                for &min_child_weight in &self.min_child_weight {
                    for &gamma in &self.gamma {
                        for &max_delta_step in &self.max_delta_step {
                            out.push(BoostParams {
                                max_depth,
                                eta,
                                min_child_weight,
                                gamma,
                                max_delta_step,
                                lambda: 1.0,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.points().is_empty() {
            return Err(Error::Config("hyperparameter grid is empty".to_string()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!(
                "cross-validation needs at least 2 folds, got {}",
                self.folds
            )));
        }
        Ok(())
    }
}

fn make_folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rows: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (i, row) in rows.into_iter().enumerate() {
        folds[i % k].push(row);
    }
    folds
}

fn folds_have_both_classes(folds: &[Vec<usize>], labels: &[u8]) -> bool {
    folds.iter().all(|fold| {
        let pos = fold.iter().filter(|&&i| labels[i] == 1).count();
        pos > 0 && pos < fold.len()
    })
}

/// Choose hyperparameters by k-fold cross-validation maximizing mean
/// validation AUC. Ties break toward smaller `max_depth`, then smaller
/// `eta`, then grid order.
pub fn cv_select(
    train: &CohortTable,
    labels: &[u8],
    metadata: &FeatureMetadata,
    grid: &HyperGrid,
    rounds: usize,
    seed: u64,
) -> Result<(BoostParams, Vec<CvEntry>)> {
    grid.validate()?;
    let n = train.n_units();
    if labels.len() != n {
        return Err(Error::Numeric("cv_select: label length mismatch".into()));
    }
    let mut folds = make_folds(n, grid.folds, seed);
    if !folds_have_both_classes(&folds, labels) {
        // one reshuffle, then give up
        folds = make_folds(n, grid.folds, seed.wrapping_add(1));
        if !folds_have_both_classes(&folds, labels) {
            return Err(Error::DegenerateTarget(
                "a cross-validation fold contains a single class".to_string(),
            ));
        }
    }

    let mut table = Vec::new();
    for params in grid.points() {
        let mut fold_aucs = Vec::with_capacity(grid.folds);
        for fold in &folds {
            let mut train_rows: Vec<usize> = Vec::with_capacity(n - fold.len());
            let in_fold: std::collections::HashSet<usize> = fold.iter().copied().collect();
            for i in 0..n {
                if !in_fold.contains(&i) {
                    train_rows.push(i);
                }
            }
            let fold_train = train.subset(&train_rows);
            let fold_val = train.subset(fold);
            let train_labels: Vec<u8> = train_rows.iter().map(|&i| labels[i]).collect();
            let val_labels: Vec<u8> = fold.iter().map(|&i| labels[i]).collect();
            let model = fit_boosted(
                &fold_train,
                &train_labels,
                metadata,
                &params,
                rounds,
                Some((&fold_val, &val_labels)),
                seed,
            )?;
            let scores = predict_mu(&model, &fold_val)?;
            fold_aucs.push(auc(&scores, &val_labels)?);
        }
        let mean_auc = mean(&fold_aucs);
        table.push(CvEntry { params, fold_aucs, mean_auc });
    }

    let chosen = table
        .iter()
        .max_by(|a, b| {
            a.mean_auc
                .total_cmp(&b.mean_auc)
                // ties break toward the simpler model
                .then(b.params.max_depth.cmp(&a.params.max_depth))
                .then(b.params.eta.total_cmp(&a.params.eta))
        })
        .expect("grid is nonempty")
        .params
        .clone();
    Ok((chosen, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CohortTableBuilder, Covariate, Factor};
    use crate::features::GroupColumn;

    fn table(n: usize) -> (CohortTable, Vec<u8>) {
        let x: Vec<f64> = (0..n).map(|i| ((i * 37) % 100) as f64 / 50.0 - 1.0).collect();
        let labels: Vec<u8> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| u8::from(v + 0.8 * (((i * 13) % 7) as f64 / 7.0 - 0.5) > 0.0))
            .collect();
        let t = CohortTableBuilder {
            unit_id: (0..n).map(|i| i.to_string()).collect(),
            group: Factor::from_labels(&vec!["g"; n]),
            stratum: Factor::from_labels(&vec!["s"; n]),
            cohort: Factor::from_labels(&vec!["c"; n]),
            decision: vec![1; n],
            assessed: vec![1; n],
            passed: labels.clone(),
            covariates: vec![Covariate::Numeric {
                name: "x".into(),
                values: x,
                missing: vec![false; n],
            }],
            reference_group: None,
        }
        .build()
        .unwrap();
        (t, labels)
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let (t, labels) = table(60);
        let meta = FeatureMetadata::from_table(&t, GroupColumn::Exclude);
        let params = BoostParams { max_depth: 3, eta: 0.2, ..Default::default() };
        let grid = HyperGrid::single(&params, 3);
        let (chosen, entries) = cv_select(&t, &labels, &meta, &grid, 10, 1).unwrap();
        assert_eq!(chosen, params);
        assert_eq!(entries.len(), 1);
    }

    #[test]
    fn empty_grid_and_bad_folds_rejected() {
        let grid = HyperGrid { max_depth: vec![], ..Default::default() };
        assert!(grid.validate().is_err());
        let grid = HyperGrid { folds: 1, ..Default::default() };
        assert!(grid.validate().is_err());
    }

    #[test]
    fn dominant_point_wins() {
        let (t, labels) = table(80);
        let meta = FeatureMetadata::from_table(&t, GroupColumn::Exclude);
        // depth 2 with sane eta dominates a crippled zero-ish learner
        let grid = HyperGrid {
            max_depth: vec![2],
            eta: vec![0.3, 1e-9],
            min_child_weight: vec![1.0],
            gamma: vec![0.0],
            max_delta_step: vec![0.0],
            folds: 4,
        };
        let (chosen, entries) = cv_select(&t, &labels, &meta, &grid, 15, 5).unwrap();
        assert_eq!(chosen.eta, 0.3);
        assert_eq!(entries.len(), 2);
    }

    /// Independent CV loop: recompute every grid point's mean AUC with
    /// the same folds and verify the argmax matches.
    #[test]
    fn matches_brute_force_cv_oracle() {
        let (t, labels) = table(90);
        let meta = FeatureMetadata::from_table(&t, GroupColumn::Exclude);
        let grid = HyperGrid {
            max_depth: vec![1, 2, 3],
            eta: vec![0.05, 0.1, 0.3],
            min_child_weight: vec![1.0],
            gamma: vec![0.0],
            max_delta_step: vec![0.0],
            folds: 3,
        };
        let seed = 11;
        let (chosen, entries) = cv_select(&t, &labels, &meta, &grid, 12, seed).unwrap();

        // oracle: same folds, same fits, independent bookkeeping
        let folds = make_folds(t.n_units(), grid.folds, seed);
        assert!(folds_have_both_classes(&folds, &labels));
        let mut best: Option<(f64, BoostParams)> = None;
        for params in grid.points() {
            let mut aucs = Vec::new();
            for fold in &folds {
                let train_rows: Vec<usize> =
                    (0..t.n_units()).filter(|i| !fold.contains(i)).collect();
                let fold_train = t.subset(&train_rows);
                let fold_val = t.subset(fold);
                let train_labels: Vec<u8> = train_rows.iter().map(|&i| labels[i]).collect();
                let val_labels: Vec<u8> = fold.iter().map(|&i| labels[i]).collect();
                let model = fit_boosted(
                    &fold_train,
                    &train_labels,
                    &meta,
                    &params,
                    12,
                    Some((&fold_val, &val_labels)),
                    seed,
                )
                .unwrap();
                let scores = predict_mu(&model, &fold_val).unwrap();
                aucs.push(auc(&scores, &val_labels).unwrap());
            }
            let mean_auc = mean(&aucs);
            let better = match &best {
                None => true,
                Some((b, bp)) => {
                    mean_auc > *b
                        || (mean_auc == *b && params.max_depth < bp.max_depth)
                        || (mean_auc == *b && params.max_depth == bp.max_depth && params.eta < bp.eta)
                }
            };
            if better {
                best = Some((mean_auc, params));
            }
        }
        let (oracle_auc, oracle_params) = best.unwrap();
        assert_eq!(chosen, oracle_params);
        let chosen_entry = entries
            .iter()
            .find(|e| e.params == chosen)
            .unwrap();
        assert!((chosen_entry.mean_auc - oracle_auc).abs() < 1e-12);
    }
}
