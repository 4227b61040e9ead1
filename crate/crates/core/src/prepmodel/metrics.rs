use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Area under the ROC curve: the probability that a uniformly random
/// positive outscores a uniformly random negative, ties credited 1/2.
/// Computed via the rank-sum identity, which equals exhaustive pair
/// counting.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Numeric(format!(
            "auc: {} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateTarget(
            "auc requires both classes present".to_string(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average ranks over tie groups
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied block [i, j] shares the average rank
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos = n_pos as f64;
    let n_neg = n_neg as f64;
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// One calibration cell: predicted vs empirical rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationCell {
    pub cell: String,
    pub mean_predicted: f64,
    pub empirical_rate: f64,
    pub count: usize,
    /// cells with fewer than 10 units are unreliable for plotting
    pub low_count: bool,
}

/// Per-cell predicted vs empirical passage rates (for group- or
/// stratum-level calibration plots).
pub fn calibration_report(
    mu_hat: &[f64],
    labels: &[u8],
    cells: &[String],
) -> Result<Vec<CalibrationCell>> {
    if mu_hat.len() != labels.len() || mu_hat.len() != cells.len() {
        return Err(Error::Numeric("calibration_report: length mismatch".into()));
    }
    let mut names: Vec<String> = Vec::new();
    for c in cells {
        if !names.contains(c) {
            names.push(c.clone());
        }
    }
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let idx: Vec<usize> = (0..cells.len()).filter(|&i| cells[i] == name).collect();
        let count = idx.len();
        let mean_predicted = idx.iter().map(|&i| mu_hat[i]).sum::<f64>() / count as f64;
        let empirical_rate =
            idx.iter().map(|&i| f64::from(labels[i])).sum::<f64>() / count as f64;
        out.push(CalibrationCell {
            cell: name,
            mean_predicted,
            empirical_rate,
            count,
            low_count: count < 10,
        });
    }
    Ok(out)
}
