use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::CohortTable;
use crate::error::{Error, Result};
use crate::glm::{fit_logistic, FitOptions};

use super::augment::{
    augment_columns, augmented_design, augmented_design_template, decision_nuisance, fill_cell,
    SensitivityParams,
};

/// Grid of confounder hypotheses searched by the sensitivity analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
    /// prevalence values probed for both the reference and comparison groups
    pub q_values: Vec<f64>,
    /// bound on |alpha| and |delta|
    pub theta_cap: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::with_theta(3f64.ln())
    }
}

impl GridSpec {
    /// The default grid at a given cap: alpha, delta over
    /// {-cap, ..., -log 2, 0, log 2, ..., cap} and prevalences over
    /// {0, 0.1, ..., 1.0}.
    pub fn with_theta(theta_cap: f64) -> Self {
        let mut shifts = vec![0.0];
        let mut k = 2.0f64;
        while k.ln() <= theta_cap + 1e-12 {
            shifts.push(k.ln());
            shifts.insert(0, -k.ln());
            k += 1.0;
        }
        Self {
            alpha: shifts.clone(),
            delta: shifts,
            q_values: (0..=10i32).map(|i| f64::from(i) / 10.0).collect(),
            theta_cap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() || self.delta.is_empty() || self.q_values.is_empty() {
            return Err(Error::Config("sensitivity grid must be nonempty".into()));
        }
        for &v in self.alpha.iter().chain(&self.delta) {
            if v.abs() > self.theta_cap + 1e-12 {
                return Err(Error::Config(format!(
                    "grid value {v} exceeds the theta cap {}",
                    self.theta_cap
                )));
            }
        }
        for &q in &self.q_values {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Config(format!("grid prevalence {q} outside [0,1]")));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<SensitivityParams> {
        let mut out =
            Vec::with_capacity(self.alpha.len() * self.delta.len() * self.q_values.len().pow(2));
        for &alpha in &self.alpha {
            for &delta in &self.delta {
                for &q_ref in &self.q_values {
                    for &q_alt in &self.q_values {
                        out.push(SensitivityParams {
                            q_ref,
                            q_alt,
                            alpha,
                            delta,
                            theta_cap: self.theta_cap,
                        });
                    }
                }
            }
        }
        out
    }
}

/// One evaluated grid cell: the confounder hypothesis and the re-estimated
/// per-group log-odds coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub params: SensitivityParams,
    pub estimates: BTreeMap<String, f64>,
}

/// Per-group sensitivity band with bootstrap-widened endpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupBand {
    pub min: f64,
    pub max: f64,
    /// min - 1.96 se_boot
    pub ci_lo: f64,
    /// max + 1.96 se_boot
    pub ci_hi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub cells: Vec<SensitivityCell>,
    pub band: BTreeMap<String, GroupBand>,
    /// coefficients at the all-zero cell (no-confounding diagnostic)
    pub zero_cell: BTreeMap<String, f64>,
}

/// Evaluate the re-estimated group coefficients over every grid cell.
///
/// Cells are independent pure computations; they run in parallel and are
/// collected by index. Every cell is warm-started from the zero cell's
/// coefficients. `se_boot` supplies per-group bootstrap standard errors for
/// the band endpoints.
pub fn grid_search(
    table: &CohortTable,
    p_hat: &[f64],
    mu_hat: &[f64],
    grid: &GridSpec,
    se_boot: &BTreeMap<String, f64>,
) -> Result<SensitivityResult> {
    grid.validate()?;

    // zero cell first: the no-confounding diagnostic and the warm start
    let zero_params = SensitivityParams::zero(grid.theta_cap);
    let zero_cols = augment_columns(table, p_hat, mu_hat, &zero_params)?;
    let zero_design = augmented_design(table, zero_cols);
    let zero_fit = fit_logistic(&zero_design, &FitOptions::default())?;
    let warm = zero_fit.coefficients_for(&zero_design.names);
    let zero_cell = zero_fit.group_effects();

    // one task per (alpha, q_ref); within a task the (q_alt, delta) cells
    // are swept in serpentine order so each fit warm-starts from its
    // nearest evaluated neighbor, and the decision-side nuisances are
    // shared across the delta sweep
    let mut tasks = Vec::with_capacity(grid.alpha.len() * grid.q_values.len());
    for (ai, &alpha) in grid.alpha.iter().enumerate() {
        for (ri, &q_ref) in grid.q_values.iter().enumerate() {
            tasks.push((ai, ri, alpha, q_ref));
        }
    }
    let run_task = |(ai, ri, alpha, q_ref): (usize, usize, f64, f64)|
     -> Result<Vec<(usize, SensitivityCell)>> {
        let mut out = Vec::with_capacity(grid.delta.len() * grid.q_values.len());
        let mut task_warm = warm.clone();
        let mut design = augmented_design_template(table);
        for (ci, &q_alt) in grid.q_values.iter().enumerate() {
            let nuisance = decision_nuisance(table, p_hat, q_ref, q_alt, alpha)?;
            let forward = ci % 2 == 0;
            let delta_order: Vec<usize> = if forward {
                (0..grid.delta.len()).collect()
            } else {
                (0..grid.delta.len()).rev().collect()
            };
            for di in delta_order {
                let delta = grid.delta[di];
                let params = SensitivityParams {
                    q_ref,
                    q_alt,
                    alpha,
                    delta,
                    theta_cap: grid.theta_cap,
                };
                params.validate()?;
                fill_cell(&mut design, &nuisance, mu_hat, delta)?;
                let fit = fit_logistic(
                    &design,
                    &FitOptions {
                        warm_start: Some(task_warm.clone()),
                        skip_rank_check: true,
                    },
                )
                .map_err(|e| {
                    Error::Numeric(format!(
                        "grid cell (q_ref={q_ref}, q_alt={q_alt}, alpha={alpha:.4}, \
                         delta={delta:.4}) failed: {e}"
                    ))
                })?;
                task_warm = fit.coefficients_for(&design.names);
                // canonical cell order: alpha, delta, q_ref, q_alt
                let slot = ((ai * grid.delta.len() + di) * grid.q_values.len() + ri)
                    * grid.q_values.len()
                    + ci;
                out.push((
                    slot,
                    SensitivityCell {
                        params,
                        estimates: fit.group_effects(),
                    },
                ));
            }
        }
        Ok(out)
    };
    let task_results: Vec<Vec<(usize, SensitivityCell)>> = tasks
        .into_par_iter()
        .map(run_task)
        .collect::<Result<_>>()?;
    let n_cells = grid.alpha.len() * grid.delta.len() * grid.q_values.len().pow(2);
    let mut slots: Vec<Option<SensitivityCell>> = vec![None; n_cells];
    for group in task_results {
        for (slot, cell) in group {
            slots[slot] = Some(cell);
        }
    }
    let cells: Vec<SensitivityCell> = slots
        .into_iter()
        .map(|c| c.expect("every grid slot is filled exactly once"))
        .collect();

    let mut band: BTreeMap<String, GroupBand> = BTreeMap::new();
    for cell in &cells {
        for (group, &value) in &cell.estimates {
            let se = se_boot.get(group).copied().unwrap_or(0.0);
            band.entry(group.clone())
                .and_modify(|b| {
                    if value < b.min {
                        b.min = value;
                        b.ci_lo = value - 1.96 * se;
                    }
                    if value > b.max {
                        b.max = value;
                        b.ci_hi = value + 1.96 * se;
                    }
                })
                .or_insert_with(|| GroupBand {
                    min: value,
                    max: value,
                    ci_lo: value - 1.96 * se,
                    ci_hi: value + 1.96 * se,
                });
        }
    }

    Ok(SensitivityResult {
        cells,
        band,
        zero_cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticTruth};

    fn setup() -> (CohortTable, Vec<f64>, Vec<f64>) {
        let cfg = SyntheticTruth { seed: 51, ..Default::default() };
        let (table, truth) = generate_synthetic(&cfg, 1500, 4, 2).unwrap();
        let latents = truth.latents.unwrap();
        (table, latents.decision_prob, latents.mu_true)
    }

    #[test]
    fn default_grid_shape_matches_contract() {
        let grid = GridSpec::default();
        assert_eq!(grid.alpha.len(), 5);
        assert_eq!(grid.delta.len(), 5);
        assert_eq!(grid.q_values.len(), 11);
        assert_eq!(grid.cells().len(), 3025);
        assert!((grid.alpha[0] + 3f64.ln()).abs() < 1e-12);
        assert!((grid.alpha[4] - 3f64.ln()).abs() < 1e-12);
        assert_eq!(grid.alpha[2], 0.0);
    }

    #[test]
    fn one_cell_grid_collapses_band_to_a_point() {
        let (table, p, mu) = setup();
        let grid = GridSpec {
            alpha: vec![0.0],
            delta: vec![0.0],
            q_values: vec![0.0],
            theta_cap: 3f64.ln(),
        };
        let result = grid_search(&table, &p, &mu, &grid, &BTreeMap::new()).unwrap();
        assert_eq!(result.cells.len(), 1);
        let band = &result.band["black"];
        assert_eq!(band.min, band.max);
        assert_eq!(band.min, result.zero_cell["black"]);
    }

    #[test]
    fn band_contains_zero_cell_and_respects_se() {
        let (table, p, mu) = setup();
        let grid = GridSpec {
            alpha: vec![-(2f64.ln()), 0.0, 2f64.ln()],
            delta: vec![0.0],
            q_values: vec![0.0, 0.5],
            theta_cap: 3f64.ln(),
        };
        let mut se = BTreeMap::new();
        se.insert("black".to_string(), 0.05);
        let result = grid_search(&table, &p, &mu, &grid, &se).unwrap();
        assert_eq!(result.cells.len(), 3 * 1 * 4);
        let band = &result.band["black"];
        let z = result.zero_cell["black"];
        assert!(band.min <= z && z <= band.max);
        assert!((band.ci_lo - (band.min - 1.96 * 0.05)).abs() < 1e-12);
        assert!((band.ci_hi - (band.max + 1.96 * 0.05)).abs() < 1e-12);
    }

    #[test]
    fn widening_theta_never_narrows_the_band() {
        let (table, p, mu) = setup();
        let se = BTreeMap::new();
        let narrow = GridSpec {
            q_values: vec![0.0, 0.3, 0.7, 1.0],
            ..GridSpec::with_theta(2f64.ln())
        };
        let wide = GridSpec {
            q_values: vec![0.0, 0.3, 0.7, 1.0],
            ..GridSpec::with_theta(3f64.ln())
        };
        assert_eq!(narrow.alpha.len(), 3);
        assert_eq!(wide.alpha.len(), 5);
        let narrow_result = grid_search(&table, &p, &mu, &narrow, &se).unwrap();
        let wide_result = grid_search(&table, &p, &mu, &wide, &se).unwrap();
        let nb = &narrow_result.band["black"];
        let wb = &wide_result.band["black"];
        assert!(wb.min <= nb.min + 1e-12);
        assert!(wb.max >= nb.max - 1e-12);
    }

    #[test]
    fn grid_validation_rejects_cap_violations() {
        let grid = GridSpec {
            alpha: vec![3f64.ln()],
            delta: vec![0.0],
            q_values: vec![0.5],
            theta_cap: 2f64.ln(),
        };
        assert!(grid.validate().is_err());
    }
}
