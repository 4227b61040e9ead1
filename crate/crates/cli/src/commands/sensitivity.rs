use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;

use prepadjust::sensitivity::{
    calibrate_theta, fit_propensity, grid_search, GridSpec, PropensityConfig, SensitivityResult,
    ThetaCalibration,
};
use prepadjust::util::derive_seed;

use super::estimate::FitsDoc;
use super::{check_outputs, load_or_generate, require_upstream, seeds, write_file, Provenance};
use crate::config::RunConfig;

/// Band summary emitted for plotting, with the no-confounding diagnostic.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct BandDoc {
    pub provenance: Provenance,
    pub theta_cap: f64,
    pub calibration: Option<ThetaCalibration>,
    pub propensity_auc: f64,
    pub band: BTreeMap<String, prepadjust::sensitivity::GroupBand>,
    /// group coefficients at the all-zero cell
    pub zero_cell: BTreeMap<String, f64>,
    /// zero-cell coefficient minus the main adjusted estimate; nonzero
    /// values reflect propensity-model error, not confounding
    pub zero_cell_discrepancy: BTreeMap<String, f64>,
    /// main adjusted estimates, repeated here for self-contained plotting
    pub adjusted: BTreeMap<String, f64>,
    pub se_boot: BTreeMap<String, f64>,
}

fn grid_csv(result: &SensitivityResult, provenance: &Provenance) -> String {
    let mut out = format!("# {}\n", provenance.comment());
    out.push_str("alpha,delta,q_ref,q_alt,group,estimate\n");
    for cell in &result.cells {
        for (group, estimate) in &cell.estimates {
            let _ = writeln!(
                out,
                "{},{},{},{},{group},{estimate}",
                cell.params.alpha, cell.params.delta, cell.params.q_ref, cell.params.q_alt
            );
        }
    }
    out
}

pub fn run(
    config: &RunConfig,
    config_text: &str,
    seed: u64,
    out: &Path,
    force: bool,
) -> anyhow::Result<()> {
    let fits_path = out.join("fits.json");
    let mu_path = out.join("mu.csv");
    require_upstream(&fits_path)?;
    require_upstream(&mu_path)?;
    let outputs = [out.join("sensitivity_grid.csv"), out.join("sensitivity_band.json")];
    check_outputs(&outputs, force)?;
    let provenance = Provenance::new(config_text, seed);

    let fits: FitsDoc = serde_json::from_str(&std::fs::read_to_string(&fits_path)?)
        .context("fits.json is unreadable; re-run estimate")?;
    let mu = read_mu(&mu_path)?;

    let raw = load_or_generate(config, seed).context("stage load")?;
    let (table, _) = super::impute(&raw).context("stage impute")?;
    if mu.len() != table.n_units() {
        anyhow::bail!(
            "mu.csv has {} rows but the table has {} units; artifacts out of sync",
            mu.len(),
            table.n_units()
        );
    }

    let propensity = fit_propensity(
        &table,
        &PropensityConfig {
            params: config.sensitivity.params.clone(),
            rounds: config.sensitivity.rounds,
            include_group: config.sensitivity.include_group,
            holdout_fraction: config.sensitivity.holdout_fraction,
            seed: derive_seed(seed, seeds::PROPENSITY),
        },
    )
    .context("stage fit_propensity")?;
    log::info!("propensity model out-of-sample AUC {:.3}", propensity.auc);

    // the cap: calibrated against a benchmark covariate when configured
    let calibration = match &config.sensitivity.calibrate {
        Some(cal) => Some(
            calibrate_theta(&table, &cal.benchmark, &cal.companions)
                .context("stage calibrate_theta")?,
        ),
        None => None,
    };
    let theta_cap = calibration
        .as_ref()
        .map_or_else(|| f64::from(config.sensitivity.theta_odds).ln(), |c| c.theta);

    let default_grid = GridSpec::with_theta(theta_cap);
    let grid = GridSpec {
        alpha: config.sensitivity.alpha.clone().unwrap_or_else(|| default_grid.alpha.clone()),
        delta: config.sensitivity.delta.clone().unwrap_or_else(|| default_grid.delta.clone()),
        q_values: config.q_values(),
        theta_cap,
    };

    let result = grid_search(&table, &propensity.p_hat, &mu, &grid, &fits.bootstrap.se_boot)
        .context("stage grid_search")?;

    let adjusted = fits.adjusted.group_effects();
    let zero_cell_discrepancy: BTreeMap<String, f64> = result
        .zero_cell
        .iter()
        .filter_map(|(g, v)| adjusted.get(g).map(|a| (g.clone(), v - a)))
        .collect();

    std::fs::create_dir_all(out)?;
    write_file(&outputs[0], &grid_csv(&result, &provenance))?;
    let doc = BandDoc {
        provenance,
        theta_cap,
        calibration,
        propensity_auc: propensity.auc,
        band: result.band,
        zero_cell: result.zero_cell,
        zero_cell_discrepancy,
        adjusted,
        se_boot: fits.bootstrap.se_boot.clone(),
    };
    write_file(&outputs[1], &serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn read_mu(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("unit_id") || line.is_empty() {
            continue;
        }
        let cell = line
            .rsplit(',')
            .next()
            .ok_or_else(|| anyhow::anyhow!("malformed mu.csv line: {line}"))?;
        out.push(cell.parse::<f64>().context("malformed mu value")?);
    }
    Ok(out)
}
