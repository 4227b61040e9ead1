use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;

use prepadjust::dataset::{split_holdout, CohortTable, Covariate};
use prepadjust::glm::{
    bootstrap_ci, fit_adjusted, fit_baseline, AdjustedFit, BaselineVariant, BootstrapResult,
    CovariateSets,
};
use prepadjust::prepmodel::{
    calibration_report, cv_select, fit_passage_model, predict_mu, BoostParams, CalibrationCell,
    HyperGrid,
};
use prepadjust::features::{FeatureMetadata, GroupColumn};
use prepadjust::util::derive_seed;

use super::{
    check_outputs, information_counts, load_or_generate, seeds, write_file, InformationCounts,
    Provenance,
};
use crate::config::RunConfig;

/// Everything downstream stages need from the estimation run.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct FitsDoc {
    pub provenance: Provenance,
    pub info_counts: InformationCounts,
    /// out-of-sample AUC of the passage model
    pub model_auc: f64,
    pub chosen_params: BoostParams,
    pub adjusted: AdjustedFit,
    pub baselines: BTreeMap<String, AdjustedFit>,
    pub bootstrap: BootstrapResult,
}

/// Covariate sets for the traditional baselines: configured, or defaulted
/// to the full covariate list (I) and the numeric columns (II).
pub fn effective_covariate_sets(table: &CohortTable, config: &RunConfig) -> CovariateSets {
    let mut sets = config.baselines.clone();
    if sets.traditional1.is_empty() {
        sets.traditional1 = table
            .covariates()
            .iter()
            .map(|c| c.name().to_string())
            .collect();
    }
    if sets.traditional2.is_empty() {
        sets.traditional2 = table
            .covariates()
            .iter()
            .filter(|c| matches!(c, Covariate::Numeric { .. }))
            .map(|c| c.name().to_string())
            .collect();
        if sets.traditional2.is_empty() {
            sets.traditional2 = sets.traditional1.clone();
        }
    }
    sets
}

/// Fit the passage model on the complete units of `table` and score every
/// unit. Used by the main run and by every bootstrap replicate.
pub fn mu_pipeline(
    table: &CohortTable,
    params: &BoostParams,
    rounds: usize,
    holdout_fraction: f64,
    seed: u64,
) -> anyhow::Result<(prepadjust::prepmodel::PreparednessModel, Vec<f64>)> {
    let complete = table.complete_subset();
    if complete.n_units() < 2 {
        anyhow::bail!("too few complete-information units ({})", complete.n_units());
    }
    let (train, holdout) = split_holdout(&complete, 1.0 - holdout_fraction, seed)?;
    let model = fit_passage_model(&train, params, rounds, Some(&holdout), seed)?;
    let mu = predict_mu(&model, table)?;
    Ok((model, mu))
}

fn calibration_csv(cells: &[CalibrationCell], provenance: &Provenance) -> String {
    let mut out = format!("# {}\n", provenance.comment());
    out.push_str("cell,mean_predicted,empirical_rate,count,low_count\n");
    for cell in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            cell.cell, cell.mean_predicted, cell.empirical_rate, cell.count, cell.low_count
        );
    }
    out
}

/// Odds-ratio table mirroring the coefficient-rows-by-model-columns layout:
/// odds ratios with log-odds standard errors in parentheses; stratum fixed
/// effects omitted.
fn fit_table_csv(
    adjusted: &AdjustedFit,
    baselines: &BTreeMap<String, AdjustedFit>,
    provenance: &Provenance,
) -> String {
    let order = ["raw", "traditional_1", "traditional_2"];
    let mut columns: Vec<(&str, &AdjustedFit)> = vec![("preparedness_adjusted", adjusted)];
    for name in order {
        if let Some(fit) = baselines.get(name) {
            columns.push((name, fit));
        }
    }
    let mut rows: Vec<String> = Vec::new();
    for (_, fit) in &columns {
        for term in &fit.terms {
            if term.name.starts_with("stratum=") {
                continue;
            }
            if !rows.contains(&term.name) {
                rows.push(term.name.clone());
            }
        }
    }
    // the preparedness slope reads best as the last row
    if let Some(pos) = rows.iter().position(|r| r == "logit_mu") {
        let name = rows.remove(pos);
        rows.push(name);
    }

    let mut out = format!("# {}\n", provenance.comment());
    out.push_str("term");
    for (name, _) in &columns {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for row in &rows {
        let _ = write!(out, "{row}");
        for (_, fit) in &columns {
            match fit.terms.iter().find(|t| t.name == *row) {
                Some(t) => {
                    let _ = write!(out, ",{:.2} ({:.2})", t.odds_ratio, t.se);
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

#[allow(clippy::too_many_lines)]
pub fn run(
    config: &RunConfig,
    config_text: &str,
    seed: u64,
    out: &Path,
    force: bool,
) -> anyhow::Result<()> {
    let outputs = [
        out.join("model.json"),
        out.join("mu.csv"),
        out.join("fits.json"),
        out.join("fit_table.csv"),
        out.join("calibration_group.csv"),
        out.join("calibration_stratum.csv"),
    ];
    check_outputs(&outputs, force)?;
    let provenance = Provenance::new(config_text, seed);

    let raw = load_or_generate(config, seed).context("stage load")?;
    let info_counts = information_counts(&raw);
    let (table, impute_report) = super::impute(&raw).context("stage impute")?;

    // hyperparameters: cross-validated or fixed
    let chosen_params = if config.model.cv {
        let complete = table.complete_subset();
        let (train, _) = split_holdout(
            &complete,
            1.0 - config.model.holdout_fraction,
            derive_seed(seed, seeds::SPLIT),
        )
        .context("stage split")?;
        let metadata = FeatureMetadata::from_table(&train, GroupColumn::Exclude);
        let labels = train.passed().to_vec();
        let grid: &HyperGrid = &config.model.grid;
        let (params, _cv_table) = cv_select(
            &train,
            &labels,
            &metadata,
            grid,
            config.model.rounds,
            derive_seed(seed, seeds::CV),
        )
        .context("stage cv_select")?;
        params
    } else {
        config.model.params.clone()
    };

    let (mut model, mu) = mu_pipeline(
        &table,
        &chosen_params,
        config.model.rounds,
        config.model.holdout_fraction,
        derive_seed(seed, seeds::BOOST),
    )
    .context("stage fit_boosted")?;
    model.imputation = Some(impute_report);
    let model_auc = model
        .training_report
        .eval_auc
        .expect("holdout eval always supplied");

    let adjusted = fit_adjusted(&table, &mu).context("stage fit_adjusted")?;

    let covariate_sets = effective_covariate_sets(&table, config);
    let mut baselines = BTreeMap::new();
    for variant in [
        BaselineVariant::Raw,
        BaselineVariant::TraditionalI,
        BaselineVariant::TraditionalII,
    ] {
        let fit = fit_baseline(&table, variant, &covariate_sets)
            .with_context(|| format!("stage fit_baseline ({})", variant.label()))?;
        baselines.insert(variant.label().to_string(), fit);
    }

    let point = adjusted.group_effects();
    let boot_params = chosen_params.clone();
    let boot_rounds = config.model.rounds;
    let boot_holdout = config.model.holdout_fraction;
    let bootstrap = bootstrap_ci(
        &table,
        &point,
        |replicate, replicate_seed| {
            let (_, mu_rep) = mu_pipeline(
                replicate,
                &boot_params,
                boot_rounds,
                boot_holdout,
                replicate_seed,
            )
            .map_err(|e| prepadjust::Error::Numeric(e.to_string()))?;
            Ok(fit_adjusted(replicate, &mu_rep)?.group_effects())
        },
        config.bootstrap.replicates,
        derive_seed(seed, seeds::BOOTSTRAP),
    )
    .context("stage bootstrap")?;

    // calibration on complete units, by group and by stratum
    let complete_rows = table.complete_rows();
    let mu_complete: Vec<f64> = complete_rows.iter().map(|&i| mu[i]).collect();
    let passed_complete: Vec<u8> = complete_rows.iter().map(|&i| table.passed()[i]).collect();
    let group_cells: Vec<String> = complete_rows
        .iter()
        .map(|&i| table.group().level_of(i).to_string())
        .collect();
    let stratum_cells: Vec<String> = complete_rows
        .iter()
        .map(|&i| table.stratum().level_of(i).to_string())
        .collect();
    let group_calibration = calibration_report(&mu_complete, &passed_complete, &group_cells)?;
    let stratum_calibration = calibration_report(&mu_complete, &passed_complete, &stratum_cells)?;

    // emit everything
    std::fs::create_dir_all(out)?;
    write_file(&outputs[0], &model.to_json()?)?;

    let mut mu_csv = format!("# {}\n", provenance.comment());
    mu_csv.push_str("unit_id,mu_hat\n");
    for (id, m) in table.unit_ids().iter().zip(&mu) {
        let _ = writeln!(mu_csv, "{id},{m}");
    }
    write_file(&outputs[1], &mu_csv)?;

    let doc = FitsDoc {
        provenance: provenance.clone(),
        info_counts,
        model_auc,
        chosen_params,
        adjusted,
        baselines,
        bootstrap,
    };
    write_file(&outputs[2], &serde_json::to_string_pretty(&doc)?)?;
    write_file(&outputs[3], &fit_table_csv(&doc.adjusted, &doc.baselines, &provenance))?;
    write_file(&outputs[4], &calibration_csv(&group_calibration, &provenance))?;
    write_file(&outputs[5], &calibration_csv(&stratum_calibration, &provenance))?;

    log::info!(
        "estimate: AUC {:.3}, adjusted group effects {:?}",
        model_auc,
        doc.adjusted.group_effects()
    );
    Ok(())
}
