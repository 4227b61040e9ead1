use std::path::PathBuf;

use anyhow::Context;

use prepadjust::dataset::{generate_synthetic, write_csv};
use prepadjust::util::derive_seed;

use super::{check_outputs, seeds, write_file, Provenance};
use crate::config::RunConfig;

/// Write a synthetic cohort CSV plus its ground-truth record.
pub fn run(
    config: &RunConfig,
    config_text: &str,
    seed: u64,
    out: &PathBuf,
    force: bool,
) -> anyhow::Result<()> {
    let synth = config
        .synthetic
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("simulate requires a [synthetic] section"))?;
    let cohort_path = out.join("cohort.csv");
    let truth_path = out.join("truth.json");
    check_outputs(&[cohort_path.clone(), truth_path.clone()], force)?;

    let mut truth = synth.truth.clone();
    truth.seed = derive_seed(seed, seeds::GENERATE);
    let (table, truth) =
        generate_synthetic(&truth, synth.n_units, synth.n_strata, synth.n_covariates)
            .context("stage simulate: generation failed")?;

    let provenance = Provenance::new(config_text, seed);
    std::fs::create_dir_all(out)?;
    let mut csv_bytes = Vec::new();
    write_csv(&table, &mut csv_bytes, Some(&provenance.comment()))?;
    write_file(&cohort_path, &String::from_utf8(csv_bytes).expect("csv is utf-8"))?;

    #[derive(serde::Serialize)]
    struct TruthDoc<'a> {
        provenance: &'a Provenance,
        truth: &'a prepadjust::dataset::SyntheticTruth,
    }
    let doc = serde_json::to_string_pretty(&TruthDoc {
        provenance: &provenance,
        truth: &truth,
    })?;
    write_file(&truth_path, &doc)?;

    log::info!(
        "simulated {} units across {} strata -> {}",
        table.n_units(),
        table.stratum().n_levels(),
        out.display()
    );
    Ok(())
}
