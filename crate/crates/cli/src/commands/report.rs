use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;

use super::estimate::FitsDoc;
use super::sensitivity::BandDoc;
use super::{check_outputs, require_upstream, write_file, Provenance};

/// Combine the estimation (and, when present, sensitivity) artifacts into
/// a text report plus tidy plot-ready CSVs.
pub fn run(config_text: &str, seed: u64, out: &Path, force: bool) -> anyhow::Result<()> {
    let fits_path = out.join("fits.json");
    require_upstream(&fits_path)?;
    let outputs = [
        out.join("report.txt"),
        out.join("fig_disparities.csv"),
        out.join("fig_sensitivity.csv"),
    ];
    check_outputs(&outputs, force)?;
    let provenance = Provenance::new(config_text, seed);

    let fits: FitsDoc = serde_json::from_str(&std::fs::read_to_string(&fits_path)?)
        .context("fits.json is unreadable; re-run estimate")?;
    let band_path = out.join("sensitivity_band.json");
    let band: Option<BandDoc> = if band_path.exists() {
        Some(
            serde_json::from_str(&std::fs::read_to_string(&band_path)?)
                .context("sensitivity_band.json is unreadable; re-run sensitivity")?,
        )
    } else {
        None
    };

    // tidy odds-ratio table: one row per (model, group)
    let mut fig1 = format!("# {}\n", provenance.comment());
    fig1.push_str("model,group,odds_ratio,log_odds,se_log_odds,ci_lo,ci_hi\n");
    let mut models: Vec<(&str, &prepadjust::glm::AdjustedFit)> =
        vec![("preparedness_adjusted", &fits.adjusted)];
    for (name, fit) in &fits.baselines {
        models.push((name, fit));
    }
    for (model, fit) in &models {
        for (group, log_odds) in fit.group_effects() {
            let se = fit.group_ses().get(&group).copied().unwrap_or(f64::NAN);
            let (ci_lo, ci_hi) = if *model == "preparedness_adjusted" {
                fits.bootstrap
                    .ci95
                    .get(&group)
                    .copied()
                    .unwrap_or((f64::NAN, f64::NAN))
            } else {
                (log_odds - 1.96 * se, log_odds + 1.96 * se)
            };
            let _ = writeln!(
                fig1,
                "{model},{group},{},{log_odds},{se},{ci_lo},{ci_hi}",
                log_odds.exp()
            );
        }
    }

    // sensitivity bands if the stage has run
    let mut fig2 = format!("# {}\n", provenance.comment());
    fig2.push_str("group,band_min,band_max,ci_lo,ci_hi,zero_cell,adjusted\n");
    if let Some(band_doc) = &band {
        for (group, band) in &band_doc.band {
            let zero = band_doc.zero_cell.get(group).copied().unwrap_or(f64::NAN);
            let adjusted = band_doc.adjusted.get(group).copied().unwrap_or(f64::NAN);
            let _ = writeln!(
                fig2,
                "{group},{},{},{},{},{zero},{adjusted}",
                band.min, band.max, band.ci_lo, band.ci_hi
            );
        }
    }

    let mut report = String::new();
    let _ = writeln!(report, "run {} (seed {})", provenance.config_hash, provenance.seed);
    let _ = writeln!(report, "\nunits by information status");
    let _ = writeln!(report, "  complete (enrolled, assessed): {}", fits.info_counts.complete);
    let _ = writeln!(report, "  enrolled, not assessed:        {}", fits.info_counts.enrolled_no_exam);
    let _ = writeln!(report, "  not enrolled, assessed:        {}", fits.info_counts.exam_without_enrollment);
    let _ = writeln!(report, "  not enrolled, not assessed:    {}", fits.info_counts.no_enrollment_no_exam);
    let _ = writeln!(report, "\npassage model out-of-sample AUC: {:.3}", fits.model_auc);
    let _ = writeln!(report, "\ngroup odds ratios (log-odds SE), by model:");
    for (model, fit) in &models {
        let _ = writeln!(report, "  {model}:");
        for (group, log_odds) in fit.group_effects() {
            let se = fit.group_ses().get(&group).copied().unwrap_or(f64::NAN);
            let _ = writeln!(report, "    {group}: {:.3} ({se:.3})", log_odds.exp());
        }
    }
    if let Some(band_doc) = &band {
        let _ = writeln!(
            report,
            "\nsensitivity bands (log-odds, cap {:.4}; propensity AUC {:.3}):",
            band_doc.theta_cap, band_doc.propensity_auc
        );
        for (group, b) in &band_doc.band {
            let _ = writeln!(
                report,
                "    {group}: [{:.3}, {:.3}]  with CI endpoints [{:.3}, {:.3}]",
                b.min, b.max, b.ci_lo, b.ci_hi
            );
        }
        let _ = writeln!(report, "  zero-cell diagnostic (discrepancy vs adjusted):");
        for (group, d) in &band_doc.zero_cell_discrepancy {
            let _ = writeln!(report, "    {group}: {d:+.4}");
        }
    } else {
        let _ = writeln!(report, "\nsensitivity stage not run; bands unavailable");
    }

    write_file(&outputs[0], &report)?;
    write_file(&outputs[1], &fig1)?;
    write_file(&outputs[2], &fig2)?;
    Ok(())
}
