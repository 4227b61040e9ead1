use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::CohortTable;
use crate::error::{Error, Result};
use crate::util::{derive_seed, sample_sd};

/// How many times a degenerate replicate is redrawn before failing.
const MAX_REDRAWS: u64 = 5;

/// Bootstrap confidence intervals for the group coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// per-group replicate estimates, in replicate order
    pub replicate_estimates: BTreeMap<String, Vec<f64>>,
    pub se_boot: BTreeMap<String, f64>,
    /// point estimate ± 1.96 · se_boot, on the log-odds scale
    pub ci95: BTreeMap<String, (f64, f64)>,
    pub replicates: usize,
    pub master_seed: u64,
}

/// Resample units with replacement and re-run the full estimation pipeline
/// on each replicate.
///
/// `pipeline` maps a resampled table and a seed to the per-group log-odds
/// estimates (the seed drives any internal splits). Replicate seeds derive
/// from `master_seed` by a counter scheme, so results do not depend on
/// evaluation order; replicates run in parallel. A replicate that loses a
/// group entirely, or whose pipeline fails, is redrawn up to five times.
pub fn bootstrap_ci<F>(
    table: &CohortTable,
    point: &BTreeMap<String, f64>,
    pipeline: F,
    replicates: usize,
    master_seed: u64,
) -> Result<BootstrapResult>
where
    F: Fn(&CohortTable, u64) -> Result<BTreeMap<String, f64>> + Sync,
{
    if replicates == 0 {
        return Err(Error::Config("bootstrap needs at least one replicate".into()));
    }
    let n = table.n_units();
    let n_groups = table.group().n_levels();

    let run_one = |replicate: u64| -> Result<BTreeMap<String, f64>> {
        let mut last_err = None;
        for attempt in 0..MAX_REDRAWS {
            let seed = derive_seed(derive_seed(master_seed, replicate), attempt);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let resampled = table.subset(&rows);
            // every group level must survive the resample
            let counts = resampled.group().level_counts();
            if counts.iter().take(n_groups).any(|&c| c == 0) {
                last_err = Some(Error::DegenerateTarget(format!(
                    "replicate {replicate}: a group vanished from the resample"
                )));
                continue;
            }
            match pipeline(&resampled, seed) {
                Ok(estimates) => return Ok(estimates),
                Err(e) => last_err = Some(e),
            }
        }
        Err(Error::Numeric(format!(
            "replicate {replicate} failed after {MAX_REDRAWS} redraws: {}",
            last_err.map_or_else(|| "unknown".to_string(), |e| e.to_string())
        )))
    };

    let results: Vec<BTreeMap<String, f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(run_one)
        .collect::<Result<_>>()?;

    let mut replicate_estimates: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for estimates in &results {
        for (group, value) in estimates {
            replicate_estimates
                .entry(group.clone())
                .or_insert_with(|| Vec::with_capacity(replicates))
                .push(*value);
        }
    }
    let mut se_boot = BTreeMap::new();
    let mut ci95 = BTreeMap::new();
    for (group, values) in &replicate_estimates {
        let se = sample_sd(values);
        se_boot.insert(group.clone(), se);
        if let Some(&center) = point.get(group) {
            ci95.insert(group.clone(), (center - 1.96 * se, center + 1.96 * se));
        }
    }
    Ok(BootstrapResult {
        replicate_estimates,
        se_boot,
        ci95,
        replicates,
        master_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticTruth};

    fn demo_table() -> CohortTable {
        let cfg = SyntheticTruth { seed: 31, ..Default::default() };
        generate_synthetic(&cfg, 400, 4, 2).unwrap().0
    }

    #[test]
    fn constant_pipeline_collapses_to_point() {
        let table = demo_table();
        let mut point = BTreeMap::new();
        point.insert("black".to_string(), -0.4);
        let result = bootstrap_ci(
            &table,
            &point,
            |_t, _s| {
                let mut m = BTreeMap::new();
                m.insert("black".to_string(), -0.4);
                Ok(m)
            },
            25,
            7,
        )
        .unwrap();
        assert!(result.se_boot["black"].abs() < 1e-12);
        let (lo, hi) = result.ci95["black"];
        assert!((lo + 0.4).abs() < 1e-12 && (hi + 0.4).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_master_seed() {
        let table = demo_table();
        let point = BTreeMap::new();
        let pipeline = |t: &CohortTable, _s: u64| {
            let mut m = BTreeMap::new();
            let rate = t.decision().iter().map(|&v| f64::from(v)).sum::<f64>()
                / t.n_units() as f64;
            m.insert("rate".to_string(), rate);
            Ok(m)
        };
        let a = bootstrap_ci(&table, &point, pipeline, 50, 99).unwrap();
        let b = bootstrap_ci(&table, &point, pipeline, 50, 99).unwrap();
        assert_eq!(a.replicate_estimates, b.replicate_estimates);
        assert!(a.se_boot["rate"] > 0.0);
    }

    #[test]
    fn failing_pipeline_reports_replicate() {
        let table = demo_table();
        let point = BTreeMap::new();
        let err = bootstrap_ci(
            &table,
            &point,
            |_t, _s| Err(Error::DegenerateTarget("always fails".into())),
            3,
            1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("redraws"), "{err}");
    }
}
