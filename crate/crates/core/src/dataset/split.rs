use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::table::CohortTable;

/// Disjoint, exhaustive, reproducible partition of a table into
/// `(train, holdout)` with `round(fraction * n)` training units.
pub fn split_holdout(
    table: &CohortTable,
    fraction: f64,
    seed: u64,
) -> Result<(CohortTable, CohortTable)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "holdout fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = table.n_units();
    if n < 2 {
        return Err(Error::Config(format!(
            "cannot split a table with {n} unit(s)"
        )));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
    let mut n_train = (fraction * n as f64).round() as usize;
    n_train = n_train.clamp(1, n - 1);
    let (train_rows, holdout_rows) = rows.split_at(n_train);
    let mut train_rows = train_rows.to_vec();
    let mut holdout_rows = holdout_rows.to_vec();
    train_rows.sort_unstable();
    holdout_rows.sort_unstable();
    Ok((table.subset(&train_rows), table.subset(&holdout_rows)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::table::test_support::small_table;

    fn table(n: usize) -> CohortTable {
        small_table(
            &vec!["g"; n],
            &vec!["s"; n],
            &vec![0; n],
            &vec![0; n],
            &vec![0; n],
            &[("x", (0..n).map(|i| i as f64).collect())],
        )
    }

    #[test]
    fn sizes_match_requested_fraction() {
        let t = table(10);
        let (train, holdout) = split_holdout(&t, 0.9, 7).unwrap();
        assert_eq!(train.n_units(), 9);
        assert_eq!(holdout.n_units(), 1);

        let t = table(100);
        let (train, holdout) = split_holdout(&t, 0.5, 7).unwrap();
        assert_eq!(train.n_units(), 50);
        assert_eq!(holdout.n_units(), 50);
    }

    #[test]
    fn partition_is_disjoint_and_exhaustive() {
        let t = table(37);
        let (train, holdout) = split_holdout(&t, 0.8, 3).unwrap();
        let mut ids: Vec<&String> = train.unit_ids().iter().chain(holdout.unit_ids()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 37);
    }

    #[test]
    fn deterministic_given_seed() {
        let t = table(10);
        let (a, _) = split_holdout(&t, 0.9, 42).unwrap();
        let (b, _) = split_holdout(&t, 0.9, 42).unwrap();
        assert_eq!(a.unit_ids(), b.unit_ids());
    }

    #[test]
    fn different_seeds_give_mostly_distinct_partitions() {
        let t = table(10);
        let mut partitions: Vec<Vec<String>> = (0..20)
            .map(|seed| split_holdout(&t, 0.5, seed).unwrap().0.unit_ids().to_vec())
            .collect();
        partitions.sort();
        partitions.dedup();
        assert!(partitions.len() >= 19, "only {} distinct", partitions.len());
    }

    #[test]
    fn rejects_tiny_tables_and_bad_fractions() {
        assert!(split_holdout(&table(1), 0.9, 0).is_err());
        assert!(split_holdout(&table(10), 1.0, 0).is_err());
        assert!(split_holdout(&table(10), 0.0, 0).is_err());
    }
}
