//! Cohort tables: loading, validation, filtering, imputation, splitting,
//! information-status classification, and synthetic generation.

mod csv_io;
mod impute;
mod split;
mod synthetic;
mod table;

pub use csv_io::{load_csv, load_csv_str, self_schema, write_csv, Schema};
pub use impute::{impute_means, impute_with, ImputeReport};
pub use split::split_holdout;
pub use synthetic::{generate_synthetic, CategoricalSpec, ConfounderTruth, SyntheticTruth};
pub use table::{classify_information, Covariate, Factor, InformationStatus, MISSING_LEVEL};
pub use table::{CohortTable, CohortTableBuilder, DEFAULT_REFERENCE};
