pub mod estimate;
pub mod report;
pub mod sensitivity;
pub mod simulate;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use prepadjust::dataset::{self, CohortTable, ImputeReport};
use prepadjust::util::derive_seed;

use crate::config::RunConfig;

/// Upstream artifact missing (exit code 3).
#[derive(Debug)]
pub struct MissingUpstream(pub PathBuf);

impl std::fmt::Display for MissingUpstream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "missing upstream artifact '{}'; run the earlier pipeline stage first",
            self.0.display()
        )
    }
}

impl std::error::Error for MissingUpstream {}

/// Run provenance stamped into every emitted table.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_text: &str, seed: u64) -> Self {
        let digest = Sha256::digest(config_text.as_bytes());
        let mut hash = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            let _ = write!(hash, "{byte:02x}");
        }
        Self {
            config_hash: hash,
            seed,
        }
    }

    pub fn comment(&self) -> String {
        format!("config_hash={} seed={}", self.config_hash, self.seed)
    }
}

/// Seed sub-streams per pipeline stage, derived from the run seed by a
/// counter scheme.
pub mod seeds {
    pub const GENERATE: u64 = 0;
    pub const SPLIT: u64 = 1;
    pub const CV: u64 = 2;
    pub const BOOST: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const PROPENSITY: u64 = 5;
}

/// Refuse to overwrite existing outputs unless forced.
pub fn check_outputs(paths: &[PathBuf], force: bool) -> anyhow::Result<()> {
    if force {
        return Ok(());
    }
    for path in paths {
        if path.exists() {
            anyhow::bail!(
                "output '{}' already exists; pass --force to overwrite",
                path.display()
            );
        }
    }
    Ok(())
}

pub fn require_upstream(path: &Path) -> anyhow::Result<()> {
    if !path.exists() {
        return Err(MissingUpstream(path.to_path_buf()).into());
    }
    Ok(())
}

/// Load the configured input table, or generate the configured synthetic
/// cohort (deterministically from the run seed). Returns the raw table.
pub fn load_or_generate(config: &RunConfig, seed: u64) -> anyhow::Result<CohortTable> {
    if let Some(input) = &config.input {
        let schema = config
            .schema
            .as_ref()
            .expect("validated: input requires schema");
        let table = dataset::load_csv(&input.path, schema)?;
        return Ok(table);
    }
    let synth = config
        .synthetic
        .as_ref()
        .expect("validated: one source present");
    let mut truth = synth.truth.clone();
    truth.seed = derive_seed(seed, seeds::GENERATE);
    let (table, _) =
        dataset::generate_synthetic(&truth, synth.n_units, synth.n_strata, synth.n_covariates)?;
    Ok(table)
}

/// Classification counts mirroring the four decision/assessment cells.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct InformationCounts {
    pub complete: usize,
    pub enrolled_no_exam: usize,
    pub no_enrollment_no_exam: usize,
    pub exam_without_enrollment: usize,
}

pub fn information_counts(table: &CohortTable) -> InformationCounts {
    let mut counts = InformationCounts {
        complete: 0,
        enrolled_no_exam: 0,
        no_enrollment_no_exam: 0,
        exam_without_enrollment: 0,
    };
    for i in 0..table.n_units() {
        match (table.decision()[i], table.assessed()[i]) {
            (1, 1) => counts.complete += 1,
            (1, 0) => counts.enrolled_no_exam += 1,
            (0, 0) => counts.no_enrollment_no_exam += 1,
            (0, 1) => counts.exam_without_enrollment += 1,
            _ => unreachable!("flags validated as binary"),
        }
    }
    counts
}

/// Imputed table plus the means used (recorded for reuse).
pub fn impute(table: &CohortTable) -> anyhow::Result<(CohortTable, ImputeReport)> {
    Ok(dataset::impute_means(table)?)
}

pub fn write_file(path: &Path, content: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}
