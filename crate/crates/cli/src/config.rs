use std::path::PathBuf;

use serde::Deserialize;

use prepadjust::dataset::{Schema, SyntheticTruth};
use prepadjust::glm::CovariateSets;
use prepadjust::prepmodel::{BoostParams, HyperGrid};

/// One structured config file drives a run; flags override the seed and
/// output directory. Exactly one of `[input]` and `[synthetic]` must be
/// present, and a seed is mandatory (no wall-clock seeding).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub input: Option<InputSection>,
    pub synthetic: Option<SyntheticSection>,
    pub schema: Option<Schema>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub baselines: CovariateSets,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub sensitivity: SensitivitySection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub n_units: usize,
    pub n_strata: usize,
    pub n_covariates: usize,
    /// ground-truth overrides; the generator seed always derives from the
    /// run seed
    #[serde(default)]
    pub truth: SyntheticTruth,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// boosting rounds for the passage model
    pub rounds: usize,
    /// held-out fraction for the out-of-sample AUC report
    pub holdout_fraction: f64,
    /// grid-search hyperparameters by cross-validation before the final fit
    pub cv: bool,
    pub grid: HyperGrid,
    /// hyperparameters used when `cv` is off
    pub params: BoostParams,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            rounds: 300,
            holdout_fraction: 0.1,
            cv: false,
            grid: HyperGrid::default(),
            params: BoostParams::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapSection {
    pub replicates: usize,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self { replicates: 100 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivitySection {
    /// grid values for the decision-side effect; defaults to log-integer
    /// steps within the cap
    pub alpha: Option<Vec<f64>>,
    /// grid values for the outcome-side effect
    pub delta: Option<Vec<f64>>,
    /// prevalence grid step
    pub q_step: f64,
    /// cap as an odds multiplier: theta = log(theta_odds)
    pub theta_odds: u32,
    /// propensity learner settings
    pub rounds: usize,
    pub include_group: bool,
    pub params: BoostParams,
    pub holdout_fraction: f64,
    /// when present, the cap is calibrated from this benchmark covariate
    /// instead of `theta_odds`
    pub calibrate: Option<CalibrateSection>,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        Self {
            alpha: None,
            delta: None,
            q_step: 0.1,
            theta_odds: 3,
            rounds: 300,
            include_group: false,
            params: BoostParams::default(),
            holdout_fraction: 0.1,
            calibrate: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    pub benchmark: String,
    #[serde(default)]
    pub companions: Vec<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        Ok(config)
    }

    /// Structural checks shared by all commands.
    pub fn validate(&self) -> anyhow::Result<()> {
        match (&self.input, &self.synthetic) {
            (Some(_), Some(_)) => anyhow::bail!(
                "config must name exactly one of [input] and [synthetic], found both"
            ),
            (None, None) => {
                anyhow::bail!("config must name exactly one of [input] and [synthetic]")
            }
            (Some(_), None) => {
                if self.schema.is_none() {
                    anyhow::bail!("[input] requires a [schema] section");
                }
            }
            (None, Some(s)) => {
                if s.n_units == 0 || s.n_strata == 0 {
                    anyhow::bail!("[synthetic] needs positive n_units and n_strata");
                }
            }
        }
        if !(self.model.holdout_fraction > 0.0 && self.model.holdout_fraction < 1.0) {
            anyhow::bail!("model.holdout_fraction must lie in (0, 1)");
        }
        if self.sensitivity.q_step <= 0.0 || self.sensitivity.q_step > 1.0 {
            anyhow::bail!("sensitivity.q_step must lie in (0, 1]");
        }
        if self.sensitivity.theta_odds < 2 {
            anyhow::bail!("sensitivity.theta_odds must be at least 2");
        }
        Ok(())
    }

    /// The effective seed: flag wins over config; absence is an error.
    pub fn seed(&self, flag: Option<u64>) -> anyhow::Result<u64> {
        flag.or(self.seed)
            .ok_or_else(|| anyhow::anyhow!("a seed is mandatory: set `seed` or pass --seed"))
    }

    /// The effective output directory: flag wins over config.
    pub fn out_dir(&self, flag: Option<PathBuf>) -> anyhow::Result<PathBuf> {
        flag.or_else(|| self.out.clone())
            .ok_or_else(|| anyhow::anyhow!("an output directory is mandatory: set `out` or pass --out"))
    }

    /// Prevalence grid from the configured step: {0, step, 2 step, ..., 1}.
    pub fn q_values(&self) -> Vec<f64> {
        let step = self.sensitivity.q_step;
        let mut out = Vec::new();
        let mut k = 0u32;
        loop {
            let q = f64::from(k) * step;
            if q >= 1.0 - 1e-12 {
                out.push(1.0);
                break;
            }
            out.push(q);
            k += 1;
        }
        out
    }
}
