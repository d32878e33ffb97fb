//! Run configuration: one TOML file per run, archivable and diffable.
//! Unknown keys are hard errors so a typo never silently changes a run.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use rejinf::data::{CsvSchema, FeatureDistribution, TruthModel};
use rejinf::evaluation::MethodConfig;
use rejinf::logistic::FitOptions;
use rejinf::mechanisms::MechanismTemplate;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    /// Output directory; the `--out` flag overrides it.
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub mechanism: Option<MechanismTemplate>,
    #[serde(default)]
    pub fit: Option<FitOptions>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub table1: Option<Table1Section>,
    #[serde(default)]
    pub csv: Option<CsvSchema>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Synthetic data-generating process shared by the experiment commands.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub truth: TruthModel,
    pub features: FeatureDistribution,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Synthetic mode: records generated for training. Ignored when
    /// `data_csv` is set.
    #[serde(default)]
    pub n_train: Option<usize>,
    #[serde(default)]
    pub n_test: Option<usize>,
    /// Strictly decreasing acceptance rates in (0, 1].
    pub rates: Vec<f64>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub methods: Vec<MethodConfig>,
    /// Write augmentation/parceling audit CSVs alongside sweep.csv.
    #[serde(default)]
    pub audit: bool,
    /// Real-data mode: sweep the financed records of this CSV (schema from
    /// the [csv] section) instead of generating data.
    #[serde(default)]
    pub data_csv: Option<PathBuf>,
    /// Fraction of the financed records held out as the test set in
    /// real-data mode.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_test_fraction() -> f64 {
    0.25
}

fn default_bootstrap() -> usize {
    1000
}

fn default_replications() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Section {
    /// Records per replication.
    pub n: usize,
    /// Replications per cell.
    pub replications: usize,
    /// Sample size of the unselected pseudo-true reference fit used by the
    /// misspecified arm.
    #[serde(default = "default_pseudo_true_n")]
    pub pseudo_true_n: usize,
    /// Quadratic term added to the linear predictor in the misspecified arm.
    pub curvature: f64,
    /// Financing-probability multiplier on defaults for the MNAR cell.
    pub mnar_default_penalty: f64,
}

fn default_pseudo_true_n() -> usize {
    1_000_000
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }
}
