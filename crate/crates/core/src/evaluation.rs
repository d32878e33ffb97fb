//! Ranking metrics, bootstrap comparisons, the Monte Carlo asymptotics
//! verdict table, and the acceptance-rate sweep harness.
//!
//! Two experiment drivers live here:
//!
//! - [`monte_carlo_table1`] fills a 2x2 grid over (model specification) x
//!   (missingness mechanism), asking per cell whether the financed-only
//!   estimator is asymptotically unbiased for the full-population optimum
//!   and whether the two estimators share their asymptotic covariance.
//! - [`acceptance_sweep`] reproduces a graduated-strictness experiment:
//!   mask training labels at each acceptance rate, fit every configured
//!   method, and report test Gini with bootstrap bands (plus parameter
//!   distances to the oracle fit in simulation mode).

use ndarray::Array1;
use rand::Rng;
use rayon::prelude::*;

use crate::data::{
    check_disjoint_ids, generate_synthetic, Dataset, FeatureDistribution, GeneratorSpec,
    GroundTruth, MechanismTag, SpecTag, TruthModel,
};
use crate::error::{Error, Result};
use crate::generative::EmOptions;
use crate::logistic::FitOptions;
use crate::mechanisms::{sweep_mechanism, MechanismTemplate};
use crate::methods::{
    augmentation, financed_only, generative_method, ideal_reweighting, oracle_full, parceling,
    AugmentationConfig, MethodTag, ParcelingConfig, Scorer,
};
use crate::seed::{derive_seed, rng_from};
use crate::util::quantile_sorted;

// ---------------------------------------------------------------------------
// Gini / AUC
// ---------------------------------------------------------------------------

/// Gini index `2 AUC - 1`, with AUC computed from the rank statistic and
/// ties counted one half (the Mann-Whitney convention). O(n log n).
pub fn gini(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let n = scores.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    if let Some(bad) = labels.iter().find(|y| **y > 1) {
        return Err(Error::InvalidLabel(bad.to_string()));
    }
    let n_pos = labels.iter().filter(|y| **y == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassLabels);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Mid-ranks over tie groups, 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let auc =
        (rank_sum_pos - n_pos as f64 * (n_pos as f64 + 1.0) / 2.0) / (n_pos as f64 * n_neg as f64);
    Ok(2.0 * auc - 1.0)
}

/// Point estimate with a bootstrap 95% percentile interval. The interval is
/// widened to include the point estimate when heavy ties push a percentile
/// past it.
#[derive(Debug, Clone, Copy)]
pub struct BootstrapInterval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

const MIN_RESAMPLES: usize = 200;

fn resample_indices(rng: &mut impl Rng, n: usize, labels: &[u8]) -> Result<Vec<usize>> {
    // Redraw until both classes appear; bounded so pathological inputs
    // fail loudly instead of spinning.
    for _ in 0..200 {
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let pos = idx.iter().filter(|&&i| labels[i] == 1).count();
        if pos > 0 && pos < n {
            return Ok(idx);
        }
    }
    Err(Error::SingleClassLabels)
}

/// Row bootstrap of the Gini index.
pub fn bootstrap_gini(
    scores: &[f64],
    labels: &[u8],
    resamples: usize,
    seed: u64,
) -> Result<BootstrapInterval> {
    if resamples < MIN_RESAMPLES {
        return Err(Error::TooFewResamples { min: MIN_RESAMPLES, got: resamples });
    }
    let estimate = gini(scores, labels)?;
    let n = scores.len();
    let mut rng = rng_from(seed, "bootstrap-gini", 0);
    let mut replicates = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let idx = resample_indices(&mut rng, n, labels)?;
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        replicates.push(gini(&s, &y)?);
    }
    replicates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = quantile_sorted(&replicates, 0.025).min(estimate);
    let hi = quantile_sorted(&replicates, 0.975).max(estimate);
    Ok(BootstrapInterval { estimate, lo, hi })
}

/// Paired bootstrap comparison of two score vectors on the same test rows.
#[derive(Debug, Clone, Copy)]
pub struct GiniDiff {
    /// `gini(a) - gini(b)` on the full sample.
    pub diff: f64,
    pub lo: f64,
    pub hi: f64,
    /// True when the 95% interval excludes zero.
    pub significant: bool,
}

pub fn bootstrap_gini_diff(
    scores_a: &[f64],
    scores_b: &[f64],
    labels: &[u8],
    resamples: usize,
    seed: u64,
) -> Result<GiniDiff> {
    if resamples < MIN_RESAMPLES {
        return Err(Error::TooFewResamples { min: MIN_RESAMPLES, got: resamples });
    }
    if scores_a.len() != scores_b.len() {
        return Err(Error::DimensionMismatch { expected: scores_a.len(), got: scores_b.len() });
    }
    let diff = gini(scores_a, labels)? - gini(scores_b, labels)?;
    let n = labels.len();
    let mut rng = rng_from(seed, "bootstrap-gini-diff", 0);
    let mut replicates = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let idx = resample_indices(&mut rng, n, labels)?;
        let sa: Vec<f64> = idx.iter().map(|&i| scores_a[i]).collect();
        let sb: Vec<f64> = idx.iter().map(|&i| scores_b[i]).collect();
        let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        replicates.push(gini(&sa, &y)? - gini(&sb, &y)?);
    }
    replicates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = quantile_sorted(&replicates, 0.025).min(diff);
    let hi = quantile_sorted(&replicates, 0.975).max(diff);
    Ok(GiniDiff { diff, lo, hi, significant: lo > 0.0 || hi < 0.0 })
}

// ---------------------------------------------------------------------------
// Parameter error
// ---------------------------------------------------------------------------

/// Distances between a fitted coefficient vector and a reference, with the
/// signed per-coefficient bias kept (deliberately not symmetric in its
/// arguments).
#[derive(Debug, Clone)]
pub struct ParameterError {
    pub l2: f64,
    pub linf: f64,
    /// `theta - reference`, coefficient by coefficient.
    pub bias: Vec<f64>,
}

pub fn parameter_error(theta: &Array1<f64>, reference: &Array1<f64>) -> Result<ParameterError> {
    if theta.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), got: theta.len() });
    }
    let bias: Vec<f64> = theta.iter().zip(reference.iter()).map(|(t, r)| t - r).collect();
    Ok(ParameterError {
        l2: bias.iter().map(|b| b * b).sum::<f64>().sqrt(),
        linf: bias.iter().fold(0.0f64, |m, b| m.max(b.abs())),
        bias,
    })
}

// ---------------------------------------------------------------------------
// Monte Carlo verdict table
// ---------------------------------------------------------------------------

/// Configuration for the 2x2 (specification x mechanism) Monte Carlo table.
#[derive(Debug, Clone)]
pub struct Table1Config {
    /// Records generated per replication.
    pub n: usize,
    /// Replications per cell (at least 10).
    pub replications: usize,
    /// Well-specified arm; must be a plain logistic truth so the reference
    /// coefficients are exact.
    pub well_truth: TruthModel,
    /// Misspecified arm; its reference is a large-sample pseudo-true fit.
    pub mis_truth: TruthModel,
    pub features: FeatureDistribution,
    /// MAR mechanism (stochastic family, so propensities stay positive).
    pub mar: MechanismTemplate,
    /// MNAR mechanism.
    pub mnar: MechanismTemplate,
    /// Sample size of the unselected reference fit for the misspecified arm.
    pub pseudo_true_n: usize,
    pub master_seed: u64,
    pub fit: FitOptions,
}

/// One cell's verdict: bias of the financed-only estimator against the
/// reference, and the ratio of normalized Monte Carlo covariance traces.
#[derive(Debug, Clone)]
pub struct Table1Cell {
    pub spec: SpecTag,
    pub mechanism: MechanismTag,
    pub theta_ref: Vec<f64>,
    /// Mean financed-only estimate minus the reference, per coefficient.
    pub bias: Vec<f64>,
    /// Monte Carlo standard error of each bias estimate.
    pub bias_se: Vec<f64>,
    pub max_abs_bias: f64,
    /// Largest |bias / se| across coefficients.
    pub max_abs_z: f64,
    /// True when every coefficient's bias sits within 3 standard errors of 0.
    pub bias_equal: bool,
    /// Trace of Cov(sqrt(n_financed) * theta_f) across replications.
    pub trace_financed: f64,
    /// Trace of Cov(sqrt(n_total) * theta_full) across replications.
    pub trace_full: f64,
    /// trace_financed / trace_full.
    pub trace_ratio: f64,
    /// True when the trace ratio lies in [0.9, 1.1].
    pub variance_equal: bool,
    pub replications: usize,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct Table1Verdict {
    /// Cells in fixed order: (well, MAR), (well, MNAR), (mis, MAR), (mis, MNAR).
    pub cells: Vec<Table1Cell>,
}

fn cell_name(spec: SpecTag, mech: MechanismTag) -> String {
    let s = match spec {
        SpecTag::WellSpecified => "well_specified",
        SpecTag::Misspecified => "misspecified",
    };
    let m = match mech {
        MechanismTag::Mcar => "mcar",
        MechanismTag::Mar => "mar",
        MechanismTag::Mnar => "mnar",
    };
    format!("{s}_{m}")
}

impl Table1Verdict {
    pub fn cell(&self, spec: SpecTag, mech: MechanismTag) -> Option<&Table1Cell> {
        self.cells.iter().find(|c| c.spec == spec && c.mechanism == mech)
    }

    /// Render as `cell,bias_equal,variance_ratio,details` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,bias_equal,variance_ratio,details\n");
        for c in &self.cells {
            let details = format!(
                "max_abs_bias={};max_abs_z={};variance_equal={};trace_financed={};trace_full={};replications={};n={}",
                c.max_abs_bias, c.max_abs_z, c.variance_equal, c.trace_financed, c.trace_full,
                c.replications, c.n
            );
            out.push_str(&format!(
                "{},{},{},{}\n",
                cell_name(c.spec, c.mechanism),
                c.bias_equal,
                c.trace_ratio,
                details
            ));
        }
        out
    }
}

const MIN_REPLICATIONS: usize = 10;

/// Fit the unselected large-sample reference for a truth model: the
/// population-level optimum the full-information estimator converges to.
fn pseudo_true_fit(
    truth: &TruthModel,
    features: &FeatureDistribution,
    n: usize,
    seed: u64,
    fit: &FitOptions,
) -> Result<Array1<f64>> {
    let spec = GeneratorSpec {
        n_total: n,
        d: truth.dim(),
        truth: truth.clone(),
        features: features.clone(),
        seed,
    };
    let (data, truth) = generate_synthetic(&spec)?;
    let scorer = oracle_full(&data, &truth, fit)
        .map_err(|e| e.in_context("pseudo-true reference fit"))?;
    Ok(scorer.logistic_theta().expect("oracle scorer is logistic").clone())
}

/// Run the Monte Carlo over all four cells.
pub fn monte_carlo_table1(config: &Table1Config) -> Result<Table1Verdict> {
    if config.replications < MIN_REPLICATIONS {
        return Err(Error::InsufficientReplications {
            min: MIN_REPLICATIONS,
            got: config.replications,
        });
    }
    if config.mar.to_kind()?.label() != "mar_stochastic" {
        return Err(Error::Config("the MAR cell requires the mar_stochastic mechanism".into()));
    }
    if config.mnar.to_kind()?.label() != "mnar" {
        return Err(Error::Config("the MNAR cell requires the mnar mechanism".into()));
    }
    if !matches!(config.well_truth, TruthModel::Logistic { .. }) {
        return Err(Error::Config(
            "the well-specified arm must be a plain logistic truth".into(),
        ));
    }
    if config.well_truth.spec_tag() != SpecTag::WellSpecified {
        return Err(Error::Config("well_truth is not well-specified".into()));
    }
    if config.mis_truth.spec_tag() != SpecTag::Misspecified {
        return Err(Error::Config("mis_truth is not misspecified".into()));
    }

    // One cached large-sample reference per scenario: exact coefficients in
    // the well-specified arm, an unselected pseudo-true fit otherwise.
    let theta_ref_well = match &config.well_truth {
        TruthModel::Logistic { theta } => Array1::from_vec(theta.clone()),
        _ => unreachable!("validated above"),
    };
    let theta_ref_mis = pseudo_true_fit(
        &config.mis_truth,
        &config.features,
        config.pseudo_true_n,
        derive_seed(config.master_seed, "table1-pseudo-true", 0),
        &config.fit,
    )?;

    let cells = [
        (SpecTag::WellSpecified, MechanismTag::Mar),
        (SpecTag::WellSpecified, MechanismTag::Mnar),
        (SpecTag::Misspecified, MechanismTag::Mar),
        (SpecTag::Misspecified, MechanismTag::Mnar),
    ];

    let mut verdict = Vec::with_capacity(4);
    for (spec_tag, mech_tag) in cells {
        let truth = match spec_tag {
            SpecTag::WellSpecified => &config.well_truth,
            SpecTag::Misspecified => &config.mis_truth,
        };
        let theta_ref = match spec_tag {
            SpecTag::WellSpecified => &theta_ref_well,
            SpecTag::Misspecified => &theta_ref_mis,
        };
        let template = match mech_tag {
            MechanismTag::Mar => &config.mar,
            MechanismTag::Mnar => &config.mnar,
            MechanismTag::Mcar => unreachable!(),
        };
        let name = cell_name(spec_tag, mech_tag);

        let runs: Vec<Result<(Vec<f64>, usize, Vec<f64>)>> = (0..config.replications)
            .into_par_iter()
            .map(|r| {
                let gen_spec = GeneratorSpec {
                    n_total: config.n,
                    d: truth.dim(),
                    truth: truth.clone(),
                    features: config.features.clone(),
                    seed: derive_seed(config.master_seed, &format!("table1-data-{name}"), r as u64),
                };
                let (data, mut gt) = generate_synthetic(&gen_spec)?;
                gt.mechanism_tag = Some(mech_tag);
                let mech = template
                    .to_spec(derive_seed(config.master_seed, &format!("table1-mech-{name}"), r as u64))?;
                let (masked, _) = crate::mechanisms::apply_mechanism(&data, &mech)?;

                let financed = financed_only(&masked, &config.fit)
                    .map_err(|e| e.in_context(format!("cell {name}, replication {r}, financed fit")))?;
                let oracle = oracle_full(&masked, &gt, &config.fit)
                    .map_err(|e| e.in_context(format!("cell {name}, replication {r}, oracle fit")))?;
                Ok((
                    financed.logistic_theta().unwrap().to_vec(),
                    masked.n_financed(),
                    oracle.logistic_theta().unwrap().to_vec(),
                ))
            })
            .collect();

        let mut thetas_f = Vec::with_capacity(config.replications);
        let mut n_financed = Vec::with_capacity(config.replications);
        let mut thetas_full = Vec::with_capacity(config.replications);
        for run in runs {
            let (tf, nf, tfull) = run?;
            thetas_f.push(tf);
            n_financed.push(nf);
            thetas_full.push(tfull);
        }

        let p = theta_ref.len();
        let big_r = config.replications as f64;
        let mean_f: Vec<f64> = (0..p)
            .map(|j| thetas_f.iter().map(|t| t[j]).sum::<f64>() / big_r)
            .collect();
        let mean_full: Vec<f64> = (0..p)
            .map(|j| thetas_full.iter().map(|t| t[j]).sum::<f64>() / big_r)
            .collect();

        let bias: Vec<f64> = (0..p).map(|j| mean_f[j] - theta_ref[j]).collect();
        let bias_se: Vec<f64> = (0..p)
            .map(|j| {
                let var = thetas_f
                    .iter()
                    .map(|t| (t[j] - mean_f[j]) * (t[j] - mean_f[j]))
                    .sum::<f64>()
                    / (big_r - 1.0);
                (var / big_r).sqrt()
            })
            .collect();
        let max_abs_bias = bias.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        let max_abs_z = bias
            .iter()
            .zip(&bias_se)
            .map(|(b, se)| if *se > 0.0 { (b / se).abs() } else { f64::INFINITY })
            .fold(0.0f64, f64::max);
        let bias_equal = max_abs_z <= 3.0;

        // Normalized Monte Carlo covariance traces: each replication's
        // deviation from the Monte Carlo mean is scaled by the square root
        // of its own effective sample size, mirroring the root-n rates the
        // two estimators converge at.
        let trace_financed: f64 = (0..p)
            .map(|j| {
                thetas_f
                    .iter()
                    .zip(&n_financed)
                    .map(|(t, nf)| {
                        let dev = (*nf as f64).sqrt() * (t[j] - mean_f[j]);
                        dev * dev
                    })
                    .sum::<f64>()
                    / (big_r - 1.0)
            })
            .sum();
        let trace_full: f64 = (0..p)
            .map(|j| {
                thetas_full
                    .iter()
                    .map(|t| {
                        let dev = (config.n as f64).sqrt() * (t[j] - mean_full[j]);
                        dev * dev
                    })
                    .sum::<f64>()
                    / (big_r - 1.0)
            })
            .sum();
        let trace_ratio = trace_financed / trace_full;
        let variance_equal = (0.9..=1.1).contains(&trace_ratio);

        verdict.push(Table1Cell {
            spec: spec_tag,
            mechanism: mech_tag,
            theta_ref: theta_ref.to_vec(),
            bias,
            bias_se,
            max_abs_bias,
            max_abs_z,
            bias_equal,
            trace_financed,
            trace_full,
            trace_ratio,
            variance_equal,
            replications: config.replications,
            n: config.n,
        });
    }
    Ok(Table1Verdict { cells: verdict })
}

// ---------------------------------------------------------------------------
// Acceptance-rate sweep
// ---------------------------------------------------------------------------

/// Per-method knobs for the sweep.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    FinancedOnly,
    /// Simulation only: fit on the true labels of every record.
    OracleFull,
    /// Simulation only: weight financed records by true inverse propensity.
    IdealReweighting,
    Augmentation {
        #[serde(default = "default_k_bands")]
        k_bands: usize,
        #[serde(default = "default_weight_cap")]
        weight_cap: f64,
    },
    Parceling {
        #[serde(default = "default_k_bands")]
        k_bands: usize,
        #[serde(default = "default_inflation")]
        inflation: f64,
    },
    Generative {
        #[serde(default)]
        equal_covariance: bool,
    },
}

fn default_k_bands() -> usize {
    10
}
fn default_weight_cap() -> f64 {
    100.0
}
fn default_inflation() -> f64 {
    1.25
}

impl MethodConfig {
    pub fn tag(&self) -> MethodTag {
        match self {
            MethodConfig::FinancedOnly => MethodTag::FinancedOnly,
            MethodConfig::OracleFull => MethodTag::OracleFull,
            MethodConfig::IdealReweighting => MethodTag::IdealReweighting,
            MethodConfig::Augmentation { .. } => MethodTag::Augmentation,
            MethodConfig::Parceling { .. } => MethodTag::Parceling,
            MethodConfig::Generative { .. } => MethodTag::Generative,
        }
    }

    fn needs_ground_truth(&self) -> bool {
        matches!(self, MethodConfig::OracleFull | MethodConfig::IdealReweighting)
    }
}

/// Where the sweep's data comes from.
#[derive(Debug, Clone)]
pub enum SweepInput {
    /// Generate `n_train + n_test` records per replication and split.
    Synthetic {
        n_train: usize,
        n_test: usize,
        truth: TruthModel,
        features: FeatureDistribution,
    },
    /// Caller-provided fully labeled train and test sets (real-data mode:
    /// both are necessarily financed holdouts).
    Provided { train: Dataset, test: Dataset },
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub input: SweepInput,
    pub mechanism: MechanismTemplate,
    /// Strictly decreasing acceptance rates in (0, 1].
    pub rates: Vec<f64>,
    pub methods: Vec<MethodConfig>,
    pub bootstrap_resamples: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub fit: FitOptions,
    /// Collect per-run audit trails (augmentation band weights, parceling
    /// drawn labels) into the result.
    pub keep_audits: bool,
}

/// One (method, rate) cell of the sweep, averaged over replications.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub method: MethodTag,
    pub rate: f64,
    pub gini: f64,
    pub lo: f64,
    pub hi: f64,
    /// L2 distance of the fitted coefficients to the oracle fit; only for
    /// logistic methods in simulation mode.
    pub param_l2: Option<f64>,
    pub replications: usize,
    /// Per-replication mechanism seeds, for provenance.
    pub seeds: Vec<u64>,
}

/// Audit trail of one method run at one (rate, replication) point.
#[derive(Debug, Clone)]
pub enum MethodAudit {
    Augmentation(crate::methods::AugmentationAudit),
    Parceling(crate::methods::ParcelingAudit),
}

#[derive(Debug, Clone)]
pub struct AuditEntry {
    pub method: MethodTag,
    pub rate: f64,
    pub replication: usize,
    pub audit: MethodAudit,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Rows sorted by method name, then rate descending.
    pub rows: Vec<SweepRow>,
    /// Present in real-data mode: the evaluation caveat to surface.
    pub caveat: Option<String>,
    /// Populated when the config asks for audits; sorted like the rows.
    pub audits: Vec<AuditEntry>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,rate,gini,lo,hi,param_l2\n");
        for row in &self.rows {
            let param = row.param_l2.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.method, row.rate, row.gini, row.lo, row.hi, param
            ));
        }
        out
    }

    /// Per-band augmentation weights, one row per (rate, replication, band).
    pub fn augmentation_audit_csv(&self) -> String {
        let mut out = String::from(
            "rate,replication,band,financed,rejected,acceptance,weight,capped,dropped\n",
        );
        for entry in &self.audits {
            if let MethodAudit::Augmentation(audit) = &entry.audit {
                for (b, band) in audit.bands.bands.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{}\n",
                        entry.rate,
                        entry.replication,
                        b,
                        band.financed,
                        band.rejected,
                        band.acceptance,
                        audit.band_weights[b].map(|w| w.to_string()).unwrap_or_default(),
                        audit.capped_bands.contains(&b),
                        audit.dropped_bands.contains(&b),
                    ));
                }
            }
        }
        out
    }

    /// Parceling draws, one row per (rate, replication, rejected record).
    pub fn parceling_audit_csv(&self) -> String {
        let mut out = String::from("rate,replication,record_id,drawn_label\n");
        for entry in &self.audits {
            if let MethodAudit::Parceling(audit) = &entry.audit {
                for (id, label) in &audit.drawn_labels {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        entry.rate, entry.replication, id, label
                    ));
                }
            }
        }
        out
    }

    pub fn row(&self, method: MethodTag, rate: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && (r.rate - rate).abs() < 1e-12)
    }
}

struct ReplicationData {
    test_features: ndarray::Array2<f64>,
    test_labels: Vec<u8>,
    points: Vec<crate::mechanisms::SweepPoint>,
    oracle: Option<Scorer>,
    mech_seed: u64,
}

fn prepare_replication(config: &SweepConfig, r: usize) -> Result<ReplicationData> {
    let (train, truth, test) = match &config.input {
        SweepInput::Synthetic { n_train, n_test, truth, features } => {
            let spec = GeneratorSpec {
                n_total: n_train + n_test,
                d: truth.dim(),
                truth: truth.clone(),
                features: features.clone(),
                seed: derive_seed(config.master_seed, "sweep-data", r as u64),
            };
            let (full, gt) = generate_synthetic(&spec)?;
            let (train, test) = full.split(*n_train)?;
            let train_truth = GroundTruth {
                truth: gt.truth.clone(),
                full_labels: gt.full_labels[..*n_train].to_vec(),
                mechanism_tag: None,
                spec_tag: gt.spec_tag,
            };
            (train, Some(train_truth), test)
        }
        SweepInput::Provided { train, test } => (train.clone(), None, test.clone()),
    };
    check_disjoint_ids(&train, &test)?;
    let test_labels = test.dense_labels().map_err(|_| {
        Error::InvalidArgument("test set must carry a label on every record".into())
    })?;

    let mech_seed = derive_seed(config.master_seed, "sweep-mechanism", r as u64);
    let spec = config.mechanism.to_spec(mech_seed)?;
    let points = sweep_mechanism(&train, &spec, &config.rates)?;

    let oracle = match &truth {
        Some(gt) => Some(
            oracle_full(&train, gt, &config.fit)
                .map_err(|e| e.in_context(format!("oracle fit, replication {r}")))?,
        ),
        None => None,
    };

    Ok(ReplicationData {
        test_features: test.features().clone(),
        test_labels,
        points,
        oracle,
        mech_seed,
    })
}

fn fit_method(
    method: &MethodConfig,
    rep: &ReplicationData,
    point: &crate::mechanisms::SweepPoint,
    rate_idx: usize,
    r: usize,
    config: &SweepConfig,
) -> Result<(Scorer, Option<MethodAudit>)> {
    match method {
        MethodConfig::FinancedOnly => Ok((financed_only(&point.dataset, &config.fit)?, None)),
        MethodConfig::OracleFull => {
            Ok((rep.oracle.clone().expect("validated: simulation only"), None))
        }
        MethodConfig::IdealReweighting => Ok((
            ideal_reweighting(&point.dataset, &point.propensities, &config.fit)?,
            None,
        )),
        MethodConfig::Augmentation { k_bands, weight_cap } => {
            let out = augmentation(
                &point.dataset,
                &AugmentationConfig {
                    k_bands: *k_bands,
                    weight_cap: *weight_cap,
                    fit: config.fit.clone(),
                },
            )?;
            Ok((out.scorer, Some(MethodAudit::Augmentation(out.audit))))
        }
        MethodConfig::Parceling { k_bands, inflation } => {
            let out = parceling(
                &point.dataset,
                &ParcelingConfig {
                    k_bands: *k_bands,
                    inflation: *inflation,
                    seed: derive_seed(
                        config.master_seed,
                        "sweep-parceling",
                        ((r as u64) << 20) | rate_idx as u64,
                    ),
                    fit: config.fit.clone(),
                },
            )?;
            Ok((out.scorer, Some(MethodAudit::Parceling(out.audit))))
        }
        MethodConfig::Generative { equal_covariance } => Ok((
            generative_method(
                &point.dataset,
                &EmOptions { equal_covariance: *equal_covariance, ..Default::default() },
            )?,
            None,
        )),
    }
}

/// Run the graduated-selection experiment and collect per (method, rate)
/// test Gini with bootstrap bands.
pub fn acceptance_sweep(config: &SweepConfig) -> Result<SweepResult> {
    if config.methods.is_empty() {
        return Err(Error::Config("no methods configured".into()));
    }
    if config.replications == 0 {
        return Err(Error::InsufficientReplications { min: 1, got: 0 });
    }
    let caveat = match &config.input {
        SweepInput::Provided { .. } => {
            if config.methods.iter().any(|m| m.needs_ground_truth()) {
                return Err(Error::Config(
                    "oracle_full and ideal_reweighting need synthetic ground truth".into(),
                ));
            }
            Some(
                "test set is a financed-only holdout: rankings are measured on the \
                 accepted population, not the full through-the-door population"
                    .to_string(),
            )
        }
        SweepInput::Synthetic { .. } => None,
    };

    let reps: Vec<ReplicationData> = (0..config.replications)
        .into_par_iter()
        .map(|r| prepare_replication(config, r))
        .collect::<Result<_>>()?;

    // (method, rate, replication) tasks, evaluated in parallel and folded
    // back in deterministic order.
    let mut tasks = Vec::new();
    for m_idx in 0..config.methods.len() {
        for rate_idx in 0..config.rates.len() {
            for r in 0..config.replications {
                tasks.push((m_idx, rate_idx, r));
            }
        }
    }
    type TaskOutcome = (usize, usize, usize, BootstrapInterval, Option<f64>, Option<MethodAudit>);
    let outcomes: Vec<Result<TaskOutcome>> = tasks
        .par_iter()
        .map(|&(m_idx, rate_idx, r)| {
            let method = &config.methods[m_idx];
            let rep = &reps[r];
            let point = &rep.points[rate_idx];
            let context = format!(
                "method {}, rate {}, replication {r}",
                method.tag(),
                point.rate
            );
            let (scorer, audit) =
                fit_method(method, rep, point, rate_idx, r, config).map_err(|e| e.in_context(context.clone()))?;
            let scores = scorer
                .score_all(&rep.test_features)
                .map_err(|e| e.in_context(context.clone()))?;
            let interval = bootstrap_gini(
                &scores,
                &rep.test_labels,
                config.bootstrap_resamples,
                derive_seed(
                    config.master_seed,
                    &format!("sweep-bootstrap-{}", method.tag()),
                    ((r as u64) << 20) | rate_idx as u64,
                ),
            )
            .map_err(|e| e.in_context(context))?;
            let param_l2 = match (&rep.oracle, scorer.logistic_theta()) {
                (Some(oracle), Some(theta)) => Some(
                    parameter_error(theta, oracle.logistic_theta().expect("oracle is logistic"))?
                        .l2,
                ),
                _ => None,
            };
            let audit = if config.keep_audits { audit } else { None };
            Ok((m_idx, rate_idx, r, interval, param_l2, audit))
        })
        .collect();

    // Fold replications into (method, rate) cells.
    let n_rates = config.rates.len();
    let n_methods = config.methods.len();
    let mut acc: Vec<Vec<(Vec<BootstrapInterval>, Vec<Option<f64>>)>> =
        vec![vec![(Vec::new(), Vec::new()); n_rates]; n_methods];
    let mut audits = Vec::new();
    for outcome in outcomes {
        let (m_idx, rate_idx, r, interval, param, audit) = outcome?;
        acc[m_idx][rate_idx].0.push(interval);
        acc[m_idx][rate_idx].1.push(param);
        if let Some(audit) = audit {
            audits.push(AuditEntry {
                method: config.methods[m_idx].tag(),
                rate: config.rates[rate_idx],
                replication: r,
                audit,
            });
        }
    }
    audits.sort_by(|a, b| {
        a.method
            .as_str()
            .cmp(b.method.as_str())
            .then(b.rate.partial_cmp(&a.rate).unwrap())
            .then(a.replication.cmp(&b.replication))
    });

    let seeds: Vec<u64> = reps.iter().map(|rep| rep.mech_seed).collect();
    let mut rows = Vec::new();
    for (m_idx, method) in config.methods.iter().enumerate() {
        for (rate_idx, &rate) in config.rates.iter().enumerate() {
            let (intervals, params) = &acc[m_idx][rate_idx];
            let k = intervals.len() as f64;
            let param_l2 = if params.iter().all(|p| p.is_some()) {
                Some(params.iter().map(|p| p.unwrap()).sum::<f64>() / k)
            } else {
                None
            };
            rows.push(SweepRow {
                method: method.tag(),
                rate,
                gini: intervals.iter().map(|i| i.estimate).sum::<f64>() / k,
                lo: intervals.iter().map(|i| i.lo).sum::<f64>() / k,
                hi: intervals.iter().map(|i| i.hi).sum::<f64>() / k,
                param_l2,
                replications: intervals.len(),
                seeds: seeds.clone(),
            });
        }
    }
    rows.sort_by(|a, b| {
        a.method
            .as_str()
            .cmp(b.method.as_str())
            .then(b.rate.partial_cmp(&a.rate).unwrap())
    });
    Ok(SweepResult { rows, caveat, audits })
}
