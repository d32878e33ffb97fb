//! The reject-inference strategies under test, plus the baselines they are
//! compared against. Every strategy returns a [`Scorer`] so the evaluation
//! harness can treat them uniformly.
//!
//! - `financed_only`: the incumbent practice, fit on financed records only.
//! - `oracle_full`: fit on every record with the true labels (simulation
//!   only; the unobtainable ideal).
//! - `ideal_reweighting`: financed records weighted by their true inverse
//!   financing propensity; refuses populations where the propensity is zero
//!   anywhere, since those regions can never be reweighted into existence.
//! - `augmentation`: score-band inverse-acceptance reweighting.
//! - `parceling`: score-band label imputation for rejects at an inflated
//!   default rate, then an unweighted refit.
//! - `generative_method`: the semi-supervised EM classifier using rejected
//!   applicants through the feature marginal.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::data::{Dataset, GroundTruth};
use crate::error::{Error, Result};
use crate::generative::{fit_em, posterior, EmOptions, GenerativeModel};
use crate::logistic::{fit_weighted, sigmoid, FitOptions, LogisticModel};
use crate::seed::rng_from;
use crate::util::quantile_sorted;

/// Scores stay strictly inside (0, 1); posterior underflow is clamped here.
const SCORE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodTag {
    FinancedOnly,
    OracleFull,
    IdealReweighting,
    Augmentation,
    Parceling,
    Generative,
}

impl MethodTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodTag::FinancedOnly => "financed_only",
            MethodTag::OracleFull => "oracle_full",
            MethodTag::IdealReweighting => "ideal_reweighting",
            MethodTag::Augmentation => "augmentation",
            MethodTag::Parceling => "parceling",
            MethodTag::Generative => "generative",
        }
    }
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub enum ScorerModel {
    Logistic(LogisticModel),
    Generative(GenerativeModel),
}

/// A fitted scoring rule `x -> P(y = 1 | x)` tagged with the method that
/// produced it.
#[derive(Debug, Clone)]
pub struct Scorer {
    pub method: MethodTag,
    pub model: ScorerModel,
}

impl Scorer {
    pub fn score(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        let raw = match &self.model {
            ScorerModel::Logistic(m) => {
                if x.len() != m.dim() {
                    return Err(Error::DimensionMismatch { expected: m.dim(), got: x.len() });
                }
                sigmoid(m.linear_predictor(x))
            }
            ScorerModel::Generative(m) => posterior(m, x)?,
        };
        Ok(raw.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP))
    }

    pub fn score_all(&self, features: &Array2<f64>) -> Result<Vec<f64>> {
        (0..features.nrows()).map(|i| self.score(features.row(i))).collect()
    }

    /// Coefficients when the underlying model is logistic.
    pub fn logistic_theta(&self) -> Option<&Array1<f64>> {
        match &self.model {
            ScorerModel::Logistic(m) => Some(&m.theta),
            ScorerModel::Generative(_) => None,
        }
    }
}

/// Require convergence before a fit may be used as a method's scorer; a
/// silently bad fit would contaminate every downstream comparison.
fn converged_scorer(method: MethodTag, model: LogisticModel) -> Result<Scorer> {
    if !model.converged {
        return Err(Error::NotConverged(
            model.note.unwrap_or_else(|| "fit did not converge".into()),
        ));
    }
    Ok(Scorer { method, model: ScorerModel::Logistic(model) })
}

/// One score band: a quantile group of applicants with similar predicted
/// default probability under the financed-only fit.
#[derive(Debug, Clone)]
pub struct ScoreBand {
    pub financed: usize,
    pub rejected: usize,
    /// Default rate among the band's financed records; `None` when the band
    /// holds no financed records.
    pub financed_default_rate: Option<f64>,
    /// Financed share of the band's applicants.
    pub acceptance: f64,
    pub zero_financed: bool,
}

/// Ordered partition of the score space into k quantile bands.
#[derive(Debug, Clone)]
pub struct ScoreBands {
    pub k: usize,
    /// k - 1 strictly increasing cut points in (0, 1).
    pub edges: Vec<f64>,
    pub bands: Vec<ScoreBand>,
}

impl ScoreBands {
    /// Band of a score: the number of edges strictly below it, so bands are
    /// `(-inf, e1], (e1, e2], ..., (e_{k-1}, inf)` intersected with (0, 1).
    pub fn band_index(&self, score: f64) -> usize {
        self.edges.iter().filter(|e| score > **e).count()
    }

    pub fn total_in_band(&self, b: usize) -> usize {
        self.bands[b].financed + self.bands[b].rejected
    }
}

/// Build k quantile bands from the pooled scores of all applicants
/// (financed and rejected) and collect per-band statistics.
pub fn make_score_bands(
    scores: &[f64],
    financed: &[bool],
    labels: &[Option<u8>],
    k: usize,
) -> Result<ScoreBands> {
    if k < 2 {
        return Err(Error::InvalidArgument("band count must be >= 2".into()));
    }
    let n = scores.len();
    if financed.len() != n || labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: financed.len().min(labels.len()) });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = 1usize;
    for w in sorted.windows(2) {
        if w[1] > w[0] {
            distinct += 1;
        }
    }
    if distinct < k {
        return Err(Error::TooManyBands { k, distinct });
    }
    let edges: Vec<f64> = (1..k)
        .map(|b| quantile_sorted(&sorted, b as f64 / k as f64))
        .collect();
    if edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::TooManyBands { k, distinct });
    }

    let mut fin = vec![0usize; k];
    let mut rej = vec![0usize; k];
    let mut defaults = vec![0usize; k];
    let probe = ScoreBands { k, edges: edges.clone(), bands: Vec::new() };
    for i in 0..n {
        let b = probe.band_index(scores[i]);
        if financed[i] {
            fin[b] += 1;
            defaults[b] += usize::from(labels[i].ok_or_else(|| {
                Error::InvalidArgument(format!("financed record {i} is missing its label"))
            })?);
        } else {
            rej[b] += 1;
        }
    }
    let bands = (0..k)
        .map(|b| {
            let total = fin[b] + rej[b];
            ScoreBand {
                financed: fin[b],
                rejected: rej[b],
                financed_default_rate: (fin[b] > 0).then(|| defaults[b] as f64 / fin[b] as f64),
                acceptance: if total > 0 { fin[b] as f64 / total as f64 } else { 0.0 },
                zero_financed: fin[b] == 0,
            }
        })
        .collect();
    Ok(ScoreBands { k, edges, bands })
}

/// Fit on the financed records only, unit weights: the incumbent scorecard.
pub fn financed_only(train: &Dataset, options: &FitOptions) -> Result<Scorer> {
    let (x, y, _) = train.financed_design();
    if x.nrows() == 0 {
        return Err(Error::NoFinancedRecords);
    }
    let model = fit_weighted(&x, &y, &vec![1.0; y.len()], options)?;
    converged_scorer(MethodTag::FinancedOnly, model)
}

/// Fit on every record with its true label: the unobtainable ideal
/// estimator (simulation only).
pub fn oracle_full(train: &Dataset, truth: &GroundTruth, options: &FitOptions) -> Result<Scorer> {
    if truth.full_labels.len() != train.n() {
        return Err(Error::DimensionMismatch { expected: train.n(), got: truth.full_labels.len() });
    }
    let model = fit_weighted(
        train.features(),
        &truth.full_labels,
        &vec![1.0; train.n()],
        options,
    )?;
    converged_scorer(MethodTag::OracleFull, model)
}

/// Weight each financed record by its true inverse financing propensity.
/// Refuses populations containing zero-propensity records: a region the
/// selection never explores cannot be reweighted into the fit.
pub fn ideal_reweighting(
    train: &Dataset,
    propensities: &[f64],
    options: &FitOptions,
) -> Result<Scorer> {
    if propensities.len() != train.n() {
        return Err(Error::DimensionMismatch { expected: train.n(), got: propensities.len() });
    }
    let zeros = propensities.iter().filter(|p| **p <= 0.0).count();
    if zeros > 0 {
        return Err(Error::ZeroPropensity { count: zeros });
    }
    let (x, y, idx) = train.financed_design();
    if x.nrows() == 0 {
        return Err(Error::NoFinancedRecords);
    }
    let weights: Vec<f64> = idx.iter().map(|&i| 1.0 / propensities[i]).collect();
    let model = fit_weighted(&x, &y, &weights, options)?;
    converged_scorer(MethodTag::IdealReweighting, model)
}

#[derive(Debug, Clone)]
pub struct AugmentationConfig {
    pub k_bands: usize,
    /// Per-record weight cap; binding caps are reported in the audit.
    pub weight_cap: f64,
    pub fit: FitOptions,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self { k_bands: 10, weight_cap: 100.0, fit: FitOptions::default() }
    }
}

/// What augmentation actually did, for audit output.
#[derive(Debug, Clone)]
pub struct AugmentationAudit {
    pub bands: ScoreBands,
    /// Weight applied to financed records of each band; `None` for bands
    /// with zero acceptance (nothing to reweight, rejects unrepresentable).
    pub band_weights: Vec<Option<f64>>,
    pub capped_bands: Vec<usize>,
    /// Zero-acceptance bands, skipped with a warning.
    pub dropped_bands: Vec<usize>,
    /// Sum of applied weights; equals the applicant count except for the
    /// mass lost to capped and dropped bands.
    pub weight_total: f64,
    pub applicant_total: usize,
}

#[derive(Debug, Clone)]
pub struct AugmentationOutcome {
    pub scorer: Scorer,
    pub audit: AugmentationAudit,
}

/// Augmentation: fit the financed-only scorecard, band all applicants by
/// its score, weight each financed record by the inverse acceptance share
/// of its band, and refit.
pub fn augmentation(train: &Dataset, config: &AugmentationConfig) -> Result<AugmentationOutcome> {
    let base = financed_only(train, &config.fit)?;
    let scores = base.score_all(train.features())?;
    let bands = make_score_bands(&scores, train.financed(), train.labels(), config.k_bands)?;

    let populated = bands.bands.iter().filter(|b| !b.zero_financed).count();
    if populated < 2 {
        return Err(Error::TooFewPopulatedBands);
    }

    let mut band_weights: Vec<Option<f64>> = Vec::with_capacity(bands.k);
    let mut capped_bands = Vec::new();
    let mut dropped_bands = Vec::new();
    for (b, band) in bands.bands.iter().enumerate() {
        if band.acceptance <= 0.0 {
            band_weights.push(None);
            dropped_bands.push(b);
            continue;
        }
        let raw = 1.0 / band.acceptance;
        if raw > config.weight_cap {
            capped_bands.push(b);
            band_weights.push(Some(config.weight_cap));
        } else {
            band_weights.push(Some(raw));
        }
    }

    let (x, y, idx) = train.financed_design();
    let weights: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let b = bands.band_index(scores[i]);
            band_weights[b].expect("financed record implies a populated band")
        })
        .collect();
    let weight_total = weights.iter().sum();
    let model = fit_weighted(&x, &y, &weights, &config.fit)?;
    let scorer = converged_scorer(MethodTag::Augmentation, model)?;
    Ok(AugmentationOutcome {
        scorer,
        audit: AugmentationAudit {
            bands,
            band_weights,
            capped_bands,
            dropped_bands,
            weight_total,
            applicant_total: train.n(),
        },
    })
}

#[derive(Debug, Clone)]
pub struct ParcelingConfig {
    pub k_bands: usize,
    /// Multiplier (>= 1) applied to each band's financed default rate when
    /// assigning reject default rates. A judgment knob, not an estimate.
    pub inflation: f64,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for ParcelingConfig {
    fn default() -> Self {
        Self { k_bands: 10, inflation: 1.25, seed: 0, fit: FitOptions::default() }
    }
}

/// What parceling actually drew, for audit output.
#[derive(Debug, Clone)]
pub struct ParcelingAudit {
    pub bands: ScoreBands,
    /// Reject default rate assigned to each band.
    pub assigned_rates: Vec<f64>,
    /// (record id, drawn label) for every reject, in row order.
    pub drawn_labels: Vec<(u64, u8)>,
    /// Bands that fell back to the global financed default rate because
    /// they contained no financed records.
    pub fallback_bands: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ParcelingOutcome {
    pub scorer: Scorer,
    pub audit: ParcelingAudit,
}

/// Parceling: band all applicants by the financed-only score, assign each
/// band's rejects an inflated default rate, draw their labels, and refit on
/// the completed sample.
pub fn parceling(train: &Dataset, config: &ParcelingConfig) -> Result<ParcelingOutcome> {
    if !(config.inflation.is_finite() && config.inflation >= 1.0) {
        return Err(Error::InvalidArgument("inflation must be >= 1".into()));
    }
    let base = financed_only(train, &config.fit)?;
    let scores = base.score_all(train.features())?;
    let bands = make_score_bands(&scores, train.financed(), train.labels(), config.k_bands)?;

    let (x_f, y_f, _) = train.financed_design();
    let global_rate = y_f.iter().map(|y| f64::from(*y)).sum::<f64>() / x_f.nrows() as f64;

    let mut fallback_bands = Vec::new();
    let assigned_rates: Vec<f64> = bands
        .bands
        .iter()
        .enumerate()
        .map(|(b, band)| match band.financed_default_rate {
            Some(rate) => (config.inflation * rate).min(1.0),
            None => {
                fallback_bands.push(b);
                (config.inflation * global_rate).min(1.0)
            }
        })
        .collect();

    let (scorer, drawn_labels) =
        refit_with_drawn_labels(train, &scores, &bands, &assigned_rates, config.seed, &config.fit)?;
    Ok(ParcelingOutcome {
        scorer,
        audit: ParcelingAudit { bands, assigned_rates, drawn_labels, fallback_bands },
    })
}

/// Parceling with explicitly assigned per-band reject default rates,
/// bypassing the inflation rule. Useful for oracle-calibrated experiments.
pub fn parceling_with_rates(
    train: &Dataset,
    k_bands: usize,
    assigned_rates: &[f64],
    seed: u64,
    fit: &FitOptions,
) -> Result<ParcelingOutcome> {
    if assigned_rates.len() != k_bands {
        return Err(Error::DimensionMismatch { expected: k_bands, got: assigned_rates.len() });
    }
    if assigned_rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::InvalidArgument("assigned rates must lie in [0, 1]".into()));
    }
    let base = financed_only(train, fit)?;
    let scores = base.score_all(train.features())?;
    let bands = make_score_bands(&scores, train.financed(), train.labels(), k_bands)?;
    let (scorer, drawn_labels) =
        refit_with_drawn_labels(train, &scores, &bands, assigned_rates, seed, fit)?;
    Ok(ParcelingOutcome {
        scorer,
        audit: ParcelingAudit {
            bands,
            assigned_rates: assigned_rates.to_vec(),
            drawn_labels,
            fallback_bands: Vec::new(),
        },
    })
}

fn refit_with_drawn_labels(
    train: &Dataset,
    scores: &[f64],
    bands: &ScoreBands,
    assigned_rates: &[f64],
    seed: u64,
    fit: &FitOptions,
) -> Result<(Scorer, Vec<(u64, u8)>)> {
    let mut rng = rng_from(seed, "parceling-draws", 0);
    let mut labels = Vec::with_capacity(train.n());
    let mut drawn = Vec::new();
    for i in 0..train.n() {
        match train.labels()[i] {
            Some(y) => labels.push(y),
            None => {
                let b = bands.band_index(scores[i]);
                let u: f64 = rng.gen();
                let y = u8::from(u < assigned_rates[b]);
                drawn.push((train.ids()[i], y));
                labels.push(y);
            }
        }
    }
    let model = fit_weighted(train.features(), &labels, &vec![1.0; train.n()], fit)?;
    let scorer = converged_scorer(MethodTag::Parceling, model)?;
    Ok((scorer, drawn))
}

/// The semi-supervised generative classifier: labeled financed records plus
/// rejected records through the feature marginal, scored by Bayes' rule.
pub fn generative_method(train: &Dataset, options: &EmOptions) -> Result<Scorer> {
    let (x_f, y_f, _) = train.financed_design();
    if x_f.nrows() == 0 {
        return Err(Error::NoFinancedRecords);
    }
    let (x_nf, _) = train.rejected_design();
    let model = fit_em(&x_f, &y_f, &x_nf, options)?;
    Ok(Scorer { method: MethodTag::Generative, model: ScorerModel::Generative(model) })
}
