//! Financing-selection mechanisms.
//!
//! Given a fully labeled dataset, a mechanism decides which records are
//! financed and hides the labels of the rest. Three families are provided,
//! following the standard missing-data taxonomy for the financing
//! probability `p(f | x, y)`:
//!
//! - MCAR: financing is an independent coin flip.
//! - MAR (cutoff or stochastic): financing depends on x only, through an
//!   incumbent-style score. The cutoff form finances exactly the safest
//!   records and makes `p(f|x)` hit zero, deliberately breaking
//!   inverse-propensity reweighting on part of the population; the
//!   stochastic form keeps `p(f|x) >= floor > 0`.
//! - MNAR: the stochastic propensity is additionally multiplied by a
//!   penalty `delta` whenever the (unobservable) outcome is a default, then
//!   rescaled so the mean acceptance still hits the target rate.
//!
//! The true propensities are returned alongside the masked dataset so
//! oracle reweighting experiments can use them. Everything is a pure,
//! seeded function of its inputs; sweeps share one uniform draw per record
//! across rates, so deterministic cutoffs produce nested financed sets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::logistic::{fit_weighted, FitOptions, LogisticModel};
use crate::seed::rng_from;

/// Mechanism family plus its family-specific knobs.
#[derive(Debug, Clone)]
pub enum MechanismKind {
    Mcar,
    /// Finance exactly the `rate * n` safest records by score.
    MarCutoff,
    /// `p(f|x) = floor + (1 - floor) * (1 - q)^gamma` where q is the score
    /// quantile and gamma is calibrated so the mean propensity equals the
    /// target rate.
    MarStochastic { floor: f64 },
    /// Stochastic MAR propensity times `default_penalty` when y = 1,
    /// rescaled to hit the target rate.
    Mnar { default_penalty: f64, floor: f64 },
}

impl MechanismKind {
    pub fn label(&self) -> &'static str {
        match self {
            MechanismKind::Mcar => "mcar",
            MechanismKind::MarCutoff => "mar_cutoff",
            MechanismKind::MarStochastic { .. } => "mar_stochastic",
            MechanismKind::Mnar { .. } => "mnar",
        }
    }

    fn needs_scorer(&self) -> bool {
        !matches!(self, MechanismKind::Mcar)
    }
}

/// Where the selection score comes from. The incumbent scorecard is
/// mimicked by fitting on a small fully-labeled pilot subsample; using the
/// model under assessment itself would be circular.
#[derive(Debug, Clone)]
pub enum SelectionScorer {
    /// Fit a logistic scorecard on a seeded pilot fraction of the records.
    Pilot { fraction: f64 },
    /// Use an externally fitted model.
    Model(LogisticModel),
}

impl Default for SelectionScorer {
    fn default() -> Self {
        SelectionScorer::Pilot { fraction: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    /// Mean acceptance probability the mechanism is calibrated to, in (0, 1].
    pub target_acceptance_rate: f64,
    pub scorer: SelectionScorer,
    pub seed: u64,
}

/// Mechanism family name, as it appears in run configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismFamily {
    Mcar,
    MarCutoff,
    MarStochastic,
    Mnar,
}

const DEFAULT_FLOOR: f64 = 0.05;

fn default_pilot_fraction() -> f64 {
    0.1
}

/// Serializable mechanism recipe: family, target rate, and the knobs the
/// family needs. Seeds are supplied separately by the harness.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismTemplate {
    pub kind: MechanismFamily,
    pub target_rate: f64,
    /// Propensity floor for the stochastic mechanisms (default 0.05).
    #[serde(default)]
    pub floor: Option<f64>,
    /// Financing-probability multiplier for defaulted records (MNAR only).
    #[serde(default)]
    pub default_penalty: Option<f64>,
    /// Fraction of records used to fit the incumbent pilot scorecard.
    #[serde(default = "default_pilot_fraction")]
    pub pilot_fraction: f64,
}

impl MechanismTemplate {
    /// Resolve the template into a concrete kind, rejecting knobs that do
    /// not belong to the declared family.
    pub fn to_kind(&self) -> Result<MechanismKind> {
        let reject_floor = || -> Result<()> {
            if self.floor.is_some() {
                return Err(Error::InvalidArgument(format!(
                    "'floor' does not apply to the {:?} mechanism",
                    self.kind
                )));
            }
            Ok(())
        };
        let reject_penalty = || -> Result<()> {
            if self.default_penalty.is_some() {
                return Err(Error::InvalidArgument(format!(
                    "'default_penalty' does not apply to the {:?} mechanism",
                    self.kind
                )));
            }
            Ok(())
        };
        match self.kind {
            MechanismFamily::Mcar => {
                reject_floor()?;
                reject_penalty()?;
                Ok(MechanismKind::Mcar)
            }
            MechanismFamily::MarCutoff => {
                reject_floor()?;
                reject_penalty()?;
                Ok(MechanismKind::MarCutoff)
            }
            MechanismFamily::MarStochastic => {
                reject_penalty()?;
                Ok(MechanismKind::MarStochastic { floor: self.floor.unwrap_or(DEFAULT_FLOOR) })
            }
            MechanismFamily::Mnar => {
                let delta = self.default_penalty.ok_or_else(|| {
                    Error::InvalidArgument("mnar requires 'default_penalty'".into())
                })?;
                Ok(MechanismKind::Mnar {
                    default_penalty: delta,
                    floor: self.floor.unwrap_or(DEFAULT_FLOOR),
                })
            }
        }
    }

    pub fn to_spec(&self, seed: u64) -> Result<MechanismSpec> {
        let spec = MechanismSpec {
            kind: self.to_kind()?,
            target_acceptance_rate: self.target_rate,
            scorer: SelectionScorer::Pilot { fraction: self.pilot_fraction },
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl MechanismSpec {
    fn validate(&self) -> Result<()> {
        let rate = self.target_acceptance_rate;
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "target acceptance rate {rate} must lie in (0, 1]"
            )));
        }
        match &self.kind {
            MechanismKind::Mcar | MechanismKind::MarCutoff => {}
            MechanismKind::MarStochastic { floor } => {
                if !(0.0..1.0).contains(floor) {
                    return Err(Error::InvalidArgument("floor must lie in [0, 1)".into()));
                }
            }
            MechanismKind::Mnar { default_penalty, floor } => {
                if !(*default_penalty > 0.0 && *default_penalty <= 1.0) {
                    return Err(Error::InvalidArgument(
                        "default_penalty must lie in (0, 1]".into(),
                    ));
                }
                if !(0.0..1.0).contains(floor) {
                    return Err(Error::InvalidArgument("floor must lie in [0, 1)".into()));
                }
            }
        }
        if let SelectionScorer::Pilot { fraction } = &self.scorer {
            if self.kind.needs_scorer() && !(*fraction > 0.0 && *fraction <= 1.0) {
                return Err(Error::ScorerUnavailable(format!(
                    "pilot fraction {fraction} must lie in (0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Precomputed per-dataset state shared by all rates of a sweep: selection
/// scores, their mid-rank quantiles, and one uniform draw per record.
struct SelectionState {
    /// Mid-rank quantile of each record's score, in (0, 1); lower = safer.
    score_quantile: Vec<f64>,
    /// Records ordered safest first (score ascending, id as tiebreak).
    safest_order: Vec<usize>,
    uniforms: Vec<f64>,
}

impl SelectionState {
    fn build(dataset: &Dataset, spec: &MechanismSpec) -> Result<Self> {
        let n = dataset.n();
        let mut rng = rng_from(spec.seed, "mechanism-uniforms", 0);
        let uniforms: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();

        let (score_quantile, safest_order) = if spec.kind.needs_scorer() {
            let scores = selection_scores(dataset, &spec.scorer, spec.seed)?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                scores[a]
                    .partial_cmp(&scores[b])
                    .unwrap()
                    .then(dataset.ids()[a].cmp(&dataset.ids()[b]))
            });
            let mut quantile = vec![0.0; n];
            for (rank, &i) in order.iter().enumerate() {
                quantile[i] = (rank as f64 + 0.5) / n as f64;
            }
            (quantile, order)
        } else {
            (vec![0.0; n], Vec::new())
        };

        Ok(Self { score_quantile, safest_order, uniforms })
    }
}

/// Score every record with the configured selection scorer. Pilot scorecards
/// are fit with a small ridge so the pilot fit never stalls on tiny samples.
fn selection_scores(
    dataset: &Dataset,
    scorer: &SelectionScorer,
    seed: u64,
) -> Result<Vec<f64>> {
    let model = match scorer {
        SelectionScorer::Model(model) => {
            if model.dim() != dataset.dim() {
                return Err(Error::ScorerUnavailable(format!(
                    "scorer expects {} features, dataset has {}",
                    model.dim(),
                    dataset.dim()
                )));
            }
            model.clone()
        }
        SelectionScorer::Pilot { fraction } => {
            if dataset.labels().iter().any(|l| l.is_none()) {
                return Err(Error::ScorerUnavailable(
                    "pilot scorer needs a fully labeled dataset".into(),
                ));
            }
            let n = dataset.n();
            let pilot_size = ((n as f64 * fraction).round() as usize).clamp(2, n);
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = rng_from(seed, "mechanism-pilot", 0);
            // Partial Fisher-Yates: the first pilot_size entries are a
            // uniform sample without replacement.
            for i in 0..pilot_size {
                let j = rng.gen_range(i..n);
                order.swap(i, j);
            }
            let pilot = dataset.subset(&order[..pilot_size])?;
            let (x, y, _) = pilot.financed_design();
            if y.iter().all(|v| *v == 0) || y.iter().all(|v| *v == 1) {
                return Err(Error::ScorerUnavailable(
                    "pilot sample contains a single class".into(),
                ));
            }
            let model = fit_weighted(
                &x,
                &y,
                &vec![1.0; y.len()],
                &FitOptions { ridge: 1e-6, ..Default::default() },
            )?;
            if !model.converged {
                return Err(Error::ScorerUnavailable(format!(
                    "pilot scorecard did not converge: {}",
                    model.note.unwrap_or_default()
                )));
            }
            model
        }
    };
    Ok((0..dataset.n())
        .map(|i| crate::logistic::sigmoid(model.linear_predictor(dataset.row(i))))
        .collect())
}

/// Mean of `floor + (1 - floor) * (1 - q)^gamma` over the quantiles.
fn stochastic_mean(quantiles: &[f64], floor: f64, gamma: f64) -> f64 {
    quantiles
        .iter()
        .map(|q| floor + (1.0 - floor) * (1.0 - q).powf(gamma))
        .sum::<f64>()
        / quantiles.len() as f64
}

/// Calibrate gamma so the mean stochastic propensity equals the rate.
fn calibrate_gamma(quantiles: &[f64], floor: f64, rate: f64) -> Result<f64> {
    if rate >= 1.0 {
        return Ok(0.0);
    }
    if rate <= floor {
        return Err(Error::RateUnachievable {
            rate,
            reason: format!("rate must exceed the propensity floor {floor}"),
        });
    }
    let mut hi = 1.0;
    while stochastic_mean(quantiles, floor, hi) > rate {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::RateUnachievable {
                rate,
                reason: "propensity curve cannot reach the target".into(),
            });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if stochastic_mean(quantiles, floor, mid) > rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Per-record financing propensities for a given rate. For MNAR these are
/// the full `p(f | x, y)` at the realized labels.
fn propensities_at_rate(
    state: &SelectionState,
    labels: &[u8],
    kind: &MechanismKind,
    rate: f64,
) -> Result<Vec<f64>> {
    let n = state.uniforms.len();
    if rate >= 1.0 {
        // No selection at all: every kind degenerates to certain financing.
        return Ok(vec![1.0; n]);
    }
    match kind {
        MechanismKind::Mcar => Ok(vec![rate; n]),
        MechanismKind::MarCutoff => {
            let k = (rate * n as f64).round() as usize;
            if k == 0 {
                return Err(Error::RateUnachievable {
                    rate,
                    reason: "cutoff would finance zero records".into(),
                });
            }
            let k = k.min(n);
            let mut p = vec![0.0; n];
            for &i in state.safest_order.iter().take(k) {
                p[i] = 1.0;
            }
            Ok(p)
        }
        MechanismKind::MarStochastic { floor } => {
            let gamma = calibrate_gamma(&state.score_quantile, *floor, rate)?;
            Ok(state
                .score_quantile
                .iter()
                .map(|q| floor + (1.0 - floor) * (1.0 - q).powf(gamma))
                .collect())
        }
        MechanismKind::Mnar { default_penalty, floor } => {
            let gamma = calibrate_gamma(&state.score_quantile, *floor, rate)?;
            let base: Vec<f64> = state
                .score_quantile
                .iter()
                .map(|q| floor + (1.0 - floor) * (1.0 - q).powf(gamma))
                .collect();
            let raw: Vec<f64> = base
                .iter()
                .zip(labels)
                .map(|(b, y)| if *y == 1 { b * default_penalty } else { *b })
                .collect();
            // Scalar search: mean(min(1, s * raw)) = rate.
            let mean_at = |s: f64| raw.iter().map(|p| (s * p).min(1.0)).sum::<f64>() / n as f64;
            let mut hi = 1.0;
            while mean_at(hi) < rate {
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(Error::RateUnachievable {
                        rate,
                        reason: "rescaling cannot reach the target".into(),
                    });
                }
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mean_at(mid) < rate {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s = 0.5 * (lo + hi);
            if (mean_at(s) - rate).abs() > 1e-3 {
                return Err(Error::RateUnachievable {
                    rate,
                    reason: format!("rescaling search stalled at mean {}", mean_at(s)),
                });
            }
            Ok(raw.iter().map(|p| (s * p).min(1.0)).collect())
        }
    }
}

fn mask_from_propensities(
    dataset: &Dataset,
    state: &SelectionState,
    propensities: &[f64],
) -> Result<Dataset> {
    let financed: Vec<bool> = state
        .uniforms
        .iter()
        .zip(propensities)
        .map(|(u, p)| u < p)
        .collect();
    dataset.with_mask(financed)
}

/// Apply a selection mechanism to a fully labeled dataset. Returns the
/// masked dataset and the true financing propensities, deterministically in
/// the spec seed.
pub fn apply_mechanism(dataset: &Dataset, spec: &MechanismSpec) -> Result<(Dataset, Vec<f64>)> {
    spec.validate()?;
    let labels = dataset.dense_labels().map_err(|_| {
        Error::InvalidArgument("mechanisms require a fully labeled dataset".into())
    })?;
    let state = SelectionState::build(dataset, spec)?;
    let propensities =
        propensities_at_rate(&state, &labels, &spec.kind, spec.target_acceptance_rate)?;
    let masked = mask_from_propensities(dataset, &state, &propensities)?;
    Ok((masked, propensities))
}

/// One rate point of a graduated-strictness sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub rate: f64,
    pub dataset: Dataset,
    pub propensities: Vec<f64>,
}

/// Apply the same mechanism at a strictly decreasing list of acceptance
/// rates. All rates share the base seed stream (one uniform per record, one
/// pilot scorecard), so cutoff selections are nested: the financed set at a
/// stricter rate is a subset of the financed set at a looser one.
pub fn sweep_mechanism(
    dataset: &Dataset,
    base: &MechanismSpec,
    rates: &[f64],
) -> Result<Vec<SweepPoint>> {
    base.validate()?;
    if rates.is_empty() {
        return Err(Error::NonMonotoneRates);
    }
    for w in rates.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::NonMonotoneRates);
        }
    }
    if rates.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(Error::NonMonotoneRates);
    }
    let labels = dataset.dense_labels().map_err(|_| {
        Error::InvalidArgument("mechanisms require a fully labeled dataset".into())
    })?;
    let state = SelectionState::build(dataset, base)?;
    rates
        .iter()
        .map(|&rate| {
            let propensities = propensities_at_rate(&state, &labels, &base.kind, rate)?;
            let masked = mask_from_propensities(dataset, &state, &propensities)?;
            Ok(SweepPoint { rate, dataset: masked, propensities })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, FeatureDistribution, GeneratorSpec, TruthModel};

    fn synthetic(n: usize, seed: u64) -> (Dataset, crate::data::GroundTruth) {
        let spec = GeneratorSpec {
            n_total: n,
            d: 2,
            truth: TruthModel::Logistic { theta: vec![-1.0, 1.2, -0.8] },
            features: FeatureDistribution::StandardNormal,
            seed,
        };
        generate_synthetic(&spec).unwrap()
    }

    fn spec(kind: MechanismKind, rate: f64, seed: u64) -> MechanismSpec {
        MechanismSpec {
            kind,
            target_acceptance_rate: rate,
            scorer: SelectionScorer::Pilot { fraction: 0.1 },
            seed,
        }
    }

    #[test]
    fn full_rate_finances_everyone() {
        let (data, _) = synthetic(500, 3);
        for kind in [
            MechanismKind::Mcar,
            MechanismKind::MarCutoff,
            MechanismKind::MarStochastic { floor: 0.05 },
            MechanismKind::Mnar { default_penalty: 0.5, floor: 0.05 },
        ] {
            let (masked, prop) = apply_mechanism(&data, &spec(kind, 1.0, 4)).unwrap();
            assert!(masked.all_financed());
            assert!(prop.iter().all(|p| *p == 1.0));
        }
    }

    #[test]
    fn cutoff_at_half_finances_exactly_half_below_median() {
        let (data, _) = synthetic(1000, 9);
        let (masked, prop) = apply_mechanism(&data, &spec(MechanismKind::MarCutoff, 0.5, 9)).unwrap();
        assert_eq!(masked.n_financed(), 500);
        assert!(prop.iter().all(|p| *p == 0.0 || *p == 1.0));
        // Re-derive the scores to check the financed half is the safer half.
        let scores = selection_scores(
            &data,
            &SelectionScorer::Pilot { fraction: 0.1 },
            9,
        )
        .unwrap();
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = 0.5 * (sorted[499] + sorted[500]);
        for i in 0..1000 {
            if masked.financed()[i] {
                assert!(scores[i] <= median);
            }
        }
    }

    #[test]
    fn propensity_mean_matches_realized_rate() {
        let (data, _) = synthetic(20_000, 17);
        for kind in [
            MechanismKind::Mcar,
            MechanismKind::MarStochastic { floor: 0.05 },
            MechanismKind::Mnar { default_penalty: 0.4, floor: 0.05 },
        ] {
            let (masked, prop) = apply_mechanism(&data, &spec(kind.clone(), 0.4, 23)).unwrap();
            let mean_p = prop.iter().sum::<f64>() / prop.len() as f64;
            assert!((mean_p - 0.4).abs() < 2e-3, "{}: mean {mean_p}", kind.label());
            let realized = masked.n_financed() as f64 / masked.n() as f64;
            let sigma = (prop.iter().map(|p| p * (1.0 - p)).sum::<f64>()).sqrt() / prop.len() as f64;
            assert!(
                (realized - mean_p).abs() < 3.0 * sigma + 1e-12,
                "{}: realized {realized} vs mean {mean_p}",
                kind.label()
            );
        }
    }

    #[test]
    fn mnar_inflates_reject_default_rate_to_match_oracle() {
        let (data, _) = synthetic(100_000, 31);
        let (masked, prop) =
            apply_mechanism(&data, &spec(MechanismKind::Mnar { default_penalty: 0.5, floor: 0.05 }, 0.5, 31))
                .unwrap();
        let labels = data.dense_labels().unwrap();

        // Analytic oracle from the true propensities: conditional default
        // rate among rejects is E[y (1 - p)] / E[1 - p]; f-draw noise is the
        // only randomness left.
        let mut num = 0.0;
        let mut den = 0.0;
        for (y, p) in labels.iter().zip(&prop) {
            num += f64::from(*y) * (1.0 - p);
            den += 1.0 - p;
        }
        let oracle_reject_rate = num / den;

        let mut rejects = 0usize;
        let mut reject_defaults = 0usize;
        let mut financed = 0usize;
        let mut financed_defaults = 0usize;
        for i in 0..masked.n() {
            if masked.financed()[i] {
                financed += 1;
                financed_defaults += usize::from(labels[i]);
            } else {
                rejects += 1;
                reject_defaults += usize::from(labels[i]);
            }
        }
        let reject_rate = reject_defaults as f64 / rejects as f64;
        let financed_rate = financed_defaults as f64 / financed as f64;
        assert!(
            reject_rate > financed_rate,
            "reject rate {reject_rate} should exceed financed rate {financed_rate}"
        );
        let sigma = (oracle_reject_rate * (1.0 - oracle_reject_rate) / rejects as f64).sqrt();
        assert!(
            (reject_rate - oracle_reject_rate).abs() < 3.0 * sigma,
            "empirical {reject_rate} vs oracle {oracle_reject_rate}"
        );
    }

    #[test]
    fn sweep_single_full_rate() {
        let (data, _) = synthetic(200, 5);
        let points = sweep_mechanism(&data, &spec(MechanismKind::Mcar, 1.0, 5), &[1.0]).unwrap();
        assert_eq!(points.len(), 1);
        assert!(points[0].dataset.all_financed());
    }

    #[test]
    fn cutoff_sweeps_are_nested() {
        let (data, _) = synthetic(2_000, 41);
        let points =
            sweep_mechanism(&data, &spec(MechanismKind::MarCutoff, 0.8, 41), &[0.8, 0.4]).unwrap();
        let loose = &points[0].dataset;
        let strict = &points[1].dataset;
        assert_eq!(loose.n_financed(), 1600);
        assert_eq!(strict.n_financed(), 800);
        for i in 0..2000 {
            if strict.financed()[i] {
                assert!(loose.financed()[i], "strict financed set must nest");
            }
        }
    }

    #[test]
    fn mcar_sweep_counts_within_binomial_bands() {
        let (data, _) = synthetic(10_000, 55);
        let rates = [0.9, 0.7, 0.5, 0.3];
        let points = sweep_mechanism(&data, &spec(MechanismKind::Mcar, 0.9, 55), &rates).unwrap();
        for point in &points {
            let expected = 10_000.0 * point.rate;
            let sigma = (10_000.0 * point.rate * (1.0 - point.rate)).sqrt();
            let got = point.dataset.n_financed() as f64;
            assert!((got - expected).abs() < 3.0 * sigma, "rate {}: {got}", point.rate);
        }
    }

    #[test]
    fn non_monotone_rates_are_rejected() {
        let (data, _) = synthetic(200, 5);
        let s = spec(MechanismKind::Mcar, 0.9, 5);
        assert!(matches!(
            sweep_mechanism(&data, &s, &[0.5, 0.8]),
            Err(Error::NonMonotoneRates)
        ));
        assert!(matches!(
            sweep_mechanism(&data, &s, &[0.8, 0.8]),
            Err(Error::NonMonotoneRates)
        ));
    }

    #[test]
    fn rate_below_floor_is_unachievable() {
        let (data, _) = synthetic(500, 5);
        let result = apply_mechanism(
            &data,
            &spec(MechanismKind::MarStochastic { floor: 0.1 }, 0.05, 5),
        );
        assert!(matches!(result, Err(Error::RateUnachievable { .. })));
    }

    /// Stratified independence check: within score-quantile bins, financing
    /// must be independent of the outcome under MAR and dependent under
    /// MNAR. Statistic: sum of per-bin 2x2 chi-square contributions.
    fn stratified_chi_square(
        data: &Dataset,
        masked: &Dataset,
        bins: usize,
        seed: u64,
    ) -> f64 {
        let scores = selection_scores(data, &SelectionScorer::Pilot { fraction: 0.1 }, seed).unwrap();
        let labels = data.dense_labels().unwrap();
        let mut order: Vec<usize> = (0..data.n()).collect();
        order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
        let mut stat = 0.0;
        for b in 0..bins {
            let start = b * data.n() / bins;
            let end = (b + 1) * data.n() / bins;
            let mut counts = [[0.0f64; 2]; 2]; // [financed][label]
            for &i in &order[start..end] {
                let f = usize::from(masked.financed()[i]);
                let y = usize::from(labels[i]);
                counts[f][y] += 1.0;
            }
            let total: f64 = counts.iter().flatten().sum();
            let row: Vec<f64> = (0..2).map(|f| counts[f][0] + counts[f][1]).collect();
            let colsum: Vec<f64> = (0..2).map(|y| counts[0][y] + counts[1][y]).collect();
            for f in 0..2 {
                for y in 0..2 {
                    let expected = row[f] * colsum[y] / total;
                    if expected > 0.0 {
                        let diff = counts[f][y] - expected;
                        stat += diff * diff / expected;
                    }
                }
            }
        }
        stat
    }

    #[test]
    fn mar_passes_and_mnar_fails_stratified_independence() {
        let (data, _) = synthetic(50_000, 77);
        let bins = 10;
        // Chi-square(10) critical value at alpha = 0.01.
        let critical = 23.2093;

        let (mar, _) = apply_mechanism(
            &data,
            &spec(MechanismKind::MarStochastic { floor: 0.05 }, 0.5, 77),
        )
        .unwrap();
        let mar_stat = stratified_chi_square(&data, &mar, bins, 77);
        assert!(mar_stat < critical, "MAR stat {mar_stat} should not reject");

        let (mnar, _) = apply_mechanism(
            &data,
            &spec(MechanismKind::Mnar { default_penalty: 0.5, floor: 0.05 }, 0.5, 77),
        )
        .unwrap();
        let mnar_stat = stratified_chi_square(&data, &mnar, bins, 77);
        assert!(mnar_stat > critical, "MNAR stat {mnar_stat} should reject");
    }

    #[test]
    fn mechanisms_are_deterministic() {
        let (data, _) = synthetic(1_000, 13);
        let s = spec(MechanismKind::Mnar { default_penalty: 0.3, floor: 0.05 }, 0.6, 99);
        let (a, pa) = apply_mechanism(&data, &s).unwrap();
        let (b, pb) = apply_mechanism(&data, &s).unwrap();
        assert_eq!(a.financed(), b.financed());
        assert_eq!(pa, pb);
    }
}
