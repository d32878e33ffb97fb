//! Datasets, synthetic generators with known ground truth, CSV ingestion,
//! and quantile discretization.
//!
//! The central invariant is the financing mask: a record's default label is
//! observable if and only if the record was financed. [`Dataset`] enforces
//! this at construction and everything downstream relies on it.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::logistic::sigmoid;
use crate::seed::rng_from_seed;
use crate::util::quantile_sorted;

/// A credit-application dataset: covariates, a financing mask, and default
/// labels observed only on financed records (1 = defaulted, 0 = repaid).
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<Option<u8>>,
    financed: Vec<bool>,
    ids: Vec<u64>,
}

impl Dataset {
    /// Build a dataset, enforcing the masking invariant
    /// (`labels[i].is_some() == financed[i]`) and finiteness of features.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<Option<u8>>,
        financed: Vec<bool>,
        ids: Vec<u64>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidArgument("feature dimension must be >= 1".into()));
        }
        if labels.len() != n || financed.len() != n || ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len().min(financed.len()).min(ids.len()),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        for (i, (label, fin)) in labels.iter().zip(&financed).enumerate() {
            if label.is_some() != *fin {
                return Err(Error::InvalidArgument(format!(
                    "record {i}: label presence must match the financing flag"
                )));
            }
            if let Some(y) = label {
                if *y > 1 {
                    return Err(Error::InvalidLabel(y.to_string()));
                }
            }
        }
        Ok(Self { features, labels, financed, ids })
    }

    /// A fully-financed dataset where every label is present.
    pub fn fully_labeled(features: Array2<f64>, labels: Vec<u8>) -> Result<Self> {
        let n = features.nrows();
        let ids = (0..n as u64).collect();
        Dataset::new(
            features,
            labels.into_iter().map(Some).collect(),
            vec![true; n],
            ids,
        )
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[Option<u8>] {
        &self.labels
    }

    pub fn financed(&self) -> &[bool] {
        &self.financed
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn n_financed(&self) -> usize {
        self.financed.iter().filter(|f| **f).count()
    }

    pub fn all_financed(&self) -> bool {
        self.financed.iter().all(|f| *f)
    }

    /// Feature matrix and label vector of the financed records, plus their
    /// row indices in the original dataset.
    pub fn financed_design(&self) -> (Array2<f64>, Vec<u8>, Vec<usize>) {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| self.financed[i]).collect();
        let mut x = Array2::zeros((idx.len(), self.dim()));
        let mut y = Vec::with_capacity(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            x.row_mut(r).assign(&self.features.row(i));
            y.push(self.labels[i].expect("financed record carries a label"));
        }
        (x, y, idx)
    }

    /// Feature matrix of the non-financed records and their row indices.
    pub fn rejected_design(&self) -> (Array2<f64>, Vec<usize>) {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| !self.financed[i]).collect();
        let mut x = Array2::zeros((idx.len(), self.dim()));
        for (r, &i) in idx.iter().enumerate() {
            x.row_mut(r).assign(&self.features.row(i));
        }
        (x, idx)
    }

    /// Replace the financing mask, hiding labels on newly rejected records.
    /// Requires every record to currently carry a label.
    pub fn with_mask(&self, financed: Vec<bool>) -> Result<Dataset> {
        if financed.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: financed.len() });
        }
        if self.labels.iter().any(|l| l.is_none()) {
            return Err(Error::InvalidArgument(
                "cannot re-mask a dataset whose labels are already partially hidden".into(),
            ));
        }
        let labels = self
            .labels
            .iter()
            .zip(&financed)
            .map(|(l, f)| if *f { *l } else { None })
            .collect();
        Dataset::new(self.features.clone(), labels, financed, self.ids.clone())
    }

    /// Split into a head of `n_first` records and the tail. Ids carry over.
    pub fn split(&self, n_first: usize) -> Result<(Dataset, Dataset)> {
        if n_first == 0 || n_first >= self.n() {
            return Err(Error::InvalidArgument(format!(
                "split point {n_first} must lie strictly inside 1..{}",
                self.n()
            )));
        }
        let take = |range: std::ops::Range<usize>| -> Result<Dataset> {
            Dataset::new(
                self.features
                    .slice(ndarray::s![range.clone(), ..])
                    .to_owned(),
                self.labels[range.clone()].to_vec(),
                self.financed[range.clone()].to_vec(),
                self.ids[range].to_vec(),
            )
        };
        Ok((take(0..n_first)?, take(n_first..self.n())?))
    }

    /// Subset by row indices (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut x = Array2::zeros((indices.len(), self.dim()));
        let mut labels = Vec::with_capacity(indices.len());
        let mut financed = Vec::with_capacity(indices.len());
        let mut ids = Vec::with_capacity(indices.len());
        for (r, &i) in indices.iter().enumerate() {
            if i >= self.n() {
                return Err(Error::InvalidArgument(format!("row index {i} out of range")));
            }
            x.row_mut(r).assign(&self.features.row(i));
            labels.push(self.labels[i]);
            financed.push(self.financed[i]);
            ids.push(self.ids[i]);
        }
        Dataset::new(x, labels, financed, ids)
    }

    /// Labels as a dense vector; errors if any are hidden.
    pub fn dense_labels(&self) -> Result<Vec<u8>> {
        self.labels
            .iter()
            .map(|l| l.ok_or_else(|| Error::InvalidArgument("hidden label".into())))
            .collect()
    }
}

/// Whether the logistic family contains the true conditional `p(y|x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecTag {
    WellSpecified,
    Misspecified,
}

/// Coarse taxonomy of the financing-selection mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismTag {
    Mcar,
    Mar,
    Mnar,
}

/// The label-generating process behind a synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthModel {
    /// `y | x ~ Bernoulli(sigmoid(theta . [1, x]))`: the logistic family is
    /// attainable and `theta` is the population optimum.
    Logistic { theta: Vec<f64> },
    /// Logistic linear predictor plus `curvature * x1^2`: the smallest
    /// departure that puts `p(y|x)` outside the logistic family.
    LogisticQuadratic { theta: Vec<f64>, curvature: f64 },
    /// `y ~ Bernoulli(prior)`, `x | y ~ N(mean_y, cov_y)`. With equal
    /// covariances the induced `p(y|x)` is exactly logistic.
    ClassGaussians {
        prior: f64,
        mean0: Vec<f64>,
        mean1: Vec<f64>,
        cov0: Vec<Vec<f64>>,
        cov1: Vec<Vec<f64>>,
    },
}

impl TruthModel {
    /// Feature dimension implied by the truth parameters.
    pub fn dim(&self) -> usize {
        match self {
            TruthModel::Logistic { theta } | TruthModel::LogisticQuadratic { theta, .. } => {
                theta.len().saturating_sub(1)
            }
            TruthModel::ClassGaussians { mean0, .. } => mean0.len(),
        }
    }

    pub fn spec_tag(&self) -> SpecTag {
        match self {
            TruthModel::Logistic { .. } => SpecTag::WellSpecified,
            TruthModel::LogisticQuadratic { curvature, .. } => {
                if *curvature == 0.0 {
                    SpecTag::WellSpecified
                } else {
                    SpecTag::Misspecified
                }
            }
            TruthModel::ClassGaussians { cov0, cov1, .. } => {
                let equal = cov0
                    .iter()
                    .flatten()
                    .zip(cov1.iter().flatten())
                    .all(|(a, b)| (a - b).abs() <= 1e-12);
                if equal {
                    SpecTag::WellSpecified
                } else {
                    SpecTag::Misspecified
                }
            }
        }
    }

    /// True conditional default probability `P(y = 1 | x)`.
    pub fn default_probability(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self {
            TruthModel::Logistic { theta } => sigmoid(linear_predictor(theta, x)),
            TruthModel::LogisticQuadratic { theta, curvature } => {
                sigmoid(linear_predictor(theta, x) + curvature * x[0] * x[0])
            }
            TruthModel::ClassGaussians { prior, mean0, mean1, cov0, cov1 } => {
                let l1 = (*prior).ln() + gauss_logpdf(x, mean1, cov1);
                let l0 = (1.0 - *prior).ln() + gauss_logpdf(x, mean0, cov0);
                let m = l1.max(l0);
                let w1 = (l1 - m).exp();
                w1 / (w1 + (l0 - m).exp())
            }
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        match self {
            TruthModel::Logistic { theta } | TruthModel::LogisticQuadratic { theta, .. } => {
                if theta.len() != d + 1 {
                    return Err(Error::DimensionMismatch { expected: d + 1, got: theta.len() });
                }
                if theta.iter().any(|t| !t.is_finite()) {
                    return Err(Error::NonFinite("theta_true".into()));
                }
                if let TruthModel::LogisticQuadratic { curvature, .. } = self {
                    if !curvature.is_finite() {
                        return Err(Error::NonFinite("curvature".into()));
                    }
                }
                Ok(())
            }
            TruthModel::ClassGaussians { prior, mean0, mean1, cov0, cov1 } => {
                if !(0.0..=1.0).contains(prior) || *prior == 0.0 || *prior == 1.0 {
                    return Err(Error::InvalidArgument("class prior must lie in (0, 1)".into()));
                }
                for (name, m) in [("mean0", mean0), ("mean1", mean1)] {
                    if m.len() != d {
                        return Err(Error::DimensionMismatch { expected: d, got: m.len() });
                    }
                    if m.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite(name.into()));
                    }
                }
                for (name, c) in [("cov0", cov0), ("cov1", cov1)] {
                    if c.len() != d || c.iter().any(|row| row.len() != d) {
                        return Err(Error::DimensionMismatch { expected: d, got: c.len() });
                    }
                    if c.iter().flatten().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite(name.into()));
                    }
                    cholesky_rows(c).ok_or_else(|| {
                        Error::InvalidArgument(format!("{name} is not positive definite"))
                    })?;
                }
                Ok(())
            }
        }
    }
}

fn linear_predictor(theta: &[f64], x: ArrayView1<'_, f64>) -> f64 {
    theta[0] + theta[1..].iter().zip(x.iter()).map(|(t, v)| t * v).sum::<f64>()
}

fn gauss_logpdf(x: ArrayView1<'_, f64>, mean: &[f64], cov: &[Vec<f64>]) -> f64 {
    let d = mean.len();
    let chol = cholesky_rows(cov).expect("covariance validated at construction");
    // Solve L z = (x - mean), then logpdf = -d/2 ln(2pi) - sum(ln L_ii) - |z|^2 / 2.
    let mut z = vec![0.0; d];
    for i in 0..d {
        let mut s = x[i] - mean[i];
        for j in 0..i {
            s -= chol[i][j] * z[j];
        }
        z[i] = s / chol[i][i];
    }
    let logdet_half: f64 = (0..d).map(|i| chol[i][i].ln()).sum();
    let quad: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - logdet_half - 0.5 * quad
}

/// Lower-triangular Cholesky of a small dense matrix given as rows.
fn cholesky_rows(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let d = a.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Ground truth attached to a synthetic dataset.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub truth: TruthModel,
    /// True label of every record, including those later hidden by a
    /// selection mechanism.
    pub full_labels: Vec<u8>,
    /// Filled in by the experiment harness once a mechanism is applied.
    pub mechanism_tag: Option<MechanismTag>,
    pub spec_tag: SpecTag,
}

impl GroundTruth {
    /// The true coefficient vector when the truth is logistic.
    pub fn linear_theta(&self) -> Option<&[f64]> {
        match &self.truth {
            TruthModel::Logistic { theta } => Some(theta),
            _ => None,
        }
    }
}

/// Marginal feature distribution for the logistic truth arms (coordinates
/// drawn independently).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureDistribution {
    StandardNormal,
    Uniform { lo: f64, hi: f64 },
    /// Signed two-component lognormal mixture: with probability `weight`
    /// draw `LogNormal(mu1, sigma1)`, otherwise `-LogNormal(mu2, sigma2)`.
    /// Heavy-tailed and bimodal, far from any Gaussian.
    LognormalMixture {
        weight: f64,
        mu1: f64,
        sigma1: f64,
        mu2: f64,
        sigma2: f64,
    },
}

impl FeatureDistribution {
    fn validate(&self) -> Result<()> {
        match self {
            FeatureDistribution::StandardNormal => Ok(()),
            FeatureDistribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                    Err(Error::InvalidArgument("uniform bounds must satisfy lo < hi".into()))
                } else {
                    Ok(())
                }
            }
            FeatureDistribution::LognormalMixture { weight, sigma1, sigma2, .. } => {
                if !(0.0..=1.0).contains(weight) {
                    return Err(Error::InvalidArgument("mixture weight must be in [0, 1]".into()));
                }
                if *sigma1 <= 0.0 || *sigma2 <= 0.0 {
                    return Err(Error::InvalidArgument("lognormal sigmas must be positive".into()));
                }
                Ok(())
            }
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            FeatureDistribution::StandardNormal => StandardNormal.sample(rng),
            FeatureDistribution::Uniform { lo, hi } => Uniform::new(*lo, *hi).sample(rng),
            FeatureDistribution::LognormalMixture { weight, mu1, sigma1, mu2, sigma2 } => {
                let pick: f64 = rng.gen();
                if pick < *weight {
                    LogNormal::new(*mu1, *sigma1).unwrap().sample(rng)
                } else {
                    -LogNormal::new(*mu2, *sigma2).unwrap().sample(rng)
                }
            }
        }
    }
}

/// Recipe for a synthetic dataset. The seed fully determines the output.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_total: usize,
    pub d: usize,
    pub truth: TruthModel,
    pub features: FeatureDistribution,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument("d must be >= 1".into()));
        }
        if self.n_total < 2 * (self.d + 1) {
            return Err(Error::InvalidArgument(format!(
                "n_total must be at least 2(d+1) = {}",
                2 * (self.d + 1)
            )));
        }
        self.truth.validate(self.d)?;
        self.features.validate()
    }
}

/// Generate a fully-labeled, fully-financed synthetic dataset plus its
/// ground truth. Selection is applied later by the mechanisms module.
pub fn generate_synthetic(spec: &GeneratorSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let n = spec.n_total;
    let d = spec.d;
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);

    match &spec.truth {
        TruthModel::Logistic { .. } | TruthModel::LogisticQuadratic { .. } => {
            for i in 0..n {
                for j in 0..d {
                    features[[i, j]] = spec.features.sample(&mut rng);
                }
                let p = spec.truth.default_probability(features.row(i));
                let u: f64 = rng.gen();
                labels.push(u8::from(u < p));
            }
        }
        TruthModel::ClassGaussians { prior, mean0, mean1, cov0, cov1 } => {
            let l0 = cholesky_rows(cov0).expect("validated");
            let l1 = cholesky_rows(cov1).expect("validated");
            let mut z = vec![0.0; d];
            for i in 0..n {
                let u: f64 = rng.gen();
                let y = u8::from(u < *prior);
                let (mean, l) = if y == 1 { (mean1, &l1) } else { (mean0, &l0) };
                for zj in z.iter_mut() {
                    *zj = StandardNormal.sample(&mut rng);
                }
                for j in 0..d {
                    let mut v = mean[j];
                    for k in 0..=j {
                        v += l[j][k] * z[k];
                    }
                    features[[i, j]] = v;
                }
                labels.push(y);
            }
        }
    }

    let truth = GroundTruth {
        truth: spec.truth.clone(),
        full_labels: labels.clone(),
        mechanism_tag: None,
        spec_tag: spec.truth.spec_tag(),
    };
    Ok((Dataset::fully_labeled(features, labels)?, truth))
}

/// Column schema for CSV ingestion, loaded from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    /// Name of the binary default-label column.
    pub label: String,
    /// Name of the financing-flag column (0/1 or true/false).
    pub financed: String,
    /// Feature column names, in model order.
    pub features: Vec<String>,
    /// Optional record-id column; row index is used when absent.
    #[serde(default)]
    pub id: Option<String>,
    /// Keep labels found on non-financed rows as holdout truth instead of
    /// discarding them.
    #[serde(default)]
    pub keep_holdout_labels: bool,
}

impl CsvSchema {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::CsvSchema(e.to_string()))
    }
}

/// Result of CSV ingestion.
#[derive(Debug, Clone)]
pub struct CsvLoad {
    pub dataset: Dataset,
    /// Labels present on non-financed rows, aligned with the dataset, kept
    /// only when the schema asks for them. Never used for fitting.
    pub holdout_labels: Option<Vec<Option<u8>>>,
}

/// Load a dataset from a UTF-8, comma-separated, headered CSV file.
/// Labels on non-financed rows are ignored (the masking invariant wins);
/// with `keep_holdout_labels` they are returned separately.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<CsvLoad> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::CsvSchema(format!("missing column '{name}'")))
    };
    let label_col = col(&schema.label)?;
    let financed_col = col(&schema.financed)?;
    let id_col = schema.id.as_deref().map(col).transpose()?;
    let feature_cols: Vec<usize> =
        schema.features.iter().map(|f| col(f)).collect::<Result<_>>()?;
    if feature_cols.is_empty() {
        return Err(Error::CsvSchema("schema names no feature columns".into()));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<Option<u8>> = Vec::new();
    let mut financed: Vec<bool> = Vec::new();
    let mut ids: Vec<u64> = Vec::new();
    let mut holdout: Vec<Option<u8>> = Vec::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("").trim();

        let fin = match field(financed_col).to_ascii_lowercase().as_str() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(Error::CsvParse {
                    row: row_idx,
                    message: format!("financing flag '{other}' is not 0/1/true/false"),
                })
            }
        };
        let raw_label = field(label_col);
        let parsed_label = match raw_label {
            "" => None,
            "0" => Some(0u8),
            "1" => Some(1u8),
            other => return Err(Error::InvalidLabel(other.to_string())),
        };
        if fin && parsed_label.is_none() {
            return Err(Error::CsvParse {
                row: row_idx,
                message: "financed row is missing its label".into(),
            });
        }
        labels.push(if fin { parsed_label } else { None });
        holdout.push(if fin { None } else { parsed_label });
        financed.push(fin);

        let mut row = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let v: f64 = field(c).parse().map_err(|_| Error::CsvParse {
                row: row_idx,
                message: format!("cannot parse '{}' as a number", field(c)),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("feature at data row {row_idx}")));
            }
            row.push(v);
        }
        rows.push(row);

        ids.push(match id_col {
            Some(c) => field(c).parse().map_err(|_| Error::CsvParse {
                row: row_idx,
                message: format!("cannot parse id '{}' as u64", field(c)),
            })?,
            None => row_idx as u64,
        });
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = rows.len();
    let d = feature_cols.len();
    let mut features = Array2::zeros((n, d));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            features[[i, j]] = *v;
        }
    }
    let dataset = Dataset::new(features, labels, financed, ids)?;
    let holdout_labels = schema.keep_holdout_labels.then_some(holdout);
    Ok(CsvLoad { dataset, holdout_labels })
}

/// Equal-frequency bin edges per feature, derived from financed records.
/// Stored so test data can be encoded with train-derived edges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discretization {
    pub bins: usize,
    /// `edges[j]` holds the `bins - 1` interior cut points of feature `j`.
    pub edges: Vec<Vec<f64>>,
}

impl Discretization {
    /// Bin index of a value: the number of edges strictly below it, so bins
    /// are `(-inf, e1], (e1, e2], ..., (e_{b-1}, inf)`.
    pub fn bin_index(&self, feature: usize, value: f64) -> usize {
        self.edges[feature].iter().filter(|e| value > **e).count()
    }
}

/// Replace each feature by `bins - 1` indicator columns (reference level =
/// lowest bin), with edges taken as empirical quantiles of the financed
/// records. Returns the encoded dataset and the reusable edges.
pub fn discretize(dataset: &Dataset, bins_per_feature: usize) -> Result<(Dataset, Discretization)> {
    if bins_per_feature < 2 {
        return Err(Error::InvalidArgument("bins_per_feature must be >= 2".into()));
    }
    let (financed_x, _, _) = dataset.financed_design();
    if financed_x.nrows() == 0 {
        return Err(Error::NoFinancedRecords);
    }
    let mut edges = Vec::with_capacity(dataset.dim());
    for j in 0..dataset.dim() {
        let mut col: Vec<f64> = financed_x.column(j).to_vec();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut distinct = 1usize;
        for w in col.windows(2) {
            if w[1] > w[0] {
                distinct += 1;
            }
        }
        if distinct < bins_per_feature {
            return Err(Error::InsufficientDistinctValues {
                index: j,
                distinct,
                needed: bins_per_feature,
            });
        }
        let cuts: Vec<f64> = (1..bins_per_feature)
            .map(|b| quantile_sorted(&col, b as f64 / bins_per_feature as f64))
            .collect();
        edges.push(cuts);
    }
    let disc = Discretization { bins: bins_per_feature, edges };
    let encoded = apply_discretization(dataset, &disc)?;
    Ok((encoded, disc))
}

/// Encode a dataset with previously derived edges (no leakage: test data
/// reuses train edges). Pure function of its inputs.
pub fn apply_discretization(dataset: &Dataset, disc: &Discretization) -> Result<Dataset> {
    if disc.edges.len() != dataset.dim() {
        return Err(Error::DimensionMismatch { expected: dataset.dim(), got: disc.edges.len() });
    }
    let per_feature = disc.bins - 1;
    let mut out = Array2::zeros((dataset.n(), dataset.dim() * per_feature));
    for i in 0..dataset.n() {
        for j in 0..dataset.dim() {
            let bin = disc.bin_index(j, dataset.features()[[i, j]]);
            if bin > 0 {
                out[[i, j * per_feature + (bin - 1)]] = 1.0;
            }
        }
    }
    Dataset::new(
        out,
        dataset.labels().to_vec(),
        dataset.financed().to_vec(),
        dataset.ids().to_vec(),
    )
}

/// Refuse pairs of datasets that share record ids.
pub fn check_disjoint_ids(a: &Dataset, b: &Dataset) -> Result<()> {
    let ids: HashSet<u64> = a.ids().iter().copied().collect();
    let shared = b.ids().iter().filter(|id| ids.contains(id)).count();
    if shared > 0 {
        return Err(Error::TestLeakage(shared));
    }
    Ok(())
}
