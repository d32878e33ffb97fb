//! Semi-supervised generative classifier on the joint `p(x, y)`.
//!
//! The model is a class prior plus one Gaussian per class. Labeled
//! (financed) records enter through the joint density; rejected records,
//! whose labels are hidden, contribute through the feature marginal only.
//! Parameters are estimated by EM where only the unlabeled records get
//! fractional responsibilities. Prediction is Bayes' rule in log space.
//!
//! The Gaussian family is an artifact choice (the selection problem itself
//! does not dictate a density family); it is the simplest family that makes
//! the cost of modelling `p(x)` visible when the features are not Gaussian.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop when `|obj - prev| < rel_tol * (1 + |prev|)`.
    pub rel_tol: f64,
    /// Diagonal ridge added to each class covariance, scaled by
    /// `trace / d`. Keeps the densities proper on degenerate scatters.
    pub cov_ridge_scale: f64,
    /// Constrain both classes to a pooled covariance. In that configuration
    /// the posterior is exactly logistic in x.
    pub equal_covariance: bool,
    /// Extra EM runs from perturbed starts; the best final objective wins.
    /// Zero (deterministic supervised start only) by default.
    pub restarts: usize,
    pub restart_seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-8,
            cov_ridge_scale: 1e-6,
            equal_covariance: false,
            restarts: 0,
            restart_seed: 0,
        }
    }
}

/// Class priors and per-class Gaussian parameters, with the EM objective
/// trace kept for ascent auditing.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    /// P(y = 1).
    pub prior: f64,
    pub mean0: Array1<f64>,
    pub mean1: Array1<f64>,
    pub cov0: Array2<f64>,
    pub cov1: Array2<f64>,
    /// Objective value at initialization and after every EM step.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
}

/// Per-class density evaluator built on a Cholesky factor.
struct ClassDensity {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl ClassDensity {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::NonFinite("class covariance lost positive definiteness".into()))?;
        let logdet_half: f64 = (0..d).map(|i| chol.l()[(i, i)].ln()).sum();
        let log_norm = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - logdet_half;
        Ok(Self { mean, chol, log_norm })
    }

    fn logpdf(&self, x: &DVector<f64>) -> f64 {
        let centered = x - &self.mean;
        let z = self.chol.l().solve_lower_triangular(&centered).expect("triangular solve");
        self.log_norm - 0.5 * z.norm_squared()
    }
}

struct Params {
    prior: f64,
    class0: ClassDensity,
    class1: ClassDensity,
}

struct EmData {
    x_f: Vec<DVector<f64>>,
    y_f: Vec<u8>,
    x_nf: Vec<DVector<f64>>,
    d: usize,
}

impl EmData {
    fn total(&self) -> f64 {
        (self.x_f.len() + self.x_nf.len()) as f64
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Joint log-likelihood: labeled records through `p(x, y)`, unlabeled
/// records through the marginal `p(x)`.
fn em_objective(params: &Params, data: &EmData) -> f64 {
    let lp1 = params.prior.ln();
    let lp0 = (1.0 - params.prior).ln();
    let mut ll = 0.0;
    for (x, y) in data.x_f.iter().zip(&data.y_f) {
        ll += if *y == 1 {
            lp1 + params.class1.logpdf(x)
        } else {
            lp0 + params.class0.logpdf(x)
        };
    }
    for x in &data.x_nf {
        ll += log_sum_exp(lp1 + params.class1.logpdf(x), lp0 + params.class0.logpdf(x));
    }
    ll
}

/// Responsibilities `P(y = 1 | x)` for the unlabeled records only.
fn e_step(params: &Params, data: &EmData) -> Vec<f64> {
    let lp1 = params.prior.ln();
    let lp0 = (1.0 - params.prior).ln();
    data.x_nf
        .iter()
        .map(|x| {
            let a1 = lp1 + params.class1.logpdf(x);
            let a0 = lp0 + params.class0.logpdf(x);
            (a1 - log_sum_exp(a1, a0)).exp()
        })
        .collect()
}

/// Closed-form weighted Gaussian updates. `resp` holds the class-1
/// responsibility of each unlabeled record; labeled records count one-hot.
fn m_step(
    data: &EmData,
    resp: &[f64],
    options: &EmOptions,
    mean_override: Option<(DVector<f64>, DVector<f64>)>,
) -> Result<Params> {
    let d = data.d;
    let mut n1 = 0.0;
    let mut sum0 = DVector::zeros(d);
    let mut sum1 = DVector::zeros(d);
    for (x, y) in data.x_f.iter().zip(&data.y_f) {
        if *y == 1 {
            n1 += 1.0;
            sum1 += x;
        } else {
            sum0 += x;
        }
    }
    for (x, r) in data.x_nf.iter().zip(resp) {
        n1 += r;
        sum1 += x * *r;
        sum0 += x * (1.0 - r);
    }
    let total = data.total();
    let n0 = total - n1;
    if n0 <= 0.0 || n1 <= 0.0 {
        return Err(Error::NonFinite("empty class in M-step".into()));
    }
    let (mean0, mean1) = match mean_override {
        Some(pair) => pair,
        None => (&sum0 / n0, &sum1 / n1),
    };

    let mut scatter0 = DMatrix::zeros(d, d);
    let mut scatter1 = DMatrix::zeros(d, d);
    for (x, y) in data.x_f.iter().zip(&data.y_f) {
        if *y == 1 {
            let c = x - &mean1;
            scatter1 += &c * c.transpose();
        } else {
            let c = x - &mean0;
            scatter0 += &c * c.transpose();
        }
    }
    for (x, r) in data.x_nf.iter().zip(resp) {
        let c1 = x - &mean1;
        scatter1 += (&c1 * c1.transpose()) * *r;
        let c0 = x - &mean0;
        scatter0 += (&c0 * c0.transpose()) * (1.0 - r);
    }

    let ridge = |cov: &mut DMatrix<f64>| {
        let trace: f64 = cov.diagonal().sum();
        let eps = if trace > 0.0 {
            options.cov_ridge_scale * trace / d as f64
        } else {
            options.cov_ridge_scale
        };
        for i in 0..d {
            cov[(i, i)] += eps;
        }
    };

    let (mut cov0, mut cov1) = if options.equal_covariance {
        let pooled = (&scatter0 + &scatter1) / total;
        (pooled.clone(), pooled)
    } else {
        (scatter0 / n0, scatter1 / n1)
    };
    ridge(&mut cov0);
    ridge(&mut cov1);

    Ok(Params {
        prior: n1 / total,
        class0: ClassDensity::new(mean0, cov0)?,
        class1: ClassDensity::new(mean1, cov1)?,
    })
}

fn run_em(
    data: &EmData,
    init: Params,
    options: &EmOptions,
) -> Result<(Params, Vec<f64>, bool)> {
    let mut params = init;
    let mut obj = em_objective(&params, data);
    let mut trace = vec![obj];
    let mut converged = false;
    for _ in 0..options.max_iter {
        let resp = e_step(&params, data);
        params = m_step(data, &resp, options, None)?;
        let next = em_objective(&params, data);
        trace.push(next);
        if (next - obj).abs() < options.rel_tol * (1.0 + obj.abs()) {
            converged = true;
            break;
        }
        obj = next;
    }
    Ok((params, trace, converged))
}

/// Fit the generative model by EM on labeled financed records plus
/// unlabeled rejected records. Deterministic given inputs and options.
pub fn fit_em(
    x_f: &Array2<f64>,
    y_f: &[u8],
    x_nf: &Array2<f64>,
    options: &EmOptions,
) -> Result<GenerativeModel> {
    if x_f.nrows() != y_f.len() {
        return Err(Error::DimensionMismatch { expected: x_f.nrows(), got: y_f.len() });
    }
    let d = x_f.ncols();
    if d == 0 {
        return Err(Error::InvalidArgument("feature dimension must be >= 1".into()));
    }
    if x_nf.nrows() > 0 && x_nf.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x_nf.ncols() });
    }
    if x_f.iter().any(|v| !v.is_finite()) || x_nf.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix".into()));
    }
    if let Some(bad) = y_f.iter().find(|y| **y > 1) {
        return Err(Error::InvalidLabel(bad.to_string()));
    }
    for class in [0u8, 1] {
        let count = y_f.iter().filter(|y| **y == class).count();
        if count < 2 {
            return Err(Error::TooFewLabeled { class, got: count });
        }
    }

    let data = EmData {
        x_f: (0..x_f.nrows())
            .map(|i| DVector::from_iterator(d, x_f.row(i).iter().copied()))
            .collect(),
        y_f: y_f.to_vec(),
        x_nf: (0..x_nf.nrows())
            .map(|i| DVector::from_iterator(d, x_nf.row(i).iter().copied()))
            .collect(),
        d,
    };

    // Supervised start: closed-form estimates from the labeled records only.
    let labeled_only = EmData { x_nf: Vec::new(), ..clone_data(&data) };
    let supervised = m_step(&labeled_only, &[], options, None)?;
    let supervised_means = (supervised.class0.mean.clone(), supervised.class1.mean.clone());
    let (mut best_params, mut best_trace, mut best_converged) =
        run_em(&data, supervised, options)?;

    for restart in 0..options.restarts {
        let mut rng = rng_from(options.restart_seed, "em-restart", restart as u64);
        let mut jitter = |mean: &DVector<f64>| {
            DVector::from_iterator(
                d,
                mean.iter().map(|m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + 0.5 * z
                }),
            )
        };
        let m0 = jitter(&supervised_means.0);
        let m1 = jitter(&supervised_means.1);
        let init = m_step(&labeled_only, &[], options, Some((m0, m1)))?;
        let (params, trace, converged) = run_em(&data, init, options)?;
        if trace.last() > best_trace.last() {
            best_params = params;
            best_trace = trace;
            best_converged = converged;
        }
    }

    Ok(GenerativeModel {
        prior: best_params.prior,
        mean0: Array1::from_iter(best_params.class0.mean.iter().copied()),
        mean1: Array1::from_iter(best_params.class1.mean.iter().copied()),
        cov0: dmatrix_to_array(best_params.class0.chol.l() * best_params.class0.chol.l().transpose()),
        cov1: dmatrix_to_array(best_params.class1.chol.l() * best_params.class1.chol.l().transpose()),
        loglik_trace: best_trace,
        converged: best_converged,
    })
}

fn clone_data(data: &EmData) -> EmData {
    EmData {
        x_f: data.x_f.clone(),
        y_f: data.y_f.clone(),
        x_nf: data.x_nf.clone(),
        d: data.d,
    }
}

fn dmatrix_to_array(m: DMatrix<f64>) -> Array2<f64> {
    let (r, c) = m.shape();
    let mut out = Array2::zeros((r, c));
    for i in 0..r {
        for j in 0..c {
            out[[i, j]] = m[(i, j)];
        }
    }
    out
}

/// Bayes posterior `P(y = 1 | x)`, computed in log space.
pub fn posterior(model: &GenerativeModel, x: ArrayView1<'_, f64>) -> Result<f64> {
    let d = model.mean0.len();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    let class0 = ClassDensity::new(
        DVector::from_iterator(d, model.mean0.iter().copied()),
        array_to_dmatrix(&model.cov0),
    )?;
    let class1 = ClassDensity::new(
        DVector::from_iterator(d, model.mean1.iter().copied()),
        array_to_dmatrix(&model.cov1),
    )?;
    let xv = DVector::from_iterator(d, x.iter().copied());
    let a1 = model.prior.ln() + class1.logpdf(&xv);
    let a0 = (1.0 - model.prior).ln() + class0.logpdf(&xv);
    Ok((a1 - log_sum_exp(a1, a0)).exp())
}

fn array_to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

impl GenerativeModel {
    /// When the two class covariances coincide, the posterior is exactly
    /// logistic in x; returns the induced coefficient vector (intercept
    /// first), or `None` if the covariances differ.
    pub fn logistic_equivalent(&self) -> Option<Array1<f64>> {
        let d = self.mean0.len();
        let scale = self.cov0.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        let equal = self
            .cov0
            .iter()
            .zip(self.cov1.iter())
            .all(|(a, b)| (a - b).abs() <= 1e-9 * scale);
        if !equal {
            return None;
        }
        let cov = array_to_dmatrix(&self.cov0);
        let chol = cov.cholesky()?;
        let m0 = DVector::from_iterator(d, self.mean0.iter().copied());
        let m1 = DVector::from_iterator(d, self.mean1.iter().copied());
        let w = chol.solve(&(&m1 - &m0));
        let s1 = chol.solve(&m1);
        let s0 = chol.solve(&m0);
        let intercept = (self.prior / (1.0 - self.prior)).ln()
            - 0.5 * (m1.dot(&s1) - m0.dot(&s0));
        let mut theta = Array1::zeros(d + 1);
        theta[0] = intercept;
        for j in 0..d {
            theta[j + 1] = w[j];
        }
        Some(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logistic::sigmoid;
    use ndarray::array;

    fn empty_nf(d: usize) -> Array2<f64> {
        Array2::zeros((0, d))
    }

    #[test]
    fn no_unlabeled_data_reproduces_supervised_estimates() {
        let x = array![[1.0], [2.0], [3.0], [10.0], [11.0], [12.0]];
        let y = [0, 0, 0, 1, 1, 1];
        let model = fit_em(&x, &y, &empty_nf(1), &EmOptions::default()).unwrap();

        // Closed-form supervised targets.
        assert!((model.prior - 0.5).abs() < 1e-12);
        assert!((model.mean0[0] - 2.0).abs() < 1e-12);
        assert!((model.mean1[0] - 11.0).abs() < 1e-12);
        // Class scatter / n = 2/3, plus the ridge floor.
        let var = 2.0 / 3.0;
        assert!((model.cov0[[0, 0]] - var).abs() < 1e-5);
        assert!((model.cov1[[0, 0]] - var).abs() < 1e-5);
        assert!(model.converged);
    }

    #[test]
    fn symmetric_data_gives_symmetric_fit() {
        let x = array![[-2.0], [-1.0], [-1.5], [2.0], [1.0], [1.5]];
        let y = [0, 0, 0, 1, 1, 1];
        let x_nf = array![[-0.5], [0.5], [-3.0], [3.0]];
        let model = fit_em(&x, &y, &x_nf, &EmOptions::default()).unwrap();
        assert!((model.prior - 0.5).abs() < 1e-6);
        assert!((model.mean0[0] + model.mean1[0]).abs() < 1e-6);
    }

    #[test]
    fn trace_is_non_decreasing() {
        let x = array![[0.1, -0.2], [0.4, 0.3], [-0.5, 0.9], [2.0, 1.5], [2.2, 0.8], [1.7, 1.2]];
        let y = [0, 0, 0, 1, 1, 1];
        let x_nf = array![[1.0, 0.5], [0.2, 0.2], [1.8, 1.0], [-0.3, 0.6]];
        let model = fit_em(&x, &y, &x_nf, &EmOptions::default()).unwrap();
        for w in model.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn posterior_symmetry_and_prior_domination() {
        let model = GenerativeModel {
            prior: 0.5,
            mean0: array![-1.0],
            mean1: array![1.0],
            cov0: array![[1.0]],
            cov1: array![[1.0]],
            loglik_trace: vec![],
            converged: true,
        };
        // Equidistant point.
        assert!((posterior(&model, array![0.0].view()).unwrap() - 0.5).abs() < 1e-12);

        // 1-D equal-variance pair: logit is 2x, checked against a direct
        // density-ratio oracle and the closed form.
        let p = posterior(&model, array![0.3].view()).unwrap();
        let n1 = (-0.5f64 * (0.3 - 1.0) * (0.3 - 1.0)).exp();
        let n0 = (-0.5f64 * (0.3 + 1.0) * (0.3 + 1.0)).exp();
        let oracle = n1 / (n1 + n0);
        assert!((p - oracle).abs() < 1e-12);
        assert!((p - sigmoid(0.6)).abs() < 1e-12);
        assert!((p - 0.645_656_306_225_795_4).abs() < 1e-12);

        let dominated = GenerativeModel { prior: 1.0 - 1e-9, ..model.clone() };
        assert!(posterior(&dominated, array![-0.4].view()).unwrap() > 0.999);

        assert!(posterior(&model, array![0.0, 1.0].view()).is_err());
    }

    #[test]
    fn equal_covariance_fit_matches_logistic_form() {
        let x = array![
            [0.2, 0.1],
            [-0.4, 0.5],
            [0.1, -0.8],
            [-0.9, 0.0],
            [1.5, 1.1],
            [2.1, 0.7],
            [1.2, 1.8],
            [1.9, 1.3]
        ];
        let y = [0, 0, 0, 0, 1, 1, 1, 1];
        let x_nf = array![[0.5, 0.5], [1.0, 1.0], [-0.2, 0.3]];
        let opts = EmOptions { equal_covariance: true, ..Default::default() };
        let model = fit_em(&x, &y, &x_nf, &opts).unwrap();
        let theta = model.logistic_equivalent().expect("pooled covariance");
        for xv in [array![0.3, 0.4], array![-1.0, 2.0], array![1.2, -0.4]] {
            let direct = posterior(&model, xv.view()).unwrap();
            let eta = theta[0] + theta[1] * xv[0] + theta[2] * xv[1];
            assert!((direct - sigmoid(eta)).abs() < 1e-6, "{direct} vs {}", sigmoid(eta));
        }
    }

    #[test]
    fn too_few_labeled_per_class_is_an_error() {
        let x = array![[0.0], [1.0], [2.0]];
        match fit_em(&x, &[0, 0, 1], &empty_nf(1), &EmOptions::default()) {
            Err(Error::TooFewLabeled { class: 1, got: 1 }) => {}
            other => panic!("expected too-few-labeled, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let x = array![[0.0], [1.0], [f64::NAN], [2.0]];
        assert!(fit_em(&x, &[0, 0, 1, 1], &empty_nf(1), &EmOptions::default()).is_err());
    }
}
