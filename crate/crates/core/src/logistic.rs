//! Weighted maximum-likelihood logistic regression.
//!
//! Newton iterations with step-halving maximize the weighted log-likelihood
//! `sum_i w_i ln p_theta(y_i | x_i)` (optionally ridge-penalized on the
//! slopes). Step-halving only ever accepts ascent steps, so the objective
//! trace is non-decreasing by construction. Separable data is reported
//! (`converged = false` plus a note), never silently regularized: callers
//! opt into ridge explicitly.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Probabilities are clamped to this band inside likelihood evaluation only,
/// to keep logs finite; gradient and Hessian use the unclamped values.
const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Stop when the gradient infinity-norm falls at or below this.
    pub tol_grad: f64,
    pub max_iter: usize,
    /// Ridge penalty `ridge * |theta_slopes|^2` subtracted from the
    /// objective; the intercept is never penalized. Zero by default.
    pub ridge: f64,
    /// Maximum number of step halvings per Newton iteration.
    pub max_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol_grad: 1e-8, max_iter: 100, ridge: 0.0, max_halvings: 30 }
    }
}

/// Range summary of the weights a model was fit with.
#[derive(Debug, Clone, Copy)]
pub struct WeightSummary {
    pub min: f64,
    pub max: f64,
    pub sum: f64,
}

/// A fitted (or honestly non-converged) logistic model.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    /// Coefficients, intercept first.
    pub theta: Array1<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    /// Unpenalized weighted log-likelihood at `theta`.
    pub loglik: f64,
    /// Penalized objective after the start point and each accepted step.
    pub objective_trace: Vec<f64>,
    pub weights_used: WeightSummary,
    /// Ridge strength the model was fit with; non-zero values must be
    /// visible to downstream consumers.
    pub ridge: f64,
    /// Diagnostic set when fitting stopped without convergence.
    pub note: Option<String>,
}

impl LogisticModel {
    /// Feature dimension d (theta has d + 1 entries).
    pub fn dim(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn linear_predictor(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.theta[0]
            + self
                .theta
                .iter()
                .skip(1)
                .zip(x.iter())
                .map(|(t, v)| t * v)
                .sum::<f64>()
    }
}

fn validate_inputs(features: &Array2<f64>, labels: &[u8], weights: &[f64]) -> Result<()> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    if weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: weights.len() });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix".into()));
    }
    if let Some(bad) = labels.iter().find(|y| **y > 1) {
        return Err(Error::InvalidLabel(bad.to_string()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().all(|w| *w == 0.0) {
        return Err(Error::InvalidWeights);
    }
    Ok(())
}

/// Weighted log-likelihood with clamped probabilities, minus the ridge term.
fn objective(
    features: &Array2<f64>,
    labels: &[u8],
    weights: &[f64],
    theta: &DVector<f64>,
    ridge: f64,
) -> f64 {
    let mut ll = 0.0;
    for i in 0..features.nrows() {
        let mut eta = theta[0];
        for j in 0..features.ncols() {
            eta += theta[j + 1] * features[[i, j]];
        }
        let p = sigmoid(eta).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        ll += weights[i] * if labels[i] == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    if ridge > 0.0 {
        for j in 1..theta.len() {
            ll -= ridge * theta[j] * theta[j];
        }
    }
    ll
}

/// Gradient of the (penalized) objective and the negated Hessian
/// (the weighted observed information plus the ridge block).
fn gradient_and_information(
    features: &Array2<f64>,
    labels: &[u8],
    weights: &[f64],
    theta: &DVector<f64>,
    ridge: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let p = theta.len();
    let mut grad = DVector::zeros(p);
    let mut info = DMatrix::zeros(p, p);
    let mut xtile = vec![0.0; p];
    for i in 0..features.nrows() {
        xtile[0] = 1.0;
        for j in 0..features.ncols() {
            xtile[j + 1] = features[[i, j]];
        }
        let eta: f64 = (0..p).map(|j| theta[j] * xtile[j]).sum();
        let prob = sigmoid(eta);
        let w = weights[i];
        let resid = w * (f64::from(labels[i]) - prob);
        let curv = w * prob * (1.0 - prob);
        for a in 0..p {
            grad[a] += resid * xtile[a];
            for b in a..p {
                info[(a, b)] += curv * xtile[a] * xtile[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(a, b)] = info[(b, a)];
        }
    }
    if ridge > 0.0 {
        for j in 1..p {
            grad[j] -= 2.0 * ridge * theta[j];
            info[(j, j)] += 2.0 * ridge;
        }
    }
    (grad, info)
}

/// Maximize the weighted log-likelihood by Newton iterations with
/// step-halving, starting from theta = 0.
pub fn fit_weighted(
    features: &Array2<f64>,
    labels: &[u8],
    weights: &[f64],
    options: &FitOptions,
) -> Result<LogisticModel> {
    validate_inputs(features, labels, weights)?;
    if !(options.ridge.is_finite() && options.ridge >= 0.0) {
        return Err(Error::InvalidArgument("ridge must be finite and >= 0".into()));
    }
    let p = features.ncols() + 1;
    let mut theta = DVector::zeros(p);
    let mut obj = objective(features, labels, weights, &theta, options.ridge);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut note: Option<String> = None;
    let mut iterations = 0;
    let mut grad_norm;

    loop {
        let (grad, info) = gradient_and_information(features, labels, weights, &theta, options.ridge);
        grad_norm = grad.amax();
        if grad_norm <= options.tol_grad {
            converged = true;
            break;
        }
        if iterations >= options.max_iter {
            note = Some(format!(
                "maximum iterations ({}) reached with gradient norm {grad_norm:.3e}; \
                 data may be separable",
                options.max_iter
            ));
            break;
        }
        iterations += 1;

        let delta = match info.clone().cholesky() {
            Some(chol) => chol.solve(&grad),
            None => match info.lu().solve(&grad) {
                Some(d) => d,
                None => {
                    note = Some(
                        "information matrix became singular (possible separation or collinearity)"
                            .into(),
                    );
                    break;
                }
            },
        };

        // Step-halving: accept ascent steps, tolerating decreases at the
        // floating-point noise level of the objective so full Newton steps
        // are not spuriously rejected near the optimum.
        let noise = 1e-12 * (1.0 + obj.abs());
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=options.max_halvings {
            let candidate = &theta + &delta * step;
            let cand_obj = objective(features, labels, weights, &candidate, options.ridge);
            if cand_obj >= obj - noise {
                theta = candidate;
                obj = cand_obj;
                trace.push(obj);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            note = Some(format!(
                "line search stalled after {} halvings (gradient norm {grad_norm:.3e})",
                options.max_halvings
            ));
            break;
        }
    }

    // On separable (or one-class) data the gradient vanishes as theta runs
    // off to infinity, so a small gradient alone does not certify a finite
    // maximizer. If every weighted record is classified with saturated
    // confidence, the likelihood is still climbing toward the boundary:
    // report that honestly instead of a silent bad fit. A positive ridge
    // makes the penalized optimum finite, so the check only applies without
    // one.
    if converged && options.ridge == 0.0 {
        let saturated = (0..features.nrows()).all(|i| {
            if weights[i] == 0.0 {
                return true;
            }
            let mut eta = theta[0];
            for j in 0..features.ncols() {
                eta += theta[j + 1] * features[[i, j]];
            }
            let p = sigmoid(eta);
            if labels[i] == 1 {
                p >= 1.0 - 1e-6
            } else {
                p <= 1e-6
            }
        });
        if saturated {
            converged = false;
            note = Some(
                "data is separable: every record is classified with saturated confidence \
                 and the likelihood has no finite maximizer"
                    .into(),
            );
        }
    }

    let (grad, _) = gradient_and_information(features, labels, weights, &theta, options.ridge);
    let final_gradient_norm = grad.amax();
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("fitted coefficients".into()));
    }
    let loglik = objective(features, labels, weights, &theta, 0.0);
    let weights_used = WeightSummary {
        min: weights.iter().copied().fold(f64::INFINITY, f64::min),
        max: weights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sum: weights.iter().sum(),
    };
    Ok(LogisticModel {
        theta: Array1::from_iter(theta.iter().copied()),
        converged,
        iterations,
        final_gradient_norm,
        loglik,
        objective_trace: trace,
        weights_used,
        ridge: options.ridge,
        note,
    })
}

/// Predicted default probability `sigmoid(theta . [1, x])`.
pub fn predict_proba(model: &LogisticModel, x: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x.len() });
    }
    Ok(sigmoid(model.linear_predictor(x)))
}

/// Model-based and sandwich covariance estimates for a converged fit.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    /// Inverse of the weighted observed information.
    pub model_based: Array2<f64>,
    /// `H^-1 G H^-1` with G the outer product of per-record score
    /// contributions; robust to model misspecification.
    pub sandwich: Array2<f64>,
}

/// Covariance estimates at the fitted coefficients. The information matrix
/// here is that of the unpenalized likelihood.
pub fn covariance(
    model: &LogisticModel,
    features: &Array2<f64>,
    labels: &[u8],
    weights: &[f64],
) -> Result<CovarianceEstimate> {
    validate_inputs(features, labels, weights)?;
    if !model.converged {
        return Err(Error::NotConverged(
            "covariance estimates require a converged model".into(),
        ));
    }
    if features.ncols() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: features.ncols() });
    }
    let p = model.theta.len();
    let mut info = DMatrix::zeros(p, p);
    let mut opg = DMatrix::zeros(p, p);
    let mut xtile = vec![0.0; p];
    for i in 0..features.nrows() {
        xtile[0] = 1.0;
        for j in 0..features.ncols() {
            xtile[j + 1] = features[[i, j]];
        }
        let eta: f64 = (0..p).map(|j| model.theta[j] * xtile[j]).sum();
        let prob = sigmoid(eta);
        let w = weights[i];
        let score = w * (f64::from(labels[i]) - prob);
        let curv = w * prob * (1.0 - prob);
        for a in 0..p {
            for b in a..p {
                info[(a, b)] += curv * xtile[a] * xtile[b];
                opg[(a, b)] += score * score * xtile[a] * xtile[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(a, b)] = info[(b, a)];
            opg[(a, b)] = opg[(b, a)];
        }
    }

    // Rank-check with a pivoted elimination before inverting: exact
    // collinearity must be reported with the offending column indices, not
    // surface as rounding-dependent Cholesky behavior.
    let collinear = collinear_columns(&info);
    if !collinear.is_empty() {
        return Err(Error::SingularInformation(collinear));
    }
    let inv = match info.clone().cholesky() {
        Some(chol) => chol.inverse(),
        None => return Err(Error::SingularInformation(Vec::new())),
    };
    let sandwich = &inv * &opg * &inv;

    Ok(CovarianceEstimate {
        model_based: symmetrized(&inv),
        sandwich: symmetrized(&sandwich),
    })
}

fn symmetrized(m: &DMatrix<f64>) -> Array2<f64> {
    let p = m.nrows();
    let mut out = Array2::zeros((p, p));
    for a in 0..p {
        for b in 0..p {
            out[[a, b]] = 0.5 * (m[(a, b)] + m[(b, a)]);
        }
    }
    out
}

/// Identify the design columns a pivoted Cholesky cannot make progress on.
/// Column 0 is the intercept; feature j reports as j + 1.
fn collinear_columns(info: &DMatrix<f64>) -> Vec<usize> {
    let p = info.nrows();
    let mut a = info.clone();
    let mut perm: Vec<usize> = (0..p).collect();
    let tol = 1e-10 * (0..p).map(|i| info[(i, i)]).fold(f64::MIN, f64::max).max(1e-300);
    for k in 0..p {
        // Pivot on the largest remaining diagonal.
        let (pivot_rel, pivot_val) = (k..p)
            .map(|i| (i, a[(i, i)]))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if pivot_val <= tol {
            let mut bad: Vec<usize> = perm[k..].to_vec();
            bad.sort_unstable();
            return bad;
        }
        a.swap_rows(k, pivot_rel);
        a.swap_columns(k, pivot_rel);
        perm.swap(k, pivot_rel);
        let piv = a[(k, k)];
        for i in (k + 1)..p {
            let f = a[(i, k)] / piv;
            for j in (k + 1)..p {
                let delta = f * a[(k, j)];
                a[(i, j)] -= delta;
            }
        }
    }
    Vec::new()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fit(features: &Array2<f64>, labels: &[u8]) -> LogisticModel {
        let w = vec![1.0; labels.len()];
        fit_weighted(features, labels, &w, &FitOptions::default()).unwrap()
    }

    #[test]
    fn symmetric_data_gives_zero_theta() {
        let x = array![[-1.0], [-1.0], [1.0], [1.0]];
        let model = fit(&x, &[0, 1, 0, 1]);
        assert!(model.converged);
        assert!(model.theta.iter().all(|t| t.abs() < 1e-10), "{:?}", model.theta);
    }

    /// Coarse-to-fine grid search over the two-parameter likelihood;
    /// independent of the Newton path.
    fn grid_search_two_cell(features: &Array2<f64>, labels: &[u8]) -> (f64, f64) {
        let w = vec![1.0; labels.len()];
        let eval = |t0: f64, t1: f64| {
            objective(features, labels, &w, &DVector::from_vec(vec![t0, t1]), 0.0)
        };
        let (mut c0, mut c1) = (0.0, 0.0);
        let mut half_width = 3.0;
        for _ in 0..6 {
            let mut best = (f64::NEG_INFINITY, c0, c1);
            for i in 0..=60 {
                for j in 0..=60 {
                    let t0 = c0 - half_width + i as f64 * half_width / 30.0;
                    let t1 = c1 - half_width + j as f64 * half_width / 30.0;
                    let v = eval(t0, t1);
                    if v > best.0 {
                        best = (v, t0, t1);
                    }
                }
            }
            c0 = best.1;
            c1 = best.2;
            half_width /= 10.0;
        }
        (c0, c1)
    }

    #[test]
    fn two_cell_saturated_model_matches_grid_oracle() {
        // 4 records at x = -1 (one default), 4 at x = +1 (three defaults):
        // the saturated fit has intercept 0 and slope ln 3.
        let x = array![[-1.0], [-1.0], [-1.0], [-1.0], [1.0], [1.0], [1.0], [1.0]];
        let y = [0, 0, 0, 1, 0, 1, 1, 1];
        let model = fit(&x, &y);
        assert!(model.converged);
        let (g0, g1) = grid_search_two_cell(&x, &y);
        assert!((model.theta[0] - g0).abs() < 1e-4, "{} vs {}", model.theta[0], g0);
        assert!((model.theta[1] - g1).abs() < 1e-4, "{} vs {}", model.theta[1], g1);
        let ln3 = 3.0f64.ln();
        assert!(model.theta[0].abs() < 1e-6);
        assert!((model.theta[1] - ln3).abs() < 1e-6);
    }

    #[test]
    fn rescaling_weights_leaves_theta_unchanged() {
        let x = array![[-0.4], [0.2], [1.3], [-0.9], [0.6], [2.0]];
        let y = [0, 1, 0, 0, 1, 1];
        let opts = FitOptions { tol_grad: 1e-12, ..Default::default() };
        let base = fit_weighted(&x, &y, &[1.0; 6], &opts).unwrap();
        let scaled = fit_weighted(&x, &y, &[7.0; 6], &opts).unwrap();
        assert!(base.converged && scaled.converged);
        for j in 0..2 {
            assert!((base.theta[j] - scaled.theta[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn predict_examples() {
        let model = LogisticModel {
            theta: array![0.0, 0.0],
            converged: true,
            iterations: 0,
            final_gradient_norm: 0.0,
            loglik: 0.0,
            objective_trace: vec![],
            weights_used: WeightSummary { min: 1.0, max: 1.0, sum: 1.0 },
            ridge: 0.0,
            note: None,
        };
        assert_eq!(predict_proba(&model, array![3.7].view()).unwrap(), 0.5);

        let model2 = LogisticModel { theta: array![1.0, 2.0], ..model.clone() };
        let p = predict_proba(&model2, array![0.5].view()).unwrap();
        // sigmoid(2) to 16 digits.
        assert!((p - 0.880_797_077_977_882_3).abs() < 1e-12);

        assert!(predict_proba(&model2, array![0.5, 1.0].view()).is_err());
    }

    #[test]
    fn objective_trace_is_monotone() {
        let x = array![[-0.4], [0.2], [1.3], [-0.9], [0.6], [2.0], [0.1], [-1.4]];
        let y = [0, 1, 0, 0, 1, 1, 1, 0];
        let model = fit(&x, &y);
        // Non-decreasing up to the documented floating-point noise band.
        for w in model.objective_trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs()),
                "objective decreased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn stationarity_via_finite_differences() {
        let x = array![
            [-0.4, 0.3],
            [0.2, -1.0],
            [1.3, 0.8],
            [-0.9, 0.1],
            [0.6, 0.6],
            [2.0, -0.3],
            [1.1, -0.6],
            [-1.2, 0.9]
        ];
        let y = [0, 1, 0, 0, 1, 1, 0, 1];
        let w = vec![1.0, 2.0, 1.0, 0.5, 1.5, 1.0, 1.0, 0.75];
        let model =
            fit_weighted(&x, &y, &w, &FitOptions { tol_grad: 1e-10, ..Default::default() }).unwrap();
        assert!(model.converged);
        let theta = DVector::from_iterator(3, model.theta.iter().copied());
        let h = 1e-6;
        let scale = w.iter().sum::<f64>();
        for j in 0..3 {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (objective(&x, &y, &w, &up, 0.0) - objective(&x, &y, &w, &dn, 0.0)) / (2.0 * h);
            assert!(fd.abs() <= 1e-5 * scale.max(1.0), "coef {j}: fd gradient {fd}");
        }
    }

    #[test]
    fn integer_weights_equal_duplication() {
        let x = array![[-0.4], [0.2], [1.3], [-0.9]];
        let y = [0u8, 0, 1, 1];
        let w = [3.0, 1.0, 2.0, 1.0];
        let opts = FitOptions { tol_grad: 1e-12, ..Default::default() };
        let weighted = fit_weighted(&x, &y, &w, &opts).unwrap();

        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..4 {
            for _ in 0..w[i] as usize {
                rows.push(x[[i, 0]]);
                labels.push(y[i]);
            }
        }
        let xd = Array2::from_shape_vec((rows.len(), 1), rows).unwrap();
        let dup = fit_weighted(&xd, &labels, &vec![1.0; labels.len()], &opts).unwrap();
        for j in 0..2 {
            assert!(
                (weighted.theta[j] - dup.theta[j]).abs() < 1e-10,
                "coef {j}: {} vs {}",
                weighted.theta[j],
                dup.theta[j]
            );
        }
    }

    #[test]
    fn standardizing_features_preserves_probabilities() {
        let x = array![
            [10.0, -3.0],
            [12.0, -1.0],
            [14.0, 0.5],
            [9.0, -2.5],
            [16.0, 2.0],
            [11.0, -0.5],
            [15.0, 1.0],
            [13.0, 0.0]
        ];
        let y = [0, 0, 0, 1, 0, 1, 1, 1];
        let opts = FitOptions { tol_grad: 1e-12, ..Default::default() };
        let raw = fit_weighted(&x, &y, &vec![1.0; 8], &opts).unwrap();
        assert!(raw.converged);

        let mean = [x.column(0).mean().unwrap(), x.column(1).mean().unwrap()];
        let sd = [x.column(0).std(0.0), x.column(1).std(0.0)];
        let mut xs = x.clone();
        for i in 0..8 {
            for j in 0..2 {
                xs[[i, j]] = (x[[i, j]] - mean[j]) / sd[j];
            }
        }
        let std_fit = fit_weighted(&xs, &y, &vec![1.0; 8], &opts).unwrap();
        for i in 0..8 {
            let p_raw = predict_proba(&raw, x.row(i)).unwrap();
            let p_std = predict_proba(&std_fit, xs.row(i)).unwrap();
            assert!((p_raw - p_std).abs() < 1e-8, "row {i}: {p_raw} vs {p_std}");
        }
    }

    #[test]
    fn separable_data_reports_nonconvergence() {
        let x = array![[-2.0], [-1.0], [1.0], [2.0]];
        let y = [0, 0, 1, 1];
        let model = fit_weighted(&x, &y, &[1.0; 4], &FitOptions::default()).unwrap();
        assert!(!model.converged);
        assert!(model.note.is_some());
        assert!(model.theta.iter().all(|t| t.is_finite()));

        // Ridge restores convergence and is reported on the model.
        let ridged = fit_weighted(
            &x,
            &y,
            &[1.0; 4],
            &FitOptions { ridge: 0.1, ..Default::default() },
        )
        .unwrap();
        assert!(ridged.converged);
        assert_eq!(ridged.ridge, 0.1);
    }

    #[test]
    fn single_class_without_ridge_does_not_converge() {
        let x = array![[0.3], [-0.8], [1.1], [0.0]];
        let model = fit_weighted(&x, &[1, 1, 1, 1], &[1.0; 4], &FitOptions::default()).unwrap();
        assert!(!model.converged);
        assert!(model.note.is_some());
    }

    #[test]
    fn covariance_requires_convergence_and_detects_collinearity() {
        let x = array![[-2.0], [-1.0], [1.0], [2.0]];
        let sep = fit_weighted(&x, &[0, 0, 1, 1], &[1.0; 4], &FitOptions::default()).unwrap();
        assert!(matches!(
            covariance(&sep, &x, &[0, 0, 1, 1], &[1.0; 4]),
            Err(Error::NotConverged(_))
        ));

        // Duplicated feature column: exact collinearity must be named.
        let xdup = array![
            [0.5, 0.5],
            [-0.3, -0.3],
            [1.2, 1.2],
            [-0.8, -0.8],
            [0.1, 0.1],
            [0.9, 0.9]
        ];
        let y = [0, 0, 1, 0, 1, 1];
        let model = fit_weighted(
            &xdup,
            &y,
            &[1.0; 6],
            &FitOptions { ridge: 0.05, ..Default::default() },
        )
        .unwrap();
        assert!(model.converged);
        match covariance(&model, &xdup, &y, &[1.0; 6]) {
            Err(Error::SingularInformation(cols)) => {
                assert!(!cols.is_empty(), "no columns named");
                assert!(cols.iter().all(|c| *c == 1 || *c == 2), "{cols:?}");
            }
            other => panic!("expected singularity error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_balanced_design_yields_finite_psd_covariance() {
        // n = 2(d+1) with d = 1.
        let x = array![[-1.0], [-1.0], [1.0], [1.0]];
        let y = [0, 1, 0, 1];
        let model = fit(&x, &y);
        let cov = covariance(&model, &x, &y, &[1.0; 4]).unwrap();
        for m in [&cov.model_based, &cov.sandwich] {
            assert!(m.iter().all(|v| v.is_finite()));
            // Symmetric 2x2 PSD check: diagonal and determinant.
            assert!(m[[0, 0]] >= -1e-8 && m[[1, 1]] >= -1e-8);
            assert!(m[[0, 0]] * m[[1, 1]] - m[[0, 1]] * m[[1, 0]] >= -1e-8);
            assert!((m[[0, 1]] - m[[1, 0]]).abs() <= 1e-12);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let x = array![[0.0], [1.0]];
        assert!(fit_weighted(&x, &[0, 1], &[1.0], &FitOptions::default()).is_err());
        assert!(fit_weighted(&x, &[0, 2], &[1.0, 1.0], &FitOptions::default()).is_err());
        assert!(fit_weighted(&x, &[0, 1], &[-1.0, 1.0], &FitOptions::default()).is_err());
        assert!(fit_weighted(&x, &[0, 1], &[0.0, 0.0], &FitOptions::default()).is_err());
    }
}
