//! Property tests for the crate-wide invariants.

use ndarray::Array2;
use proptest::prelude::*;

use rejinf::data::{
    apply_discretization, discretize, generate_synthetic, Dataset, FeatureDistribution,
    GeneratorSpec, TruthModel,
};
use rejinf::evaluation::gini;
use rejinf::logistic::{fit_weighted, FitOptions};
use rejinf::mechanisms::{apply_mechanism, MechanismFamily, MechanismTemplate};

/// All-pairs AUC with half-credit ties: the independent oracle for gini().
fn brute_force_gini(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    2.0 * (wins / pairs) - 1.0
}

/// Scores drawn from a coarse grid so tie groups are common.
fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..50).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..16).prop_map(|v| v as f64 / 15.0), n),
            prop::collection::vec(0u8..2, n),
        )
    })
}

proptest! {
    #[test]
    fn gini_matches_all_pairs_oracle((scores, labels) in instance()) {
        prop_assume!(labels.iter().any(|l| *l == 0) && labels.iter().any(|l| *l == 1));
        let fast = gini(&scores, &labels).unwrap();
        let slow = brute_force_gini(&scores, &labels);
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn generator_is_deterministic(seed in any::<u64>()) {
        let spec = GeneratorSpec {
            n_total: 64,
            d: 2,
            truth: TruthModel::Logistic { theta: vec![-0.5, 1.0, 0.5] },
            features: FeatureDistribution::StandardNormal,
            seed,
        };
        let (a, _) = generate_synthetic(&spec).unwrap();
        let (b, _) = generate_synthetic(&spec).unwrap();
        prop_assert_eq!(a.features(), b.features());
        prop_assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn masking_invariant_survives_mechanisms(seed in any::<u64>(), rate in 0.2f64..1.0) {
        let spec = GeneratorSpec {
            n_total: 200,
            d: 1,
            truth: TruthModel::Logistic { theta: vec![0.0, 1.0] },
            features: FeatureDistribution::Uniform { lo: -1.0, hi: 1.0 },
            seed,
        };
        let (data, _) = generate_synthetic(&spec).unwrap();
        let template = MechanismTemplate {
            kind: MechanismFamily::Mcar,
            target_rate: rate,
            floor: None,
            default_penalty: None,
            pilot_fraction: 0.1,
        };
        let (masked, propensities) = apply_mechanism(&data, &template.to_spec(seed).unwrap()).unwrap();
        let present = masked.labels().iter().filter(|l| l.is_some()).count();
        prop_assert_eq!(present, masked.n_financed());
        prop_assert_eq!(propensities.len(), masked.n());
    }

    #[test]
    fn discretization_reapplication_is_identical(seed in any::<u64>()) {
        let spec = GeneratorSpec {
            n_total: 120,
            d: 2,
            truth: TruthModel::Logistic { theta: vec![0.0, 0.5, -0.5] },
            features: FeatureDistribution::StandardNormal,
            seed,
        };
        let (data, _) = generate_synthetic(&spec).unwrap();
        let (encoded, disc) = discretize(&data, 4).unwrap();
        let again = apply_discretization(&data, &disc).unwrap();
        prop_assert_eq!(encoded.features(), again.features());
    }
}

/// Fitting with integer weight k equals fitting the record duplicated k
/// times, up to the Newton stopping resolution.
#[test]
fn integer_weights_equal_duplication_on_random_data() {
    let spec = GeneratorSpec {
        n_total: 30,
        d: 1,
        truth: TruthModel::Logistic { theta: vec![0.2, 0.8] },
        features: FeatureDistribution::StandardNormal,
        seed: 5150,
    };
    let (data, _) = generate_synthetic(&spec).unwrap();
    let labels: Vec<u8> = data.labels().iter().map(|l| l.unwrap()).collect();
    let weights: Vec<f64> = (0..30).map(|i| f64::from(1 + (i % 3) as u32)).collect();
    let opts = FitOptions { tol_grad: 1e-12, ..Default::default() };
    let weighted = fit_weighted(data.features(), &labels, &weights, &opts).unwrap();

    let mut rows = Vec::new();
    let mut dup_labels = Vec::new();
    for i in 0..30 {
        for _ in 0..weights[i] as usize {
            rows.push(data.features()[[i, 0]]);
            dup_labels.push(labels[i]);
        }
    }
    let x = Array2::from_shape_vec((rows.len(), 1), rows).unwrap();
    let dup = fit_weighted(&x, &dup_labels, &vec![1.0; dup_labels.len()], &opts).unwrap();
    // Either both report separability or both converge to the same point.
    assert_eq!(weighted.converged, dup.converged);
    if weighted.converged {
        for j in 0..2 {
            assert!((weighted.theta[j] - dup.theta[j]).abs() < 1e-10);
        }
    }
}

#[test]
fn dataset_split_preserves_ids_and_masks() {
    let x = Array2::from_shape_vec((10, 1), (0..10).map(f64::from).collect()).unwrap();
    let data = Dataset::fully_labeled(x, vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1]).unwrap();
    let (a, b) = data.split(4).unwrap();
    assert_eq!(a.n(), 4);
    assert_eq!(b.n(), 6);
    assert_eq!(a.ids(), &[0, 1, 2, 3]);
    assert_eq!(b.ids(), &[4, 5, 6, 7, 8, 9]);
    assert!(rejinf::data::check_disjoint_ids(&a, &b).is_ok());
}
