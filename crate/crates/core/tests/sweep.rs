//! Behavior of the acceptance-rate sweep harness.

use ndarray::Array2;

use rejinf::data::{Dataset, FeatureDistribution, TruthModel};
use rejinf::evaluation::{acceptance_sweep, MethodConfig, SweepConfig, SweepInput};
use rejinf::mechanisms::{MechanismFamily, MechanismTemplate};
use rejinf::methods::MethodTag;
use rejinf::Error;

fn mar(rate: f64) -> MechanismTemplate {
    MechanismTemplate {
        kind: MechanismFamily::MarStochastic,
        target_rate: rate,
        floor: Some(0.05),
        default_penalty: None,
        pilot_fraction: 0.1,
    }
}

fn base_config() -> SweepConfig {
    SweepConfig {
        input: SweepInput::Synthetic {
            n_train: 3_000,
            n_test: 1_500,
            truth: TruthModel::Logistic { theta: vec![-1.0, 0.9, -0.5] },
            features: FeatureDistribution::StandardNormal,
        },
        mechanism: mar(0.6),
        rates: vec![1.0, 0.6],
        methods: vec![
            MethodConfig::FinancedOnly,
            MethodConfig::IdealReweighting,
            MethodConfig::Augmentation { k_bands: 5, weight_cap: 100.0 },
            MethodConfig::Parceling { k_bands: 5, inflation: 1.25 },
        ],
        bootstrap_resamples: 300,
        replications: 1,
        master_seed: 77,
        fit: Default::default(),
        keep_audits: false,
    }
}

#[test]
fn full_acceptance_row_collapses_all_logistic_methods() {
    let result = acceptance_sweep(&base_config()).unwrap();
    let fo = result.row(MethodTag::FinancedOnly, 1.0).unwrap().gini;
    for method in [MethodTag::IdealReweighting, MethodTag::Augmentation, MethodTag::Parceling] {
        let g = result.row(method, 1.0).unwrap().gini;
        assert!(
            (g - fo).abs() < 1e-6,
            "{method} gini {g} differs from financed_only {fo} at full acceptance"
        );
    }
}

#[test]
fn rows_are_sorted_and_csv_is_stable() {
    let config = base_config();
    let a = acceptance_sweep(&config).unwrap();
    let b = acceptance_sweep(&config).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());

    let csv = a.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "method,rate,gini,lo,hi,param_l2");
    let keys: Vec<(String, f64)> = lines
        .map(|l| {
            let mut parts = l.split(',');
            let m = parts.next().unwrap().to_string();
            let r: f64 = parts.next().unwrap().parse().unwrap();
            (m, r)
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.partial_cmp(&a.1).unwrap()));
    assert_eq!(keys, sorted);
    assert_eq!(keys.len(), 8); // 4 methods x 2 rates

    // Intervals bracket the point estimate.
    for row in &a.rows {
        assert!(row.lo <= row.gini && row.gini <= row.hi);
        assert!((-1.0..=1.0).contains(&row.gini));
    }
}

#[test]
fn shared_ids_between_train_and_test_are_refused() {
    let x = Array2::from_shape_vec((60, 1), (0..60).map(|i| i as f64 / 10.0).collect()).unwrap();
    let labels: Vec<u8> = (0..60).map(|i| u8::from(i % 3 == 0)).collect();
    let train = Dataset::fully_labeled(x.clone(), labels.clone()).unwrap();
    let test = Dataset::fully_labeled(x, labels).unwrap(); // same ids 0..59

    let config = SweepConfig {
        input: SweepInput::Provided { train, test },
        mechanism: mar(0.6),
        rates: vec![1.0],
        methods: vec![MethodConfig::FinancedOnly],
        bootstrap_resamples: 300,
        replications: 1,
        master_seed: 1,
        fit: Default::default(),
        keep_audits: false,
    };
    assert!(matches!(acceptance_sweep(&config), Err(Error::TestLeakage(60))));
}

#[test]
fn provided_mode_sets_caveat_and_rejects_oracle_methods() {
    let x = Array2::from_shape_vec((80, 1), (0..80).map(|i| (i as f64).sin()).collect()).unwrap();
    let labels: Vec<u8> = (0..80).map(|i| u8::from(i % 4 == 0)).collect();
    let full = Dataset::fully_labeled(x, labels).unwrap();
    let (train, test) = full.split(50).unwrap();

    let mut config = SweepConfig {
        input: SweepInput::Provided { train, test },
        mechanism: mar(0.6),
        rates: vec![1.0, 0.6],
        methods: vec![MethodConfig::FinancedOnly],
        bootstrap_resamples: 300,
        replications: 1,
        master_seed: 5,
        fit: Default::default(),
        keep_audits: false,
    };
    let result = acceptance_sweep(&config).unwrap();
    assert!(result.caveat.is_some(), "real-data mode must carry the holdout caveat");
    // No simulation oracle: no parameter distances.
    assert!(result.rows.iter().all(|r| r.param_l2.is_none()));

    config.methods.push(MethodConfig::OracleFull);
    assert!(matches!(acceptance_sweep(&config), Err(Error::Config(_))));
}

#[test]
fn simulation_mode_reports_parameter_distances_for_logistic_methods() {
    let mut config = base_config();
    config.methods = vec![
        MethodConfig::FinancedOnly,
        MethodConfig::OracleFull,
        MethodConfig::Generative { equal_covariance: false },
    ];
    let result = acceptance_sweep(&config).unwrap();
    assert!(result.caveat.is_none());
    for row in &result.rows {
        match row.method {
            MethodTag::Generative => assert!(row.param_l2.is_none()),
            _ => assert!(row.param_l2.is_some(), "{} lacks param_l2", row.method),
        }
    }
    // The oracle's distance to itself is zero.
    let oracle_row = result.row(MethodTag::OracleFull, 0.6).unwrap();
    assert_eq!(oracle_row.param_l2, Some(0.0));
}

#[test]
fn non_monotone_rates_propagate_as_errors() {
    let mut config = base_config();
    config.rates = vec![0.5, 0.9];
    assert!(acceptance_sweep(&config).is_err());
}

#[test]
fn audits_are_collected_on_demand() {
    let mut config = base_config();
    config.keep_audits = true;
    let result = acceptance_sweep(&config).unwrap();

    // One augmentation and one parceling entry per rate point.
    let aug_entries = result
        .audits
        .iter()
        .filter(|e| e.method == MethodTag::Augmentation)
        .count();
    let par_entries = result
        .audits
        .iter()
        .filter(|e| e.method == MethodTag::Parceling)
        .count();
    assert_eq!(aug_entries, 2);
    assert_eq!(par_entries, 2);

    let aug_csv = result.augmentation_audit_csv();
    assert!(aug_csv.lines().count() > 1 + 5, "expected per-band rows: {aug_csv}");
    let par_csv = result.parceling_audit_csv();
    // Rate 1.0 draws nothing; rate 0.6 draws a label for every reject.
    let drawn = par_csv.lines().count() - 1;
    let rejects: usize = result
        .audits
        .iter()
        .filter_map(|e| match &e.audit {
            rejinf::evaluation::MethodAudit::Parceling(a) => Some(a.drawn_labels.len()),
            _ => None,
        })
        .sum();
    assert_eq!(drawn, rejects);
    assert!(drawn > 0);

    // Default configuration keeps results lean.
    let lean = acceptance_sweep(&base_config()).unwrap();
    assert!(lean.audits.is_empty());
}
