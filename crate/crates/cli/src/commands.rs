//! The three commands: `sweep`, `table1`, and `fit`.

use std::path::Path;

use rand::Rng;

use rejinf::data::{load_csv, TruthModel};
use rejinf::evaluation::{
    acceptance_sweep, monte_carlo_table1, SweepConfig, SweepInput, Table1Config,
};
use rejinf::logistic::{covariance, FitOptions};
use rejinf::mechanisms::{MechanismFamily, MechanismTemplate};
use rejinf::methods::financed_only;
use rejinf::seed::rng_from;
use rejinf::Error as CoreError;

use crate::config::RunConfig;

/// Exit code 2: configuration or input-data problem.
/// Exit code 3: numerical failure during the run.
#[derive(Debug)]
pub enum CmdError {
    Config(String),
    Numerical(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => 2,
            CmdError::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CmdError::Config(m) | CmdError::Numerical(m) => m,
        }
    }
}

fn classify(err: CoreError) -> CmdError {
    match &err {
        CoreError::Numerical { .. }
        | CoreError::NotConverged(_)
        | CoreError::SingularInformation(_)
        | CoreError::NonFinite(_) => CmdError::Numerical(err.to_string()),
        _ => CmdError::Config(err.to_string()),
    }
}

fn write_output(out_dir: &Path, name: &str, content: &str) -> Result<(), CmdError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CmdError::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| CmdError::Config(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CmdError> {
    section
        .as_ref()
        .ok_or_else(|| CmdError::Config(format!("config is missing the [{name}] section")))
}

/// Real-data mode: keep the financed (labeled) records and split them into
/// a training population and a held-out test set by a seeded shuffle.
fn provided_input_from_csv(
    config: &RunConfig,
    data_csv: &Path,
    test_fraction: f64,
) -> Result<SweepInput, CmdError> {
    let schema = require(&config.csv, "csv")?;
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CmdError::Config("test_fraction must lie in (0, 1)".into()));
    }
    let loaded = load_csv(data_csv, schema).map_err(classify)?;
    let financed_idx: Vec<usize> = (0..loaded.dataset.n())
        .filter(|&i| loaded.dataset.financed()[i])
        .collect();
    if financed_idx.len() < 4 {
        return Err(CmdError::Config(format!(
            "real-data sweep needs at least 4 financed records, found {}",
            financed_idx.len()
        )));
    }
    let mut order = financed_idx;
    let mut rng = rng_from(config.master_seed, "real-data-split", 0);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_test = ((order.len() as f64 * test_fraction).round() as usize)
        .clamp(2, order.len() - 2);
    let test = loaded.dataset.subset(&order[..n_test]).map_err(classify)?;
    let train = loaded.dataset.subset(&order[n_test..]).map_err(classify)?;
    Ok(SweepInput::Provided { train, test })
}

pub fn cmd_sweep(config: &RunConfig, out_dir: &Path) -> Result<(), CmdError> {
    let mechanism = require(&config.mechanism, "mechanism")?;
    let sweep = require(&config.sweep, "sweep")?;

    let input = match &sweep.data_csv {
        Some(path) => provided_input_from_csv(config, path, sweep.test_fraction)?,
        None => {
            let scenario = require(&config.scenario, "scenario")?;
            let (n_train, n_test) = match (sweep.n_train, sweep.n_test) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(CmdError::Config(
                        "synthetic sweeps need n_train and n_test in [sweep]".into(),
                    ))
                }
            };
            SweepInput::Synthetic {
                n_train,
                n_test,
                truth: scenario.truth.clone(),
                features: scenario.features.clone(),
            }
        }
    };

    let core_config = SweepConfig {
        input,
        mechanism: mechanism.clone(),
        rates: sweep.rates.clone(),
        methods: sweep.methods.clone(),
        bootstrap_resamples: sweep.bootstrap_resamples,
        replications: sweep.replications,
        master_seed: config.master_seed,
        fit: config.fit.clone().unwrap_or_default(),
        keep_audits: sweep.audit,
    };
    // Surface obvious recipe errors as config problems before computing.
    mechanism.to_kind().map_err(|e| CmdError::Config(e.to_string()))?;

    let result = acceptance_sweep(&core_config).map_err(classify)?;
    write_output(out_dir, "sweep.csv", &result.to_csv())?;
    if sweep.audit {
        write_output(out_dir, "augmentation_audit.csv", &result.augmentation_audit_csv())?;
        write_output(out_dir, "parceling_audit.csv", &result.parceling_audit_csv())?;
    }

    if let Some(caveat) = &result.caveat {
        println!("note: {caveat}");
    }
    println!();
    println!(
        "{:<18} {:>6} {:>9} {:>9} {:>9} {:>10}",
        "method", "rate", "gini", "lo", "hi", "param_l2"
    );
    for row in &result.rows {
        let param = row
            .param_l2
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<18} {:>6.2} {:>9.4} {:>9.4} {:>9.4} {:>10}",
            row.method.as_str(),
            row.rate,
            row.gini,
            row.lo,
            row.hi,
            param
        );
    }
    Ok(())
}

pub fn cmd_table1(config: &RunConfig, out_dir: &Path) -> Result<(), CmdError> {
    let scenario = require(&config.scenario, "scenario")?;
    let mechanism = require(&config.mechanism, "mechanism")?;
    let section = require(&config.table1, "table1")?;

    let theta = match &scenario.truth {
        TruthModel::Logistic { theta } => theta.clone(),
        _ => {
            return Err(CmdError::Config(
                "table1 requires [scenario] truth of kind 'logistic' (the well-specified arm)"
                    .into(),
            ))
        }
    };
    if mechanism.kind != MechanismFamily::MarStochastic {
        return Err(CmdError::Config(
            "table1 requires a mar_stochastic [mechanism] (its MNAR cell is derived from it)"
                .into(),
        ));
    }
    let mnar = MechanismTemplate {
        kind: MechanismFamily::Mnar,
        target_rate: mechanism.target_rate,
        floor: mechanism.floor,
        default_penalty: Some(section.mnar_default_penalty),
        pilot_fraction: mechanism.pilot_fraction,
    };

    let core_config = Table1Config {
        n: section.n,
        replications: section.replications,
        well_truth: scenario.truth.clone(),
        mis_truth: TruthModel::LogisticQuadratic { theta, curvature: section.curvature },
        features: scenario.features.clone(),
        mar: mechanism.clone(),
        mnar,
        pseudo_true_n: section.pseudo_true_n,
        master_seed: config.master_seed,
        fit: config.fit.clone().unwrap_or_default(),
    };
    let verdict = monte_carlo_table1(&core_config).map_err(classify)?;
    write_output(out_dir, "table1.csv", &verdict.to_csv())?;

    println!();
    println!(
        "{:<22} {:>11} {:>10} {:>12} {:>15}",
        "cell", "bias_equal", "max|z|", "trace_ratio", "variance_equal"
    );
    for cell in &verdict.cells {
        println!(
            "{:<22} {:>11} {:>10.2} {:>12.3} {:>15}",
            format!("{:?}/{:?}", cell.spec, cell.mechanism).to_lowercase(),
            cell.bias_equal,
            cell.max_abs_z,
            cell.trace_ratio,
            cell.variance_equal
        );
    }
    Ok(())
}

pub fn cmd_fit(config: &RunConfig, data_path: &Path, out_dir: &Path) -> Result<(), CmdError> {
    let schema = require(&config.csv, "csv")?;
    let fit_options: FitOptions = config.fit.clone().unwrap_or_default();

    let loaded = load_csv(data_path, schema).map_err(classify)?;
    let dataset = loaded.dataset;
    let scorer = financed_only(&dataset, &fit_options).map_err(classify)?;
    let theta = scorer.logistic_theta().expect("financed_only is logistic");

    let (x, y, _) = dataset.financed_design();
    let cov = covariance(
        match &scorer.model {
            rejinf::methods::ScorerModel::Logistic(m) => m,
            _ => unreachable!(),
        },
        &x,
        &y,
        &vec![1.0; y.len()],
    )
    .map_err(classify)?;

    let mut names = vec!["intercept".to_string()];
    names.extend(schema.features.iter().cloned());

    let mut csv = String::from("coefficient,estimate,se_model,se_sandwich\n");
    println!(
        "{:<20} {:>12} {:>12} {:>12}",
        "coefficient", "estimate", "se_model", "se_sandwich"
    );
    for (j, name) in names.iter().enumerate() {
        let se_model = cov.model_based[[j, j]].sqrt();
        let se_sandwich = cov.sandwich[[j, j]].sqrt();
        println!("{:<20} {:>12.6} {:>12.6} {:>12.6}", name, theta[j], se_model, se_sandwich);
        csv.push_str(&format!("{},{},{},{}\n", name, theta[j], se_model, se_sandwich));
    }
    write_output(out_dir, "coefficients.csv", &csv)?;
    println!(
        "\nfinanced records: {} of {} applicants",
        dataset.n_financed(),
        dataset.n()
    );
    Ok(())
}
