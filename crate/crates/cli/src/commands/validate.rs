use std::path::{Path, PathBuf};

use irdp::oracle::{run_validation_suite, FuzzConfig};
use serde::Deserialize;

use crate::artifacts::Artifacts;
use crate::config::{self, Loaded};
use crate::error::{failed, CliError};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidateConfig {
    #[serde(default)]
    fuzz: Option<FuzzConfig>,
}

pub fn run(config_path: Option<&Path>, out_dir: Option<PathBuf>) -> Result<bool, CliError> {
    let loaded = match config_path {
        Some(p) => config::load::<ValidateConfig>(p)?,
        None => config::parse::<ValidateConfig>(r#"{"schema_version": 1}"#, Path::new("."))?,
    };
    let fuzz = loaded.body.fuzz.clone().unwrap_or_default();
    check(&fuzz)?;
    let report = run_validation_suite(&fuzz).map_err(failed)?;

    println!(
        "fuzz: {} filter cases, {} individual cases, {} violations, max divergence/budget {:.6}",
        report.fuzz.cases,
        report.fuzz.individual_cases,
        report.fuzz.violations.len(),
        report.fuzz.max_budget_ratio
    );
    println!(
        "counterexamples: {}/{} strict violations, {} degenerate violations",
        report.counterexamples.iter().filter(|w| w.violation).count(),
        report.counterexamples.len(),
        report.degenerate.iter().filter(|w| w.violation).count()
    );
    println!(
        "gaussian: max abs error {:.3e} over {} points",
        report.gaussian.iter().map(|c| c.abs_error).fold(0.0, f64::max),
        report.gaussian.len()
    );
    println!("{}", if report.passed { "PASS" } else { "FAIL" });

    write(&loaded, out_dir, &report)?;
    Ok(report.passed)
}

fn check(fuzz: &FuzzConfig) -> Result<(), CliError> {
    if fuzz.max_alphabet < 2 || fuzz.max_rounds == 0 {
        return Err(CliError::Config("fuzz needs max_alphabet >= 2 and max_rounds >= 1".into()));
    }
    if fuzz.max_alphabet > irdp::oracle::MAX_ALPHABET || fuzz.max_rounds > irdp::oracle::MAX_ROUNDS {
        return Err(CliError::Config(format!(
            "fuzz plans are limited to alphabet {} and {} rounds",
            irdp::oracle::MAX_ALPHABET,
            irdp::oracle::MAX_ROUNDS
        )));
    }
    if fuzz.orders.iter().any(|a| !(*a >= 1.0 && a.is_finite())) {
        return Err(CliError::Config("fuzz orders must be finite and >= 1".into()));
    }
    if fuzz.budgets.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
        return Err(CliError::Config("fuzz budgets must be finite and >= 0".into()));
    }
    Ok(())
}

fn write(loaded: &Loaded<ValidateConfig>, out_dir: Option<PathBuf>, report: &impl serde::Serialize) -> Result<(), CliError> {
    let mut out = Artifacts::new(loaded.out_dir(out_dir));
    out.json("validation_report.json", report)?;
    out.write()
}
