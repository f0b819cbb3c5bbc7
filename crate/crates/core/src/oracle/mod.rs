//! Exact validation of the accounting on small discrete instances.
//!
//! Plans are enumerated path by path, so every divergence here is computed,
//! not estimated. The Gaussian closed form is checked by quadrature.

mod counterexample;
mod fuzz;
mod gaussian;
mod individual;
mod plan;

pub use counterexample::{
    counterexample_grid, degenerate_instance, odometer_counterexample, CounterexampleInstance, OdometerWitness,
    Realization, VIOLATION_MARGIN,
};
pub use fuzz::{random_individual_plan, random_mechanism, run_fuzz, FuzzCase, FuzzConfig, FuzzReport};
pub use gaussian::{default_gaussian_grid, gaussian_grid, numeric_gaussian_divergence, GaussianCheck, QUADRATURE_TOLERANCE};
pub use individual::{validate_individual_filter, IndividualPlan, IndividualReport, RemovalCheck};
pub use plan::{
    enumerate_plan, exact_composed_divergence, exact_joint_distribution, validate_filter_budget, AdaptivePlan,
    CounterWitness, FilterReport, FilterSpec, MechanismSpec, PairDivergence, PathTable, TableMechanism,
    BUDGET_TOLERANCE, MAX_ALPHABET, MAX_ROUNDS,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Largest disagreement tolerated between closed form and quadrature.
pub const GAUSSIAN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub fuzz: FuzzReport,
    pub counterexamples: Vec<OdometerWitness>,
    pub degenerate: Vec<OdometerWitness>,
    pub gaussian: Vec<GaussianCheck>,
    pub fuzz_passed: bool,
    pub counterexamples_passed: bool,
    pub gaussian_passed: bool,
    pub passed: bool,
}

/// Fuzzed filter plans, the odometer counterexample grid, and the Gaussian grid.
pub fn run_validation_suite(fuzz: &FuzzConfig) -> Result<SuiteReport> {
    let fuzz = run_fuzz(fuzz)?;
    let counterexamples = counterexample_grid()
        .iter()
        .map(|(order, inst)| odometer_counterexample(*order, inst))
        .collect::<Result<Vec<_>>>()?;
    let degenerate_inst = degenerate_instance();
    let degenerate = counterexample_grid()
        .iter()
        .map(|(order, _)| *order)
        .collect::<Vec<_>>()
        .into_iter()
        .step_by(4)
        .map(|order| odometer_counterexample(order, &degenerate_inst))
        .collect::<Result<Vec<_>>>()?;
    let gaussian = default_gaussian_grid()?;

    let fuzz_passed = fuzz.passed;
    let counterexamples_passed =
        counterexamples.iter().all(|w| w.violation) && degenerate.iter().all(|w| !w.violation);
    let gaussian_passed = gaussian.iter().all(|c| c.abs_error <= GAUSSIAN_TOLERANCE);
    Ok(SuiteReport {
        fuzz,
        counterexamples,
        degenerate,
        gaussian,
        fuzz_passed,
        counterexamples_passed,
        gaussian_passed,
        passed: fuzz_passed && counterexamples_passed && gaussian_passed,
    })
}
