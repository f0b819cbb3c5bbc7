//! Two-round instance on a single input bit showing that the plain running
//! sum of per-round Renyi losses is not a valid odometer.
//!
//! `A_1` emits one of a few non-negative reals. `A_2` is binary and is
//! calibrated after seeing `a_1` so that its own loss equals `a_1`. Given
//! `a_1`, the conditional moment of the total loss is
//! `Loss_1(a_1) · e^{(α−1)ρ_2}`, which beats `e^{(α−1)(ρ_1+ρ_2)}` whenever
//! `Loss_1(a_1)` is above its mean.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rdp::{log_sum_exp, renyi_divergence_slices, DiscreteDistribution, RenyiOrder};

/// Margin above which a violation counts as strict.
pub const VIOLATION_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleInstance {
    /// Output values of `A_1`, distinct and in `[0, ln 2)`.
    pub values: Vec<f64>,
    /// Law of `A_1` on input `0`.
    pub given_0: DiscreteDistribution,
    /// Law of `A_1` on input `1`.
    pub given_1: DiscreteDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub a1: f64,
    /// Probability of `a1` under input `1`.
    pub prob: f64,
    pub log_loss_1: f64,
    /// `P[A_2(a_1, 0) = 0]`; `A_2(a_1, 1)` is uniform.
    pub calibrated_bias: f64,
    pub rho_2: f64,
    /// `log E[Loss^{(2)} | a_1]` by enumeration of `a_2`.
    pub conditional_log_moment: f64,
    /// `(α−1)(ρ_1 + ρ_2)`.
    pub log_bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdometerWitness {
    pub order: RenyiOrder,
    pub rho_1: f64,
    /// `log E[Loss_1]`, equal to `(α−1)ρ_1` by construction.
    pub first_round_log_moment: f64,
    pub realizations: Vec<Realization>,
    /// Index of the realization with the largest margin, if it is a strict violation.
    pub witness: Option<usize>,
    pub violation: bool,
}

/// `D_α((r, 1−r) ‖ (½, ½))`.
fn binary_vs_uniform(r: f64, order: RenyiOrder) -> f64 {
    renyi_divergence_slices(&[r, 1.0 - r], &[0.5, 0.5], order)
        .expect("same length")
        .value()
}

/// `r ∈ [½, 1)` with `D_α((r, 1−r) ‖ (½, ½)) = target`, by bisection.
fn calibrate(target: f64, order: RenyiOrder) -> f64 {
    let (mut lo, mut hi) = (0.5, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if binary_vs_uniform(mid, order) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn odometer_counterexample(order: RenyiOrder, instance: &CounterexampleInstance) -> Result<OdometerWitness> {
    let alpha = order.alpha();
    if alpha <= 1.0 {
        return Err(Error::UnsupportedOrder(alpha));
    }
    let (p0, p1) = (instance.given_0.probs(), instance.given_1.probs());
    if p0.len() != instance.values.len() || p1.len() != instance.values.len() {
        return Err(Error::DimensionMismatch {
            expected: instance.values.len(),
            got: p0.len().min(p1.len()),
        });
    }
    for (j, &v) in instance.values.iter().enumerate() {
        if !(0.0..std::f64::consts::LN_2).contains(&v) {
            return Err(invalid(format!("value {v} outside [0, ln 2)")));
        }
        if instance.values[..j].contains(&v) {
            return Err(invalid(format!("value {v} repeated")));
        }
    }
    let rho_1 = renyi_divergence_slices(p0, p1, order)?;
    let rho_1 = match rho_1 {
        crate::rdp::Divergence::Finite(v) => v,
        crate::rdp::Divergence::Unbounded => {
            return Err(Error::Precondition("A_1 on input 0 is not dominated by input 1".into()))
        }
    };

    // log E_{a_1 ~ A_1(1)}[Loss_1], enumerated.
    let first_terms: Vec<f64> = p0
        .iter()
        .zip(p1)
        .filter(|(_, &q)| q > 0.0)
        .map(|(&p, &q)| q.ln() + alpha * (p.ln() - q.ln()))
        .collect();
    let first_round_log_moment = log_sum_exp(&first_terms);

    let mut realizations = Vec::new();
    for (j, &a1) in instance.values.iter().enumerate() {
        if p1[j] == 0.0 {
            continue;
        }
        let log_loss_1 = alpha * (p0[j].ln() - p1[j].ln());
        let r = calibrate(a1, order);
        let rho_2 = binary_vs_uniform(r, order);
        // E over a_2 ~ A_2(a_1, 1) of Loss_1 · Loss_2.
        let a2_given_0 = [r, 1.0 - r];
        let terms: Vec<f64> = a2_given_0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| 0.5f64.ln() + log_loss_1 + alpha * (p.ln() - 0.5f64.ln()))
            .collect();
        let conditional_log_moment = log_sum_exp(&terms);
        let log_bound = (alpha - 1.0) * (rho_1 + rho_2);
        realizations.push(Realization {
            a1,
            prob: p1[j],
            log_loss_1,
            calibrated_bias: r,
            rho_2,
            conditional_log_moment,
            log_bound,
            margin: conditional_log_moment - log_bound,
        });
    }
    let best = (0..realizations.len()).max_by(|&a, &b| realizations[a].margin.total_cmp(&realizations[b].margin));
    let witness = best.filter(|&i| realizations[i].margin > VIOLATION_MARGIN);
    Ok(OdometerWitness {
        order,
        rho_1,
        first_round_log_moment,
        realizations,
        violation: witness.is_some(),
        witness,
    })
}

/// Twenty instances: five orders times four biases of `A_1` on input `0`
/// against a uniform `A_1` on input `1`, with outputs `{0.05, 0.3}`.
pub fn counterexample_grid() -> Vec<(RenyiOrder, CounterexampleInstance)> {
    let mut out = Vec::new();
    for alpha in [1.5, 2.0, 4.0, 8.0, 16.0] {
        for bias in [0.6, 0.7, 0.8, 0.9] {
            out.push((
                RenyiOrder::new(alpha).expect("valid order"),
                CounterexampleInstance {
                    values: vec![0.05, 0.3],
                    given_0: DiscreteDistribution::new(vec![bias, 1.0 - bias]).expect("valid"),
                    given_1: DiscreteDistribution::new(vec![0.5, 0.5]).expect("valid"),
                },
            ));
        }
    }
    out
}

/// The grid's shape with `A_1` ignoring its input, so `ρ_1 = 0`.
pub fn degenerate_instance() -> CounterexampleInstance {
    let uniform = DiscreteDistribution::new(vec![0.5, 0.5]).expect("valid");
    CounterexampleInstance {
        values: vec![0.05, 0.3],
        given_0: uniform.clone(),
        given_1: uniform,
    }
}
