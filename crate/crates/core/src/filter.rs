//! Stopping rules for fully adaptive composition.
//!
//! [`RdpFilter`] continues while the running sum of per-round Renyi losses
//! stays within a fixed budget. [`DpFilter`] admits pure-DP rounds while
//! `½ Σ ε_t²` stays within the zCDP level that implies the global
//! `(ε_g, δ_g)` target. Both are values: a check returns the decision
//! together with the successor state and never mutates the receiver. A
//! rejected value is not committed, so the caller may propose a cheaper
//! computation for the same round.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rdp::{check_delta, zcdp_budget_for_dp, RenyiOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FilterDecision {
    #[serde(rename = "CONT")]
    Continue,
    Halt,
}

impl FilterDecision {
    pub fn is_continue(self) -> bool {
        self == FilterDecision::Continue
    }
}

/// Neumaier-compensated running sum. Accumulating many equal losses lands on
/// the correctly rounded total instead of drifting by an ulp per step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn value(self) -> f64 {
        self.sum + self.compensation
    }

    #[must_use]
    pub fn plus(self, x: f64) -> Self {
        let t = self.sum + x;
        let lost = if self.sum.abs() >= x.abs() {
            (self.sum - t) + x
        } else {
            (x - t) + self.sum
        };
        Self {
            sum: t,
            compensation: self.compensation + lost,
        }
    }
}

fn check_loss(value: f64, what: &str) -> Result<()> {
    if !value.is_finite() || value < 0.0 {
        return Err(invalid(format!("{what} must be finite and >= 0, got {value}")));
    }
    Ok(())
}

/// Renyi filter state at a single order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpFilter {
    order: RenyiOrder,
    budget: f64,
    consumed: CompensatedSum,
    history_len: usize,
}

impl RdpFilter {
    pub fn new(order: RenyiOrder, budget: f64) -> Result<Self> {
        check_loss(budget, "budget")?;
        Ok(Self {
            order,
            budget,
            consumed: CompensatedSum::default(),
            history_len: 0,
        })
    }

    pub fn order(&self) -> RenyiOrder {
        self.order
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Sum of all accepted losses.
    pub fn consumed(&self) -> f64 {
        self.consumed.value()
    }

    /// State of the running sum, for reproducing the filter's arithmetic.
    pub fn running(&self) -> CompensatedSum {
        self.consumed
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    /// `Continue` iff `consumed + next_rho <= budget`; only then is the loss committed.
    pub fn check(&self, next_rho: f64) -> Result<(FilterDecision, RdpFilter)> {
        check_loss(next_rho, "rho")?;
        let total = self.consumed.plus(next_rho);
        if total.value() <= self.budget {
            let next = RdpFilter {
                consumed: total,
                history_len: self.history_len + 1,
                ..self.clone()
            };
            Ok((FilterDecision::Continue, next))
        } else {
            Ok((FilterDecision::Halt, self.clone()))
        }
    }

    /// In-place variant of [`RdpFilter::check`].
    pub fn submit(&mut self, next_rho: f64) -> Result<FilterDecision> {
        let (decision, next) = self.check(next_rho)?;
        *self = next;
        Ok(decision)
    }
}

/// Filter for adaptively chosen pure-DP rounds under a global `(ε_g, δ_g)` budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpFilter {
    eps_budget: f64,
    delta_budget: f64,
    zcdp_budget: f64,
    consumed_half_sq: CompensatedSum,
    history_len: usize,
}

impl DpFilter {
    pub fn new(eps_budget: f64, delta_budget: f64) -> Result<Self> {
        let zcdp_budget = zcdp_budget_for_dp(eps_budget, delta_budget)?;
        Ok(Self {
            eps_budget,
            delta_budget,
            zcdp_budget,
            consumed_half_sq: CompensatedSum::default(),
            history_len: 0,
        })
    }

    pub fn eps_budget(&self) -> f64 {
        self.eps_budget
    }

    pub fn delta_budget(&self) -> f64 {
        self.delta_budget
    }

    pub fn zcdp_budget(&self) -> f64 {
        self.zcdp_budget
    }

    pub fn consumed_half_sq(&self) -> f64 {
        self.consumed_half_sq.value()
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn check(&self, next_eps: f64) -> Result<(FilterDecision, DpFilter)> {
        check_loss(next_eps, "epsilon")?;
        let total = self.consumed_half_sq.plus(0.5 * next_eps * next_eps);
        if total.value() <= self.zcdp_budget {
            let next = DpFilter {
                consumed_half_sq: total,
                history_len: self.history_len + 1,
                ..self.clone()
            };
            Ok((FilterDecision::Continue, next))
        } else {
            Ok((FilterDecision::Halt, self.clone()))
        }
    }

    pub fn submit(&mut self, next_eps: f64) -> Result<FilterDecision> {
        let (decision, next) = self.check(next_eps)?;
        *self = next;
        Ok(decision)
    }
}

/// Total epsilon of `k` adaptively composed `eps`-DP rounds, as read off the
/// DP filter's stopping condition: `½kε² + ε·sqrt(2k·ln(1/δ))`.
pub fn fixed_rate_equivalence(k: usize, eps: f64, delta: f64) -> Result<f64> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    check_loss(eps, "epsilon")?;
    check_delta(delta)?;
    let k = k as f64;
    Ok(0.5 * k * eps * eps + eps * (2.0 * k * (1.0 / delta).ln()).sqrt())
}
