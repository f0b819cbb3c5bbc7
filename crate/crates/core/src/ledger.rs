//! Per-point privacy accounting.
//!
//! [`IndividualLedger`] runs one Renyi filter per data point and decides which
//! points may take part in each round. Rounds use a two-phase protocol:
//! [`IndividualLedger::begin_round`] computes the active set and the committed
//! (zeroed for inactive points) losses without touching the ledger, and
//! [`IndividualLedger::commit_round`] applies them once the round's mechanism
//! has actually run. Exclusion is permanent.
//!
//! [`OdometerState`] tracks an always-valid, `delta`-discretized upper bound on
//! accumulated loss by restarting a filter of budget `delta` whenever it halts.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rdp::RenyiOrder;

/// Proposed per-point losses for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RoundProposal {
    losses: Vec<f64>,
}

impl RoundProposal {
    pub fn new(losses: Vec<f64>) -> Result<Self> {
        for (index, &loss) in losses.iter().enumerate() {
            if !loss.is_finite() || loss < 0.0 {
                return Err(Error::AtPoint {
                    index,
                    source: Box::new(invalid(format!("loss must be finite and >= 0, got {loss}"))),
                });
            }
        }
        Ok(Self { losses })
    }

    pub fn zeros(n: usize) -> Self {
        Self { losses: vec![0.0; n] }
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }
}

impl TryFrom<Vec<f64>> for RoundProposal {
    type Error = Error;

    fn try_from(losses: Vec<f64>) -> Result<Self> {
        Self::new(losses)
    }
}

impl From<RoundProposal> for Vec<f64> {
    fn from(p: RoundProposal) -> Vec<f64> {
        p.losses
    }
}

/// Output of [`IndividualLedger::begin_round`], consumed by `commit_round`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingRound {
    round: u64,
    active: Vec<bool>,
    committed: RoundProposal,
}

impl PendingRound {
    /// The round this was issued for.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Losses as they will be committed: the proposal for active points, 0 otherwise.
    pub fn committed(&self) -> &RoundProposal {
        &self.committed
    }
}

/// Individual privacy filter over `n` points at a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualLedger {
    order: RenyiOrder,
    budget: f64,
    cumulative: Vec<f64>,
    active: Vec<bool>,
    round: u64,
}

impl IndividualLedger {
    pub fn new(order: RenyiOrder, budget: f64, n: usize) -> Result<Self> {
        if !budget.is_finite() || budget < 0.0 {
            return Err(invalid(format!("budget must be finite and >= 0, got {budget}")));
        }
        Ok(Self {
            order,
            budget,
            cumulative: vec![0.0; n],
            active: vec![true; n],
            round: 0,
        })
    }

    pub fn order(&self) -> RenyiOrder {
        self.order
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Number of committed rounds.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Accumulated loss of one point. Sensitive: it depends on that point's data.
    pub fn cumulative_of(&self, i: usize) -> Option<f64> {
        self.cumulative.get(i).copied()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Active set for the next round: points still active whose filter
    /// continues with the proposed loss.
    pub fn begin_round(&self, proposal: &RoundProposal) -> Result<PendingRound> {
        if proposal.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: proposal.len(),
            });
        }
        let active: Vec<bool> = self
            .cumulative
            .iter()
            .zip(&self.active)
            .zip(proposal.losses())
            .map(|((&spent, &was_active), &loss)| was_active && spent + loss <= self.budget)
            .collect();
        let losses = proposal
            .losses()
            .iter()
            .zip(&active)
            .map(|(&loss, &a)| if a { loss } else { 0.0 })
            .collect();
        Ok(PendingRound {
            round: self.round,
            active,
            committed: RoundProposal { losses },
        })
    }

    pub fn commit_round(&mut self, pending: PendingRound) -> Result<()> {
        if pending.round != self.round {
            return Err(Error::State(format!(
                "pending round {} does not match ledger round {}",
                pending.round, self.round
            )));
        }
        if pending.active.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: pending.active.len(),
            });
        }
        let mut next = self.cumulative.clone();
        for (i, (&loss, &a)) in pending.committed.losses().iter().zip(&pending.active).enumerate() {
            if a && !self.active[i] {
                return Err(Error::State(format!("point {i} cannot re-enter after exclusion")));
            }
            if !a && loss != 0.0 {
                return Err(Error::State(format!("inactive point {i} carries loss {loss}")));
            }
            next[i] += loss;
            if next[i] > self.budget {
                return Err(Error::State(format!(
                    "committing round {} would put point {i} at {} > budget {}",
                    self.round, next[i], self.budget
                )));
            }
        }
        self.cumulative = next;
        self.active = pending.active;
        self.round += 1;
        Ok(())
    }

    /// `begin_round` followed directly by `commit_round`.
    pub fn run_round(&mut self, proposal: &RoundProposal) -> Result<PendingRound> {
        let pending = self.begin_round(proposal)?;
        self.commit_round(pending.clone())?;
        Ok(pending)
    }
}

/// Discretized privacy odometer for one loss stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdometerState {
    delta: f64,
    segments: u64,
    segment_consumed: f64,
    restart_round: u64,
    round: u64,
}

impl OdometerState {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid(format!("discretization must be positive, got {delta}")));
        }
        Ok(Self {
            delta,
            segments: 1,
            segment_consumed: 0.0,
            restart_round: 1,
            round: 0,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Current bound: `segments * delta`.
    pub fn bound(&self) -> f64 {
        self.segments as f64 * self.delta
    }

    /// `bound / delta`, always a positive integer.
    pub fn segments(&self) -> u64 {
        self.segments
    }

    /// Number of filter restarts so far.
    pub fn restarts(&self) -> u64 {
        self.segments - 1
    }

    pub fn segment_consumed(&self) -> f64 {
        self.segment_consumed
    }

    /// Round (1-based) at which the current segment started.
    pub fn restart_round(&self) -> u64 {
        self.restart_round
    }

    pub fn rounds_seen(&self) -> u64 {
        self.round
    }

    /// Feeds one loss. A loss that would push the segment over `delta` closes
    /// the segment and opens the next one.
    pub fn update(&self, rho: f64) -> Result<OdometerState> {
        if !rho.is_finite() || rho < 0.0 {
            return Err(invalid(format!("rho must be finite and >= 0, got {rho}")));
        }
        if rho > self.delta {
            return Err(Error::Precondition(format!(
                "rho {rho} exceeds the odometer discretization {}",
                self.delta
            )));
        }
        let mut next = self.clone();
        next.round += 1;
        let total = self.segment_consumed + rho;
        if total > self.delta {
            next.segments += 1;
            next.segment_consumed = rho;
            next.restart_round = next.round;
        } else {
            next.segment_consumed = total;
        }
        Ok(next)
    }
}

/// What each per-point loss measures.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountingMode {
    /// Supremum over all datasets containing the point. Valid for filtering.
    #[default]
    Supremum,
    /// Loss on the realized dataset only. Odometer readings remain valid,
    /// but these losses must never drive a filter.
    PerInstance,
}

impl AccountingMode {
    pub fn is_filterable(self) -> bool {
        self == AccountingMode::Supremum
    }
}

/// One odometer per data point, all with the same discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualOdometers {
    delta: f64,
    #[serde(default)]
    mode: AccountingMode,
    states: Vec<OdometerState>,
}

impl IndividualOdometers {
    pub fn new(delta: f64, n: usize) -> Result<Self> {
        Self::with_mode(delta, n, AccountingMode::Supremum)
    }

    /// Odometers whose losses are measured under `mode`.
    pub fn with_mode(delta: f64, n: usize, mode: AccountingMode) -> Result<Self> {
        let proto = OdometerState::new(delta)?;
        Ok(Self {
            delta,
            mode,
            states: vec![proto; n],
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mode(&self) -> AccountingMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[OdometerState] {
        &self.states
    }

    pub fn bound_of(&self, i: usize) -> Option<f64> {
        self.states.get(i).map(OdometerState::bound)
    }

    pub fn bounds(&self) -> Vec<f64> {
        self.states.iter().map(OdometerState::bound).collect()
    }

    pub fn update(&self, proposal: &RoundProposal) -> Result<IndividualOdometers> {
        if proposal.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: proposal.len(),
            });
        }
        let states = self
            .states
            .iter()
            .zip(proposal.losses())
            .enumerate()
            .map(|(index, (state, &rho))| {
                state.update(rho).map_err(|e| Error::AtPoint {
                    index,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            delta: self.delta,
            mode: self.mode,
            states,
        })
    }
}
