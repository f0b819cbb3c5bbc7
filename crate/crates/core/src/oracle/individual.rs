//! Exact check of individual filtering: every point carries its own filter,
//! the mechanism of each round only sees the active points, and removing any
//! single point must move the output distribution by at most the budget.

use serde::{Deserialize, Serialize};

use super::plan::{check_alphabet, decode_prefix, prefix_count, prefix_index, PathTable, BUDGET_TOLERANCE};
use crate::error::{invalid, Error, Result};
use crate::ledger::{IndividualLedger, RoundProposal};
use crate::rdp::{renyi_divergence_slices, DiscreteDistribution, Divergence, RenyiOrder};

/// A mechanism over datasets drawn from a finite universe `{0, …, u−1}` with
/// at most `max_size` points. Its output depends on the dataset only through
/// the per-value counts.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualPlan {
    universe: usize,
    max_size: usize,
    alphabet: Vec<usize>,
    configs: Vec<Vec<usize>>,
    /// `tables[t][config][prefix]`.
    tables: Vec<Vec<Vec<DiscreteDistribution>>>,
    order: RenyiOrder,
    budget: f64,
}

fn count_vectors(universe: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..universe {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                let used: usize = prefix.iter().sum();
                (0..=max_size - used).map(move |c| {
                    let mut next = prefix.clone();
                    next.push(c);
                    next
                })
            })
            .collect();
    }
    out
}

impl IndividualPlan {
    /// Builds the tables from `f(round, counts, prefix)`.
    pub fn from_fn(
        universe: usize,
        max_size: usize,
        alphabet: Vec<usize>,
        order: RenyiOrder,
        budget: f64,
        mut f: impl FnMut(usize, &[usize], &[usize]) -> Result<DiscreteDistribution>,
    ) -> Result<Self> {
        check_alphabet(&alphabet)?;
        if universe == 0 || max_size == 0 {
            return Err(invalid("universe and dataset size must be positive"));
        }
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(invalid("budget must be finite and >= 0"));
        }
        let configs = count_vectors(universe, max_size);
        if configs.len() > 4096 {
            return Err(Error::SizeLimit(format!("{} dataset configurations", configs.len())));
        }
        let mut tables = Vec::with_capacity(alphabet.len());
        for t in 0..alphabet.len() {
            let mut per_config = Vec::with_capacity(configs.len());
            for counts in &configs {
                let per_prefix = (0..prefix_count(&alphabet, t))
                    .map(|p| {
                        let d = f(t, counts, &decode_prefix(&alphabet, t, p))?;
                        if d.len() != alphabet[t] {
                            return Err(Error::DimensionMismatch {
                                expected: alphabet[t],
                                got: d.len(),
                            });
                        }
                        Ok(d)
                    })
                    .collect::<Result<Vec<_>>>()?;
                per_config.push(per_prefix);
            }
            tables.push(per_config);
        }
        Ok(Self {
            universe,
            max_size,
            alphabet,
            configs,
            tables,
            order,
            budget,
        })
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn alphabet(&self) -> &[usize] {
        &self.alphabet
    }

    pub fn order(&self) -> RenyiOrder {
        self.order
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    fn config_index(&self, counts: &[usize]) -> usize {
        self.configs
            .iter()
            .position(|c| c == counts)
            .expect("count vector within the size limit")
    }

    fn distribution(&self, t: usize, counts: &[usize], prefix: &[usize]) -> &DiscreteDistribution {
        &self.tables[t][self.config_index(counts)][prefix_index(&self.alphabet, prefix)]
    }

    /// Individual loss of a point with value `value` in round `t` after
    /// `prefix`: the supremum over datasets of size at most `max_size` that
    /// contain the value, of both removal directions.
    pub fn individual_rho(&self, t: usize, prefix: &[usize], value: usize) -> Divergence {
        let p = prefix_index(&self.alphabet, prefix);
        let mut worst = Divergence::Finite(0.0);
        for (ci, counts) in self.configs.iter().enumerate() {
            if counts[value] == 0 {
                continue;
            }
            let mut removed = counts.clone();
            removed[value] -= 1;
            let with = self.tables[t][ci][p].probs();
            let without = self.tables[t][self.config_index(&removed)][p].probs();
            for (a, b) in [(with, without), (without, with)] {
                let d = renyi_divergence_slices(a, b, self.order).expect("alphabets agree");
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Exact output distribution of individually filtered composition on `dataset`.
    pub fn joint_distribution(&self, dataset: &[usize]) -> Result<PathTable> {
        if dataset.len() > self.max_size {
            return Err(invalid(format!("dataset of size {} exceeds {}", dataset.len(), self.max_size)));
        }
        if let Some(&v) = dataset.iter().find(|&&v| v >= self.universe) {
            return Err(invalid(format!("value {v} outside the universe")));
        }
        let len: usize = self.alphabet.iter().product();
        let mut probs = vec![0.0; len];
        let ledger = IndividualLedger::new(self.order, self.budget, dataset.len())?;
        let mut prefix = Vec::new();
        self.walk(dataset, 0, &mut prefix, 1.0, ledger, &mut probs)?;
        PathTable::new(self.alphabet.clone(), probs)
    }

    fn walk(
        &self,
        dataset: &[usize],
        t: usize,
        prefix: &mut Vec<usize>,
        weight: f64,
        mut ledger: IndividualLedger,
        out: &mut [f64],
    ) -> Result<()> {
        if t == self.alphabet.len() {
            out[prefix_index(&self.alphabet, prefix)] = weight;
            return Ok(());
        }
        let losses = dataset
            .iter()
            .map(|&v| match self.individual_rho(t, prefix, v) {
                Divergence::Finite(rho) => rho,
                // Larger than any budget, so the point drops out.
                Divergence::Unbounded => f64::MAX,
            })
            .collect();
        let pending = ledger.run_round(&RoundProposal::new(losses)?)?;
        let mut counts = vec![0; self.universe];
        for i in pending.active_indices() {
            counts[dataset[i]] += 1;
        }
        let dist = self.distribution(t, &counts, prefix).clone();
        for (a, &p) in dist.probs().iter().enumerate() {
            prefix.push(a);
            self.walk(dataset, t + 1, prefix, weight * p, ledger.clone(), out)?;
            prefix.pop();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalCheck {
    pub dataset: Vec<usize>,
    pub removed: usize,
    /// `D_α(A(S) ‖ A(S⁻ⁱ))`.
    pub forward: Divergence,
    /// `D_α(A(S⁻ⁱ) ‖ A(S))`.
    pub backward: Divergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualReport {
    pub order: RenyiOrder,
    pub budget: f64,
    pub checks: usize,
    pub max_divergence: Divergence,
    pub slack: f64,
    pub violations: Vec<RemovalCheck>,
    pub passed: bool,
}

/// Checks both removal directions for every dataset of full size and every point.
pub fn validate_individual_filter(plan: &IndividualPlan) -> Result<IndividualReport> {
    let n = plan.max_size;
    let total = plan.universe.pow(n as u32);
    let mut checks = 0;
    let mut max = Divergence::Finite(0.0);
    let mut violations = Vec::new();
    for code in 0..total {
        let dataset = decode_prefix(&vec![plan.universe; n], n, code);
        let full = plan.joint_distribution(&dataset)?;
        for i in 0..n {
            let mut reduced = dataset.clone();
            reduced.remove(i);
            let partial = plan.joint_distribution(&reduced)?;
            let forward = renyi_divergence_slices(full.probs(), partial.probs(), plan.order)?;
            let backward = renyi_divergence_slices(partial.probs(), full.probs(), plan.order)?;
            checks += 1;
            max = max.max(forward).max(backward);
            if forward.max(backward).value() > plan.budget + BUDGET_TOLERANCE {
                violations.push(RemovalCheck {
                    dataset: dataset.clone(),
                    removed: i,
                    forward,
                    backward,
                });
            }
        }
    }
    Ok(IndividualReport {
        order: plan.order,
        budget: plan.budget,
        checks,
        max_divergence: max,
        slack: plan.budget - max.value(),
        passed: violations.is_empty(),
        violations,
    })
}
