use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::filter::{FilterDecision, RdpFilter};
use crate::rdp::{renyi_divergence_slices, DiscreteDistribution, Divergence, RenyiOrder};

pub const MAX_ALPHABET: usize = 16;
pub const MAX_ROUNDS: usize = 5;

/// Slack allowed on top of a budget when comparing exact divergences.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// An adaptive mechanism over finite alphabets: for each round, dataset and
/// history prefix, the distribution of the next output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MechanismSpec", into = "MechanismSpec")]
pub struct TableMechanism {
    alphabet: Vec<usize>,
    datasets: usize,
    /// `tables[t][d][prefix]` with prefixes in mixed radix, `a_1` most significant.
    tables: Vec<Vec<Vec<DiscreteDistribution>>>,
}

/// Declarative form used for JSON fixtures.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSpec {
    pub alphabet: Vec<usize>,
    /// `tables[round][dataset][prefix]`.
    pub tables: Vec<Vec<Vec<DiscreteDistribution>>>,
}

impl TryFrom<MechanismSpec> for TableMechanism {
    type Error = Error;

    fn try_from(spec: MechanismSpec) -> Result<Self> {
        TableMechanism::new(spec.alphabet, spec.tables)
    }
}

impl From<TableMechanism> for MechanismSpec {
    fn from(m: TableMechanism) -> Self {
        MechanismSpec {
            alphabet: m.alphabet,
            tables: m.tables,
        }
    }
}

pub(crate) fn check_alphabet(alphabet: &[usize]) -> Result<()> {
    if alphabet.is_empty() {
        return Err(invalid("at least one round is required"));
    }
    if alphabet.len() > MAX_ROUNDS {
        return Err(Error::SizeLimit(format!(
            "{} rounds exceed the limit of {MAX_ROUNDS}",
            alphabet.len()
        )));
    }
    if let Some(&m) = alphabet.iter().find(|&&m| m == 0 || m > MAX_ALPHABET) {
        return Err(Error::SizeLimit(format!(
            "alphabet size {m} outside 1..={MAX_ALPHABET}"
        )));
    }
    Ok(())
}

/// Number of distinct histories before round `t` (zero-based).
pub(crate) fn prefix_count(alphabet: &[usize], t: usize) -> usize {
    alphabet[..t].iter().product()
}

pub(crate) fn prefix_index(alphabet: &[usize], prefix: &[usize]) -> usize {
    prefix.iter().zip(alphabet).fold(0, |acc, (&a, &m)| acc * m + a)
}

pub(crate) fn decode_prefix(alphabet: &[usize], t: usize, mut index: usize) -> Vec<usize> {
    let mut out = vec![0; t];
    for s in (0..t).rev() {
        out[s] = index % alphabet[s];
        index /= alphabet[s];
    }
    out
}

impl TableMechanism {
    pub fn new(alphabet: Vec<usize>, tables: Vec<Vec<Vec<DiscreteDistribution>>>) -> Result<Self> {
        check_alphabet(&alphabet)?;
        if tables.len() != alphabet.len() {
            return Err(Error::DimensionMismatch {
                expected: alphabet.len(),
                got: tables.len(),
            });
        }
        let datasets = tables[0].len();
        if datasets == 0 {
            return Err(invalid("at least one dataset is required"));
        }
        for (t, per_dataset) in tables.iter().enumerate() {
            if per_dataset.len() != datasets {
                return Err(Error::DimensionMismatch {
                    expected: datasets,
                    got: per_dataset.len(),
                });
            }
            for per_prefix in per_dataset {
                if per_prefix.len() != prefix_count(&alphabet, t) {
                    return Err(Error::DimensionMismatch {
                        expected: prefix_count(&alphabet, t),
                        got: per_prefix.len(),
                    });
                }
                if let Some(bad) = per_prefix.iter().find(|d| d.len() != alphabet[t]) {
                    return Err(Error::DimensionMismatch {
                        expected: alphabet[t],
                        got: bad.len(),
                    });
                }
            }
        }
        Ok(Self {
            alphabet,
            datasets,
            tables,
        })
    }

    /// Builds the tables from `f(round, dataset, prefix)`.
    pub fn from_fn(
        alphabet: Vec<usize>,
        datasets: usize,
        mut f: impl FnMut(usize, usize, &[usize]) -> Result<DiscreteDistribution>,
    ) -> Result<Self> {
        check_alphabet(&alphabet)?;
        let mut tables = Vec::with_capacity(alphabet.len());
        for t in 0..alphabet.len() {
            let mut per_dataset = Vec::with_capacity(datasets);
            for d in 0..datasets {
                let per_prefix = (0..prefix_count(&alphabet, t))
                    .map(|p| f(t, d, &decode_prefix(&alphabet, t, p)))
                    .collect::<Result<Vec<_>>>()?;
                per_dataset.push(per_prefix);
            }
            tables.push(per_dataset);
        }
        Self::new(alphabet, tables)
    }

    /// The same mechanism in every round, ignoring history.
    pub fn history_independent(rounds: &[Vec<DiscreteDistribution>]) -> Result<Self> {
        let alphabet: Vec<usize> = rounds
            .iter()
            .map(|per_dataset| per_dataset.first().map_or(0, DiscreteDistribution::len))
            .collect();
        let datasets = rounds.first().map_or(0, Vec::len);
        Self::from_fn(alphabet, datasets, |t, d, _| Ok(rounds[t][d].clone()))
    }

    pub fn alphabet(&self) -> &[usize] {
        &self.alphabet
    }

    pub fn rounds(&self) -> usize {
        self.alphabet.len()
    }

    pub fn datasets(&self) -> usize {
        self.datasets
    }

    pub fn distribution(&self, round: usize, dataset: usize, prefix: &[usize]) -> &DiscreteDistribution {
        &self.tables[round][dataset][prefix_index(&self.alphabet, prefix)]
    }

    /// `max` over `pairs` of `D_α(A_t(prefix, S) ‖ A_t(prefix, S'))`: the
    /// exact conditional per-round loss.
    pub fn step_loss(&self, round: usize, prefix: &[usize], pairs: &[(usize, usize)], order: RenyiOrder) -> Divergence {
        let p = prefix_index(&self.alphabet, prefix);
        pairs.iter().fold(Divergence::Finite(0.0), |acc, &(s, s2)| {
            let d = renyi_divergence_slices(
                self.tables[round][s][p].probs(),
                self.tables[round][s2][p].probs(),
                order,
            )
            .expect("alphabets agree across datasets");
            acc.max(d)
        })
    }
}

/// Exact probabilities of every output sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTable {
    radices: Vec<usize>,
    probs: Vec<f64>,
}

impl PathTable {
    pub fn new(radices: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let len: usize = radices.iter().product();
        if probs.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: probs.len(),
            });
        }
        Ok(Self { radices, probs })
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn prob(&self, path: &[usize]) -> f64 {
        self.probs[prefix_index(&self.radices, path)]
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        decode_prefix(&self.radices, self.radices.len(), index)
    }

    /// Sums out the final round.
    pub fn marginalize_last(&self) -> Result<PathTable> {
        let (&last, rest) = self
            .radices
            .split_last()
            .ok_or_else(|| Error::Precondition("cannot marginalize an empty table".into()))?;
        let probs = self.probs.chunks(last).map(|c| c.iter().sum()).collect();
        PathTable::new(rest.to_vec(), probs)
    }
}

/// Filter wired into a plan: stop once the next round's loss would push the
/// running sum past `budget`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub order: RenyiOrder,
    pub budget: f64,
}

/// A mechanism, the dataset pairs its losses are taken over, and an optional
/// filter. With a filter, a halted run emits the extra symbol `m_t` (one past
/// the mechanism's alphabet) in every remaining round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptivePlan {
    pub mechanism: TableMechanism,
    #[serde(default)]
    pub filter: Option<FilterSpec>,
    /// Ordered pairs `(S, S')`; empty means all ordered pairs of distinct datasets.
    #[serde(default)]
    pub pairs: Vec<(usize, usize)>,
}

impl AdaptivePlan {
    pub fn new(mechanism: TableMechanism) -> Self {
        Self {
            mechanism,
            filter: None,
            pairs: Vec::new(),
        }
    }

    pub fn with_filter(mut self, order: RenyiOrder, budget: f64) -> Self {
        self.filter = Some(FilterSpec { order, budget });
        self
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        if !self.pairs.is_empty() {
            return self.pairs.clone();
        }
        let n = self.mechanism.datasets();
        (0..n)
            .flat_map(|s| (0..n).filter(move |&s2| s2 != s).map(move |s2| (s, s2)))
            .collect()
    }

    pub fn radices(&self) -> Vec<usize> {
        let halt_symbol = usize::from(self.filter.is_some());
        self.mechanism.alphabet().iter().map(|m| m + halt_symbol).collect()
    }

    fn validate(&self) -> Result<()> {
        let n = self.mechanism.datasets();
        if let Some(&(s, s2)) = self.pairs.iter().find(|&&(s, s2)| s >= n || s2 >= n) {
            return Err(invalid(format!("pair ({s}, {s2}) refers to a missing dataset")));
        }
        if let Some(f) = &self.filter {
            RdpFilter::new(f.order, f.budget)?;
        }
        Ok(())
    }

    /// Filter decision for round `t` after history `prefix`, given the state so far.
    fn step(&self, filter: &RdpFilter, t: usize, prefix: &[usize], pairs: &[(usize, usize)]) -> Option<RdpFilter> {
        let spec = self.filter.as_ref()?;
        let rho = self.mechanism.step_loss(t, prefix, pairs, spec.order);
        match rho {
            // An unbounded loss can never fit the budget.
            Divergence::Unbounded => None,
            Divergence::Finite(rho) => match filter.check(rho).expect("finite nonnegative loss") {
                (FilterDecision::Continue, next) => Some(next),
                (FilterDecision::Halt, _) => None,
            },
        }
    }

    fn fresh_filter(&self) -> RdpFilter {
        match &self.filter {
            Some(f) => RdpFilter::new(f.order, f.budget).expect("validated"),
            None => RdpFilter::new(RenyiOrder::new(1.0).expect("1 is a valid order"), 0.0).expect("valid"),
        }
    }

    /// Running loss sums along `path` (one entry per round actually run).
    pub fn running_losses(&self, path: &[usize]) -> Vec<f64> {
        let pairs = self.pairs();
        let mut filter = self.fresh_filter();
        let mut out = Vec::new();
        for t in 0..self.mechanism.rounds() {
            if self.filter.is_some() {
                match self.step(&filter, t, &path[..t], &pairs) {
                    Some(next) => filter = next,
                    None => break,
                }
            }
            if path[t] >= self.mechanism.alphabet()[t] {
                break;
            }
            out.push(filter.consumed());
        }
        out
    }
}

/// Path tables of every dataset in `plan`, by recursion over prefixes.
pub fn enumerate_plan(plan: &AdaptivePlan) -> Result<Vec<PathTable>> {
    plan.validate()?;
    let radices = plan.radices();
    let len: usize = radices.iter().product();
    let datasets = plan.mechanism.datasets();
    let mut probs = vec![vec![0.0; len]; datasets];
    let pairs = plan.pairs();
    let mut prefix = Vec::with_capacity(radices.len());
    let weights = vec![1.0; datasets];
    walk(plan, &pairs, &radices, 0, &mut prefix, 0, &weights, plan.fresh_filter(), &mut probs);
    probs
        .into_iter()
        .map(|p| PathTable::new(radices.clone(), p))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn walk(
    plan: &AdaptivePlan,
    pairs: &[(usize, usize)],
    radices: &[usize],
    t: usize,
    prefix: &mut Vec<usize>,
    index: usize,
    weights: &[f64],
    filter: RdpFilter,
    out: &mut [Vec<f64>],
) {
    if t == radices.len() {
        for (table, &w) in out.iter_mut().zip(weights) {
            table[index] = w;
        }
        return;
    }
    let filter = if plan.filter.is_some() {
        match plan.step(&filter, t, prefix, pairs) {
            Some(next) => next,
            None => {
                // Halted: the halt symbol fills every remaining round.
                let index = radices[t..].iter().fold(index, |acc, &r| acc * r + (r - 1));
                for (table, &w) in out.iter_mut().zip(weights) {
                    table[index] = w;
                }
                return;
            }
        }
    } else {
        filter
    };
    let m = plan.mechanism.alphabet()[t];
    let mut next = vec![0.0; weights.len()];
    for a in 0..m {
        for (d, (n, &w)) in next.iter_mut().zip(weights).enumerate() {
            *n = w * plan.mechanism.distribution(t, d, prefix).probs()[a];
        }
        prefix.push(a);
        walk(plan, pairs, radices, t + 1, prefix, index * radices[t] + a, &next, filter.clone(), out);
        prefix.pop();
    }
}

pub fn exact_joint_distribution(plan: &AdaptivePlan, dataset: usize) -> Result<PathTable> {
    if dataset >= plan.mechanism.datasets() {
        return Err(invalid(format!("dataset {dataset} does not exist")));
    }
    Ok(enumerate_plan(plan)?.swap_remove(dataset))
}

/// `D_α(A(S) ‖ A(S'))` over full output sequences.
pub fn exact_composed_divergence(plan: &AdaptivePlan, s: usize, s_prime: usize, order: RenyiOrder) -> Result<Divergence> {
    let tables = enumerate_plan(plan)?;
    let (p, q) = (
        tables.get(s).ok_or_else(|| invalid(format!("dataset {s} does not exist")))?,
        tables
            .get(s_prime)
            .ok_or_else(|| invalid(format!("dataset {s_prime} does not exist")))?,
    );
    renyi_divergence_slices(p.probs(), q.probs(), order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDivergence {
    pub s: usize,
    pub s_prime: usize,
    pub divergence: Divergence,
}

/// The output sequence contributing most to a violating divergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterWitness {
    pub s: usize,
    pub s_prime: usize,
    pub path: Vec<usize>,
    pub prob_s: f64,
    pub prob_s_prime: f64,
    pub running_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub order: RenyiOrder,
    pub budget: f64,
    pub max_divergence: Divergence,
    /// `budget − max_divergence`; negative on violation.
    pub slack: f64,
    pub pairs: Vec<PairDivergence>,
    pub witness: Option<CounterWitness>,
    pub passed: bool,
}

/// Checks `D_α(A(S) ‖ A(S')) ≤ B + 1e-9` for every pair of a filtered plan.
pub fn validate_filter_budget(plan: &AdaptivePlan) -> Result<FilterReport> {
    let spec = plan
        .filter
        .ok_or_else(|| Error::Precondition("plan has no filter".into()))?;
    let tables = enumerate_plan(plan)?;
    let mut pairs = Vec::new();
    let mut max = Divergence::Finite(0.0);
    let mut witness = None;
    for (s, s_prime) in plan.pairs() {
        let divergence = renyi_divergence_slices(tables[s].probs(), tables[s_prime].probs(), spec.order)?;
        max = max.max(divergence);
        if divergence.value() > spec.budget + BUDGET_TOLERANCE && witness.is_none() {
            witness = Some(worst_path(plan, &tables[s], &tables[s_prime], s, s_prime, spec.order));
        }
        pairs.push(PairDivergence { s, s_prime, divergence });
    }
    Ok(FilterReport {
        order: spec.order,
        budget: spec.budget,
        max_divergence: max,
        slack: spec.budget - max.value(),
        pairs,
        passed: witness.is_none(),
        witness,
    })
}

fn worst_path(plan: &AdaptivePlan, p: &PathTable, q: &PathTable, s: usize, s_prime: usize, order: RenyiOrder) -> CounterWitness {
    let alpha = order.alpha();
    let score = |i: usize| {
        let (pi, qi) = (p.probs()[i], q.probs()[i]);
        if pi == 0.0 {
            f64::NEG_INFINITY
        } else if qi == 0.0 {
            f64::INFINITY
        } else {
            alpha * pi.ln() + (1.0 - alpha) * qi.ln()
        }
    };
    let best = (0..p.len())
        .max_by(|&a, &b| score(a).total_cmp(&score(b)))
        .unwrap_or(0);
    let path = p.decode(best);
    CounterWitness {
        s,
        s_prime,
        running_losses: plan.running_losses(&path),
        prob_s: p.probs()[best],
        prob_s_prime: q.probs()[best],
        path,
    }
}
