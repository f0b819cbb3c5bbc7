//! Adaptive answering of bounded linear queries with individual accounting.
//!
//! Each query is supplied already evaluated on every point, `q_t(X_i) ∈ [0,1]`,
//! so the caller is free to pick the next query from earlier answers. The
//! answer is the sum over the active set plus one `N(0, σ²)` draw. Point `i`
//! stays active while `Σ_t q_t(X_i)² <= 2Bσ²/α`, which is the individual
//! Renyi filter at budget `B` for losses `α q²/(2σ²)`.
//!
//! The session's ledger is kept in squared-norm units (losses `q²` against
//! budget `2Bσ²/α`): the active-set rule is then evaluated on exactly the
//! quantities that define it, instead of after a lossy rescaling.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ledger::{IndividualLedger, RoundProposal};
use crate::noise::{GaussianNoise, NoiseCheckpoint, NoiseSource};
use crate::rdp::{check_delta, RenyiOrder};

/// Points with numeric features, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryDataset {
    ids: Vec<String>,
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl QueryDataset {
    pub fn new(ids: Vec<String>, columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: ids.len(),
            });
        }
        if let Some(row) = rows.iter().find(|r| r.len() != columns.len()) {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                got: row.len(),
            });
        }
        Ok(Self { ids, columns, rows })
    }

    /// Reads a headed CSV. A column named `id` supplies point ids; every other
    /// column must be numeric.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
        let id_col = headers.iter().position(|h| h == "id");
        let columns: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != id_col)
            .map(|(_, h)| h.to_string())
            .collect();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Data(e.to_string()))?;
            let mut row = Vec::with_capacity(columns.len());
            for (i, field) in record.iter().enumerate() {
                if Some(i) == id_col {
                    continue;
                }
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Data(format!("row {}: column {} is not numeric: {field:?}", line + 1, headers.get(i).unwrap_or("?")))
                })?;
                row.push(v);
            }
            ids.push(match id_col {
                Some(c) => record.get(c).unwrap_or_default().to_string(),
                None => line.to_string(),
            });
            rows.push(row);
        }
        Self::new(ids, columns, rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Evaluates a query on every point, rejecting values outside `[0, 1]`.
    pub fn evaluate(&self, query: impl Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
        let values: Vec<f64> = self.rows.iter().map(|r| query(r)).collect();
        validate_query(&values)?;
        Ok(values)
    }
}

/// Checks that every evaluation lies in `[0, 1]`. Values are never clipped.
pub fn validate_query(values: &[f64]) -> Result<()> {
    for (index, &v) in values.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::AtPoint {
                index,
                source: Box::new(invalid(format!("query value {v} outside [0, 1]"))),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryAnswer {
    /// 1-based round number.
    pub round: u64,
    pub answer: f64,
    pub active_count: usize,
}

/// A single-writer adaptive query session.
#[derive(Debug, Clone)]
pub struct QuerySession<N = GaussianNoise> {
    order: RenyiOrder,
    sigma: f64,
    budget: f64,
    ledger: IndividualLedger,
    noise: N,
}

/// Serializable state of a [`QuerySession`] driven by [`GaussianNoise`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySessionSnapshot {
    pub order: RenyiOrder,
    pub sigma: f64,
    pub budget: f64,
    pub ledger: IndividualLedger,
    pub noise: NoiseCheckpoint,
}

impl QuerySession<GaussianNoise> {
    pub fn new(n: usize, order: RenyiOrder, sigma: f64, budget: f64, seed: u64) -> Result<Self> {
        Self::with_noise(n, order, sigma, budget, GaussianNoise::new(seed))
    }

    pub fn snapshot(&self) -> QuerySessionSnapshot {
        QuerySessionSnapshot {
            order: self.order,
            sigma: self.sigma,
            budget: self.budget,
            ledger: self.ledger.clone(),
            noise: self.noise.checkpoint(),
        }
    }

    pub fn restore(snapshot: QuerySessionSnapshot) -> Result<Self> {
        let mut session = Self::new(
            snapshot.ledger.len(),
            snapshot.order,
            snapshot.sigma,
            snapshot.budget,
            snapshot.noise.seed,
        )?;
        if snapshot.ledger.budget() != session.ledger.budget() {
            return Err(Error::State("snapshot ledger budget does not match its session parameters".into()));
        }
        session.ledger = snapshot.ledger;
        session.noise = GaussianNoise::restore(snapshot.noise);
        Ok(session)
    }
}

impl<N: NoiseSource> QuerySession<N> {
    pub fn with_noise(n: usize, order: RenyiOrder, sigma: f64, budget: f64, noise: N) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("sigma must be positive, got {sigma}")));
        }
        if !(budget >= 0.0 && budget.is_finite()) {
            return Err(invalid(format!("budget must be finite and >= 0, got {budget}")));
        }
        let norm_budget = 2.0 * budget * sigma * sigma / order.alpha();
        Ok(Self {
            order,
            sigma,
            budget,
            ledger: IndividualLedger::new(order, norm_budget, n)?,
            noise,
        })
    }

    pub fn order(&self) -> RenyiOrder {
        self.order
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// `2Bσ²/α`, the squared-norm allowance of each point.
    pub fn norm_budget(&self) -> f64 {
        self.ledger.budget()
    }

    /// Number of rounds answered while every point is guaranteed active:
    /// `⌊2Bσ²/α⌋`.
    pub fn warm_up_rounds(&self) -> u64 {
        self.norm_budget().floor() as u64
    }

    pub fn rounds(&self) -> u64 {
        self.ledger.round()
    }

    pub fn active_mask(&self) -> &[bool] {
        self.ledger.active_mask()
    }

    pub fn active_count(&self) -> usize {
        self.ledger.active_count()
    }

    /// Accumulated `Σ q²` of every point.
    pub fn spent_norms(&self) -> &[f64] {
        self.ledger.cumulative()
    }

    /// Renyi loss accumulated by point `i` at the session order.
    pub fn individual_rho(&self, i: usize) -> Option<f64> {
        let scale = self.order.alpha() / (2.0 * self.sigma * self.sigma);
        self.ledger.cumulative_of(i).map(|s| s * scale)
    }

    pub fn answer_query(&mut self, q_values: &[f64]) -> Result<QueryAnswer> {
        validate_query(q_values)?;
        let proposal = RoundProposal::new(q_values.iter().map(|q| q * q).collect())?;
        let pending = self.ledger.begin_round(&proposal)?;
        let signal: f64 = q_values
            .iter()
            .zip(pending.active_mask())
            .filter(|(_, &a)| a)
            .map(|(q, _)| q)
            .sum();
        let answer = signal + self.noise.normal(self.sigma);
        let active_count = pending.active_count();
        self.ledger.commit_round(pending)?;
        Ok(QueryAnswer {
            round: self.ledger.round(),
            answer,
            active_count,
        })
    }

    /// Fraction of `n_trials` re-simulated answers to `q_values` that land
    /// within `sqrt(2 ln(1/δ))·σ` of the true sum. Requires every point to
    /// remain active after this query. Does not touch the session.
    pub fn accuracy_probe(&self, q_values: &[f64], n_trials: usize, delta: f64, seed: u64) -> Result<f64> {
        validate_query(q_values)?;
        check_delta(delta)?;
        if n_trials == 0 {
            return Err(invalid("n_trials must be positive"));
        }
        if q_values.len() != self.ledger.len() {
            return Err(Error::DimensionMismatch {
                expected: self.ledger.len(),
                got: q_values.len(),
            });
        }
        let proposal = RoundProposal::new(q_values.iter().map(|q| q * q).collect())?;
        let pending = self.ledger.begin_round(&proposal)?;
        if pending.active_count() != self.ledger.len() {
            return Err(Error::Precondition(format!(
                "accuracy bound needs every point active; {} of {} are",
                pending.active_count(),
                self.ledger.len()
            )));
        }
        let truth: f64 = q_values.iter().sum();
        let radius = (2.0 * (1.0 / delta).ln()).sqrt() * self.sigma;
        let mut noise = GaussianNoise::new(seed);
        let hits = (0..n_trials)
            .filter(|_| {
                let answer = truth + noise.normal(self.sigma);
                (answer - truth).abs() <= radius
            })
            .count();
        Ok(hits as f64 / n_trials as f64)
    }
}
