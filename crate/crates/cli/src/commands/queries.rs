use std::path::PathBuf;

use irdp::query::validate_query;
use irdp::{QueryDataset, QuerySession, QuerySessionSnapshot, RenyiOrder};
use serde::{Deserialize, Serialize};

use super::{window, StreamOptions};
use crate::artifacts::{float, Artifacts};
use crate::config;
use crate::error::{config_err, failed, CliError};
use crate::snapshot::{self, Snapshot};

const KIND: &str = "queries";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueriesConfig {
    /// Headed CSV, one row per point; an optional `id` column names points.
    dataset: PathBuf,
    order: f64,
    sigma: f64,
    budget: f64,
    seed: u64,
    queries: Vec<QuerySpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum QuerySpec {
    /// `q(X_i)` is the named column.
    Column(String),
    /// `q(X_i)` given point by point.
    Values(Vec<f64>),
    /// `1[X_i[c] > a / n]` for the previous answer `a`; threshold 0.5 before any answer.
    AboveLastMean(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SessionState {
    session: QuerySessionSnapshot,
    last_answer: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    rounds: u64,
    active_count: usize,
    norm_budget: f64,
    warm_up_rounds: u64,
    max_individual_rho: f64,
}

enum Prepared {
    Fixed(Vec<f64>),
    Adaptive(usize),
}

fn prepare(spec: &QuerySpec, data: &QueryDataset, index: usize) -> Result<Prepared, CliError> {
    let column = |name: &str| {
        data.column_index(name)
            .ok_or_else(|| CliError::Config(format!("query {}: no column named {name:?}", index + 1)))
    };
    let fixed = match spec {
        QuerySpec::Column(name) => {
            let c = column(name)?;
            data.rows().iter().map(|r| r[c]).collect()
        }
        QuerySpec::Values(v) => {
            if v.len() != data.len() {
                return Err(CliError::Config(format!(
                    "query {}: {} values for {} points",
                    index + 1,
                    v.len(),
                    data.len()
                )));
            }
            v.clone()
        }
        QuerySpec::AboveLastMean(name) => return Ok(Prepared::Adaptive(column(name)?)),
    };
    validate_query(&fixed).map_err(|e| CliError::Config(format!("query {}: {e}", index + 1)))?;
    Ok(Prepared::Fixed(fixed))
}

pub fn run(opts: &StreamOptions) -> Result<bool, CliError> {
    let loaded = config::load::<QueriesConfig>(&opts.config)?;
    let cfg = &loaded.body;
    let path = loaded.resolve(&cfg.dataset);
    let file = std::fs::File::open(&path)
        .map_err(|e| CliError::Config(format!("unreadable dataset {}: {e}", path.display())))?;
    let data = QueryDataset::from_csv(file)
        .map_err(|e| CliError::Config(format!("unreadable dataset {}: {e}", path.display())))?;
    let queries = cfg
        .queries
        .iter()
        .enumerate()
        .map(|(i, q)| prepare(q, &data, i))
        .collect::<Result<Vec<_>, _>>()?;
    let order = RenyiOrder::new(cfg.order).map_err(config_err)?;
    let fresh = QuerySession::new(data.len(), order, cfg.sigma, cfg.budget, cfg.seed).map_err(config_err)?;

    let (mut session, mut last_answer, start) = match &opts.resume {
        Some(p) => {
            let snap: Snapshot<SessionState> = snapshot::read(p, KIND)?;
            let s = &snap.state.session;
            if s.order != order
                || s.sigma != cfg.sigma
                || s.budget != cfg.budget
                || s.noise.seed != cfg.seed
                || s.ledger.len() != data.len()
            {
                return Err(CliError::Config("snapshot session differs from the config".into()));
            }
            let session = QuerySession::restore(snap.state.session).map_err(config_err)?;
            (session, snap.state.last_answer, snap.position)
        }
        None => (fresh, None, 0),
    };
    let range = window(queries.len(), start, opts.stop_after)?;

    let n = data.len() as f64;
    let mut rows = Vec::new();
    for t in range.clone() {
        let values = match &queries[t] {
            Prepared::Fixed(v) => v.clone(),
            Prepared::Adaptive(c) => {
                let threshold = last_answer.map_or(0.5, |a| a / n);
                data.rows().iter().map(|r| if r[*c] > threshold { 1.0 } else { 0.0 }).collect()
            }
        };
        let answer = session
            .answer_query(&values)
            .map_err(|e| failed(format!("query {}: {e}", t + 1)))?;
        last_answer = Some(answer.answer);
        rows.push(vec![answer.round.to_string(), float(answer.answer), answer.active_count.to_string()]);
    }

    let summary = Summary {
        rounds: session.rounds(),
        active_count: session.active_count(),
        norm_budget: session.norm_budget(),
        warm_up_rounds: session.warm_up_rounds(),
        max_individual_rho: (0..data.len())
            .filter_map(|i| session.individual_rho(i))
            .fold(0.0, f64::max),
    };
    let mut out = Artifacts::new(loaded.out_dir(opts.out_dir.clone()));
    out.csv("answers.csv", &["round", "answer", "active_count"], rows)?;
    out.json("queries_summary.json", &summary)?;
    if let Some(p) = &opts.snapshot_out {
        let state = SessionState {
            session: session.snapshot(),
            last_answer,
        };
        out.json_at(p.clone(), &Snapshot::new(KIND, range.end, state))?;
    }
    out.write()?;
    Ok(true)
}
