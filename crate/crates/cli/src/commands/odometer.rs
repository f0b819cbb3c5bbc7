use std::path::PathBuf;

use irdp::{AccountingMode, IndividualOdometers, RoundProposal};
use serde::{Deserialize, Serialize};

use super::{read_numeric_csv, window, StreamOptions};
use crate::artifacts::{float, Artifacts};
use crate::config;
use crate::error::{config_err, failed, CliError};
use crate::snapshot::{self, Snapshot};

const KIND: &str = "odometer";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OdometerConfig {
    /// Discretization step of every odometer.
    delta: f64,
    /// One row per round, one loss per point.
    #[serde(default)]
    rounds: Option<Vec<Vec<f64>>>,
    /// CSV whose header names the points and whose rows are rounds.
    #[serde(default)]
    rounds_csv: Option<PathBuf>,
    /// Rounds exported to `histogram.csv`; defaults to the last processed round.
    #[serde(default)]
    histogram_rounds: Option<Vec<u64>>,
    /// `supremum` (default) or `per_instance`.
    #[serde(default)]
    accounting: AccountingMode,
}

#[derive(Debug, Serialize)]
struct Summary {
    accounting: AccountingMode,
    filterable: bool,
    points: usize,
    delta: f64,
    rounds_seen: u64,
    max_bound: f64,
    mean_bound: f64,
    total_restarts: u64,
}

pub fn run(opts: &StreamOptions) -> Result<bool, CliError> {
    let loaded = config::load::<OdometerConfig>(&opts.config)?;
    let cfg = &loaded.body;
    let (ids, rounds) = match (&cfg.rounds, &cfg.rounds_csv) {
        (Some(r), None) => {
            let n = r.first().map_or(0, Vec::len);
            ((0..n).map(|i| i.to_string()).collect::<Vec<_>>(), r.clone())
        }
        (None, Some(p)) => read_numeric_csv(&loaded.resolve(p))?,
        _ => return Err(CliError::Config("give exactly one of rounds and rounds_csv".into())),
    };
    if let Some(t) = rounds.iter().position(|r| r.len() != ids.len()) {
        return Err(CliError::Config(format!(
            "round {} has {} losses, expected {}",
            t + 1,
            rounds[t].len(),
            ids.len()
        )));
    }
    let proposals = rounds
        .into_iter()
        .map(RoundProposal::new)
        .collect::<irdp::Result<Vec<_>>>()
        .map_err(config_err)?;
    let fresh = IndividualOdometers::with_mode(cfg.delta, ids.len(), cfg.accounting).map_err(config_err)?;

    let (mut state, start) = match &opts.resume {
        Some(path) => {
            let snap: Snapshot<IndividualOdometers> = snapshot::read(path, KIND)?;
            if snap.state.delta() != fresh.delta() || snap.state.len() != fresh.len() || snap.state.mode() != fresh.mode() {
                return Err(CliError::Config("snapshot odometers differ from the config".into()));
            }
            (snap.state, snap.position)
        }
        None => (fresh, 0),
    };
    let range = window(proposals.len(), start, opts.stop_after)?;
    let histogram_rounds = cfg
        .histogram_rounds
        .clone()
        .unwrap_or_else(|| vec![range.end as u64]);

    let mut bounds = Vec::new();
    let mut histogram = Vec::new();
    for t in range.clone() {
        let proposal = &proposals[t];
        state = state.update(proposal).map_err(|e| failed(format!("round {}: {e}", t + 1)))?;
        let round = (t + 1) as u64;
        for (i, id) in ids.iter().enumerate() {
            let bound = float(state.states()[i].bound());
            bounds.push(vec![round.to_string(), id.clone(), float(proposal.losses()[i]), bound.clone()]);
            if histogram_rounds.contains(&round) {
                histogram.push(vec![round.to_string(), id.clone(), bound]);
            }
        }
    }

    let all = state.bounds();
    let summary = Summary {
        accounting: state.mode(),
        filterable: state.mode().is_filterable(),
        points: state.len(),
        delta: state.delta(),
        rounds_seen: state.states().first().map_or(0, |s| s.rounds_seen()),
        max_bound: all.iter().copied().fold(0.0, f64::max),
        mean_bound: if all.is_empty() { 0.0 } else { all.iter().sum::<f64>() / all.len() as f64 },
        total_restarts: state.states().iter().map(|s| s.restarts()).sum(),
    };
    let mut out = Artifacts::new(loaded.out_dir(opts.out_dir.clone()));
    out.csv("bounds.csv", &["round", "point_id", "rho", "bound"], bounds)?;
    out.csv("histogram.csv", &["round", "point_id", "bound"], histogram)?;
    out.json("odometer_summary.json", &summary)?;
    if let Some(path) = &opts.snapshot_out {
        out.json_at(path.clone(), &Snapshot::new(KIND, range.end, state))?;
    }
    out.write()?;
    Ok(true)
}
