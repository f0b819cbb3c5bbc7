use std::path::PathBuf;

use irdp::{DpFilter, FilterDecision, RdpFilter, RenyiOrder};
use serde::{Deserialize, Serialize};

use super::{read_numeric_csv, window, StreamOptions};
use crate::artifacts::{float, Artifacts};
use crate::config;
use crate::error::{config_err, failed, CliError};
use crate::snapshot::{self, Snapshot};

const KIND: &str = "filter";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterConfig {
    filter: FilterSpec,
    #[serde(default)]
    stream: Option<Vec<f64>>,
    /// CSV with a header; the `value` column, or the first column.
    #[serde(default)]
    stream_csv: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum FilterSpec {
    Rdp { order: f64, budget: f64 },
    Dp { eps: f64, delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FilterState {
    Rdp(RdpFilter),
    Dp(DpFilter),
}

impl FilterState {
    fn from_spec(spec: &FilterSpec) -> Result<Self, CliError> {
        Ok(match *spec {
            FilterSpec::Rdp { order, budget } => {
                FilterState::Rdp(RdpFilter::new(RenyiOrder::new(order).map_err(config_err)?, budget).map_err(config_err)?)
            }
            FilterSpec::Dp { eps, delta } => FilterState::Dp(DpFilter::new(eps, delta).map_err(config_err)?),
        })
    }

    fn same_parameters(&self, other: &Self) -> bool {
        match (self, other) {
            (FilterState::Rdp(a), FilterState::Rdp(b)) => a.order() == b.order() && a.budget() == b.budget(),
            (FilterState::Dp(a), FilterState::Dp(b)) => {
                a.eps_budget() == b.eps_budget() && a.delta_budget() == b.delta_budget()
            }
            _ => false,
        }
    }

    fn submit(&mut self, x: f64) -> irdp::Result<FilterDecision> {
        match self {
            FilterState::Rdp(f) => f.submit(x),
            FilterState::Dp(f) => f.submit(x),
        }
    }

    /// Running total in the filter's own units: `Σρ`, or `Σε²/2` for DP.
    fn consumed(&self) -> f64 {
        match self {
            FilterState::Rdp(f) => f.consumed(),
            FilterState::Dp(f) => f.consumed_half_sq(),
        }
    }

    fn budget(&self) -> f64 {
        match self {
            FilterState::Rdp(f) => f.budget(),
            FilterState::Dp(f) => f.zcdp_budget(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Summary {
    first_step: usize,
    last_step: usize,
    continued: usize,
    halted: usize,
    first_halt: Option<usize>,
    consumed: f64,
    budget: f64,
}

pub fn run(opts: &StreamOptions) -> Result<bool, CliError> {
    let loaded = config::load::<FilterConfig>(&opts.config)?;
    let cfg = &loaded.body;
    let fresh = FilterState::from_spec(&cfg.filter)?;
    let stream = match (&cfg.stream, &cfg.stream_csv) {
        (Some(s), None) => s.clone(),
        (None, Some(p)) => {
            let (header, rows) = read_numeric_csv(&loaded.resolve(p))?;
            let col = header.iter().position(|h| h == "value").unwrap_or(0);
            rows.iter()
                .map(|r| r.get(col).copied())
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| CliError::Config("stream_csv has short rows".into()))?
        }
        _ => return Err(CliError::Config("give exactly one of stream and stream_csv".into())),
    };
    let (mut state, start) = match &opts.resume {
        Some(path) => {
            let snap: Snapshot<FilterState> = snapshot::read(path, KIND)?;
            if !snap.state.same_parameters(&fresh) {
                return Err(CliError::Config("snapshot filter parameters differ from the config".into()));
            }
            (snap.state, snap.position)
        }
        None => (fresh, 0),
    };
    let range = window(stream.len(), start, opts.stop_after)?;

    let mut rows = Vec::new();
    let (mut continued, mut halted, mut first_halt) = (0, 0, None);
    for step in range.clone() {
        let value = stream[step];
        let decision = state.submit(value).map_err(|e| failed(format!("step {}: {e}", step + 1)))?;
        match decision {
            FilterDecision::Continue => continued += 1,
            FilterDecision::Halt => {
                halted += 1;
                first_halt.get_or_insert(step + 1);
            }
        }
        let label = if decision.is_continue() { "CONT" } else { "HALT" };
        rows.push(vec![(step + 1).to_string(), float(value), label.to_string(), float(state.consumed())]);
    }

    let mut out = Artifacts::new(loaded.out_dir(opts.out_dir.clone()));
    out.csv("decisions.csv", &["step", "value", "decision", "consumed"], rows)?;
    out.json(
        "filter_summary.json",
        &Summary {
            first_step: range.start + 1,
            last_step: range.end,
            continued,
            halted,
            first_halt,
            consumed: state.consumed(),
            budget: state.budget(),
        },
    )?;
    if let Some(path) = &opts.snapshot_out {
        out.json_at(path.clone(), &Snapshot::new(KIND, range.end, state))?;
    }
    out.write()?;
    Ok(true)
}
