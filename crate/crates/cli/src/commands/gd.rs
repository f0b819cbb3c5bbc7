use std::path::{Path, PathBuf};

use irdp::dpgd::{evaluate, run_private_gd, privacy_report, Dataset, GdConfig, GdTrace, LearningRate, LossSpec, Mode, TwoBlobs};
use irdp::{best_dp_over_curve, Error};
use serde::{Deserialize, Serialize};

use crate::artifacts::{float, Artifacts};
use crate::config::{self, Loaded};
use crate::error::{config_err, CliError};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GdRunConfig {
    mode: Mode,
    dataset: DatasetSpec,
    #[serde(default)]
    test_dataset: Option<DatasetSpec>,
    /// Append a constant feature to every example.
    #[serde(default)]
    intercept: bool,
    loss: LossSpec,
    learning_rate: LearningRate,
    sigma: f64,
    clip: f64,
    steps: usize,
    #[serde(default)]
    norm_budget: Option<f64>,
    seed: u64,
    #[serde(default)]
    parallel: bool,
    /// `δ` of the reported `(ε, δ)` guarantee.
    delta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum DatasetSpec {
    Csv(PathBuf),
    Synthetic(Synthetic),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Synthetic {
    n: usize,
    d: usize,
    separation: f64,
    seed: u64,
}

impl DatasetSpec {
    fn load<T>(&self, loaded: &Loaded<T>, intercept: bool) -> Result<Dataset, CliError> {
        let data = match self {
            DatasetSpec::Csv(p) => read_csv(&loaded.resolve(p))?,
            DatasetSpec::Synthetic(s) => TwoBlobs {
                n: s.n,
                d: s.d,
                separation: s.separation,
                seed: s.seed,
            }
            .generate()
            .map_err(config_err)?,
        };
        if data.is_empty() {
            return Err(CliError::Config("dataset is empty".into()));
        }
        Ok(if intercept { data.with_intercept() } else { data })
    }
}

fn read_csv(path: &Path) -> Result<Dataset, CliError> {
    let unreadable = |e: &dyn std::fmt::Display| CliError::Config(format!("unreadable dataset {}: {e}", path.display()));
    let file = std::fs::File::open(path).map_err(|e| unreadable(&e))?;
    Dataset::from_csv(file).map_err(|e| unreadable(&e))
}

#[derive(Debug, Serialize)]
struct Privacy {
    delta: f64,
    eps: f64,
    best_order: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    mode: Mode,
    rounds: usize,
    aborted: Option<String>,
    theta: Vec<f64>,
    train_loss: f64,
    train_accuracy: f64,
    test_loss: Option<f64>,
    test_accuracy: Option<f64>,
    max_spent: f64,
    privacy: Privacy,
}

pub fn run(config_path: &Path, out_dir: Option<PathBuf>) -> Result<bool, CliError> {
    let loaded = config::load::<GdRunConfig>(config_path)?;
    let cfg = &loaded.body;
    let gd = GdConfig {
        learning_rate: cfg.learning_rate.clone(),
        sigma: cfg.sigma,
        clip: cfg.clip,
        steps: cfg.steps,
        norm_budget: cfg.norm_budget,
        seed: cfg.seed,
        parallel: cfg.parallel,
    };
    gd.validate(cfg.mode).map_err(config_err)?;
    let train = cfg.dataset.load(&loaded, cfg.intercept)?;
    let test = match &cfg.test_dataset {
        Some(spec) => Some(spec.load(&loaded, cfg.intercept)?),
        None => None,
    };
    if let Some(t) = &test {
        if t.dim() != train.dim() {
            return Err(CliError::Config(format!(
                "test dataset has {} features, training has {}",
                t.dim(),
                train.dim()
            )));
        }
    }
    let (best, order) = best_dp_over_curve(&privacy_report(&gd, cfg.mode).map_err(config_err)?, cfg.delta)
        .map_err(config_err)?;

    let (theta, trace, aborted) = match run_private_gd(&gd, &train, &cfg.loss, cfg.mode) {
        Ok(run) => (Some(run.theta), run.trace, None),
        Err(Error::RunAborted { round, what, trace }) => (None, *trace, Some(format!("round {round}: {what}"))),
        Err(e) => return Err(CliError::Failed(e.to_string())),
    };
    let theta = theta.unwrap_or_else(|| trace.rounds.last().map_or_else(|| vec![0.0; train.dim()], |r| r.theta.clone()));
    let (train_loss, train_accuracy) = evaluate(&cfg.loss, &theta, &train).map_err(|e| CliError::Failed(e.to_string()))?;
    let (test_loss, test_accuracy) = match &test {
        Some(t) => {
            let (l, a) = evaluate(&cfg.loss, &theta, t).map_err(|e| CliError::Failed(e.to_string()))?;
            (Some(l), Some(a))
        }
        None => (None, None),
    };

    let mut out = Artifacts::new(loaded.out_dir(out_dir));
    write_trace(&mut out, &trace)?;
    out.json(
        "gd_summary.json",
        &Summary {
            mode: cfg.mode,
            rounds: trace.rounds.len(),
            aborted: aborted.clone(),
            theta,
            train_loss,
            train_accuracy,
            test_loss,
            test_accuracy,
            max_spent: trace.spent.iter().copied().fold(0.0, f64::max),
            privacy: Privacy {
                delta: best.delta,
                eps: best.eps,
                best_order: order.alpha(),
            },
        },
    )?;
    out.write()?;
    if let Some(msg) = aborted {
        eprintln!("irdp: gd aborted at {msg}; partial trace written");
        return Ok(false);
    }
    Ok(true)
}

fn write_trace(out: &mut Artifacts, trace: &GdTrace) -> Result<(), CliError> {
    out.csv(
        "trace.csv",
        &["round", "loss", "accuracy", "active_count", "max_spent"],
        trace.rounds.iter().map(|r| {
            vec![
                r.round.to_string(),
                float(r.loss),
                float(r.accuracy),
                r.active_count.to_string(),
                float(r.max_spent),
            ]
        }),
    )?;
    out.csv(
        "spent.csv",
        &["point_id", "spent"],
        trace.spent.iter().enumerate().map(|(i, s)| vec![i.to_string(), float(*s)]),
    )
}
