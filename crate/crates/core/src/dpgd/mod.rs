//! Full-batch noisy gradient descent with per-example clipping, in a plain
//! variant (constant cap `C` for `k` steps) and an individually filtered
//! variant where each point's cap shrinks as its squared-norm budget depletes.

mod data;
mod loss;

pub use data::{Dataset, TwoBlobs};
pub use loss::{finite_difference_error, LossKind, LossSpec};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::noise::{GaussianNoise, NoiseSource};
use crate::rdp::{default_orders, RdpCurve};

/// Step size per round: a constant, or a schedule whose last entry is held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LearningRate {
    Constant(f64),
    Schedule(Vec<f64>),
}

impl LearningRate {
    /// Step size for the zero-based round `t`.
    pub fn at(&self, t: usize) -> f64 {
        match self {
            LearningRate::Constant(eta) => *eta,
            LearningRate::Schedule(etas) => etas[t.min(etas.len() - 1)],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |eta: &f64| eta.is_finite() && *eta > 0.0;
        let valid = match self {
            LearningRate::Constant(eta) => ok(eta),
            LearningRate::Schedule(etas) => !etas.is_empty() && etas.iter().all(ok),
        };
        if valid {
            Ok(())
        } else {
            Err(invalid("learning rates must be finite and > 0"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Plain,
    Filtered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub learning_rate: LearningRate,
    /// Noise multiplier; the per-point noise has standard deviation `sigma * clip`.
    pub sigma: f64,
    pub clip: f64,
    /// `k` for plain runs, `k_max` for filtered runs.
    pub steps: usize,
    /// Squared-norm budget per point; required by filtered runs only.
    #[serde(default)]
    pub norm_budget: Option<f64>,
    pub seed: u64,
    /// Compute per-example gradients on the rayon pool.
    #[serde(default)]
    pub parallel: bool,
}

impl GdConfig {
    /// `B_norm = k C²`, the budget under which a filtered run matches a plain
    /// run of `k` steps.
    pub fn matched_norm_budget(k: usize, clip: f64) -> f64 {
        k as f64 * (clip * clip)
    }

    pub fn validate(&self, mode: Mode) -> Result<()> {
        self.learning_rate.validate()?;
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(invalid("sigma must be finite and > 0"));
        }
        if !(self.clip.is_finite() && self.clip > 0.0) {
            return Err(invalid("clip must be finite and > 0"));
        }
        match (mode, self.norm_budget) {
            (Mode::Plain, Some(_)) => Err(invalid("plain runs take no norm budget")),
            (Mode::Filtered, None) => Err(invalid("filtered runs require a norm budget")),
            (Mode::Filtered, Some(b)) if !(b.is_finite() && b > 0.0) => {
                Err(invalid("norm budget must be finite and > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Returns `g` if `‖g‖ ≤ cap`, otherwise `g` rescaled to norm `cap`.
pub fn clip_gradient(g: &[f64], cap: f64) -> Vec<f64> {
    let norm = norm_sq(g).sqrt();
    if cap <= 0.0 || norm == 0.0 {
        return vec![0.0; g.len()];
    }
    if norm <= cap {
        return g.to_vec();
    }
    let scale = cap / norm;
    g.iter().map(|x| x * scale).collect()
}

/// `min(C, √(B_norm − spent))`.
pub fn adaptive_cap(clip: f64, norm_budget: f64, spent: f64) -> Result<f64> {
    if spent < 0.0 || !spent.is_finite() {
        return Err(invalid(format!("spent must be finite and >= 0, got {spent}")));
    }
    if spent > norm_budget {
        return Err(Error::Invariant(format!(
            "spent {spent} exceeds norm budget {norm_budget}"
        )));
    }
    Ok(clip.min((norm_budget - spent).sqrt()))
}

/// One completed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// One-based round index.
    pub round: usize,
    /// Parameters after the round's update.
    pub theta: Vec<f64>,
    /// Accounted `‖ḡ‖²` for each point in this round.
    pub clipped_sq_norms: Vec<f64>,
    /// Points with a positive cap at the start of the round.
    pub active_count: usize,
    /// Mean training loss at the updated parameters.
    pub loss: f64,
    /// Training accuracy at the updated parameters.
    pub accuracy: f64,
    pub max_spent: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GdTrace {
    pub rounds: Vec<RoundRecord>,
    /// Final `Σ_j ‖ḡ_j(X_i)‖²` per point.
    pub spent: Vec<f64>,
}

impl GdTrace {
    /// Per-point spend after each round, reconstructed from the stored norms.
    pub fn spent_by_round(&self) -> Vec<Vec<f64>> {
        let mut running = vec![0.0; self.spent.len()];
        self.rounds
            .iter()
            .map(|r| {
                for (s, q) in running.iter_mut().zip(&r.clipped_sq_norms) {
                    *s += q;
                }
                running.clone()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdRun {
    pub theta: Vec<f64>,
    pub trace: GdTrace,
}

/// Squared-norm spend of one point. Rounds clipped to exactly `C` are
/// counted as whole units of `C²` so that the budget test for a matched run
/// reduces to integer comparison.
#[derive(Debug, Clone, Copy, Default)]
struct Spend {
    full: u64,
    partial: f64,
}

impl Spend {
    fn total(&self, c2: f64) -> f64 {
        self.full as f64 * c2 + self.partial
    }

    /// Spend after a round charged `‖ḡ‖²`; returns the new state and the
    /// accounted increment.
    fn charge(self, g_norm_sq: f64, clipped: bool, cap: f64, clip: f64) -> (Spend, f64) {
        let c2 = clip * clip;
        let mut next = self;
        let add = if cap == clip && (clipped || g_norm_sq >= c2) {
            next.full += 1;
            c2
        } else {
            let add = if clipped { cap * cap } else { g_norm_sq };
            next.partial += add;
            add
        };
        (next, add)
    }
}

/// Clips `g` under the point's current cap and charges the spend. Returns the
/// clipped vector and the accounted squared norm.
fn clip_and_charge(
    g: &[f64],
    spend: &mut Spend,
    clip: f64,
    norm_budget: Option<f64>,
) -> Result<(Vec<f64>, f64, bool)> {
    let c2 = clip * clip;
    let g_norm_sq = norm_sq(g);
    let g_norm = g_norm_sq.sqrt();
    let before = spend.total(c2);
    let mut cap = match norm_budget {
        None => clip,
        Some(b) if (spend.full + 1) as f64 * c2 + spend.partial <= b => clip,
        Some(b) => adaptive_cap(clip, b, before)?,
    };
    let active = cap > 0.0;
    let mut shrinks = 0u32;
    loop {
        let clipped = g_norm > cap;
        let (next, add) = spend.charge(g_norm_sq, clipped, cap, clip);
        if norm_budget.is_none_or(|b| next.total(c2) <= b) {
            *spend = next;
            return Ok((clip_gradient(g, cap), add, active));
        }
        // Rounding pushed the spend past the budget: shrink the cap.
        cap = if shrinks < 8 {
            cap.min(g_norm).next_down()
        } else {
            cap * 0.5
        };
        if cap < f64::MIN_POSITIVE {
            cap = 0.0;
        }
        shrinks += 1;
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Mean loss and accuracy of `theta` on `data`.
pub fn evaluate(loss: &LossSpec, theta: &[f64], data: &Dataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(invalid("dataset is empty"));
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    for (x, &y) in data.features().iter().zip(data.labels()) {
        total += loss.loss(theta, x, y)?;
        if loss.predict(theta, x) == y {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok((total / n, correct as f64 / n))
}

pub fn run_private_gd(config: &GdConfig, data: &Dataset, loss: &LossSpec, mode: Mode) -> Result<GdRun> {
    run_private_gd_with_noise(config, data, loss, mode, GaussianNoise::new(config.seed))
}

/// As [`run_private_gd`] with an explicit noise source; `config.seed` is ignored.
pub fn run_private_gd_with_noise<N: NoiseSource>(
    config: &GdConfig,
    data: &Dataset,
    loss: &LossSpec,
    mode: Mode,
    mut noise: N,
) -> Result<GdRun> {
    config.validate(mode)?;
    if data.is_empty() {
        return Err(invalid("dataset is empty"));
    }
    let n = data.len();
    let d = data.dim();
    let norm_budget = match mode {
        Mode::Plain => None,
        Mode::Filtered => config.norm_budget,
    };
    let noise_scale = config.sigma * config.clip;
    let c2 = config.clip * config.clip;

    let mut theta = vec![0.0; d];
    let mut spends = vec![Spend::default(); n];
    let mut trace = GdTrace {
        rounds: Vec::with_capacity(config.steps),
        spent: vec![0.0; n],
    };

    for t in 0..config.steps {
        let round = t + 1;
        let abort = |what: String, trace: &GdTrace| Error::RunAborted {
            round,
            what,
            trace: Box::new(trace.clone()),
        };
        let grad = |(x, &y): (&Vec<f64>, &f64)| loss.gradient(&theta, x, y);
        let grads: Vec<Vec<f64>> = if config.parallel {
            data.features().par_iter().zip(data.labels()).map(grad).collect::<Result<_>>()?
        } else {
            data.features().iter().zip(data.labels()).map(grad).collect::<Result<_>>()?
        };
        if let Some(i) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(abort(format!("non-finite gradient at point {i}"), &trace));
        }

        let mut sum = vec![0.0; d];
        let mut sq_norms = Vec::with_capacity(n);
        let mut active_count = 0;
        for (g, spend) in grads.iter().zip(spends.iter_mut()) {
            let (clipped, charged, active) = clip_and_charge(g, spend, config.clip, norm_budget)?;
            active_count += usize::from(active);
            sq_norms.push(charged);
            for (s, v) in sum.iter_mut().zip(&clipped) {
                *s += v + noise.normal(noise_scale);
            }
        }

        let eta = config.learning_rate.at(t);
        for (th, s) in theta.iter_mut().zip(&sum) {
            *th -= eta * (s / n as f64);
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(abort("non-finite parameters".into(), &trace));
        }
        let (mean_loss, accuracy) = evaluate(loss, &theta, data)?;
        if !mean_loss.is_finite() {
            return Err(abort("non-finite loss".into(), &trace));
        }

        for (out, spend) in trace.spent.iter_mut().zip(&spends) {
            *out = spend.total(c2);
        }
        let max_spent = trace.spent.iter().copied().fold(0.0, f64::max);
        if let Some(b) = norm_budget {
            if max_spent > b {
                return Err(Error::Invariant(format!(
                    "round {round}: spend {max_spent} exceeds norm budget {b}"
                )));
            }
        }
        trace.rounds.push(RoundRecord {
            round,
            theta: theta.clone(),
            clipped_sq_norms: sq_norms,
            active_count,
            loss: mean_loss,
            accuracy,
            max_spent,
        });
    }
    Ok(GdRun { theta, trace })
}

/// RDP curve on the default order grid: `αk/(2σ²)` for plain runs and
/// `αB_norm/(2σ²C²)` for filtered runs, independent of `k_max`.
pub fn privacy_report(config: &GdConfig, mode: Mode) -> Result<RdpCurve> {
    config.validate(mode)?;
    let sigma_sq = config.sigma * config.sigma;
    let slope = match (mode, config.norm_budget) {
        (Mode::Filtered, Some(b)) => b / (2.0 * sigma_sq * config.clip * config.clip),
        _ => config.steps as f64 / (2.0 * sigma_sq),
    };
    RdpCurve::linear(&default_orders(), slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::ZeroNoise;
    use crate::rdp::best_dp_over_curve;
    use proptest::prelude::*;

    fn config(steps: usize, norm_budget: Option<f64>) -> GdConfig {
        GdConfig {
            learning_rate: LearningRate::Constant(0.5),
            sigma: 1.0,
            clip: 1.0,
            steps,
            norm_budget,
            seed: 7,
            parallel: false,
        }
    }

    fn blobs(n: usize, d: usize, seed: u64) -> Dataset {
        TwoBlobs {
            n,
            d,
            separation: 3.0,
            seed,
        }
        .generate()
        .unwrap()
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_gradient(&[3.0, 0.0], 10.0), vec![3.0, 0.0]);
        let c = clip_gradient(&[12.0, 16.0], 10.0);
        assert!((norm_sq(&c).sqrt() - 10.0).abs() <= 1e-12);
        assert_eq!(clip_gradient(&[0.0, 0.0], 5.0), vec![0.0, 0.0]);
        assert_eq!(clip_gradient(&[1.0, 1.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn adaptive_cap_examples() {
        assert_eq!(adaptive_cap(10.0, 10400.0, 10396.0).unwrap(), 2.0);
        assert_eq!(adaptive_cap(10.0, 10400.0, 0.0).unwrap(), 10.0);
        assert_eq!(adaptive_cap(10.0, 10400.0, 10400.0).unwrap(), 0.0);
        assert!(matches!(adaptive_cap(10.0, 1.0, 2.0), Err(Error::Invariant(_))));
    }

    #[test]
    fn config_validation() {
        assert!(config(3, None).validate(Mode::Plain).is_ok());
        assert!(config(3, Some(1.0)).validate(Mode::Plain).is_err());
        assert!(config(3, None).validate(Mode::Filtered).is_err());
        let mut bad = config(3, None);
        bad.sigma = 0.0;
        assert!(bad.validate(Mode::Plain).is_err());
    }

    #[test]
    fn filtered_with_matched_budget_recovers_plain() {
        let data = blobs(200, 5, 1);
        let loss = LossSpec::logistic();
        let k = 25;
        let mut cfg = config(k, None);
        cfg.clip = 0.3;
        let plain = run_private_gd(&cfg, &data, &loss, Mode::Plain).unwrap();
        cfg.norm_budget = Some(GdConfig::matched_norm_budget(k, cfg.clip));
        let filtered = run_private_gd(&cfg, &data, &loss, Mode::Filtered).unwrap();
        assert_eq!(plain, filtered);
        for r in &filtered.trace.rounds {
            assert_eq!(r.active_count, 200);
        }
    }

    #[test]
    fn parallel_gradients_are_deterministic() {
        let data = blobs(300, 4, 2);
        let loss = LossSpec::logistic();
        let mut cfg = config(10, None);
        let serial = run_private_gd(&cfg, &data, &loss, Mode::Plain).unwrap();
        cfg.parallel = true;
        assert_eq!(serial, run_private_gd(&cfg, &data, &loss, Mode::Plain).unwrap());
    }

    #[test]
    fn noiseless_loss_decreases() {
        let data = Dataset::new(vec![vec![1.0, 0.5], vec![-1.0, -0.5]], vec![1.0, 0.0]).unwrap();
        let loss = LossSpec::logistic();
        let mut cfg = config(50, None);
        cfg.clip = 100.0;
        cfg.learning_rate = LearningRate::Constant(0.1);
        let run = run_private_gd_with_noise(&cfg, &data, &loss, Mode::Plain, ZeroNoise).unwrap();
        let mut prev = evaluate(&loss, &[0.0, 0.0], &data).unwrap().0;
        for r in &run.trace.rounds {
            assert!(r.loss < prev, "round {}: {} !< {prev}", r.round, r.loss);
            prev = r.loss;
        }
    }

    #[test]
    fn warm_up_keeps_full_cap() {
        let data = blobs(100, 3, 3);
        let loss = LossSpec::squared();
        let mut cfg = config(30, Some(7.5));
        cfg.clip = 1.0;
        let run = run_private_gd(&cfg, &data, &loss, Mode::Filtered).unwrap();
        let c2 = cfg.clip * cfg.clip;
        let warm_up = (7.5 / c2).floor() as usize;
        for r in &run.trace.rounds[..warm_up] {
            assert_eq!(r.active_count, 100);
            assert!(r.clipped_sq_norms.iter().all(|&q| q <= c2));
        }
    }

    #[test]
    fn budgets_exhaust_and_points_drop_out() {
        let data = blobs(50, 3, 4);
        let loss = LossSpec::squared();
        let mut cfg = config(40, Some(3.0));
        cfg.clip = 1.0;
        cfg.learning_rate = LearningRate::Schedule(vec![0.2, 0.1]);
        let run = run_private_gd(&cfg, &data, &loss, Mode::Filtered).unwrap();
        let last = run.trace.rounds.last().unwrap();
        assert!(last.active_count < 50);
        assert!(run.trace.spent.iter().all(|&s| s <= 3.0));
    }

    #[test]
    fn privacy_report_curves() {
        let mut cfg = config(104, None);
        cfg.sigma = 170.0;
        cfg.clip = 10.0;
        let plain = privacy_report(&cfg, Mode::Plain).unwrap();
        let (dp, _) = best_dp_over_curve(&plain, 1e-5).unwrap();
        assert!((0.29..=0.31).contains(&dp.eps), "{}", dp.eps);

        cfg.norm_budget = Some(GdConfig::matched_norm_budget(104, 10.0));
        cfg.steps = 125;
        let filtered = privacy_report(&cfg, Mode::Filtered).unwrap();
        for (a, b) in plain.points().iter().zip(filtered.points()) {
            assert!((a.rho - b.rho).abs() <= 1e-15 * a.rho.max(1.0));
        }

        let mut cfg = config(180, None);
        cfg.sigma = 130.0;
        let (dp, _) = best_dp_over_curve(&privacy_report(&cfg, Mode::Plain).unwrap(), 1e-5).unwrap();
        assert!((0.49..=0.51).contains(&dp.eps), "{}", dp.eps);
    }

    #[test]
    fn non_finite_run_aborts_with_trace() {
        let data = Dataset::new(vec![vec![1e300]], vec![1e300]).unwrap();
        let mut cfg = config(5, None);
        cfg.clip = 1e300;
        cfg.learning_rate = LearningRate::Constant(1e300);
        let err = run_private_gd_with_noise(&cfg, &data, &LossSpec::squared(), Mode::Plain, ZeroNoise).unwrap_err();
        assert!(matches!(err, Error::RunAborted { .. }), "{err:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn spend_is_safe_and_monotone(
            seed in 0u64..1000,
            budget in 0.05f64..6.0,
            clip in 0.1f64..3.0,
            steps in 1usize..25,
        ) {
            let data = blobs(40, 3, seed);
            let mut cfg = config(steps, Some(budget));
            cfg.clip = clip;
            cfg.seed = seed;
            let run = run_private_gd(&cfg, &data, &LossSpec::logistic(), Mode::Filtered).unwrap();
            let mut prev = vec![0.0; 40];
            for (r, spent) in run.trace.rounds.iter().zip(run.trace.spent_by_round()) {
                prop_assert!(r.max_spent <= budget);
                for (i, (&s, &q)) in spent.iter().zip(&r.clipped_sq_norms).enumerate() {
                    prop_assert!(q >= 0.0 && q <= clip * clip * (1.0 + 1e-12));
                    prop_assert!(s >= prev[i]);
                    prop_assert!(s <= budget * (1.0 + 1e-12));
                }
                prev = spent;
            }
        }

        #[test]
        fn clip_contract(g in prop::collection::vec(-100.0f64..100.0, 1..8), cap in 0.0f64..50.0) {
            let c = clip_gradient(&g, cap);
            prop_assert!(norm_sq(&c).sqrt() <= cap * (1.0 + 1e-12));
            if norm_sq(&g).sqrt() <= cap {
                prop_assert_eq!(c, g);
            }
        }
    }
}
