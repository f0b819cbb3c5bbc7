use std::path::{Path, PathBuf};

use irdp::{
    best_dp_over_curve, default_orders, rdp_to_dp, zcdp_budget_for_dp, RdpCurve, RdpPoint, RenyiOrder,
};
use serde::{Deserialize, Serialize};

use crate::artifacts::Artifacts;
use crate::config;
use crate::error::{config_err, CliError};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvertConfig {
    #[serde(default)]
    rdp_to_dp: Vec<PointRequest>,
    #[serde(default)]
    curves: Vec<CurveRequest>,
    #[serde(default)]
    zcdp_budgets: Vec<DpTarget>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointRequest {
    order: f64,
    rho: f64,
    delta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveRequest {
    curve: CurveSource,
    delta: f64,
    /// Order grid for `linear` and `gaussian` curves; the default grid when absent.
    #[serde(default)]
    orders: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum CurveSource {
    /// `ρ(α) = α · slope`.
    Linear { slope: f64 },
    /// `steps` compositions of a unit-sensitivity Gaussian mechanism.
    Gaussian { sigma: f64, steps: u64 },
    Points(Vec<PointSpec>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointSpec {
    order: f64,
    rho: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DpTarget {
    eps: f64,
    delta: f64,
}

#[derive(Debug, Serialize)]
struct PointResult {
    order: f64,
    rho: f64,
    delta: f64,
    eps: f64,
}

#[derive(Debug, Serialize)]
struct CurveResult {
    delta: f64,
    eps: f64,
    best_order: f64,
}

#[derive(Debug, Serialize)]
struct BudgetResult {
    eps: f64,
    delta: f64,
    zcdp_budget: f64,
}

#[derive(Debug, Serialize)]
struct Report {
    rdp_to_dp: Vec<PointResult>,
    curves: Vec<CurveResult>,
    zcdp_budgets: Vec<BudgetResult>,
}

fn build_curve(req: &CurveRequest) -> irdp::Result<RdpCurve> {
    let orders = req.orders.clone().unwrap_or_else(default_orders);
    match &req.curve {
        CurveSource::Linear { slope } => RdpCurve::linear(&orders, *slope),
        CurveSource::Gaussian { sigma, steps } => {
            if !(*sigma > 0.0 && sigma.is_finite()) {
                return Err(irdp::Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
            }
            RdpCurve::linear(&orders, *steps as f64 / (2.0 * sigma * sigma))
        }
        CurveSource::Points(points) => RdpCurve::new(
            points
                .iter()
                .map(|p| RdpPoint::new(RenyiOrder::new(p.order)?, p.rho))
                .collect::<irdp::Result<Vec<_>>>()?,
        ),
    }
}

pub fn run(config_path: &Path, out_dir: Option<PathBuf>) -> Result<bool, CliError> {
    let loaded = config::load::<ConvertConfig>(config_path)?;
    let cfg = &loaded.body;
    if cfg.rdp_to_dp.is_empty() && cfg.curves.is_empty() && cfg.zcdp_budgets.is_empty() {
        return Err(CliError::Config("nothing to convert".into()));
    }
    let rdp_to_dp = cfg
        .rdp_to_dp
        .iter()
        .map(|r| {
            let point = RdpPoint::new(RenyiOrder::new(r.order)?, r.rho)?;
            let dp = rdp_to_dp(point, r.delta)?;
            Ok(PointResult {
                order: r.order,
                rho: r.rho,
                delta: dp.delta,
                eps: dp.eps,
            })
        })
        .collect::<irdp::Result<Vec<_>>>()
        .map_err(config_err)?;
    let curves = cfg
        .curves
        .iter()
        .map(|req| {
            let (dp, order) = best_dp_over_curve(&build_curve(req)?, req.delta)?;
            Ok(CurveResult {
                delta: dp.delta,
                eps: dp.eps,
                best_order: order.alpha(),
            })
        })
        .collect::<irdp::Result<Vec<_>>>()
        .map_err(config_err)?;
    let zcdp_budgets = cfg
        .zcdp_budgets
        .iter()
        .map(|t| {
            Ok(BudgetResult {
                eps: t.eps,
                delta: t.delta,
                zcdp_budget: zcdp_budget_for_dp(t.eps, t.delta)?,
            })
        })
        .collect::<irdp::Result<Vec<_>>>()
        .map_err(config_err)?;

    let mut out = Artifacts::new(loaded.out_dir(out_dir));
    out.json(
        "convert.json",
        &Report {
            rdp_to_dp,
            curves,
            zcdp_budgets,
        },
    )?;
    out.write()?;
    Ok(true)
}
