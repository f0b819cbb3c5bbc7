//! Renyi divergence primitives and privacy-parameter conversions.
//!
//! All losses are in nats. Orders `alpha >= 1` are accepted everywhere a
//! divergence is computed; `alpha = 1` is the Kullback-Leibler limit. The
//! (epsilon, delta) conversion divides by `alpha - 1` and therefore rejects
//! the KL order.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Absolute tolerance for a probability vector to count as normalized.
pub const DISTRIBUTION_SUM_TOLERANCE: f64 = 1e-12;

/// A Renyi order `alpha >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RenyiOrder(f64);

impl RenyiOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 1.0 {
            return Err(invalid(format!("Renyi order must be finite and >= 1, got {alpha}")));
        }
        Ok(Self(alpha))
    }

    pub fn alpha(self) -> f64 {
        self.0
    }

    /// True for the KL order.
    pub fn is_kl(self) -> bool {
        self.0 == 1.0
    }
}

impl TryFrom<f64> for RenyiOrder {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        Self::new(alpha)
    }
}

impl From<RenyiOrder> for f64 {
    fn from(order: RenyiOrder) -> f64 {
        order.0
    }
}

/// `(alpha, rho)`: a Renyi order together with a loss bound at that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdpPoint {
    pub order: RenyiOrder,
    pub rho: f64,
}

impl RdpPoint {
    pub fn new(order: RenyiOrder, rho: f64) -> Result<Self> {
        if !rho.is_finite() || rho < 0.0 {
            return Err(invalid(format!("rho must be finite and >= 0, got {rho}")));
        }
        Ok(Self { order, rho })
    }
}

/// Loss as a function of order, sampled on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve {
    points: Vec<RdpPoint>,
}

impl RdpCurve {
    pub fn new(points: Vec<RdpPoint>) -> Result<Self> {
        for pair in points.windows(2) {
            if pair[0].order.alpha() >= pair[1].order.alpha() {
                return Err(invalid(format!(
                    "curve orders must be strictly increasing ({} then {})",
                    pair[0].order.alpha(),
                    pair[1].order.alpha()
                )));
            }
        }
        Ok(Self { points })
    }

    /// Builds a curve by evaluating `rho_of` at each order.
    pub fn from_fn(orders: &[f64], rho_of: impl Fn(f64) -> f64) -> Result<Self> {
        let points = orders
            .iter()
            .map(|&alpha| RdpPoint::new(RenyiOrder::new(alpha)?, rho_of(alpha)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    /// The curve `alpha -> alpha * slope` of a `slope`-zCDP mechanism.
    pub fn linear(orders: &[f64], slope: f64) -> Result<Self> {
        Self::from_fn(orders, |alpha| alpha * slope)
    }

    pub fn points(&self) -> &[RdpPoint] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

/// Default order grid: `{1 + k/4 : k = 1..16} ∪ {2..=64} ∪ {128, 256}`.
pub fn default_orders() -> Vec<f64> {
    let mut orders: Vec<f64> = (1..=16).map(|k| 1.0 + k as f64 / 4.0).collect();
    orders.extend((2..=64).map(f64::from));
    orders.extend([128.0, 256.0]);
    orders.sort_by(f64::total_cmp);
    orders.dedup();
    orders
}

/// An `(epsilon, delta)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpPoint {
    pub eps: f64,
    pub delta: f64,
}

impl DpPoint {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !eps.is_finite() || eps < 0.0 {
            return Err(invalid(format!("epsilon must be finite and >= 0, got {eps}")));
        }
        check_delta(delta)?;
        Ok(Self { eps, delta })
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// A probability vector over a finite outcome set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {bad} is not a probability")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > DISTRIBUTION_SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    /// Point mass on `outcome` among `len` outcomes.
    pub fn point_mass(len: usize, outcome: usize) -> Result<Self> {
        if outcome >= len {
            return Err(invalid(format!("outcome {outcome} outside support of size {len}")));
        }
        let mut probs = vec![0.0; len];
        probs[outcome] = 1.0;
        Self::new(probs)
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

    /// The product distribution, with `self` as the slow index.
    pub fn product(&self, other: &Self) -> Self {
        let probs = self
            .probs
            .iter()
            .flat_map(|p| other.probs.iter().map(move |q| p * q))
            .collect();
        Self { probs }
    }
}

impl TryFrom<Vec<f64>> for DiscreteDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<DiscreteDistribution> for Vec<f64> {
    fn from(d: DiscreteDistribution) -> Vec<f64> {
        d.probs
    }
}

/// Value of a divergence: finite, or unbounded because absolute continuity fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    Finite(f64),
    Unbounded,
}

impl Divergence {
    pub fn is_finite(self) -> bool {
        matches!(self, Divergence::Finite(_))
    }

    /// The divergence as a float, with `Unbounded` mapped to `+inf`.
    pub fn value(self) -> f64 {
        match self {
            Divergence::Finite(v) => v,
            Divergence::Unbounded => f64::INFINITY,
        }
    }

    pub fn max(self, other: Self) -> Self {
        match (self, other) {
            (Divergence::Finite(a), Divergence::Finite(b)) => Divergence::Finite(a.max(b)),
            _ => Divergence::Unbounded,
        }
    }
}

/// `log(sum(exp(x)))` over finite terms; `-inf` for an empty input.
pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// `D_alpha(p || q)` in nats.
pub fn renyi_divergence_discrete(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    order: RenyiOrder,
) -> Result<Divergence> {
    renyi_divergence_slices(p.probs(), q.probs(), order)
}

/// Same as [`renyi_divergence_discrete`] on raw slices that are already known
/// to be normalized. Used for large path tables.
pub(crate) fn renyi_divergence_slices(p: &[f64], q: &[f64], order: RenyiOrder) -> Result<Divergence> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    if p.iter().zip(q).any(|(&pi, &qi)| pi > 0.0 && qi == 0.0) {
        return Ok(Divergence::Unbounded);
    }
    let alpha = order.alpha();
    if order.is_kl() {
        let kl: f64 = p
            .iter()
            .zip(q)
            .filter(|(&pi, _)| pi > 0.0)
            .map(|(&pi, &qi)| pi * (pi.ln() - qi.ln()))
            .sum();
        return Ok(Divergence::Finite(kl.max(0.0)));
    }
    // ln Σ q (p/q)^α, written as ln p + (α-1) ln(p/q) so that equal entries
    // contribute exactly ln p, and normalized by Σ q so that D(p‖p) = 0.
    let terms: Vec<f64> = p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi.ln() + (alpha - 1.0) * (pi.ln() - qi.ln()))
        .collect();
    let norm: Vec<f64> = q.iter().filter(|&&qi| qi > 0.0).map(|qi| qi.ln()).collect();
    let d = (log_sum_exp(&terms) - log_sum_exp(&norm)) / (alpha - 1.0);
    Ok(Divergence::Finite(d.max(0.0)))
}

/// `max(D_alpha(p || q), D_alpha(q || p))`.
pub fn symmetric_divergence(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    order: RenyiOrder,
) -> Result<Divergence> {
    let forward = renyi_divergence_discrete(p, q, order)?;
    let backward = renyi_divergence_discrete(q, p, order)?;
    Ok(forward.max(backward))
}

/// Individual loss of one point under a Gaussian mechanism whose output moves
/// by at most `lipschitz * contribution_norm` when the point is removed.
pub fn gaussian_individual_rdp(
    contribution_norm: f64,
    lipschitz: f64,
    sigma: f64,
    order: RenyiOrder,
) -> Result<RdpPoint> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !(contribution_norm >= 0.0 && lipschitz >= 0.0) {
        return Err(invalid("norm and Lipschitz constant must be nonnegative"));
    }
    let shift = lipschitz * contribution_norm;
    RdpPoint::new(order, order.alpha() * shift * shift / (2.0 * sigma * sigma))
}

/// `(alpha, rho)`-RDP implies `(rho + ln(1/delta)/(alpha - 1), delta)`-DP.
pub fn rdp_to_dp(point: RdpPoint, delta: f64) -> Result<DpPoint> {
    check_delta(delta)?;
    let alpha = point.order.alpha();
    if alpha <= 1.0 {
        return Err(Error::UnsupportedOrder(alpha));
    }
    DpPoint::new(point.rho + (1.0 / delta).ln() / (alpha - 1.0), delta)
}

/// Smallest epsilon over the orders of `curve`. Ties go to the smaller order.
pub fn best_dp_over_curve(curve: &RdpCurve, delta: f64) -> Result<(DpPoint, RenyiOrder)> {
    check_delta(delta)?;
    let mut best: Option<(DpPoint, RenyiOrder)> = None;
    for point in curve.points() {
        let dp = rdp_to_dp(*point, delta)?;
        if best.is_none_or(|(b, _)| dp.eps < b.eps) {
            best = Some((dp, point.order));
        }
    }
    best.ok_or_else(|| invalid("cannot convert an empty curve"))
}

/// Largest `B` such that `B`-zCDP implies `(eps_g, delta_g)`-DP through the
/// order-optimized conversion, i.e. `(sqrt(L + eps_g) - sqrt(L))^2` with
/// `L = ln(1/delta_g)`.
pub fn zcdp_budget_for_dp(eps_g: f64, delta_g: f64) -> Result<f64> {
    check_delta(delta_g)?;
    if !(eps_g >= 0.0 && eps_g.is_finite()) {
        return Err(invalid(format!("epsilon budget must be finite and >= 0, got {eps_g}")));
    }
    let log_inv_delta = (1.0 / delta_g).ln();
    // Rationalized to avoid cancellation when eps_g << L.
    let root_gap = eps_g / ((log_inv_delta + eps_g).sqrt() + log_inv_delta.sqrt());
    Ok(root_gap * root_gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(p: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(p.to_vec()).unwrap()
    }

    fn ord(a: f64) -> RenyiOrder {
        RenyiOrder::new(a).unwrap()
    }

    #[test]
    fn divergence_examples() {
        let half = dist(&[0.5, 0.5]);
        assert_eq!(renyi_divergence_discrete(&half, &half, ord(2.0)).unwrap(), Divergence::Finite(0.0));

        let p = dist(&[0.75, 0.25]);
        let q = dist(&[0.25, 0.75]);
        let d = renyi_divergence_discrete(&p, &q, ord(2.0)).unwrap().value();
        assert!((d - 0.847_297_860_387_203_7).abs() < 1e-12);

        let d = renyi_divergence_discrete(&dist(&[1.0, 0.0]), &half, ord(2.0)).unwrap().value();
        assert!((d - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn symmetric_examples() {
        let p = dist(&[0.75, 0.25]);
        let q = dist(&[0.25, 0.75]);
        let d = symmetric_divergence(&p, &q, ord(2.0)).unwrap().value();
        assert!((d - 0.847_297_860_387_203_7).abs() < 1e-12);
        assert_eq!(symmetric_divergence(&p, &p, ord(2.0)).unwrap(), Divergence::Finite(0.0));
        let point = dist(&[1.0, 0.0]);
        let half = dist(&[0.5, 0.5]);
        assert_eq!(symmetric_divergence(&point, &half, ord(2.0)).unwrap(), Divergence::Unbounded);
    }

    #[test]
    fn divergence_rejects_mismatched_supports() {
        let err = renyi_divergence_discrete(&dist(&[1.0]), &dist(&[0.5, 0.5]), ord(2.0)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        assert!(DiscreteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn kl_order_is_supported() {
        let p = dist(&[0.75, 0.25]);
        let q = dist(&[0.25, 0.75]);
        let kl = renyi_divergence_discrete(&p, &q, ord(1.0)).unwrap().value();
        let expected = 0.75 * (3.0f64).ln() + 0.25 * (1.0f64 / 3.0).ln();
        assert!((kl - expected).abs() < 1e-14);
    }

    #[test]
    fn gaussian_examples() {
        let r = gaussian_individual_rdp(1.0, 1.0, 1.0, ord(2.0)).unwrap();
        assert_eq!(r.rho, 1.0);
        assert_eq!(gaussian_individual_rdp(0.0, 1.0, 5.0, ord(10.0)).unwrap().rho, 0.0);
        assert_eq!(gaussian_individual_rdp(2.0, 1.0, 2.0, ord(3.0)).unwrap().rho, 1.5);
        assert!(gaussian_individual_rdp(1.0, 1.0, 0.0, ord(2.0)).is_err());
    }

    #[test]
    fn conversion_examples() {
        let dp = rdp_to_dp(RdpPoint::new(ord(2.0), 0.5).unwrap(), (-2.0f64).exp()).unwrap();
        assert!((dp.eps - 2.5).abs() < 1e-12);
        let dp = rdp_to_dp(RdpPoint::new(ord(63.0), 0.135).unwrap(), 1e-5).unwrap();
        assert!((dp.eps - 0.3207).abs() < 1e-4);
        let dp = rdp_to_dp(RdpPoint::new(ord(11.0), 0.0).unwrap(), (-10.0f64).exp()).unwrap();
        assert!((dp.eps - 1.0).abs() < 1e-12);
        let err = rdp_to_dp(RdpPoint::new(ord(1.0), 0.1).unwrap(), 1e-5).unwrap_err();
        assert_eq!(err, Error::UnsupportedOrder(1.0));
    }

    #[test]
    fn best_dp_examples() {
        let single = RdpCurve::new(vec![RdpPoint::new(ord(2.0), 0.5).unwrap()]).unwrap();
        let (dp, order) = best_dp_over_curve(&single, (-2.0f64).exp()).unwrap();
        assert!((dp.eps - 2.5).abs() < 1e-12);
        assert_eq!(order.alpha(), 2.0);

        let ints: Vec<f64> = (2..=256).map(f64::from).collect();
        let curve = RdpCurve::linear(&ints, 180.0 / (2.0 * 130.0 * 130.0)).unwrap();
        let (dp, order) = best_dp_over_curve(&curve, 1e-5).unwrap();
        assert!((0.49..=0.51).contains(&dp.eps), "{}", dp.eps);
        assert_eq!(order.alpha(), 47.0);

        assert!(best_dp_over_curve(&RdpCurve::new(vec![]).unwrap(), 1e-5).is_err());
    }

    #[test]
    fn best_dp_breaks_ties_toward_smaller_order() {
        // rho chosen so that alpha = 2 and alpha = 3 give the same epsilon.
        let l = (1.0f64 / 0.01).ln();
        let curve = RdpCurve::new(vec![
            RdpPoint::new(ord(2.0), l / 2.0).unwrap(),
            RdpPoint::new(ord(3.0), l).unwrap(),
        ])
        .unwrap();
        let (_, order) = best_dp_over_curve(&curve, 0.01).unwrap();
        assert_eq!(order.alpha(), 2.0);
    }

    #[test]
    fn curve_orders_must_increase() {
        let a = RdpPoint::new(ord(3.0), 0.1).unwrap();
        let b = RdpPoint::new(ord(2.0), 0.1).unwrap();
        assert!(RdpCurve::new(vec![a, b]).is_err());
        assert!(RdpCurve::new(vec![a, a]).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let grid = default_orders();
        assert_eq!(grid.first(), Some(&1.25));
        assert_eq!(grid.last(), Some(&256.0));
        assert!(grid.contains(&63.0) && grid.contains(&4.75) && grid.contains(&128.0));
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        // 16 quarter steps (2, 3, 4, 5 shared with the integers) + 63 integers + 2.
        assert_eq!(grid.len(), 12 + 63 + 2);
    }

    /// Independent oracle: golden-section search for min over alpha of
    /// `alpha * b + l / (alpha - 1)`.
    fn min_zcdp_eps(b: f64, l: f64) -> f64 {
        let f = |a: f64| a * b + l / (a - 1.0);
        let (mut lo, mut hi) = (1.0 + 1e-9, 1e9);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..400 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if f(m1) < f(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        f(0.5 * (lo + hi))
    }

    #[test]
    fn zcdp_examples() {
        let b = zcdp_budget_for_dp(1.0, (-1.0f64).exp()).unwrap();
        assert!((b - (3.0 - 2.0 * 2f64.sqrt())).abs() < 1e-12);
        assert!((min_zcdp_eps(b, 1.0) - 1.0).abs() < 1e-9);

        assert_eq!(zcdp_budget_for_dp(0.0, 0.3).unwrap(), 0.0);

        let b = zcdp_budget_for_dp(1.0, 1e-5).unwrap();
        assert!((b - 0.020_819_938_339_535_5).abs() < 1e-12, "{b}");
        assert!((min_zcdp_eps(b, (1e5f64).ln()) - 1.0).abs() < 1e-9);

        assert!(zcdp_budget_for_dp(1.0, 1.0).is_err());
        assert!(zcdp_budget_for_dp(1.0, 0.0).is_err());
    }

    fn arb_dist(len: usize) -> impl Strategy<Value = DiscreteDistribution> {
        proptest::collection::vec(0.01f64..1.0, len)
            .prop_map(|w| DiscreteDistribution::from_weights(w).unwrap())
    }

    proptest! {
        #[test]
        fn divergence_is_nonnegative_and_zero_on_identity(p in arb_dist(5), q in arb_dist(5), a in 1.0f64..64.0) {
            let d = renyi_divergence_discrete(&p, &q, ord(a)).unwrap().value();
            prop_assert!(d >= 0.0);
            prop_assert_eq!(renyi_divergence_discrete(&p, &p, ord(a)).unwrap().value(), 0.0);
        }

        #[test]
        fn divergence_nondecreasing_in_order(p in arb_dist(4), q in arb_dist(4)) {
            let grid = [1.0, 1.5, 2.0, 4.0, 8.0, 16.0];
            let values: Vec<f64> = grid
                .iter()
                .map(|&a| renyi_divergence_discrete(&p, &q, ord(a)).unwrap().value())
                .collect();
            for w in values.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12, "{:?}", values);
            }
        }

        #[test]
        fn divergence_adds_over_products(
            p1 in arb_dist(3), q1 in arb_dist(3), p2 in arb_dist(4), q2 in arb_dist(4), a in 1.0f64..32.0,
        ) {
            let joint = renyi_divergence_discrete(&p1.product(&p2), &q1.product(&q2), ord(a)).unwrap().value();
            let sum = renyi_divergence_discrete(&p1, &q1, ord(a)).unwrap().value()
                + renyi_divergence_discrete(&p2, &q2, ord(a)).unwrap().value();
            prop_assert!((joint - sum).abs() < 1e-10, "{} vs {}", joint, sum);
        }

        #[test]
        fn conversion_is_monotone(rho in 0.0f64..5.0, a in 1.1f64..100.0, d1 in 1e-9f64..0.5, d2 in 1e-9f64..0.5) {
            prop_assume!(d1 < d2);
            let point = RdpPoint::new(ord(a), rho).unwrap();
            prop_assert!(rdp_to_dp(point, d1).unwrap().eps > rdp_to_dp(point, d2).unwrap().eps);
            let larger = RdpPoint::new(ord(a + 1.0), rho).unwrap();
            prop_assert!(rdp_to_dp(larger, d1).unwrap().eps <= rdp_to_dp(point, d1).unwrap().eps);
        }

        #[test]
        fn zcdp_round_trip(eps in 0.01f64..5.0, delta in 1e-10f64..0.5) {
            let b = zcdp_budget_for_dp(eps, delta).unwrap();
            let l = (1.0 / delta).ln();
            // Dense grid minimum; the optimum alpha is 1 + sqrt(l / b).
            let best = (0..200_000)
                .map(|i| 1.0 + 1e-4 * (1.05f64).powf(i as f64 / 100.0))
                .take_while(|a| *a < 1e8)
                .map(|a| a * b + l / (a - 1.0))
                .fold(f64::INFINITY, f64::min);
            prop_assert!((best - eps).abs() < 1e-6, "{} vs {}", best, eps);
        }
    }
}
