use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rdp::{gaussian_individual_rdp, RenyiOrder};

/// Absolute tolerance requested from the integrator.
pub const QUADRATURE_TOLERANCE: f64 = 1e-9;

/// Half-width of the integration window in standard deviations.
const WINDOW: f64 = 12.0;

/// `D_α(N(a, σ²) ‖ N(b, σ²))` by numerical integration.
///
/// For `α > 1` the integrand `p^α q^{1−α}` is itself a Gaussian bump centred
/// at `αa + (1−α)b`; the window covers ±12σ around that centre and the
/// integrand is scaled by its peak value so the quadrature works on O(1)
/// numbers. For `α = 1` the KL integrand is integrated around `a`.
pub fn numeric_gaussian_divergence(mean_a: f64, mean_b: f64, sigma: f64, order: RenyiOrder) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !(mean_a.is_finite() && mean_b.is_finite()) {
        return Err(invalid("means must be finite"));
    }
    let log_pdf = |x: f64, m: f64| {
        let z = (x - m) / sigma;
        -0.5 * z * z - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln()
    };
    let alpha = order.alpha();
    if order.is_kl() {
        let out = quadrature::double_exponential::integrate(
            |x| {
                let lp = log_pdf(x, mean_a);
                lp.exp() * (lp - log_pdf(x, mean_b))
            },
            mean_a - WINDOW * sigma,
            mean_a + WINDOW * sigma,
            QUADRATURE_TOLERANCE,
        );
        check(out.error_estimate)?;
        return Ok(out.integral.max(0.0));
    }
    let log_integrand = |x: f64| alpha * log_pdf(x, mean_a) + (1.0 - alpha) * log_pdf(x, mean_b);
    let centre = alpha * mean_a + (1.0 - alpha) * mean_b;
    let peak = log_integrand(centre);
    let out = quadrature::double_exponential::integrate(
        |x| (log_integrand(x) - peak).exp(),
        centre - WINDOW * sigma,
        centre + WINDOW * sigma,
        QUADRATURE_TOLERANCE,
    );
    check(out.error_estimate)?;
    Ok(((peak + out.integral.ln()) / (alpha - 1.0)).max(0.0))
}

fn check(residual: f64) -> Result<()> {
    if residual.is_finite() && residual <= QUADRATURE_TOLERANCE {
        Ok(())
    } else {
        Err(Error::Quadrature { residual })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianCheck {
    pub gap: f64,
    pub sigma: f64,
    pub order: f64,
    pub closed_form: f64,
    pub quadrature: f64,
    pub abs_error: f64,
}

/// Closed form against quadrature over gaps × sigmas × orders.
pub fn gaussian_grid(gaps: &[f64], sigmas: &[f64], orders: &[f64]) -> Result<Vec<GaussianCheck>> {
    let mut out = Vec::new();
    for &gap in gaps {
        for &sigma in sigmas {
            for &alpha in orders {
                let order = RenyiOrder::new(alpha)?;
                let closed_form = gaussian_individual_rdp(gap, 1.0, sigma, order)?.rho;
                let quadrature = numeric_gaussian_divergence(gap, 0.0, sigma, order)?;
                out.push(GaussianCheck {
                    gap,
                    sigma,
                    order: alpha,
                    closed_form,
                    quadrature,
                    abs_error: (closed_form - quadrature).abs(),
                });
            }
        }
    }
    Ok(out)
}

/// The 36-point grid: gaps `{0.5, 1, 2}`, sigmas `{0.5, 1, 2}`, orders `{1.5, 2, 8, 63}`.
pub fn default_gaussian_grid() -> Result<Vec<GaussianCheck>> {
    gaussian_grid(&[0.5, 1.0, 2.0], &[0.5, 1.0, 2.0], &[1.5, 2.0, 8.0, 63.0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ord(a: f64) -> RenyiOrder {
        RenyiOrder::new(a).unwrap()
    }

    #[test]
    fn examples() {
        assert!(numeric_gaussian_divergence(0.3, 0.3, 1.0, ord(2.0)).unwrap().abs() < 1e-12);
        assert!((numeric_gaussian_divergence(1.0, 0.0, 1.0, ord(2.0)).unwrap() - 1.0).abs() < 1e-6);
        assert!((numeric_gaussian_divergence(2.0, 0.0, 2.0, ord(3.0)).unwrap() - 1.5).abs() < 1e-6);
    }

    #[test]
    fn kl_limit() {
        let kl = numeric_gaussian_divergence(1.0, 0.0, 2.0, ord(1.0)).unwrap();
        assert!((kl - 0.125).abs() < 1e-9);
    }

    #[test]
    fn grid_agrees_with_closed_form() {
        let grid = default_gaussian_grid().unwrap();
        assert_eq!(grid.len(), 36);
        for c in grid {
            assert!(c.abs_error <= 1e-6, "{c:?}");
        }
    }

    #[test]
    fn rejects_bad_sigma() {
        assert!(numeric_gaussian_divergence(0.0, 1.0, 0.0, ord(2.0)).is_err());
    }
}
