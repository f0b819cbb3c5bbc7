use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `log(1 + e^z) - y z` with `z = θᵀx`, labels in `{0, 1}`.
    Logistic,
    /// `½(θᵀx - y)²`.
    Squared,
}

/// A per-example loss with optional L2 regularization `λ/2 ‖θ‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default)]
    pub regularization: f64,
}

impl LossSpec {
    pub fn logistic() -> Self {
        Self {
            kind: LossKind::Logistic,
            regularization: 0.0,
        }
    }

    pub fn squared() -> Self {
        Self {
            kind: LossKind::Squared,
            regularization: 0.0,
        }
    }

    pub fn with_regularization(mut self, lambda: f64) -> Self {
        self.regularization = lambda;
        self
    }

    fn check(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        if theta.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn loss(&self, theta: &[f64], x: &[f64], y: f64) -> Result<f64> {
        self.check(theta, x)?;
        let z = dot(theta, x);
        let data_term = match self.kind {
            LossKind::Logistic => softplus(z) - y * z,
            LossKind::Squared => 0.5 * (z - y) * (z - y),
        };
        Ok(data_term + 0.5 * self.regularization * dot(theta, theta))
    }

    pub fn gradient(&self, theta: &[f64], x: &[f64], y: f64) -> Result<Vec<f64>> {
        self.check(theta, x)?;
        let z = dot(theta, x);
        let scale = match self.kind {
            LossKind::Logistic => sigmoid(z) - y,
            LossKind::Squared => z - y,
        };
        Ok(x
            .iter()
            .zip(theta)
            .map(|(xi, ti)| scale * xi + self.regularization * ti)
            .collect())
    }

    /// Hard label in `{0, 1}`.
    pub fn predict(&self, theta: &[f64], x: &[f64]) -> f64 {
        let z = dot(theta, x);
        let threshold = match self.kind {
            LossKind::Logistic => 0.0,
            LossKind::Squared => 0.5,
        };
        if z >= threshold {
            1.0
        } else {
            0.0
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `‖fd − g‖ / ‖g‖` between the analytic gradient and central differences
/// with step `h`.
pub fn finite_difference_error(spec: &LossSpec, theta: &[f64], x: &[f64], y: f64, h: f64) -> f64 {
    let g = spec.gradient(theta, x, y).expect("dimensions agree");
    let mut diff = 0.0;
    for j in 0..theta.len() {
        let mut up = theta.to_vec();
        let mut down = theta.to_vec();
        up[j] += h;
        down[j] -= h;
        let fd = (spec.loss(&up, x, y).expect("dimensions agree") - spec.loss(&down, x, y).expect("dimensions agree"))
            / (2.0 * h);
        diff += (fd - g[j]) * (fd - g[j]);
    }
    let scale = dot(&g, &g).sqrt();
    if scale == 0.0 {
        diff.sqrt()
    } else {
        diff.sqrt() / scale
    }
}
