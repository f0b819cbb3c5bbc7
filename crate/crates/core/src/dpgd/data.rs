use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::noise::{GaussianNoise, NoiseSource};

/// Labelled examples for gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if let Some(first) = features.first() {
            let d = first.len();
            if let Some(bad) = features.iter().find(|x| x.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: bad.len(),
                });
            }
        }
        Ok(Self { features, labels })
    }

    /// Reads a CSV with a header row, numeric feature columns and a final
    /// integer label column.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let width = rdr.headers().map_err(|e| Error::Data(e.to_string()))?.len();
        if width < 2 {
            return Err(Error::Data("need at least one feature column and a label column".into()));
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Data(e.to_string()))?;
            let parsed = record
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Data(format!("row {}: {e}", line + 1)))?;
            let (label, row) = parsed
                .split_last()
                .ok_or_else(|| Error::Data(format!("row {} is empty", line + 1)))?;
            if label.fract() != 0.0 {
                return Err(Error::Data(format!("row {}: label {label} is not an integer", line + 1)));
            }
            features.push(row.to_vec());
            labels.push(*label);
        }
        Self::new(features, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Appends a constant 1 feature.
    pub fn with_intercept(mut self) -> Self {
        for x in &mut self.features {
            x.push(1.0);
        }
        self
    }
}

/// Two spherical Gaussian blobs with unit variance whose means sit at
/// `±separation/2` along the all-ones direction. Labels are `0`/`1` with equal
/// probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoBlobs {
    pub n: usize,
    pub d: usize,
    pub separation: f64,
    pub seed: u64,
}

impl TwoBlobs {
    pub fn generate(&self) -> Result<Dataset> {
        if self.d == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(invalid("separation must be finite and >= 0"));
        }
        let mut noise = GaussianNoise::new(self.seed);
        let offset = 0.5 * self.separation / (self.d as f64).sqrt();
        let mut features = Vec::with_capacity(self.n);
        let mut labels = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            // Sign of a fresh normal: a fair coin drawn from the same stream.
            let label = if noise.standard_normal() >= 0.0 { 1.0 } else { 0.0 };
            let shift = if label == 1.0 { offset } else { -offset };
            features.push((0..self.d).map(|_| shift + noise.standard_normal()).collect());
            labels.push(label);
        }
        Dataset::new(features, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_label_column() {
        let ds = Dataset::from_csv("a,b,label\n1.0,2.0,1\n-1,0.5,0\n".as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels(), &[1.0, 0.0]);
        assert!(Dataset::from_csv("a,label\n1.0,0.5\n".as_bytes()).is_err());
        assert!(Dataset::from_csv("a,label\nx,1\n".as_bytes()).is_err());
    }

    #[test]
    fn blobs_are_deterministic_and_balanced() {
        let spec = TwoBlobs {
            n: 1000,
            d: 3,
            separation: 4.0,
            seed: 9,
        };
        let a = spec.generate().unwrap();
        assert_eq!(a, spec.generate().unwrap());
        let ones = a.labels().iter().filter(|&&y| y == 1.0).count();
        assert!((400..600).contains(&ones));
        let with_bias = a.with_intercept();
        assert_eq!(with_bias.dim(), 4);
    }
}
