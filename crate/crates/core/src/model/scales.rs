use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Plausibility gate for scale factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for ScaleBounds {
    fn default() -> Self {
        ScaleBounds { min: 0.5, max: 2.0 }
    }
}

/// Per-segment 3-axis scale factors, ordered as the model's segments.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSet {
    pub factors: Vec<Vector3<f64>>,
}

impl ScaleSet {
    pub fn unit(segments: usize) -> Self {
        ScaleSet {
            factors: vec![Vector3::repeat(1.0); segments],
        }
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Flattened `[s0x, s0y, s0z, s1x, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.factors
            .iter()
            .flat_map(|f| f.iter().copied())
            .collect()
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if !values.len().is_multiple_of(3) {
            return Err(Error::InvalidArgument(format!(
                "flat scale vector length {} is not a multiple of 3",
                values.len()
            )));
        }
        Ok(ScaleSet {
            factors: values
                .chunks_exact(3)
                .map(Vector3::from_column_slice)
                .collect(),
        })
    }

    pub fn check_len(&self, segments: usize) -> Result<()> {
        if self.factors.len() != segments {
            return Err(Error::DimensionMismatch {
                what: "scale set",
                expected: segments,
                actual: self.factors.len(),
            });
        }
        Ok(())
    }

    pub fn validate(&self, segments: usize, bounds: ScaleBounds) -> Result<()> {
        self.check_len(segments)?;
        for (i, f) in self.factors.iter().enumerate() {
            for &v in f.iter() {
                if !(v > 0.0) || v < bounds.min || v > bounds.max {
                    return Err(Error::InvalidArgument(format!(
                        "scale factor {v} of segment {i} outside [{}, {}]",
                        bounds.min, bounds.max
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn clamp(&mut self, bounds: ScaleBounds) {
        for f in &mut self.factors {
            for v in f.iter_mut() {
                *v = v.clamp(bounds.min, bounds.max);
            }
        }
    }
}
