//! Scale fitting, inverse kinematics, trajectory smoothing and the composed
//! two-view reconstruction pipeline.

mod filter;
mod ik;
mod lm;
mod pipeline;
mod scale;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use filter::{butterworth_lowpass, Butterworth};
pub use ik::{inverse_kinematics_frame, inverse_kinematics_sequence, IkSolution, SequenceSolution};
pub use pipeline::{reconstruct_sequence, PipelineReport, PipelineSettings, Reconstruction};
pub use scale::{fit_scales, fit_scales_with_prior, ScaleFit};

/// How constrained coordinates are kept inside their ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitMode {
    /// Clamp every trial step onto the range box.
    Project,
    /// Quadratic penalty on range violation.
    Penalty,
}

/// Levenberg-Marquardt settings shared by scaling and IK.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IKSettings {
    pub max_iterations: usize,
    pub damping_init: f64,
    /// Convergence threshold on the (projected) step norm.
    pub convergence_tol: f64,
    pub limit_mode: LimitMode,
    pub penalty_weight: f64,
}

impl Default for IKSettings {
    fn default() -> Self {
        IKSettings {
            max_iterations: 100,
            damping_init: 1e-3,
            convergence_tol: 1e-8,
            limit_mode: LimitMode::Project,
            penalty_weight: 100.0,
        }
    }
}

impl IKSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.damping_init, self.convergence_tol, self.penalty_weight]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if self.max_iterations == 0 || !positive {
            return Err(Error::InvalidArgument(format!(
                "invalid IK settings {self:?}"
            )));
        }
        Ok(())
    }

    pub(crate) fn lm(&self) -> lm::LmConfig {
        lm::LmConfig {
            max_iterations: self.max_iterations,
            damping_init: self.damping_init,
            step_tol: self.convergence_tol,
        }
    }
}

/// A labeled 3D point, e.g. a marker or keypoint target.
pub type LabeledPoint = (String, nalgebra::Vector3<f64>);
