use nalgebra::{DMatrix, DVector};

use super::ik::{rms, Limits, Targets};
use super::lm::{minimize, LeastSquares};
use super::{IKSettings, LabeledPoint};
use crate::error::{Error, Result};
use crate::kinematics::{check_inputs, pose_frames, JacobianTarget, Pose};
use crate::model::{ScaleBounds, ScaleSet, SkeletalModel};

const MIN_MARKERS_PER_CHAIN: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleFit {
    pub scales: ScaleSet,
    pub pose: Pose,
    /// Marker RMS distance at the solution, meters.
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Parameter layout: `[s_0x, s_0y, s_0z, …, s_(B-1)z, θ_0, …, θ_(J-1)]`.
struct ScaleProblem<'a> {
    model: &'a SkeletalModel,
    targets: &'a Targets,
    limits: Limits,
    bounds: ScaleBounds,
    sqrt_prior: f64,
}

impl ScaleProblem<'_> {
    fn n_scales(&self) -> usize {
        3 * self.model.segment_count()
    }

    fn split(&self, x: &DVector<f64>) -> (ScaleSet, Vec<f64>) {
        let ns = self.n_scales();
        let scales = ScaleSet::from_flat(&x.as_slice()[..ns]).expect("length is a multiple of 3");
        (scales, x.as_slice()[ns..].to_vec())
    }

    fn marker_rows(&self) -> usize {
        3 * self.targets.anchors.len()
    }

    fn prior_rows(&self) -> usize {
        if self.sqrt_prior > 0.0 {
            self.n_scales()
        } else {
            0
        }
    }

    fn rows(&self) -> usize {
        self.marker_rows() + self.prior_rows() + self.limits.penalty_rows()
    }

    fn target_sq_error(&self, x: &DVector<f64>) -> f64 {
        let (scales, coords) = self.split(x);
        let frames = pose_frames(self.model, &coords, &scales);
        self.targets
            .anchors
            .iter()
            .zip(&self.targets.points)
            .map(|(a, t)| (frames.point(a, &scales) - t).norm_squared())
            .sum()
    }
}

impl LeastSquares for ScaleProblem<'_> {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let (scales, coords) = self.split(x);
        let frames = pose_frames(self.model, &coords, &scales);
        let mut r = DVector::zeros(self.rows());
        for (i, (a, t)) in self
            .targets
            .anchors
            .iter()
            .zip(&self.targets.points)
            .enumerate()
        {
            r.fixed_rows_mut::<3>(3 * i)
                .copy_from(&(frames.point(a, &scales) - t));
        }
        let row = self.marker_rows();
        for k in 0..self.prior_rows() {
            r[row + k] = self.sqrt_prior * (x[k] - 1.0);
        }
        self.limits.residuals(x, &mut r, row + self.prior_rows());
        r
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (scales, coords) = self.split(x);
        let frames = pose_frames(self.model, &coords, &scales);
        let ns = self.n_scales();
        let nm = self.marker_rows();
        let mut js = DMatrix::zeros(nm, ns);
        let mut jc = DMatrix::zeros(nm, coords.len());
        for (i, a) in self.targets.anchors.iter().enumerate() {
            frames.jacobian_block(
                self.model,
                a,
                &scales,
                JacobianTarget::Scales,
                &mut js,
                3 * i,
            );
            frames.jacobian_block(
                self.model,
                a,
                &scales,
                JacobianTarget::Coordinates,
                &mut jc,
                3 * i,
            );
        }
        let mut j = DMatrix::zeros(self.rows(), x.len());
        j.view_mut((0, 0), (nm, ns)).copy_from(&js);
        j.view_mut((0, ns), (nm, coords.len())).copy_from(&jc);
        for k in 0..self.prior_rows() {
            j[(nm + k, k)] = self.sqrt_prior;
        }
        self.limits.jacobian(x, &mut j, nm + self.prior_rows());
        j
    }

    fn project(&self, x: &mut DVector<f64>) {
        for k in 0..self.n_scales() {
            x[k] = x[k].clamp(self.bounds.min, self.bounds.max);
        }
        self.limits.project(x);
    }
}

/// Fits per-segment scales and a static pose jointly to a labeled static
/// marker set.
pub fn fit_scales(
    model: &SkeletalModel,
    static_markers: &[LabeledPoint],
    static_pose_guess: &Pose,
    settings: &IKSettings,
) -> Result<ScaleFit> {
    fit_scales_with_prior(model, static_markers, static_pose_guess, settings, 0.0)
}

/// As [`fit_scales`], adding `prior_weight · ‖s − 1‖²` to the objective. A
/// positive weight lifts the per-segment marker count requirement.
pub fn fit_scales_with_prior(
    model: &SkeletalModel,
    static_markers: &[LabeledPoint],
    static_pose_guess: &Pose,
    settings: &IKSettings,
    prior_weight: f64,
) -> Result<ScaleFit> {
    settings.validate()?;
    if !(prior_weight >= 0.0 && prior_weight.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "scale prior weight {prior_weight}"
        )));
    }
    let b = model.segment_count();
    check_inputs(model, static_pose_guess, &ScaleSet::unit(b))?;
    let targets = Targets::resolve(model, static_markers)?;
    if prior_weight == 0.0 {
        for s in 0..b {
            let n = targets
                .anchors
                .iter()
                .filter(|a| model.is_ancestor_or_self(s, a.segment))
                .count();
            if n < MIN_MARKERS_PER_CHAIN {
                return Err(Error::InsufficientMarkers(format!(
                    "segment `{}` and its descendants carry {n} target(s), need {MIN_MARKERS_PER_CHAIN}",
                    model.segments()[s].name
                )));
            }
        }
    }

    let problem = ScaleProblem {
        model,
        targets: &targets,
        limits: Limits::new(model, settings, 3 * b),
        bounds: ScaleBounds::default(),
        sqrt_prior: prior_weight.sqrt(),
    };
    let mut x0 = DVector::from_element(3 * b + model.coordinate_count(), 1.0);
    x0.rows_mut(3 * b, model.coordinate_count())
        .copy_from(&static_pose_guess.values);
    let out = minimize(&problem, x0, settings.lm());
    let rms = rms(problem.target_sq_error(&out.x), targets.anchors.len());
    let (scales, coords) = problem.split(&out.x);
    Ok(ScaleFit {
        scales,
        pose: Pose::new(coords),
        rms,
        iterations: out.iterations,
        converged: out.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::marker_positions;
    use nalgebra::Vector3;

    fn known_scales(b: usize) -> ScaleSet {
        ScaleSet {
            factors: (0..b)
                .map(|i| {
                    let f = i as f64;
                    Vector3::new(
                        1.0 + 0.1 * (f * 0.7).sin(),
                        1.0 + 0.12 * (f * 1.3).cos(),
                        1.0 - 0.08 * (f * 0.4).sin(),
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn recovers_known_scales_at_zero_noise() {
        let model = SkeletalModel::generic();
        let truth = known_scales(model.segment_count());
        let pose = Pose::default_for(&model);
        let markers = marker_positions(&model, &pose, &truth).unwrap();
        let fit = fit_scales(&model, &markers, &pose, &IKSettings::default()).unwrap();
        assert!(fit.rms < 1e-5, "rms {}", fit.rms);
        for (s, (got, want)) in fit.scales.factors.iter().zip(&truth.factors).enumerate() {
            assert!(
                (got - want).amax() < 1e-4,
                "segment {s}: {got:?} vs {want:?}"
            );
        }
    }

    #[test]
    fn unit_markers_give_unit_scales() {
        let model = SkeletalModel::generic();
        let pose = Pose::default_for(&model);
        let markers =
            marker_positions(&model, &pose, &ScaleSet::unit(model.segment_count())).unwrap();
        let fit = fit_scales(&model, &markers, &pose, &IKSettings::default()).unwrap();
        for f in &fit.scales.factors {
            assert!((f - Vector3::repeat(1.0)).amax() < 1e-6);
        }
    }

    #[test]
    fn too_few_markers_needs_prior() {
        let model = SkeletalModel::generic();
        let pose = Pose::default_for(&model);
        let markers: Vec<_> =
            marker_positions(&model, &pose, &ScaleSet::unit(model.segment_count()))
                .unwrap()
                .into_iter()
                .take(30)
                .collect();
        let err = fit_scales(&model, &markers, &pose, &IKSettings::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientMarkers(_)));
        let fit =
            fit_scales_with_prior(&model, &markers, &pose, &IKSettings::default(), 1e-2).unwrap();
        assert!(fit
            .scales
            .factors
            .iter()
            .all(|f| f.iter().all(|v| (0.5..=2.0).contains(v))));
    }

    #[test]
    fn scales_stay_within_clamp() {
        let model = SkeletalModel::generic();
        let pose = Pose::default_for(&model);
        // Markers blown up far beyond any plausible body.
        let markers: Vec<_> =
            marker_positions(&model, &pose, &ScaleSet::unit(model.segment_count()))
                .unwrap()
                .into_iter()
                .map(|(l, p)| (l, p * 5.0))
                .collect();
        let fit = fit_scales(&model, &markers, &pose, &IKSettings::default()).unwrap();
        assert!(fit
            .scales
            .factors
            .iter()
            .all(|f| f.iter().all(|v| (0.5..=2.0).contains(v))));
    }
}
