//! Training objective terms over predicted and ground-truth motion, with
//! analytic gradients.
//!
//! Free rotational angles are compared on the unit circle, constrained
//! angles directly. Root translations take part only through the keypoint
//! term, which is root-relative and therefore blind to them. Every L1 term
//! uses the subgradient 0 at ties.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{pose_frames, JacobianTarget, MotionSequence, Pose};
use crate::model::{Anchor, ScaleSet, SkeletalModel};

/// An angle embedded on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitCircleAngle {
    pub cos: f64,
    pub sin: f64,
}

impl UnitCircleAngle {
    pub fn from_angle(theta: f64) -> Self {
        let (sin, cos) = theta.sin_cos();
        UnitCircleAngle { cos, sin }
    }

    pub fn l1_distance(&self, other: &UnitCircleAngle) -> f64 {
        (self.cos - other.cos).abs() + (self.sin - other.sin).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_pos: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_pos: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    AngleFree,
    AngleConstrained,
    Bio,
    Scale,
    Position,
    Total,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::AngleFree,
        LossKind::AngleConstrained,
        LossKind::Bio,
        LossKind::Scale,
        LossKind::Position,
        LossKind::Total,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::AngleFree => "angle_free",
            LossKind::AngleConstrained => "angle_constrained",
            LossKind::Bio => "bio",
            LossKind::Scale => "scale",
            LossKind::Position => "position",
            LossKind::Total => "total",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "angle_free" | "free" => Ok(LossKind::AngleFree),
            "angle_constrained" | "constrained" => Ok(LossKind::AngleConstrained),
            "bio" => Ok(LossKind::Bio),
            "scale" => Ok(LossKind::Scale),
            "position" | "pos" => Ok(LossKind::Position),
            "total" => Ok(LossKind::Total),
            _ => Err(Error::InvalidArgument(format!(
                "unknown loss `{s}` (expected one of angle_free, angle_constrained, bio, scale, position, total)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientTarget {
    /// Frame-major `T · J` vector over the predicted coordinates.
    Coordinates,
    /// `3 · B` vector over the predicted scales.
    Scales,
}

/// Everything the objective compares.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub model: &'a SkeletalModel,
    pub pred_motion: &'a MotionSequence,
    pub pred_scales: &'a ScaleSet,
    pub truth_motion: &'a MotionSequence,
    pub truth_scales: &'a ScaleSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub angle_free: f64,
    pub angle_constrained: f64,
    pub bio: f64,
    pub scale: f64,
    pub position: f64,
    pub total: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_same_shape(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<()> {
    if pred.nrows() != truth.nrows() {
        return Err(Error::DimensionMismatch {
            what: "frame count",
            expected: truth.nrows(),
            actual: pred.nrows(),
        });
    }
    if pred.ncols() != truth.ncols() {
        return Err(Error::DimensionMismatch {
            what: "angle count",
            expected: truth.ncols(),
            actual: pred.ncols(),
        });
    }
    if pred.nrows() == 0 {
        return Err(Error::InvalidArgument("loss over zero frames".into()));
    }
    Ok(())
}

/// `∂/∂θ ‖a(θ) − a(φ)‖₁` with the tie convention.
fn circle_l1_derivative(theta: f64, phi: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    -s * sign(c - cp) + c * sign(s - sp)
}

fn circle_l1(theta: f64, phi: f64) -> f64 {
    UnitCircleAngle::from_angle(theta).l1_distance(&UnitCircleAngle::from_angle(phi))
}

/// Mean over frames of the unit-circle L1 distance; `pred` and `truth` are
/// `T × F` matrices of free rotational angles.
pub fn angle_loss_free(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(pred, truth)?;
    let sum: f64 = pred
        .iter()
        .zip(truth.iter())
        .map(|(p, q)| circle_l1(*p, *q))
        .sum();
    Ok(sum / pred.nrows() as f64)
}

/// Mean over frames of the L1 distance of constrained angles (`T × C`).
pub fn angle_loss_constrained(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(pred, truth)?;
    let sum: f64 = pred
        .iter()
        .zip(truth.iter())
        .map(|(p, q)| (p - q).abs())
        .sum();
    Ok(sum / pred.nrows() as f64)
}

fn check_ranges(pred: &DMatrix<f64>, ranges: &[(f64, f64)]) -> Result<()> {
    if pred.ncols() != ranges.len() {
        return Err(Error::DimensionMismatch {
            what: "constraint ranges",
            expected: pred.ncols(),
            actual: ranges.len(),
        });
    }
    if let Some((lo, hi)) = ranges.iter().find(|(lo, hi)| !(lo < hi)) {
        return Err(Error::InvalidArgument(format!(
            "invalid range [{lo}, {hi}]"
        )));
    }
    if pred.nrows() == 0 {
        return Err(Error::InvalidArgument("loss over zero frames".into()));
    }
    Ok(())
}

/// Range violation penalty: the indicator tests the raw angle, the distance
/// to the violated bound is measured on the unit circle.
pub fn bio_constraint_loss(pred: &DMatrix<f64>, ranges: &[(f64, f64)]) -> Result<f64> {
    check_ranges(pred, ranges)?;
    let mut sum = 0.0;
    for t in 0..pred.nrows() {
        for (c, &(lo, hi)) in ranges.iter().enumerate() {
            let p = pred[(t, c)];
            if p >= hi {
                sum += circle_l1(p, hi);
            }
            if p <= lo {
                sum += circle_l1(p, lo);
            }
        }
    }
    Ok(sum / pred.nrows() as f64)
}

/// Mean over segments of the per-segment L1 scale difference.
pub fn scale_loss(pred: &ScaleSet, truth: &ScaleSet) -> Result<f64> {
    pred.check_len(truth.len())?;
    if pred.is_empty() {
        return Err(Error::InvalidArgument(
            "scale loss over zero segments".into(),
        ));
    }
    let sum: f64 = pred
        .factors
        .iter()
        .zip(&truth.factors)
        .map(|(a, b)| (a - b).abs().sum())
        .sum();
    Ok(sum / pred.len() as f64)
}

fn check_motion(
    model: &SkeletalModel,
    pred: &MotionSequence,
    truth: &MotionSequence,
) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            what: "frame count",
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("loss over zero frames".into()));
    }
    pred.check(model)?;
    truth.check(model)
}

struct KeypointFrames {
    anchors: Vec<Anchor>,
    root: usize,
}

impl KeypointFrames {
    fn new(model: &SkeletalModel) -> Self {
        KeypointFrames {
            anchors: (0..model.keypoint_count())
                .map(|k| model.keypoint_anchor(k))
                .collect(),
            root: model.root_keypoint(),
        }
    }

    fn relative(&self, model: &SkeletalModel, pose: &Pose, scales: &ScaleSet) -> Vec<Vector3<f64>> {
        let frames = pose_frames(model, pose.values.as_slice(), scales);
        let pts: Vec<_> = self
            .anchors
            .iter()
            .map(|a| frames.point(a, scales))
            .collect();
        let root = pts[self.root];
        pts.iter().map(|p| p - root).collect()
    }
}

/// Mean L1 distance between root-relative keypoints, over frames and
/// keypoints.
pub fn keypoint_position_loss(
    model: &SkeletalModel,
    pred_motion: &MotionSequence,
    pred_scales: &ScaleSet,
    truth_motion: &MotionSequence,
    truth_scales: &ScaleSet,
) -> Result<f64> {
    check_motion(model, pred_motion, truth_motion)?;
    pred_scales.check_len(model.segment_count())?;
    truth_scales.check_len(model.segment_count())?;
    let kf = KeypointFrames::new(model);
    let mut sum = 0.0;
    for (p, q) in pred_motion.frames.iter().zip(&truth_motion.frames) {
        let a = kf.relative(model, p, pred_scales);
        let b = kf.relative(model, q, truth_scales);
        sum += a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs().sum())
            .sum::<f64>();
    }
    Ok(sum / (pred_motion.len() * model.keypoint_count()) as f64)
}

fn ranges_of(model: &SkeletalModel, coords: &[usize]) -> Vec<(f64, f64)> {
    coords
        .iter()
        .map(|&c| {
            model.coordinates()[c]
                .range
                .expect("constrained coordinates carry ranges")
        })
        .collect()
}

/// All terms and their weighted sum.
pub fn total_loss(inputs: &LossInputs<'_>, weights: &LossWeights) -> Result<LossBreakdown> {
    if !(weights.lambda_pos >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda_pos {}",
            weights.lambda_pos
        )));
    }
    let LossInputs {
        model,
        pred_motion,
        pred_scales,
        truth_motion,
        truth_scales,
    } = *inputs;
    check_motion(model, pred_motion, truth_motion)?;
    let split = model.free_constrained_split();
    let (pf, tf) = (
        pred_motion.select(&split.free_rotational),
        truth_motion.select(&split.free_rotational),
    );
    let (pc, tc) = (
        pred_motion.select(&split.constrained),
        truth_motion.select(&split.constrained),
    );
    let angle_free = angle_loss_free(&pf, &tf)?;
    let angle_constrained = angle_loss_constrained(&pc, &tc)?;
    let bio = bio_constraint_loss(&pc, &ranges_of(model, &split.constrained))?;
    let scale = scale_loss(pred_scales, truth_scales)?;
    let position =
        keypoint_position_loss(model, pred_motion, pred_scales, truth_motion, truth_scales)?;
    Ok(LossBreakdown {
        angle_free,
        angle_constrained,
        bio,
        scale,
        position,
        total: angle_free + angle_constrained + scale + bio + weights.lambda_pos * position,
    })
}

/// Value of a single term (or the weighted total).
pub fn loss_value(kind: LossKind, inputs: &LossInputs<'_>, weights: &LossWeights) -> Result<f64> {
    let b = total_loss(inputs, weights)?;
    Ok(match kind {
        LossKind::AngleFree => b.angle_free,
        LossKind::AngleConstrained => b.angle_constrained,
        LossKind::Bio => b.bio,
        LossKind::Scale => b.scale,
        LossKind::Position => b.position,
        LossKind::Total => b.total,
    })
}

/// Analytic (sub)gradient of a term with respect to the predicted
/// coordinates or scales.
pub fn loss_gradients(
    kind: LossKind,
    inputs: &LossInputs<'_>,
    weights: &LossWeights,
    wrt: GradientTarget,
) -> Result<DVector<f64>> {
    let LossInputs {
        model,
        pred_motion,
        pred_scales,
        truth_motion,
        truth_scales,
    } = *inputs;
    check_motion(model, pred_motion, truth_motion)?;
    pred_scales.check_len(model.segment_count())?;
    truth_scales.check_len(model.segment_count())?;
    let t_len = pred_motion.len();
    let j = model.coordinate_count();
    let n = match wrt {
        GradientTarget::Coordinates => t_len * j,
        GradientTarget::Scales => 3 * model.segment_count(),
    };
    let mut g = DVector::zeros(n);
    let inv_t = 1.0 / t_len as f64;
    let split = model.free_constrained_split();

    let want = |k: LossKind| kind == k || kind == LossKind::Total;

    if wrt == GradientTarget::Coordinates {
        for t in 0..t_len {
            let p = &pred_motion.frames[t].values;
            let q = &truth_motion.frames[t].values;
            if want(LossKind::AngleFree) {
                for &c in &split.free_rotational {
                    g[t * j + c] += inv_t * circle_l1_derivative(p[c], q[c]);
                }
            }
            if want(LossKind::AngleConstrained) {
                for &c in &split.constrained {
                    g[t * j + c] += inv_t * sign(p[c] - q[c]);
                }
            }
            if want(LossKind::Bio) {
                for &c in &split.constrained {
                    let (lo, hi) = model.coordinates()[c]
                        .range
                        .expect("constrained coordinates carry ranges");
                    if p[c] >= hi {
                        g[t * j + c] += inv_t * circle_l1_derivative(p[c], hi);
                    }
                    if p[c] <= lo {
                        g[t * j + c] += inv_t * circle_l1_derivative(p[c], lo);
                    }
                }
            }
        }
    }
    if wrt == GradientTarget::Scales && want(LossKind::Scale) {
        let inv_b = 1.0 / model.segment_count() as f64;
        for (s, (a, b)) in pred_scales
            .factors
            .iter()
            .zip(&truth_scales.factors)
            .enumerate()
        {
            for ax in 0..3 {
                g[3 * s + ax] += inv_b * sign(a[ax] - b[ax]);
            }
        }
    }
    if want(LossKind::Position) {
        let w = if kind == LossKind::Total {
            weights.lambda_pos
        } else {
            1.0
        };
        let scale = w / (t_len * model.keypoint_count()) as f64;
        position_gradient(model, inputs, wrt, scale, &mut g);
    }
    Ok(g)
}

fn position_gradient(
    model: &SkeletalModel,
    inputs: &LossInputs<'_>,
    wrt: GradientTarget,
    scale: f64,
    g: &mut DVector<f64>,
) {
    let kf = KeypointFrames::new(model);
    let (target, cols) = match wrt {
        GradientTarget::Coordinates => (JacobianTarget::Coordinates, model.coordinate_count()),
        GradientTarget::Scales => (JacobianTarget::Scales, 3 * model.segment_count()),
    };
    let mut jac = DMatrix::zeros(3 * kf.anchors.len(), cols);
    for (t, (p, q)) in inputs
        .pred_motion
        .frames
        .iter()
        .zip(&inputs.truth_motion.frames)
        .enumerate()
    {
        let frames = pose_frames(model, p.values.as_slice(), inputs.pred_scales);
        let pts: Vec<_> = kf
            .anchors
            .iter()
            .map(|a| frames.point(a, inputs.pred_scales))
            .collect();
        let truth = kf.relative(model, q, inputs.truth_scales);
        jac.fill(0.0);
        for (i, a) in kf.anchors.iter().enumerate() {
            frames.jacobian_block(model, a, inputs.pred_scales, target, &mut jac, 3 * i);
        }
        // d(p_i - p_root) = J_i - J_root; accumulate the sign-weighted rows.
        let root = pts[kf.root];
        let mut weights = DVector::zeros(3 * kf.anchors.len());
        for (i, (p, q)) in pts.iter().zip(&truth).enumerate() {
            if i == kf.root {
                continue;
            }
            let d = (p - root) - q;
            for ax in 0..3 {
                let s = sign(d[ax]);
                weights[3 * i + ax] += s;
                weights[3 * kf.root + ax] -= s;
            }
        }
        let row = jac.tr_mul(&weights) * scale;
        match wrt {
            GradientTarget::Coordinates => {
                let j = model.coordinate_count();
                g.rows_mut(t * j, j).axpy(1.0, &row, 1.0);
            }
            GradientTarget::Scales => *g += row,
        }
    }
}

/// Outcome of a finite-difference gradient check for one loss.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckResult {
    pub loss: String,
    pub draws: usize,
    pub passed: usize,
    /// Draws rejected because an L1 argument sat within the kink margin.
    pub skipped: usize,
    pub worst_relative_error: f64,
    pub pass_rate: f64,
    pub ok: bool,
}

/// Settings of the finite-difference gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckSettings {
    pub draws: usize,
    pub frames: usize,
    pub step: f64,
    pub tolerance: f64,
    pub kink_margin: f64,
    pub required_pass_rate: f64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        GradcheckSettings {
            draws: 1000,
            frames: 2,
            step: 1e-6,
            tolerance: 1e-4,
            kink_margin: 1e-6,
            required_pass_rate: 0.99,
        }
    }
}

/// A random (prediction, truth) pair for gradient checking.
pub struct LossDraw {
    pub pred_motion: MotionSequence,
    pub pred_scales: ScaleSet,
    pub truth_motion: MotionSequence,
    pub truth_scales: ScaleSet,
}

impl LossDraw {
    pub fn random(model: &SkeletalModel, frames: usize, rng: &mut impl Rng) -> Self {
        let motion = |rng: &mut dyn rand::RngCore| {
            let poses = (0..frames)
                .map(|_| {
                    Pose::new(
                        model
                            .coordinates()
                            .iter()
                            .map(|c| match (c.is_rotation(), c.range) {
                                // Reach beyond the range so the bio term is exercised.
                                (true, Some((lo, hi))) => rng.random_range(lo - 0.5..hi + 0.5),
                                (true, None) => {
                                    rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
                                }
                                (false, _) => c.default_value + rng.random_range(-0.3..0.3),
                            })
                            .collect(),
                    )
                })
                .collect();
            MotionSequence::new(poses, 60.0).expect("positive frame rate")
        };
        let scales = |rng: &mut dyn rand::RngCore| ScaleSet {
            factors: (0..model.segment_count())
                .map(|_| Vector3::from_fn(|_, _| rng.random_range(0.8..1.2)))
                .collect(),
        };
        LossDraw {
            pred_motion: motion(rng),
            pred_scales: scales(rng),
            truth_motion: motion(rng),
            truth_scales: scales(rng),
        }
    }

    pub fn inputs<'a>(&'a self, model: &'a SkeletalModel) -> LossInputs<'a> {
        LossInputs {
            model,
            pred_motion: &self.pred_motion,
            pred_scales: &self.pred_scales,
            truth_motion: &self.truth_motion,
            truth_scales: &self.truth_scales,
        }
    }

    /// Smallest distance of any L1 argument of `kind` from its kink. Terms that
    /// vanish identically (the root keypoint against itself) are ignored.
    pub fn kink_distance(&self, model: &SkeletalModel, kind: LossKind) -> f64 {
        let split = model.free_constrained_split();
        let want = |k: LossKind| kind == k || kind == LossKind::Total;
        let mut d = f64::INFINITY;
        for (p, q) in self
            .pred_motion
            .frames
            .iter()
            .zip(&self.truth_motion.frames)
        {
            let (p, q) = (&p.values, &q.values);
            if want(LossKind::AngleFree) {
                for &c in &split.free_rotational {
                    let (a, b) = (
                        UnitCircleAngle::from_angle(p[c]),
                        UnitCircleAngle::from_angle(q[c]),
                    );
                    d = d.min((a.cos - b.cos).abs()).min((a.sin - b.sin).abs());
                }
            }
            for &c in &split.constrained {
                if want(LossKind::AngleConstrained) {
                    d = d.min((p[c] - q[c]).abs());
                }
                if want(LossKind::Bio) {
                    let (lo, hi) = model.coordinates()[c]
                        .range
                        .expect("constrained coordinates carry ranges");
                    d = d.min((p[c] - lo).abs()).min((p[c] - hi).abs());
                    for bound in [lo, hi] {
                        let (a, b) = (
                            UnitCircleAngle::from_angle(p[c]),
                            UnitCircleAngle::from_angle(bound),
                        );
                        d = d.min((a.cos - b.cos).abs()).min((a.sin - b.sin).abs());
                    }
                }
            }
        }
        if want(LossKind::Scale) {
            for (a, b) in self
                .pred_scales
                .factors
                .iter()
                .zip(&self.truth_scales.factors)
            {
                d = d.min((a - b).abs().min());
            }
        }
        if want(LossKind::Position) {
            let kf = KeypointFrames::new(model);
            for (p, q) in self
                .pred_motion
                .frames
                .iter()
                .zip(&self.truth_motion.frames)
            {
                let a = kf.relative(model, p, &self.pred_scales);
                let b = kf.relative(model, q, &self.truth_scales);
                for (i, (x, y)) in a.iter().zip(&b).enumerate() {
                    if i != kf.root {
                        d = d.min((x - y).abs().min());
                    }
                }
            }
        }
        d
    }
}

/// Relative error between the analytic gradient over `[coordinates; scales]`
/// and a central finite difference.
pub fn gradient_relative_error(
    kind: LossKind,
    draw: &LossDraw,
    model: &SkeletalModel,
    weights: &LossWeights,
    step: f64,
) -> Result<f64> {
    let inputs = draw.inputs(model);
    let gc = loss_gradients(kind, &inputs, weights, GradientTarget::Coordinates)?;
    let gs = loss_gradients(kind, &inputs, weights, GradientTarget::Scales)?;
    let analytic: Vec<f64> = gc.iter().chain(gs.iter()).copied().collect();

    let j = model.coordinate_count();
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut motion = draw.pred_motion.clone();
    for idx in 0..gc.len() {
        let (t, c) = (idx / j, idx % j);
        let base = motion.frames[t].values[c];
        let mut eval = |v: f64| -> Result<f64> {
            motion.frames[t].values[c] = v;
            let inputs = LossInputs {
                pred_motion: &motion,
                ..draw.inputs(model)
            };
            loss_value(kind, &inputs, weights)
        };
        let d = (eval(base + step)? - eval(base - step)?) / (2.0 * step);
        motion.frames[t].values[c] = base;
        numeric.push(d);
    }
    let mut scales = draw.pred_scales.clone();
    for idx in 0..gs.len() {
        let (s, ax) = (idx / 3, idx % 3);
        let base = scales.factors[s][ax];
        let mut eval = |v: f64| -> Result<f64> {
            scales.factors[s][ax] = v;
            let inputs = LossInputs {
                pred_scales: &scales,
                ..draw.inputs(model)
            };
            loss_value(kind, &inputs, weights)
        };
        let d = (eval(base + step)? - eval(base - step)?) / (2.0 * step);
        scales.factors[s][ax] = base;
        numeric.push(d);
    }

    let a = DVector::from_vec(analytic);
    let n = DVector::from_vec(numeric);
    let scale = a.norm().max(n.norm());
    if scale < 1e-12 {
        return Ok(0.0);
    }
    Ok((a - n).norm() / scale)
}

/// Finite-difference check of one loss over random off-kink draws.
pub fn gradcheck(
    model: &SkeletalModel,
    kind: LossKind,
    weights: &LossWeights,
    settings: &GradcheckSettings,
    seed: u64,
) -> Result<GradcheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut passed, mut skipped, mut counted) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    // Guard against a pathological configuration that never clears the margin.
    let max_attempts = 100 * settings.draws.max(1);
    while counted < settings.draws {
        if counted + skipped >= max_attempts {
            return Err(Error::InvalidArgument(format!(
                "gradient check for {kind}: only {counted} of {} draws cleared the kink margin",
                settings.draws
            )));
        }
        let draw = LossDraw::random(model, settings.frames, &mut rng);
        if draw.kink_distance(model, kind) < settings.kink_margin {
            skipped += 1;
            continue;
        }
        counted += 1;
        let err = gradient_relative_error(kind, &draw, model, weights, settings.step)?;
        worst = worst.max(err);
        if err <= settings.tolerance {
            passed += 1;
        }
    }
    let pass_rate = passed as f64 / counted.max(1) as f64;
    Ok(GradcheckResult {
        loss: kind.name().to_owned(),
        draws: counted,
        passed,
        skipped,
        worst_relative_error: worst,
        pass_rate,
        ok: pass_rate >= settings.required_pass_rate,
    })
}
