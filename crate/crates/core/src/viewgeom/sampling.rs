use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::camera::{project, Camera};
use crate::error::{Error, Result};

/// Acceptance rate below which sampling gives up.
const MIN_ACCEPTANCE: f64 = 1e-4;
/// Draws before the acceptance rate is first judged.
const MIN_TRIALS: usize = 100_000;

/// Binary segmentation mask in image coordinates, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Mask {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Mask::filled(width, height, true)
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Mask::filled(width, height, false)
    }

    /// Mask covering the pixel-aligned box `[min, max]` (inclusive pixels).
    pub fn from_box(width: u32, height: u32, min: Vector2<f64>, max: Vector2<f64>) -> Self {
        let mut mask = Mask::empty(width, height);
        let clampx = |v: f64| v.floor().clamp(0.0, width as f64 - 1.0) as u32;
        let clampy = |v: f64| v.floor().clamp(0.0, height as f64 - 1.0) as u32;
        for y in clampy(min.y)..=clampy(max.y) {
            for x in clampx(min.x)..=clampx(max.x) {
                mask.set(x, y, true);
            }
        }
        mask
    }

    /// Bounding-box silhouette of a set of projected points.
    pub fn bounding_box_of(width: u32, height: u32, points: &[Vector2<f64>]) -> Self {
        let mut min = Vector2::repeat(f64::INFINITY);
        let mut max = Vector2::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Mask::from_box(width, height, min, max)
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = y as usize * self.width as usize + x as usize;
        self.data[i] = value;
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Whether the pixel containing `uv` is set. Points outside the image are
    /// never inside.
    pub fn contains(&self, uv: &Vector2<f64>) -> bool {
        if !(uv.x >= 0.0 && uv.y >= 0.0) {
            return false;
        }
        let (x, y) = (uv.x.floor(), uv.y.floor());
        if x >= self.width as f64 || y >= self.height as f64 {
            return false;
        }
        self.get(x as u32, y as u32)
    }
}

/// Axis-aligned world box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Aabb { min, max }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

fn check_mask(cam: &Camera, mask: &Mask) -> Result<()> {
    let i = &cam.intrinsics;
    if mask.width != i.image_width_px || mask.height != i.image_height_px {
        return Err(Error::DimensionMismatch {
            what: "mask size",
            expected: i.image_width_px as usize * i.image_height_px as usize,
            actual: mask.width as usize * mask.height as usize,
        });
    }
    Ok(())
}

/// Uniform rejection sampling of world points inside `bounds` whose
/// projections fall inside both silhouettes. Deterministic per seed.
pub fn sample_candidate_points(
    cam_a: &Camera,
    cam_b: &Camera,
    mask_a: &Mask,
    mask_b: &Mask,
    n: usize,
    bounds: &Aabb,
    seed: u64,
) -> Result<Vec<Vector3<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be positive".into(),
        ));
    }
    check_mask(cam_a, mask_a)?;
    check_mask(cam_b, mask_b)?;
    if !(0..3).all(|i| bounds.min[i] <= bounds.max[i]) {
        return Err(Error::InvalidArgument(
            "sampling bounds are inverted".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut trials = 0usize;
    let inside = |cam: &Camera, mask: &Mask, p: &Vector3<f64>| {
        project(cam, p)
            .map(|uv| mask.contains(&uv))
            .unwrap_or(false)
    };
    while out.len() < n {
        let p = Vector3::from_fn(|i, _| {
            let (lo, hi) = (bounds.min[i], bounds.max[i]);
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        });
        trials += 1;
        if inside(cam_a, mask_a, &p) && inside(cam_b, mask_b, &p) {
            out.push(p);
        }
        if trials >= MIN_TRIALS && (out.len() as f64) < MIN_ACCEPTANCE * trials as f64 {
            return Err(Error::SamplingExhausted {
                accepted: out.len(),
                trials,
            });
        }
    }
    Ok(out)
}
