use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Sensor and image description of an ideal (distortion-free) pinhole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal_length_mm: f64,
    pub sensor_width_mm: f64,
    pub image_width_px: u32,
    pub image_height_px: u32,
    /// Defaults to the image center.
    pub principal_point_px: Vector2<f64>,
}

impl Intrinsics {
    pub fn new(focal_length_mm: f64, sensor_width_mm: f64, width: u32, height: u32) -> Self {
        Intrinsics {
            focal_length_mm,
            sensor_width_mm,
            image_width_px: width,
            image_height_px: height,
            principal_point_px: Vector2::new(width as f64 / 2.0, height as f64 / 2.0),
        }
    }

    /// 33 mm lens, 36 mm sensor with horizontal fit, 1080 × 720 pixels.
    pub fn reference() -> Self {
        Intrinsics::new(33.0, 36.0, 1080, 720)
    }

    /// Focal length in pixels (square pixels, horizontal sensor fit).
    pub fn focal_px(&self) -> f64 {
        self.focal_length_mm / self.sensor_width_mm * self.image_width_px as f64
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let f = self.focal_px();
        let c = self.principal_point_px;
        Matrix3::new(f, 0.0, c.x, 0.0, f, c.y, 0.0, 0.0, 1.0)
    }
}

/// Pinhole camera with world→camera extrinsics: `x_cam = R x_world + t`.
/// Camera axes follow the image convention (x right, y down, z forward).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Camera {
    pub fn new(
        intrinsics: Intrinsics,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let cam = Camera {
            intrinsics,
            rotation,
            translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with world `up` mapped to image up.
    pub fn look_at(
        intrinsics: Intrinsics,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::DegenerateGeometry(
                "camera eye coincides with target".into(),
            ));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::DegenerateGeometry(
                "viewing direction parallel to up vector".into(),
            ));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation =
            Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Camera::new(intrinsics, rotation, -(rotation * eye))
    }

    pub fn validate(&self) -> Result<()> {
        let i = &self.intrinsics;
        if !(i.focal_length_mm > 0.0 && i.sensor_width_mm > 0.0) {
            return Err(Error::InvalidArgument(
                "focal length and sensor width must be positive".into(),
            ));
        }
        if i.image_width_px == 0 || i.image_height_px == 0 {
            return Err(Error::InvalidArgument("image size must be non-zero".into()));
        }
        let r = &self.rotation;
        let ortho = (r * r.transpose() - Matrix3::identity()).abs().max();
        if !(ortho <= ORTHONORMAL_TOL) || !((r.determinant() - 1.0).abs() <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidArgument(format!(
                "camera rotation is not a proper rotation (orthogonality error {ortho:e}, det {})",
                r.determinant()
            )));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "camera translation not finite".into(),
            ));
        }
        Ok(())
    }

    pub fn focal_px(&self) -> f64 {
        self.intrinsics.focal_px()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    /// `K [R | t]`.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        rt.set_column(3, &self.translation);
        self.intrinsics.matrix() * rt
    }

    /// World-frame unit direction of the ray through pixel `uv`.
    pub fn ray_direction(&self, uv: &Vector2<f64>) -> Vector3<f64> {
        let f = self.focal_px();
        let c = self.intrinsics.principal_point_px;
        let local = Vector3::new((uv.x - c.x) / f, (uv.y - c.y) / f, 1.0);
        (self.rotation.transpose() * local).normalize()
    }

    pub fn in_image(&self, uv: &Vector2<f64>) -> bool {
        uv.x >= 0.0
            && uv.y >= 0.0
            && uv.x < self.intrinsics.image_width_px as f64
            && uv.y < self.intrinsics.image_height_px as f64
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Camera::from_toml(&text, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn from_toml(text: &str, context: &str) -> Result<Self> {
        let doc: CameraFile = toml::from_str(text).map_err(|e| Error::parse(context, e))?;
        let intrinsics = Intrinsics {
            focal_length_mm: doc.focal_length_mm,
            sensor_width_mm: doc.sensor_width_mm,
            image_width_px: doc.image_width_px,
            image_height_px: doc.image_height_px,
            principal_point_px: doc
                .principal_point_px
                .map(Vector2::from)
                .unwrap_or_else(|| {
                    Vector2::new(
                        doc.image_width_px as f64 / 2.0,
                        doc.image_height_px as f64 / 2.0,
                    )
                }),
        };
        let rotation = Matrix3::from_fn(|r, c| doc.rotation[r][c]);
        Camera::new(intrinsics, rotation, Vector3::from(doc.translation))
            .map_err(|e| Error::parse(context, e))
    }

    pub fn to_toml(&self) -> Result<String> {
        let doc = CameraFile {
            focal_length_mm: self.intrinsics.focal_length_mm,
            sensor_width_mm: self.intrinsics.sensor_width_mm,
            image_width_px: self.intrinsics.image_width_px,
            image_height_px: self.intrinsics.image_height_px,
            principal_point_px: Some(self.intrinsics.principal_point_px.into()),
            rotation: std::array::from_fn(|r| std::array::from_fn(|c| self.rotation[(r, c)])),
            translation: self.translation.into(),
        };
        toml::to_string(&doc).map_err(|e| Error::parse("camera serialization", e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraFile {
    focal_length_mm: f64,
    sensor_width_mm: f64,
    image_width_px: u32,
    image_height_px: u32,
    #[serde(default)]
    principal_point_px: Option<[f64; 2]>,
    /// World→camera rotation, row-major.
    rotation: [[f64; 3]; 3],
    /// World→camera translation, meters.
    translation: [f64; 3],
}

/// Placement of the frontal + sagittal camera pair around a subject facing +x
/// with y up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigPlacement {
    pub height_m: f64,
    pub height_jitter_m: f64,
    pub distance_m: f64,
    pub azimuth_jitter_deg: f64,
    pub target: [f64; 3],
    pub target_jitter_m: f64,
}

impl Default for RigPlacement {
    fn default() -> Self {
        RigPlacement {
            height_m: 1.1,
            height_jitter_m: 0.1,
            distance_m: 4.0,
            azimuth_jitter_deg: 5.0,
            target: [0.0, 0.9, 0.0],
            target_jitter_m: 0.05,
        }
    }
}

impl RigPlacement {
    /// Frontal camera on +x, sagittal camera at 90° azimuth (+z, the
    /// subject's right), each independently perturbed.
    pub fn place<R: Rng + ?Sized>(
        &self,
        intrinsics: Intrinsics,
        rng: &mut R,
    ) -> Result<(Camera, Camera)> {
        let mut one = |azimuth_deg: f64| -> Result<Camera> {
            let mut jitter = |amp: f64| {
                if amp > 0.0 {
                    rng.random_range(-amp..=amp)
                } else {
                    0.0
                }
            };
            let az = (azimuth_deg + jitter(self.azimuth_jitter_deg)).to_radians();
            let height = self.height_m + jitter(self.height_jitter_m);
            let target = Vector3::new(
                self.target[0] + jitter(self.target_jitter_m),
                self.target[1] + jitter(self.target_jitter_m),
                self.target[2] + jitter(self.target_jitter_m),
            );
            let eye = Vector3::new(
                target.x + self.distance_m * az.cos(),
                height,
                target.z + self.distance_m * az.sin(),
            );
            Camera::look_at(intrinsics, eye, target, Vector3::y())
        };
        let a = one(0.0)?;
        let b = one(90.0)?;
        if (a.center() - b.center()).norm() < 1e-6 {
            return Err(Error::DegenerateGeometry(
                "camera placement produced coincident centers".into(),
            ));
        }
        Ok((a, b))
    }

    pub fn nominal(&self, intrinsics: Intrinsics) -> Result<(Camera, Camera)> {
        let still = RigPlacement {
            height_jitter_m: 0.0,
            azimuth_jitter_deg: 0.0,
            target_jitter_m: 0.0,
            ..*self
        };
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        still.place(intrinsics, &mut rng)
    }
}

/// Projects a world point to pixel coordinates.
pub fn project(camera: &Camera, point: &Vector3<f64>) -> Result<Vector2<f64>> {
    let pc = camera.to_camera(point);
    if !(pc.z > 0.0) {
        return Err(Error::BehindCamera { depth: pc.z });
    }
    let f = camera.focal_px();
    let c = camera.intrinsics.principal_point_px;
    Ok(Vector2::new(f * pc.x / pc.z + c.x, f * pc.y / pc.z + c.y))
}
