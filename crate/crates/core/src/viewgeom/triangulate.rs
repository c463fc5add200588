use nalgebra::{Matrix3, Matrix4, RowVector4, SMatrix, SVector, Vector2, Vector3};

use super::camera::{project, Camera};
use crate::error::{Error, Result};

const DEGENERACY_TOL: f64 = 1e-9;

/// A triangulated point and its mean reprojection distance over both views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulation {
    pub point: Vector3<f64>,
    pub residual_px: f64,
}

/// Linear (DLT) two-view triangulation followed by one Gauss-Newton step on
/// the reprojection error.
pub fn triangulate_two_view(
    cam_a: &Camera,
    cam_b: &Camera,
    uv_a: &Vector2<f64>,
    uv_b: &Vector2<f64>,
) -> Result<Triangulation> {
    if !(uv_a.iter().chain(uv_b.iter()).all(|v| v.is_finite())) {
        return Err(Error::InvalidArgument(
            "non-finite image observation".into(),
        ));
    }
    let baseline = (cam_a.center() - cam_b.center()).norm();
    if baseline < DEGENERACY_TOL {
        return Err(Error::DegenerateGeometry(format!(
            "camera centers coincide (baseline {baseline:e} m)"
        )));
    }
    let parallel = cam_a
        .ray_direction(uv_a)
        .cross(&cam_b.ray_direction(uv_b))
        .norm();
    if parallel < DEGENERACY_TOL {
        return Err(Error::DegenerateGeometry(format!(
            "viewing rays are parallel (|a × b| = {parallel:e})"
        )));
    }

    let mut a = Matrix4::zeros();
    for (i, (cam, uv)) in [(cam_a, uv_a), (cam_b, uv_b)].into_iter().enumerate() {
        // Rows in normalized image coordinates for better conditioning.
        let f = cam.focal_px();
        let c = cam.intrinsics.principal_point_px;
        let x = (uv.x - c.x) / f;
        let y = (uv.y - c.y) / f;
        let row = |r: usize| {
            RowVector4::new(
                cam.rotation[(r, 0)],
                cam.rotation[(r, 1)],
                cam.rotation[(r, 2)],
                cam.translation[r],
            )
        };
        a.set_row(2 * i, &(row(2) * x - row(0)));
        a.set_row(2 * i + 1, &(row(2) * y - row(1)));
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::DegenerateGeometry("SVD failed during triangulation".into()))?;
    let smallest = svd.singular_values.imin();
    let h = v_t.row(smallest);
    if h[3].abs() <= f64::EPSILON * h.norm() {
        return Err(Error::DegenerateGeometry(
            "triangulated point at infinity".into(),
        ));
    }
    let linear = Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]);

    let linear_err = reprojection(cam_a, cam_b, uv_a, uv_b, &linear)?;
    let point = match gauss_newton_step(cam_a, cam_b, uv_a, uv_b, &linear) {
        Some(refined) => match reprojection(cam_a, cam_b, uv_a, uv_b, &refined) {
            Ok(err) if err.1 <= linear_err.1 => refined,
            _ => linear,
        },
        None => linear,
    };
    let (residual_px, _) = reprojection(cam_a, cam_b, uv_a, uv_b, &point)?;
    Ok(Triangulation { point, residual_px })
}

/// Mean reprojection distance and sum of squared pixel residuals.
fn reprojection(
    cam_a: &Camera,
    cam_b: &Camera,
    uv_a: &Vector2<f64>,
    uv_b: &Vector2<f64>,
    p: &Vector3<f64>,
) -> Result<(f64, f64)> {
    let ea = project(cam_a, p)? - uv_a;
    let eb = project(cam_b, p)? - uv_b;
    Ok((
        0.5 * (ea.norm() + eb.norm()),
        ea.norm_squared() + eb.norm_squared(),
    ))
}

fn gauss_newton_step(
    cam_a: &Camera,
    cam_b: &Camera,
    uv_a: &Vector2<f64>,
    uv_b: &Vector2<f64>,
    p: &Vector3<f64>,
) -> Option<Vector3<f64>> {
    let mut jac = SMatrix::<f64, 4, 3>::zeros();
    let mut res = SVector::<f64, 4>::zeros();
    for (i, (cam, uv)) in [(cam_a, uv_a), (cam_b, uv_b)].into_iter().enumerate() {
        let pc = cam.to_camera(p);
        if pc.z <= 0.0 {
            return None;
        }
        let f = cam.focal_px();
        let proj = project(cam, p).ok()?;
        let r = proj - uv;
        res[2 * i] = r.x;
        res[2 * i + 1] = r.y;
        let d = Matrix3::new(
            f / pc.z,
            0.0,
            -f * pc.x / (pc.z * pc.z),
            0.0,
            f / pc.z,
            -f * pc.y / (pc.z * pc.z),
            0.0,
            0.0,
            0.0,
        ) * cam.rotation;
        jac.fixed_view_mut::<2, 3>(2 * i, 0)
            .copy_from(&d.fixed_view::<2, 3>(0, 0));
    }
    let jtj = jac.transpose() * jac;
    let step = jtj.try_inverse()? * (jac.transpose() * res);
    Some(p - step)
}
