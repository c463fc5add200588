use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// `x ↦ scale · R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesFit {
    pub transform: SimilarityTransform,
    pub aligned: Vec<Vector3<f64>>,
    /// Sum of squared distances between aligned source and target.
    pub residual: f64,
}

/// Closed-form orthogonal Procrustes (optionally with uniform scale) mapping
/// `source` onto `target`. Reflections are excluded.
pub fn procrustes_align(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    with_scale: bool,
) -> Result<ProcrustesFit> {
    if source.len() != target.len() {
        return Err(Error::DimensionMismatch {
            what: "procrustes point sets",
            expected: source.len(),
            actual: target.len(),
        });
    }
    if source.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "procrustes needs at least 3 points, got {}",
            source.len()
        )));
    }
    let n = source.len() as f64;
    let mu_s = source.iter().sum::<Vector3<f64>>() / n;
    let mu_t = target.iter().sum::<Vector3<f64>>() / n;

    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, t) in source.iter().zip(target) {
        let (ds, dt) = (s - mu_s, t - mu_t);
        cov += dt * ds.transpose();
        var_s += ds.norm_squared();
    }
    let scale_ref = source
        .iter()
        .map(|p| p.norm_squared())
        .fold(0.0, f64::max)
        .max(1.0);
    if !(var_s > 1e-24 * scale_ref) {
        return Err(Error::DegenerateGeometry(
            "procrustes source has zero variance".into(),
        ));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateGeometry("SVD failed in procrustes".into())),
    };
    // Flip the weakest singular direction if the optimum would be a reflection.
    let sv = svd.singular_values;
    let imin = sv.imin();
    let flip = (u * v_t).determinant() < 0.0;
    let sign = Vector3::from_fn(|i, _| if flip && i == imin { -1.0 } else { 1.0 });
    let rotation = u * Matrix3::from_diagonal(&sign) * v_t;
    let scale = if with_scale {
        sv.dot(&sign) / var_s
    } else {
        1.0
    };

    let translation = mu_t - rotation * mu_s * scale;
    let transform = SimilarityTransform {
        rotation,
        translation,
        scale,
    };
    let aligned: Vec<Vector3<f64>> = source.iter().map(|p| transform.apply(p)).collect();
    let residual = aligned
        .iter()
        .zip(target)
        .map(|(a, t)| (a - t).norm_squared())
        .sum();
    Ok(ProcrustesFit {
        transform,
        aligned,
        residual,
    })
}
