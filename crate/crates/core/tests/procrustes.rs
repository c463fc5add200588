use kinefit::kinematics::KeypointSet;
use kinefit::metrics::{pa_mpjpe, pa_mpjpe_with, AlignmentMode};
use kinefit::viewgeom::procrustes_align;
use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let axis = Unit::new_normalize(Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)));
    Rotation3::from_axis_angle(&axis, rng.random_range(-3.1..3.1)).into_inner()
}

fn cloud(n: usize, rng: &mut impl Rng) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)))
        .collect()
}

/// Least-squares residual for a fixed rotation, with the best scale and
/// translation for that rotation.
fn residual_for(r: &Matrix3<f64>, src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> f64 {
    let n = src.len() as f64;
    let ms = src.iter().sum::<Vector3<f64>>() / n;
    let md = dst.iter().sum::<Vector3<f64>>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        num += (d - md).dot(&(r * (s - ms)));
        den += (s - ms).norm_squared();
    }
    let scale = num / den;
    src.iter()
        .zip(dst)
        .map(|(s, d)| ((d - md) - scale * r * (s - ms)).norm_squared())
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn exact_similarity_gives_zero_error(seed in any::<u64>(), frames in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<KeypointSet> = (0..frames).map(|_| KeypointSet { positions: cloud(44, &mut rng) }).collect();
        let pred: Vec<KeypointSet> = truth
            .iter()
            .map(|k| {
                let r = random_rotation(&mut rng);
                let s = rng.random_range(0.5..2.0);
                let t = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
                KeypointSet { positions: k.positions.iter().map(|p| s * r * p + t).collect() }
            })
            .collect();
        let err = pa_mpjpe(&pred, &truth).unwrap();
        prop_assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn recovers_the_generating_transform(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = cloud(10, &mut rng);
        let r = random_rotation(&mut rng);
        let s = rng.random_range(0.5..2.0);
        let t = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let dst: Vec<_> = src.iter().map(|p| s * r * p + t).collect();
        let fit = procrustes_align(&src, &dst, true).unwrap();
        prop_assert!((fit.transform.rotation - r).norm() < 1e-9);
        prop_assert!((fit.transform.scale - s).abs() < 1e-9);
        prop_assert!((fit.transform.translation - t).norm() < 1e-8);
        prop_assert!((fit.transform.rotation.determinant() - 1.0).abs() < 1e-12);
    }
}

/// No rotation on a dense grid beats the closed-form solution for noisy
/// four-point sets, and the grid optimum comes close to it.
#[test]
fn closed_form_beats_rotation_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let steps = 36;
    let grid: Vec<Matrix3<f64>> = (0..steps)
        .flat_map(|i| (0..steps / 2 + 1).flat_map(move |j| (0..steps).map(move |k| (i, j, k))))
        .map(|(i, j, k)| {
            let a = 2.0 * std::f64::consts::PI / steps as f64;
            Rotation3::from_euler_angles(
                i as f64 * a,
                j as f64 * a - std::f64::consts::FRAC_PI_2,
                k as f64 * a,
            )
            .into_inner()
        })
        .collect();
    for _ in 0..10 {
        let src = cloud(4, &mut rng);
        let r = random_rotation(&mut rng);
        let dst: Vec<_> = src
            .iter()
            .map(|p| 1.3 * r * p + Vector3::from_fn(|_, _| rng.random_range(-0.05..0.05)))
            .collect();
        let fit = procrustes_align(&src, &dst, true).unwrap();
        let best = grid
            .iter()
            .map(|g| residual_for(g, &src, &dst))
            .fold(f64::INFINITY, f64::min);
        assert!(
            fit.residual <= best + 1e-12,
            "closed form {} vs grid {best}",
            fit.residual
        );
        assert!((fit.residual - residual_for(&fit.transform.rotation, &src, &dst)).abs() < 1e-12);
        assert!(
            best - fit.residual < 0.05,
            "grid {best} far from {}",
            fit.residual
        );
    }
}

#[test]
fn reflections_are_not_used() {
    let src = vec![
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::new(0.0, 0.0, 0.0),
    ];
    let mirrored: Vec<_> = src.iter().map(|p| Vector3::new(-p.x, p.y, p.z)).collect();
    let fit = procrustes_align(&src, &mirrored, true).unwrap();
    assert!((fit.transform.rotation.determinant() - 1.0).abs() < 1e-12);
    assert!(fit.residual > 0.1);
}

#[test]
fn sequence_alignment_is_no_better_than_per_frame() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth: Vec<KeypointSet> = (0..5)
        .map(|_| KeypointSet {
            positions: cloud(20, &mut rng),
        })
        .collect();
    let pred: Vec<KeypointSet> = truth
        .iter()
        .map(|k| {
            let r = random_rotation(&mut rng);
            KeypointSet {
                positions: k.positions.iter().map(|p| r * p).collect(),
            }
        })
        .collect();
    let frame = pa_mpjpe_with(&pred, &truth, 0, AlignmentMode::PerFrame).unwrap();
    let seq = pa_mpjpe_with(&pred, &truth, 0, AlignmentMode::PerSequence).unwrap();
    assert!(frame < 1e-9);
    assert!(seq > frame);
}
