use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seahorizon::geometry::{
    calibrate_camera_imu, estimate_horizon, fit_plane_ransac, project_point, CalibrationConfig,
};
use seahorizon::synth::ground_cloud;
use seahorizon::{CalibrationResult, CameraIntrinsics, ImuReading, RotationMatrix};

const W: u32 = 1278;
const H: u32 = 958;
const F: f64 = 700.0;

fn pinhole() -> CameraIntrinsics {
    CameraIntrinsics::pinhole(F, W, H).unwrap()
}

fn imu(roll: f64, pitch: f64) -> ImuReading {
    ImuReading::new(0.0, roll, pitch, 0.0).unwrap()
}

fn horizon(roll: f64, pitch: f64, intr: &CameraIntrinsics, alpha: f64, height: f64) -> seahorizon::HorizonLine {
    estimate_horizon(&imu(roll, pitch), &CalibrationResult::identity(), intr, alpha, height).unwrap()
}

#[test]
fn level_boat_horizon_is_principal_row() {
    let intr = pinhole();
    for alpha in [10f64, 40.0, 70.0] {
        let h = horizon(0.0, 0.0, &intr, alpha.to_radians(), 0.7);
        assert!(h.valid);
        assert_eq!(h.angle, 0.0);
        assert_eq!(h.row_at(intr.cx), intr.cy);
        assert_eq!(h.row_at(0.0), intr.cy);
    }
}

#[test]
fn small_roll_gives_equal_slope_angle() {
    let intr = pinhole();
    for phi in [-0.05, -0.01, 0.003, 0.02, 0.05] {
        let h = horizon(phi, 0.0, &intr, 0.7, 0.7);
        assert!((h.angle - phi).abs() < 1e-6, "{phi}: {}", h.angle);
    }
}

#[test]
fn positive_pitch_raises_horizon_in_image() {
    let intr = pinhole();
    let level = horizon(0.0, 0.0, &intr, 0.7, 0.7).row_at(intr.cx);
    let mut prev = level;
    for deg in [1.0f64, 3.0, 8.0] {
        let row = horizon(0.0, deg.to_radians(), &intr, 0.7, 0.7).row_at(intr.cx);
        // pinhole oracle: a level ray seen by a camera turned by `p` about X
        let expect = intr.cy - F * deg.to_radians().tan();
        assert!((row - expect).abs() < 1e-6, "{row} vs {expect}");
        assert!(row < prev);
        prev = row;
    }
}

#[test]
fn pinhole_projection_matches_homogeneous_arithmetic() {
    let intr = pinhole();
    let calib = CalibrationResult::identity();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let x = Vector3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(0.5..200.0));
        let p = project_point(&x, &calib, &intr).unwrap();
        let k = [[F, 0.0, intr.cx], [0.0, F, intr.cy], [0.0, 0.0, 1.0]];
        let hom: Vec<f64> = k.iter().map(|r| r[0] * x.x + r[1] * x.y + r[2] * x.z).collect();
        assert!((p.x - hom[0] / hom[2]).abs() < 1e-9);
        assert!((p.y - hom[1] / hom[2]).abs() < 1e-9);
    }
}

#[test]
fn radial_displacement_grows_with_k1() {
    let calib = CalibrationResult::identity();
    let x = Vector3::new(2.0, -1.0, 6.0);
    let ideal = project_point(&x, &calib, &pinhole()).unwrap();
    let mut prev = 0.0;
    for k1 in [-0.05, -0.1, -0.2, -0.3] {
        let intr = pinhole().with_distortion(k1, 0.0);
        let d = (project_point(&x, &calib, &intr).unwrap() - ideal).norm();
        assert!(d > prev, "k1 {k1}: {d} <= {prev}");
        prev = d;
    }
}

/// Rows of the distorted image of the level horizon, sampled per column.
/// Only directions on the monotone branch of the radial model count: past
/// the fold the polynomial no longer describes a lens.
fn distorted_horizon_truth(intr: &CameraIntrinsics, rot: &RotationMatrix) -> Vec<Option<f64>> {
    let r2_fold = 1.0 / (3.0 * -intr.k1);
    let mut pts: Vec<Vector2<f64>> = Vec::new();
    let steps = 40_000;
    for i in 0..=steps {
        let b = -1.5 + 3.0 * i as f64 / steps as f64;
        let c = rot.apply(&Vector3::new(b.sin(), 0.0, b.cos()));
        if c.z <= 0.0 {
            continue;
        }
        let (x, y) = (c.x / c.z, c.y / c.z);
        let r2 = x * x + y * y;
        if r2 >= r2_fold {
            continue;
        }
        let s = 1.0 + intr.k1 * r2;
        pts.push(Vector2::new(F * x * s + intr.cx, F * y * s + intr.cy));
    }
    pts.sort_by(|a, b| a.x.total_cmp(&b.x));
    (0..W)
        .map(|col| {
            let c = col as f64;
            let j = pts.partition_point(|p| p.x < c);
            (j > 0 && j < pts.len()).then(|| {
                let (a, b) = (pts[j - 1], pts[j]);
                a.y + (b.y - a.y) * (c - a.x) / (b.x - a.x)
            })
        })
        .collect()
}

/// RMSE of the fitted line against the distorted horizon, for generation
/// angles 5..=85 degrees in steps of 3, normalized by the largest value.
fn rmse_by_angle(roll: f64, pitch: f64) -> Vec<(f64, f64)> {
    let intr = pinhole().with_distortion(-0.3, 0.0);
    let reading = imu(roll, pitch);
    let truth = distorted_horizon_truth(&intr, &reading.rotation());
    let raw: Vec<(f64, f64)> = (5..=85)
        .step_by(3)
        .map(|deg| {
            let line = estimate_horizon(&reading, &CalibrationResult::identity(), &intr, (deg as f64).to_radians(), 0.7)
                .unwrap();
            assert!(line.valid);
            let (mut sum, mut n) = (0.0, 0);
            for (col, t) in truth.iter().enumerate() {
                if let Some(t) = t {
                    sum += (line.row_at(col as f64) - t).powi(2);
                    n += 1;
                }
            }
            (deg as f64, (sum / n as f64).sqrt())
        })
        .collect();
    let max = raw.iter().map(|r| r.1).fold(0.0, f64::max);
    raw.into_iter().map(|(a, e)| (a, e / max)).collect()
}

#[test]
fn horizon_error_flat_then_rising_with_generation_angle() {
    for (roll, pitch) in [(0.1, 0.05), (0.2, -0.08), (0.0, 0.1), (-0.15, 0.03)] {
        let curve = rmse_by_angle(roll, pitch);
        for &(a, e) in curve.iter().filter(|c| c.0 <= 56.0) {
            assert!(e < 0.05, "roll {roll} pitch {pitch}: {a} deg gives {e}");
        }
        let tail: Vec<f64> = curve.iter().filter(|c| c.0 >= 56.0).map(|c| c.1).collect();
        assert!(tail.windows(2).all(|w| w[1] > w[0]), "roll {roll} pitch {pitch}: {tail:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn extra_roll_rotates_line(
        roll in -20f64..20.0,
        pitch in -10f64..10.0,
        delta in -20f64..20.0,
        alpha in 10f64..60.0,
    ) {
        let intr = pinhole();
        let base = imu(roll.to_radians(), pitch.to_radians());
        let calib = CalibrationResult::identity();
        let a = estimate_horizon(&base, &calib, &intr, alpha.to_radians(), 0.7).unwrap();
        let b = estimate_horizon(&base.with_extra_roll(delta.to_radians()), &calib, &intr, alpha.to_radians(), 0.7).unwrap();
        prop_assert!(a.valid && b.valid);
        prop_assert!((b.angle - a.angle - delta.to_radians()).abs() < 1e-4);
    }

    #[test]
    fn line_ignores_camera_height(
        roll in -20f64..20.0,
        pitch in -10f64..10.0,
        height in 0.3f64..5.0,
        factor in 0.5f64..2.0,
    ) {
        let intr = pinhole();
        let a = horizon(roll.to_radians(), pitch.to_radians(), &intr, 0.7, height);
        let b = horizon(roll.to_radians(), pitch.to_radians(), &intr, 0.7, height * factor);
        for col in [0.0, intr.cx, (W - 1) as f64] {
            prop_assert!((a.row_at(col) - b.row_at(col)).abs() < 1e-6);
        }
    }

    #[test]
    fn undistort_inverts_distort(u in 0f64..(W - 1) as f64, v in 0f64..(H - 1) as f64) {
        let intr = pinhole();
        let px = Vector2::new(u, v);
        prop_assert!((intr.undistort_pixel(intr.distort_pixel(px)) - px).norm() < 1e-9);
        let mild = pinhole().with_distortion(-0.05, 0.0);
        prop_assert!((mild.undistort_pixel(mild.distort_pixel(px)) - px).norm() < 1e-6);
    }
}

/// Plane `z = 1` sampled over `[-5, 5]^2`, with the first 30% of points
/// replaced by outliers uniform within 5 m of the plane.
fn plane_with_outliers(n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outliers = n * 3 / 10;
    (0..n)
        .map(|i| {
            let (x, y) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let z = if i < outliers { 1.0 + rng.gen_range(-5.0..5.0) } else { 1.0 };
            Vector3::new(x, y, z)
        })
        .collect()
}

fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a.normalize().dot(&b.normalize())).abs().min(1.0).acos().to_degrees()
}

#[test]
fn ransac_exact_plane() {
    let pts: Vec<Vector3<f64>> = plane_with_outliers(1000, 3).into_iter().skip(300).collect();
    let fit = fit_plane_ransac(&pts, 1.0, 1000, 0).unwrap();
    assert!((fit.normal.z.abs() - 1.0).abs() < 1e-6);
    assert!(fit.residual_rms < 1e-12);
}

#[test]
fn ransac_normal_under_thirty_percent_outliers() {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let fit = fit_plane_ransac(&plane_with_outliers(1000, seed), 1.0, 1000, seed).unwrap();
        worst = worst.max(angle_deg(&fit.normal, &Vector3::z()));
    }
    assert!(worst < 0.5, "worst normal error {worst:.3} deg");
}

#[test]
fn ransac_is_deterministic_per_seed() {
    let pts = plane_with_outliers(600, 9);
    assert_eq!(fit_plane_ransac(&pts, 1.0, 300, 4), fit_plane_ransac(&pts, 1.0, 300, 4));
}

#[test]
fn calibration_recovers_ten_degree_roll() {
    let truth = RotationMatrix::about_z(10f64.to_radians());
    let cloud = ground_cloud(1.5, 1000, 0.0, 1e-3, 2).unwrap();
    let tilted = seahorizon::geometry::PointCloud::new(cloud.points.iter().map(|p| truth.apply(p)).collect()).unwrap();
    let cfg = CalibrationConfig::default();
    let c = calibrate_camera_imu(&tilted, &ImuReading::level(0.0), &cfg).unwrap();
    assert!(c.r_cam_usv.angle_to(&truth).to_degrees() < 0.5);
    assert!(c.residual_rms < 1e-2);
}

#[test]
fn calibration_on_flat_fixture_has_tiny_residual() {
    let cloud = ground_cloud(3.0, 1000, 0.0, 2e-4, 0).unwrap();
    let c = calibrate_camera_imu(&cloud, &ImuReading::level(0.0), &CalibrationConfig::default()).unwrap();
    assert!(c.residual_rms < 1e-3);
    assert!(c.r_cam_usv.angle_to(&RotationMatrix::identity()).to_degrees() < 0.1);
}

#[test]
fn calibration_with_outlier_fixture() {
    for seed in 0..10 {
        let cloud = ground_cloud(3.0, 1000, 0.3, 2e-4, seed).unwrap();
        let c = calibrate_camera_imu(&cloud, &ImuReading::level(0.0), &CalibrationConfig::default()).unwrap();
        let up = c.r_cam_usv.apply(&Vector3::new(0.0, -1.0, 0.0));
        assert!(angle_deg(&up, &Vector3::new(0.0, -1.0, 0.0)) < 0.5, "seed {seed}");
    }
}
