use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadow_core::geom::{quat_im_norm, relative_pose, yaw_correction, Pose, Quat};

fn unit_quat() -> impl Strategy<Value = Quat> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
        .prop_map(|(w, x, y, z)| Quat::new(w, x, y, z))
}

fn pose() -> impl Strategy<Value = Pose> {
    (prop::array::uniform3(-5.0..5.0f64), unit_quat()).prop_map(|(p, q)| Pose::new(p, q))
}

fn random_quat(rng: &mut ChaCha8Rng) -> Quat {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-3 {
            return Quat::new(v[0], v[1], v[2], v[3]);
        }
    }
}

fn same_rotation(a: Quat, b: Quat, tol: f64) -> bool {
    a.dot(&b).abs() > 1.0 - tol
}

/// Yaw of a rotation by the two-argument arctangent.
fn yaw_of(c: Quat) -> f64 {
    (2.0 * (c.w * c.z + c.x * c.y)).atan2(1.0 - 2.0 * (c.y * c.y + c.z * c.z))
}

#[test]
fn yaw_residual_is_pitch_roll_only_on_ten_thousand_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let q_ref = random_quat(&mut rng);
        let psi = rng.random_range(-std::f64::consts::PI + 1e-6..std::f64::consts::PI - 1e-6);
        let q_correct = Quat::rot_z(psi);
        let q_robot = q_correct * q_ref;
        let qy = yaw_correction(q_ref, q_robot);
        let residual = qy * q_correct.conj();
        assert!(yaw_of(residual).abs() < 1e-9, "psi {psi}: residual {residual:?}");
        assert!(residual.z.abs() < 1e-9);
    }
}

#[test]
fn im_norm_of_one_radian_yaw() {
    assert!((quat_im_norm(Quat::rot_z(1.0)) - 0.5f64.sin()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn product_is_associative(a in unit_quat(), b in unit_quat(), c in unit_quat()) {
        let l = (a * b) * c;
        let r = a * (b * c);
        for (x, y) in [(l.w, r.w), (l.x, r.x), (l.y, r.y), (l.z, r.z)] {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn relative_pose_round_trip(base in pose(), delta in pose()) {
        let target = base.compose(&delta);
        let back = relative_pose(&base, &target);
        for k in 0..3 {
            prop_assert!((back.p[k] - delta.p[k]).abs() < 1e-9);
        }
        prop_assert!(same_rotation(back.q, delta.q, 1e-12));
    }

    #[test]
    fn yaw_correction_is_unit_pure_yaw(a in unit_quat(), b in unit_quat()) {
        let q = yaw_correction(a, b);
        prop_assert_eq!(q.x, 0.0);
        prop_assert_eq!(q.y, 0.0);
        prop_assert!((q.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn im_norm_is_sine_of_half_angle(q in unit_quat()) {
        let c = q.canonical();
        prop_assert!((quat_im_norm(c) - (c.angle() / 2.0).sin()).abs() < 1e-12);
    }

    #[test]
    fn rotation_preserves_length(q in unit_quat(), v in prop::array::uniform3(-10.0..10.0f64)) {
        let r = q.rotate(v);
        let n0 = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let n1 = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        prop_assert!((n0 - n1).abs() < 1e-12 * (1.0 + n0));
    }

    #[test]
    fn axis_angle_round_trip(q in unit_quat()) {
        prop_assert!(same_rotation(q.to_axis_angle().to_quat(), q, 1e-12));
    }
}
