use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vaxis_core::geometry::{Frame, Rotation};
use vaxis_core::ik::{ik_original, IkOutcome};
use vaxis_core::robot::{Configuration, Joints, RobotModel, VirtualJoints};
use vaxis_core::virtual_ik::{distance_to_shell, ik_virtual, reference_sweep, SmoothingParams};

fn model() -> RobotModel {
    RobotModel::default()
}

fn random_rotation(rng: &mut impl Rng) -> Rotation {
    let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    Rotation::from_matrix_unchecked(*uq.to_rotation_matrix().matrix())
}

fn joints_strategy() -> impl Strategy<Value = [f64; 6]> {
    proptest::array::uniform6(-PI..PI)
}

/// Joint vectors away from the shoulder, elbow and wrist singularities.
fn nonsingular(m: &RobotModel, q: &Joints) -> bool {
    let p = m.fk_wcp(q).position;
    let elbow = (q.0[2] + FRAC_PI_2).sin().abs();
    q.0[4].sin().abs() > 0.05 && p.x.hypot(p.y) > 1.0 && elbow > 0.05
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn virtual_chain_with_zero_slide_is_the_original(q in joints_strategy()) {
        let m = model();
        let virt = m.fk_virtual_wcp(&VirtualJoints::new(q, 0.0));
        let (dp, dr) = virt.deviation(&m.fk_wcp(&Joints(q)));
        prop_assert!(dp < 1e-12 && dr < 1e-12);
    }

    #[test]
    fn wcp_lies_in_the_shell(q in joints_strategy()) {
        let m = model();
        let r = m.fk_wcp(&Joints(q)).position.norm();
        prop_assert!((50.0 - 1e-9..=680.0 + 1e-9).contains(&r), "{}", r);
    }

    #[test]
    fn wrist_joints_do_not_move_the_wcp(q in joints_strategy(), w in proptest::array::uniform3(-PI..PI)) {
        let m = model();
        let mut q2 = q;
        q2[3..].copy_from_slice(&w);
        let a = m.fk_wcp(&Joints(q)).position;
        let b = m.fk_wcp(&Joints(q2)).position;
        prop_assert!((a - b).amax() < 1e-10);
    }

    #[test]
    fn original_ik_roundtrip(q in joints_strategy()) {
        let m = model();
        let q = Joints(q);
        prop_assume!(nonsingular(&m, &q));
        let s = m.configuration_of(&q).unwrap();
        let got = ik_original(&m, &m.fk_wcp(&q), s);
        let sol = got.solution().expect("reachable and nonsingular");
        prop_assert!(sol.max_angle_error(&q) < 1e-9, "{:?} vs {:?}", sol, q);
    }

    #[test]
    fn virtual_ik_is_total_and_minimal(
        p in proptest::array::uniform3(-1500.0f64..1500.0),
        angles in proptest::array::uniform3(-PI..PI),
        s in 0u8..8,
    ) {
        let m = model();
        let rot = vaxis_core::geometry::euler_to_frame(
            &vaxis_core::geometry::EulerPose::new(0.0, 0.0, 0.0, angles[0], angles[1], angles[2])).rotation;
        let target = Frame::new(Vector3::from(p), rot);
        let qt = ik_virtual(&m, &target, Configuration::new(s).unwrap(), &SmoothingParams::off());
        prop_assert!(m.fk_virtual_wcp(&qt).approx_eq(&target));
        let d = distance_to_shell(&m.shell(), &target.position);
        prop_assert!((qt.v.abs() - d.abs()).abs() < 1e-12 * (1.0 + d.abs()));
    }
}

#[test]
fn shell_bounds_on_many_samples() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..100_000 {
        let q = Joints(std::array::from_fn(|_| rng.random_range(-PI..PI)));
        let r = m.fk_wcp(&q).position.norm();
        lo = lo.min(r);
        hi = hi.max(r);
    }
    assert!(lo >= 50.0 - 1e-9 && hi <= 680.0 + 1e-9, "[{lo}, {hi}]");
    // the samples come close to both radii
    assert!(lo < 60.0 && hi > 670.0, "[{lo}, {hi}]");
}

#[test]
fn eight_branches_for_random_targets() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    while checked < 200 {
        let dir = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
        let target = Frame::new(dir * rng.random_range(80.0..660.0), random_rotation(&mut rng));
        let sols: Vec<Joints> = Configuration::all()
            .filter_map(|s| match ik_original(&m, &target, s) {
                IkOutcome::Solution { q, .. } => Some(q),
                _ => None,
            })
            .collect();
        if sols.len() < 8 {
            continue;
        }
        for q in &sols {
            assert!(m.fk_wcp(q).approx_eq(&target));
        }
        for i in 0..8 {
            for j in (i + 1)..8 {
                assert!(sols[i].max_angle_error(&sols[j]) > 1e-6);
            }
        }
        checked += 1;
    }
}

#[test]
fn elbow_cosine_stays_in_range_inside_the_shell() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let d = rng.random_range(50.0..=680.0);
        let c = (d * d - 315f64.powi(2) - 365f64.powi(2)) / (2.0 * 315.0 * 365.0);
        assert!(c.abs() <= 1.0 + 1e-12);
        let target = Frame::new(Vector3::new(d, 0.0, 0.0), Rotation::identity());
        let out = ik_original(&m, &target, Configuration::new(2).unwrap());
        assert!(!matches!(out, IkOutcome::OutOfReach { .. }), "d = {d}");
    }
}

fn max_joint_jump(samples: &[vaxis_core::virtual_ik::SweepSample]) -> f64 {
    let mut worst = 0.0f64;
    for w in samples.windows(2) {
        let (a, b) = (w[0].joints.chain_order(), w[1].joints.chain_order());
        for i in [0, 1, 2, 4, 5, 6] {
            worst = worst.max((a[i] - b[i]).abs());
        }
    }
    worst
}

#[test]
fn sweep_v_kinks_once() {
    let m = model();
    let boundary = (680f64.powi(2) - 315f64.powi(2)).sqrt();
    for smoothing in [SmoothingParams::off(), SmoothingParams::default()] {
        let samples = reference_sweep(&m, smoothing).run(10_000).unwrap();
        let mut last_v = 0.0;
        for s in &samples {
            let x = s.position.x;
            let want = (x.hypot(315.0) - 680.0).max(0.0);
            assert!((s.joints.v - want).abs() < 1e-9, "x = {x}");
            if x > boundary {
                assert!(s.joints.v > last_v, "x = {x}");
            } else {
                assert_eq!(s.joints.v, 0.0);
            }
            last_v = s.joints.v;
        }
    }
}

#[test]
fn smoothed_sweep_has_small_steps() {
    let m = model();
    let samples = reference_sweep(&m, SmoothingParams::default()).run(10_000).unwrap();
    let jump = max_joint_jump(&samples);
    assert!(jump < 0.01, "{jump}");
}

#[test]
fn unsmoothed_sweep_steps_vanish_under_refinement() {
    // q3 has a square-root singularity at the boundary, so the largest step
    // only shrinks like sqrt(spacing); it still goes to zero.
    let m = model();
    let boundary = (680f64.powi(2) - 315f64.powi(2)).sqrt();
    let mut sweep = reference_sweep(&m, SmoothingParams::off());
    sweep.start = Vector3::new(boundary - 1.0, 0.0, 215.0);
    sweep.end = Vector3::new(boundary + 1.0, 0.0, 215.0);
    let jumps: Vec<f64> = [25, 2_500, 250_000].iter().map(|&n| max_joint_jump(&sweep.run(n + 1).unwrap())).collect();
    for w in jumps.windows(2) {
        assert!(w[1] < 0.2 * w[0], "{jumps:?}");
    }
    assert!(jumps[2] < 0.01, "{jumps:?}");
}

#[test]
fn smoothing_only_changes_the_band_near_the_boundary() {
    let m = model();
    let off = reference_sweep(&m, SmoothingParams::off()).run(2001).unwrap();
    let on = reference_sweep(&m, SmoothingParams::default()).run(2001).unwrap();
    // the eps = 0.01 patch starts where the elbow cosine reaches 0.99, near x = 600.7
    for (a, b) in off.iter().zip(&on) {
        if a.position.x < 600.0 || a.position.x > 602.7 {
            assert_eq!(a.joints, b.joints, "x = {}", a.position.x);
        }
    }
    assert!(off.iter().zip(&on).any(|(a, b)| a.joints != b.joints));
}
