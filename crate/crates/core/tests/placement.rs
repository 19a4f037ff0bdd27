use std::path::{Path, PathBuf};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vaxis_core::geometry::EulerPose;
use vaxis_core::placement::{GradientMode, PlacementProblem};
use vaxis_core::scene::Scene;
use vaxis_core::solver::{minimize, Method, NlpProblem, SolverOptions, Status};
use vaxis_core::virtual_ik::distance_to_shell;

fn scenes_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

fn load(name: &str) -> (Scene, PlacementProblem) {
    let (scene, base) = Scene::load(&scenes_dir().join(name)).unwrap();
    let problem = scene.build(&base).unwrap();
    (scene, problem)
}

fn wcp_distances(p: &PlacementProblem, pose: &EulerPose) -> Vec<f64> {
    let shell = p.model().shell();
    vaxis_core::placement::grid_frames(pose, p.spec())
        .iter()
        .map(|f| {
            let wcp = vaxis_core::ik::wcp_target_from_tcp(p.model(), f);
            distance_to_shell(&shell, &wcp.position)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn objective_vanishes_exactly_inside_the_shell(
        pos in proptest::array::uniform3(-900.0f64..900.0),
        ang in proptest::array::uniform3(-3.0f64..3.0),
    ) {
        let (_, p) = load("box_far.json");
        let pose = EulerPose::new(pos[0], pos[1], pos[2], ang[0], ang[1], ang[2]);
        let e = p.evaluate_pose(&pose);
        prop_assert!(e.objective >= 0.0);
        let dist = wcp_distances(&p, &pose);
        let all_inside = dist.iter().all(|&d| d == 0.0);
        prop_assert_eq!(e.objective == 0.0, all_inside);
        for (v, d) in e.v.iter().zip(&dist) {
            prop_assert!((v.abs() - d.abs()).abs() < 1e-9);
        }
        prop_assert_eq!(e.constraints.len(), 360);
    }
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let (_, p) = load("box_far.json");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tested = 0;
    while tested < 100 {
        let x: Vec<f64> = (0..6)
            .map(|i| if i < 3 { rng.random_range(-1500.0..1500.0) } else { rng.random_range(-3.0..3.0) })
            .collect();
        if p.evaluate(&x).objective == 0.0 {
            continue;
        }
        let a = p.gradient(&x, GradientMode::AnalyticDistance, 1e-6);
        let f = p.gradient(&x, GradientMode::FiniteDifference, 1e-6);
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = a.iter().zip(&f).fold(0.0f64, |m, (u, w)| m.max((u - w).abs()));
        assert!(err < 1e-4 * scale, "x = {x:?}: {a:?} vs {f:?}");
        tested += 1;
    }
}

#[test]
fn feasible_start_stays_put() {
    let (scene, p) = load("box_interior.json");
    for method in [Method::Sqp, Method::AugmentedLagrangian] {
        let r = minimize(&p, &p.initial_point(), &SolverOptions { method, ..scene.solver }).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!(r.iterations <= 1, "{method:?}: {} iterations", r.iterations);
        assert!(r.objective_trajectory.iter().all(|&f| f == 0.0));
        assert!(r.violation_trajectory.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn once_feasible_the_iterates_stay_feasible() {
    for name in ["box_far.json", "box_boundary.json"] {
        let (scene, p) = load(name);
        let r = minimize(&p, &p.initial_point(), &scene.solver).unwrap();
        assert_eq!(r.status, Status::Optimal, "{name}");
        if let Some(first) = r.objective_trajectory.iter().position(|&f| f < 1e-12) {
            assert!(r.objective_trajectory[first..].iter().all(|&f| f <= 1e-9), "{name}");
        }
    }
}

#[test]
fn solves_are_reproducible_and_merit_is_monotone() {
    let (scene, p) = load("box_far.json");
    for method in [Method::Sqp, Method::AugmentedLagrangian] {
        let opts = SolverOptions { method, ..scene.solver };
        let a = minimize(&p, &p.initial_point(), &opts).unwrap();
        let b = minimize(&p, &p.initial_point(), &opts).unwrap();
        assert_eq!(a.without_timing(), b.without_timing());
        assert_eq!(a.objective_trajectory.len(), a.iterations + 1);
        assert_eq!(a.violation_trajectory.len(), a.iterations + 1);
        for (before, after) in &a.merit_steps {
            assert!(after <= before);
        }
    }
}

#[test]
fn analytic_gradient_mode_reports_honestly() {
    let (scene, p) = load("box_far.json");
    let p = p.with_gradient_mode(GradientMode::AnalyticDistance);
    let al = minimize(&p, &p.initial_point(), &SolverOptions { method: Method::AugmentedLagrangian, ..scene.solver })
        .unwrap();
    assert_eq!(al.status, Status::Optimal);
    assert!(al.objective < 1e-9 && al.max_violation <= 1e-6);
    // SQP takes a different path here and can end between two limits that
    // straddle the q6 wrap; whatever it returns has to be labelled correctly.
    let sqp = minimize(&p, &p.initial_point(), &scene.solver).unwrap();
    let converged = sqp.kkt_residual <= 1e-6 && sqp.max_violation <= 1e-6;
    assert_eq!(sqp.status == Status::Optimal, converged);
}

#[test]
fn frozen_robot_is_reported_not_optimal() {
    let (scene, p) = load("box_impossible.json");
    for method in [Method::Sqp, Method::AugmentedLagrangian] {
        let r = minimize(&p, &p.initial_point(), &SolverOptions { method, ..scene.solver }).unwrap();
        assert_ne!(r.status, Status::Optimal, "{method:?}");
        assert!(r.max_violation > 1e-3);
        assert_eq!(r.objective_trajectory.len(), r.iterations + 1);
    }
}

#[test]
fn bounds_on_the_corner_are_respected() {
    let (scene, p) = load("box_far.json");
    let mut vars = p.variables().clone();
    vars.lower[2] = Some(-100.0);
    vars.upper[0] = Some(2000.0);
    let bounded = PlacementProblem::new(p.model().clone(), p.spec().clone(), vars, scene.smoothing).unwrap();
    let r = minimize(&bounded, &bounded.initial_point(), &scene.solver).unwrap();
    assert_eq!(r.status, Status::Optimal);
    for it in &r.iterates {
        assert!(it[2] >= -100.0 && it[0] <= 2000.0);
    }
    assert_eq!(bounded.lower_bounds()[2], -100.0);
}

#[test]
fn reference_sweep_file_matches_the_built_in_defaults() {
    let (cfg, base) = vaxis_core::scene::SweepConfig::load(&scenes_dir().join("sweep_reference.json")).unwrap();
    let model = cfg.resolve_model(&base).unwrap();
    assert_eq!(model, vaxis_core::robot::RobotModel::default().with_name(model.name()));
    assert_eq!(vaxis_core::scene::SweepConfig { robot: None, ..cfg }, vaxis_core::scene::SweepConfig::default());
}
