//! Closed-form backward transform of the original 6R robot.
//!
//! Position and orientation decouple at the wrist centre: joints 1-3 place the
//! WCP, joints 4-6 produce the remaining rotation `R03^T R`, which for this wrist
//! is `Rz(q4) Ry(-q5) Rz(q6)`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Frame, Rotation};
use crate::robot::{Configuration, Elbow, Joints, RobotModel, Shoulder, Wrist};

/// Band around the shell radii that still counts as reachable [mm].
pub const REACH_TOLERANCE: f64 = 1e-9;

/// Below this, the WCP is treated as lying on the joint-1 axis [mm].
pub const SHOULDER_TOLERANCE: f64 = 1e-9;

/// Below this `|sin q5|`, joints 4 and 6 are coupled.
pub const WRIST_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SingularityKind {
    /// WCP on the joint-1 axis; q1 is free and set to 0 (front) or pi (back).
    Shoulder,
    /// q5 at 0 or pi; q4 is set to 0 and the free rotation goes into q6.
    Wrist,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum IkOutcome {
    Solution {
        q: Joints,
        limit_ok: [bool; 6],
    },
    /// Distance from the WCP to the hollow shell, always positive.
    OutOfReach {
        defect: f64,
    },
    /// Unique answer not defined; `q` is the conventional representative.
    BranchSingular {
        kind: SingularityKind,
        q: Joints,
    },
}

impl IkOutcome {
    pub fn solution(&self) -> Option<&Joints> {
        match self {
            IkOutcome::Solution { q, .. } => Some(q),
            _ => None,
        }
    }
}

/// The WCP frame that puts the TCP at `tcp`.
pub fn wcp_target_from_tcp(model: &RobotModel, tcp: &Frame) -> Frame {
    tcp.compose(&model.tool().inverse())
}

/// Signed cosine of the elbow bend: 1 with the arm stretched, -1 fully folded.
pub(crate) fn elbow_cosine(model: &RobotModel, dist: f64) -> f64 {
    let (a, b) = (model.l23(), model.l35());
    (dist * dist - a * a - b * b) / (2.0 * a * b)
}

pub(crate) struct ArmAngles {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub shoulder_singular: bool,
}

/// Joints 1-3 for a WCP at `p`, given the elbow bend `bend` in `[0, pi]` and the
/// effective forearm length (longer than `l35` on the virtual robot).
pub(crate) fn arm_angles(model: &RobotModel, p: &Vector3<f64>, s: Configuration, bend: f64, forearm: f64) -> ArmAngles {
    let r = p.x.hypot(p.y);
    let shoulder_singular = r < SHOULDER_TOLERANCE;
    let heading = if shoulder_singular { 0.0 } else { p.y.atan2(p.x) };
    let (q1, radial) = match s.shoulder() {
        Shoulder::Front => (heading, r),
        Shoulder::Back => (normalize_angle(heading + PI), -r),
    };
    let sigma = match s.elbow() {
        Elbow::Up => -1.0,
        Elbow::Down => 1.0,
    };
    let q3 = normalize_angle(-FRAC_PI_2 + sigma * bend);
    let (s3, c3) = q3.sin_cos();
    let reach_x = model.l23() - forearm * s3;
    let reach_y = forearm * c3;
    let q2 = if p.norm() == 0.0 { 0.0 } else { normalize_angle(p.z.atan2(radial) - reach_y.atan2(reach_x)) };
    ArmAngles { q1, q2, q3, shoulder_singular }
}

/// Joints 4-6 producing `target` after the first three joints.
pub(crate) fn wrist_angles(model: &RobotModel, arm: &ArmAngles, target: &Rotation, wrist: Wrist) -> ([f64; 3], bool) {
    let rows = model.rows();
    let r03 =
        rows[0].transform(arm.q1).rotation * rows[1].transform(arm.q2).rotation * rows[2].transform(arm.q3).rotation;
    let m = (r03.transpose() * *target).rows();
    let sign = match wrist {
        Wrist::Positive => 1.0,
        Wrist::Negative => -1.0,
    };
    let s5 = m[0][2].hypot(m[1][2]);
    if s5 < WRIST_TOLERANCE {
        let q5 = if m[2][2] >= 0.0 { 0.0 } else { PI };
        let q6 = m[1][0].atan2(m[1][1]);
        return ([0.0, q5, normalize_angle(q6)], true);
    }
    let q5 = (sign * s5).atan2(m[2][2]);
    let q4 = (-sign * m[1][2]).atan2(-sign * m[0][2]);
    let q6 = (-sign * m[2][1]).atan2(sign * m[2][0]);
    ([q4, q5, q6], false)
}

/// Backward transform of the original robot for configuration `s`.
///
/// Joint limits are not enforced; `limit_ok` reports them per joint.
pub fn ik_original(model: &RobotModel, wcp: &Frame, s: Configuration) -> IkOutcome {
    let p = wcp.position;
    let dist = p.norm();
    let shell = model.shell();
    if dist > shell.outer_radius + REACH_TOLERANCE {
        return IkOutcome::OutOfReach { defect: dist - shell.outer_radius };
    }
    if dist < shell.inner_radius - REACH_TOLERANCE {
        return IkOutcome::OutOfReach { defect: shell.inner_radius - dist };
    }
    let bend = elbow_cosine(model, dist).clamp(-1.0, 1.0).acos();
    let arm = arm_angles(model, &p, s, bend, model.l35());
    let ([q4, q5, q6], wrist_singular) = wrist_angles(model, &arm, &wcp.rotation, s.wrist());
    let q = Joints([arm.q1, arm.q2, arm.q3, q4, q5, q6]).normalized();
    if arm.shoulder_singular {
        IkOutcome::BranchSingular { kind: SingularityKind::Shoulder, q }
    } else if wrist_singular {
        IkOutcome::BranchSingular { kind: SingularityKind::Wrist, q }
    } else {
        IkOutcome::Solution { q, limit_ok: model.check_limits(&q) }
    }
}

/// TCP-frame convenience wrapper around [`ik_original`].
pub fn ik_original_tcp(model: &RobotModel, tcp: &Frame, s: Configuration) -> IkOutcome {
    ik_original(model, &wcp_target_from_tcp(model, tcp), s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euler_to_frame, EulerPose};

    fn model() -> RobotModel {
        RobotModel::default()
    }

    #[test]
    fn tool_inverse() {
        let m = model().with_tool(0.0).unwrap();
        let f = euler_to_frame(&EulerPose::new(1.0, 2.0, 3.0, 0.1, 0.2, 0.3));
        assert_eq!(wcp_target_from_tcp(&m, &f), f);

        let m = model();
        let w = wcp_target_from_tcp(&m, &Frame::translation(315.0, 0.0, 465.0));
        assert!(w.approx_eq(&Frame::translation(315.0, 0.0, 365.0)));

        let q = Joints([0.4, -0.3, 0.8, 1.2, -0.6, 2.2]);
        let w = wcp_target_from_tcp(&m, &m.fk_tcp(&q));
        assert!(w.approx_eq_with(&m.fk_wcp(&q), 1e-12 * 1e3, 1e-12));
    }

    #[test]
    fn recovers_reference_vector() {
        let m = model();
        let q = Joints([0.3, -0.5, -1.2, 0.4, 0.9, -0.7]);
        let s = m.configuration_of(&q).unwrap();
        let out = ik_original(&m, &m.fk_wcp(&q), s);
        let got = out.solution().expect("reachable");
        assert!(got.max_angle_error(&q) < 1e-9, "{got:?}");
    }

    #[test]
    fn out_of_reach_defects() {
        let m = model();
        let s = Configuration::default();
        match ik_original(&m, &Frame::translation(700.0, 0.0, 315.0), s) {
            IkOutcome::OutOfReach { defect } => {
                assert!((defect - ((700f64.powi(2) + 315f64.powi(2)).sqrt() - 680.0)).abs() < 1e-12);
                assert!((defect - 87.6).abs() < 0.1);
            }
            other => panic!("{other:?}"),
        }
        match ik_original(&m, &Frame::translation(20.0, 0.0, 0.0), s) {
            IkOutcome::OutOfReach { defect } => assert!((defect - 30.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_eight_branches_are_distinct_and_exact() {
        let m = model();
        let target = euler_to_frame(&EulerPose::new(350.0, 200.0, 150.0, 0.4, -0.3, 1.1));
        let mut sols: Vec<Joints> = Vec::new();
        for s in Configuration::all() {
            let q = *ik_original(&m, &target, s).solution().expect("nonsingular target");
            assert!(m.fk_wcp(&q).approx_eq(&target), "config {}", s.index());
            assert_eq!(m.configuration_of(&q).unwrap(), s);
            sols.push(q);
        }
        for i in 0..8 {
            for j in (i + 1)..8 {
                assert!(sols[i].max_angle_error(&sols[j]) > 1e-3);
            }
        }
    }

    #[test]
    fn shoulder_and_wrist_singularities() {
        let m = model();
        // WCP on the base axis
        let target = Frame::translation(0.0, 0.0, 400.0);
        match ik_original(&m, &target, Configuration::default()) {
            IkOutcome::BranchSingular { kind: SingularityKind::Shoulder, q } => {
                assert!(m.fk_wcp(&q).position.metric_distance(&target.position) < 1e-9);
            }
            other => panic!("{other:?}"),
        }
        // q5 = 0 on the front / elbow-down branch
        let target = m.fk_wcp(&Joints([0.2, 0.1, 0.3, 0.0, 0.0, 0.5]));
        match ik_original(&m, &target, Configuration::new(2).unwrap()) {
            IkOutcome::BranchSingular { kind: SingularityKind::Wrist, q } => {
                assert!(m.fk_wcp(&q).approx_eq(&target));
                assert_eq!(q.0[3], 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn limit_flags_are_reported_not_enforced() {
        let m = model();
        let q = Joints([0.3, -0.5, -2.5, 0.4, 0.9, -0.7]);
        let s = m.configuration_of(&q).unwrap();
        match ik_original(&m, &m.fk_wcp(&q), s) {
            IkOutcome::Solution { q: got, limit_ok } => {
                assert!(got.max_angle_error(&q) < 1e-9);
                assert_eq!(limit_ok, [true, true, false, true, true, true]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn boundary_band_is_reachable() {
        let m = model();
        let q = Joints([0.0, 0.3, -FRAC_PI_2, 0.2, 0.7, 0.1]);
        let f = m.fk_wcp(&q);
        let out = ik_original(&m, &f, Configuration::new(0).unwrap());
        let got = out.solution().expect("on the outer boundary");
        assert!(m.fk_wcp(got).approx_eq(&f));
    }
}
