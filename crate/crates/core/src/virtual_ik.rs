//! Total backward transform of the virtual robot.
//!
//! The virtual prismatic joint lengthens (or shortens) the forearm by `v`. For a
//! WCP inside the hollow shell `v = 0` and the original solution is returned;
//! otherwise `v` is the smallest-magnitude extension that makes the WCP
//! reachable, which is the signed distance to the shell, and the arm is put in
//! its stretched (outside) or folded (inner void) position.
//!
//! The elbow angle `acos(c)` has an infinite slope at the stretched position
//! `c = 1`. [`smooth_elbow_angle`] replaces it on `[1 - eps, 1]` by a quintic that
//! joins it with C2 continuity and is flat to second order at `c = 1`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Frame, Rotation};
use crate::ik::{arm_angles, elbow_cosine, wcp_target_from_tcp, wrist_angles, REACH_TOLERANCE};
use crate::robot::{Configuration, Joints, RobotModel, VirtualJoints, WorkspaceShell};

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_enabled")]
    pub enabled: bool,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_enabled() -> bool {
    true
}

impl Default for SmoothingParams {
    fn default() -> Self {
        SmoothingParams { epsilon: DEFAULT_EPSILON, enabled: true }
    }
}

impl SmoothingParams {
    pub fn new(epsilon: f64, enabled: bool) -> Result<Self> {
        let p = SmoothingParams { epsilon, enabled };
        p.validate()?;
        Ok(p)
    }

    pub fn off() -> Self {
        SmoothingParams { epsilon: DEFAULT_EPSILON, enabled: false }
    }

    pub fn with_epsilon(epsilon: f64) -> Result<Self> {
        SmoothingParams::new(epsilon, true)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidOptions(format!("smoothing epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Degree-5 polynomial in `t = 1 - c`, valid on `t` in `[0, eps]`.
///
/// `coefficients[k]` multiplies `t^k`; the first three vanish so the patch is
/// zero with zero first and second derivative at `c = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuinticPatch {
    pub epsilon: f64,
    pub coefficients: [f64; 6],
}

impl QuinticPatch {
    pub fn new(epsilon: f64) -> Self {
        let c0 = 1.0 - epsilon;
        let w = 1.0 - c0 * c0;
        // acos and its c-derivatives at the junction, converted to t-derivatives
        let value = c0.acos();
        let slope = epsilon / w.sqrt();
        let curvature = -c0 / (w * w.sqrt()) * epsilon * epsilon;
        // scaled coefficients b_k = a_k eps^k from the 3x3 Hermite system
        let b3 = 10.0 * value - 4.0 * slope + 0.5 * curvature;
        let b4 = -15.0 * value + 7.0 * slope - curvature;
        let b5 = 6.0 * value - 3.0 * slope + 0.5 * curvature;
        QuinticPatch {
            epsilon,
            coefficients: [0.0, 0.0, 0.0, b3 / epsilon.powi(3), b4 / epsilon.powi(4), b5 / epsilon.powi(5)],
        }
    }

    /// Value at `c`.
    pub fn eval(&self, c: f64) -> f64 {
        let t = 1.0 - c;
        self.coefficients.iter().rev().fold(0.0, |acc, a| acc * t + a)
    }

    /// `d/dc` at `c`.
    pub fn derivative(&self, c: f64) -> f64 {
        let t = 1.0 - c;
        let a = &self.coefficients;
        -(a[1] + t * (2.0 * a[2] + t * (3.0 * a[3] + t * (4.0 * a[4] + t * 5.0 * a[5]))))
    }

    /// `d^2/dc^2` at `c`.
    pub fn second_derivative(&self, c: f64) -> f64 {
        let t = 1.0 - c;
        let a = &self.coefficients;
        2.0 * a[2] + t * (6.0 * a[3] + t * (12.0 * a[4] + t * 20.0 * a[5]))
    }
}

/// Elbow bend `acos(c)`, replaced near `c = 1` by the C2 quintic patch when enabled.
pub fn smooth_elbow_angle(c: f64, params: &SmoothingParams) -> f64 {
    let c = c.clamp(-1.0, 1.0);
    if !params.enabled || c <= 1.0 - params.epsilon {
        c.acos()
    } else {
        QuinticPatch::new(params.epsilon).eval(c)
    }
}

/// Signed distance from `p` to the shell: positive outside, negative in the
/// inner void, zero inside.
pub fn distance_to_shell(shell: &WorkspaceShell, p: &Vector3<f64>) -> f64 {
    let r = p.norm();
    if r > shell.outer_radius {
        r - shell.outer_radius
    } else if r < shell.inner_radius {
        r - shell.inner_radius
    } else {
        0.0
    }
}

/// Backward transform of the virtual robot. Defined for every WCP frame.
pub fn ik_virtual(model: &RobotModel, wcp: &Frame, s: Configuration, smoothing: &SmoothingParams) -> VirtualJoints {
    let p = wcp.position;
    let dist = p.norm();
    let shell = model.shell();
    let (bend, forearm) = if shell.contains_radius(dist, REACH_TOLERANCE) {
        (smooth_elbow_angle(elbow_cosine(model, dist), smoothing), model.l35())
    } else if dist > shell.outer_radius {
        // stretched: forearm reaches the target exactly
        (0.0, model.l35() + dist - shell.outer_radius)
    } else if model.l35() > model.l23() {
        // folded back past the shoulder
        (PI, model.l23() + dist)
    } else {
        (PI, model.l23() - dist)
    };
    let arm = arm_angles(model, &p, s, bend, forearm);
    let ([q4, q5, q6], _) = wrist_angles(model, &arm, &wcp.rotation, s.wrist());
    let q = Joints([arm.q1, arm.q2, arm.q3, q4, q5, q6]).normalized();
    VirtualJoints::new(q.0, forearm - model.l35())
}

/// TCP-frame convenience wrapper around [`ik_virtual`].
pub fn ik_virtual_tcp(model: &RobotModel, tcp: &Frame, s: Configuration, smoothing: &SmoothingParams) -> VirtualJoints {
    ik_virtual(model, &wcp_target_from_tcp(model, tcp), s, smoothing)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    /// Line parameter in `[0, 1]`.
    pub t: f64,
    /// TCP position.
    pub position: Vector3<f64>,
    pub joints: VirtualJoints,
}

/// TCP moves along the segment `start -> end` with fixed orientation `rotation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSweep<'a> {
    pub model: &'a RobotModel,
    pub start: Vector3<f64>,
    pub end: Vector3<f64>,
    pub rotation: Rotation,
    pub configuration: Configuration,
    pub smoothing: SmoothingParams,
}

impl LineSweep<'_> {
    pub fn tcp_at(&self, t: f64) -> Frame {
        Frame::new(self.start + (self.end - self.start) * t, self.rotation)
    }

    pub fn wcp_at(&self, t: f64) -> Frame {
        wcp_target_from_tcp(self.model, &self.tcp_at(t))
    }

    pub fn sample(&self, t: f64) -> SweepSample {
        let tcp = self.tcp_at(t);
        let joints = ik_virtual_tcp(self.model, &tcp, self.configuration, &self.smoothing);
        SweepSample { t, position: tcp.position, joints }
    }

    /// `n` equally spaced samples including both end points.
    pub fn run(&self, n: usize) -> Result<Vec<SweepSample>> {
        if n < 2 {
            return Err(Error::InvalidOptions(format!("a sweep needs at least 2 samples, got {n}")));
        }
        let last = (n - 1) as f64;
        Ok((0..n).map(|i| self.sample(i as f64 / last)).collect())
    }

    /// Parameters where the WCP crosses the shell boundary, located by bisection
    /// between `n` coarse samples.
    pub fn boundary_crossings(&self, n: usize) -> Vec<f64> {
        let shell = self.model.shell();
        let inside = |t: f64| distance_to_shell(&shell, &self.wcp_at(t).position) == 0.0;
        let n = n.max(2);
        let last = (n - 1) as f64;
        let mut crossings = Vec::new();
        let mut prev_t = 0.0;
        let mut prev_in = inside(0.0);
        for i in 1..n {
            let t = i as f64 / last;
            let cur_in = inside(t);
            if cur_in != prev_in {
                let (mut lo, mut hi) = (prev_t, t);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if inside(mid) == prev_in {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                crossings.push(0.5 * (lo + hi));
            }
            prev_t = t;
            prev_in = cur_in;
        }
        crossings
    }
}

/// Sweep of the boundary-crossing experiment: TCP from (500, 0, 215) to
/// (1300, 0, 215), tool pointing down, elbow up.
pub fn reference_sweep(model: &RobotModel, smoothing: SmoothingParams) -> LineSweep<'_> {
    LineSweep {
        model,
        start: Vector3::new(500.0, 0.0, 215.0),
        end: Vector3::new(1300.0, 0.0, 215.0),
        rotation: Rotation::from_rows([[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
            .expect("diag(-1, 1, -1) is a rotation"),
        // front shoulder, elbow up, q5 < 0 (keeps q4 = q6 = 0 instead of +-pi)
        configuration: Configuration::new(4).expect("valid"),
        smoothing,
    }
}

pub const SWEEP_CSV_HEADER: [&str; 8] = ["x", "q1", "q2", "q3", "q4", "q5", "q6", "v"];

/// Writes `x, q1..q6, v` per sample with a header row.
pub fn write_sweep_csv<W: Write>(out: W, samples: &[SweepSample]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(SWEEP_CSV_HEADER).map_err(csv_err)?;
    for s in samples {
        let q = &s.joints.q;
        let row = [s.position.x, q[0], q[1], q[2], q[3], q[4], q[5], s.joints.v];
        w.write_record(row.iter().map(|v| format!("{v:.12e}"))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
