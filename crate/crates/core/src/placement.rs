//! Placement of a `Bx x By` workpiece grid relative to the robot.
//!
//! The corner frame `C` carries the grid; every grid pose is solved with the
//! virtual robot in one shared configuration. The objective is the sum of
//! squared virtual-joint values and the constraints are the joint limits of
//! every grid point, so the program is defined for every corner pose.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{euler_to_frame, rot_x, EulerPose, Frame, Rotation};
use crate::robot::{Configuration, RobotModel, VirtualJoints};
use crate::solver::NlpProblem;
use crate::virtual_ik::{distance_to_shell, ik_virtual_tcp, SmoothingParams};

/// Constraint rows per grid point: lower then upper limit for each joint.
pub const CONSTRAINTS_PER_POINT: usize = 12;

pub const VARIABLE_NAMES: [&str; 6] = ["x", "y", "z", "alpha", "beta", "gamma"];

fn default_pick() -> Rotation {
    rot_x(std::f64::consts::PI)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub bx: usize,
    pub by: usize,
    /// Grid spacing along the corner frame's x axis [mm].
    pub dx: f64,
    /// Grid spacing along the corner frame's y axis [mm].
    pub dy: f64,
    /// Orientation of each pick relative to `C`; tool pointing down by default.
    #[serde(default = "default_pick")]
    pub pick_orientation: Rotation,
    #[serde(default)]
    pub configuration: Configuration,
}

impl BoxSpec {
    pub fn new(bx: usize, by: usize, dx: f64, dy: f64, configuration: Configuration) -> Result<Self> {
        let spec = BoxSpec { bx, by, dx, dy, pick_orientation: default_pick(), configuration };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_pick_orientation(mut self, pick: Rotation) -> Self {
        self.pick_orientation = pick;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.bx == 0 || self.by == 0 {
            return Err(Error::InvalidProblem(format!("grid {}x{} is empty", self.bx, self.by)));
        }
        if !(self.dx > 0.0 && self.dy > 0.0 && self.dx.is_finite() && self.dy.is_finite()) {
            return Err(Error::InvalidProblem(format!("spacing ({}, {}) must be positive", self.dx, self.dy)));
        }
        if !self.pick_orientation.is_proper(1e-9) {
            return Err(Error::InvalidRotation);
        }
        Ok(())
    }

    pub fn num_points(&self) -> usize {
        self.bx * self.by
    }

    /// Offset of grid point `(k, l)` in the corner frame, zero-based.
    fn offset(&self, k: usize, l: usize) -> Vector3<f64> {
        Vector3::new(k as f64 * self.dx, l as f64 * self.dy, 0.0)
    }
}

/// Pick frames of the grid in row-major order (`l` runs fastest).
pub fn grid_frames(corner: &EulerPose, spec: &BoxSpec) -> Vec<Frame> {
    let c = euler_to_frame(corner);
    let pick = Frame::from_rotation(spec.pick_orientation);
    let mut out = Vec::with_capacity(spec.num_points());
    for k in 0..spec.bx {
        for l in 0..spec.by {
            let o = spec.offset(k, l);
            out.push(c.compose(&Frame::translation(o.x, o.y, o.z)).compose(&pick));
        }
    }
    out
}

/// Which corner parameters are optimized, with optional bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementVariables {
    pub initial: EulerPose,
    /// Order x, y, z, alpha, beta, gamma.
    #[serde(default = "all_free")]
    pub free: [bool; 6],
    #[serde(default)]
    pub lower: [Option<f64>; 6],
    #[serde(default)]
    pub upper: [Option<f64>; 6],
}

fn all_free() -> [bool; 6] {
    [true; 6]
}

impl PlacementVariables {
    pub fn all_free(initial: EulerPose) -> Self {
        PlacementVariables { initial, free: all_free(), lower: [None; 6], upper: [None; 6] }
    }

    pub fn with_free(mut self, free: [bool; 6]) -> Self {
        self.free = free;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.free.iter().any(|&f| f) {
            return Err(Error::InvalidProblem("no free placement variable".into()));
        }
        if self.initial.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("initial pose must be finite".into()));
        }
        for ((name, lo), hi) in VARIABLE_NAMES.iter().zip(self.lower).zip(self.upper) {
            if let (Some(lo), Some(hi)) = (lo, hi) {
                if !(lo <= hi) {
                    return Err(Error::InvalidProblem(format!("bounds of {name} are inverted: {lo} > {hi}")));
                }
            }
        }
        Ok(())
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..6).filter(|&i| self.free[i]).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    #[default]
    FiniteDifference,
    AnalyticDistance,
}

/// Additive cost on the corner pose, e.g. a manipulability term.
pub type ExtraCost = Arc<dyn Fn(&EulerPose) -> f64 + Send + Sync>;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub objective: f64,
    pub constraints: Vec<f64>,
    /// Virtual-joint value per grid point, row-major.
    pub v: Vec<f64>,
    pub joints: Vec<VirtualJoints>,
}

#[derive(Clone)]
pub struct PlacementProblem {
    model: RobotModel,
    spec: BoxSpec,
    variables: PlacementVariables,
    free: Vec<usize>,
    smoothing: SmoothingParams,
    gradient_mode: GradientMode,
    extra_cost: Option<ExtraCost>,
}

impl fmt::Debug for PlacementProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlacementProblem")
            .field("model", &self.model)
            .field("spec", &self.spec)
            .field("variables", &self.variables)
            .field("smoothing", &self.smoothing)
            .field("gradient_mode", &self.gradient_mode)
            .field("extra_cost", &self.extra_cost.is_some())
            .finish()
    }
}

impl PlacementProblem {
    pub fn new(
        model: RobotModel,
        spec: BoxSpec,
        variables: PlacementVariables,
        smoothing: SmoothingParams,
    ) -> Result<Self> {
        spec.validate()?;
        variables.validate()?;
        smoothing.validate()?;
        let free = variables.free_indices();
        Ok(PlacementProblem {
            model,
            spec,
            variables,
            free,
            smoothing,
            gradient_mode: GradientMode::default(),
            extra_cost: None,
        })
    }

    pub fn with_gradient_mode(mut self, mode: GradientMode) -> Self {
        self.gradient_mode = mode;
        self
    }

    pub fn with_extra_cost(mut self, cost: ExtraCost) -> Self {
        self.extra_cost = Some(cost);
        self
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn spec(&self) -> &BoxSpec {
        &self.spec
    }

    pub fn variables(&self) -> &PlacementVariables {
        &self.variables
    }

    pub fn gradient_mode(&self) -> GradientMode {
        self.gradient_mode
    }

    /// Free variables of the initial pose, in solver order.
    pub fn initial_point(&self) -> Vec<f64> {
        let a = self.variables.initial.to_array();
        self.free.iter().map(|&i| a[i]).collect()
    }

    /// Corner pose with the free entries replaced by `x`.
    pub fn pose(&self, x: &[f64]) -> EulerPose {
        let mut a = self.variables.initial.to_array();
        for (&i, &xi) in self.free.iter().zip(x) {
            a[i] = xi;
        }
        EulerPose::from_array(a)
    }

    pub fn evaluate_pose(&self, pose: &EulerPose) -> Evaluation {
        let mut e = self.solve_grid(pose);
        e.objective += self.extra(pose);
        e
    }

    fn extra(&self, pose: &EulerPose) -> f64 {
        self.extra_cost.as_ref().map_or(0.0, |cost| cost(pose))
    }

    /// Grid evaluation without the extra cost.
    fn solve_grid(&self, pose: &EulerPose) -> Evaluation {
        let n = self.spec.num_points();
        let mut constraints = Vec::with_capacity(CONSTRAINTS_PER_POINT * n);
        let mut v = Vec::with_capacity(n);
        let mut joints = Vec::with_capacity(n);
        let (q_min, q_max) = (self.model.q_min(), self.model.q_max());
        let mut objective = 0.0;
        for frame in grid_frames(pose, &self.spec) {
            let qt = ik_virtual_tcp(&self.model, &frame, self.spec.configuration, &self.smoothing);
            for i in 0..6 {
                constraints.push(q_min[i] - qt.q[i]);
                constraints.push(qt.q[i] - q_max[i]);
            }
            objective += qt.v * qt.v;
            v.push(qt.v);
            joints.push(qt);
        }
        Evaluation { objective, constraints, v, joints }
    }

    pub fn evaluate(&self, x: &[f64]) -> Evaluation {
        self.evaluate_pose(&self.pose(x))
    }

    /// Objective gradient over the free variables.
    pub fn gradient(&self, x: &[f64], mode: GradientMode, fd_step: f64) -> Vec<f64> {
        match mode {
            GradientMode::FiniteDifference => {
                let mut grad = vec![0.0; x.len()];
                let mut jac = DMatrix::zeros(self.num_constraints(), x.len());
                self.finite_differences(x, fd_step, &mut grad, &mut jac);
                grad
            }
            GradientMode::AnalyticDistance => self.analytic_gradient(x, fd_step),
        }
    }

    /// Central differences of the constraints and of each point's `v`; the
    /// objective gradient is assembled as `sum 2 v dv`. Differencing `v^2`
    /// directly would leave an O(h) residue wherever a point sits within `h`
    /// of the shell, since `v^2` is only C1 there.
    fn finite_differences(&self, x: &[f64], fd_step: f64, grad: &mut [f64], jac: &mut DMatrix<f64>) {
        let v0 = self.solve_grid(&self.pose(x)).v;
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            let h = fd_step * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let pose_p = self.pose(&xp);
            xp[i] = x[i] - h;
            let pose_m = self.pose(&xp);
            xp[i] = x[i];
            let (plus, minus) = (self.solve_grid(&pose_p), self.solve_grid(&pose_m));
            for (j, (gp, gm)) in plus.constraints.iter().zip(&minus.constraints).enumerate() {
                jac[(j, i)] = (gp - gm) / (2.0 * h);
            }
            grad[i] = v0
                .iter()
                .zip(plus.v.iter().zip(&minus.v))
                .map(|(v, (vp, vm))| 2.0 * v * (vp - vm) / (2.0 * h))
                .sum::<f64>()
                + (self.extra(&pose_p) - self.extra(&pose_m)) / (2.0 * h);
        }
    }

    /// `sum 2 d (P / |P|) . dP/dvar` with `d` the signed shell distance of each WCP.
    fn analytic_gradient(&self, x: &[f64], fd_step: f64) -> Vec<f64> {
        let pose = self.pose(x);
        let rz = rot_z_m(pose.alpha);
        let ry = rot_y_m(pose.beta);
        let rx = rot_x_m(pose.gamma);
        let d_alpha = d_rot_z(pose.alpha) * ry * rx;
        let d_beta = rz * d_rot_y(pose.beta) * rx;
        let d_gamma = rz * ry * d_rot_x(pose.gamma);
        let c = euler_to_frame(&pose);
        let tool_back = self.spec.pick_orientation.apply(&Vector3::new(0.0, 0.0, -self.model.tool_tz()));
        let shell = self.model.shell();

        let mut full = [0.0; 6];
        for k in 0..self.spec.bx {
            for l in 0..self.spec.by {
                let u = self.spec.offset(k, l) + tool_back;
                let p = c.transform_point(&u);
                let dist = distance_to_shell(&shell, &p);
                if dist == 0.0 {
                    continue;
                }
                let unit = p / p.norm();
                let w = 2.0 * dist;
                full[0] += w * unit.x;
                full[1] += w * unit.y;
                full[2] += w * unit.z;
                full[3] += w * unit.dot(&(d_alpha * u));
                full[4] += w * unit.dot(&(d_beta * u));
                full[5] += w * unit.dot(&(d_gamma * u));
            }
        }
        let mut grad: Vec<f64> = self.free.iter().map(|&i| full[i]).collect();
        if self.extra_cost.is_some() {
            let mut xp = x.to_vec();
            for i in 0..x.len() {
                let h = fd_step * x[i].abs().max(1.0);
                xp[i] = x[i] + h;
                let fp = self.extra(&self.pose(&xp));
                xp[i] = x[i] - h;
                let fm = self.extra(&self.pose(&xp));
                xp[i] = x[i];
                grad[i] += (fp - fm) / (2.0 * h);
            }
        }
        grad
    }
}

fn rot_x_m(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y_m(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z_m(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn d_rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn d_rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn d_rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

impl NlpProblem for PlacementProblem {
    fn num_variables(&self) -> usize {
        self.free.len()
    }

    fn num_constraints(&self) -> usize {
        CONSTRAINTS_PER_POINT * self.spec.num_points()
    }

    fn evaluate(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let e = PlacementProblem::evaluate(self, x);
        g.copy_from_slice(&e.constraints);
        e.objective
    }

    /// 1 mm for positions; for angles, the rotation that moves a point at
    /// the outer shell radius by 1 mm.
    fn variable_scales(&self) -> Vec<f64> {
        let radian = 1.0 / self.model.shell().outer_radius;
        self.free.iter().map(|&i| if i < 3 { 1.0 } else { radian }).collect()
    }

    fn lower_bounds(&self) -> Vec<f64> {
        self.free.iter().map(|&i| self.variables.lower[i].unwrap_or(f64::NEG_INFINITY)).collect()
    }

    fn upper_bounds(&self) -> Vec<f64> {
        self.free.iter().map(|&i| self.variables.upper[i].unwrap_or(f64::INFINITY)).collect()
    }

    fn derivatives(&self, x: &[f64], fd_step: f64, grad: &mut [f64], jac: &mut DMatrix<f64>) {
        self.finite_differences(x, fd_step, grad, jac);
        if self.gradient_mode == GradientMode::AnalyticDistance {
            grad.copy_from_slice(&self.analytic_gradient(x, fd_step));
        }
    }
}
