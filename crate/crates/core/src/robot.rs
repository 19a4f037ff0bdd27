//! The original 6R robot, its virtual 6R+1P extension, and forward kinematics.
//!
//! The model is data driven: forward kinematics multiplies out whatever DH rows
//! the model holds. The closed-form backward transforms in [`crate::ik`] and
//! [`crate::virtual_ik`] assume the row layout produced by
//! [`RobotModel::new`], which is validated on construction.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dh_transform, normalize_angle, Frame};

/// Tolerance for branch indicators in [`RobotModel::configuration_of`].
pub const BRANCH_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// One row of a DH table. The joint variable adds to `theta_offset` for a
/// revolute joint and to `d` for a prismatic joint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub joint_kind: JointKind,
    #[serde(default)]
    pub theta_offset: f64,
    pub d: f64,
    pub a: f64,
    pub alpha: f64,
}

impl DhRow {
    pub const fn revolute(d: f64, a: f64, alpha: f64) -> Self {
        DhRow { joint_kind: JointKind::Revolute, theta_offset: 0.0, d, a, alpha }
    }

    pub const fn prismatic(theta: f64, a: f64, alpha: f64) -> Self {
        DhRow { joint_kind: JointKind::Prismatic, theta_offset: theta, d: 0.0, a, alpha }
    }

    pub fn transform(&self, value: f64) -> Frame {
        match self.joint_kind {
            JointKind::Revolute => dh_transform(self.theta_offset + value, self.d, self.a, self.alpha),
            JointKind::Prismatic => dh_transform(self.theta_offset, self.d + value, self.a, self.alpha),
        }
    }

    fn approx_eq(&self, other: &DhRow) -> bool {
        const TOL: f64 = 1e-12;
        self.joint_kind == other.joint_kind
            && (self.theta_offset - other.theta_offset).abs() <= TOL
            && (self.d - other.d).abs() <= TOL
            && (self.a - other.a).abs() <= TOL
            && (self.alpha - other.alpha).abs() <= TOL
    }
}

/// Joint angles of the original robot, radians.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Joints(pub [f64; 6]);

impl Joints {
    pub fn zero() -> Self {
        Joints([0.0; 6])
    }

    pub fn normalized(&self) -> Self {
        Joints(self.0.map(normalize_angle))
    }

    /// Largest per-joint difference, measured on the circle.
    pub fn max_angle_error(&self, other: &Joints) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| normalize_angle(a - b).abs()).fold(0.0, f64::max)
    }
}

/// Joint values of the virtual robot: six angles plus the unbounded prismatic
/// joint `v` [mm] that sits between joints 3 and 4.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VirtualJoints {
    pub q: [f64; 6],
    pub v: f64,
}

impl VirtualJoints {
    pub fn new(q: [f64; 6], v: f64) -> Self {
        VirtualJoints { q, v }
    }

    /// Chain order `(q1, q2, q3, v, q4, q5, q6)`.
    pub fn from_chain_order(c: [f64; 7]) -> Self {
        VirtualJoints { q: [c[0], c[1], c[2], c[4], c[5], c[6]], v: c[3] }
    }

    pub fn chain_order(&self) -> [f64; 7] {
        let q = &self.q;
        [q[0], q[1], q[2], self.v, q[3], q[4], q[5]]
    }

    pub fn angles(&self) -> Joints {
        Joints(self.q)
    }
}

/// Positional shape of the mathematical workspace: a hollow sphere about the base.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceShell {
    pub inner_radius: f64,
    pub outer_radius: f64,
}

impl WorkspaceShell {
    pub fn new(inner_radius: f64, outer_radius: f64) -> Result<Self> {
        if !(0.0 <= inner_radius && inner_radius < outer_radius) {
            return Err(Error::InvalidModel(format!(
                "shell radii must satisfy 0 <= inner < outer, got {inner_radius}, {outer_radius}"
            )));
        }
        Ok(WorkspaceShell { inner_radius, outer_radius })
    }

    pub fn contains_radius(&self, r: f64, tol: f64) -> bool {
        r >= self.inner_radius - tol && r <= self.outer_radius + tol
    }
}

/// Eight-way branch selector for the backward transform.
///
/// * bit 0: shoulder. 0 = front (WCP on the positive side of the q1 direction), 1 = back.
/// * bit 1: elbow. 0 = up (`cos q3 < 0`), 1 = down (`cos q3 > 0`).
/// * bit 2: wrist. 0 = `q5 > 0`, 1 = `q5 < 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Configuration(u8);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shoulder {
    Front,
    Back,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elbow {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wrist {
    Positive,
    Negative,
}

impl Configuration {
    pub fn new(s: u8) -> Result<Self> {
        if s > 7 {
            return Err(Error::InvalidConfiguration(s));
        }
        Ok(Configuration(s))
    }

    pub fn from_branches(shoulder: Shoulder, elbow: Elbow, wrist: Wrist) -> Self {
        let mut s = 0;
        if shoulder == Shoulder::Back {
            s |= 1;
        }
        if elbow == Elbow::Down {
            s |= 2;
        }
        if wrist == Wrist::Negative {
            s |= 4;
        }
        Configuration(s)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Configuration> {
        (0..8).map(Configuration)
    }

    pub fn shoulder(self) -> Shoulder {
        if self.0 & 1 == 0 {
            Shoulder::Front
        } else {
            Shoulder::Back
        }
    }

    pub fn elbow(self) -> Elbow {
        if self.0 & 2 == 0 {
            Elbow::Up
        } else {
            Elbow::Down
        }
    }

    pub fn wrist(self) -> Wrist {
        if self.0 & 4 == 0 {
            Wrist::Positive
        } else {
            Wrist::Negative
        }
    }
}

impl TryFrom<u8> for Configuration {
    type Error = Error;

    fn try_from(s: u8) -> Result<Self> {
        Configuration::new(s)
    }
}

impl From<Configuration> for u8 {
    fn from(c: Configuration) -> u8 {
        c.0
    }
}

/// Default limits: +-170 deg on joints 1, 4, 6 and +-120 deg on joints 2, 3, 5.
pub fn default_joint_limits() -> ([f64; 6], [f64; 6]) {
    let a = 170f64.to_radians();
    let b = 120f64.to_radians();
    ([-a, -b, -b, -a, -b, -a], [a, b, b, a, b, a])
}

/// Robot with a 2-link arm (`l23`, `l35`), central wrist, and a tool offset
/// `tool_tz` along the flange z axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RobotModelFile", into = "RobotModelFile")]
pub struct RobotModel {
    name: String,
    rows: Vec<DhRow>,
    virtual_rows: Vec<DhRow>,
    l23: f64,
    l35: f64,
    tool_tz: f64,
    q_min: [f64; 6],
    q_max: [f64; 6],
}

/// On-disk schema for [`RobotModel`]. `rows` is optional; when present it must
/// equal the table implied by `l23` and `l35`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModelFile {
    #[serde(default)]
    pub name: String,
    pub l23: f64,
    pub l35: f64,
    pub tool_tz: f64,
    pub q_min: [f64; 6],
    pub q_max: [f64; 6],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<DhRow>>,
}

impl TryFrom<RobotModelFile> for RobotModel {
    type Error = Error;

    fn try_from(f: RobotModelFile) -> Result<Self> {
        let mut model = RobotModel::new(f.l23, f.l35, f.tool_tz, f.q_min, f.q_max)?;
        model.name = f.name;
        if let Some(rows) = f.rows {
            let matches = rows.len() == model.rows.len() && rows.iter().zip(&model.rows).all(|(a, b)| a.approx_eq(b));
            if !matches {
                return Err(Error::InvalidModel(
                    "rows do not match the supported 6R layout for the given l23/l35".into(),
                ));
            }
        }
        Ok(model)
    }
}

impl From<RobotModel> for RobotModelFile {
    fn from(m: RobotModel) -> Self {
        RobotModelFile {
            name: m.name,
            l23: m.l23,
            l35: m.l35,
            tool_tz: m.tool_tz,
            q_min: m.q_min,
            q_max: m.q_max,
            rows: Some(m.rows),
        }
    }
}

impl Default for RobotModel {
    fn default() -> Self {
        let (lo, hi) = default_joint_limits();
        RobotModel::new(315.0, 365.0, 100.0, lo, hi).expect("built-in model is valid")
    }
}

impl RobotModel {
    pub fn new(l23: f64, l35: f64, tool_tz: f64, q_min: [f64; 6], q_max: [f64; 6]) -> Result<Self> {
        if !(l23 > 0.0 && l35 > 0.0 && l23.is_finite() && l35.is_finite()) {
            return Err(Error::InvalidModel(format!("link lengths must be positive, got {l23}, {l35}")));
        }
        if l23 == l35 {
            // the inner void would collapse to a point
            return Err(Error::InvalidModel("l23 == l35 is not supported".into()));
        }
        if !tool_tz.is_finite() {
            return Err(Error::InvalidModel("tool offset must be finite".into()));
        }
        for i in 0..6 {
            if !(-PI <= q_min[i] && q_min[i] <= q_max[i] && q_max[i] <= PI) {
                return Err(Error::InvalidModel(format!(
                    "joint {} limits must satisfy -pi <= min <= max <= pi, got [{}, {}]",
                    i + 1,
                    q_min[i],
                    q_max[i]
                )));
            }
        }
        let rows = vec![
            DhRow::revolute(0.0, 0.0, FRAC_PI_2),
            DhRow::revolute(0.0, l23, 0.0),
            DhRow::revolute(0.0, 0.0, -FRAC_PI_2),
            DhRow::revolute(l35, 0.0, FRAC_PI_2),
            DhRow::revolute(0.0, 0.0, -FRAC_PI_2),
            DhRow::revolute(0.0, 0.0, 0.0),
        ];
        let mut virtual_rows = rows.clone();
        virtual_rows.insert(3, DhRow::prismatic(0.0, 0.0, 0.0));
        Ok(RobotModel { name: String::new(), rows, virtual_rows, l23, l35, tool_tz, q_min, q_max })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_limits(mut self, q_min: [f64; 6], q_max: [f64; 6]) -> Result<Self> {
        let checked = RobotModel::new(self.l23, self.l35, self.tool_tz, q_min, q_max)?;
        self.q_min = checked.q_min;
        self.q_max = checked.q_max;
        Ok(self)
    }

    pub fn with_tool(mut self, tool_tz: f64) -> Result<Self> {
        let checked = RobotModel::new(self.l23, self.l35, tool_tz, self.q_min, self.q_max)?;
        self.tool_tz = checked.tool_tz;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> &[DhRow] {
        &self.rows
    }

    pub fn virtual_rows(&self) -> &[DhRow] {
        &self.virtual_rows
    }

    pub fn l23(&self) -> f64 {
        self.l23
    }

    pub fn l35(&self) -> f64 {
        self.l35
    }

    pub fn tool_tz(&self) -> f64 {
        self.tool_tz
    }

    pub fn q_min(&self) -> &[f64; 6] {
        &self.q_min
    }

    pub fn q_max(&self) -> &[f64; 6] {
        &self.q_max
    }

    pub fn tool(&self) -> Frame {
        Frame::translation(0.0, 0.0, self.tool_tz)
    }

    pub fn shell(&self) -> WorkspaceShell {
        WorkspaceShell { inner_radius: (self.l23 - self.l35).abs(), outer_radius: self.l23 + self.l35 }
    }

    pub fn fk_wcp(&self, q: &Joints) -> Frame {
        chain(&self.rows, &q.0)
    }

    pub fn fk_tcp(&self, q: &Joints) -> Frame {
        self.fk_wcp(q) * self.tool()
    }

    pub fn fk_virtual_wcp(&self, qt: &VirtualJoints) -> Frame {
        chain(&self.virtual_rows, &qt.chain_order())
    }

    pub fn fk_virtual_tcp(&self, qt: &VirtualJoints) -> Frame {
        self.fk_virtual_wcp(qt) * self.tool()
    }

    /// Branch indicators `(shoulder, elbow, wrist)` whose signs define the configuration bits.
    pub fn branch_indicators(&self, q: &Joints) -> (f64, f64, f64) {
        let [_, q2, q3, _, q5, _] = q.0;
        let (s3, c3) = q3.sin_cos();
        // WCP coordinate along the radial direction selected by q1
        let radial = q2.cos() * (self.l23 - self.l35 * s3) - q2.sin() * (self.l35 * c3);
        (radial, c3, q5.sin())
    }

    pub fn configuration_of(&self, q: &Joints) -> Result<Configuration> {
        let (radial, elbow, wrist) = self.branch_indicators(q);
        let names = ["shoulder", "elbow", "wrist"];
        for (name, value) in names.iter().zip([radial, elbow, wrist]) {
            if value.abs() < BRANCH_TOLERANCE {
                return Err(Error::Singular(format!("{name} indicator {value:e} is at its branch boundary")));
            }
        }
        Ok(Configuration::from_branches(
            if radial > 0.0 { Shoulder::Front } else { Shoulder::Back },
            if elbow < 0.0 { Elbow::Up } else { Elbow::Down },
            if wrist > 0.0 { Wrist::Positive } else { Wrist::Negative },
        ))
    }

    /// Per-joint closed-interval test against the joint limits.
    pub fn check_limits(&self, q: &Joints) -> [bool; 6] {
        std::array::from_fn(|i| self.q_min[i] <= q.0[i] && q.0[i] <= self.q_max[i])
    }
}

fn chain(rows: &[DhRow], values: &[f64]) -> Frame {
    debug_assert_eq!(rows.len(), values.len());
    rows.iter().zip(values).fold(Frame::identity(), |acc, (row, &value)| acc * row.transform(value))
}
