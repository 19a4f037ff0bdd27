//! Rigid-frame algebra over R^3 x SO(3) and the Denavit-Hartenberg building block.
//!
//! Positions are in millimetres, angles in radians. Rotations are stored as plain
//! 3x3 matrices so chain products read exactly like the kinematic equations.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for position and rotation-entry comparisons of frames.
pub const FRAME_TOLERANCE: f64 = 1e-9;

/// Extraction threshold for the pitch angle: `|r31| >= 1 - GIMBAL_TOLERANCE` is gimbal lock.
pub const GIMBAL_TOLERANCE: f64 = 1e-9;

/// Map an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// An element of SO(3).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[[f64; 3]; 3]", try_from = "[[f64; 3]; 3]")]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix without checking orthonormality.
    ///
    /// Callers are responsible for passing a proper rotation; use
    /// [`Rotation::from_rows`] for untrusted input.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    /// Builds a rotation from row-major entries, rejecting anything that is not
    /// orthonormal with determinant +1 (tolerance 1e-6, which admits rounded input).
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        let m = Matrix3::from_fn(|i, j| rows[i][j]);
        let r = Rotation(m);
        if !r.is_proper(1e-6) {
            return Err(Error::InvalidRotation);
        }
        Ok(r)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// True when `R^T R = I` and `det R = 1`, entrywise within `tol`.
    pub fn is_proper(&self, tol: f64) -> bool {
        let err = (self.0.transpose() * self.0 - Matrix3::identity()).amax();
        err <= tol && (self.0.determinant() - 1.0).abs() <= tol
    }

    pub fn approx_eq(&self, other: &Rotation, tol: f64) -> bool {
        (self.0 - other.0).amax() <= tol
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl From<Rotation> for [[f64; 3]; 3] {
    fn from(r: Rotation) -> Self {
        r.rows()
    }
}

impl TryFrom<[[f64; 3]; 3]> for Rotation {
    type Error = Error;

    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self> {
        Rotation::from_rows(rows)
    }
}

pub fn rot_x(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Rotation(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
}

pub fn rot_y(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Rotation(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
}

pub fn rot_z(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Rotation(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
}

/// A rigid transform: rotation followed by translation, `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub position: Vector3<f64>,
    pub rotation: Rotation,
}

impl Frame {
    pub fn new(position: Vector3<f64>, rotation: Rotation) -> Self {
        Frame { position, rotation }
    }

    pub fn identity() -> Self {
        Frame::new(Vector3::zeros(), Rotation::identity())
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        Frame::new(Vector3::new(x, y, z), Rotation::identity())
    }

    pub fn from_rotation(rotation: Rotation) -> Self {
        Frame::new(Vector3::zeros(), rotation)
    }

    /// `self * other`.
    pub fn compose(&self, other: &Frame) -> Frame {
        Frame {
            position: self.position + self.rotation.apply(&other.position),
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn inverse(&self) -> Frame {
        let rt = self.rotation.transpose();
        Frame { position: -rt.apply(&self.position), rotation: rt }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.rotation.apply(p)
    }

    /// Equality with separate position (mm) and rotation-entry tolerances.
    pub fn approx_eq_with(&self, other: &Frame, pos_tol: f64, rot_tol: f64) -> bool {
        (self.position - other.position).amax() <= pos_tol && self.rotation.approx_eq(&other.rotation, rot_tol)
    }

    /// Equality at [`FRAME_TOLERANCE`].
    pub fn approx_eq(&self, other: &Frame) -> bool {
        self.approx_eq_with(other, FRAME_TOLERANCE, FRAME_TOLERANCE)
    }

    /// Largest position and rotation-entry deviation from `other`.
    pub fn deviation(&self, other: &Frame) -> (f64, f64) {
        ((self.position - other.position).amax(), (self.rotation.matrix() - other.rotation.matrix()).amax())
    }
}

impl Mul for Frame {
    type Output = Frame;

    fn mul(self, rhs: Frame) -> Frame {
        self.compose(&rhs)
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.position;
        writeln!(f, "position [mm]: ({:.6}, {:.6}, {:.6})", p.x, p.y, p.z)?;
        write!(f, "rotation:")?;
        for row in self.rotation.rows() {
            write!(f, "\n  [{:>10.6} {:>10.6} {:>10.6}]", row[0], row[1], row[2])?;
        }
        Ok(())
    }
}

/// Frame parameters `Trans(x, y, z) * Rz(alpha) * Ry(beta) * Rx(gamma)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EulerPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerPose {
    pub fn new(x: f64, y: f64, z: f64, alpha: f64, beta: f64, gamma: f64) -> Self {
        EulerPose { x, y, z, alpha, beta, gamma }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        EulerPose::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.alpha, self.beta, self.gamma]
    }

    /// Same pose with all three angles mapped into `(-pi, pi]`.
    pub fn normalized(&self) -> Self {
        EulerPose {
            alpha: normalize_angle(self.alpha),
            beta: normalize_angle(self.beta),
            gamma: normalize_angle(self.gamma),
            ..*self
        }
    }
}

pub fn euler_to_frame(p: &EulerPose) -> Frame {
    Frame::new(Vector3::new(p.x, p.y, p.z), rot_z(p.alpha) * rot_y(p.beta) * rot_x(p.gamma))
}

/// Inverse of [`euler_to_frame`] with `beta` in `(-pi/2, pi/2)`.
pub fn frame_to_euler(f: &Frame) -> Result<EulerPose> {
    let m = f.rotation.matrix();
    let r31 = m[(2, 0)];
    if r31.abs() >= 1.0 - GIMBAL_TOLERANCE {
        return Err(Error::GimbalLock { r31 });
    }
    let beta = (-r31).asin();
    let alpha = m[(1, 0)].atan2(m[(0, 0)]);
    let gamma = m[(2, 1)].atan2(m[(2, 2)]);
    Ok(EulerPose::new(f.position.x, f.position.y, f.position.z, alpha, beta, gamma).normalized())
}

/// `Rz(theta) * Tz(d) * Tx(a) * Rx(alpha)`.
pub fn dh_transform(theta: f64, d: f64, a: f64, alpha: f64) -> Frame {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    Frame::new(
        Vector3::new(a * ct, a * st, d),
        Rotation(Matrix3::new(ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca)),
    )
}
