//! Rotations, the SO(3) exponential/logarithm maps and the constant angular
//! velocity motion model.
//!
//! A [`Rotation`] `R_t` maps bearing vectors of a fixed scene into the camera
//! frame at time `t`. The relative rotation between two instants is
//! `R_{a,b} = R_b R_aᵀ`, so a ray observed at `a` re-appears at `b` as
//! `R_{a,b} û`. Under constant angular velocity `ω` this only depends on the
//! elapsed time: `R_{a,b} = exp((b - a) ω)`.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Below this angle the exponential and logarithm switch to series expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Orthonormality tolerance accepted by [`Rotation::from_matrix`].
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Element of SO(3), stored as a 3×3 matrix.
#[derive(Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl fmt::Debug for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = self.log();
        write!(f, "Rotation(rotvec = [{:.9}, {:.9}, {:.9}])", r.x, r.y, r.z)
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix after checking `‖RᵀR − I‖∞ ≤ 1e-9` and `|det R − 1| ≤ 1e-9`.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::Data("rotation matrix has non-finite entries".into()));
        }
        let drift = (m.transpose() * m - Matrix3::identity()).amax();
        let det = m.determinant();
        if drift > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::Data(format!(
                "matrix is not a rotation (orthonormality drift {drift:.3e}, det {det:.12})"
            )));
        }
        Ok(Rotation(m))
    }

    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Rodrigues' formula.
    pub fn exp(r: &Vector3<f64>) -> Self {
        let theta2 = r.norm_squared();
        let k = hat(r);
        let k2 = k * k;
        let theta = theta2.sqrt();
        if theta < SMALL_ANGLE {
            return Rotation(Matrix3::identity() + k + k2 * 0.5);
        }
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / theta2;
        Rotation(Matrix3::identity() + k * a + k2 * b)
    }

    /// Principal logarithm, angle in `[0, π]`.
    ///
    /// Goes through the unit quaternion of the matrix (Shepperd's method),
    /// which stays well conditioned both near the identity and near half turns.
    pub fn log(&self) -> Vector3<f64> {
        let (w, v) = self.quaternion();
        let n = v.norm();
        if n < SMALL_ANGLE {
            // atan2(n, w) / n ≈ (1 - n²/(3w²)) / w
            let scale = 2.0 / w * (1.0 - n * n / (3.0 * w * w));
            return v * scale;
        }
        let angle = 2.0 * n.atan2(w);
        v * (angle / n)
    }

    pub fn angle(&self) -> f64 {
        self.log().norm()
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn transpose(&self) -> Self {
        self.inverse()
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Geodesic (angular) distance `‖log(R₁R₂ᵀ)‖` in radians.
    pub fn geodesic_distance(&self, other: &Rotation) -> f64 {
        Rotation(self.0 * other.0.transpose()).angle()
    }

    /// Projects back onto SO(3) with Gram–Schmidt on the columns.
    pub fn renormalized(&self) -> Self {
        let c0 = self.0.column(0).normalize();
        let c1 = self.0.column(1);
        let c1 = (c1 - c0 * c0.dot(&c1)).normalize();
        let c2 = c0.cross(&c1);
        Rotation(Matrix3::from_columns(&[c0, c1, c2]))
    }

    /// Scalar part and vector part of the unit quaternion, with `w ≥ 0`.
    pub fn quaternion(&self) -> (f64, Vector3<f64>) {
        let m = &self.0;
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let (w, x, y, z);
        if trace > m[(0, 0)] && trace > m[(1, 1)] && trace > m[(2, 2)] {
            let s = 2.0 * (1.0 + trace).sqrt();
            w = 0.25 * s;
            x = (m[(2, 1)] - m[(1, 2)]) / s;
            y = (m[(0, 2)] - m[(2, 0)]) / s;
            z = (m[(1, 0)] - m[(0, 1)]) / s;
        } else if m[(0, 0)] >= m[(1, 1)] && m[(0, 0)] >= m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            w = (m[(2, 1)] - m[(1, 2)]) / s;
            x = 0.25 * s;
            y = (m[(0, 1)] + m[(1, 0)]) / s;
            z = (m[(0, 2)] + m[(2, 0)]) / s;
        } else if m[(1, 1)] >= m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
            w = (m[(0, 2)] - m[(2, 0)]) / s;
            x = (m[(0, 1)] + m[(1, 0)]) / s;
            y = 0.25 * s;
            z = (m[(1, 2)] + m[(2, 1)]) / s;
        } else {
            let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
            w = (m[(1, 0)] - m[(0, 1)]) / s;
            x = (m[(0, 2)] + m[(2, 0)]) / s;
            y = (m[(1, 2)] + m[(2, 1)]) / s;
            z = 0.25 * s;
        }
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        let sign = if w < 0.0 { -1.0 } else { 1.0 } / norm;
        (w * sign, Vector3::new(x, y, z) * sign)
    }

    pub(crate) fn from_quaternion(w: f64, v: Vector3<f64>) -> Self {
        let n = (w * w + v.norm_squared()).sqrt();
        let (w, x, y, z) = (w / n, v.x / n, v.y / n, v.z / n);
        #[rustfmt::skip]
        let m = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z),       2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),       1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),       2.0 * (y * z + w * x),       1.0 - 2.0 * (x * x + y * y),
        );
        Rotation(m)
    }

    /// Geodesic interpolation `exp(s · log(other · selfᵀ)) · self`.
    pub fn interpolate(&self, other: &Rotation, s: f64) -> Rotation {
        let delta = (*other * self.inverse()).log();
        Rotation::exp(&(delta * s)) * *self
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;

    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Angular velocity in rad/s. The direction is the rotation axis.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct AngularVelocity(pub Vector3<f64>);

impl AngularVelocity {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        AngularVelocity(Vector3::new(x, y, z))
    }

    pub fn zero() -> Self {
        AngularVelocity(Vector3::zeros())
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Rotation accumulated over `dt` seconds.
    pub fn rotation_over(&self, dt: f64) -> Rotation {
        relative_rotation(self, dt)
    }
}

#[rustfmt::skip]
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
         0.0, -w.z,  w.y,
         w.z,  0.0, -w.x,
        -w.y,  w.x,  0.0,
    )
}

pub fn exp_so3(r: &Vector3<f64>) -> Rotation {
    Rotation::exp(r)
}

pub fn log_so3(r: &Rotation) -> Vector3<f64> {
    r.log()
}

pub fn geodesic_distance(a: &Rotation, b: &Rotation) -> f64 {
    a.geodesic_distance(b)
}

/// `R_{a,b}` for any `b - a = dt` under constant angular velocity.
pub fn relative_rotation(omega: &AngularVelocity, dt: f64) -> Rotation {
    Rotation::exp(&(omega.0 * dt))
}
