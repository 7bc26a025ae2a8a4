//! Quaternion algebra, spherical projection of planar task points,
//! intrinsic XYZ Euler decomposition and torsion about the pointer axis.

use std::ops::{Mul, Neg};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Body axis that carries the pointer.
pub const POINTER_AXIS: Vector3<f64> = Vector3::new(1.0, 0.0, 0.0);

/// Distance below which a projection target is considered coincident with the base.
const MIN_POINTING_DISTANCE: f64 = 1e-9;

/// |cos(pitch)| below this is treated as gimbal lock for the XYZ decomposition.
const GIMBAL_LOCK_COS: f64 = 1e-6;

/// Quaternion with scalar part `s` and vector part `v` (Hamilton convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub s: f64,
    pub v: Vector3<f64>,
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        s: 1.0,
        v: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn new(s: f64, x: f64, y: f64, z: f64) -> Self {
        Quat {
            s,
            v: Vector3::new(x, y, z),
        }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Quat::IDENTITY;
        }
        let (sin, cos) = (0.5 * angle).sin_cos();
        Quat {
            s: cos,
            v: axis * (sin / n),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.s * self.s + self.v.norm_squared()).sqrt()
    }

    pub fn normalize(&self) -> Self {
        let n = self.norm();
        Quat {
            s: self.s / n,
            v: self.v / n,
        }
    }

    pub fn conjugate(&self) -> Self {
        Quat {
            s: self.s,
            v: -self.v,
        }
    }

    /// Inverse; equal to the conjugate for unit quaternions.
    pub fn inverse(&self) -> Self {
        let n2 = self.s * self.s + self.v.norm_squared();
        Quat {
            s: self.s / n2,
            v: -self.v / n2,
        }
    }

    /// Representative with non-negative scalar part.
    pub fn canonical(&self) -> Self {
        if self.s < 0.0 {
            -*self
        } else {
            *self
        }
    }

    pub fn dot(&self, other: &Quat) -> f64 {
        self.s * other.s + self.v.dot(&other.v)
    }

    /// Rotation angle in [0, π] of the rotation this quaternion represents.
    pub fn angle(&self) -> f64 {
        let c = self.canonical();
        2.0 * c.v.norm().atan2(c.s)
    }

    /// Angle of the relative rotation between two orientations, in [0, π].
    pub fn angle_to(&self, other: &Quat) -> f64 {
        (*other * self.inverse()).angle()
    }

    pub fn rotate(&self, u: &Vector3<f64>) -> Vector3<f64> {
        rotate_vec(self, u)
    }

    /// Columns are the images of the body axes.
    pub fn to_matrix(&self) -> nalgebra::Matrix3<f64> {
        let (w, x, y, z) = (self.s, self.v.x, self.v.y, self.v.z);
        nalgebra::Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.s, self.v.x, self.v.y, self.v.z]
    }
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Mul for Quat {
    type Output = Quat;

    fn mul(self, rhs: Quat) -> Quat {
        quat_mul(&self, &rhs)
    }
}

impl Neg for Quat {
    type Output = Quat;

    fn neg(self) -> Quat {
        Quat {
            s: -self.s,
            v: -self.v,
        }
    }
}

/// Hamilton product `a ⊗ b`.
pub fn quat_mul(a: &Quat, b: &Quat) -> Quat {
    Quat {
        s: a.s * b.s - a.v.dot(&b.v),
        v: b.v * a.s + a.v * b.s + a.v.cross(&b.v),
    }
}

/// Rotates `u` by the unit quaternion `q` (q u q*), without forming a matrix.
pub fn rotate_vec(q: &Quat, u: &Vector3<f64>) -> Vector3<f64> {
    let t = 2.0 * q.v.cross(u);
    u + q.s * t + q.v.cross(&t)
}

/// Where the torsion factor of the projection is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TorsionOrder {
    /// Twist about the pointer axis, composed in the rotated frame.
    #[default]
    PointerAxis,
    /// Roll about the global x-axis, pre-multiplied onto the pointing rotation.
    GlobalAxis,
}

/// Orientation whose pointer axis points from `x0` at `x`, twisted by `phi`
/// about that axis. The result is canonical (s ≥ 0).
pub fn project_to_sphere(x: &Vector3<f64>, x0: &Vector3<f64>, phi: f64) -> Result<Quat> {
    project_to_sphere_with(x, x0, phi, TorsionOrder::PointerAxis)
}

pub fn project_to_sphere_with(
    x: &Vector3<f64>,
    x0: &Vector3<f64>,
    phi: f64,
    order: TorsionOrder,
) -> Result<Quat> {
    let d = x - x0;
    let dist = d.norm();
    if !(dist > MIN_POINTING_DISTANCE) {
        return Err(Error::UndefinedPointingDirection);
    }
    let r = d / dist;
    let c = POINTER_AXIS.dot(&r);
    let swing = if 1.0 + c <= f64::EPSILON {
        // antipodal: any axis orthogonal to the pointer works, keep it fixed
        Quat::new(0.0, 0.0, 0.0, 1.0)
    } else {
        Quat {
            s: 1.0 + c,
            v: POINTER_AXIS.cross(&r),
        }
        .normalize()
    };
    let twist = Quat::from_axis_angle(&POINTER_AXIS, phi);
    let q = match order {
        TorsionOrder::PointerAxis => swing * twist,
        TorsionOrder::GlobalAxis => twist * swing,
    };
    Ok(q.normalize().canonical())
}

/// Intrinsic X-Y-Z Euler angles: R = Rx(x) · Ry(y) · Rz(z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerXyz {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EulerXyz {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        EulerXyz { x, y, z }
    }

    pub fn to_quat(&self) -> Quat {
        Quat::from_axis_angle(&Vector3::x(), self.x)
            * Quat::from_axis_angle(&Vector3::y(), self.y)
            * Quat::from_axis_angle(&Vector3::z(), self.z)
    }
}

pub fn euler_xyz_from_quat(q: &Quat) -> Result<EulerXyz> {
    let m = q.normalize().to_matrix();
    let sy = m[(0, 2)].clamp(-1.0, 1.0);
    let cy = (m[(0, 0)].powi(2) + m[(0, 1)].powi(2)).sqrt();
    if cy < GIMBAL_LOCK_COS {
        return Err(Error::GimbalLock(q.as_array()));
    }
    Ok(EulerXyz {
        x: (-m[(1, 2)]).atan2(m[(2, 2)]),
        y: sy.atan2(cy),
        z: (-m[(0, 1)]).atan2(m[(0, 0)]),
    })
}

/// Twist angle of `q` about the rotated pointer axis, in (−π, π].
///
/// Swing-twist split `q = swing ⊗ twist` with the twist about body x and the
/// swing axis orthogonal to it.
pub fn torsion_about_pointer(q: &Quat) -> f64 {
    let c = q.canonical();
    let t = 2.0 * c.v.x.atan2(c.s);
    if t > std::f64::consts::PI {
        t - 2.0 * std::f64::consts::PI
    } else {
        t
    }
}
