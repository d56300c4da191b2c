//! Rotation math shared by every other module.
//!
//! Quaternions are Hamilton, scalar-first `(w, x, y, z)`, right-handed. The
//! product `a * b` is the rotation "apply `b`, then `a`". Vectors are plain
//! `[f64; 3]` and matrices `[[f64; 3]; 3]` in row-major order.

use std::fmt;
use std::ops::Mul;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

const DEGENERATE_TOL: f64 = 1e-6;

#[inline]
pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross3(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm3(a: &Vec3) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
pub fn sub3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale3(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn mat_vec(a: &Mat3, v: &Vec3) -> Vec3 {
    [dot3(&a[0], v), dot3(&a[1], v), dot3(&a[2], v)]
}

/// One of the six canonical rotation axes, or the STOP command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RotationAxis {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
    Stop,
}

impl RotationAxis {
    /// Categorical index order; also the heuristic planner's tie-break order.
    pub const ALL: [RotationAxis; 7] = [
        RotationAxis::PosX,
        RotationAxis::NegX,
        RotationAxis::PosY,
        RotationAxis::NegY,
        RotationAxis::PosZ,
        RotationAxis::NegZ,
        RotationAxis::Stop,
    ];
    pub const ROTATIONS: [RotationAxis; 6] = [
        RotationAxis::PosX,
        RotationAxis::NegX,
        RotationAxis::PosY,
        RotationAxis::NegY,
        RotationAxis::PosZ,
        RotationAxis::NegZ,
    ];
    pub const COUNT: usize = 7;

    pub fn index(self) -> usize {
        match self {
            RotationAxis::PosX => 0,
            RotationAxis::NegX => 1,
            RotationAxis::PosY => 2,
            RotationAxis::NegY => 3,
            RotationAxis::PosZ => 4,
            RotationAxis::NegZ => 5,
            RotationAxis::Stop => 6,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("axis index {i} out of range 0..7")))
    }

    /// Unit direction, `None` for STOP.
    pub fn direction(self) -> Option<Vec3> {
        match self {
            RotationAxis::PosX => Some([1.0, 0.0, 0.0]),
            RotationAxis::NegX => Some([-1.0, 0.0, 0.0]),
            RotationAxis::PosY => Some([0.0, 1.0, 0.0]),
            RotationAxis::NegY => Some([0.0, -1.0, 0.0]),
            RotationAxis::PosZ => Some([0.0, 0.0, 1.0]),
            RotationAxis::NegZ => Some([0.0, 0.0, -1.0]),
            RotationAxis::Stop => None,
        }
    }

    pub fn one_hot(self) -> [f64; 7] {
        let mut v = [0.0; 7];
        v[self.index()] = 1.0;
        v
    }

    pub fn is_stop(self) -> bool {
        self == RotationAxis::Stop
    }
}

impl fmt::Display for RotationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RotationAxis::PosX => "+x",
            RotationAxis::NegX => "-x",
            RotationAxis::PosY => "+y",
            RotationAxis::NegY => "-y",
            RotationAxis::PosZ => "+z",
            RotationAxis::NegZ => "-z",
            RotationAxis::Stop => "stop",
        };
        f.write_str(s)
    }
}

/// Unit quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalizes the given components.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > DEGENERATE_TOL) {
            return Err(Error::Degenerate(format!("quaternion norm {n}")));
        }
        Ok(UnitQuat { w: w / n, x: x / n, y: y / n, z: z / n })
    }

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    fn renormalized(self) -> Self {
        let n = self.norm();
        UnitQuat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn conj(&self) -> Self {
        UnitQuat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn neg(&self) -> Self {
        UnitQuat { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn dot(&self, o: &UnitQuat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Rotation about a unit 3-vector. The axis is normalized; a zero axis is
    /// accepted only for a zero angle.
    pub fn from_axis_vec(axis: Vec3, angle: f64) -> Result<Self> {
        let n = norm3(&axis);
        if n < DEGENERATE_TOL {
            if angle == 0.0 {
                return Ok(Self::IDENTITY);
            }
            return Err(Error::Degenerate(format!("rotation axis norm {n}")));
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let k = s / n;
        Ok(UnitQuat { w: c, x: axis[0] * k, y: axis[1] * k, z: axis[2] * k }.renormalized())
    }

    /// Exponential map of a rotation vector (axis times angle).
    pub fn from_rotation_vector(v: Vec3) -> Self {
        let angle = norm3(&v);
        if angle < 1e-12 {
            // second-order small-angle expansion
            return UnitQuat { w: 1.0, x: 0.5 * v[0], y: 0.5 * v[1], z: 0.5 * v[2] }.renormalized();
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let k = s / angle;
        UnitQuat { w: c, x: v[0] * k, y: v[1] * k, z: v[2] * k }.renormalized()
    }

    /// Logarithm map; the returned vector has norm in `[0, π]`.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let q = if self.w < 0.0 { self.neg() } else { *self };
        let vn = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        if vn < 1e-12 {
            return [2.0 * q.x, 2.0 * q.y, 2.0 * q.z];
        }
        let angle = 2.0 * vn.atan2(q.w);
        let k = angle / vn;
        [q.x * k, q.y * k, q.z * k]
    }

    /// Hamilton product, "apply `b`, then `self`".
    pub fn compose(&self, b: &UnitQuat) -> UnitQuat {
        let a = self;
        UnitQuat {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
        .renormalized()
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        mat_vec(&self.to_matrix(), v)
    }

    pub fn to_matrix(&self) -> Mat3 {
        let UnitQuat { w, x, y, z } = *self;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Quaternion of a proper rotation matrix (Shepperd's method), `w >= 0`.
    pub fn from_matrix(m: &Mat3) -> UnitQuat {
        let tr = m[0][0] + m[1][1] + m[2][2];
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            UnitQuat {
                w: 0.25 * s,
                x: (m[2][1] - m[1][2]) / s,
                y: (m[0][2] - m[2][0]) / s,
                z: (m[1][0] - m[0][1]) / s,
            }
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            UnitQuat {
                w: (m[2][1] - m[1][2]) / s,
                x: 0.25 * s,
                y: (m[0][1] + m[1][0]) / s,
                z: (m[0][2] + m[2][0]) / s,
            }
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            UnitQuat {
                w: (m[0][2] - m[2][0]) / s,
                x: (m[0][1] + m[1][0]) / s,
                y: 0.25 * s,
                z: (m[1][2] + m[2][1]) / s,
            }
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            UnitQuat {
                w: (m[1][0] - m[0][1]) / s,
                x: (m[0][2] + m[2][0]) / s,
                y: (m[1][2] + m[2][1]) / s,
                z: 0.25 * s,
            }
        };
        let q = q.renormalized();
        if q.w < 0.0 {
            q.neg()
        } else {
            q
        }
    }

    /// Canonical representative with `w >= 0`.
    pub fn canonical(&self) -> UnitQuat {
        if self.w < 0.0 {
            self.neg()
        } else {
            *self
        }
    }

    /// Equality up to the double cover.
    pub fn approx_eq_rot(&self, o: &UnitQuat, tol: f64) -> bool {
        let d = self.to_array();
        let e = o.to_array();
        let plus = d.iter().zip(e.iter()).all(|(a, b)| (a - b).abs() <= tol);
        let minus = d.iter().zip(e.iter()).all(|(a, b)| (a + b).abs() <= tol);
        plus || minus
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Mul for UnitQuat {
    type Output = UnitQuat;
    fn mul(self, rhs: UnitQuat) -> UnitQuat {
        self.compose(&rhs)
    }
}

/// First two columns of the rotation matrix, column-major:
/// `[r00, r10, r20, r01, r11, r21]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rot6D(pub [f64; 6]);

impl Rot6D {
    pub const IDENTITY: Rot6D = Rot6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn col1(&self) -> Vec3 {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn col2(&self) -> Vec3 {
        [self.0[3], self.0[4], self.0[5]]
    }

    /// Gram-Schmidt completion to a full rotation matrix.
    pub fn to_matrix(&self) -> Result<Mat3> {
        let a1 = self.col1();
        let a2 = self.col2();
        let n1 = norm3(&a1);
        if !(n1.is_finite() && n1 >= DEGENERATE_TOL) {
            return Err(Error::Degenerate(format!("6D column 1 norm {n1}")));
        }
        let b1 = scale3(&a1, 1.0 / n1);
        let u2 = sub3(&a2, &scale3(&b1, dot3(&b1, &a2)));
        let n2 = norm3(&u2);
        let n_a2 = norm3(&a2);
        if !(n2.is_finite() && n2 >= DEGENERATE_TOL * n_a2.max(1.0)) {
            return Err(Error::Degenerate(format!("6D columns parallel (residual {n2})")));
        }
        let b2 = scale3(&u2, 1.0 / n2);
        let b3 = cross3(&b1, &b2);
        Ok([
            [b1[0], b2[0], b3[0]],
            [b1[1], b2[1], b3[1]],
            [b1[2], b2[2], b3[2]],
        ])
    }

    pub fn canonicalize(&self) -> Result<Rot6D> {
        let m = self.to_matrix()?;
        Ok(Rot6D::from_matrix(&m))
    }

    pub fn from_matrix(m: &Mat3) -> Rot6D {
        Rot6D([m[0][0], m[1][0], m[2][0], m[0][1], m[1][1], m[2][1]])
    }
}

/// `a * b`: apply `b`, then `a`.
pub fn quat_mul(a: &UnitQuat, b: &UnitQuat) -> UnitQuat {
    a.compose(b)
}

/// Rotation taking `q1` to `q2`: `q2 · conj(q1)`.
pub fn relative_pose(q1: &UnitQuat, q2: &UnitQuat) -> UnitQuat {
    q2.compose(&q1.conj())
}

/// Geodesic angle `2·acos(|<q1, q2>|)` in `[0, π]`, evaluated as
/// `2·atan2(|v|, |w|)` of the relative rotation so small angles keep full
/// precision.
pub fn geodesic_distance(q1: &UnitQuat, q2: &UnitQuat) -> f64 {
    let r = relative_pose(q1, q2);
    let v = (r.x * r.x + r.y * r.y + r.z * r.z).sqrt();
    2.0 * v.atan2(r.w.abs())
}

pub fn quat_from_axis_angle(axis: RotationAxis, angle: f64) -> Result<UnitQuat> {
    match axis.direction() {
        Some(dir) => UnitQuat::from_axis_vec(dir, angle),
        None => Err(Error::InvalidInput("STOP has no rotation axis".into())),
    }
}

pub fn quat_to_6d(q: &UnitQuat) -> Rot6D {
    Rot6D::from_matrix(&q.to_matrix())
}

pub fn rot6d_to_quat(r: &Rot6D) -> Result<UnitQuat> {
    Ok(UnitQuat::from_matrix(&r.to_matrix()?))
}

/// Uniform sample over SO(3) via a normalized 4-D Gaussian.
pub fn sample_uniform_quat<R: Rng + ?Sized>(rng: &mut R) -> UnitQuat {
    loop {
        let w: f64 = rng.sample(StandardNormal);
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        if let Ok(q) = UnitQuat::new(w, x, y, z) {
            return q;
        }
    }
}

/// Seeded convenience wrapper around [`sample_uniform_quat`].
pub fn sample_uniform_quat_seeded(seed: u64) -> UnitQuat {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    sample_uniform_quat(&mut rng)
}

/// Random rotation whose rotation vector is isotropic Gaussian with the given
/// per-axis standard deviation.
pub fn sample_rotation_noise<R: Rng + ?Sized>(rng: &mut R, std: f64) -> UnitQuat {
    if std <= 0.0 {
        return UnitQuat::IDENTITY;
    }
    let v: Vec3 = [
        std * rng.sample::<f64, _>(StandardNormal),
        std * rng.sample::<f64, _>(StandardNormal),
        std * rng.sample::<f64, _>(StandardNormal),
    ];
    UnitQuat::from_rotation_vector(v)
}

/// Uniformly distributed unit 3-vector.
pub fn sample_unit_vec3<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v: Vec3 = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = norm3(&v);
        if n > 1e-9 {
            return scale3(&v, 1.0 / n);
        }
    }
}
