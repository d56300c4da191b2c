use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Shape;
use crate::error::{Error, Result};
use crate::seeds;
use crate::so3::{sample_unit_vec3, Vec3};

/// Primitive solid centred at the origin of its own frame.
///
/// `dims` holds the radius repeated for a sphere, the semi-axes for an
/// ellipsoid, `[r, r, half_height]` for a z-aligned cylinder and the half
/// extents for a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub dims: Vec3,
}

impl Primitive {
    pub fn new(shape: Shape, dims: Vec3) -> Result<Self> {
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::InvalidInput(format!("primitive dims must be positive, got {dims:?}")));
        }
        let ok = match shape {
            Shape::Sphere => dims[0] == dims[1] && dims[1] == dims[2],
            Shape::Cylinder => dims[0] == dims[1],
            Shape::Ellipsoid | Shape::Box => true,
        };
        if !ok {
            return Err(Error::InvalidInput(format!("dims {dims:?} do not describe a {shape}")));
        }
        Ok(Primitive { shape, dims })
    }

    pub fn sphere(r: f64) -> Self {
        Primitive { shape: Shape::Sphere, dims: [r; 3] }
    }

    /// Hand-sized object of the given shape, multiplied by `size_scale`.
    pub fn nominal(shape: Shape, size_scale: f64) -> Self {
        let d = match shape {
            Shape::Sphere => [0.04; 3],
            Shape::Ellipsoid => [0.05, 0.04, 0.03],
            Shape::Cylinder => [0.035, 0.035, 0.045],
            Shape::Box => [0.045, 0.035, 0.03],
        };
        Primitive { shape, dims: d.map(|x| x * size_scale) }
    }

    /// Outward unit normal at a surface point. Edge points of a cylinder or
    /// box take the normal of the face they were sampled on.
    pub fn normal(&self, p: &Vec3) -> Vec3 {
        let [a, b, c] = self.dims;
        let n = match self.shape {
            Shape::Sphere | Shape::Ellipsoid => [p[0] / (a * a), p[1] / (b * b), p[2] / (c * c)],
            Shape::Cylinder => {
                if p[2].abs() == c {
                    [0.0, 0.0, p[2].signum()]
                } else {
                    [p[0], p[1], 0.0]
                }
            }
            Shape::Box => {
                let k = (0..3)
                    .max_by(|&i, &j| (p[i].abs() / self.dims[i]).total_cmp(&(p[j].abs() / self.dims[j])))
                    .unwrap_or(0);
                let mut n = [0.0; 3];
                n[k] = p[k].signum();
                n
            }
        };
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        n.map(|x| x / len)
    }

    /// Signed residual of the surface equation, zero on the surface.
    pub fn surface_residual(&self, p: &Vec3) -> f64 {
        let [a, b, c] = self.dims;
        match self.shape {
            Shape::Sphere => (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - a,
            Shape::Ellipsoid => {
                let s = (p[0] / a).powi(2) + (p[1] / b).powi(2) + (p[2] / c).powi(2);
                (s.sqrt() - 1.0) * a.min(b).min(c)
            }
            Shape::Cylinder => {
                let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
                (rho - a).max(p[2].abs() - c)
            }
            Shape::Box => (p[0].abs() - a).max(p[1].abs() - b).max(p[2].abs() - c),
        }
    }
}

/// Surface samples of one primitive in its object frame, with outward unit
/// normals used for back-face culling.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceCloud {
    pub primitive: Primitive,
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

/// Area-uniform samples on the surface of `prim`.
pub fn sample_surface_points(prim: &Primitive, n: usize, seed: u64) -> Result<SurfaceCloud> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one surface point".into()));
    }
    let prim = Primitive::new(prim.shape, prim.dims)?;
    let mut rng = seeds::rng(seed, seeds::TAG_RENDER, prim.shape.index() as u64);
    let points: Vec<Vec3> = (0..n).map(|_| sample_one(&prim, &mut rng)).collect();
    let normals = points.iter().map(|p| prim.normal(p)).collect();
    Ok(SurfaceCloud { primitive: prim, points, normals })
}

fn sample_one<R: Rng>(prim: &Primitive, rng: &mut R) -> Vec3 {
    let [a, b, c] = prim.dims;
    match prim.shape {
        Shape::Sphere => sample_unit_vec3(rng).map(|x| x * a),
        Shape::Ellipsoid => {
            // Push sphere samples onto the ellipsoid and thin them by the
            // local area stretch.
            let gmax = 1.0 / a.min(b).min(c);
            loop {
                let u = sample_unit_vec3(rng);
                let g = ((u[0] / a).powi(2) + (u[1] / b).powi(2) + (u[2] / c).powi(2)).sqrt();
                if rng.random::<f64>() * gmax < g {
                    return [a * u[0], b * u[1], c * u[2]];
                }
            }
        }
        Shape::Cylinder => {
            let side = 2.0 * PI * a * 2.0 * c;
            let cap = PI * a * a;
            let t = rng.random::<f64>() * (side + 2.0 * cap);
            let phi = rng.random::<f64>() * 2.0 * PI;
            if t < side {
                let z = c * (2.0 * rng.random::<f64>() - 1.0);
                [a * phi.cos(), a * phi.sin(), z]
            } else {
                let rho = a * rng.random::<f64>().sqrt();
                let z = if t < side + cap { c } else { -c };
                [rho * phi.cos(), rho * phi.sin(), z]
            }
        }
        Shape::Box => {
            let areas = [b * c, a * c, a * b];
            let total: f64 = areas.iter().sum();
            let mut t = rng.random::<f64>() * total;
            let mut axis = 2;
            for (k, &ar) in areas.iter().enumerate() {
                if t < ar {
                    axis = k;
                    break;
                }
                t -= ar;
            }
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = if k == axis { sign * prim.dims[k] } else { prim.dims[k] * (2.0 * rng.random::<f64>() - 1.0) };
            }
            p
        }
    }
}
