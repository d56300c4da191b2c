use crate::env::Shape;
use crate::so3::Vec3;

use super::{CameraModel, DepthFrame, ObjectPose, Primitive};

/// Exact per-pixel depth by intersecting each pixel-centre ray with `prim`.
pub fn raycast_oracle(prim: &Primitive, pose: &ObjectPose, cam: &CameraModel) -> DepthFrame {
    let (r, t) = pose.to_camera(cam);
    // Camera origin and rays in the object frame: x_obj = Rᵀ (x_cam − t).
    let rt = |v: &Vec3| -> Vec3 {
        [
            r[0][0] * v[0] + r[1][0] * v[1] + r[2][0] * v[2],
            r[0][1] * v[0] + r[1][1] * v[1] + r[2][1] * v[2],
            r[0][2] * v[0] + r[1][2] * v[1] + r[2][2] * v[2],
        ]
    };
    let origin = rt(&[-t[0], -t[1], -t[2]]);
    let mut frame = DepthFrame::empty(cam.width, cam.height);
    for j in 0..cam.height {
        for i in 0..cam.width {
            let dir = rt(&cam.ray(i, j));
            // The camera ray has unit z, so the ray parameter is the depth.
            if let Some(s) = intersect(prim, &origin, &dir) {
                if s <= cam.far {
                    frame.data[j * cam.width + i] = s;
                }
            }
        }
    }
    frame
}

/// Smallest positive ray parameter where `o + s d` meets the surface.
pub(crate) fn intersect(prim: &Primitive, o: &Vec3, d: &Vec3) -> Option<f64> {
    let [a, b, c] = prim.dims;
    match prim.shape {
        Shape::Sphere | Shape::Ellipsoid => {
            let os = [o[0] / a, o[1] / b, o[2] / c];
            let ds = [d[0] / a, d[1] / b, d[2] / c];
            nearest_root(dot(&ds, &ds), 2.0 * dot(&os, &ds), dot(&os, &os) - 1.0)
        }
        Shape::Cylinder => {
            let mut best: Option<f64> = None;
            let mut keep = |s: f64| {
                if s > 0.0 && best.is_none_or(|b| s < b) {
                    best = Some(s);
                }
            };
            let qa = d[0] * d[0] + d[1] * d[1];
            if qa > 0.0 {
                let qb = 2.0 * (o[0] * d[0] + o[1] * d[1]);
                let qc = o[0] * o[0] + o[1] * o[1] - a * a;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    for s in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
                        if (o[2] + s * d[2]).abs() <= c {
                            keep(s);
                        }
                    }
                }
            }
            if d[2] != 0.0 {
                for zc in [-c, c] {
                    let s = (zc - o[2]) / d[2];
                    let (x, y) = (o[0] + s * d[0], o[1] + s * d[1]);
                    if x * x + y * y <= a * a {
                        keep(s);
                    }
                }
            }
            best
        }
        Shape::Box => {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for k in 0..3 {
                let h = prim.dims[k];
                if d[k] == 0.0 {
                    if o[k].abs() > h {
                        return None;
                    }
                    continue;
                }
                let (s0, s1) = ((-h - o[k]) / d[k], (h - o[k]) / d[k]);
                lo = lo.max(s0.min(s1));
                hi = hi.min(s0.max(s1));
            }
            if lo > hi {
                return None;
            }
            if lo > 0.0 {
                Some(lo)
            } else if hi > 0.0 {
                Some(hi)
            } else {
                None
            }
        }
    }
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn nearest_root(qa: f64, qb: f64, qc: f64) -> Option<f64> {
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 || qa == 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let s0 = (-qb - sq) / (2.0 * qa);
    let s1 = (-qb + sq) / (2.0 * qa);
    if s0 > 0.0 {
        Some(s0)
    } else if s1 > 0.0 {
        Some(s1)
    } else {
        None
    }
}
