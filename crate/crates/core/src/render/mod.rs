//! Point-splat depth rendering of primitive objects.
//!
//! Surface points are sampled once per primitive. A frame is produced by
//! moving the points into the camera frame, dropping points whose normal faces
//! away from the camera, projecting the rest through a pinhole model and
//! keeping the nearest depth per pixel. Pixel `(i, j)` is centred on
//! image coordinate `(i, j)` and covers `[i - 0.5, i + 0.5)`.

mod bench;
mod cloud;
mod embed;
mod raycast;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::{add3, mat_mul, mat_vec, Mat3, UnitQuat, Vec3};

pub use bench::{bench_throughput, naive_render, write_bench_csv, BenchConfig, BenchReport, BenchRow};
pub use cloud::{sample_surface_points, Primitive, SurfaceCloud};
pub use embed::{depth_embed, DepthEmbedder, DepthEmbedding, EMBED_DIM};
pub use raycast::raycast_oracle;

/// Pinhole camera. `rotation`/`translation` map world points into the camera
/// frame, whose optical axis is +z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub far: f64,
    pub rotation: UnitQuat,
    pub translation: Vec3,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            fx: 300.0,
            fy: 300.0,
            cx: 32.0,
            cy: 32.0,
            width: 64,
            height: 64,
            far: 1.0,
            rotation: UnitQuat::IDENTITY,
            translation: [0.0; 3],
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidInput(format!("focal lengths must be positive, got {} {}", self.fx, self.fy)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("image must be non-empty".into()));
        }
        let inside = |c: f64, n: usize| c.is_finite() && c >= 0.0 && c <= n as f64 - 1.0;
        if !inside(self.cx, self.width) || !inside(self.cy, self.height) {
            return Err(Error::InvalidInput(format!("principal point ({}, {}) outside image", self.cx, self.cy)));
        }
        if !(self.far > 0.0 && self.far.is_finite()) {
            return Err(Error::InvalidInput(format!("far plane must be positive, got {}", self.far)));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Pixel containing the projection of a camera-frame point, if any.
    #[inline]
    pub fn pixel_of(&self, p: &Vec3) -> Option<usize> {
        let u = self.fx * p[0] / p[2] + self.cx + 0.5;
        let v = self.fy * p[1] / p[2] + self.cy + 0.5;
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let (i, j) = (u as usize, v as usize);
        (i < self.width && j < self.height).then(|| j * self.width + i)
    }

    /// Camera-frame ray through the centre of pixel `(i, j)`, scaled to unit z.
    pub fn ray(&self, i: usize, j: usize) -> Vec3 {
        [(i as f64 - self.cx) / self.fx, (j as f64 - self.cy) / self.fy, 1.0]
    }
}

/// Rigid object pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectPose {
    pub rotation: UnitQuat,
    pub position: Vec3,
}

impl ObjectPose {
    pub fn new(rotation: UnitQuat, position: Vec3) -> Self {
        ObjectPose { rotation, position }
    }

    /// Object-to-camera transform `(R, t)`.
    pub fn to_camera(&self, cam: &CameraModel) -> (Mat3, Vec3) {
        let rc = cam.rotation.to_matrix();
        let r = mat_mul(&rc, &self.rotation.to_matrix());
        let t = add3(&mat_vec(&rc, &self.position), &cam.translation);
        (r, t)
    }
}

/// Row-major depth image in meters. Background pixels hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthFrame {
    pub fn empty(width: usize, height: usize) -> Self {
        DepthFrame { width, height, data: vec![0.0; width * height] }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.width + i]
    }

    pub fn covered(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0.0).count()
    }

    /// Writes a binary 16-bit PGM with depth in millimeters.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut buf = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for &d in &self.data {
            let mm = (d * 1000.0).round().clamp(0.0, 65535.0) as u16;
            buf.extend_from_slice(&mm.to_be_bytes());
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| Error::io(path, e))
    }
}

/// Splats `cloud` into `out`, which is cleared first.
pub fn render_depth_into(cloud: &SurfaceCloud, pose: &ObjectPose, cam: &CameraModel, out: &mut [f64]) {
    out.iter_mut().for_each(|d| *d = f64::INFINITY);
    let (r, t) = pose.to_camera(cam);
    let eye = camera_in_object(&r, &t);
    for (p, n) in cloud.points.iter().zip(&cloud.normals) {
        if n[0] * (p[0] - eye[0]) + n[1] * (p[1] - eye[1]) + n[2] * (p[2] - eye[2]) >= 0.0 {
            continue;
        }
        let z = r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2];
        if !(z > 0.0 && z <= cam.far) {
            continue;
        }
        let x = r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0];
        let y = r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1];
        if let Some(k) = cam.pixel_of(&[x, y, z]) {
            if z < out[k] {
                out[k] = z;
            }
        }
    }
    out.iter_mut().filter(|d| d.is_infinite()).for_each(|d| *d = 0.0);
}

/// Camera centre expressed in the object frame, `-Rᵀ t`.
#[inline]
pub(crate) fn camera_in_object(r: &Mat3, t: &Vec3) -> Vec3 {
    [
        -(r[0][0] * t[0] + r[1][0] * t[1] + r[2][0] * t[2]),
        -(r[0][1] * t[0] + r[1][1] * t[1] + r[2][1] * t[2]),
        -(r[0][2] * t[0] + r[1][2] * t[1] + r[2][2] * t[2]),
    ]
}

pub fn render_depth(cloud: &SurfaceCloud, pose: &ObjectPose, cam: &CameraModel) -> DepthFrame {
    let mut frame = DepthFrame::empty(cam.width, cam.height);
    render_depth_into(cloud, pose, cam, &mut frame.data);
    frame
}

/// Renders each `(cloud, pose)` pair in parallel on the current rayon pool.
pub fn render_batch(scenes: &[(&SurfaceCloud, ObjectPose)], cam: &CameraModel) -> Vec<DepthFrame> {
    scenes.par_iter().map(|(c, p)| render_depth(c, p, cam)).collect()
}

/// Per-pixel comparison of two frames over pixels covered by both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameComparison {
    pub both: usize,
    pub only_a: usize,
    pub only_b: usize,
    pub mean_abs: f64,
    /// Largest value of `b - a` over mutually covered pixels.
    pub max_b_over_a: f64,
}

pub fn compare_frames(a: &DepthFrame, b: &DepthFrame) -> Result<FrameComparison> {
    if a.data.len() != b.data.len() {
        return Err(Error::dims("depth frame", a.data.len(), b.data.len()));
    }
    let mut c = FrameComparison { both: 0, only_a: 0, only_b: 0, mean_abs: 0.0, max_b_over_a: f64::NEG_INFINITY };
    let mut sum = 0.0;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        match (x > 0.0, y > 0.0) {
            (true, true) => {
                c.both += 1;
                sum += (x - y).abs();
                c.max_b_over_a = c.max_b_over_a.max(y - x);
            }
            (true, false) => c.only_a += 1,
            (false, true) => c.only_b += 1,
            _ => {}
        }
    }
    if c.both > 0 {
        c.mean_abs = sum / c.both as f64;
    }
    Ok(c)
}

/// Splat-versus-oracle statistics pooled over many random poses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplatAccuracy {
    pub points: usize,
    pub poses: usize,
    /// Mean |splat − oracle| over mutually covered pixels.
    pub mean_abs: f64,
    /// Fraction of splat-covered pixels the oracle leaves empty.
    pub miss_rate: f64,
    /// Fraction of mutually covered pixels where the splat is nearer than the
    /// oracle by more than `tol`.
    pub nearer_rate: f64,
    pub tol: f64,
}

/// Renders `poses` random orientations of `prim` at `distance` in front of the
/// camera with an `n`-point cloud and compares every frame with the oracle.
pub fn splat_accuracy(
    prim: &Primitive,
    n: usize,
    poses: usize,
    distance: f64,
    cam: &CameraModel,
    seed: u64,
    tol: f64,
) -> Result<SplatAccuracy> {
    cam.validate()?;
    let cloud = sample_surface_points(prim, n, seed)?;
    let stats: Vec<(f64, usize, usize, usize)> = (0..poses)
        .into_par_iter()
        .map(|k| {
            let mut rng = crate::seeds::rng(seed, crate::seeds::TAG_RENDER, (1 << 34) + k as u64);
            let q = crate::so3::sample_uniform_quat(&mut rng);
            let jitter: [f64; 2] = [rand::Rng::random(&mut rng), rand::Rng::random(&mut rng)];
            let pos = [0.01 * (jitter[0] - 0.5), 0.01 * (jitter[1] - 0.5), distance];
            let pose = ObjectPose::new(q, pos);
            let s = render_depth(&cloud, &pose, cam);
            let o = raycast_oracle(prim, &pose, cam);
            let (mut sum, mut both, mut miss, mut nearer) = (0.0, 0, 0, 0);
            for (&a, &b) in s.data.iter().zip(&o.data) {
                match (a > 0.0, b > 0.0) {
                    (true, true) => {
                        both += 1;
                        sum += (a - b).abs();
                        if a < b - tol {
                            nearer += 1;
                        }
                    }
                    (true, false) => miss += 1,
                    _ => {}
                }
            }
            (sum, both, miss, nearer)
        })
        .collect();
    let (sum, both, miss, nearer) = stats
        .iter()
        .fold((0.0, 0, 0, 0), |acc, s| (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2, acc.3 + s.3));
    let both_f = both.max(1) as f64;
    Ok(SplatAccuracy {
        points: n,
        poses,
        mean_abs: sum / both_f,
        miss_rate: miss as f64 / (both + miss).max(1) as f64,
        nearer_rate: nearer as f64 / both_f,
        tol,
    })
}
