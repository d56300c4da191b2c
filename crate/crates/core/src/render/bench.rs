use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::Shape;
use crate::error::{Error, Result};
use crate::seeds;
use crate::so3::{sample_uniform_quat, Vec3};

use super::{camera_in_object, render_depth_into, sample_surface_points, CameraModel, DepthFrame, ObjectPose, Primitive, SurfaceCloud};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub batch: usize,
    /// Number of times the whole batch is rendered per measurement.
    pub frames: usize,
    pub threads: Vec<usize>,
    pub points: usize,
    /// Images rendered by the naive reference.
    pub naive_frames: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { batch: 256, frames: 20, threads: vec![1, 2, 4, 8], points: 4096, naive_frames: 8, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub batch: usize,
    pub threads: usize,
    pub fps: f64,
    /// Throughput relative to the naive per-pixel reference.
    pub speedup: f64,
    /// Throughput relative to the single-thread run.
    pub scaling: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub naive_fps: f64,
    /// Whether every thread count produced bitwise identical images.
    pub deterministic: bool,
    pub checksum: u64,
}

impl BenchReport {
    pub fn row(&self, threads: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.threads == threads)
    }
}

/// Per-pixel loop over every surface point. Produces the same image as the
/// splatting renderer.
pub fn naive_render(cloud: &SurfaceCloud, pose: &ObjectPose, cam: &CameraModel) -> DepthFrame {
    let (r, t) = pose.to_camera(cam);
    let eye = camera_in_object(&r, &t);
    let mut frame = DepthFrame::empty(cam.width, cam.height);
    for j in 0..cam.height {
        for i in 0..cam.width {
            let mut best = f64::INFINITY;
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
                if cam.pixel_of(&[x, y, z]) == Some(j * cam.width + i) && z < best {
                    best = z;
                }
            }
            if best.is_finite() {
                frame.data[j * cam.width + i] = best;
            }
        }
    }
    frame
}

struct Scenes {
    clouds: Vec<SurfaceCloud>,
    poses: Vec<(usize, ObjectPose)>,
}

fn scenes(cfg: &BenchConfig) -> Result<Scenes> {
    let clouds = Shape::ALL
        .iter()
        .map(|&s| sample_surface_points(&Primitive::nominal(s, 1.0), cfg.points, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = seeds::rng(cfg.seed, seeds::TAG_RENDER, 1 << 33);
    let poses = (0..cfg.batch)
        .map(|k| {
            let q = sample_uniform_quat(&mut rng);
            let p: Vec3 = [0.02 * (rand::Rng::random::<f64>(&mut rng) - 0.5), 0.0, 0.4];
            (k % clouds.len(), ObjectPose::new(q, p))
        })
        .collect();
    Ok(Scenes { clouds, poses })
}

fn checksum(buf: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for d in buf {
        d.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Renders `batch × frames` images at each thread count and compares against
/// the naive reference.
pub fn bench_throughput(cfg: &BenchConfig, cam: &CameraModel) -> Result<BenchReport> {
    cam.validate()?;
    if cfg.batch == 0 || cfg.frames == 0 || cfg.threads.is_empty() || cfg.threads.contains(&0) {
        return Err(Error::InvalidInput("batch, frames and thread counts must be positive".into()));
    }
    let sc = scenes(cfg)?;
    let px = cam.pixels();
    let mut threads = cfg.threads.clone();
    if !threads.contains(&1) {
        threads.insert(0, 1);
    }

    let mut measured = Vec::new();
    let mut sums = Vec::new();
    for &n in &threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        let mut buf = vec![0.0; cfg.batch * px];
        let start = Instant::now();
        pool.install(|| {
            for _ in 0..cfg.frames {
                buf.par_chunks_mut(px).zip(&sc.poses).for_each(|(out, (c, pose))| {
                    render_depth_into(&sc.clouds[*c], pose, cam, out);
                });
            }
        });
        let secs = start.elapsed().as_secs_f64().max(1e-9);
        measured.push((n, (cfg.batch * cfg.frames) as f64 / secs));
        sums.push(checksum(&buf));
    }

    let naive_n = cfg.naive_frames.max(1);
    let start = Instant::now();
    for k in 0..naive_n {
        let (c, pose) = &sc.poses[k % sc.poses.len()];
        std::hint::black_box(naive_render(&sc.clouds[*c], pose, cam));
    }
    let naive_fps = naive_n as f64 / start.elapsed().as_secs_f64().max(1e-9);

    let single = measured.iter().find(|(n, _)| *n == 1).map(|m| m.1).unwrap_or(1.0);
    let rows = measured
        .iter()
        .filter(|(n, _)| cfg.threads.contains(n))
        .map(|&(threads, fps)| BenchRow { batch: cfg.batch, threads, fps, speedup: fps / naive_fps, scaling: fps / single })
        .collect();
    Ok(BenchReport { rows, naive_fps, deterministic: sums.windows(2).all(|w| w[0] == w[1]), checksum: sums[0] })
}

pub fn write_bench_csv(path: &Path, report: &BenchReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in &report.rows {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
