//! Procedural driving scenes in the KITTI on-disk layout: a ray-cast RGB
//! frame, a LiDAR sweep of the same geometry and its calibration. Used for
//! fixtures and smoke runs where the real dataset is unavailable.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{io_err, save_png_rgb, write_velodyne_bin, CalibrationSet, PointCloud, Result};
use crate::tensor::Tensor;

const CAMERA_HEIGHT: f64 = 1.65;
const FAR_WALL: f64 = 60.0;

#[derive(Debug, Clone)]
struct Block {
    x: [f64; 2],
    /// Top edge (camera y points down; the ground is at `CAMERA_HEIGHT`).
    top: f64,
    z: [f64; 2],
    colour: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct SyntheticFrame {
    /// 3×H×W on the 8-bit grid.
    pub rgb: Tensor<f32>,
    pub cloud: PointCloud,
    pub calib: CalibrationSet,
}

struct Scene {
    blocks: Vec<Block>,
    wall_top: f64,
    wall_colour: [f64; 3],
    texture: f64,
}

enum Hit {
    Ground,
    Block(usize),
    Wall,
    Sky,
}

impl Scene {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let blocks = (0..rng.gen_range(2..5))
            .map(|_| {
                let cx = rng.gen_range(-8.0..8.0);
                let z0 = rng.gen_range(6.0..30.0);
                Block {
                    x: [cx - rng.gen_range(0.8..1.2), cx + rng.gen_range(0.8..1.2)],
                    top: CAMERA_HEIGHT - rng.gen_range(1.3..2.2),
                    z: [z0, z0 + rng.gen_range(3.0..4.5)],
                    colour: std::array::from_fn(|_| rng.gen_range(0.1..0.9)),
                }
            })
            .collect();
        Self {
            blocks,
            wall_top: CAMERA_HEIGHT - rng.gen_range(6.0..14.0),
            wall_colour: std::array::from_fn(|_| rng.gen_range(0.3..0.7)),
            texture: rng.gen_range(0.0..std::f64::consts::TAU),
        }
    }

    /// Nearest intersection of the ray `t·d` (camera frame, origin at the
    /// camera centre).
    fn cast(&self, d: [f64; 3]) -> (f64, Hit) {
        let mut best = (f64::INFINITY, Hit::Sky);
        if d[1] > 1e-9 {
            best = (CAMERA_HEIGHT / d[1], Hit::Ground);
        }
        if d[2] > 1e-9 {
            let t = FAR_WALL / d[2];
            if t < best.0 && t * d[1] >= self.wall_top {
                best = (t, Hit::Wall);
            }
        }
        for (k, b) in self.blocks.iter().enumerate() {
            // slab test against the box [x0,x1]×[top,ground]×[z0,z1]
            let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
            for (axis, (a, c)) in [(0, (b.x[0], b.x[1])), (1, (b.top, CAMERA_HEIGHT)), (2, (b.z[0], b.z[1]))] {
                if d[axis].abs() < 1e-12 {
                    if 0.0 < a || 0.0 > c {
                        lo = f64::INFINITY;
                    }
                    continue;
                }
                let (t1, t2) = (a / d[axis], c / d[axis]);
                lo = lo.max(t1.min(t2));
                hi = hi.min(t1.max(t2));
            }
            if lo <= hi && lo > 0.0 && lo < best.0 {
                best = (lo, Hit::Block(k));
            }
        }
        best
    }

    fn shade(&self, d: [f64; 3], t: f64, hit: &Hit) -> [f64; 3] {
        let p = d.map(|v| v * t);
        match *hit {
            Hit::Sky => {
                let a = (-d[1]).clamp(0.0, 1.0);
                [0.55 + 0.2 * a, 0.7 + 0.15 * a, 0.9]
            }
            Hit::Ground => {
                let stripe = if p[0].abs() < 0.1 && (p[2] * 0.5).fract() < 0.5 { 0.4 } else { 0.0 };
                let g = 0.35 + 0.04 * (p[0] * 1.7 + self.texture).sin() * (p[2] * 0.9).cos() + stripe;
                [g, g, g * 1.02]
            }
            Hit::Wall => {
                let win = ((p[0] * 0.8).sin() * (p[1] * 1.3).sin()).max(0.0) * 0.25;
                self.wall_colour.map(|c| c - win)
            }
            Hit::Block(k) => {
                let fade = 1.0 / (1.0 + 0.02 * t);
                self.blocks[k].colour.map(|c| c * (0.6 + 0.4 * fade))
            }
        }
    }
}

/// Pinhole intrinsics scaled to the frame, camera 2 looking down +z; the
/// LiDAR sits at the camera centre with KITTI's axis convention.
fn calibration(h: usize, w: usize) -> CalibrationSet {
    let f = 0.9 * w as f64;
    CalibrationSet {
        p_rect2: [[f, 0.0, (w as f64 - 1.0) / 2.0, 0.0], [0.0, f, 0.45 * h as f64, 0.0], [0.0, 0.0, 1.0, 0.0]],
        r_rect0: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        tr_velo_cam: [[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [1.0, 0.0, 0.0, 0.0]],
    }
}

/// One deterministic frame of `h × w` pixels.
pub fn synthetic_frame(seed: u64, h: usize, w: usize) -> SyntheticFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = Scene::random(&mut rng);
    let calib = calibration(h, w);
    let (f, cx, cy) = (calib.p_rect2[0][0], calib.p_rect2[0][2], calib.p_rect2[1][2]);
    let mut rgb = vec![0f32; 3 * h * w];
    for i in 0..h {
        for j in 0..w {
            let d = [(j as f64 - cx) / f, (i as f64 - cy) / f, 1.0];
            let (t, hit) = scene.cast(d);
            let c = scene.shade(d, t, &hit);
            for k in 0..3 {
                let noise = rng.gen_range(-0.01..0.01);
                rgb[(k * h + i) * w + j] = ((c[k] + noise).clamp(0.0, 1.0) * 255.0).round() as f32 / 255.0;
            }
        }
    }
    // 64 beams from −24.9° to +2°, full azimuth sweep
    let mut points = Vec::new();
    for beam in 0..64 {
        let elev = (-24.9 + 26.9 * beam as f64 / 63.0).to_radians();
        for step in 0..720 {
            let az = (step as f64 * 0.5).to_radians();
            // LiDAR frame: x forward, y left, z up → camera (−y, −z, x)
            let l = [elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin()];
            let d = [-l[1], -l[2], l[0]];
            let (t, hit) = scene.cast(d);
            if matches!(hit, Hit::Sky) || t > 120.0 {
                continue;
            }
            let r = t + rng.gen_range(-0.02..0.02);
            points.push([(l[0] * r) as f32, (l[1] * r) as f32, (l[2] * r) as f32, rng.gen_range(0.0..1.0)]);
        }
    }
    SyntheticFrame { rgb: Tensor::new(vec![3, h, w], rgb).unwrap(), cloud: PointCloud { points }, calib }
}

/// Writes `count` frames as `image_2/NNNNNN.png`, `velodyne/NNNNNN.bin` and
/// `calib/NNNNNN.txt` under `root`.
pub fn write_synthetic_split(root: &Path, count: usize, h: usize, w: usize, seed: u64) -> Result<Vec<String>> {
    let mut ids = Vec::with_capacity(count);
    for sub in ["image_2", "velodyne", "calib"] {
        let d = root.join(sub);
        std::fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    for k in 0..count {
        let id = format!("{k:06}");
        let frame = synthetic_frame(seed.wrapping_add(k as u64), h, w);
        save_png_rgb(&frame.rgb, &root.join("image_2").join(format!("{id}.png")))?;
        let v = root.join("velodyne").join(format!("{id}.bin"));
        std::fs::write(&v, write_velodyne_bin(&frame.cloud)).map_err(io_err(&v))?;
        let c = root.join("calib").join(format!("{id}.txt"));
        std::fs::write(&c, frame.calib.to_kitti_text()).map_err(io_err(&c))?;
        ids.push(id);
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kitti::{project_points, rasterize_depth, DepthSource};

    #[test]
    fn frames_are_deterministic() {
        let a = synthetic_frame(3, 24, 32);
        let b = synthetic_frame(3, 24, 32);
        assert_eq!(a.rgb, b.rgb);
        assert_eq!(a.cloud, b.cloud);
    }

    #[test]
    fn lidar_covers_the_lower_image() {
        let f = synthetic_frame(4, 48, 64);
        let proj = project_points(&f.cloud, &f.calib, DepthSource::CameraZ);
        assert!(proj.dropped > 0);
        let map = rasterize_depth(&proj.points, 48, 64);
        let lower = (24..48).flat_map(|r| (0..64).map(move |c| (r, c))).filter(|&(r, c)| map.valid[r * 64 + c]).count();
        assert!(lower > 48 * 64 / 4, "{lower}");
    }
}
