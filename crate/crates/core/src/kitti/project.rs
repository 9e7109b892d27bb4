use super::{CalibrationSet, PointCloud};

/// Which quantity is written into the depth channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum DepthSource {
    /// Forward coordinate of the raw LiDAR point (sensor x).
    #[serde(rename = "lidar-x")]
    LidarX,
    /// Third homogeneous coordinate after projection, i.e. camera z.
    #[default]
    #[serde(rename = "camera-z")]
    CameraZ,
}

impl std::str::FromStr for DepthSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lidar-x" => Ok(Self::LidarX),
            "camera-z" => Ok(Self::CameraZ),
            other => Err(format!("unknown depth source `{other}` (expected lidar-x or camera-z)")),
        }
    }
}

impl std::fmt::Display for DepthSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::LidarX => "lidar-x",
            Self::CameraZ => "camera-z",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Projection {
    pub points: Vec<ProjectedPoint>,
    /// Points at or behind the camera plane.
    pub dropped: usize,
}

/// Homogeneous third coordinate at or below which a point is discarded.
const MIN_CAMERA_Z: f64 = 1e-6;

/// Maps every LiDAR point through `P · R · Tr` and divides by the third
/// homogeneous coordinate.
pub fn project_points(pc: &PointCloud, calib: &CalibrationSet, source: DepthSource) -> Projection {
    let m = calib.velo_to_image();
    let mut out = Projection { points: Vec::with_capacity(pc.len()), dropped: 0 };
    for p in &pc.points {
        let x = [p[0] as f64, p[1] as f64, p[2] as f64, 1.0];
        let h: [f64; 3] = std::array::from_fn(|r| m[r][0] * x[0] + m[r][1] * x[1] + m[r][2] * x[2] + m[r][3]);
        if !(h[2] > MIN_CAMERA_Z) {
            out.dropped += 1;
            continue;
        }
        let depth = match source {
            DepthSource::LidarX => x[0],
            DepthSource::CameraZ => h[2],
        };
        out.points.push(ProjectedPoint { u: h[0] / h[2], v: h[1] / h[2], depth });
    }
    out
}

/// Sparse single-channel depth image; 0 marks pixels without a return.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn empty(height: usize, width: usize) -> Self {
        Self { height, width, values: vec![0.0; height * width], valid: vec![false; height * width] }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn hits(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Z-buffer rasterization: each point lands on `(round(v), round(u))`
/// (half away from zero) and the nearest positive depth wins.
pub fn rasterize_depth(points: &[ProjectedPoint], height: usize, width: usize) -> DepthMap {
    let mut map = DepthMap::empty(height, width);
    for p in points {
        let (r, c) = (p.v.round(), p.u.round());
        if !(r >= 0.0 && r < height as f64 && c >= 0.0 && c < width as f64) || !(p.depth > 0.0) {
            continue;
        }
        let idx = r as usize * width + c as usize;
        if !map.valid[idx] || p.depth < map.values[idx] {
            map.values[idx] = p.depth;
            map.valid[idx] = true;
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pinhole() -> CalibrationSet {
        CalibrationSet {
            p_rect2: [[700.0, 0.0, 600.0, 0.0], [0.0, 700.0, 180.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
            r_rect0: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            // LiDAR (x, y, z) → camera (−y, −z, x)
            tr_velo_cam: [[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [1.0, 0.0, 0.0, 0.0]],
        }
    }

    #[test]
    fn forward_point_hits_principal_point() {
        let pc = PointCloud { points: vec![[10.0, 0.0, 0.0, 1.0]] };
        let proj = project_points(&pc, &pinhole(), DepthSource::CameraZ);
        assert_eq!(proj.points, vec![ProjectedPoint { u: 600.0, v: 180.0, depth: 10.0 }]);
        assert_eq!(proj.dropped, 0);
    }

    #[test]
    fn point_behind_camera_is_dropped() {
        let pc = PointCloud { points: vec![[-5.0, 0.0, 0.0, 1.0]] };
        let proj = project_points(&pc, &pinhole(), DepthSource::CameraZ);
        assert!(proj.points.is_empty());
        assert_eq!(proj.dropped, 1);
    }

    #[test]
    fn depth_sources_differ_off_axis() {
        let mut c = pinhole();
        // 0.1 m of forward offset between LiDAR and camera
        c.tr_velo_cam[2][3] = -0.1;
        let pc = PointCloud { points: vec![[10.0, 1.0, 0.5, 0.0]] };
        let z = project_points(&pc, &c, DepthSource::CameraZ).points[0];
        let x = project_points(&pc, &c, DepthSource::LidarX).points[0];
        assert!((z.depth - 9.9).abs() < 1e-12);
        assert_eq!(x.depth, 10.0);
        assert_eq!((z.u, z.v), (x.u, x.v));
    }

    #[test]
    fn rounding_picks_the_nearest_pixel() {
        let map = rasterize_depth(&[ProjectedPoint { u: 10.4, v: 20.6, depth: 7.0 }], 100, 100);
        assert_eq!(map.get(21, 10), 7.0);
        assert_eq!(map.hits(), 1);
        assert_eq!(map.values.iter().sum::<f64>(), 7.0);
    }

    #[test]
    fn nearest_depth_wins_collisions() {
        let pts = [ProjectedPoint { u: 3.0, v: 3.0, depth: 9.0 }, ProjectedPoint { u: 3.2, v: 2.9, depth: 5.0 }];
        assert_eq!(rasterize_depth(&pts, 8, 8).get(3, 3), 5.0);
    }

    #[test]
    fn out_of_frame_points_are_ignored() {
        let pts = [
            ProjectedPoint { u: -0.6, v: 0.0, depth: 1.0 },
            ProjectedPoint { u: 0.0, v: 7.5, depth: 1.0 },
            ProjectedPoint { u: -0.4, v: -0.4, depth: 2.0 },
        ];
        let map = rasterize_depth(&pts, 8, 8);
        assert_eq!(map.hits(), 1);
        assert_eq!(map.get(0, 0), 2.0);
    }
}
