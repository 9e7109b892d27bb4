use super::{KittiError, Result};

/// LiDAR scan: `(x, y, z, reflectance)` per point, metres in the sensor frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f32; 4]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Parses the headerless KITTI velodyne layout: little-endian `f32`
/// quadruples in file order.
pub fn parse_velodyne_bin(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() % 16 != 0 {
        return Err(KittiError::Format(format!(
            "velodyne payload of {} bytes is not a multiple of 16",
            bytes.len()
        )));
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    for (i, chunk) in bytes.chunks_exact(16).enumerate() {
        let mut p = [0f32; 4];
        for (j, v) in p.iter_mut().enumerate() {
            *v = f32::from_le_bytes(chunk[4 * j..4 * j + 4].try_into().unwrap());
        }
        if let Some(axis) = p[..3].iter().position(|v| !v.is_finite()) {
            return Err(KittiError::Format(format!("point {i} has non-finite coordinate on axis {axis}")));
        }
        points.push(p);
    }
    Ok(PointCloud { points })
}

pub fn write_velodyne_bin(pc: &PointCloud) -> Vec<u8> {
    pc.points.iter().flat_map(|p| p.iter().flat_map(|v| v.to_le_bytes())).collect()
}
