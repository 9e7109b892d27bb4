use std::collections::HashMap;

use super::{KittiError, Result};

/// The three matrices needed to map a LiDAR point into camera 2's pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    /// Rectified projection of the left colour camera, 3×4.
    pub p_rect2: [[f64; 4]; 3],
    /// Rectifying rotation, 3×3 (applied as a 4×4 with a unit corner).
    pub r_rect0: [[f64; 3]; 3],
    /// Rigid LiDAR → camera transform, 3×4 (applied as 4×4).
    pub tr_velo_cam: [[f64; 4]; 3],
}

impl CalibrationSet {
    /// Largest entry of |RᵀR − I| for the rectifying rotation.
    pub fn rotation_orthonormality_error(&self) -> f64 {
        let r = &self.r_rect0;
        let mut worst = 0f64;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// The three keys in KITTI's `KEY: v1 v2 ...` layout.
    pub fn to_kitti_text(&self) -> String {
        let join = |v: &mut dyn Iterator<Item = &f64>| v.map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        format!(
            "P2: {}\nR0_rect: {}\nTr_velo_to_cam: {}\n",
            join(&mut self.p_rect2.iter().flatten()),
            join(&mut self.r_rect0.iter().flatten()),
            join(&mut self.tr_velo_cam.iter().flatten())
        )
    }

    /// `P · R · Tr` as a single 3×4 matrix.
    pub fn velo_to_image(&self) -> [[f64; 4]; 3] {
        // R·Tr: rotation acts on the first three rows, bottom row stays [0 0 0 1].
        let mut rt = [[0f64; 4]; 4];
        for i in 0..3 {
            for j in 0..4 {
                rt[i][j] = (0..3).map(|k| self.r_rect0[i][k] * self.tr_velo_cam[k][j]).sum();
            }
        }
        rt[3] = [0.0, 0.0, 0.0, 1.0];
        let mut m = [[0f64; 4]; 3];
        for i in 0..3 {
            for j in 0..4 {
                m[i][j] = (0..4).map(|k| self.p_rect2[i][k] * rt[k][j]).sum();
            }
        }
        m
    }
}

fn values<'a>(map: &HashMap<&str, Vec<f64>>, key: &'static str, expected: usize) -> Result<Vec<f64>> {
    let v = map.get(key).ok_or(KittiError::MissingKey(key))?;
    if v.len() != expected {
        return Err(KittiError::Count { key, expected, actual: v.len() });
    }
    Ok(v.clone())
}

fn rows<const C: usize>(v: &[f64]) -> [[f64; C]; 3] {
    let mut m = [[0f64; C]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row.copy_from_slice(&v[i * C..(i + 1) * C]);
    }
    m
}

/// Parses a KITTI object calibration file (`KEY: v1 v2 ...` lines). Keys
/// other than `P2`, `R0_rect` and `Tr_velo_to_cam` are ignored.
pub fn parse_calibration(text: &str) -> Result<CalibrationSet> {
    let mut map: HashMap<&str, Vec<f64>> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let Some((key, rest)) = line.split_once(':') else { continue };
        let key = key.trim();
        let nums = rest
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| KittiError::Format(format!("line {}: key `{key}`: {e}", lineno + 1)))?;
        map.insert(key, nums);
    }
    let calib = CalibrationSet {
        p_rect2: rows::<4>(&values(&map, "P2", 12)?),
        r_rect0: {
            let v = values(&map, "R0_rect", 9)?;
            let mut m = [[0f64; 3]; 3];
            for (i, row) in m.iter_mut().enumerate() {
                row.copy_from_slice(&v[i * 3..i * 3 + 3]);
            }
            m
        },
        tr_velo_cam: rows::<4>(&values(&map, "Tr_velo_to_cam", 12)?),
    };
    let all = calib.p_rect2.iter().flatten().chain(calib.r_rect0.iter().flatten()).chain(calib.tr_velo_cam.iter().flatten());
    if all.clone().any(|v| !v.is_finite()) {
        return Err(KittiError::Format("calibration contains a non-finite entry".into()));
    }
    let ortho = calib.rotation_orthonormality_error();
    if ortho > 1e-3 {
        log::warn!("R0_rect deviates from orthonormal by {ortho:.2e}");
    }
    Ok(calib)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let c = parse_calibration(KITTI_STYLE).unwrap();
        assert_eq!(parse_calibration(&c.to_kitti_text()).unwrap(), c);
    }

    const IDENTITY: &str = "P2: 1 0 0 0 0 1 0 0 0 0 1 0\nR0_rect: 1 0 0 0 1 0 0 0 1\nTr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n";

    // Full-length calibration in the KITTI object-benchmark layout, extra keys included.
    const KITTI_STYLE: &str = "\
P0: 7.070493000000e+02 0.000000000000e+00 6.040814000000e+02 0.000000000000e+00 0.000000000000e+00 7.070493000000e+02 1.805066000000e+02 0.000000000000e+00 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 0.000000000000e+00
P1: 7.070493000000e+02 0.000000000000e+00 6.040814000000e+02 -3.797842000000e+02 0.000000000000e+00 7.070493000000e+02 1.805066000000e+02 0.000000000000e+00 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 0.000000000000e+00
P2: 7.070493000000e+02 0.000000000000e+00 6.040814000000e+02 4.575831000000e+01 0.000000000000e+00 7.070493000000e+02 1.805066000000e+02 -3.454157000000e-01 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 4.981016000000e-03
P3: 7.070493000000e+02 0.000000000000e+00 6.040814000000e+02 -3.341081000000e+02 0.000000000000e+00 7.070493000000e+02 1.805066000000e+02 2.330660000000e+00 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 3.201153000000e-03
R0_rect: 9.999128000000e-01 1.009263000000e-02 -8.511932000000e-03 -1.012729000000e-02 9.999406000000e-01 -4.037671000000e-03 8.470675000000e-03 4.123522000000e-03 9.999556000000e-01
Tr_velo_to_cam: 6.927964000000e-03 -9.999722000000e-01 -2.757829000000e-03 -2.457729000000e-02 -1.162982000000e-03 2.749836000000e-03 -9.999955000000e-01 -6.127237000000e-02 9.999753000000e-01 6.931141000000e-03 -1.143899000000e-03 -3.321029000000e-01
Tr_imu_to_velo: 9.999976000000e-01 7.553071000000e-04 -2.035826000000e-03 -8.086759000000e-01 -7.854027000000e-04 9.998898000000e-01 -1.482298000000e-02 3.195559000000e-01 2.024406000000e-03 1.482454000000e-02 9.998881000000e-01 -7.997231000000e-01
";

    #[test]
    fn identity_like_projection() {
        let c = parse_calibration(IDENTITY).unwrap();
        assert_eq!(c.p_rect2, [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]);
        assert_eq!(c.rotation_orthonormality_error(), 0.0);
    }

    #[test]
    fn key_order_does_not_matter() {
        let mut lines: Vec<&str> = IDENTITY.lines().collect();
        lines.reverse();
        assert_eq!(parse_calibration(&lines.join("\n")).unwrap(), parse_calibration(IDENTITY).unwrap());
    }

    #[test]
    fn kitti_layout_file_with_extra_keys() {
        let c = parse_calibration(KITTI_STYLE).unwrap();
        assert_eq!(c.p_rect2[0][0], 7.070493e2);
        assert_eq!(c.p_rect2[2][3], 4.981016e-3);
        assert_eq!(c.tr_velo_cam[2][3], -3.321029e-1);
        assert!(c.rotation_orthonormality_error() < 1e-3);
    }

    #[test]
    fn missing_key_is_named() {
        let text = "P2: 1 0 0 0 0 1 0 0 0 0 1 0\nR0_rect: 1 0 0 0 1 0 0 0 1\n";
        let err = parse_calibration(text).unwrap_err();
        assert!(matches!(err, KittiError::MissingKey("Tr_velo_to_cam")));
        assert!(err.to_string().contains("Tr_velo_to_cam"));
    }

    #[test]
    fn wrong_count_reports_both_numbers() {
        let text = IDENTITY.replace("R0_rect: 1 0 0 0 1 0 0 0 1", "R0_rect: 1 0 0 0 1 0 0 0");
        match parse_calibration(&text).unwrap_err() {
            KittiError::Count { key, expected, actual } => assert_eq!((key, expected, actual), ("R0_rect", 9, 8)),
            other => panic!("{other}"),
        }
    }
}
