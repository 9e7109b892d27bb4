use std::path::{Path, PathBuf};

use super::{
    io_err, load_png_rgb, make_unified_sample, parse_calibration, parse_velodyne_bin, project_points, rasterize_depth,
    DepthSource, Result, UnifiedSample,
};

/// A KITTI object-benchmark split on disk:
/// `<root>/<image_dir>/ID.png`, `<root>/<velodyne_dir>/ID.bin`,
/// `<root>/<calib_dir>/ID.txt`.
#[derive(Debug, Clone)]
pub struct KittiDataset {
    pub root: PathBuf,
    pub image_dir: String,
    pub velodyne_dir: String,
    pub calib_dir: String,
}

impl KittiDataset {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), image_dir: "image_2".into(), velodyne_dir: "velodyne".into(), calib_dir: "calib".into() }
    }

    /// Frame ids present in the image directory, sorted.
    pub fn ids(&self) -> Result<Vec<String>> {
        let dir = self.root.join(&self.image_dir);
        let mut ids: Vec<String> = std::fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "png"))
            .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn paths(&self, id: &str) -> (PathBuf, PathBuf, PathBuf) {
        (
            self.root.join(&self.image_dir).join(format!("{id}.png")),
            self.root.join(&self.velodyne_dir).join(format!("{id}.bin")),
            self.root.join(&self.calib_dir).join(format!("{id}.txt")),
        )
    }

    pub fn load(&self, id: &str, d_max: f64, source: DepthSource) -> Result<UnifiedSample> {
        let (img, velo, calib) = self.paths(id);
        let mut s = load_triplet(&img, &velo, &calib, d_max, source)?;
        s.source_id = id.to_string();
        Ok(s)
    }
}

/// Image + scan + calibration → unified sample at full frame size.
pub fn load_triplet(image: &Path, velodyne: &Path, calib: &Path, d_max: f64, source: DepthSource) -> Result<UnifiedSample> {
    let rgb = load_png_rgb(image)?;
    let (_, h, w) = rgb.chw().expect("rgb loader yields C×H×W");
    let bytes = std::fs::read(velodyne).map_err(io_err(velodyne))?;
    let pc = parse_velodyne_bin(&bytes)?;
    let text = std::fs::read_to_string(calib).map_err(io_err(calib))?;
    let calib = parse_calibration(&text)?;
    let projected = project_points(&pc, &calib, source);
    let depth = rasterize_depth(&projected.points, h, w);
    log::debug!(
        "{}: {} points, {} behind camera, {} pixels hit",
        image.display(),
        pc.len(),
        projected.dropped,
        depth.hits()
    );
    let mut sample = make_unified_sample(&rgb, &depth, d_max)?;
    sample.source_id = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(sample)
}

/// `*.pcnu` files of a directory, sorted by name.
pub fn list_pcnu_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "pcnu"))
        .collect();
    files.sort();
    Ok(files)
}
