use std::path::PathBuf;

use pcnic::kitti::{crop_sample, load_triplet, write_png_pair, DepthSource, KittiDataset, UnifiedSample, DEFAULT_D_MAX};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crop {
    pub top: usize,
    pub left: usize,
    pub h: usize,
    pub w: usize,
}

impl std::str::FromStr for Crop {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: Vec<usize> = s.split(',').map(|x| x.trim().parse::<usize>()).collect::<Result<_, _>>().map_err(|e| format!("{e}"))?;
        match v[..] {
            [top, left, h, w] => Ok(Self { top, left, h, w }),
            _ => Err("expected TOP,LEFT,HEIGHT,WIDTH".into()),
        }
    }
}

/// Projects LiDAR into the camera frame and writes unified samples.
#[derive(Debug, clap::Args)]
pub struct ProjectArgs {
    /// Left colour image (PNG).
    #[arg(long, requires_all = ["velodyne", "calib"], conflicts_with = "root")]
    pub image: Option<PathBuf>,
    /// Velodyne scan (`.bin`, float32 x,y,z,reflectance).
    #[arg(long)]
    pub velodyne: Option<PathBuf>,
    /// Calibration file with P2, R0_rect and Tr_velo_to_cam.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// A KITTI split directory; every frame is projected.
    #[arg(long, required_unless_present = "image")]
    pub root: Option<PathBuf>,
    /// Output `.pcnu` file (triplet mode) or directory (`--root` mode).
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = DepthSource::CameraZ)]
    pub depth_source: DepthSource,
    /// Depth mapped to 1.0, in metres.
    #[arg(long, default_value_t = DEFAULT_D_MAX)]
    pub d_max: f64,
    /// TOP,LEFT,HEIGHT,WIDTH window to keep.
    #[arg(long)]
    pub crop: Option<Crop>,
    /// Also write 16-bit `_rgb.png` / `_depth.png` next to each sample.
    #[arg(long)]
    pub png: bool,
    /// Project at most this many frames in `--root` mode.
    #[arg(long)]
    pub limit: Option<usize>,
}

fn finish(s: UnifiedSample, args: &ProjectArgs, out: &std::path::Path) -> Result<()> {
    let s = match args.crop {
        Some(c) => crop_sample(&s, c.top, c.left, c.h, c.w)?,
        None => s,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    s.save(out)?;
    if args.png {
        let stem = out.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
        write_png_pair(&s, out.parent().unwrap_or(std::path::Path::new(".")), &stem)?;
    }
    println!("{}: 4×{}×{}", out.display(), s.height(), s.width());
    Ok(())
}

pub fn run(args: ProjectArgs) -> Result<()> {
    if !(args.d_max > 0.0) {
        return Err(CliError::Usage(format!("--d-max must be positive, got {}", args.d_max)));
    }
    if let (Some(img), Some(velo), Some(calib)) = (&args.image, &args.velodyne, &args.calib) {
        let s = load_triplet(img, velo, calib, args.d_max, args.depth_source)?;
        return finish(s, &args, &args.output);
    }
    let root = args.root.clone().ok_or_else(|| CliError::Usage("give --image/--velodyne/--calib or --root".into()))?;
    let ds = KittiDataset::new(root);
    let ids = ds.ids()?;
    for id in ids.iter().take(args.limit.unwrap_or(usize::MAX)) {
        let s = ds.load(id, args.d_max, args.depth_source).map_err(|e| CliError::from(e).context(format!("frame {id}")))?;
        finish(s, &args, &args.output.join(format!("{id}.pcnu")))?;
    }
    Ok(())
}
