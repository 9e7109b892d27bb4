//! Loading training and evaluation samples per the `[data]` section.

use std::path::Path;

use pcnic::kitti::{crop_sample, list_pcnu_dir, KittiDataset, UnifiedSample};
use pcnic::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// A sample ready for the network: `4×H×W`, depth zeroed for the
/// image-only variant by the caller.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub data: Tensor<f32>,
}

fn select<T>(items: Vec<T>, split: Split, cfg: &RunConfig) -> Vec<T> {
    match split {
        Split::Train => items.into_iter().take(cfg.data.max_train).collect(),
        Split::Test => items.into_iter().skip(cfg.data.test_offset).take(cfg.data.max_test).collect(),
    }
}

/// Seeded crop of `[h, w]`; the position depends on the seed, the split
/// and the sample's index only.
fn crop(s: UnifiedSample, index: usize, split: Split, cfg: &RunConfig) -> Result<UnifiedSample> {
    let size = match split {
        Split::Train => cfg.data.crop,
        Split::Test => cfg.data.test_crop.or(cfg.data.crop),
    };
    let Some([h, w]) = size else { return Ok(s) };
    let (fh, fw) = (s.height(), s.width());
    if (fh, fw) == (h, w) {
        return Ok(s);
    }
    let min_top = cfg.data.crop_min_top.min(fh.saturating_sub(h));
    if fh < h || fw < w {
        return Err(CliError::data(anyhow::anyhow!("sample `{}` is {fh}×{fw}, smaller than the {h}×{w} crop", s.source_id)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6372_6f70);
    rng.set_stream(((split == Split::Test) as u64) << 32 | index as u64);
    let top = rng.gen_range(min_top..=fh - h);
    let left = rng.gen_range(0..=fw - w);
    Ok(crop_sample(&s, top, left, h, w)?)
}

pub fn load(cfg: &RunConfig, split: Split) -> Result<Vec<Sample>> {
    let d = &cfg.data;
    // Evaluation prefers its own sources and falls back to the training ones.
    let (pcnu, root) = match split {
        Split::Train => (d.pcnu_dir.clone(), d.root.clone()),
        Split::Test if d.test_pcnu_dir.is_some() || d.test_root.is_some() => (d.test_pcnu_dir.clone(), d.test_root.clone()),
        Split::Test => (d.pcnu_dir.clone(), d.root.clone()),
    };
    let raw: Vec<UnifiedSample> = if let Some(dir) = pcnu {
        let files = select(list_pcnu_dir(&dir)?, split, cfg);
        files.iter().map(|f| load_pcnu(f)).collect::<Result<_>>()?
    } else if let Some(root) = root {
        let ds = KittiDataset { root, image_dir: d.image_dir.clone(), velodyne_dir: d.velodyne_dir.clone(), calib_dir: d.calib_dir.clone() };
        let ids = select(ds.ids()?, split, cfg);
        ids.iter()
            .map(|id| ds.load(id, d.d_max, d.depth_source).map_err(|e| CliError::from(e).context(format!("frame {id}"))))
            .collect::<Result<_>>()?
    } else {
        return Err(CliError::Usage("no data source configured".into()));
    };
    if raw.is_empty() {
        return Err(CliError::data(anyhow::anyhow!("the {split:?} split is empty")));
    }
    let mut out = Vec::with_capacity(raw.len());
    for (i, s) in raw.into_iter().enumerate() {
        let s = crop(s, i, split, cfg)?;
        let s = if cfg.model.point_branch { s } else { s.without_depth() };
        out.push(Sample { id: s.source_id.clone(), data: s.data });
    }
    log::info!("loaded {} {:?} samples", out.len(), split);
    Ok(out)
}

pub fn load_pcnu(path: &Path) -> Result<UnifiedSample> {
    let mut s = UnifiedSample::load(path).map_err(|e| CliError::from(e).context(path.display()))?;
    if s.source_id.is_empty() {
        s.source_id = path.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(s)
}
