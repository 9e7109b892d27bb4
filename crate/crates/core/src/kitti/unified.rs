//! The joint 4×H×W sample and its on-disk forms.
//!
//! `PCNU` layout (little-endian):
//!
//! ```text
//! magic      4 bytes  "PCNU"
//! version    u16      1
//! dtype      u8       1 = f32
//! channels   u16
//! height     u32
//! width      u32
//! crop_top   u32
//! crop_left  u32
//! id_len     u16, then id_len bytes of UTF-8 source id
//! values     channels·height·width f32, channel-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

use super::{io_err, DepthMap, KittiError, Result};
use crate::tensor::Tensor;

pub const PCNU_MAGIC: &[u8; 4] = b"PCNU";
pub const PCNU_VERSION: u16 = 1;
const DTYPE_F32: u8 = 1;

/// Depth (metres) mapped to 1.0 in the depth channel.
pub const DEFAULT_D_MAX: f64 = 80.0;

/// RGB in channels 0–2 and normalized depth in channel 3, all in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedSample {
    pub data: Tensor<f32>,
    pub source_id: String,
    /// `(top, left)` of this window in the original frame.
    pub crop_origin: (usize, usize),
}

impl UnifiedSample {
    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    /// Channels 0–2.
    pub fn image(&self) -> Tensor<f32> {
        let plane = self.height() * self.width();
        Tensor::new(vec![3, self.height(), self.width()], self.data.data()[..3 * plane].to_vec()).unwrap()
    }

    /// Channel 3.
    pub fn depth(&self) -> Tensor<f32> {
        let plane = self.height() * self.width();
        Tensor::new(vec![1, self.height(), self.width()], self.data.data()[3 * plane..].to_vec()).unwrap()
    }

    /// Same sample with the depth channel zeroed.
    pub fn without_depth(&self) -> Self {
        let mut out = self.clone();
        let plane = self.height() * self.width();
        out.data.data_mut()[3 * plane..].fill(0.0);
        out
    }
}

/// Stacks an RGB image (3×H×W, [0,1]) with `clamp(depth / d_max, 0, 1)`.
pub fn make_unified_sample(image: &Tensor<f32>, depth: &DepthMap, d_max: f64) -> Result<UnifiedSample> {
    let (c, h, w) = image.chw().map_err(|e| KittiError::Dimension(e.to_string()))?;
    if c != 3 {
        return Err(KittiError::Dimension(format!("image has {c} channels, expected 3")));
    }
    if (depth.height, depth.width) != (h, w) {
        return Err(KittiError::Dimension(format!(
            "image is {h}×{w} but depth map is {}×{}",
            depth.height, depth.width
        )));
    }
    if !(d_max > 0.0) {
        return Err(KittiError::Dimension(format!("d_max must be positive, got {d_max}")));
    }
    let mut data = image.data().to_vec();
    data.extend(depth.values.iter().map(|&d| (d / d_max).clamp(0.0, 1.0) as f32));
    Ok(UnifiedSample { data: Tensor::new(vec![4, h, w], data).unwrap(), source_id: String::new(), crop_origin: (0, 0) })
}

/// Cuts the same window out of every channel. `h` and `w` must be
/// multiples of 16.
pub fn crop_sample(sample: &UnifiedSample, top: usize, left: usize, h: usize, w: usize) -> Result<UnifiedSample> {
    let (c, height, width) = (sample.data.shape()[0], sample.height(), sample.width());
    let err = || KittiError::Crop { top, left, h, w, height, width };
    if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 || top + h > height || left + w > width {
        return Err(err());
    }
    let src = sample.data.data();
    let mut data = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for r in top..top + h {
            let row = (ch * height + r) * width;
            data.extend_from_slice(&src[row + left..row + left + w]);
        }
    }
    Ok(UnifiedSample {
        data: Tensor::new(vec![c, h, w], data).unwrap(),
        source_id: sample.source_id.clone(),
        crop_origin: (sample.crop_origin.0 + top, sample.crop_origin.1 + left),
    })
}

/// Loads an 8-bit PNG as 3×H×W in [0,1] (value / 255).
pub fn load_png_rgb(path: &Path) -> Result<Tensor<f32>> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0f32; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = px[c] as f32 / 255.0;
        }
    }
    Ok(Tensor::new(vec![3, h, w], data).unwrap())
}

/// Rounds a [0,1] 3×H×W tensor to 8 bits and writes a PNG.
pub fn save_png_rgb(image: &Tensor<f32>, path: &Path) -> Result<()> {
    let (_, h, w) = image.chw().map_err(|e| KittiError::Dimension(e.to_string()))?;
    let d = image.data();
    let buf = ImageBuffer::<Rgb<u8>, _>::from_fn(w as u32, h as u32, |x, y| {
        Rgb(std::array::from_fn(|c| to_u8(d[(c * h + y as usize) * w + x as usize])))
    });
    buf.save(path)?;
    Ok(())
}

pub(crate) fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `<stem>_rgb.png` (16-bit RGB) and `<stem>_depth.png` (16-bit grey).
pub fn write_png_pair(sample: &UnifiedSample, dir: &Path, stem: &str) -> Result<()> {
    let (h, w) = (sample.height(), sample.width());
    let d = sample.data.data();
    let q = |v: f32| (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
    let rgb = ImageBuffer::<Rgb<u16>, _>::from_fn(w as u32, h as u32, |x, y| {
        Rgb(std::array::from_fn(|c| q(d[(c * h + y as usize) * w + x as usize])))
    });
    rgb.save(dir.join(format!("{stem}_rgb.png")))?;
    let depth = ImageBuffer::<Luma<u16>, _>::from_fn(w as u32, h as u32, |x, y| Luma([q(d[(3 * h + y as usize) * w + x as usize])]));
    depth.save(dir.join(format!("{stem}_depth.png")))?;
    Ok(())
}

pub fn write_pcnu(sample: &UnifiedSample, mut out: impl Write) -> std::io::Result<()> {
    let (c, h, w) = (sample.data.shape()[0], sample.height(), sample.width());
    let too_big = |what: &str| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("{what} does not fit the PCNU header"));
    out.write_all(PCNU_MAGIC)?;
    out.write_all(&PCNU_VERSION.to_le_bytes())?;
    out.write_all(&[DTYPE_F32])?;
    out.write_all(&u16::try_from(c).map_err(|_| too_big("channel count"))?.to_le_bytes())?;
    for v in [h, w, sample.crop_origin.0, sample.crop_origin.1] {
        out.write_all(&u32::try_from(v).map_err(|_| too_big("dimension"))?.to_le_bytes())?;
    }
    let id = sample.source_id.as_bytes();
    out.write_all(&u16::try_from(id.len()).map_err(|_| too_big("source id"))?.to_le_bytes())?;
    out.write_all(id)?;
    let mut buf = Vec::with_capacity(4 * sample.data.numel());
    for &v in sample.data.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

pub fn read_pcnu(mut r: impl Read) -> Result<UnifiedSample> {
    let fmt = |m: &str| KittiError::Format(format!("PCNU: {m}"));
    let mut head = [0u8; 4 + 2 + 1 + 2 + 16];
    r.read_exact(&mut head).map_err(|e| fmt(&format!("truncated header ({e})")))?;
    if &head[..4] != PCNU_MAGIC {
        return Err(fmt(&format!("bad magic {:?}", &head[..4])));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != PCNU_VERSION {
        return Err(fmt(&format!("unsupported version {version}")));
    }
    if head[6] != DTYPE_F32 {
        return Err(fmt(&format!("unsupported dtype code {}", head[6])));
    }
    let c = u16::from_le_bytes([head[7], head[8]]) as usize;
    let u32_at = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap()) as usize;
    let (h, w, top, left) = (u32_at(9), u32_at(13), u32_at(17), u32_at(21));
    let mut len = [0u8; 2];
    r.read_exact(&mut len).map_err(|e| fmt(&format!("truncated header ({e})")))?;
    let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
    r.read_exact(&mut id).map_err(|e| fmt(&format!("truncated id ({e})")))?;
    let source_id = String::from_utf8(id).map_err(|_| fmt("source id is not UTF-8"))?;
    let mut raw = vec![0u8; 4 * c * h * w];
    r.read_exact(&mut raw).map_err(|e| fmt(&format!("truncated payload ({e})")))?;
    let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok(UnifiedSample { data: Tensor::new(vec![c, h, w], data).unwrap(), source_id, crop_origin: (top, left) })
}

impl UnifiedSample {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(io_err(path))?;
        write_pcnu(self, std::io::BufWriter::new(f)).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(io_err(path))?;
        read_pcnu(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(h: usize, w: usize) -> Tensor<f32> {
        Tensor::new(vec![3, h, w], (0..3 * h * w).map(|i| (i % 251) as f32 / 250.0).collect()).unwrap()
    }

    fn sample(h: usize, w: usize) -> UnifiedSample {
        let mut depth = DepthMap::empty(h, w);
        for (i, v) in depth.values.iter_mut().enumerate() {
            *v = (i % 97) as f64;
        }
        make_unified_sample(&image(h, w), &depth, DEFAULT_D_MAX).unwrap()
    }

    #[test]
    fn empty_depth_leaves_image_untouched() {
        let img = image(4, 5);
        let s = make_unified_sample(&img, &DepthMap::empty(4, 5), 80.0).unwrap();
        assert_eq!(s.data.shape(), &[4, 4, 5]);
        assert_eq!(s.image(), img);
        assert!(s.depth().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn depth_is_normalized_and_clamped() {
        let mut depth = DepthMap::empty(1, 3);
        depth.values = vec![80.0, 160.0, 40.0];
        let s = make_unified_sample(&image(1, 3), &depth, 80.0).unwrap();
        assert_eq!(s.depth().data(), &[1.0, 1.0, 0.5]);
    }

    #[test]
    fn size_mismatch_is_an_error() {
        assert!(matches!(
            make_unified_sample(&image(4, 5), &DepthMap::empty(4, 6), 80.0),
            Err(KittiError::Dimension(_))
        ));
    }

    #[test]
    fn full_crop_is_identity() {
        let s = sample(32, 48);
        assert_eq!(crop_sample(&s, 0, 0, 32, 48).unwrap(), s);
    }

    #[test]
    fn kitti_frame_crop() {
        let s = sample(375, 1242);
        let c = crop_sample(&s, 0, 0, 256, 256).unwrap();
        assert_eq!(c.data.shape(), &[4, 256, 256]);
    }

    #[test]
    fn crops_compose() {
        let s = sample(64, 80);
        let twice = crop_sample(&crop_sample(&s, 16, 16, 48, 64).unwrap(), 16, 32, 32, 32).unwrap();
        let once = crop_sample(&s, 32, 48, 32, 32).unwrap();
        assert_eq!(twice, once);
        assert_eq!(once.crop_origin, (32, 48));
    }

    #[test]
    fn crop_commutes_with_channel_selection() {
        let s = sample(48, 48);
        let c = crop_sample(&s, 16, 0, 32, 32).unwrap();
        for (ch, plane) in [(0, s.image()), (3, s.depth())] {
            let ch0 = if ch == 3 { 0 } else { ch };
            let src = plane.channel(ch0);
            let got = c.data.channel(ch);
            for r in 0..32 {
                assert_eq!(&got[r * 32..(r + 1) * 32], &src[(16 + r) * 48..(16 + r) * 48 + 32]);
            }
        }
    }

    #[test]
    fn bad_crops_are_rejected() {
        let s = sample(32, 32);
        assert!(crop_sample(&s, 16, 0, 32, 32).is_err());
        assert!(crop_sample(&s, 0, 0, 24, 32).is_err());
    }

    #[test]
    fn pcnu_round_trip() {
        let mut s = sample(16, 32);
        s.source_id = "000042".into();
        s.crop_origin = (3, 7);
        let mut buf = Vec::new();
        write_pcnu(&s, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"PCNU");
        assert_eq!(read_pcnu(&buf[..]).unwrap(), s);
        buf[0] = b'X';
        assert!(read_pcnu(&buf[..]).is_err());
    }
}
