use std::io::Read;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{CodecConfig, NetError, Result};
use crate::scalar::Scalar;
use crate::tensor::{read_checkpoint, write_checkpoint, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// `U(−b, b)`.
    Uniform(f64),
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// σ-parameter value whose softplus is 1.
const SOFTPLUS_INV_ONE: f64 = 0.541_324_854_612_918_1;

struct Layout(Vec<ParamSpec>);

impl Layout {
    fn conv(&mut self, name: &str, c_out: usize, c_in: usize, k: usize) {
        let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
        self.push(format!("{name}.weight"), vec![c_out, c_in, k, k], Init::Uniform(bound));
        self.push(format!("{name}.bias"), vec![c_out], Init::Uniform(bound));
    }

    fn deconv(&mut self, name: &str, c_in: usize, c_out: usize, k: usize) {
        let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
        self.push(format!("{name}.weight"), vec![c_in, c_out, k, k], Init::Uniform(bound));
        self.push(format!("{name}.bias"), vec![c_out], Init::Uniform(bound));
    }

    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) {
        self.0.push(ParamSpec { name, shape, init });
    }

    fn res_block(&mut self, prefix: &str, c: usize) {
        self.conv(&format!("{prefix}.conv1"), c, c, 3);
        self.conv(&format!("{prefix}.conv2"), c, c, 3);
    }

    fn attention_block(&mut self, prefix: &str, c: usize) {
        self.conv(&format!("{prefix}.trunk1"), c, c, 3);
        self.conv(&format!("{prefix}.trunk2"), c, c, 3);
        self.conv(&format!("{prefix}.mask1"), c, c, 3);
        self.conv(&format!("{prefix}.mask2"), c, c, 1);
    }

    fn analysis(&mut self, branch: &str, c_in: usize, cfg: &CodecConfig) {
        for s in 0..cfg.depth {
            self.conv(&format!("{branch}.down{s}"), cfg.n, if s == 0 { c_in } else { cfg.n }, 3);
            self.res_block(&format!("{branch}.res{s}"), cfg.n);
            if has_mid_attention(cfg, s) {
                self.attention_block(&format!("{branch}.attn_mid"), cfg.n);
            }
        }
        self.attention_block(&format!("{branch}.attn_out"), cfg.n);
    }
}

/// Whether the attention block of the middle resolution follows stage `s`.
pub(crate) fn has_mid_attention(cfg: &CodecConfig, s: usize) -> bool {
    cfg.depth >= 2 && s + 1 == cfg.depth / 2
}

/// Every parameter of the network described by `cfg`, in a fixed order.
pub fn layout(cfg: &CodecConfig) -> Vec<ParamSpec> {
    let (n, m) = (cfg.n, cfg.m);
    let mut l = Layout(Vec::new());
    l.analysis("ga_img", 3, cfg);
    if cfg.point_branch {
        l.analysis("ga_pc", 1, cfg);
    }
    l.conv("fuse.conv", m, 2 * n, 3);
    if cfg.attention {
        l.conv("fuse.fc1", cfg.bottleneck(), m, 1);
        l.conv("fuse.fc2", m, cfg.bottleneck(), 1);
    }
    l.conv("ha.conv1", n, m, 3);
    l.conv("ha.conv2", n, n, 3);
    l.deconv("hs.deconv1", n, n, 3);
    l.deconv("hs.deconv2", n, 2 * m, 3);
    l.push("prior_z.mu".into(), vec![n], Init::Constant(0.0));
    l.push("prior_z.sigma".into(), vec![n], Init::Constant(SOFTPLUS_INV_ONE));
    if cfg.context {
        let k = super::MASK_SIZE;
        l.conv("ctx.masked", 2 * m, m, k);
        l.conv("ctx.fc1", 3 * m, 4 * m, 1);
        l.conv("ctx.fc2", 3 * m, 3 * m, 1);
        l.conv("ctx.fc3", 2 * m, 3 * m, 1);
    }
    l.attention_block("gs.attn_in", m);
    for s in 0..cfg.depth {
        let c_in = if s == 0 { m } else { n };
        l.res_block(&format!("gs.res{s}"), c_in);
        l.deconv(&format!("gs.up{s}"), c_in, if s + 1 == cfg.depth { 3 } else { n }, 3);
        if has_mid_attention(cfg, s) {
            l.attention_block("gs.attn_mid", n);
        }
    }
    l.0
}

/// Named parameters in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    map: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    /// Fresh parameters drawn from a seeded generator.
    pub fn init(cfg: &CodecConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = IndexMap::new();
        for spec in layout(cfg) {
            let len = spec.shape.iter().product();
            let data = match spec.init {
                Init::Uniform(b) => (0..len).map(|_| T::from_f64_lossy(rng.gen_range(-b..b))).collect(),
                Init::Constant(c) => vec![T::from_f64_lossy(c); len],
            };
            map.insert(spec.name, Tensor::new(spec.shape, data).expect("layout shapes are consistent"));
        }
        Self { map }
    }

    /// Takes arrays loaded from a checkpoint, checking names and shapes
    /// against the layout of `cfg`.
    pub fn from_arrays(cfg: &CodecConfig, arrays: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut loaded: IndexMap<String, Tensor<T>> = arrays.into_iter().collect();
        let mut map = IndexMap::new();
        for spec in layout(cfg) {
            let t = loaded.shift_remove(&spec.name).ok_or_else(|| NetError::MissingParam(spec.name.clone()))?;
            if t.shape() != spec.shape.as_slice() {
                return Err(NetError::ParamShape { name: spec.name, expected: spec.shape, actual: t.shape().to_vec() });
            }
            map.insert(spec.name, t);
        }
        if let Some(extra) = loaded.keys().next() {
            return Err(NetError::Config(format!("checkpoint has unexpected parameter `{extra}`")));
        }
        Ok(Self { map })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.map.get(name).ok_or_else(|| NetError::MissingParam(name.into()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.map.get_mut(name).ok_or_else(|| NetError::MissingParam(name.into()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.map.values_mut().collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.map.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore { map: self.map.iter().map(|(k, v)| (k.clone(), v.cast())).collect() }
    }

    pub fn to_pcnw(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_checkpoint(&mut out, self.iter()).expect("writing to memory cannot fail");
        out
    }

    pub fn from_pcnw(cfg: &CodecConfig, r: impl Read) -> Result<Self> {
        Self::from_arrays(cfg, read_checkpoint(r)?)
    }

    /// First four bytes (big-endian) of SHA-256 over the sidecar JSON and
    /// the PCNW serialization; stamped into every bitstream.
    pub fn config_hash(&self, cfg: &CodecConfig) -> u32 {
        let mut h = Sha256::new();
        h.update(cfg.to_json().as_bytes());
        h.update(self.to_pcnw());
        let d = h.finalize();
        u32::from_be_bytes([d[0], d[1], d[2], d[3]])
    }
}
