use std::collections::HashMap;

use super::{NetError, ParamStore, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Var};

pub(crate) const SLOPE: f64 = 0.01;

/// Parameter name → graph variable for one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Binding {
    vars: HashMap<String, Var>,
}

impl Binding {
    /// Places every parameter on `g`, differentiable iff `trainable`.
    pub fn new<T: Scalar>(g: &mut Graph<T>, params: &ParamStore<T>, trainable: bool) -> Self {
        let vars = params
            .iter()
            .map(|(name, t)| {
                let v = if trainable { g.param(t.clone()) } else { g.constant(t.clone()) };
                (name.to_string(), v)
            })
            .collect();
        Self { vars }
    }

    /// Binds variables that already live on a graph.
    pub fn from_vars<'a>(pairs: impl IntoIterator<Item = (&'a str, Var)>) -> Self {
        Self { vars: pairs.into_iter().map(|(n, v)| (n.to_string(), v)).collect() }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| NetError::MissingParam(name.into()))
    }
}

pub(crate) fn conv<T: Scalar>(g: &mut Graph<T>, b: &Binding, name: &str, x: Var, stride: usize) -> Result<Var> {
    let w = b.get(&format!("{name}.weight"))?;
    let k = g.shape(w)[2];
    Ok(g.conv2d(x, w, Some(b.get(&format!("{name}.bias"))?), stride, k / 2)?)
}

/// Stride-2 transposed 3×3 convolution to an exact output size.
pub(crate) fn deconv_to<T: Scalar>(g: &mut Graph<T>, b: &Binding, name: &str, x: Var, h: usize, w: usize) -> Result<Var> {
    let wt = b.get(&format!("{name}.weight"))?;
    Ok(g.conv_transpose2d_to(x, wt, Some(b.get(&format!("{name}.bias"))?), 2, 1, h, w)?)
}

/// `x + conv2(lrelu(conv1(x)))`.
pub(crate) fn res_block<T: Scalar>(g: &mut Graph<T>, b: &Binding, prefix: &str, x: Var) -> Result<Var> {
    let h = conv(g, b, &format!("{prefix}.conv1"), x, 1)?;
    let h = g.leaky_relu(h, SLOPE)?;
    let h = conv(g, b, &format!("{prefix}.conv2"), h, 1)?;
    Ok(g.add(x, h)?)
}

/// `x + trunk(x) ⊙ sigmoid(mask(x))`, trunk a conv pair, mask a 3×3 then
/// 1×1 conv.
pub(crate) fn attention_block<T: Scalar>(g: &mut Graph<T>, b: &Binding, prefix: &str, x: Var) -> Result<Var> {
    let t = conv(g, b, &format!("{prefix}.trunk1"), x, 1)?;
    let t = g.leaky_relu(t, SLOPE)?;
    let t = conv(g, b, &format!("{prefix}.trunk2"), t, 1)?;
    let m = conv(g, b, &format!("{prefix}.mask1"), x, 1)?;
    let m = g.leaky_relu(m, SLOPE)?;
    let m = conv(g, b, &format!("{prefix}.mask2"), m, 1)?;
    let m = g.sigmoid(m)?;
    let gated = g.mul(t, m)?;
    Ok(g.add(x, gated)?)
}
