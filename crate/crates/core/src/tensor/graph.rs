//! Tape-based reverse-mode autodiff.
//!
//! Nodes are appended in evaluation order, so the tape index is already a
//! topological order and backward is a single reverse sweep.

use super::conv::{self, ConvDims};
use super::{shape_err, Result, Tensor, TensorError};
use crate::scalar::Scalar;
use crate::stats;

/// Handle to a node of one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Conv { x: Var, w: Var, b: Option<Var>, dims: ConvDims },
    ConvTranspose { x: Var, w: Var, b: Option<Var>, dims: ConvDims },
    LeakyRelu { x: Var, slope: T },
    Sigmoid { x: Var },
    Softplus { x: Var },
    LowerBound { x: Var, bound: T },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: T },
    MulChannel { x: Var, s: Var },
    Concat { xs: Vec<Var> },
    Slice { x: Var, start: usize },
    Reshape { x: Var },
    AvgPool { x: Var },
    MaxPool { x: Var, argmax: Vec<usize> },
    Broadcast { v: Var },
    Mse { a: Var, b: Var },
    Sum { x: Var },
    GaussianRate { y: Var, mu: Var, sigma: Var },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Conv { x, w, b, .. } | ConvTranspose { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            LeakyRelu { x, .. }
            | Sigmoid { x }
            | Softplus { x }
            | LowerBound { x, .. }
            | Scale { x, .. }
            | Slice { x, .. }
            | Reshape { x }
            | AvgPool { x }
            | MaxPool { x, .. }
            | Sum { x } => vec![*x],
            Broadcast { v } => vec![*v],
            Add { a, b } | Sub { a, b } | Mul { a, b } | Mse { a, b } => vec![*a, *b],
            MulChannel { x, s } => vec![*x, *s],
            Concat { xs } => xs.clone(),
            GaussianRate { y, mu, sigma } => vec![*y, *mu, *sigma],
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Computation tape. Leaves hold parameters and inputs; gradients of
/// `requires_grad` leaves accumulate in their [`Tensor::grad`] buffers.
#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf; it is differentiated iff `t.requires_grad`.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let needs_grad = t.requires_grad;
        self.push(t, Op::Leaf, needs_grad)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_requires_grad(true))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.grad = None;
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, vars: &[Var]) -> Result<()> {
        match vars.iter().find(|v| v.0 >= self.nodes.len()) {
            Some(v) => Err(TensorError::Invalid(format!("variable {} does not belong to this graph", v.0))),
            None => Ok(()),
        }
    }

    fn derived(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let needs_grad = op.inputs().iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(value, op, needs_grad)
    }

    fn chw(&self, op: &'static str, v: Var) -> Result<(usize, usize, usize)> {
        match self.shape(v) {
            &[c, h, w] => Ok((c, h, w)),
            s => Err(shape_err(op, format!("expected a C×H×W input, got shape {s:?}"))),
        }
    }

    fn conv_weight(&self, op: &'static str, w: Var) -> Result<(usize, usize, usize)> {
        match self.shape(w) {
            &[a, b, k, k2] if k == k2 => Ok((a, b, k)),
            s => Err(shape_err(op, format!("weight must be A×B×k×k, got shape {s:?}"))),
        }
    }

    fn check_bias(&self, op: &'static str, b: Option<Var>, channels: usize) -> Result<()> {
        if let Some(b) = b {
            if self.shape(b) != [channels] {
                return Err(shape_err(op, format!("bias shape {:?} does not match {channels} output channels", self.shape(b))));
            }
        }
        Ok(())
    }

    /// 2-D convolution of a C_in×H×W input with a C_out×C_in×k×k weight.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        const OP: &str = "conv2d";
        self.check(&[x, w])?;
        self.check(&b.into_iter().collect::<Vec<_>>())?;
        let (c_in, h, wd) = self.chw(OP, x)?;
        let (c_out, wc_in, k) = self.conv_weight(OP, w)?;
        if wc_in != c_in {
            return Err(shape_err(OP, format!("input channel dimension is {c_in} but weight expects {wc_in}")));
        }
        if !(1..=2).contains(&stride) {
            return Err(shape_err(OP, format!("stride must be 1 or 2, got {stride}")));
        }
        if k % 2 == 0 {
            return Err(shape_err(OP, format!("kernel size must be odd, got {k}")));
        }
        let oh = conv::conv_out_len(h, k, stride, padding)
            .ok_or_else(|| shape_err(OP, format!("height {h} is smaller than kernel {k} with padding {padding}")))?;
        let ow = conv::conv_out_len(wd, k, stride, padding)
            .ok_or_else(|| shape_err(OP, format!("width {wd} is smaller than kernel {k} with padding {padding}")))?;
        self.check_bias(OP, b, c_out)?;
        let dims = ConvDims { wide_c: c_in, wide_h: h, wide_w: wd, narrow_c: c_out, narrow_h: oh, narrow_w: ow, k, stride, pad: padding };
        let mut out = vec![T::zero(); dims.narrow_len()];
        conv::gather(&dims, self.value(x).data(), self.value(w).data(), b.map(|b| self.value(b).data()), &mut out);
        let value = Tensor::new(vec![c_out, oh, ow], out)?;
        Ok(self.derived(value, Op::Conv { x, w, b, dims }))
    }

    /// Transposed convolution; weight layout C_in×C_out×k×k.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        self.conv_transpose2d_padded(x, w, b, stride, padding, [output_padding; 2])
    }

    /// Transposed convolution producing exactly `out_h × out_w`; the
    /// per-axis output padding is inferred and must be below `stride`.
    pub fn conv_transpose2d_to(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
        out_h: usize,
        out_w: usize,
    ) -> Result<Var> {
        const OP: &str = "conv_transpose2d";
        self.check(&[x, w])?;
        let (_, h, wd) = self.chw(OP, x)?;
        let (_, _, k) = self.conv_weight(OP, w)?;
        let base = |n: usize| conv::conv_transpose_out_len(n, k, stride, padding, 0).unwrap_or(0);
        let pad_for = |n: usize, target: usize, axis: &str| {
            target
                .checked_sub(base(n))
                .filter(|&p| p < stride)
                .ok_or_else(|| shape_err(OP, format!("{axis} {n} cannot be upsampled to {target} with stride {stride}")))
        };
        let op = [pad_for(h, out_h, "height")?, pad_for(wd, out_w, "width")?];
        self.conv_transpose2d_padded(x, w, b, stride, padding, op)
    }

    fn conv_transpose2d_padded(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
        output_padding: [usize; 2],
    ) -> Result<Var> {
        const OP: &str = "conv_transpose2d";
        self.check(&[x, w])?;
        self.check(&b.into_iter().collect::<Vec<_>>())?;
        let (c_in, h, wd) = self.chw(OP, x)?;
        let (wc_in, c_out, k) = self.conv_weight(OP, w)?;
        if wc_in != c_in {
            return Err(shape_err(OP, format!("input channel dimension is {c_in} but weight expects {wc_in}")));
        }
        if !(1..=2).contains(&stride) {
            return Err(shape_err(OP, format!("stride must be 1 or 2, got {stride}")));
        }
        if let Some(&op) = output_padding.iter().find(|&&op| op >= stride) {
            return Err(shape_err(OP, format!("output_padding {op} must be smaller than stride {stride}")));
        }
        let oh = conv::conv_transpose_out_len(h, k, stride, padding, output_padding[0])
            .ok_or_else(|| shape_err(OP, format!("height {h} yields an empty output")))?;
        let ow = conv::conv_transpose_out_len(wd, k, stride, padding, output_padding[1])
            .ok_or_else(|| shape_err(OP, format!("width {wd} yields an empty output")))?;
        self.check_bias(OP, b, c_out)?;
        let dims = ConvDims { wide_c: c_out, wide_h: oh, wide_w: ow, narrow_c: c_in, narrow_h: h, narrow_w: wd, k, stride, pad: padding };
        let mut out = vec![T::zero(); dims.wide_len()];
        if let Some(b) = b {
            let plane = oh * ow;
            for (c, &bv) in self.value(b).data().iter().enumerate() {
                out[c * plane..(c + 1) * plane].fill(bv);
            }
        }
        conv::scatter(&dims, self.value(x).data(), self.value(w).data(), &mut out);
        let value = Tensor::new(vec![c_out, oh, ow], out)?;
        Ok(self.derived(value, Op::ConvTranspose { x, w, b, dims }))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.check(&[x])?;
        let s = T::from_f64_lossy(slope);
        let value = self.value(x).map(|v| if v > T::zero() { v } else { v * s });
        Ok(self.derived(value, Op::LeakyRelu { x, slope: s }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let value = self.value(x).map(sigmoid);
        Ok(self.derived(value, Op::Sigmoid { x }))
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let value = self.value(x).map(softplus);
        Ok(self.derived(value, Op::Softplus { x }))
    }

    /// `max(x, bound)`; the gradient flows only where `x > bound`.
    pub fn lower_bound(&mut self, x: Var, bound: f64) -> Result<Var> {
        self.check(&[x])?;
        let b = T::from_f64_lossy(bound);
        let value = self.value(x).map(|v| v.max(b));
        Ok(self.derived(value, Op::LowerBound { x, bound: b }))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        self.check(&[a, b])?;
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip_values(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        Tensor::new(ta.shape().to_vec(), ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.zip_values(a, b, |x, y| x + y)?;
        Ok(self.derived(value, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.zip_values(a, b, |x, y| x - y)?;
        Ok(self.derived(value, Op::Sub { a, b }))
    }

    /// Elementwise product of same-shape operands.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.zip_values(a, b, |x, y| x * y)?;
        Ok(self.derived(value, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.check(&[x])?;
        let c = T::from_f64_lossy(c);
        let value = self.value(x).map(|v| v * c);
        Ok(self.derived(value, Op::Scale { x, c }))
    }

    /// C×H×W feature map times a length-C channel vector.
    pub fn mul_channel(&mut self, x: Var, s: Var) -> Result<Var> {
        const OP: &str = "mul_channel";
        self.check(&[x, s])?;
        let (c, h, w) = self.chw(OP, x)?;
        if self.shape(s) != [c] {
            return Err(shape_err(OP, format!("scale vector shape {:?} does not match {c} channels", self.shape(s))));
        }
        let plane = h * w;
        let sv = self.value(s).data();
        let data = self.value(x).data().iter().enumerate().map(|(i, &v)| v * sv[i / plane]).collect();
        let value = Tensor::new(vec![c, h, w], data)?;
        Ok(self.derived(value, Op::MulChannel { x, s }))
    }

    /// Concatenation along the channel axis.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        const OP: &str = "concat_channels";
        self.check(xs)?;
        let Some(&first) = xs.first() else {
            return Err(shape_err(OP, "no operands"));
        };
        let (_, h, w) = self.chw(OP, first)?;
        let mut channels = 0;
        let mut data = Vec::new();
        for &x in xs {
            let (c, xh, xw) = self.chw(OP, x)?;
            if (xh, xw) != (h, w) {
                return Err(shape_err(OP, format!("spatial size {xh}×{xw} does not match {h}×{w}")));
            }
            channels += c;
            data.extend_from_slice(self.value(x).data());
        }
        let value = Tensor::new(vec![channels, h, w], data)?;
        Ok(self.derived(value, Op::Concat { xs: xs.to_vec() }))
    }

    /// Channels `start..start+len` of a C×H×W tensor.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        const OP: &str = "slice_channels";
        self.check(&[x])?;
        let (c, h, w) = self.chw(OP, x)?;
        if start + len > c || len == 0 {
            return Err(shape_err(OP, format!("channels {start}..{} out of range for {c}", start + len)));
        }
        let plane = h * w;
        let data = self.value(x).data()[start * plane..(start + len) * plane].to_vec();
        let value = Tensor::new(vec![len, h, w], data)?;
        Ok(self.derived(value, Op::Slice { x, start }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check(&[x])?;
        let value = self.value(x).clone().with_requires_grad(false).reshape(shape.to_vec())?;
        Ok(self.derived(value, Op::Reshape { x }))
    }

    /// C×H×W → C, mean over each channel.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.chw("global_avg_pool", x)?;
        let n = T::from_usize(h * w).unwrap_or_else(T::one);
        let t = self.value(x);
        let data = (0..c).map(|ch| t.channel(ch).iter().copied().fold(T::zero(), |a, v| a + v) / n).collect();
        let value = Tensor::new(vec![c], data)?;
        Ok(self.derived(value, Op::AvgPool { x }))
    }

    /// C×H×W → C, maximum over each channel. Ties go to the first element
    /// in row-major order.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var> {
        let (c, _, _) = self.chw("global_max_pool", x)?;
        let t = self.value(x);
        let mut argmax = Vec::with_capacity(c);
        let mut data = Vec::with_capacity(c);
        for ch in 0..c {
            let plane = t.channel(ch);
            let mut best = 0;
            for (i, &v) in plane.iter().enumerate() {
                if v > plane[best] {
                    best = i;
                }
            }
            argmax.push(best);
            data.push(plane[best]);
        }
        let value = Tensor::new(vec![c], data)?;
        Ok(self.derived(value, Op::MaxPool { x, argmax }))
    }

    /// Length-C vector → C×H×W, constant over each channel.
    pub fn broadcast_channels(&mut self, v: Var, h: usize, w: usize) -> Result<Var> {
        self.check(&[v])?;
        let &[c] = self.shape(v) else {
            return Err(shape_err("broadcast_channels", format!("expected a vector, got {:?}", self.shape(v))));
        };
        let src = self.value(v).data();
        let data = (0..c * h * w).map(|i| src[i / (h * w)]).collect();
        let value = Tensor::new(vec![c, h, w], data)?;
        Ok(self.derived(value, Op::Broadcast { v }))
    }

    /// Mean squared error, a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (ta, tb) = (self.value(a).data(), self.value(b).data());
        let acc = compensated_sum(ta.iter().zip(tb).map(|(&x, &y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        }));
        let n = ta.len().max(1) as f64;
        Ok(self.derived(Tensor::scalar(T::from_f64_lossy(acc / n)), Op::Mse { a, b }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let acc = compensated_sum(self.value(x).data().iter().map(|v| v.to_f64_lossy()));
        Ok(self.derived(Tensor::scalar(T::from_f64_lossy(acc)), Op::Sum { x }))
    }

    /// Total bits `Σ −log2 P(y_i)` where `P` is the unit-bin mass of
    /// `N(mu_i, sigma_i²)` floored at 2⁻¹⁶.
    pub fn gaussian_rate(&mut self, y: Var, mu: Var, sigma: Var) -> Result<Var> {
        self.same_shape("gaussian_rate", y, mu)?;
        self.same_shape("gaussian_rate", y, sigma)?;
        let (ty, tm, ts) = (self.value(y).data(), self.value(mu).data(), self.value(sigma).data());
        if let Some(i) = ts.iter().position(|s| s.to_f64_lossy() < stats::SIGMA_MIN * (1.0 - 1e-6)) {
            return Err(TensorError::Invalid(format!("gaussian_rate: sigma {} below lower bound at index {i}", ts[i])));
        }
        let bits = compensated_sum(
            (0..ty.len()).map(|i| stats::rate_term(ty[i].to_f64_lossy() - tm[i].to_f64_lossy(), ts[i].to_f64_lossy()).bits),
        );
        Ok(self.derived(Tensor::scalar(T::from_f64_lossy(bits)), Op::GaussianRate { y, mu, sigma }))
    }

    /// Reverse sweep from a scalar `loss`, accumulating into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(&[loss])?;
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NotScalar(self.shape(loss).to_vec()));
        }
        for (i, n) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let Some(bad) = n.op.inputs().into_iter().find(|v| v.0 >= i) {
                return Err(TensorError::Cycle { node: i, input: bad.0 });
            }
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                self.nodes[i].value.accumulate_grad(&g)?;
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let mut send = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let n = self.nodes[v.0].value.numel();
            let buf = grads[v.0].get_or_insert_with(|| vec![T::zero(); n]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, w, b, dims } => {
                let (xv, wv) = (self.value(*x).data(), self.value(*w).data());
                send(*x, &mut |buf| conv::scatter(dims, g, wv, buf));
                send(*w, &mut |buf| conv::weight_grad(dims, xv, g, buf));
                if let Some(b) = b {
                    send(*b, &mut |buf| conv::bias_grad(dims.narrow_c, dims.narrow_h * dims.narrow_w, g, buf));
                }
            }
            Op::ConvTranspose { x, w, b, dims } => {
                let (xv, wv) = (self.value(*x).data(), self.value(*w).data());
                send(*x, &mut |buf| {
                    let mut tmp = vec![T::zero(); buf.len()];
                    conv::gather(dims, g, wv, None, &mut tmp);
                    buf.iter_mut().zip(tmp).for_each(|(a, t)| *a += t);
                });
                send(*w, &mut |buf| conv::weight_grad(dims, g, xv, buf));
                if let Some(b) = b {
                    send(*b, &mut |buf| conv::bias_grad(dims.wide_c, dims.wide_h * dims.wide_w, g, buf));
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x).data();
                send(*x, &mut |buf| {
                    for ((a, &gi), &v) in buf.iter_mut().zip(g).zip(xv) {
                        *a += if v > T::zero() { gi } else { gi * *slope };
                    }
                });
            }
            Op::Sigmoid { x } => {
                let yv = node.value.data();
                send(*x, &mut |buf| {
                    for ((a, &gi), &y) in buf.iter_mut().zip(g).zip(yv) {
                        *a += gi * y * (T::one() - y);
                    }
                });
            }
            Op::Softplus { x } => {
                let xv = self.value(*x).data();
                send(*x, &mut |buf| {
                    for ((a, &gi), &v) in buf.iter_mut().zip(g).zip(xv) {
                        *a += gi * sigmoid(v);
                    }
                });
            }
            Op::LowerBound { x, bound } => {
                let xv = self.value(*x).data();
                send(*x, &mut |buf| {
                    for ((a, &gi), &v) in buf.iter_mut().zip(g).zip(xv) {
                        if v > *bound {
                            *a += gi;
                        }
                    }
                });
            }
            Op::Add { a, b } => {
                send(*a, &mut |buf| buf.iter_mut().zip(g).for_each(|(t, &gi)| *t += gi));
                send(*b, &mut |buf| buf.iter_mut().zip(g).for_each(|(t, &gi)| *t += gi));
            }
            Op::Sub { a, b } => {
                send(*a, &mut |buf| buf.iter_mut().zip(g).for_each(|(t, &gi)| *t += gi));
                send(*b, &mut |buf| buf.iter_mut().zip(g).for_each(|(t, &gi)| *t -= gi));
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                send(*a, &mut |buf| {
                    for ((t, &gi), &o) in buf.iter_mut().zip(g).zip(bv) {
                        *t += gi * o;
                    }
                });
                send(*b, &mut |buf| {
                    for ((t, &gi), &o) in buf.iter_mut().zip(g).zip(av) {
                        *t += gi * o;
                    }
                });
            }
            Op::Scale { x, c } => {
                send(*x, &mut |buf| buf.iter_mut().zip(g).for_each(|(t, &gi)| *t += gi * *c));
            }
            Op::MulChannel { x, s } => {
                let (xv, sv) = (self.value(*x).data(), self.value(*s).data());
                let plane = xv.len() / sv.len().max(1);
                send(*x, &mut |buf| {
                    for (i, (t, &gi)) in buf.iter_mut().zip(g).enumerate() {
                        *t += gi * sv[i / plane];
                    }
                });
                send(*s, &mut |buf| {
                    for (c, t) in buf.iter_mut().enumerate() {
                        let mut acc = T::zero();
                        for i in c * plane..(c + 1) * plane {
                            acc += g[i] * xv[i];
                        }
                        *t += acc;
                    }
                });
            }
            Op::Concat { xs } => {
                let mut offset = 0;
                for &x in xs {
                    let n = self.value(x).numel();
                    let part = &g[offset..offset + n];
                    send(x, &mut |buf| buf.iter_mut().zip(part).for_each(|(t, &gi)| *t += gi));
                    offset += n;
                }
            }
            Op::Slice { x, start } => {
                let plane = node.value.shape()[1] * node.value.shape()[2];
                let off = start * plane;
                send(*x, &mut |buf| buf[off..off + g.len()].iter_mut().zip(g).for_each(|(t, &gi)| *t += gi));
            }
            Op::Reshape { x } => {
                send(*x, &mut |buf| buf.iter_mut().zip(g).for_each(|(t, &gi)| *t += gi));
            }
            Op::AvgPool { x } => {
                let shape = self.shape(*x);
                let plane = shape[1] * shape[2];
                let n = T::from_usize(plane).unwrap_or_else(T::one);
                send(*x, &mut |buf| {
                    for (i, t) in buf.iter_mut().enumerate() {
                        *t += g[i / plane] / n;
                    }
                });
            }
            Op::MaxPool { x, argmax } => {
                let shape = self.shape(*x);
                let plane = shape[1] * shape[2];
                send(*x, &mut |buf| {
                    for (c, &idx) in argmax.iter().enumerate() {
                        buf[c * plane + idx] += g[c];
                    }
                });
            }
            Op::Broadcast { v } => {
                let plane = node.value.numel() / self.value(*v).numel().max(1);
                send(*v, &mut |buf| {
                    for (c, t) in buf.iter_mut().enumerate() {
                        let mut acc = T::zero();
                        for &gi in &g[c * plane..(c + 1) * plane] {
                            acc += gi;
                        }
                        *t += acc;
                    }
                });
            }
            Op::Mse { a, b } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let k = T::from_f64_lossy(2.0 / av.len().max(1) as f64) * g[0];
                send(*a, &mut |buf| {
                    for (t, (&x, &y)) in buf.iter_mut().zip(av.iter().zip(bv)) {
                        *t += k * (x - y);
                    }
                });
                send(*b, &mut |buf| {
                    for (t, (&x, &y)) in buf.iter_mut().zip(av.iter().zip(bv)) {
                        *t -= k * (x - y);
                    }
                });
            }
            Op::Sum { x } => {
                send(*x, &mut |buf| buf.iter_mut().for_each(|t| *t += g[0]));
            }
            Op::GaussianRate { y, mu, sigma } => {
                let (yv, mv, sv) = (self.value(*y).data(), self.value(*mu).data(), self.value(*sigma).data());
                let gout = g[0].to_f64_lossy();
                let terms: Vec<stats::RateTerm> = (0..yv.len())
                    .map(|i| stats::rate_term(yv[i].to_f64_lossy() - mv[i].to_f64_lossy(), sv[i].to_f64_lossy()))
                    .collect();
                send(*y, &mut |buf| {
                    for (t, r) in buf.iter_mut().zip(&terms) {
                        *t += T::from_f64_lossy(gout * r.d_offset);
                    }
                });
                send(*mu, &mut |buf| {
                    for (t, r) in buf.iter_mut().zip(&terms) {
                        *t -= T::from_f64_lossy(gout * r.d_offset);
                    }
                });
                send(*sigma, &mut |buf| {
                    for (t, r) in buf.iter_mut().zip(&terms) {
                        *t += T::from_f64_lossy(gout * r.d_sigma);
                    }
                });
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub(crate) fn softplus<T: Scalar>(v: T) -> T {
    // ln(1+eˣ) = max(x,0) + ln(1+e^{-|x|})
    v.max(T::zero()) + (-v.abs()).exp().ln_1p()
}

/// Neumaier-compensated sum in `f64`: scalar reductions over whole images
/// stay accurate to a few ulps regardless of length.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        c += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + c
}
