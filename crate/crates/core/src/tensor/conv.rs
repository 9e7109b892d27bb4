//! Direct convolution kernels.
//!
//! A strided convolution relates a "wide" plane (the convolution input) to
//! a "narrow" plane (its output) through `wide = narrow * stride + tap - pad`.
//! The three kernels below cover every pass we need:
//!
//! | kernel          | conv2d use          | conv_transpose2d use |
//! |-----------------|---------------------|----------------------|
//! | [`gather`]      | forward             | input gradient       |
//! | [`scatter`]     | input gradient      | forward              |
//! | [`weight_grad`] | weight gradient     | weight gradient      |
//!
//! Loops run in a fixed order, so results are bitwise reproducible.

use std::ops::Range;

use crate::scalar::Scalar;

/// Geometry shared by both sides of a convolution. Weight layout is
/// `narrow_c × wide_c × k × k` (the PyTorch layout for `conv2d`; for
/// `conv_transpose2d` the same buffer reads as `in_c × out_c × k × k`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub wide_c: usize,
    pub wide_h: usize,
    pub wide_w: usize,
    pub narrow_c: usize,
    pub narrow_h: usize,
    pub narrow_w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvDims {
    pub fn wide_len(&self) -> usize {
        self.wide_c * self.wide_h * self.wide_w
    }

    pub fn narrow_len(&self) -> usize {
        self.narrow_c * self.narrow_h * self.narrow_w
    }

    pub fn weight_len(&self) -> usize {
        self.narrow_c * self.wide_c * self.k * self.k
    }
}

/// Output length of a convolution along one axis.
pub fn conv_out_len(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (n + 2 * pad).checked_sub(k).map(|span| span / stride + 1)
}

/// Output length of a transposed convolution along one axis.
pub fn conv_transpose_out_len(n: usize, k: usize, stride: usize, pad: usize, output_pad: usize) -> Option<usize> {
    if n == 0 {
        return None;
    }
    ((n - 1) * stride + k + output_pad).checked_sub(2 * pad).filter(|&len| len > 0)
}

/// Narrow indices `o` whose wide index `o*stride + tap - pad` is in bounds.
#[inline]
fn valid(tap: usize, stride: usize, pad: usize, wide: usize, narrow: usize) -> Range<usize> {
    let lo = if pad > tap { (pad - tap).div_ceil(stride) } else { 0 };
    let hi = if wide + pad > tap { ((wide - 1 + pad - tap) / stride + 1).min(narrow) } else { 0 };
    lo..hi.max(lo)
}

/// `narrow[co] = bias[co] + Σ_{ci,kh,kw} w[co,ci,kh,kw] · wide[ci, ·]`.
pub fn gather<T: Scalar>(d: &ConvDims, wide: &[T], weight: &[T], bias: Option<&[T]>, narrow: &mut [T]) {
    debug_assert_eq!(wide.len(), d.wide_len());
    debug_assert_eq!(narrow.len(), d.narrow_len());
    let (wplane, nplane, kk) = (d.wide_h * d.wide_w, d.narrow_h * d.narrow_w, d.k * d.k);
    for co in 0..d.narrow_c {
        let out = &mut narrow[co * nplane..(co + 1) * nplane];
        out.fill(bias.map_or(T::zero(), |b| b[co]));
        for ci in 0..d.wide_c {
            let src = &wide[ci * wplane..(ci + 1) * wplane];
            let taps = &weight[(co * d.wide_c + ci) * kk..(co * d.wide_c + ci + 1) * kk];
            for kh in 0..d.k {
                let rows = valid(kh, d.stride, d.pad, d.wide_h, d.narrow_h);
                for kw in 0..d.k {
                    let w = taps[kh * d.k + kw];
                    if w == T::zero() {
                        continue;
                    }
                    let cols = valid(kw, d.stride, d.pad, d.wide_w, d.narrow_w);
                    if cols.is_empty() {
                        continue;
                    }
                    for oh in rows.clone() {
                        let ih = oh * d.stride + kh - d.pad;
                        let src_row = &src[ih * d.wide_w..(ih + 1) * d.wide_w];
                        let dst_row = &mut out[oh * d.narrow_w..(oh + 1) * d.narrow_w];
                        let first = cols.start * d.stride + kw - d.pad;
                        if d.stride == 1 {
                            let n = cols.len();
                            for (o, &i) in dst_row[cols.clone()].iter_mut().zip(&src_row[first..first + n]) {
                                *o += w * i;
                            }
                        } else {
                            for (o, &i) in dst_row[cols.clone()].iter_mut().zip(src_row[first..].iter().step_by(d.stride)) {
                                *o += w * i;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `wide[ci, ·] += Σ_{co,kh,kw} w[co,ci,kh,kw] · narrow[co]` (adjoint of [`gather`]).
pub fn scatter<T: Scalar>(d: &ConvDims, narrow: &[T], weight: &[T], wide: &mut [T]) {
    debug_assert_eq!(wide.len(), d.wide_len());
    debug_assert_eq!(narrow.len(), d.narrow_len());
    let (wplane, nplane, kk) = (d.wide_h * d.wide_w, d.narrow_h * d.narrow_w, d.k * d.k);
    for co in 0..d.narrow_c {
        let src = &narrow[co * nplane..(co + 1) * nplane];
        for ci in 0..d.wide_c {
            let dst = &mut wide[ci * wplane..(ci + 1) * wplane];
            let taps = &weight[(co * d.wide_c + ci) * kk..(co * d.wide_c + ci + 1) * kk];
            for kh in 0..d.k {
                let rows = valid(kh, d.stride, d.pad, d.wide_h, d.narrow_h);
                for kw in 0..d.k {
                    let w = taps[kh * d.k + kw];
                    if w == T::zero() {
                        continue;
                    }
                    let cols = valid(kw, d.stride, d.pad, d.wide_w, d.narrow_w);
                    if cols.is_empty() {
                        continue;
                    }
                    for oh in rows.clone() {
                        let ih = oh * d.stride + kh - d.pad;
                        let src_row = &src[oh * d.narrow_w..(oh + 1) * d.narrow_w];
                        let dst_row = &mut dst[ih * d.wide_w..(ih + 1) * d.wide_w];
                        let first = cols.start * d.stride + kw - d.pad;
                        if d.stride == 1 {
                            let n = cols.len();
                            for (o, &g) in dst_row[first..first + n].iter_mut().zip(&src_row[cols.clone()]) {
                                *o += w * g;
                            }
                        } else {
                            for (o, &g) in dst_row[first..].iter_mut().step_by(d.stride).zip(&src_row[cols.clone()]) {
                                *o += w * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `gw[co,ci,kh,kw] += Σ_{oh,ow} narrow[co,oh,ow] · wide[ci, oh·s+kh−p, ow·s+kw−p]`.
pub fn weight_grad<T: Scalar>(d: &ConvDims, wide: &[T], narrow: &[T], gw: &mut [T]) {
    debug_assert_eq!(gw.len(), d.weight_len());
    let (wplane, nplane, kk) = (d.wide_h * d.wide_w, d.narrow_h * d.narrow_w, d.k * d.k);
    for co in 0..d.narrow_c {
        let g = &narrow[co * nplane..(co + 1) * nplane];
        for ci in 0..d.wide_c {
            let src = &wide[ci * wplane..(ci + 1) * wplane];
            let taps = &mut gw[(co * d.wide_c + ci) * kk..(co * d.wide_c + ci + 1) * kk];
            for kh in 0..d.k {
                let rows = valid(kh, d.stride, d.pad, d.wide_h, d.narrow_h);
                for kw in 0..d.k {
                    let cols = valid(kw, d.stride, d.pad, d.wide_w, d.narrow_w);
                    if cols.is_empty() {
                        continue;
                    }
                    let mut acc = T::zero();
                    for oh in rows.clone() {
                        let ih = oh * d.stride + kh - d.pad;
                        let src_row = &src[ih * d.wide_w..(ih + 1) * d.wide_w];
                        let g_row = &g[oh * d.narrow_w..(oh + 1) * d.narrow_w];
                        let first = cols.start * d.stride + kw - d.pad;
                        if d.stride == 1 {
                            let n = cols.len();
                            for (&a, &b) in g_row[cols.clone()].iter().zip(&src_row[first..first + n]) {
                                acc += a * b;
                            }
                        } else {
                            for (&a, &b) in g_row[cols.clone()].iter().zip(src_row[first..].iter().step_by(d.stride)) {
                                acc += a * b;
                            }
                        }
                    }
                    taps[kh * d.k + kw] += acc;
                }
            }
        }
    }
}

/// Per-channel sum of a narrow-side plane, i.e. the bias gradient.
pub fn bias_grad<T: Scalar>(channels: usize, plane: usize, g: &[T], gb: &mut [T]) {
    for (c, b) in gb.iter_mut().enumerate().take(channels) {
        let mut acc = T::zero();
        for &v in &g[c * plane..(c + 1) * plane] {
            acc += v;
        }
        *b += acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_lengths() {
        assert_eq!(conv_out_len(64, 3, 2, 1), Some(32));
        assert_eq!(conv_out_len(3, 3, 1, 1), Some(3));
        assert_eq!(conv_out_len(2, 5, 1, 0), None);
        assert_eq!(conv_transpose_out_len(32, 3, 2, 1, 1), Some(64));
        assert_eq!(conv_transpose_out_len(1, 2, 2, 0, 0), Some(2));
    }

    #[test]
    fn valid_ranges_stay_in_bounds() {
        for wide in 1..12 {
            for k in [1usize, 3, 5] {
                for stride in [1usize, 2] {
                    for pad in 0..=k / 2 {
                        let Some(narrow) = conv_out_len(wide, k, stride, pad) else { continue };
                        for tap in 0..k {
                            let r = valid(tap, stride, pad, wide, narrow);
                            for o in 0..narrow {
                                let i = (o * stride + tap) as isize - pad as isize;
                                let inside = i >= 0 && (i as usize) < wide;
                                assert_eq!(r.contains(&o), inside, "wide={wide} k={k} s={stride} p={pad} tap={tap} o={o}");
                            }
                        }
                    }
                }
            }
        }
    }
}
