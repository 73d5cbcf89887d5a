use rand::Rng;
use rayon::prelude::*;

use super::{he_uniform, join, take_cache, Mode, Module, ParamKind, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Valid,
    /// Output size `ceil(in / stride)`; zero padding split evenly with the
    /// odd element on the trailing side.
    Same,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    ic: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    pad_top: usize,
    pad_left: usize,
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    in_shape: [usize; 4],
    geom: Geometry,
    cols: Vec<Vec<T>>,
}

/// 2-D convolution via im2col + GEMM, parallel over the batch with an
/// ordered reduction of weight gradients.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    stride: usize,
    padding: Padding,
    cache: Option<ConvCache<T>>,
}

fn same_pad(len: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(len);
    (out, total / 2)
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: Padding,
        bias: bool,
    ) -> Self {
        let fan_in = in_ch * kernel.0 * kernel.1;
        let weight = Tensor::param(
            [out_ch, in_ch, kernel.0, kernel.1],
            he_uniform(rng, out_ch * fan_in, fan_in),
        );
        let bias = bias.then(|| Tensor::param([1, out_ch, 1, 1], vec![T::zero(); out_ch]));
        Self::from_params(weight, bias, stride, padding)
    }

    pub fn from_params(
        mut weight: Tensor<T>,
        bias: Option<Tensor<T>>,
        stride: usize,
        padding: Padding,
    ) -> Self {
        assert!(stride >= 1, "stride must be positive");
        weight.ensure_grad();
        let bias = bias.map(|mut b| {
            b.ensure_grad();
            b
        });
        Self {
            weight,
            bias,
            stride,
            padding,
            cache: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    fn geometry(&self, x: &Tensor<T>) -> Result<Geometry> {
        let [_, ic, h, w] = x.shape();
        let (kh, kw) = self.kernel();
        if ic != self.in_channels() {
            return Err(Error::Dimension(format!(
                "conv2d: input {:?} has {ic} channels, weight {:?} expects {}",
                x.shape(),
                self.weight.shape(),
                self.in_channels()
            )));
        }
        let s = self.stride;
        match self.padding {
            Padding::Valid => {
                if h < kh || w < kw {
                    return Err(Error::Dimension(format!(
                        "conv2d: input {:?} smaller than kernel {:?}",
                        x.shape(),
                        self.weight.shape()
                    )));
                }
                Ok(Geometry {
                    ic,
                    h,
                    w,
                    oh: (h - kh) / s + 1,
                    ow: (w - kw) / s + 1,
                    pad_top: 0,
                    pad_left: 0,
                })
            }
            Padding::Same => {
                let (oh, pad_top) = same_pad(h, kh, s);
                let (ow, pad_left) = same_pad(w, kw, s);
                Ok(Geometry {
                    ic,
                    h,
                    w,
                    oh,
                    ow,
                    pad_top,
                    pad_left,
                })
            }
        }
    }

    fn im2col(&self, g: &Geometry, x: &[T]) -> Vec<T> {
        let (kh, kw) = self.kernel();
        let p = g.oh * g.ow;
        let mut col = vec![T::zero(); g.ic * kh * kw * p];
        for c in 0..g.ic {
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (c * kh + ki) * kw + kj;
                    let dst = &mut col[row * p..(row + 1) * p];
                    for oy in 0..g.oh {
                        let iy = (oy * self.stride + ki) as isize - g.pad_top as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src = &x[(c * g.h + iy as usize) * g.w..];
                        for ox in 0..g.ow {
                            let ix = (ox * self.stride + kj) as isize - g.pad_left as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst[oy * g.ow + ox] = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, g: &Geometry, col: &[T], dx: &mut [T]) {
        let (kh, kw) = self.kernel();
        let p = g.oh * g.ow;
        for c in 0..g.ic {
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (c * kh + ki) * kw + kj;
                    let src = &col[row * p..(row + 1) * p];
                    for oy in 0..g.oh {
                        let iy = (oy * self.stride + ki) as isize - g.pad_top as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let base = (c * g.h + iy as usize) * g.w;
                        for ox in 0..g.ow {
                            let ix = (ox * self.stride + kj) as isize - g.pad_left as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dx[base + ix as usize] =
                                    dx[base + ix as usize] + src[oy * g.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let g = self.geometry(x)?;
        let oc = self.out_channels();
        let k = self.weight.len() / oc;
        let p = g.oh * g.ow;
        let n = x.n();
        let per_item: Vec<(Vec<T>, Vec<T>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let col = self.im2col(&g, x.item(i));
                let mut out = vec![T::zero(); oc * p];
                T::gemm_raw(
                    oc,
                    k,
                    p,
                    T::one(),
                    self.weight.data(),
                    k,
                    1,
                    &col,
                    p,
                    1,
                    T::zero(),
                    &mut out,
                    p,
                    1,
                );
                if let Some(b) = &self.bias {
                    for (o, &bv) in out.chunks_exact_mut(p).zip(b.data()) {
                        o.iter_mut().for_each(|v| *v = *v + bv);
                    }
                }
                (out, col)
            })
            .collect();
        let mut data = Vec::with_capacity(n * oc * p);
        let mut cols = Vec::with_capacity(n);
        for (out, col) in per_item {
            data.extend(out);
            cols.push(col);
        }
        self.cache = Some(ConvCache {
            in_shape: x.shape(),
            geom: g,
            cols,
        });
        Tensor::from_vec([n, oc, g.oh, g.ow], data)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = take_cache(&mut self.cache, "conv2d")?;
        let g = cache.geom;
        let oc = self.out_channels();
        let k = self.weight.len() / oc;
        let p = g.oh * g.ow;
        let n = cache.in_shape[0];
        dy.expect_shape([n, oc, g.oh, g.ow], "conv2d backward")?;

        let weight = self.weight.data();
        let per_item: Vec<(Vec<T>, Vec<T>, Vec<T>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let dyi = dy.item(i);
                let col = &cache.cols[i];
                let mut dw = vec![T::zero(); oc * k];
                T::gemm_raw(
                    oc,
                    p,
                    k,
                    T::one(),
                    dyi,
                    p,
                    1,
                    col,
                    1,
                    p,
                    T::zero(),
                    &mut dw,
                    k,
                    1,
                );
                let mut dcol = vec![T::zero(); k * p];
                T::gemm_raw(
                    k,
                    oc,
                    p,
                    T::one(),
                    weight,
                    1,
                    k,
                    dyi,
                    p,
                    1,
                    T::zero(),
                    &mut dcol,
                    p,
                    1,
                );
                let mut dx = vec![T::zero(); g.ic * g.h * g.w];
                self.col2im(&g, &dcol, &mut dx);
                let db = dyi
                    .chunks_exact(p)
                    .map(|r| r.iter().copied().sum())
                    .collect();
                (dw, dx, db)
            })
            .collect();

        let mut dx = Vec::with_capacity(n * g.ic * g.h * g.w);
        let wg = self.weight.ensure_grad();
        let mut db_total = vec![T::zero(); oc];
        for (dw, dxi, db) in per_item {
            for (a, b) in wg.iter_mut().zip(&dw) {
                *a = *a + *b;
            }
            for (a, b) in db_total.iter_mut().zip(&db) {
                *a = *a + *b;
            }
            dx.extend(dxi);
        }
        if let Some(b) = self.bias.as_mut() {
            for (a, v) in b.ensure_grad().iter_mut().zip(&db_total) {
                *a = *a + *v;
            }
        }
        Tensor::from_vec(cache.in_shape, dx)
    }
}

impl<T: Real> Module<T> for Conv2d<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        f(
            &join(prefix, "weight"),
            &mut self.weight,
            ParamKind::Trainable,
        );
        if let Some(b) = self.bias.as_mut() {
            f(&join(prefix, "bias"), b, ParamKind::Trainable);
        }
    }
}
