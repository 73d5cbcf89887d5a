use super::{take_cache, Real, Tensor};
use crate::error::Result;

/// Mean over H x W per channel: N x C x H x W -> N x C x 1 x 1.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let hw = x.h() * x.w();
    let inv = T::one() / T::lit(hw as f64);
    let data = x
        .data()
        .chunks_exact(hw)
        .map(|p| p.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::from_vec([x.n(), x.c(), 1, 1], data).expect("pooled shape")
}

/// Spreads each pooled gradient as `g / (H W)` over its plane.
pub fn global_avg_pool_backward<T: Real>(
    in_shape: [usize; 4],
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    dy.expect_shape([in_shape[0], in_shape[1], 1, 1], "gap backward")?;
    let hw = in_shape[2] * in_shape[3];
    let inv = T::one() / T::lit(hw as f64);
    let mut data = Vec::with_capacity(in_shape.iter().product());
    for &g in dy.data() {
        data.extend(std::iter::repeat_n(g * inv, hw));
    }
    Tensor::from_vec(in_shape, data)
}

#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    in_shape: Option<[usize; 4]>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self { in_shape: None }
    }

    pub fn forward<T: Real>(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.in_shape = Some(x.shape());
        global_avg_pool(x)
    }

    pub fn backward<T: Real>(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = take_cache(&mut self.in_shape, "global_avg_pool")?;
        global_avg_pool_backward(shape, dy)
    }
}
