use super::{take_cache, Real, Tensor};
use crate::error::{Error, Result};

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    cache: Option<Tensor<T>>,
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = relu(x);
        self.cache = Some(x.clone());
        y
    }

    /// Subgradient 0 at the kink.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = take_cache(&mut self.cache, "relu")?;
        dy.expect_shape(x.shape(), "relu backward")?;
        let data = x
            .data()
            .iter()
            .zip(dy.data())
            .map(|(&xv, &g)| if xv > T::zero() { g } else { T::zero() })
            .collect();
        Tensor::from_vec(x.shape(), data)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid<T> {
    cache: Option<Tensor<T>>,
}

impl<T: Real> Sigmoid<T> {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = sigmoid(x);
        self.cache = Some(y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let y = take_cache(&mut self.cache, "sigmoid")?;
        dy.expect_shape(y.shape(), "sigmoid backward")?;
        let data = y
            .data()
            .iter()
            .zip(dy.data())
            .map(|(&s, &g)| g * s * (T::one() - s))
            .collect();
        Tensor::from_vec(y.shape(), data)
    }
}

/// Elementwise sum; the backward pass routes the gradient to both inputs.
pub fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    b.expect_shape(a.shape(), "add")?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x + y)
        .collect();
    Tensor::from_vec(a.shape(), data)
}

fn check_scale<T: Real>(x: &Tensor<T>, s: &Tensor<T>) -> Result<()> {
    if s.shape() != [x.n(), x.c(), 1, 1] {
        return Err(Error::Dimension(format!(
            "channel scale {:?} does not broadcast over {:?}",
            s.shape(),
            x.shape()
        )));
    }
    Ok(())
}

/// `y[n,c,h,w] = x[n,c,h,w] * s[n,c]`.
pub fn broadcast_mul_channel<T: Real>(x: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>> {
    check_scale(x, s)?;
    let hw = x.h() * x.w();
    let mut data = x.data().to_vec();
    for (plane, &sv) in data.chunks_exact_mut(hw.max(1)).zip(s.data()) {
        plane.iter_mut().for_each(|v| *v = *v * sv);
    }
    Tensor::from_vec(x.shape(), data)
}

/// Returns `(dx, ds)` for [`broadcast_mul_channel`].
pub fn broadcast_mul_channel_backward<T: Real>(
    x: &Tensor<T>,
    s: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_scale(x, s)?;
    dy.expect_shape(x.shape(), "broadcast_mul backward")?;
    let hw = x.h() * x.w();
    let dx = broadcast_mul_channel(dy, s)?;
    let ds = x
        .data()
        .chunks_exact(hw)
        .zip(dy.data().chunks_exact(hw))
        .map(|(xp, gp)| xp.iter().zip(gp).map(|(&a, &b)| a * b).sum())
        .collect();
    Ok((dx, Tensor::from_vec(s.shape(), ds)?))
}
