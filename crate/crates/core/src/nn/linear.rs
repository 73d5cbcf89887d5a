use rand::Rng;

use super::{he_uniform, join, take_cache, Mode, Module, ParamKind, Real, Tensor};
use crate::error::{Error, Result};

/// Fully connected layer over the flattened C x H x W item:
/// N x F x H x W -> N x out x 1 x 1 with `F * H * W == in`.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    /// out x in x 1 x 1
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, inputs: usize, outputs: usize) -> Self {
        Self::from_params(
            Tensor::param(
                [outputs, inputs, 1, 1],
                he_uniform(rng, outputs * inputs, inputs),
            ),
            Tensor::param([1, outputs, 1, 1], vec![T::zero(); outputs]),
        )
    }

    pub fn from_params(mut weight: Tensor<T>, mut bias: Tensor<T>) -> Self {
        weight.ensure_grad();
        bias.ensure_grad();
        Self {
            weight,
            bias,
            cache: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (n, fin, fout) = (x.n(), self.inputs(), self.outputs());
        if x.item_len() != fin {
            return Err(Error::Dimension(format!(
                "linear: input {:?} flattens to {}, expected {fin}",
                x.shape(),
                x.item_len()
            )));
        }
        let mut out = vec![T::zero(); n * fout];
        for row in out.chunks_exact_mut(fout) {
            row.copy_from_slice(self.bias.data());
        }
        T::gemm_raw(
            n,
            fin,
            fout,
            T::one(),
            x.data(),
            fin,
            1,
            self.weight.data(),
            1,
            fin,
            T::one(),
            &mut out,
            fout,
            1,
        );
        self.cache = Some(x.clone());
        Tensor::from_vec([n, fout, 1, 1], out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = take_cache(&mut self.cache, "linear")?;
        let (n, fin, fout) = (x.n(), self.inputs(), self.outputs());
        dy.expect_shape([n, fout, 1, 1], "linear backward")?;
        let wg = self.weight.ensure_grad();
        T::gemm_raw(
            fout,
            n,
            fin,
            T::one(),
            dy.data(),
            1,
            fout,
            x.data(),
            fin,
            1,
            T::one(),
            wg,
            fin,
            1,
        );
        let bg = self.bias.ensure_grad();
        for row in dy.data().chunks_exact(fout) {
            for (b, &g) in bg.iter_mut().zip(row) {
                *b = *b + g;
            }
        }
        let mut dx = vec![T::zero(); n * fin];
        T::gemm_raw(
            n,
            fout,
            fin,
            T::one(),
            dy.data(),
            fout,
            1,
            self.weight.data(),
            fin,
            1,
            T::zero(),
            &mut dx,
            fin,
            1,
        );
        Tensor::from_vec(x.shape(), dx)
    }
}

impl<T: Real> Module<T> for Linear<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        f(
            &join(prefix, "weight"),
            &mut self.weight,
            ParamKind::Trainable,
        );
        f(&join(prefix, "bias"), &mut self.bias, ParamKind::Trainable);
    }
}
