//! A small convolutional VAE with hand-written reverse-mode gradients.
//!
//! Layouts are NHWC throughout. Every layer is generic over [`Real`] so the
//! same code trains in `f32` and is gradient-checked in `f64`.

use alloc::vec::Vec;

use crate::math::Real;
use crate::{Error, Result};

mod adam;
mod layers;
mod train;
mod vae;

pub use adam::{AdamConfig, AdamState};
pub use layers::{relu, relu_backward, Conv2d, ConvTranspose2d, Dense, KERNEL, PADDING, STRIDE};
pub use train::{train, EpochStats, TrainConfig, TrainHistory};
pub use vae::{
    latent_sample, reparameterize, standard_normal, vae_loss, vae_loss_grads, DecoderTrace,
    EncoderTrace, VaeLoss, VaeModel, FC_WIDTH, IMAGE_CHANNELS, LATENT_DIM, LOGVAR_CLAMP,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: alloc::vec![T::ZERO; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Raises on the first NaN or infinity.
    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// Same data under a new shape of equal size.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Rows `[start, start+count)` along the leading axis.
    pub fn rows(&self, start: usize, count: usize) -> Self {
        let stride: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = count;
        Self {
            shape,
            data: self.data[start * stride..(start + count) * stride].to_vec(),
        }
    }
}
