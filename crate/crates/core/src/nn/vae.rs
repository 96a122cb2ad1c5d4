//! The VAE: two stride-2 convolutions and a dense layer down to 16 means and
//! 16 log-variances, and the mirrored decoder back to 16×16 logits.

use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use super::layers::{relu, relu_backward, Conv2d, ConvTranspose2d, Dense, KERNEL, STRIDE};
use super::Tensor;
use crate::codec::IMAGE_SIZE;
use crate::math::Real;
use crate::{Error, Result};

pub const LATENT_DIM: usize = 16;
/// Width of the encoder's last dense layer: means and log-variances.
pub const FC_WIDTH: usize = 2 * LATENT_DIM;
pub const IMAGE_CHANNELS: usize = 1;
/// Log-variances are clamped to `[−20, 20]`.
pub const LOGVAR_CLAMP: f64 = 20.0;

const CH1: usize = 8;
const CH2: usize = 16;
const BOTTLENECK: usize = IMAGE_SIZE / (STRIDE * STRIDE);
const FLAT: usize = BOTTLENECK * BOTTLENECK * CH2;

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub enc_fc: Dense<T>,
    pub dec_fc: Dense<T>,
    pub tconv1: ConvTranspose2d<T>,
    pub tconv2: ConvTranspose2d<T>,
}

/// Activations kept from an encoder pass for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace<T> {
    pub x: Tensor<T>,
    pub a1: Tensor<T>,
    pub h1: Tensor<T>,
    pub a2: Tensor<T>,
    pub h2: Tensor<T>,
    /// Raw dense output before splitting and clamping.
    pub out: Tensor<T>,
    pub mu: Tensor<T>,
    pub logvar: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct DecoderTrace<T> {
    pub z: Tensor<T>,
    pub f: Tensor<T>,
    pub a1: Tensor<T>,
    pub h1: Tensor<T>,
    pub logits: Tensor<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLoss {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

impl<T: Real> VaeModel<T> {
    pub const PARAM_NAMES: [&'static str; 12] = [
        "enc.conv1.weight",
        "enc.conv1.bias",
        "enc.conv2.weight",
        "enc.conv2.bias",
        "enc.fc.weight",
        "enc.fc.bias",
        "dec.fc.weight",
        "dec.fc.bias",
        "dec.tconv1.weight",
        "dec.tconv1.bias",
        "dec.tconv2.weight",
        "dec.tconv2.bias",
    ];

    pub fn zeros() -> Self {
        Self {
            conv1: Conv2d::zeros(IMAGE_CHANNELS, CH1),
            conv2: Conv2d::zeros(CH1, CH2),
            enc_fc: Dense::zeros(FLAT, FC_WIDTH),
            dec_fc: Dense::zeros(LATENT_DIM, FLAT),
            tconv1: ConvTranspose2d::zeros(CH2, CH1),
            tconv2: ConvTranspose2d::zeros(CH1, IMAGE_CHANNELS),
        }
    }

    /// Truncated-normal weights (cut at two standard deviations) scaled by
    /// fan-in, zero biases.
    pub fn init(rng: &mut crate::Rng) -> Self {
        let mut m = Self::zeros();
        let taps_t = (KERNEL / STRIDE) * (KERNEL / STRIDE);
        let fans = [
            KERNEL * KERNEL * IMAGE_CHANNELS,
            KERNEL * KERNEL * CH1,
            FLAT,
            LATENT_DIM,
            taps_t * CH2,
            taps_t * CH1,
        ];
        for (w, fan_in) in m.weights_mut().into_iter().zip(fans) {
            // Variance of a unit normal truncated at ±2.
            let scale = crate::math::sqrt(1.0 / fan_in as f64) / 0.879_625_661_034_239_8;
            for v in w.data.iter_mut() {
                let s = loop {
                    let s: f64 = StandardNormal.sample(rng);
                    if s.abs() <= 2.0 {
                        break s;
                    }
                };
                *v = T::from_f64(s * scale);
            }
        }
        m
    }

    fn weights_mut(&mut self) -> [&mut Tensor<T>; 6] {
        [
            &mut self.conv1.weight,
            &mut self.conv2.weight,
            &mut self.enc_fc.weight,
            &mut self.dec_fc.weight,
            &mut self.tconv1.weight,
            &mut self.tconv2.weight,
        ]
    }

    /// Parameters in [`Self::PARAM_NAMES`] order.
    pub fn parameters(&self) -> [&Tensor<T>; 12] {
        [
            &self.conv1.weight,
            &self.conv1.bias,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.enc_fc.weight,
            &self.enc_fc.bias,
            &self.dec_fc.weight,
            &self.dec_fc.bias,
            &self.tconv1.weight,
            &self.tconv1.bias,
            &self.tconv2.weight,
            &self.tconv2.bias,
        ]
    }

    pub fn parameters_mut(&mut self) -> [&mut Tensor<T>; 12] {
        [
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.enc_fc.weight,
            &mut self.enc_fc.bias,
            &mut self.dec_fc.weight,
            &mut self.dec_fc.bias,
            &mut self.tconv1.weight,
            &mut self.tconv1.bias,
            &mut self.tconv2.weight,
            &mut self.tconv2.bias,
        ]
    }

    /// Rebuilds a model from tensors in [`Self::PARAM_NAMES`] order.
    pub fn from_parameters(tensors: Vec<Tensor<T>>) -> Result<Self> {
        let mut m = Self::zeros();
        if tensors.len() != 12 {
            return Err(Error::ShapeMismatch(alloc::format!(
                "expected 12 tensors, got {}",
                tensors.len()
            )));
        }
        for ((slot, t), name) in m
            .parameters_mut()
            .into_iter()
            .zip(tensors)
            .zip(Self::PARAM_NAMES)
        {
            if slot.shape != t.shape {
                return Err(Error::ShapeMismatch(alloc::format!(
                    "{name}: expected shape {:?}, got {:?}",
                    slot.shape,
                    t.shape
                )));
            }
            *slot = t;
        }
        Ok(m)
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> VaeModel<U> {
        let tensors = self.parameters().iter().map(|t| t.cast()).collect();
        VaeModel::from_parameters(tensors).expect("same architecture")
    }

    pub fn encode_trace(&self, x: &Tensor<T>) -> Result<EncoderTrace<T>> {
        if x.shape.len() != 4 || x.shape[1..] != [IMAGE_SIZE, IMAGE_SIZE, IMAGE_CHANNELS] {
            return Err(Error::ShapeMismatch(alloc::format!(
                "encoder input must be [B,16,16,1], got {:?}",
                x.shape
            )));
        }
        let a1 = self.conv1.forward(x);
        let h1 = relu(&a1);
        let a2 = self.conv2.forward(&h1);
        let h2 = relu(&a2);
        let out = self.enc_fc.forward(&h2);
        out.check_finite("encoder output")?;
        let b = x.shape[0];
        let clamp = T::from_f64(LOGVAR_CLAMP);
        let mut mu = Tensor::zeros(&[b, LATENT_DIM]);
        let mut logvar = Tensor::zeros(&[b, LATENT_DIM]);
        for n in 0..b {
            let row = &out.data[n * FC_WIDTH..(n + 1) * FC_WIDTH];
            mu.data[n * LATENT_DIM..(n + 1) * LATENT_DIM].copy_from_slice(&row[..LATENT_DIM]);
            for (d, &v) in logvar.data[n * LATENT_DIM..(n + 1) * LATENT_DIM]
                .iter_mut()
                .zip(&row[LATENT_DIM..])
            {
                *d = v.max(-clamp).min(clamp);
            }
        }
        Ok(EncoderTrace {
            x: x.clone(),
            a1,
            h1,
            a2,
            h2,
            out,
            mu,
            logvar,
        })
    }

    /// Means and clamped log-variances, each `[B, 16]`.
    pub fn encode(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let t = self.encode_trace(x)?;
        Ok((t.mu, t.logvar))
    }

    pub fn encoder_backward(
        &self,
        tr: &EncoderTrace<T>,
        dmu: &Tensor<T>,
        dlogvar: &Tensor<T>,
        mut grad: Option<&mut Self>,
    ) -> Tensor<T> {
        let b = tr.x.shape[0];
        let clamp = T::from_f64(LOGVAR_CLAMP);
        let mut dout = Tensor::zeros(&[b, FC_WIDTH]);
        for n in 0..b {
            let row = &mut dout.data[n * FC_WIDTH..(n + 1) * FC_WIDTH];
            row[..LATENT_DIM].copy_from_slice(&dmu.data[n * LATENT_DIM..(n + 1) * LATENT_DIM]);
            for j in 0..LATENT_DIM {
                let raw = tr.out.data[n * FC_WIDTH + LATENT_DIM + j];
                if raw > -clamp && raw < clamp {
                    row[LATENT_DIM + j] = dlogvar.data[n * LATENT_DIM + j];
                }
            }
        }
        let dh2 = self
            .enc_fc
            .backward(&tr.h2, &dout, grad.as_deref_mut().map(|g| &mut g.enc_fc));
        let dh2 = dh2.reshaped(&tr.a2.shape).expect("flatten is a reshape");
        let da2 = relu_backward(&tr.a2, &dh2);
        let dh1 = self
            .conv2
            .backward(&tr.h1, &da2, grad.as_deref_mut().map(|g| &mut g.conv2));
        let da1 = relu_backward(&tr.a1, &dh1);
        self.conv1.backward(&tr.x, &da1, grad.map(|g| &mut g.conv1))
    }

    pub fn decode_trace(&self, z: &Tensor<T>) -> Result<DecoderTrace<T>> {
        if z.shape.len() != 2 || z.shape[1] != LATENT_DIM {
            return Err(Error::ShapeMismatch(alloc::format!(
                "decoder input must be [B,16], got {:?}",
                z.shape
            )));
        }
        let b = z.shape[0];
        let f = self
            .dec_fc
            .forward(z)
            .reshaped(&[b, BOTTLENECK, BOTTLENECK, CH2])?;
        let a1 = self.tconv1.forward(&f);
        let h1 = relu(&a1);
        let logits = self.tconv2.forward(&h1);
        logits.check_finite("decoder logits")?;
        Ok(DecoderTrace {
            z: z.clone(),
            f,
            a1,
            h1,
            logits,
        })
    }

    /// Logits `[B, 16, 16, 1]`; the image is their sigmoid.
    pub fn decode(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.decode_trace(z)?.logits)
    }

    /// Gradient with respect to the latent input. Parameter gradients are
    /// only computed when `grad` is given.
    pub fn decoder_backward(
        &self,
        tr: &DecoderTrace<T>,
        dlogits: &Tensor<T>,
        mut grad: Option<&mut Self>,
    ) -> Tensor<T> {
        let dh1 = self
            .tconv2
            .backward(&tr.h1, dlogits, grad.as_deref_mut().map(|g| &mut g.tconv2));
        let da1 = relu_backward(&tr.a1, &dh1);
        let df = self
            .tconv1
            .backward(&tr.f, &da1, grad.as_deref_mut().map(|g| &mut g.tconv1));
        self.dec_fc
            .backward(&tr.z, &df, grad.map(|g| &mut g.dec_fc))
    }

    /// Loss of a batch with fixed reparameterization noise `eps` (`[B, 16]`).
    pub fn loss_with_noise(&self, x: &Tensor<T>, eps: &Tensor<T>) -> Result<VaeLoss> {
        let enc = self.encode_trace(x)?;
        let z = latent_sample(&enc.mu, &enc.logvar, eps);
        let logits = self.decode(&z)?;
        Ok(vae_loss(x, &logits, &enc.mu, &enc.logvar))
    }

    /// Loss and parameter gradients of a batch with fixed noise.
    pub fn loss_and_grads_with_noise(
        &self,
        x: &Tensor<T>,
        eps: &Tensor<T>,
    ) -> Result<(VaeLoss, Self)> {
        let enc = self.encode_trace(x)?;
        let z = latent_sample(&enc.mu, &enc.logvar, eps);
        let dec = self.decode_trace(&z)?;
        let loss = vae_loss(x, &dec.logits, &enc.mu, &enc.logvar);
        let (dlogits, mut dmu, mut dlogvar) = vae_loss_grads(x, &dec.logits, &enc.mu, &enc.logvar);
        let mut grad = Self::zeros();
        let dz = self.decoder_backward(&dec, &dlogits, Some(&mut grad));
        let half = T::from_f64(0.5);
        for i in 0..dz.len() {
            dmu.data[i] += dz.data[i];
            dlogvar.data[i] += dz.data[i] * eps.data[i] * half * (half * enc.logvar.data[i]).exp();
        }
        self.encoder_backward(&enc, &dmu, &dlogvar, Some(&mut grad));
        for t in grad.parameters() {
            t.check_finite("gradient")?;
        }
        Ok((loss, grad))
    }

    /// Loss and gradients with noise drawn from `rng`.
    pub fn loss_and_grads(&self, x: &Tensor<T>, rng: &mut crate::Rng) -> Result<(VaeLoss, Self)> {
        let eps = standard_normal(&[x.shape[0], LATENT_DIM], rng);
        self.loss_and_grads_with_noise(x, &eps)
    }
}

/// Tensor of independent `N(0, 1)` draws.
pub fn standard_normal<T: Real>(shape: &[usize], rng: &mut crate::Rng) -> Tensor<T> {
    let mut t = Tensor::zeros(shape);
    for v in t.data.iter_mut() {
        let s: f64 = StandardNormal.sample(rng);
        *v = T::from_f64(s);
    }
    t
}

/// `z = μ + exp(½·logσ²) ⊙ ε`
pub fn latent_sample<T: Real>(mu: &Tensor<T>, logvar: &Tensor<T>, eps: &Tensor<T>) -> Tensor<T> {
    let half = T::from_f64(0.5);
    let data = mu
        .data
        .iter()
        .zip(&logvar.data)
        .zip(&eps.data)
        .map(|((&m, &lv), &e)| m + (half * lv).exp() * e)
        .collect();
    Tensor {
        shape: mu.shape.clone(),
        data,
    }
}

/// Draws `ε ~ N(0, I)` and returns the reparameterized sample.
pub fn reparameterize<T: Real>(
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
    rng: &mut crate::Rng,
) -> Tensor<T> {
    let eps = standard_normal(&mu.shape, rng);
    latent_sample(mu, logvar, &eps)
}

/// Per-image squared error of the sigmoid image plus the Gaussian KL term,
/// each summed per image and averaged over the batch.
pub fn vae_loss<T: Real>(
    x: &Tensor<T>,
    logits: &Tensor<T>,
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
) -> VaeLoss {
    assert_eq!(x.len(), logits.len());
    assert_eq!(mu.len(), logvar.len());
    let b = x.shape[0] as f64;
    let mut recon = 0.0;
    for (&xv, &l) in x.data.iter().zip(&logits.data) {
        let d = xv.to_f64() - l.sigmoid().to_f64();
        recon += d * d;
    }
    let mut kl = 0.0;
    for (&m, &lv) in mu.data.iter().zip(&logvar.data) {
        let (m, lv) = (m.to_f64(), lv.to_f64());
        kl += 0.5 * (m * m + crate::math::exp(lv) - 1.0 - lv);
    }
    let (recon, kl) = (recon / b, kl / b);
    VaeLoss {
        total: recon + kl,
        recon,
        kl,
    }
}

/// Gradients of [`vae_loss`] with respect to logits, means and log-variances.
pub fn vae_loss_grads<T: Real>(
    x: &Tensor<T>,
    logits: &Tensor<T>,
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let inv_b = T::ONE / T::from_f64(x.shape[0] as f64);
    let two = T::from_f64(2.0);
    let half = T::from_f64(0.5);
    let dl = logits
        .data
        .iter()
        .zip(&x.data)
        .map(|(&l, &xv)| {
            let s = l.sigmoid();
            two * (s - xv) * s * (T::ONE - s) * inv_b
        })
        .collect();
    let dmu = mu.data.iter().map(|&m| m * inv_b).collect();
    let dlv = logvar
        .data
        .iter()
        .map(|&lv| half * (lv.exp() - T::ONE) * inv_b)
        .collect();
    (
        Tensor {
            shape: logits.shape.clone(),
            data: dl,
        },
        Tensor {
            shape: mu.shape.clone(),
            data: dmu,
        },
        Tensor {
            shape: logvar.shape.clone(),
            data: dlv,
        },
    )
}
