//! Convolution, transposed convolution, dense and ReLU layers.
//!
//! Both convolutions use a 4×4 kernel, stride 2 and one pixel of zero padding,
//! so a convolution halves the spatial size and a transposed convolution
//! doubles it. Kernels are stored `[ky][kx][cin][cout]`.

use alloc::vec::Vec;

use super::Tensor;
use crate::math::Real;

pub const KERNEL: usize = 4;
pub const STRIDE: usize = 2;
pub const PADDING: usize = 1;

/// Input coordinate feeding output `o` through tap `k`, if inside `0..n`.
#[inline]
fn tap(o: usize, k: usize, n: usize) -> Option<usize> {
    let i = (o * STRIDE + k).checked_sub(PADDING)?;
    (i < n).then_some(i)
}

fn dims4(t: &Tensor<impl Real>) -> (usize, usize, usize, usize) {
    assert_eq!(
        t.shape.len(),
        4,
        "expected an NHWC tensor, got shape {:?}",
        t.shape
    );
    (t.shape[0], t.shape[1], t.shape[2], t.shape[3])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn zeros(cin: usize, cout: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[KERNEL, KERNEL, cin, cout]),
            bias: Tensor::zeros(&[cout]),
        }
    }

    pub fn cin(&self) -> usize {
        self.weight.shape[2]
    }

    pub fn cout(&self) -> usize {
        self.weight.shape[3]
    }

    /// Each output starts from the bias and accumulates taps in `(ky, kx, ci)`
    /// order.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let (b, h, w, cin) = dims4(x);
        assert_eq!(cin, self.cin());
        let cout = self.cout();
        let (oh, ow) = (h / STRIDE, w / STRIDE);
        let mut out = Tensor::zeros(&[b, oh, ow, cout]);
        for px in out.data.chunks_exact_mut(cout) {
            px.copy_from_slice(&self.bias.data);
        }
        let wd = &self.weight.data;
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let wk = &wd[(ky * KERNEL + kx) * cin * cout..][..cin * cout];
                for n in 0..b {
                    for oy in 0..oh {
                        let Some(iy) = tap(oy, ky, h) else { continue };
                        for ox in 0..ow {
                            let Some(ix) = tap(ox, kx, w) else { continue };
                            let xs = &x.data[((n * h + iy) * w + ix) * cin..][..cin];
                            let o = ((n * oh + oy) * ow + ox) * cout;
                            let acc = &mut out.data[o..o + cout];
                            accumulate_pixel(acc, xs, wk);
                        }
                    }
                }
            }
        }
        out
    }

    /// Gradient with respect to the input; parameter gradients are
    /// accumulated into `grad` when given.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        mut grad: Option<&mut Self>,
    ) -> Tensor<T> {
        let (b, h, w, cin) = dims4(x);
        let (_, oh, ow, cout) = dims4(dy);
        let mut dx = Tensor::zeros(&x.shape);
        if let Some(gr) = grad.as_deref_mut() {
            for g in dy.data.chunks_exact(cout) {
                for (db, &gv) in gr.bias.data.iter_mut().zip(g) {
                    *db += gv;
                }
            }
        }
        let wt = transpose_taps(&self.weight.data, cin, cout);
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let base = (ky * KERNEL + kx) * cin * cout;
                for n in 0..b {
                    for oy in 0..oh {
                        let Some(iy) = tap(oy, ky, h) else { continue };
                        for ox in 0..ow {
                            let Some(ix) = tap(ox, kx, w) else { continue };
                            let xi = ((n * h + iy) * w + ix) * cin;
                            let o = ((n * oh + oy) * ow + ox) * cout;
                            accumulate_tap(
                                &wt[base..base + cin * cout],
                                &x.data[xi..xi + cin],
                                &dy.data[o..o + cout],
                                &mut dx.data[xi..xi + cin],
                                grad.as_deref_mut()
                                    .map(|g| &mut g.weight.data[base..base + cin * cout]),
                            );
                        }
                    }
                }
            }
        }
        dx
    }
}

/// `acc[co] += Σ_ci x[ci]·w[ci,co]`, summed in `ci` order.
#[inline(always)]
fn accumulate_pixel<T: Real>(acc: &mut [T], xs: &[T], wk: &[T]) {
    let cout = acc.len();
    if cout == 1 {
        let mut a = acc[0];
        for (&xv, &wv) in xs.iter().zip(wk) {
            a += xv * wv;
        }
        acc[0] = a;
        return;
    }
    for (&xv, row) in xs.iter().zip(wk.chunks_exact(cout)) {
        for (a, &wv) in acc.iter_mut().zip(row) {
            *a += xv * wv;
        }
    }
}

/// Kernel with the channel axes swapped, `[ky][kx][cout][cin]`.
fn transpose_taps<T: Real>(wd: &[T], cin: usize, cout: usize) -> Vec<T> {
    let mut out = alloc::vec![T::ZERO; wd.len()];
    for (k, block) in wd.chunks_exact(cin * cout).enumerate() {
        let dst = &mut out[k * cin * cout..(k + 1) * cin * cout];
        for ci in 0..cin {
            for co in 0..cout {
                dst[co * cin + ci] = block[ci * cout + co];
            }
        }
    }
    out
}

/// Backward contribution of one (input pixel, tap, output pixel) triple:
/// `dx[ci] += Σ_co w[ci,co]·g[co]` and `dw[ci,co] += x[ci]·g[co]`.
#[inline(always)]
fn accumulate_tap<T: Real>(wt: &[T], xs: &[T], g: &[T], dx: &mut [T], dw: Option<&mut [T]>) {
    accumulate_pixel(dx, g, wt);
    if let Some(dw) = dw {
        let cout = g.len();
        for (&xv, row) in xs.iter().zip(dw.chunks_exact_mut(cout)) {
            for (d, &gv) in row.iter_mut().zip(g) {
                *d += xv * gv;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> ConvTranspose2d<T> {
    pub fn zeros(cin: usize, cout: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[KERNEL, KERNEL, cin, cout]),
            bias: Tensor::zeros(&[cout]),
        }
    }

    pub fn cin(&self) -> usize {
        self.weight.shape[2]
    }

    pub fn cout(&self) -> usize {
        self.weight.shape[3]
    }

    /// Scatter form: each input pixel adds its kernel footprint to the output.
    /// Each output starts from the bias and accumulates in `(ky, kx, ci)` order.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let (b, h, w, cin) = dims4(x);
        assert_eq!(cin, self.cin());
        let cout = self.cout();
        let (oh, ow) = (h * STRIDE, w * STRIDE);
        let mut out = Tensor::zeros(&[b, oh, ow, cout]);
        for px in out.data.chunks_exact_mut(cout) {
            px.copy_from_slice(&self.bias.data);
        }
        let wd = &self.weight.data;
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let wk = &wd[(ky * KERNEL + kx) * cin * cout..][..cin * cout];
                for n in 0..b {
                    for iy in 0..h {
                        let Some(oy) = tap(iy, ky, oh) else { continue };
                        for ix in 0..w {
                            let Some(ox) = tap(ix, kx, ow) else { continue };
                            let xs = &x.data[((n * h + iy) * w + ix) * cin..][..cin];
                            let o = ((n * oh + oy) * ow + ox) * cout;
                            let acc = &mut out.data[o..o + cout];
                            accumulate_pixel(acc, xs, wk);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        mut grad: Option<&mut Self>,
    ) -> Tensor<T> {
        let (b, h, w, cin) = dims4(x);
        let (_, oh, ow, cout) = dims4(dy);
        let mut dx = Tensor::zeros(&x.shape);
        if let Some(gr) = grad.as_deref_mut() {
            for g in dy.data.chunks_exact(cout) {
                for (db, &gv) in gr.bias.data.iter_mut().zip(g) {
                    *db += gv;
                }
            }
        }
        let wt = transpose_taps(&self.weight.data, cin, cout);
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let base = (ky * KERNEL + kx) * cin * cout;
                for n in 0..b {
                    for iy in 0..h {
                        let Some(oy) = tap(iy, ky, oh) else { continue };
                        for ix in 0..w {
                            let Some(ox) = tap(ix, kx, ow) else { continue };
                            let xi = ((n * h + iy) * w + ix) * cin;
                            let o = ((n * oh + oy) * ow + ox) * cout;
                            accumulate_tap(
                                &wt[base..base + cin * cout],
                                &x.data[xi..xi + cin],
                                &dy.data[o..o + cout],
                                &mut dx.data[xi..xi + cin],
                                grad.as_deref_mut()
                                    .map(|g| &mut g.weight.data[base..base + cin * cout]),
                            );
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Fully connected layer, `y = x·W + b` with `W` stored `[in][out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[1]
    }

    /// Accepts any `[batch, ...]` tensor whose trailing size is `inputs`.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let (ni, no) = (self.inputs(), self.outputs());
        assert_eq!(x.len() % ni, 0);
        let b = x.len() / ni;
        let mut out = Tensor::zeros(&[b, no]);
        for n in 0..b {
            let acc = &mut out.data[n * no..(n + 1) * no];
            acc.copy_from_slice(&self.bias.data);
            for i in 0..ni {
                let xv = x.data[n * ni + i];
                for (a, &wv) in acc.iter_mut().zip(&self.weight.data[i * no..(i + 1) * no]) {
                    *a += xv * wv;
                }
            }
        }
        out
    }

    pub fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        mut grad: Option<&mut Self>,
    ) -> Tensor<T> {
        let (ni, no) = (self.inputs(), self.outputs());
        let b = x.len() / ni;
        let mut dx = Tensor::zeros(&x.shape);
        for n in 0..b {
            let g = &dy.data[n * no..(n + 1) * no];
            if let Some(gr) = grad.as_deref_mut() {
                for (db, &gv) in gr.bias.data.iter_mut().zip(g) {
                    *db += gv;
                }
            }
            for i in 0..ni {
                let row = &self.weight.data[i * no..(i + 1) * no];
                let mut s = T::ZERO;
                for (&wv, &gv) in row.iter().zip(g) {
                    s += wv * gv;
                }
                dx.data[n * ni + i] = s;
                if let Some(gr) = grad.as_deref_mut() {
                    let xv = x.data[n * ni + i];
                    for (dw, &gv) in gr.weight.data[i * no..(i + 1) * no].iter_mut().zip(g) {
                        *dw += xv * gv;
                    }
                }
            }
        }
        dx
    }
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| v.max(T::ZERO)).collect(),
    }
}

/// Passes the gradient where the pre-activation was positive.
pub fn relu_backward<T: Real>(pre: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data: Vec<T> = pre
        .data
        .iter()
        .zip(&dy.data)
        .map(|(&p, &g)| if p > T::ZERO { g } else { T::ZERO })
        .collect();
    Tensor {
        shape: dy.shape.clone(),
        data,
    }
}
