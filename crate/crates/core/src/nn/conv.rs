use rand::RngCore;

use super::{missing_cache, Init};
use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Scalar, Shape, Tensor};

/// Output extent of a window of size `filter` slid with `stride` over `input`
/// padded by `padding` on both sides: `(N + 2P − F)/S + 1`.
pub fn conv_out_dim(input: usize, padding: usize, filter: usize, stride: usize) -> Result<usize> {
    if stride == 0 || filter == 0 {
        return Err(Error::Geometry(format!("filter {filter} and stride {stride} must be positive")));
    }
    let span = input + 2 * padding;
    if filter > span {
        return Err(Error::Geometry(format!(
            "filter {filter} exceeds padded input {span} ({input} + 2·{padding})"
        )));
    }
    if (span - filter) % stride != 0 {
        return Err(Error::Geometry(format!(
            "({input} + 2·{padding} − {filter}) is not divisible by stride {stride}"
        )));
    }
    Ok((span - filter) / stride + 1)
}

/// Convolution strategy. Both produce the same values up to summation order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ConvAlgo {
    /// Nested loops over output positions; the reference path.
    Direct,
    /// Unfold patches into a matrix and use GEMM.
    #[default]
    Im2col,
}

/// 2-D convolution over NHWC batches.
///
/// `filters` is `[f, kh, kw, c_in]`, so one filter flattened is a row whose
/// column order `(dy, dx, c)` matches the unfolded patch layout.
#[derive(Clone, Debug)]
pub struct Conv2d<T: Scalar> {
    pub filters: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_filters: Tensor<T>,
    pub grad_bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
    pub algo: ConvAlgo,
    pub(crate) input: Option<Tensor<T>>,
}

#[derive(Clone, Copy)]
struct Geometry {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    oh: usize,
    ow: usize,
    f: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.kh * self.kw * self.c
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Input coordinate for output `o` and kernel offset `k`, if inside the image.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        (o * self.stride + k).checked_sub(self.pad).filter(|&v| v < extent)
    }
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(filters: Tensor<T>, bias: Tensor<T>, stride: usize, padding: usize) -> Result<Self> {
        let &[f, kh, kw, c] = filters.dims() else {
            return Err(Error::Shape(format!(
                "conv filters must be [f, kh, kw, c], got {:?}",
                filters.dims()
            )));
        };
        if bias.dims() != [f] {
            return Err(Error::Shape(format!("conv bias must be [{f}], got {:?}", bias.dims())));
        }
        if stride == 0 {
            return Err(Error::Geometry("stride must be positive".into()));
        }
        Ok(Conv2d {
            grad_filters: Tensor::zeros(&[f, kh, kw, c])?,
            grad_bias: Tensor::zeros(&[f])?,
            filters,
            bias,
            stride,
            padding,
            algo: ConvAlgo::default(),
            input: None,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn init(
        in_channels: usize,
        filters: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        init: Init,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let (kh, kw) = kernel;
        let fan_in = kh * kw * in_channels;
        let fan_out = kh * kw * filters;
        let weights = init.tensor(&[filters, kh, kw, in_channels], fan_in, fan_out, rng)?;
        Self::new(weights, Tensor::zeros(&[filters])?, stride, padding)
    }

    pub fn with_algo(mut self, algo: ConvAlgo) -> Self {
        self.algo = algo;
        self
    }

    fn kernel(&self) -> (usize, usize, usize, usize) {
        let d = self.filters.dims();
        (d[0], d[1], d[2], d[3])
    }

    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let &[h, w, c] = input else {
            return Err(Error::Shape(format!("conv expects [h, w, c] per sample, got {input:?}")));
        };
        let (f, kh, kw, kc) = self.kernel();
        if c != kc {
            return Err(Error::Shape(format!("conv expects {kc} input channels, got {c}")));
        }
        Ok(vec![
            conv_out_dim(h, self.padding, kh, self.stride)?,
            conv_out_dim(w, self.padding, kw, self.stride)?,
            f,
        ])
    }

    fn geometry(&self, x: &Tensor<T>) -> Result<Geometry> {
        let &[n, h, w, c] = x.dims() else {
            return Err(Error::Shape(format!("conv input must be [n, h, w, c], got {:?}", x.dims())));
        };
        let out = self.output_shape(&[h, w, c])?;
        let (f, kh, kw, _) = self.kernel();
        Ok(Geometry {
            n,
            h,
            w,
            c,
            oh: out[0],
            ow: out[1],
            f,
            kh,
            kw,
            stride: self.stride,
            pad: self.padding,
        })
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.geometry(x)?;
        let out = match self.algo {
            ConvAlgo::Direct => self.forward_direct(x.data(), &g),
            ConvAlgo::Im2col => self.forward_im2col(x.data(), &g),
        };
        Ok(Tensor::from_parts(Shape::new(&[g.n, g.oh, g.ow, g.f])?, out))
    }

    pub(crate) fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(out)
    }

    fn forward_direct(&self, x: &[T], g: &Geometry) -> Vec<T> {
        let filters = self.filters.data();
        let bias = self.bias.data();
        let mut out = vec![T::zero(); g.n * g.positions() * g.f];
        for i in 0..g.n {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let o_base = ((i * g.oh + oy) * g.ow + ox) * g.f;
                    for k in 0..g.f {
                        let mut acc = bias[k];
                        for dy in 0..g.kh {
                            let Some(iy) = g.source(oy, dy, g.h) else { continue };
                            for dx in 0..g.kw {
                                let Some(ix) = g.source(ox, dx, g.w) else { continue };
                                let x_base = ((i * g.h + iy) * g.w + ix) * g.c;
                                let f_base = ((k * g.kh + dy) * g.kw + dx) * g.c;
                                for ch in 0..g.c {
                                    acc += x[x_base + ch] * filters[f_base + ch];
                                }
                            }
                        }
                        out[o_base + k] = acc;
                    }
                }
            }
        }
        out
    }

    /// Unfolds image `i` into `cols`, `[oh·ow, kh·kw·c]` row-major.
    fn im2col(x: &[T], i: usize, g: &Geometry, cols: &mut [T]) {
        let patch = g.patch();
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let row = &mut cols[(oy * g.ow + ox) * patch..][..patch];
                for dy in 0..g.kh {
                    for dx in 0..g.kw {
                        let dst = &mut row[(dy * g.kw + dx) * g.c..][..g.c];
                        match (g.source(oy, dy, g.h), g.source(ox, dx, g.w)) {
                            (Some(iy), Some(ix)) => {
                                let src = ((i * g.h + iy) * g.w + ix) * g.c;
                                dst.copy_from_slice(&x[src..src + g.c]);
                            }
                            _ => dst.iter_mut().for_each(|v| *v = T::zero()),
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds unfolded patch gradients back onto image `i` of `dx`.
    fn col2im(cols: &[T], i: usize, g: &Geometry, dx: &mut [T]) {
        let patch = g.patch();
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let row = &cols[(oy * g.ow + ox) * patch..][..patch];
                for dy in 0..g.kh {
                    let Some(iy) = g.source(oy, dy, g.h) else { continue };
                    for kx in 0..g.kw {
                        let Some(ix) = g.source(ox, kx, g.w) else { continue };
                        let src = &row[(dy * g.kw + kx) * g.c..][..g.c];
                        let dst = ((i * g.h + iy) * g.w + ix) * g.c;
                        for (d, &s) in dx[dst..dst + g.c].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }

    fn forward_im2col(&self, x: &[T], g: &Geometry) -> Vec<T> {
        let (p, k) = (g.positions(), g.patch());
        let mut cols = vec![T::zero(); p * k];
        let per_image = p * g.f;
        let mut out: Vec<T> = Vec::with_capacity(g.n * per_image);
        for _ in 0..g.n * p {
            out.extend_from_slice(self.bias.data());
        }
        for i in 0..g.n {
            Self::im2col(x, i, g, &mut cols);
            gemm(
                MatRef::row_major(&cols, p, k),
                MatRef::transposed(self.filters.data(), k, g.f),
                &mut out[i * per_image..(i + 1) * per_image],
                true,
            );
        }
        out
    }

    pub(crate) fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let x = self.input.take().ok_or_else(|| missing_cache("conv2d"))?;
        let g = self.geometry(&x)?;
        if grad.dims() != [g.n, g.oh, g.ow, g.f] {
            return Err(Error::Shape(format!(
                "conv upstream gradient must be {:?}, got {:?}",
                [g.n, g.oh, g.ow, g.f],
                grad.dims()
            )));
        }
        let gb = self.grad_bias.data_mut();
        gb.iter_mut().for_each(|v| *v = T::zero());
        for row in grad.data().chunks_exact(g.f) {
            for (acc, &v) in gb.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let dx = match self.algo {
            ConvAlgo::Direct => self.backward_direct(x.data(), grad.data(), &g, need_input_grad),
            ConvAlgo::Im2col => self.backward_im2col(x.data(), grad.data(), &g, need_input_grad),
        };
        Ok(dx.map(|d| Tensor::from_parts(x.shape().clone(), d)))
    }

    fn backward_direct(&mut self, x: &[T], grad: &[T], g: &Geometry, need_input_grad: bool) -> Option<Vec<T>> {
        let filters = self.filters.data();
        let gf = self.grad_filters.data_mut();
        gf.iter_mut().for_each(|v| *v = T::zero());
        let mut dx = need_input_grad.then(|| vec![T::zero(); x.len()]);
        for i in 0..g.n {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let o_base = ((i * g.oh + oy) * g.ow + ox) * g.f;
                    for k in 0..g.f {
                        let up = grad[o_base + k];
                        for dy in 0..g.kh {
                            let Some(iy) = g.source(oy, dy, g.h) else { continue };
                            for kx in 0..g.kw {
                                let Some(ix) = g.source(ox, kx, g.w) else { continue };
                                let x_base = ((i * g.h + iy) * g.w + ix) * g.c;
                                let f_base = ((k * g.kh + dy) * g.kw + kx) * g.c;
                                for ch in 0..g.c {
                                    gf[f_base + ch] += up * x[x_base + ch];
                                    if let Some(dx) = dx.as_mut() {
                                        dx[x_base + ch] += up * filters[f_base + ch];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn backward_im2col(&mut self, x: &[T], grad: &[T], g: &Geometry, need_input_grad: bool) -> Option<Vec<T>> {
        let (p, k) = (g.positions(), g.patch());
        let per_image = p * g.f;
        let mut cols = vec![T::zero(); p * k];
        let mut dcols = vec![T::zero(); p * k];
        let mut dx = need_input_grad.then(|| vec![T::zero(); x.len()]);
        for i in 0..g.n {
            let up = &grad[i * per_image..(i + 1) * per_image];
            Self::im2col(x, i, g, &mut cols);
            // dF[f, K] (+)= upᵀ[f, P] · cols[P, K]
            gemm(
                MatRef::transposed(up, g.f, p),
                MatRef::row_major(&cols, p, k),
                self.grad_filters.data_mut(),
                i > 0,
            );
            if let Some(dx) = dx.as_mut() {
                // dcols[P, K] = up[P, f] · F[f, K]
                gemm(
                    MatRef::row_major(up, p, g.f),
                    MatRef::row_major(self.filters.data(), g.f, k),
                    &mut dcols,
                    false,
                );
                Self::col2im(&dcols, i, g, dx);
            }
        }
        dx
    }
}
