//! Independent oracles shared by the integration tests and the acceptance
//! suite: f64 central finite differences and literal nested-loop
//! convolution and pooling.
#![allow(dead_code, clippy::needless_range_loop)]

use digit_triad::mnist::one_hot;
use digit_triad::nn::{softmax_cross_entropy, Conv2d, ConvAlgo, Dense, Dropout, Flatten, Init, Layer, MaxPool2d, Mode, Relu, Sequential};
use digit_triad::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor so gradients that are both ~0 compare absolutely.
pub const REL_FLOOR: f64 = 1e-7;
pub const ORACLE_TOL: f64 = 1e-6;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(dims: &[usize], lo: f64, hi: f64, r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| r.gen_range(lo..hi)).unwrap()
}

/// Values bounded away from 0 by `gap`, so ReLU stays off its kink.
pub fn away_from_zero(dims: &[usize], gap: f64, r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| {
        let v: f64 = r.gen_range(gap..1.0);
        if r.gen_bool(0.5) { v } else { -v }
    })
    .unwrap()
}

/// Distinct values spaced 0.01 apart, so every pooling window has a unique
/// maximum that a finite-difference step cannot overtake.
pub fn distinct(dims: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = dims.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.005 * n as f64).collect();
    vals.shuffle(r);
    Tensor::from_vec(dims, vals).unwrap()
}

#[derive(Default, Debug, Clone, Copy)]
pub struct Outcome {
    pub checked: usize,
    pub kinks: usize,
    pub worst: f64,
}

impl Outcome {
    fn record(&mut self, analytic: f64, numeric: f64, what: &str) -> Result<(), String> {
        let e = rel_err(analytic, numeric);
        if e > REL_TOL {
            return Err(format!("{what}: analytic {analytic:e} vs numeric {numeric:e} (relative error {e:e})"));
        }
        self.checked += 1;
        self.worst = self.worst.max(e);
        Ok(())
    }

    pub fn absorb(&mut self, other: Outcome) {
        self.checked += other.checked;
        self.kinks += other.kinks;
        self.worst = self.worst.max(other.worst);
    }
}

/// Central difference, or `None` when the one-sided slopes disagree badly
/// enough to reveal a non-differentiable point inside the step.
pub fn central(mut f: impl FnMut(f64) -> f64, base: f64) -> Option<f64> {
    let plus = f(base + STEP);
    let minus = f(base - STEP);
    let mid = f(base);
    if (plus - 2.0 * mid + minus).abs() > 1e-4 * STEP {
        return None;
    }
    Some((plus - minus) / (2.0 * STEP))
}

/// `L(x) = Σ forward(x) ⊙ proj`, with the dropout mask pinned by `mask_seed`.
fn objective(net: &mut Sequential<f64>, x: &Tensor<f64>, proj: &Tensor<f64>, mask_seed: u64) -> f64 {
    let out = net.forward(x, Mode::Train, &mut rng(mask_seed)).unwrap();
    out.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
}

/// Compares input and parameter gradients of `net` at `x` against finite
/// differences of a random linear projection of the output, for every
/// coordinate or for `sample` random coordinates per tensor.
pub fn check(net: &mut Sequential<f64>, x: &Tensor<f64>, seed: u64, sample: Option<usize>, what: &str) -> Result<Outcome, String> {
    let mut r = rng(seed ^ 0x9e37_79b9);
    let out_dims = [&[x.dims()[0]][..], net.output_shape()].concat();
    let proj = uniform(&out_dims, -1.0, 1.0, &mut r);
    let mask_seed = seed;

    net.forward(x, Mode::Train, &mut rng(mask_seed)).unwrap();
    let dx = net.backward_with_input_grad(&proj).unwrap();
    let grads: Vec<Vec<f64>> = net.gradients().iter().map(|g| g.data().to_vec()).collect();

    let pick = |len: usize, r: &mut ChaCha8Rng| -> Vec<usize> {
        match sample {
            Some(k) if k < len => (0..k).map(|_| r.gen_range(0..len)).collect(),
            _ => (0..len).collect(),
        }
    };

    let mut outcome = Outcome::default();
    let mut xp = x.clone();
    for i in pick(x.len(), &mut r) {
        let base = x.data()[i];
        let numeric = central(
            |v| {
                xp.data_mut()[i] = v;
                objective(net, &xp, &proj, mask_seed)
            },
            base,
        );
        xp.data_mut()[i] = base;
        match numeric {
            Some(n) => outcome.record(dx.data()[i], n, &format!("{what} input[{i}]"))?,
            None => outcome.kinks += 1,
        }
    }

    for (p, grad) in grads.iter().enumerate() {
        for i in pick(grad.len(), &mut r) {
            let base = net.parameters()[p].data()[i];
            let numeric = central(
                |v| {
                    net.parameters_mut()[p].data_mut()[i] = v;
                    objective(net, x, &proj, mask_seed)
                },
                base,
            );
            net.parameters_mut()[p].data_mut()[i] = base;
            match numeric {
                Some(n) => outcome.record(grad[i], n, &format!("{what} param{p}[{i}]"))?,
                None => outcome.kinks += 1,
            }
        }
    }
    Ok(outcome)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv2d,
    Relu,
    MaxPool2d,
    Dropout,
    Flatten,
}

impl LayerKind {
    pub const ALL: [LayerKind; 6] = [
        LayerKind::Dense,
        LayerKind::Conv2d,
        LayerKind::Relu,
        LayerKind::MaxPool2d,
        LayerKind::Dropout,
        LayerKind::Flatten,
    ];
}

fn single(input: &[usize], layer: Layer<f64>) -> Sequential<f64> {
    Sequential::new(input, vec![layer]).unwrap()
}

/// A random single-layer stack and input batch. Inputs are constructed off
/// every kink, so a sound backward pass must check with zero skips.
pub fn instance(kind: LayerKind, seed: u64) -> (Sequential<f64>, Tensor<f64>) {
    let mut r = rng(seed.wrapping_mul(0x51_7cc1_b727_220a) ^ kind as u64);
    match kind {
        LayerKind::Dense => {
            let (n, i, o) = (r.gen_range(1..5), r.gen_range(1..9), r.gen_range(1..7));
            let mut layer = Dense::init(i, o, Init::GlorotUniform, &mut r).unwrap();
            layer.bias = uniform(&[o], -0.5, 0.5, &mut r);
            (single(&[i], Layer::Dense(layer)), uniform(&[n, i], -1.0, 1.0, &mut r))
        }
        LayerKind::Conv2d => {
            let (c, f) = (r.gen_range(1..4), r.gen_range(1..5));
            let k = r.gen_range(1..4usize);
            let stride = r.gen_range(1..3);
            let padding = r.gen_range(0..k.min(2));
            // Extents chosen so the stride divides the sweep exactly.
            let extent = |r: &mut ChaCha8Rng| (r.gen_range(2..5usize) - 1) * stride + k - 2 * padding;
            let (h, w) = (extent(&mut r), extent(&mut r));
            let conv = Conv2d::new(
                uniform(&[f, k, k, c], -1.0, 1.0, &mut r),
                uniform(&[f], -0.5, 0.5, &mut r),
                stride,
                padding,
            )
            .unwrap();
            let n = r.gen_range(1..3);
            (single(&[h, w, c], Layer::Conv2d(conv)), uniform(&[n, h, w, c], -1.0, 1.0, &mut r))
        }
        LayerKind::Relu => {
            let dims = [r.gen_range(1..5), r.gen_range(1..12)];
            (single(&dims[1..], Layer::Relu(Relu::new())), away_from_zero(&dims, 0.01, &mut r))
        }
        LayerKind::MaxPool2d => {
            let c = r.gen_range(1..4);
            let pool = r.gen_range(2..4usize);
            let stride = r.gen_range(1..=pool);
            let extent = |r: &mut ChaCha8Rng| (r.gen_range(1..4usize) - 1) * stride + pool;
            let (h, w) = (extent(&mut r), extent(&mut r));
            let n = r.gen_range(1..3);
            let layer = Layer::MaxPool2d(MaxPool2d::new(pool, stride).unwrap());
            (single(&[h, w, c], layer), distinct(&[n, h, w, c], &mut r))
        }
        LayerKind::Dropout => {
            let dims = [r.gen_range(1..5), r.gen_range(1..20)];
            let rate = r.gen_range(0.0..0.9);
            (single(&dims[1..], Layer::Dropout(Dropout::new(rate).unwrap())), uniform(&dims, -1.0, 1.0, &mut r))
        }
        LayerKind::Flatten => {
            let dims = [r.gen_range(1..3), r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..4)];
            (single(&dims[1..], Layer::Flatten(Flatten::new())), uniform(&dims, -1.0, 1.0, &mut r))
        }
    }
}

/// Checks every coordinate of `instances` random stacks of one layer type.
pub fn check_layer(kind: LayerKind, instances: usize) -> Result<Outcome, String> {
    let mut total = Outcome::default();
    for seed in 0..instances as u64 {
        let (mut net, x) = instance(kind, seed);
        let o = check(&mut net, &x, seed, None, &format!("{kind:?} instance {seed}"))?;
        if o.kinks > 0 {
            return Err(format!("{kind:?} instance {seed}: {} coordinates hit a kink", o.kinks));
        }
        total.absorb(o);
    }
    Ok(total)
}

/// Softmax cross-entropy gradient w.r.t. the logits.
pub fn check_loss(instances: usize) -> Result<Outcome, String> {
    let mut total = Outcome::default();
    for seed in 0..instances as u64 {
        let mut r = rng(600 + seed);
        let n = r.gen_range(1..6);
        let logits = uniform(&[n, 10], -5.0, 5.0, &mut r);
        let labels: Vec<u8> = (0..n).map(|_| r.gen_range(0..10)).collect();
        let y = one_hot::<f64>(&labels, 10).unwrap();
        let (_, grad) = softmax_cross_entropy(&logits, &y).unwrap();
        let mut lp = logits.clone();
        for i in 0..logits.len() {
            let base = logits.data()[i];
            let numeric = central(
                |v| {
                    lp.data_mut()[i] = v;
                    softmax_cross_entropy(&lp, &y).unwrap().0
                },
                base,
            );
            lp.data_mut()[i] = base;
            match numeric {
                Some(n) => total.record(grad.data()[i], n, &format!("loss instance {seed} logit {i}"))?,
                None => return Err(format!("loss instance {seed}: kink at logit {i}")),
            }
        }
    }
    Ok(total)
}

/// A convolution problem with its output gradient, in NHWC / `[f,kh,kw,c]`.
#[derive(Debug, Clone)]
pub struct ConvCase {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub f: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: usize,
    pub x: Vec<f64>,
    pub filters: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad: Vec<f64>,
}

impl ConvCase {
    /// Random case with input at most 8×8×3 and at most 4 filters.
    pub fn random(seed: u64) -> Self {
        let mut r = rng(seed);
        let (n, c, f, k) = (r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(1..=4), r.gen_range(1..=3usize));
        let stride = r.gen_range(1..=2);
        let padding = r.gen_range(0..k.min(2));
        let max_out = (8 + 2 * padding - k) / stride + 1;
        let extent = |r: &mut ChaCha8Rng| loop {
            let e = (r.gen_range(1..=max_out) - 1) * stride + k;
            if e > 2 * padding && e - 2 * padding <= 8 {
                break e - 2 * padding;
            }
        };
        let (h, w) = (extent(&mut r), extent(&mut r));
        Self::with_values(n, h, w, c, f, k, stride, padding, &mut r)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_values(n: usize, h: usize, w: usize, c: usize, f: usize, k: usize, stride: usize, padding: usize, r: &mut ChaCha8Rng) -> Self {
        let mut v = |len: usize| (0..len).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let oh = (h + 2 * padding - k) / stride + 1;
        let ow = (w + 2 * padding - k) / stride + 1;
        ConvCase {
            n,
            h,
            w,
            c,
            f,
            k,
            stride,
            padding,
            x: v(n * h * w * c),
            filters: v(f * k * k * c),
            bias: v(f),
            grad: v(n * oh * ow * f),
        }
    }

    pub fn out(&self) -> (usize, usize) {
        (
            (self.h + 2 * self.padding - self.k) / self.stride + 1,
            (self.w + 2 * self.padding - self.k) / self.stride + 1,
        )
    }

    fn src(&self, o: usize, k: usize) -> isize {
        (o * self.stride + k) as isize - self.padding as isize
    }

    fn x_index(&self, n: usize, y: isize, x: isize, c: usize) -> Option<usize> {
        if y < 0 || x < 0 || y as usize >= self.h || x as usize >= self.w {
            return None;
        }
        Some(((n * self.h + y as usize) * self.w + x as usize) * self.c + c)
    }

    fn w_index(&self, f: usize, ky: usize, kx: usize, c: usize) -> usize {
        ((f * self.k + ky) * self.k + kx) * self.c + c
    }

    pub fn naive_forward(&self) -> Vec<f64> {
        let (oh, ow) = self.out();
        let mut out = Vec::with_capacity(self.n * oh * ow * self.f);
        for n in 0..self.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for f in 0..self.f {
                        let mut acc = self.bias[f];
                        for ky in 0..self.k {
                            for kx in 0..self.k {
                                for c in 0..self.c {
                                    let (y, x) = (self.src(oy, ky), self.src(ox, kx));
                                    if let Some(xi) = self.x_index(n, y, x, c) {
                                        acc += self.x[xi] * self.filters[self.w_index(f, ky, kx, c)];
                                    }
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }

    /// `(dx, dfilters, dbias)`.
    pub fn naive_backward(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (oh, ow) = self.out();
        let mut dx = vec![0.0; self.x.len()];
        let mut dw = vec![0.0; self.filters.len()];
        let mut db = vec![0.0; self.f];
        for n in 0..self.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for f in 0..self.f {
                        let g = self.grad[((n * oh + oy) * ow + ox) * self.f + f];
                        db[f] += g;
                        for ky in 0..self.k {
                            for kx in 0..self.k {
                                for c in 0..self.c {
                                    let (y, x) = (self.src(oy, ky), self.src(ox, kx));
                                    if let Some(xi) = self.x_index(n, y, x, c) {
                                        let wi = self.w_index(f, ky, kx, c);
                                        dw[wi] += g * self.x[xi];
                                        dx[xi] += g * self.filters[wi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        (dx, dw, db)
    }

    fn stack(&self, algo: ConvAlgo) -> Sequential<f64> {
        let conv = Conv2d::new(
            Tensor::from_vec(&[self.f, self.k, self.k, self.c], self.filters.clone()).unwrap(),
            Tensor::from_vec(&[self.f], self.bias.clone()).unwrap(),
            self.stride,
            self.padding,
        )
        .unwrap()
        .with_algo(algo);
        Sequential::new(&[self.h, self.w, self.c], vec![Layer::Conv2d(conv)]).unwrap()
    }

    /// Largest absolute deviation from the nested loops over forward,
    /// input gradient, filter gradient and bias gradient.
    pub fn max_deviation(&self, algo: ConvAlgo) -> f64 {
        let (oh, ow) = self.out();
        let mut net = self.stack(algo);
        let x = Tensor::from_vec(&[self.n, self.h, self.w, self.c], self.x.clone()).unwrap();
        let g = Tensor::from_vec(&[self.n, oh, ow, self.f], self.grad.clone()).unwrap();
        let want = self.naive_forward();
        let (want_dx, want_dw, want_db) = self.naive_backward();
        let inferred = net.infer(&x).unwrap();
        let trained = net.forward(&x, Mode::Train, &mut rng(0)).unwrap();
        let dx = net.backward_with_input_grad(&g).unwrap();
        let grads = net.gradients();
        [
            max_abs_diff(inferred.data(), &want),
            max_abs_diff(trained.data(), &want),
            max_abs_diff(dx.data(), &want_dx),
            max_abs_diff(grads[0].data(), &want_dw),
            max_abs_diff(grads[1].data(), &want_db),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct PoolCase {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub pool: usize,
    pub stride: usize,
    pub x: Vec<f64>,
    pub grad: Vec<f64>,
}

impl PoolCase {
    pub fn random(seed: u64) -> Self {
        let mut r = rng(seed);
        let (n, c, pool) = (r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(2..=3usize));
        let stride = r.gen_range(1..=pool);
        let max_out = (8 - pool) / stride + 1;
        let oh = r.gen_range(1..=max_out);
        let ow = r.gen_range(1..=max_out);
        let (h, w) = ((oh - 1) * stride + pool, (ow - 1) * stride + pool);
        let mut v = |len: usize| (0..len).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        PoolCase { n, h, w, c, pool, stride, x: v(n * h * w * c), grad: v(n * oh * ow * c) }
    }

    pub fn out(&self) -> (usize, usize) {
        ((self.h - self.pool) / self.stride + 1, (self.w - self.pool) / self.stride + 1)
    }

    fn idx(&self, n: usize, y: usize, x: usize, c: usize) -> usize {
        ((n * self.h + y) * self.w + x) * self.c + c
    }

    /// Forward output and input gradient; the first maximum in scan order
    /// of each window receives that window's gradient.
    pub fn naive(&self) -> (Vec<f64>, Vec<f64>) {
        let (oh, ow) = self.out();
        let mut out = Vec::new();
        let mut dx = vec![0.0; self.x.len()];
        for n in 0..self.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for c in 0..self.c {
                        let mut best = self.idx(n, oy * self.stride, ox * self.stride, c);
                        for py in 0..self.pool {
                            for px in 0..self.pool {
                                let i = self.idx(n, oy * self.stride + py, ox * self.stride + px, c);
                                if self.x[i] > self.x[best] {
                                    best = i;
                                }
                            }
                        }
                        out.push(self.x[best]);
                        dx[best] += self.grad[((n * oh + oy) * ow + ox) * self.c + c];
                    }
                }
            }
        }
        (out, dx)
    }

    pub fn max_deviation(&self) -> f64 {
        let (oh, ow) = self.out();
        let mut net = Sequential::new(
            &[self.h, self.w, self.c],
            vec![Layer::MaxPool2d(MaxPool2d::new(self.pool, self.stride).unwrap())],
        )
        .unwrap();
        let x = Tensor::from_vec(&[self.n, self.h, self.w, self.c], self.x.clone()).unwrap();
        let g = Tensor::from_vec(&[self.n, oh, ow, self.c], self.grad.clone()).unwrap();
        let (want, want_dx) = self.naive();
        let inferred = net.infer(&x).unwrap();
        net.forward(&x, Mode::Train, &mut rng(0)).unwrap();
        let dx = net.backward_with_input_grad(&g).unwrap();
        max_abs_diff(inferred.data(), &want).max(max_abs_diff(dx.data(), &want_dx))
    }
}
