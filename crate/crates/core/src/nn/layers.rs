//! Forward and backward passes for the layer types the agent and probes
//! are built from. Leading dimensions are treated as a batch; backward
//! functions accumulate into caller-owned gradient tensors.

use crate::error::{shape_err, Error, Result};
use crate::nn::real::{gemm, MatRef};
use crate::nn::{Real, Tensor};

/// Elementwise nonlinearity between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Elu,
    Relu,
}

impl Activation {
    pub fn forward<T: Real>(self, x: &mut [T]) {
        match self {
            Activation::Elu => x.iter_mut().for_each(|v| {
                if *v <= T::zero() {
                    *v = v.exp_m1();
                }
            }),
            Activation::Relu => x.iter_mut().for_each(|v| {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }),
        }
    }

    /// Converts `grad` (w.r.t. the output) into the gradient w.r.t. the
    /// input, using the stored forward output.
    pub fn backward<T: Real>(self, output: &[T], grad: &mut [T]) {
        match self {
            Activation::Elu => grad.iter_mut().zip(output).for_each(|(g, &y)| {
                if y <= T::zero() {
                    *g *= y + T::one();
                }
            }),
            Activation::Relu => grad.iter_mut().zip(output).for_each(|(g, &y)| {
                if y <= T::zero() {
                    *g = T::zero();
                }
            }),
        }
    }
}

pub fn embedding_forward<T: Real, I: Copy + Into<usize>>(
    ids: &[I],
    table: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (vocab, dim) = table_dims(table)?;
    if ids.is_empty() {
        return Err(shape_err("embedding", "empty id grid"));
    }
    let mut out = Vec::with_capacity(ids.len() * dim);
    for &id in ids {
        let id: usize = id.into();
        if id >= vocab {
            return Err(Error::OutOfRange {
                what: "embedding id",
                value: id,
                limit: vocab,
            });
        }
        out.extend_from_slice(&table.data()[id * dim..(id + 1) * dim]);
    }
    Tensor::new(vec![ids.len(), dim], out)
}

pub fn embedding_backward<T: Real, I: Copy + Into<usize>>(
    ids: &[I],
    grad_out: &[T],
    grad_table: &mut Tensor<T>,
) {
    let dim = grad_table.last_dim();
    let g = grad_table.data_mut();
    for (row, &id) in ids.iter().enumerate() {
        let id: usize = id.into();
        let src = &grad_out[row * dim..(row + 1) * dim];
        for (dst, &s) in g[id * dim..(id + 1) * dim].iter_mut().zip(src) {
            *dst += s;
        }
    }
}

fn table_dims<T: Real>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match t.shape() {
        [v, d] => Ok((*v, *d)),
        s => Err(shape_err("embedding", format!("table must be 2-D, got {s:?}"))),
    }
}

/// `input[.., n] · weightᵀ + bias`, with `weight` shaped `[m, n]`.
pub fn linear_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (m, n) = linear_dims(weight, bias)?;
    if input.last_dim() != n {
        return Err(shape_err(
            "linear",
            format!("input dim {} vs weight {m}x{n}", input.last_dim()),
        ));
    }
    let rows = input.rows();
    let mut out = Vec::with_capacity(rows * m);
    for _ in 0..rows {
        out.extend_from_slice(bias.data());
    }
    gemm(
        MatRef::new(input.data(), rows, n),
        MatRef::new(weight.data(), m, n).t(),
        T::one(),
        &mut out,
    );
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = m;
    Tensor::new(shape, out)
}

/// Returns the input gradient; accumulates weight and bias gradients.
pub fn linear_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &[T],
    grad_weight: &mut Tensor<T>,
    grad_bias: &mut Tensor<T>,
) -> Tensor<T> {
    let m = weight.shape()[0];
    let n = weight.shape()[1];
    let rows = input.rows();
    assert_eq!(grad_out.len(), rows * m, "linear backward grad shape");
    gemm(
        MatRef::new(grad_out, rows, m).t(),
        MatRef::new(input.data(), rows, n),
        T::one(),
        grad_weight.data_mut(),
    );
    col_sum_into(grad_out, m, grad_bias.data_mut());
    let mut dx = vec![T::zero(); rows * n];
    gemm(
        MatRef::new(grad_out, rows, m),
        MatRef::new(weight.data(), m, n),
        T::zero(),
        &mut dx,
    );
    Tensor::new(input.shape().to_vec(), dx).expect("input shape")
}

fn linear_dims<T: Real>(weight: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize)> {
    match (weight.shape(), bias.shape()) {
        ([m, n], [b]) if b == m => Ok((*m, *n)),
        (w, b) => Err(shape_err("linear", format!("weight {w:?} with bias {b:?}"))),
    }
}

fn col_sum_into<T: Real>(mat: &[T], cols: usize, out: &mut [T]) {
    for row in mat.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

const IM2COL_BUDGET: usize = 1 << 21;

struct ConvGeom {
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.c_in * 9
    }

    fn plane(&self) -> usize {
        self.h * self.w
    }

    fn samples_per_chunk(&self) -> usize {
        (IM2COL_BUDGET / (self.plane() * self.patch()).max(1)).max(1)
    }
}

fn conv_geom<T: Real>(input: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<ConvGeom> {
    let (batch, c, h, w) = match input.shape() {
        [c, h, w] => (1, *c, *h, *w),
        [b, c, h, w] => (*b, *c, *h, *w),
        s => return Err(shape_err("conv2d", format!("input must be [B,]C,H,W, got {s:?}"))),
    };
    let (c_out, c_in) = match kernel.shape() {
        [o, i, 3, 3] => (*o, *i),
        s => return Err(shape_err("conv2d", format!("kernel must be [O,I,3,3], got {s:?}"))),
    };
    if c_in != c {
        return Err(shape_err(
            "conv2d",
            format!("input has {c} channels, kernel expects {c_in}"),
        ));
    }
    if bias.shape() != [c_out] {
        return Err(shape_err("conv2d", format!("bias {:?} for {c_out} filters", bias.shape())));
    }
    Ok(ConvGeom {
        batch,
        c_in,
        c_out,
        h,
        w,
    })
}

/// Rows are `(sample, y, x)`, columns `(channel, ky, kx)`; zero padding.
fn im2col<T: Real>(g: &ConvGeom, input: &[T], s0: usize, s1: usize, cols: &mut Vec<T>) {
    let (h, w, patch) = (g.h, g.w, g.patch());
    cols.clear();
    cols.resize((s1 - s0) * g.plane() * patch, T::zero());
    for s in s0..s1 {
        let sample = &input[s * g.c_in * g.plane()..(s + 1) * g.c_in * g.plane()];
        for y in 0..h {
            for x in 0..w {
                let row = ((s - s0) * g.plane() + y * w + x) * patch;
                for ci in 0..g.c_in {
                    let chan = &sample[ci * g.plane()..(ci + 1) * g.plane()];
                    for ky in 0..3 {
                        let yy = y as isize + ky as isize - 1;
                        if yy < 0 || yy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let xx = x as isize + kx as isize - 1;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            cols[row + ci * 9 + ky * 3 + kx] = chan[yy as usize * w + xx as usize];
                        }
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Real>(g: &ConvGeom, cols: &[T], s0: usize, s1: usize, grad_in: &mut [T]) {
    let (h, w, patch) = (g.h, g.w, g.patch());
    for s in s0..s1 {
        let sample = &mut grad_in[s * g.c_in * g.plane()..(s + 1) * g.c_in * g.plane()];
        for y in 0..h {
            for x in 0..w {
                let row = ((s - s0) * g.plane() + y * w + x) * patch;
                for ci in 0..g.c_in {
                    for ky in 0..3 {
                        let yy = y as isize + ky as isize - 1;
                        if yy < 0 || yy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let xx = x as isize + kx as isize - 1;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            sample[ci * g.plane() + yy as usize * w + xx as usize] +=
                                cols[row + ci * 9 + ky * 3 + kx];
                        }
                    }
                }
            }
        }
    }
}

/// 3×3 same-padded cross-correlation. `input` is `[C,H,W]` or `[B,C,H,W]`.
/// The nonlinearity is applied by the caller.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let g = conv_geom(input, kernel, bias)?;
    let plane = g.plane();
    let mut out = vec![T::zero(); g.batch * g.c_out * plane];
    let mut cols = Vec::new();
    let mut hwc = Vec::new();
    let step = g.samples_per_chunk();
    let mut s0 = 0;
    while s0 < g.batch {
        let s1 = (s0 + step).min(g.batch);
        im2col(&g, input.data(), s0, s1, &mut cols);
        let rows = (s1 - s0) * plane;
        hwc.clear();
        hwc.resize(rows * g.c_out, T::zero());
        gemm(
            MatRef::new(&cols, rows, g.patch()),
            MatRef::new(kernel.data(), g.c_out, g.patch()).t(),
            T::zero(),
            &mut hwc,
        );
        for s in s0..s1 {
            let dst = &mut out[s * g.c_out * plane..(s + 1) * g.c_out * plane];
            let src = &hwc[(s - s0) * plane * g.c_out..(s - s0 + 1) * plane * g.c_out];
            for p in 0..plane {
                for co in 0..g.c_out {
                    dst[co * plane + p] = src[p * g.c_out + co] + bias.data()[co];
                }
            }
        }
        s0 = s1;
    }
    let mut shape = input.shape().to_vec();
    let ch = shape.len() - 3;
    shape[ch] = g.c_out;
    Tensor::new(shape, out)
}

/// Returns the input gradient; accumulates kernel and bias gradients.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &[T],
    grad_kernel: &mut Tensor<T>,
    grad_bias: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let g = conv_geom(input, kernel, grad_bias)?;
    let plane = g.plane();
    if grad_out.len() != g.batch * g.c_out * plane {
        return Err(shape_err("conv2d backward", "grad_out size"));
    }
    let mut grad_in = vec![T::zero(); input.len()];
    let mut cols = Vec::new();
    let mut dhwc = Vec::new();
    let mut dcols = Vec::new();
    let step = g.samples_per_chunk();
    let mut s0 = 0;
    while s0 < g.batch {
        let s1 = (s0 + step).min(g.batch);
        let rows = (s1 - s0) * plane;
        dhwc.clear();
        dhwc.resize(rows * g.c_out, T::zero());
        for s in s0..s1 {
            let src = &grad_out[s * g.c_out * plane..(s + 1) * g.c_out * plane];
            let dst = &mut dhwc[(s - s0) * plane * g.c_out..(s - s0 + 1) * plane * g.c_out];
            for co in 0..g.c_out {
                for p in 0..plane {
                    let v = src[co * plane + p];
                    dst[p * g.c_out + co] = v;
                    grad_bias.data_mut()[co] += v;
                }
            }
        }
        im2col(&g, input.data(), s0, s1, &mut cols);
        gemm(
            MatRef::new(&dhwc, rows, g.c_out).t(),
            MatRef::new(&cols, rows, g.patch()),
            T::one(),
            grad_kernel.data_mut(),
        );
        dcols.clear();
        dcols.resize(rows * g.patch(), T::zero());
        gemm(
            MatRef::new(&dhwc, rows, g.c_out),
            MatRef::new(kernel.data(), g.c_out, g.patch()),
            T::zero(),
            &mut dcols,
        );
        col2im_add(&g, &dcols, s0, s1, &mut grad_in);
        s0 = s1;
    }
    Tensor::new(input.shape().to_vec(), grad_in)
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// LSTM weights: gate rows ordered input, forget, cell, output.
pub struct LstmWeights<'a, T> {
    pub w_ih: &'a Tensor<T>,
    pub w_hh: &'a Tensor<T>,
    pub bias: &'a Tensor<T>,
}

pub struct LstmGrads<'a, T> {
    pub w_ih: &'a mut Tensor<T>,
    pub w_hh: &'a mut Tensor<T>,
    pub bias: &'a mut Tensor<T>,
}

/// Values saved by [`lstm_step`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    pub x: Tensor<T>,
    pub h_prev: Tensor<T>,
    pub c_prev: Tensor<T>,
    /// Post-activation gates `[B, 4H]`.
    pub gates: Vec<T>,
    pub tanh_c: Vec<T>,
}

impl<'a, T: Real> LstmWeights<'a, T> {
    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[1]
    }

    fn check(&self, x: &Tensor<T>, h: &Tensor<T>, c: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let hs = self.hidden();
        let n = x.last_dim();
        let b = x.rows();
        let ok = self.w_ih.shape() == [4 * hs, n]
            && self.w_hh.shape() == [4 * hs, hs]
            && self.bias.shape() == [4 * hs]
            && h.last_dim() == hs
            && c.last_dim() == hs
            && h.rows() == b
            && c.rows() == b;
        if !ok {
            return Err(shape_err(
                "lstm",
                format!(
                    "x {:?} h {:?} c {:?} w_ih {:?} w_hh {:?} bias {:?}",
                    x.shape(),
                    h.shape(),
                    c.shape(),
                    self.w_ih.shape(),
                    self.w_hh.shape(),
                    self.bias.shape()
                ),
            ));
        }
        Ok((b, n, hs))
    }
}

/// One LSTM step over a batch: returns `(h', c', cache)`.
pub fn lstm_step<T: Real>(
    x: &Tensor<T>,
    h: &Tensor<T>,
    c: &Tensor<T>,
    w: &LstmWeights<'_, T>,
) -> Result<(Tensor<T>, Tensor<T>, LstmCache<T>)> {
    let (b, n, hs) = w.check(x, h, c)?;
    let g4 = 4 * hs;
    let mut gates = Vec::with_capacity(b * g4);
    for _ in 0..b {
        gates.extend_from_slice(w.bias.data());
    }
    gemm(
        MatRef::new(x.data(), b, n),
        MatRef::new(w.w_ih.data(), g4, n).t(),
        T::one(),
        &mut gates,
    );
    gemm(
        MatRef::new(h.data(), b, hs),
        MatRef::new(w.w_hh.data(), g4, hs).t(),
        T::one(),
        &mut gates,
    );
    let mut h_new = vec![T::zero(); b * hs];
    let mut c_new = vec![T::zero(); b * hs];
    let mut tanh_c = vec![T::zero(); b * hs];
    for r in 0..b {
        let gr = &mut gates[r * g4..(r + 1) * g4];
        for j in 0..hs {
            let i = sigmoid(gr[j]);
            let f = sigmoid(gr[hs + j]);
            let gg = gr[2 * hs + j].tanh();
            let o = sigmoid(gr[3 * hs + j]);
            gr[j] = i;
            gr[hs + j] = f;
            gr[2 * hs + j] = gg;
            gr[3 * hs + j] = o;
            let cn = f * c.data()[r * hs + j] + i * gg;
            let tc = cn.tanh();
            c_new[r * hs + j] = cn;
            tanh_c[r * hs + j] = tc;
            h_new[r * hs + j] = o * tc;
        }
    }
    let shape = h.shape().to_vec();
    let cache = LstmCache {
        x: x.clone(),
        h_prev: h.clone(),
        c_prev: c.clone(),
        gates,
        tanh_c,
    };
    Ok((
        Tensor::new(shape.clone(), h_new)?,
        Tensor::new(shape, c_new)?,
        cache,
    ))
}

/// Elementwise part of the LSTM backward pass: gradient w.r.t. the gate
/// pre-activations `[B, 4H]` and w.r.t. the previous cell state.
pub fn lstm_gate_grads<T: Real>(cache: &LstmCache<T>, grad_h: &[T], grad_c: &[T]) -> (Vec<T>, Vec<T>) {
    let hs = cache.h_prev.last_dim();
    let g4 = 4 * hs;
    let b = cache.h_prev.rows();
    let one = T::one();
    let mut dz = vec![T::zero(); b * g4];
    let mut dc_prev = vec![T::zero(); b * hs];
    for r in 0..b {
        let gr = &cache.gates[r * g4..(r + 1) * g4];
        let dzr = &mut dz[r * g4..(r + 1) * g4];
        for j in 0..hs {
            let k = r * hs + j;
            let (i, f, gg, o) = (gr[j], gr[hs + j], gr[2 * hs + j], gr[3 * hs + j]);
            let tc = cache.tanh_c[k];
            let dh = grad_h[k];
            let dc = grad_c[k] + dh * o * (one - tc * tc);
            dzr[j] = dc * gg * i * (one - i);
            dzr[hs + j] = dc * cache.c_prev.data()[k] * f * (one - f);
            dzr[2 * hs + j] = dc * i * (one - gg * gg);
            dzr[3 * hs + j] = dh * tc * o * (one - o);
            dc_prev[k] = dc * f;
        }
    }
    (dz, dc_prev)
}

/// Backward through one step. Returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_step_backward<T: Real>(
    cache: &LstmCache<T>,
    grad_h: &[T],
    grad_c: &[T],
    w: &LstmWeights<'_, T>,
    grads: &mut LstmGrads<'_, T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let hs = w.hidden();
    let g4 = 4 * hs;
    let b = cache.h_prev.rows();
    let n = cache.x.last_dim();
    let (dz, dc_prev) = lstm_gate_grads(cache, grad_h, grad_c);
    lstm_weight_grads(&dz, cache.x.data(), cache.h_prev.data(), b, grads);
    let mut dx = vec![T::zero(); b * n];
    gemm(
        MatRef::new(&dz, b, g4),
        MatRef::new(w.w_ih.data(), g4, n),
        T::zero(),
        &mut dx,
    );
    let mut dh_prev = vec![T::zero(); b * hs];
    gemm(
        MatRef::new(&dz, b, g4),
        MatRef::new(w.w_hh.data(), g4, hs),
        T::zero(),
        &mut dh_prev,
    );
    (
        Tensor::new(cache.x.shape().to_vec(), dx).expect("x shape"),
        Tensor::new(cache.h_prev.shape().to_vec(), dh_prev).expect("h shape"),
        Tensor::new(cache.c_prev.shape().to_vec(), dc_prev).expect("c shape"),
    )
}

/// Accumulates weight and bias gradients from gate gradients of `rows`
/// rows (possibly many timesteps stacked) and the matching inputs.
pub fn lstm_weight_grads<T: Real>(
    dz: &[T],
    x: &[T],
    h_prev: &[T],
    rows: usize,
    grads: &mut LstmGrads<'_, T>,
) {
    let g4 = grads.bias.len();
    let hs = g4 / 4;
    let n = grads.w_ih.last_dim();
    gemm(
        MatRef::new(dz, rows, g4).t(),
        MatRef::new(x, rows, n),
        T::one(),
        grads.w_ih.data_mut(),
    );
    gemm(
        MatRef::new(dz, rows, g4).t(),
        MatRef::new(h_prev, rows, hs),
        T::one(),
        grads.w_hh.data_mut(),
    );
    col_sum_into(dz, g4, grads.bias.data_mut());
}
