//! Neural-network primitives with hand-written reverse-mode gradients.
//!
//! Each primitive comes as a forward function returning whatever the
//! backward pass needs (pre-activations, normalized outputs, attention
//! weights) plus a backward function that consumes those caches, the
//! upstream gradient, and a gradient [`ParamSet`] to accumulate into.
//! Conventions:
//!
//! * activations are `T x d` matrices, one row per frame token;
//! * `Linear` stores its weight as `d_in x d_out`, so `y = x W + b`;
//! * every backward *accumulates* (`+=`) into the gradient set, because
//!   several paths can share one parameter.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

use super::params::{ParamId, ParamSet};

/// Fully connected layer descriptor; the weights live in a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    /// Create with uniform Xavier initialization, or all-zero when
    /// `zero_init` (used for modulation and output projections).
    pub fn new(
        params: &mut ParamSet,
        rng: &mut impl Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
        zero_init: bool,
    ) -> Linear {
        let bound = (6.0 / (d_in + d_out) as f64).sqrt();
        let w = params.add_mat(&format!("{name}.w"), d_in, d_out, || {
            if zero_init {
                0.0
            } else {
                rng.gen_range(-bound..=bound)
            }
        });
        let b = params.add_vec(&format!("{name}.b"), d_out, || 0.0);
        Linear { w, b, d_in, d_out }
    }

    /// `y = x W + b`, shapes `T x d_in -> T x d_out`.
    pub fn forward(&self, p: &ParamSet, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(p.mat(self.w));
        y += p.vec(self.b);
        y
    }

    /// Accumulate `dW`, `db` and return `dx`.
    pub fn backward(
        &self,
        p: &ParamSet,
        x: &Array2<f64>,
        dy: &Array2<f64>,
        grads: &mut ParamSet,
    ) -> Array2<f64> {
        *grads.mat_mut(self.w) += &x.t().dot(dy);
        *grads.vec_mut(self.b) += &dy.sum_axis(Axis(0));
        dy.dot(&p.mat(self.w).t())
    }
}

const LN_EPS: f64 = 1e-6;

/// Per-row layer normalization without learnable affine parameters.
/// Returns the normalized rows and the per-row inverse standard deviation
/// needed by the backward pass.
pub fn layer_norm(x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let d = x.ncols() as f64;
    let mut y = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (t, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| v * inv);
        inv_std[t] = inv;
    }
    (y, inv_std)
}

/// Backward of [`layer_norm`], expressed with the normalized output `y`:
/// `dx = inv_std * (dy - mean(dy) - y * mean(dy * y))` per row.
pub fn layer_norm_backward(
    y: &Array2<f64>,
    inv_std: &Array1<f64>,
    dy: &Array2<f64>,
) -> Array2<f64> {
    let d = y.ncols() as f64;
    let mut dx = Array2::zeros(y.dim());
    for t in 0..y.nrows() {
        let yr = y.row(t);
        let dyr = dy.row(t);
        let mean_dy = dyr.sum() / d;
        let mean_dyy = yr.iter().zip(dyr).map(|(a, b)| a * b).sum::<f64>() / d;
        let inv = inv_std[t];
        for c in 0..y.ncols() {
            dx[[t, c]] = inv * (dyr[c] - mean_dy - yr[c] * mean_dyy);
        }
    }
    dx
}

/// `x * sigmoid(x)` elementwise.
pub fn silu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v * sigmoid(v))
}

/// Backward of [`silu`] given the pre-activation `x`.
pub fn silu_backward(x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |g, &v| {
        let s = sigmoid(v);
        *g *= s * (1.0 + v * (1.0 - s));
    });
    dx
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Row-wise softmax in place. `-inf` entries (masked) become exact zeros.
fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        row.mapv_inplace(|v| {
            let e = (v - max).exp();
            sum += e;
            e
        });
        row.mapv_inplace(|v| v / sum);
    }
}

/// Backward of row-wise softmax: `ds = (da - sum(da * a)) * a` per row.
fn softmax_backward(a: &Array2<f64>, da: &Array2<f64>) -> Array2<f64> {
    let mut ds = Array2::zeros(a.dim());
    for t in 0..a.nrows() {
        let ar = a.row(t);
        let dar = da.row(t);
        let dot = ar.iter().zip(dar).map(|(x, y)| x * y).sum::<f64>();
        for c in 0..a.ncols() {
            ds[[t, c]] = (dar[c] - dot) * ar[c];
        }
    }
    ds
}

/// Multi-head attention over frame tokens. Queries come from `x_q`, keys
/// and values from `x_kv` (equal for self-attention, the partner stream
/// for cross-attention). An optional window restricts attention to frame
/// pairs with `|i - j| <= window`.
#[derive(Debug, Clone)]
pub struct Attention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

/// Intermediate state of one attention forward pass.
pub struct AttnCache {
    x_q: Array2<f64>,
    x_kv: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Per-head softmax weights, each `T x T`.
    weights: Vec<Array2<f64>>,
    concat: Array2<f64>,
}

impl AttnCache {
    /// Empty cache for pre-filling slots that a later stage overwrites.
    pub fn placeholder() -> AttnCache {
        AttnCache {
            x_q: Array2::zeros((0, 0)),
            x_kv: Array2::zeros((0, 0)),
            q: Array2::zeros((0, 0)),
            k: Array2::zeros((0, 0)),
            v: Array2::zeros((0, 0)),
            weights: Vec::new(),
            concat: Array2::zeros((0, 0)),
        }
    }
}

impl Attention {
    pub fn new(
        params: &mut ParamSet,
        rng: &mut impl Rng,
        name: &str,
        width: usize,
        heads: usize,
    ) -> Attention {
        assert_eq!(width % heads, 0, "width must divide into heads");
        Attention {
            wq: Linear::new(params, rng, &format!("{name}.wq"), width, width, false),
            wk: Linear::new(params, rng, &format!("{name}.wk"), width, width, false),
            wv: Linear::new(params, rng, &format!("{name}.wv"), width, width, false),
            wo: Linear::new(params, rng, &format!("{name}.wo"), width, width, false),
            heads,
        }
    }

    pub fn forward(
        &self,
        p: &ParamSet,
        x_q: &Array2<f64>,
        x_kv: &Array2<f64>,
        window: Option<usize>,
    ) -> (Array2<f64>, AttnCache) {
        let t_q = x_q.nrows();
        let t_kv = x_kv.nrows();
        let width = self.wq.d_out;
        let dh = width / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.wq.forward(p, x_q);
        let k = self.wk.forward(p, x_kv);
        let v = self.wv.forward(p, x_kv);
        let mut concat = Array2::zeros((t_q, width));
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let mut scores = qh.dot(&kh.t());
            scores *= scale;
            if let Some(w) = window {
                for i in 0..t_q {
                    for j in 0..t_kv {
                        if i.abs_diff(j) > w {
                            scores[[i, j]] = f64::NEG_INFINITY;
                        }
                    }
                }
            }
            softmax_rows(&mut scores);
            concat.slice_mut(cols).assign(&scores.dot(&vh));
            weights.push(scores);
        }
        let out = self.wo.forward(p, &concat);
        let cache = AttnCache {
            x_q: x_q.clone(),
            x_kv: x_kv.clone(),
            q,
            k,
            v,
            weights,
            concat,
        };
        (out, cache)
    }

    /// Returns `(dx_q, dx_kv)`. For self-attention callers the two must be
    /// summed.
    pub fn backward(
        &self,
        p: &ParamSet,
        cache: &AttnCache,
        d_out: &Array2<f64>,
        grads: &mut ParamSet,
    ) -> (Array2<f64>, Array2<f64>) {
        let width = self.wq.d_out;
        let dh = width / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let d_concat = self.wo.backward(p, &cache.concat, d_out, grads);
        let mut dq = Array2::zeros(cache.q.dim());
        let mut dk = Array2::zeros(cache.k.dim());
        let mut dv = Array2::zeros(cache.v.dim());
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let a = &cache.weights[h];
            let d_oh = d_concat.slice(cols);
            let vh = cache.v.slice(cols);
            let qh = cache.q.slice(cols);
            let kh = cache.k.slice(cols);
            let da = d_oh.dot(&vh.t());
            dv.slice_mut(cols).assign(&a.t().dot(&d_oh));
            let mut ds = softmax_backward(a, &da);
            ds *= scale;
            dq.slice_mut(cols).assign(&ds.dot(&kh));
            dk.slice_mut(cols).assign(&ds.t().dot(&qh));
        }
        let dx_q = self.wq.backward(p, &cache.x_q, &dq, grads);
        let mut dx_kv = self.wk.backward(p, &cache.x_kv, &dk, grads);
        dx_kv += &self.wv.backward(p, &cache.x_kv, &dv, grads);
        (dx_q, dx_kv)
    }
}

/// Sinusoidal embedding table: row `t` encodes position `t` in `width`
/// channels with geometrically spaced frequencies (pairs of sin/cos).
pub fn sinusoidal_table(positions: usize, width: usize) -> Array2<f64> {
    assert_eq!(width % 2, 0, "sinusoidal width must be even");
    let mut table = Array2::zeros((positions, width));
    for t in 0..positions {
        fill_sinusoidal(t as f64, table.row_mut(t).as_slice_mut().expect("row-major"));
    }
    table
}

/// One sinusoidal embedding row for an arbitrary scalar position.
pub fn sinusoidal_vec(position: f64, width: usize) -> Array1<f64> {
    assert_eq!(width % 2, 0, "sinusoidal width must be even");
    let mut v = Array1::zeros(width);
    fill_sinusoidal(position, v.as_slice_mut().expect("contiguous"));
    v
}

fn fill_sinusoidal(position: f64, out: &mut [f64]) {
    let half = out.len() / 2;
    for i in 0..half {
        let freq = (10_000f64).powf(-(i as f64) / half as f64);
        out[2 * i] = (position * freq).sin();
        out[2 * i + 1] = (position * freq).cos();
    }
}
