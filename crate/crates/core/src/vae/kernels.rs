//! Dense kernels for the recurrent network: matrix-vector products, outer
//! product accumulation and the LSTM cell with its exact derivative.

use super::model::{AffineSlots, LstmSlots};

/// `out = W·x + b` for a row-major `W` of shape `out.len() × x.len()`.
#[inline]
pub(crate) fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = b[r] + dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out += W·x`.
#[inline]
pub(crate) fn gemv_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o += dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out += Wᵗ·d` for `W` of shape `d.len() × out.len()`.
#[inline]
pub(crate) fn gemv_t_acc(w: &[f64], d: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        axpy(dr, &w[r * cols..(r + 1) * cols], out);
    }
}

/// `G += d·xᵗ`.
#[inline]
pub(crate) fn outer_acc(g: &mut [f64], d: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        axpy(dr, x, &mut g[r * cols..(r + 1) * cols]);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Borrowed view of one affine map.
pub(crate) struct Affine<'a> {
    pub weight: &'a [f64],
    pub bias: &'a [f64],
}

impl<'a> Affine<'a> {
    pub fn view(params: &'a [f64], s: &AffineSlots) -> Self {
        Affine {
            weight: &params[s.weight..s.weight + s.output * s.input],
            bias: &params[s.bias..s.bias + s.output],
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        affine(self.weight, self.bias, x, out);
    }
}

/// Accumulates the parameter gradient of `y = W·x + b` given `dy`, and
/// adds `Wᵗ·dy` into `dx`.
pub(crate) fn affine_backward(
    params: &[f64],
    grads: &mut [f64],
    s: &AffineSlots,
    x: &[f64],
    dy: &[f64],
    dx: &mut [f64],
) {
    let wlen = s.output * s.input;
    outer_acc(&mut grads[s.weight..s.weight + wlen], dy, x);
    for (g, d) in grads[s.bias..s.bias + s.output].iter_mut().zip(dy) {
        *g += d;
    }
    gemv_t_acc(&params[s.weight..s.weight + wlen], dy, dx);
}

/// Borrowed view of one LSTM layer.
pub(crate) struct Lstm<'a> {
    pub w_ih: &'a [f64],
    pub w_hh: &'a [f64],
    pub bias: &'a [f64],
    pub hidden: usize,
}

impl<'a> Lstm<'a> {
    pub fn view(params: &'a [f64], s: &LstmSlots) -> Self {
        let h4 = 4 * s.hidden;
        Lstm {
            w_ih: &params[s.w_ih..s.w_ih + h4 * s.input],
            w_hh: &params[s.w_hh..s.w_hh + h4 * s.hidden],
            bias: &params[s.bias..s.bias + h4],
            hidden: s.hidden,
        }
    }

    /// One step. `gates` receives the activated gates `[i, f, g, o]`.
    pub fn step(
        &self,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        gates: &mut [f64],
        c: &mut [f64],
        tanh_c: &mut [f64],
        h: &mut [f64],
    ) {
        let hd = self.hidden;
        affine(self.w_ih, self.bias, x, gates);
        gemv_acc(self.w_hh, h_prev, gates);
        for j in 0..hd {
            let i = sigmoid(gates[j]);
            let f = sigmoid(gates[hd + j]);
            let g = gates[2 * hd + j].tanh();
            let o = sigmoid(gates[3 * hd + j]);
            gates[j] = i;
            gates[hd + j] = f;
            gates[2 * hd + j] = g;
            gates[3 * hd + j] = o;
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = c[j].tanh();
            h[j] = o * tanh_c[j];
        }
    }
}

/// Scratch and state for backpropagating through one LSTM step.
pub(crate) struct LstmStepGrad<'a> {
    pub x: &'a [f64],
    pub h_prev: &'a [f64],
    pub c_prev: &'a [f64],
    pub gates: &'a [f64],
    pub tanh_c: &'a [f64],
}

/// Backward through one step.
///
/// On entry `dh` is the total gradient on this step's hidden output and `dc`
/// the gradient arriving on its cell state from the future. On exit `dc`
/// holds the gradient for the previous cell state, `dh_prev` and `dx` have
/// been accumulated into, and the layer's parameter gradients updated.
/// `da` is scratch of length `4·hidden`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_step_backward(
    params: &[f64],
    grads: &mut [f64],
    s: &LstmSlots,
    step: &LstmStepGrad<'_>,
    dh: &[f64],
    dc: &mut [f64],
    dh_prev: &mut [f64],
    dx: Option<&mut [f64]>,
    da: &mut [f64],
) {
    let hd = s.hidden;
    let g = step.gates;
    for j in 0..hd {
        let (i, f, cand, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
        let tc = step.tanh_c[j];
        let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
        da[j] = dcj * cand * i * (1.0 - i);
        da[hd + j] = dcj * step.c_prev[j] * f * (1.0 - f);
        da[2 * hd + j] = dcj * i * (1.0 - cand * cand);
        da[3 * hd + j] = dh[j] * tc * o * (1.0 - o);
        dc[j] = dcj * f;
    }
    let h4 = 4 * hd;
    outer_acc(&mut grads[s.w_ih..s.w_ih + h4 * s.input], da, step.x);
    outer_acc(&mut grads[s.w_hh..s.w_hh + h4 * hd], da, step.h_prev);
    for (gb, d) in grads[s.bias..s.bias + h4].iter_mut().zip(da.iter()) {
        *gb += d;
    }
    gemv_t_acc(&params[s.w_hh..s.w_hh + h4 * hd], da, dh_prev);
    if let Some(dx) = dx {
        gemv_t_acc(&params[s.w_ih..s.w_ih + h4 * s.input], da, dx);
    }
}
