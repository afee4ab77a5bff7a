//! Row-wise kernels with hand-written backward passes.

use super::real::Real;

pub(crate) const LN_EPS: f64 = 1e-5;

/// Formula perturbations used to confirm that gradient checks catch
/// broken backward passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// Drops the cubic term from the GELU derivative.
    GeluDerivative,
    /// Omits the row-sum correction in the softmax backward pass.
    SoftmaxBackward,
    /// Omits the mean-centering term in the layer-norm backward pass.
    LayerNormBackward,
}

pub(crate) struct LnCache<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

pub(crate) fn layer_norm<T: Real>(x: &[T], g: &[T], b: &[T], d: usize, out: &mut [T]) -> LnCache<T> {
    let rows = x.len() / d;
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    let inv_d = T::lit(1.0 / d as f64);
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mu = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() * inv_d;
        let rs = T::one() / (var + T::lit(LN_EPS)).sqrt();
        rstd[r] = rs;
        for i in 0..d {
            let xh = (row[i] - mu) * rs;
            xhat[r * d + i] = xh;
            out[r * d + i] = g[i] * xh + b[i];
        }
    }
    LnCache { xhat, rstd }
}

/// Accumulates gain/bias gradients and adds the input gradient into `dx`.
pub(crate) fn layer_norm_backward<T: Real>(
    dy: &[T],
    cache: &LnCache<T>,
    g: &[T],
    d: usize,
    dg: &mut [T],
    db: &mut [T],
    dx: &mut [T],
    mutation: Option<Mutation>,
) {
    let rows = dy.len() / d;
    let inv_d = T::lit(1.0 / d as f64);
    let mut dxhat = vec![T::zero(); d];
    for r in 0..rows {
        let (dyr, xh) = (&dy[r * d..(r + 1) * d], &cache.xhat[r * d..(r + 1) * d]);
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for i in 0..d {
            dg[i] = dg[i] + dyr[i] * xh[i];
            db[i] = db[i] + dyr[i];
            dxhat[i] = dyr[i] * g[i];
            mean_dxhat = mean_dxhat + dxhat[i];
            mean_dxhat_xhat = mean_dxhat_xhat + dxhat[i] * xh[i];
        }
        mean_dxhat = mean_dxhat * inv_d;
        mean_dxhat_xhat = mean_dxhat_xhat * inv_d;
        if mutation == Some(Mutation::LayerNormBackward) {
            mean_dxhat = T::zero();
        }
        let rs = cache.rstd[r];
        for i in 0..d {
            dx[r * d + i] = dx[r * d + i] + rs * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu<T: Real>(x: T) -> T {
    let (c, a, half) = (T::lit(GELU_C), T::lit(GELU_A), T::lit(0.5));
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub(crate) fn gelu_grad<T: Real>(x: T, mutation: Option<Mutation>) -> T {
    let (c, a, half) = (T::lit(GELU_C), T::lit(GELU_A), T::lit(0.5));
    let t = (c * (x + a * x * x * x)).tanh();
    let cubic = if mutation == Some(Mutation::GeluDerivative) { T::zero() } else { T::lit(3.0) * a * x * x };
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + cubic)
}

/// In-place softmax over each row of length `n`, after subtracting the
/// row maximum. `-inf` entries become exact zeros.
pub(crate) fn softmax_rows<T: Real>(x: &mut [T], n: usize) {
    for row in x.chunks_mut(n) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        let inv = T::one() / sum;
        for v in row.iter_mut() {
            *v = *v * inv;
        }
    }
}

/// Sinusoidal position encoding for position `pos`, added into `row`.
pub(crate) fn add_position<T: Real>(row: &mut [T], pos: usize) {
    let d = row.len();
    for i in 0..d / 2 {
        let freq = (-(2.0 * i as f64 / d as f64) * 10000f64.ln()).exp();
        let angle = pos as f64 * freq;
        row[2 * i] = row[2 * i] + T::lit(angle.sin());
        row[2 * i + 1] = row[2 * i + 1] + T::lit(angle.cos());
    }
}

/// Multi-head attention of `q` (`tq × d`) over `k`, `v` (`tk × d`). With
/// `causal`, query `i` sees keys `0..=i + (tk - tq)`. Writes the
/// concatenated head outputs into `out` and returns the attention weights
/// (`heads × tq × tk`).
pub(crate) fn attention<T: Real>(q: &[T], k: &[T], v: &[T], tq: usize, tk: usize, d: usize, heads: usize, causal: bool, out: &mut [T]) -> Vec<T> {
    let dh = d / heads;
    let scale = T::lit(1.0 / (dh as f64).sqrt());
    let mut probs = vec![T::zero(); heads * tq * tk];
    for h in 0..heads {
        let p = &mut probs[h * tq * tk..(h + 1) * tq * tk];
        // S = scale · Q_h K_hᵀ
        T::gemm(tq, dh, tk, scale, &q[h * dh..], d as isize, 1, &k[h * dh..], 1, d as isize, T::zero(), p, tk as isize, 1);
        if causal {
            let shift = tk - tq;
            for i in 0..tq {
                for s in &mut p[i * tk + i + shift + 1..(i + 1) * tk] {
                    *s = T::neg_infinity();
                }
            }
        }
        softmax_rows(p, tk);
        // O_h = P V_h
        T::gemm(tq, tk, dh, T::one(), p, tk as isize, 1, &v[h * dh..], d as isize, 1, T::zero(), &mut out[h * dh..], d as isize, 1);
    }
    probs
}

/// Backward of [`attention`]: accumulates into `dq`, `dk`, `dv`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward<T: Real>(
    dout: &[T],
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    tq: usize,
    tk: usize,
    d: usize,
    heads: usize,
    dq: &mut [T],
    dk: &mut [T],
    dv: &mut [T],
    mutation: Option<Mutation>,
) {
    let dh = d / heads;
    let scale = T::lit(1.0 / (dh as f64).sqrt());
    let mut ds = vec![T::zero(); tq * tk];
    for h in 0..heads {
        let p = &probs[h * tq * tk..(h + 1) * tq * tk];
        // dV_h += Pᵀ dO_h
        T::gemm(tk, tq, dh, T::one(), p, 1, tk as isize, &dout[h * dh..], d as isize, 1, T::one(), &mut dv[h * dh..], d as isize, 1);
        // dP = dO_h V_hᵀ
        T::gemm(tq, dh, tk, T::one(), &dout[h * dh..], d as isize, 1, &v[h * dh..], 1, d as isize, T::zero(), &mut ds, tk as isize, 1);
        for i in 0..tq {
            let (pr, dr) = (&p[i * tk..(i + 1) * tk], &mut ds[i * tk..(i + 1) * tk]);
            let dot = if mutation == Some(Mutation::SoftmaxBackward) {
                T::zero()
            } else {
                pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum::<T>()
            };
            for j in 0..tk {
                dr[j] = pr[j] * (dr[j] - dot) * scale;
            }
        }
        // dQ_h += dS K_h ; dK_h += dSᵀ Q_h
        T::gemm(tq, tk, dh, T::one(), &ds, tk as isize, 1, &k[h * dh..], d as isize, 1, T::one(), &mut dq[h * dh..], d as isize, 1);
        T::gemm(tk, tq, dh, T::one(), &ds, 1, tk as isize, &q[h * dh..], d as isize, 1, T::one(), &mut dk[h * dh..], d as isize, 1);
    }
}

/// `y = x W + b` for `rows × n_in` input.
pub(crate) fn linear<T: Real>(x: &[T], w: &[T], b: &[T], rows: usize, n_in: usize, n_out: usize) -> Vec<T> {
    let mut y = vec![T::zero(); rows * n_out];
    for r in 0..rows {
        y[r * n_out..(r + 1) * n_out].copy_from_slice(b);
    }
    super::real::matmul(rows, n_in, n_out, x, false, w, false, &mut y, true);
    y
}

/// Backward of [`linear`]: `dW += xᵀ dy`, `db += Σ dy`, `dx += dy Wᵀ`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward<T: Real>(
    dy: &[T],
    x: &[T],
    w: &[T],
    rows: usize,
    n_in: usize,
    n_out: usize,
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    super::real::matmul(n_in, rows, n_out, x, true, dy, false, dw, true);
    for r in 0..rows {
        for (b, &g) in db.iter_mut().zip(&dy[r * n_out..(r + 1) * n_out]) {
            *b = *b + g;
        }
    }
    if let Some(dx) = dx {
        super::real::matmul(rows, n_out, n_in, dy, false, w, true, dx, true);
    }
}
