//! Layers with explicit forward caches and backward passes. Activations are
//! row-major `rows x width` buffers.

use crate::element::Element;
use crate::params::Params;

/// Strided 2-D view: element `(i, j)` lives at `off + i * rs + j * cs`.
#[derive(Debug, Clone, Copy)]
pub struct View {
    pub off: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub fn rows(cols: usize) -> Self {
        Self { off: 0, rs: cols, cs: 1 }
    }

    /// Transposed view of a row-major `rows x cols` buffer.
    pub fn trans(cols: usize) -> Self {
        Self { off: 0, rs: 1, cs: cols }
    }

    pub fn at(self, off: usize) -> Self {
        Self { off, ..self }
    }

    fn last(&self, r: usize, c: usize) -> usize {
        self.off + (r - 1) * self.rs + (c - 1) * self.cs
    }
}

/// `C[m x n] = alpha * A[m x k] * B[k x n] + beta * C` on strided views.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Element>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    av: View,
    b: &[T],
    bv: View,
    beta: T,
    c: &mut [T],
    cv: View,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(cv.last(m, n) < c.len(), "gemm: C out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let x = &mut c[cv.off + i * cv.rs + j * cv.cs];
                *x = if beta == T::zero() { T::zero() } else { *x * beta };
            }
        }
        return;
    }
    assert!(av.last(m, k) < a.len(), "gemm: A out of bounds");
    assert!(bv.last(k, n) < b.len(), "gemm: B out of bounds");
    // SAFETY: bounds checked above; `c` is a unique borrow so it cannot alias.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(av.off),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr().add(bv.off),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr().add(cv.off),
            cv.rs as isize,
            cv.cs as isize,
        )
    }
}

/// Contiguous row-major product with optional transposes:
/// `C[m x n] = op(A) op(B) + beta C`, where `op(A)` is `m x k`.
#[allow(clippy::too_many_arguments)]
pub fn matmul<T: Element>(ta: bool, tb: bool, m: usize, k: usize, n: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    let av = if ta { View::trans(m) } else { View::rows(k) };
    let bv = if tb { View::trans(k) } else { View::rows(n) };
    gemm(m, k, n, T::one(), a, av, b, bv, beta, c, View::rows(n));
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub inp: usize,
    pub out: usize,
}

impl Linear {
    /// `y = x W + b` for `rows` inputs.
    pub fn forward<T: Element>(&self, p: &Params<T>, x: &[T], rows: usize) -> Vec<T> {
        debug_assert_eq!(x.len(), rows * self.inp);
        let bias = p.t(self.b);
        let mut y: Vec<T> = Vec::with_capacity(rows * self.out);
        for _ in 0..rows {
            y.extend_from_slice(bias);
        }
        matmul(false, false, rows, self.inp, self.out, x, p.t(self.w), T::one(), &mut y);
        y
    }

    /// Accumulates parameter gradients; returns `dx` when `want_dx`.
    pub fn backward<T: Element>(
        &self,
        p: &Params<T>,
        g: &mut Params<T>,
        x: &[T],
        dy: &[T],
        rows: usize,
        want_dx: bool,
    ) -> Option<Vec<T>> {
        matmul(true, false, self.inp, rows, self.out, x, dy, T::one(), g.t_mut(self.w));
        let db = g.t_mut(self.b);
        for row in dy.chunks_exact(self.out) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += *v;
            }
        }
        want_dx.then(|| {
            let mut dx = vec![T::zero(); rows * self.inp];
            matmul(false, true, rows, self.out, self.inp, dy, p.t(self.w), T::zero(), &mut dx);
            dx
        })
    }
}

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub g: usize,
    pub b: usize,
    pub width: usize,
}

pub struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

impl LayerNorm {
    pub fn forward<T: Element>(&self, p: &Params<T>, x: &[T]) -> (Vec<T>, LnCache<T>) {
        let w = self.width;
        let rows = x.len() / w;
        let (gamma, beta) = (p.t(self.g), p.t(self.b));
        let mut y = vec![T::zero(); x.len()];
        let mut xhat = vec![T::zero(); x.len()];
        let mut rstd = Vec::with_capacity(rows);
        let inv_w = T::of(1.0 / w as f64);
        for r in 0..rows {
            let row = &x[r * w..(r + 1) * w];
            let mean = row.iter().copied().sum::<T>() * inv_w;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() * inv_w;
            let rs = T::one() / (var + T::of(LN_EPS)).sqrt();
            for j in 0..w {
                let h = (row[j] - mean) * rs;
                xhat[r * w + j] = h;
                y[r * w + j] = h * gamma[j] + beta[j];
            }
            rstd.push(rs);
        }
        (y, LnCache { xhat, rstd })
    }

    pub fn backward<T: Element>(&self, p: &Params<T>, g: &mut Params<T>, cache: &LnCache<T>, dy: &[T]) -> Vec<T> {
        let w = self.width;
        let gamma = p.t(self.g);
        let mut dx = vec![T::zero(); dy.len()];
        {
            let dg = g.t_mut(self.g);
            for (row_dy, row_h) in dy.chunks_exact(w).zip(cache.xhat.chunks_exact(w)) {
                for j in 0..w {
                    dg[j] += row_dy[j] * row_h[j];
                }
            }
        }
        {
            let db = g.t_mut(self.b);
            for row_dy in dy.chunks_exact(w) {
                for j in 0..w {
                    db[j] += row_dy[j];
                }
            }
        }
        let inv_w = T::of(1.0 / w as f64);
        for (r, rs) in cache.rstd.iter().enumerate() {
            let row_dy = &dy[r * w..(r + 1) * w];
            let row_h = &cache.xhat[r * w..(r + 1) * w];
            let mut mean_d = T::zero();
            let mut mean_dh = T::zero();
            for j in 0..w {
                let d = row_dy[j] * gamma[j];
                mean_d += d;
                mean_dh += d * row_h[j];
            }
            mean_d *= inv_w;
            mean_dh *= inv_w;
            for j in 0..w {
                let d = row_dy[j] * gamma[j];
                dx[r * w + j] = *rs * (d - mean_d - row_h[j] * mean_dh);
            }
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
#[inline]
pub fn gelu<T: Element>(x: T) -> T {
    let u = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    T::of(0.5) * x * (T::one() + u.tanh())
}

#[inline]
pub fn gelu_grad<T: Element>(x: T) -> T {
    let u = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    let t = u.tanh();
    let du = T::of(GELU_C) * (T::one() + T::of(3.0 * GELU_A) * x * x);
    T::of(0.5) * (T::one() + t) + T::of(0.5) * x * (T::one() - t * t) * du
}

#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub l1: Linear,
    pub l2: Linear,
}

pub struct FfnCache<T> {
    x: Vec<T>,
    pre: Vec<T>,
    act: Vec<T>,
}

impl FeedForward {
    pub fn forward<T: Element>(&self, p: &Params<T>, x: &[T], rows: usize) -> (Vec<T>, FfnCache<T>) {
        let pre = self.l1.forward(p, x, rows);
        let act: Vec<T> = pre.iter().map(|&v| gelu(v)).collect();
        let y = self.l2.forward(p, &act, rows);
        (
            y,
            FfnCache {
                x: x.to_vec(),
                pre,
                act,
            },
        )
    }

    pub fn backward<T: Element>(&self, p: &Params<T>, g: &mut Params<T>, c: &FfnCache<T>, dy: &[T], rows: usize) -> Vec<T> {
        let mut dact = self.l2.backward(p, g, &c.act, dy, rows, true).unwrap();
        for (d, x) in dact.iter_mut().zip(&c.pre) {
            *d *= gelu_grad(*x);
        }
        self.l1.backward(p, g, &c.x, &dact, rows, true).unwrap()
    }
}

/// Multi-head attention. Self-attention when no key/value source is given.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub causal: bool,
}

pub struct AttnCache<T> {
    xq: Vec<T>,
    xkv: Option<Vec<T>>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Attention weights, `heads x lq x lk`.
    probs: Vec<T>,
    o: Vec<T>,
    lq: usize,
    lk: usize,
}

impl Attention {
    fn width(&self) -> usize {
        self.q.out
    }

    /// Key/value projections of an external source, reusable across calls.
    pub fn project_kv<T: Element>(&self, p: &Params<T>, src: &[T], lk: usize) -> (Vec<T>, Vec<T>) {
        (self.k.forward(p, src, lk), self.v.forward(p, src, lk))
    }

    pub fn forward<T: Element>(
        &self,
        p: &Params<T>,
        xq: &[T],
        lq: usize,
        kv_src: Option<(&[T], usize)>,
    ) -> (Vec<T>, AttnCache<T>) {
        let q = self.q.forward(p, xq, lq);
        let (k, v, lk) = match kv_src {
            Some((src, lk)) => {
                let (k, v) = self.project_kv(p, src, lk);
                (k, v, lk)
            }
            None => (self.k.forward(p, xq, lq), self.v.forward(p, xq, lq), lq),
        };
        let (y, probs, o) = self.attend(p, &q, &k, &v, lq, lk);
        let cache = AttnCache {
            xq: xq.to_vec(),
            xkv: kv_src.map(|(s, _)| s.to_vec()),
            q,
            k,
            v,
            probs,
            o,
            lq,
            lk,
        };
        (y, cache)
    }

    /// Attention given precomputed projections; returns (output, weights, head outputs).
    pub fn attend<T: Element>(
        &self,
        p: &Params<T>,
        q: &[T],
        k: &[T],
        v: &[T],
        lq: usize,
        lk: usize,
    ) -> (Vec<T>, Vec<T>, Vec<T>) {
        let w = self.width();
        let dh = w / self.heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let mut probs = vec![T::zero(); self.heads * lq * lk];
        let mut o = vec![T::zero(); lq * w];
        for h in 0..self.heads {
            let s = &mut probs[h * lq * lk..(h + 1) * lq * lk];
            // S = Q_h K_h^T
            gemm(
                lq,
                dh,
                lk,
                scale,
                q,
                View::rows(w).at(h * dh),
                k,
                View::trans(w).at(h * dh),
                T::zero(),
                s,
                View::rows(lk),
            );
            for i in 0..lq {
                let row = &mut s[i * lk..(i + 1) * lk];
                // causal: query i sees keys 0..=i (offset when lk > lq)
                let visible = if self.causal { (i + 1 + lk.saturating_sub(lq)).min(lk) } else { lk };
                softmax_in_place(&mut row[..visible]);
                row[visible..].iter_mut().for_each(|x| *x = T::zero());
            }
            gemm(
                lq,
                lk,
                dh,
                T::one(),
                s,
                View::rows(lk),
                v,
                View::rows(w).at(h * dh),
                T::zero(),
                &mut o,
                View::rows(w).at(h * dh),
            );
        }
        let y = self.o.forward(p, &o, lq);
        (y, probs, o)
    }

    /// Returns `(dxq, dxkv)`; `dxkv` is `None` for self-attention, whose key
    /// and value gradients are folded into `dxq`.
    pub fn backward<T: Element>(
        &self,
        p: &Params<T>,
        g: &mut Params<T>,
        c: &AttnCache<T>,
        dy: &[T],
    ) -> (Vec<T>, Option<Vec<T>>) {
        let w = self.width();
        let dh = w / self.heads;
        let (lq, lk) = (c.lq, c.lk);
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let d_o = self.o.backward(p, g, &c.o, dy, lq, true).unwrap();
        let mut dq = vec![T::zero(); lq * w];
        let mut dk = vec![T::zero(); lk * w];
        let mut dv = vec![T::zero(); lk * w];
        let mut dp = vec![T::zero(); lq * lk];
        for h in 0..self.heads {
            let probs = &c.probs[h * lq * lk..(h + 1) * lq * lk];
            // dP = dO_h V_h^T
            gemm(
                lq,
                dh,
                lk,
                T::one(),
                &d_o,
                View::rows(w).at(h * dh),
                &c.v,
                View::trans(w).at(h * dh),
                T::zero(),
                &mut dp,
                View::rows(lk),
            );
            // dV_h = P^T dO_h
            gemm(
                lk,
                lq,
                dh,
                T::one(),
                probs,
                View::trans(lk),
                &d_o,
                View::rows(w).at(h * dh),
                T::zero(),
                &mut dv,
                View::rows(w).at(h * dh),
            );
            // dS = P * (dP - rowsum(dP * P)), then the 1/sqrt(dh) scale
            for i in 0..lq {
                let pr = &probs[i * lk..(i + 1) * lk];
                let dr = &mut dp[i * lk..(i + 1) * lk];
                let dot: T = pr.iter().zip(dr.iter()).map(|(a, b)| *a * *b).sum();
                for j in 0..lk {
                    dr[j] = pr[j] * (dr[j] - dot) * scale;
                }
            }
            // dQ_h = dS K_h ; dK_h = dS^T Q_h
            gemm(
                lq,
                lk,
                dh,
                T::one(),
                &dp,
                View::rows(lk),
                &c.k,
                View::rows(w).at(h * dh),
                T::zero(),
                &mut dq,
                View::rows(w).at(h * dh),
            );
            gemm(
                lk,
                lq,
                dh,
                T::one(),
                &dp,
                View::trans(lk),
                &c.q,
                View::rows(w).at(h * dh),
                T::zero(),
                &mut dk,
                View::rows(w).at(h * dh),
            );
        }
        let mut dxq = self.q.backward(p, g, &c.xq, &dq, lq, true).unwrap();
        match &c.xkv {
            None => {
                let a = self.k.backward(p, g, &c.xq, &dk, lk, true).unwrap();
                let b = self.v.backward(p, g, &c.xq, &dv, lk, true).unwrap();
                for ((x, y), z) in dxq.iter_mut().zip(a).zip(b) {
                    *x += y + z;
                }
                (dxq, None)
            }
            Some(src) => {
                let mut a = self.k.backward(p, g, src, &dk, lk, true).unwrap();
                let b = self.v.backward(p, g, src, &dv, lk, true).unwrap();
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                (dxq, Some(a))
            }
        }
    }
}

pub fn softmax_in_place<T: Element>(row: &mut [T]) {
    if row.is_empty() {
        return;
    }
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = T::one() / sum;
    row.iter_mut().for_each(|x| *x *= inv);
}

/// Log-softmax of one row, computed in f64.
pub fn log_softmax(row: &[impl Element]) -> Vec<f64> {
    let max = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v.f64() - max).exp()).sum::<f64>().ln() + max;
    row.iter().map(|v| v.f64() - lse).collect()
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax<T: Element>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

pub struct CeStats {
    pub loss_sum: f64,
    pub correct: usize,
    pub count: usize,
}

/// Cross-entropy of `logits` (`targets.len() x vocab`) against targets,
/// skipping positions where `mask` is false. Writes `(softmax - onehot) * scale`
/// into `dlogits` when given.
pub fn cross_entropy<T: Element>(
    logits: &[T],
    targets: &[u32],
    mask: &[bool],
    vocab: usize,
    scale: T,
    mut dlogits: Option<&mut [T]>,
) -> CeStats {
    let mut stats = CeStats {
        loss_sum: 0.0,
        correct: 0,
        count: 0,
    };
    for (i, (&t, &m)) in targets.iter().zip(mask).enumerate() {
        let row = &logits[i * vocab..(i + 1) * vocab];
        if let Some(d) = dlogits.as_deref_mut() {
            d[i * vocab..(i + 1) * vocab].iter_mut().for_each(|x| *x = T::zero());
        }
        if !m {
            continue;
        }
        let t = t as usize;
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|v| (*v - max).exp()).sum();
        let lse = sum.ln() + max;
        stats.loss_sum += (lse - row[t]).f64();
        stats.count += 1;
        if argmax(row) == t {
            stats.correct += 1;
        }
        if let Some(d) = dlogits.as_deref_mut() {
            let drow = &mut d[i * vocab..(i + 1) * vocab];
            for j in 0..vocab {
                drow[j] = (row[j] - lse).exp() * scale;
            }
            drow[t] -= scale;
        }
    }
    stats
}

/// Sinusoidal position table, `len x width`.
pub fn positional_table<T: Element>(len: usize, width: usize) -> Vec<T> {
    let mut pe = vec![T::zero(); len * width];
    for pos in 0..len {
        for i in 0..width / 2 {
            let freq = 1.0 / 10_000f64.powf(2.0 * i as f64 / width as f64);
            pe[pos * width + 2 * i] = T::of((pos as f64 * freq).sin());
            pe[pos * width + 2 * i + 1] = T::of((pos as f64 * freq).cos());
        }
    }
    pe
}
