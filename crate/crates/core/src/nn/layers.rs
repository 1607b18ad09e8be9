//! Layer primitives with hand-derived backward passes.
//!
//! All layers operate on one sample at a time with flat row-major slices;
//! batching is a caller-side loop. `backward` methods accumulate parameter
//! gradients (callers zero them per step) and return the input gradient.

use rand::Rng;

use crate::num::{real, Real};

/// Valid (no padding) 1D convolution, stride 1.
/// Weights are `[out_ch][in_ch][k]`, input `[in_ch][t]`, output
/// `[out_ch][t - k + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<F> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub w: Vec<F>,
    pub b: Vec<F>,
    pub dw: Vec<F>,
    pub db: Vec<F>,
}

impl<F: Real> Conv1d<F> {
    pub fn new(in_ch: usize, out_ch: usize, k: usize, rng: &mut impl Rng) -> Self {
        let fan_in = (in_ch * k) as f64;
        let limit = (6.0 / fan_in).sqrt();
        let n = out_ch * in_ch * k;
        let w = (0..n).map(|_| real::<F>(rng.random_range(-limit..limit))).collect();
        Conv1d {
            in_ch,
            out_ch,
            k,
            w,
            b: vec![F::zero(); out_ch],
            dw: vec![F::zero(); n],
            db: vec![F::zero(); out_ch],
        }
    }

    pub fn t_out(&self, t_in: usize) -> usize {
        assert!(t_in >= self.k, "input shorter than kernel");
        t_in - self.k + 1
    }

    pub fn forward(&self, x: &[F], t_in: usize) -> Vec<F> {
        assert_eq!(x.len(), self.in_ch * t_in, "conv input shape");
        let t_out = self.t_out(t_in);
        let mut y = vec![F::zero(); self.out_ch * t_out];
        for oc in 0..self.out_ch {
            let yrow = &mut y[oc * t_out..(oc + 1) * t_out];
            yrow.fill(self.b[oc]);
            for ic in 0..self.in_ch {
                let xrow = &x[ic * t_in..(ic + 1) * t_in];
                let wrow = &self.w[(oc * self.in_ch + ic) * self.k..(oc * self.in_ch + ic + 1) * self.k];
                for (t, yv) in yrow.iter_mut().enumerate() {
                    let mut acc = F::zero();
                    for (j, &wj) in wrow.iter().enumerate() {
                        acc += wj * xrow[t + j];
                    }
                    *yv += acc;
                }
            }
        }
        y
    }

    pub fn backward(&mut self, x: &[F], dy: &[F], t_in: usize) -> Vec<F> {
        let t_out = self.t_out(t_in);
        assert_eq!(dy.len(), self.out_ch * t_out, "conv output grad shape");
        let mut dx = vec![F::zero(); self.in_ch * t_in];
        for oc in 0..self.out_ch {
            let dyrow = &dy[oc * t_out..(oc + 1) * t_out];
            self.db[oc] += dyrow.iter().copied().sum::<F>();
            for ic in 0..self.in_ch {
                let xrow = &x[ic * t_in..(ic + 1) * t_in];
                let wbase = (oc * self.in_ch + ic) * self.k;
                let dxrow = &mut dx[ic * t_in..(ic + 1) * t_in];
                for (t, &g) in dyrow.iter().enumerate() {
                    for j in 0..self.k {
                        self.dw[wbase + j] += g * xrow[t + j];
                        dxrow[t + j] += g * self.w[wbase + j];
                    }
                }
            }
        }
        dx
    }

    pub fn zero_grads(&mut self) {
        self.dw.fill(F::zero());
        self.db.fill(F::zero());
    }
}

/// Fully connected layer, `y = W x + b` with `W` stored `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<F>,
    pub b: Vec<F>,
    pub dw: Vec<F>,
    pub db: Vec<F>,
}

impl<F: Real> Linear<F> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / in_dim as f64).sqrt();
        let n = in_dim * out_dim;
        let w = (0..n).map(|_| real::<F>(rng.random_range(-limit..limit))).collect();
        Linear {
            in_dim,
            out_dim,
            w,
            b: vec![F::zero(); out_dim],
            dw: vec![F::zero(); n],
            db: vec![F::zero(); out_dim],
        }
    }

    pub fn forward(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.in_dim, "linear input shape");
        (0..self.out_dim)
            .map(|o| {
                let wrow = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = self.b[o];
                for (wv, xv) in wrow.iter().zip(x) {
                    acc += *wv * *xv;
                }
                acc
            })
            .collect()
    }

    pub fn backward(&mut self, x: &[F], dy: &[F]) -> Vec<F> {
        assert_eq!(dy.len(), self.out_dim, "linear output grad shape");
        let mut dx = vec![F::zero(); self.in_dim];
        for (o, &g) in dy.iter().enumerate() {
            self.db[o] += g;
            let wrow = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let dwrow = &mut self.dw[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                dwrow[i] += g * x[i];
                dx[i] += g * wrow[i];
            }
        }
        dx
    }

    pub fn zero_grads(&mut self) {
        self.dw.fill(F::zero());
        self.db.fill(F::zero());
    }
}

pub fn relu_forward<F: Real>(x: &[F]) -> Vec<F> {
    x.iter().map(|&v| if v > F::zero() { v } else { F::zero() }).collect()
}

/// Gradient masked by the pre-activation input.
pub fn relu_backward<F: Real>(x: &[F], dy: &[F]) -> Vec<F> {
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| if v > F::zero() { g } else { F::zero() })
        .collect()
}

/// Mean over the time axis: `[ch][t]` to `[ch]`.
pub fn global_avg_pool<F: Real>(x: &[F], ch: usize, t: usize) -> Vec<F> {
    assert_eq!(x.len(), ch * t, "pool input shape");
    let inv = F::one() / real::<F>(t as f64);
    (0..ch)
        .map(|c| x[c * t..(c + 1) * t].iter().copied().sum::<F>() * inv)
        .collect()
}

pub fn global_avg_pool_backward<F: Real>(dy: &[F], ch: usize, t: usize) -> Vec<F> {
    assert_eq!(dy.len(), ch, "pool output grad shape");
    let inv = F::one() / real::<F>(t as f64);
    let mut dx = vec![F::zero(); ch * t];
    for c in 0..ch {
        let g = dy[c] * inv;
        dx[c * t..(c + 1) * t].fill(g);
    }
    dx
}

/// Numerically stable softmax.
pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let m = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&v| (v - m).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Returns the unit vector and the original norm.
pub fn l2_normalize<F: Real>(v: &[F]) -> (Vec<F>, F) {
    let norm = v.iter().map(|&x| x * x).sum::<F>().sqrt().max(real(1e-12));
    (v.iter().map(|&x| x / norm).collect(), norm)
}

/// Backward through `z = v / ||v||`: `dv = (dz - z (z . dz)) / ||v||`.
pub fn l2_normalize_backward<F: Real>(z: &[F], norm: F, dz: &[F]) -> Vec<F> {
    let zdz: F = z.iter().zip(dz).map(|(&a, &b)| a * b).sum();
    z.iter()
        .zip(dz)
        .map(|(&zi, &gi)| (gi - zi * zdz) / norm)
        .collect()
}
