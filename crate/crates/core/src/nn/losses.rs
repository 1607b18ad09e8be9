//! Loss functions returning both the value and the gradient with respect to
//! their inputs, so the model backward pass can chain them directly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{real, Real};

use super::layers::softmax;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    /// Contrastive losses need at least one positive pair per anchor.
    #[error("batch has no positive pair for anchor {anchor}")]
    DegenerateBatch { anchor: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelRange { label: usize, classes: usize },
}

/// Weights for the combined objective
/// `L = L_ce + alpha_tm * L_triplet + L_supcon`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LossConfig {
    pub alpha_tm: f64,
    pub triplet_margin: f64,
    pub triplet_p: f64,
    pub supcon_tau: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { alpha_tm: 1.0, triplet_margin: 1.0, triplet_p: 2.0, supcon_tau: 0.1 }
    }
}

/// Softmax cross-entropy for one sample. Returns `(loss, dlogits)` where
/// `dlogits = p - onehot(label)`.
pub fn cross_entropy<F: Real>(logits: &[F], label: usize) -> Result<(F, Vec<F>), LossError> {
    if label >= logits.len() {
        return Err(LossError::LabelRange { label, classes: logits.len() });
    }
    let p = softmax(logits);
    let eps = real::<F>(1e-12);
    let loss = -(p[label].max(eps)).ln();
    let mut d = p;
    d[label] -= F::one();
    Ok((loss, d))
}

/// Mean cross-entropy over a batch of logit rows; gradients are scaled by
/// `1/n` so they correspond to the mean loss.
pub fn cross_entropy_batch<F: Real>(
    logits: &[Vec<F>],
    labels: &[usize],
) -> Result<(F, Vec<Vec<F>>), LossError> {
    assert_eq!(logits.len(), labels.len(), "batch size mismatch");
    let inv = F::one() / real::<F>(logits.len() as f64);
    let mut total = F::zero();
    let mut grads = Vec::with_capacity(logits.len());
    for (row, &label) in logits.iter().zip(labels) {
        let (l, mut d) = cross_entropy(row, label)?;
        total += l * inv;
        for g in &mut d {
            *g *= inv;
        }
        grads.push(d);
    }
    Ok((total, grads))
}

fn p_distance<F: Real>(a: &[F], b: &[F], p: F) -> F {
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += (x - y).abs().powf(p);
    }
    acc.powf(F::one() / p)
}

/// d/da of ||a - b||_p, elementwise. Zero when the distance vanishes
/// (subgradient choice, matches the hinge being inactive there).
fn p_distance_grad<F: Real>(a: &[F], b: &[F], p: F, dist: F) -> Vec<F> {
    if dist <= F::zero() {
        return vec![F::zero(); a.len()];
    }
    let scale = dist.powf(F::one() - p);
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            if d == F::zero() {
                F::zero()
            } else {
                d.signum() * d.abs().powf(p - F::one()) * scale
            }
        })
        .collect()
}

/// Triplet margin loss `max(0, d(a,p) - d(a,n) + margin)` with p-norm
/// distance. Returns `(loss, danchor, dpositive, dnegative)`.
pub fn triplet_margin<F: Real>(
    anchor: &[F],
    positive: &[F],
    negative: &[F],
    margin: F,
    p: F,
) -> (F, Vec<F>, Vec<F>, Vec<F>) {
    let dim = anchor.len();
    let dp = p_distance(anchor, positive, p);
    let dn = p_distance(anchor, negative, p);
    let loss = (dp - dn + margin).max(F::zero());
    if loss <= F::zero() {
        return (F::zero(), vec![F::zero(); dim], vec![F::zero(); dim], vec![F::zero(); dim]);
    }
    let gp = p_distance_grad(anchor, positive, p, dp);
    let gn = p_distance_grad(anchor, negative, p, dn);
    let mut da = vec![F::zero(); dim];
    let mut dpv = vec![F::zero(); dim];
    let mut dnv = vec![F::zero(); dim];
    for i in 0..dim {
        da[i] = gp[i] - gn[i];
        dpv[i] = -gp[i];
        dnv[i] = gn[i];
    }
    (loss, da, dpv, dnv)
}

/// Mean triplet loss over (anchor, positive, hardest in-batch negative)
/// built from an embedding batch. For each anchor the positive is the next
/// same-label sample (cyclically) and the negative is the closest
/// different-label sample. Returns `(loss, dembeddings)`.
pub fn triplet_batch<F: Real>(
    embeddings: &[Vec<F>],
    labels: &[usize],
    margin: F,
    p: F,
) -> Result<(F, Vec<Vec<F>>), LossError> {
    assert_eq!(embeddings.len(), labels.len(), "batch size mismatch");
    let n = embeddings.len();
    let dim = embeddings[0].len();
    let mut grads = vec![vec![F::zero(); dim]; n];
    let mut total = F::zero();
    let mut count = 0usize;
    for a in 0..n {
        let pos = (1..n)
            .map(|off| (a + off) % n)
            .find(|&j| labels[j] == labels[a])
            .ok_or(LossError::DegenerateBatch { anchor: a })?;
        let neg = (0..n)
            .filter(|&j| labels[j] != labels[a])
            .min_by(|&x, &y| {
                let dx = p_distance(&embeddings[a], &embeddings[x], p);
                let dy = p_distance(&embeddings[a], &embeddings[y], p);
                dx.partial_cmp(&dy).unwrap()
            })
            .ok_or(LossError::DegenerateBatch { anchor: a })?;
        let (l, da, dp, dn) =
            triplet_margin(&embeddings[a], &embeddings[pos], &embeddings[neg], margin, p);
        total += l;
        count += 1;
        for i in 0..dim {
            grads[a][i] += da[i];
            grads[pos][i] += dp[i];
            grads[neg][i] += dn[i];
        }
    }
    let inv = F::one() / real::<F>(count as f64);
    for row in &mut grads {
        for g in row.iter_mut() {
            *g *= inv;
        }
    }
    Ok((total * inv, grads))
}

/// Supervised contrastive loss over L2-normalized projections.
///
/// For anchor i with positives P(i) (same label, j != i):
/// `L_i = -1/|P(i)| sum_{j in P(i)} log( exp(z_i.z_j / tau) / sum_{k != i} exp(z_i.z_k / tau) )`
/// and the total is the sum over anchors. The gradient with respect to z_i is
/// `sum_j (g_ij + g_ji) z_j / tau` with `g_ij = s_ij - [j in P(i)]/|P(i)|`
/// where `s_ij` is the softmax over similarities excluding the diagonal.
pub fn supervised_contrastive<F: Real>(
    z: &[Vec<F>],
    labels: &[usize],
    tau: F,
) -> Result<(F, Vec<Vec<F>>), LossError> {
    assert_eq!(z.len(), labels.len(), "batch size mismatch");
    let n = z.len();
    let dim = z[0].len();
    for (anchor, &label) in labels.iter().enumerate() {
        if !labels.iter().enumerate().any(|(j, &l)| j != anchor && l == label) {
            return Err(LossError::DegenerateBatch { anchor });
        }
    }
    // Pairwise similarities and per-anchor softmax excluding the diagonal.
    let mut sim = vec![vec![F::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sim[i][j] = z[i].iter().zip(&z[j]).map(|(&a, &b)| a * b).sum::<F>() / tau;
            }
        }
    }
    let mut s = vec![vec![F::zero(); n]; n];
    for i in 0..n {
        let m = (0..n)
            .filter(|&j| j != i)
            .map(|j| sim[i][j])
            .fold(F::neg_infinity(), F::max);
        let mut denom = F::zero();
        for j in 0..n {
            if j != i {
                s[i][j] = (sim[i][j] - m).exp();
                denom += s[i][j];
            }
        }
        for j in 0..n {
            if j != i {
                s[i][j] /= denom;
            }
        }
    }
    let mut loss = F::zero();
    let mut g = vec![vec![F::zero(); n]; n];
    let eps = real::<F>(1e-12);
    for i in 0..n {
        let positives: Vec<usize> =
            (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        let inv_p = F::one() / real::<F>(positives.len() as f64);
        for &j in &positives {
            loss -= (s[i][j].max(eps)).ln() * inv_p;
        }
        for j in 0..n {
            if j != i {
                g[i][j] = s[i][j];
            }
        }
        for &j in &positives {
            g[i][j] -= inv_p;
        }
    }
    let mut dz = vec![vec![F::zero(); dim]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let coeff = (g[i][j] + g[j][i]) / tau;
            for d in 0..dim {
                dz[i][d] += coeff * z[j][d];
            }
        }
    }
    Ok((loss, dz))
}

/// Combined objective `L = ce + alpha_tm * tm + sc`.
pub fn total_loss<F: Real>(ce: F, tm: F, sc: F, cfg: &LossConfig) -> F {
    ce + real::<F>(cfg.alpha_tm) * tm + sc
}
