//! Training objectives with exact analytic gradients.
//!
//! Four losses drive the two training stages: softmax cross-entropy over
//! identity logits, batch-hard triplet on embeddings, a cross-view
//! regression that pulls each anchor's cross-view feature onto the frozen
//! feature of its hardest (farthest same-identity) positive, and a
//! β-reweighted triplet that folds the cross-view term back into a single
//! module — the combination the decoupled head is measured against.
//!
//! Mining runs on raw (unnormalized) embeddings under Euclidean distance;
//! normalization belongs to inference, not training. Hinge and distance
//! kinks take subgradient zero.

use crate::numerics::{pairwise_euclidean, Matrix, NumericsError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: u32, num_classes: usize },
    #[error("identity {label} appears only once in the batch; no positive to mine")]
    NoPositive { label: u32 },
    #[error("batch contains a single identity; no negative to mine")]
    NoNegative,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Margin for the triplet hinge.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletConfig {
    pub margin: f64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self { margin: 0.3 }
    }
}

/// Re-weighting factor for the single-module combined loss; the bound it
/// realizes assumes `beta >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaConfig {
    pub beta: f64,
    pub margin: f64,
}

/// Hardest positive (farthest same identity) and hardest negative (closest
/// other identity) per anchor. The positive/negative margins Δp and Δn that
/// accompany β in the bound's final form are analytic devices tied by
/// Δn − βΔp = α; they never take concrete values and so have no field here.
#[derive(Debug, Clone, PartialEq)]
pub struct MiningResult {
    pub positive_idx: Vec<usize>,
    pub negative_idx: Vec<usize>,
    pub positive_dist: Vec<f64>,
    pub negative_dist: Vec<f64>,
}

/// Mean softmax cross-entropy and its logit gradient
/// `(softmax − onehot) / N`, stabilized by row-max subtraction.
pub fn cross_entropy(logits: &Matrix, labels: &[u32]) -> Result<(f64, Matrix), LossError> {
    assert_eq!(logits.rows(), labels.len(), "one label per logit row");
    let n = logits.rows();
    let m = logits.cols();
    for &l in labels {
        if l as usize >= m {
            return Err(LossError::LabelOutOfRange {
                label: l,
                num_classes: m,
            });
        }
    }
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, m);
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in row {
            denom += (v - max).exp();
        }
        let log_denom = denom.ln();
        let y = labels[i] as usize;
        loss += -(row[y] - max - log_denom);
        let g = grad.row_mut(i);
        for (j, &v) in row.iter().enumerate() {
            let p = (v - max).exp() / denom;
            g[j] = (p - if j == y { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}

/// Batch-hard mining over a precomputed distance matrix: per anchor, the
/// farthest same-identity sample (self excluded by index, so duplicated rows
/// from with-replacement sampling stay eligible) and the closest
/// other-identity sample. Ties break toward the lowest index.
pub fn mine_batch_hard(dist: &Matrix, labels: &[u32]) -> Result<MiningResult, LossError> {
    let n = labels.len();
    assert_eq!(dist.rows(), n);
    assert_eq!(dist.cols(), n);

    let mut positive_idx = Vec::with_capacity(n);
    let mut negative_idx = Vec::with_capacity(n);
    let mut positive_dist = Vec::with_capacity(n);
    let mut negative_dist = Vec::with_capacity(n);
    for i in 0..n {
        let mut best_p: Option<(usize, f64)> = None;
        let mut best_n: Option<(usize, f64)> = None;
        for j in 0..n {
            let d = dist.get(i, j);
            if labels[j] == labels[i] {
                if j != i && best_p.is_none_or(|(_, bd)| d > bd) {
                    best_p = Some((j, d));
                }
            } else if best_n.is_none_or(|(_, bd)| d < bd) {
                best_n = Some((j, d));
            }
        }
        let (pj, pd) = best_p.ok_or(LossError::NoPositive { label: labels[i] })?;
        let (nj, nd) = best_n.ok_or(LossError::NoNegative)?;
        positive_idx.push(pj);
        negative_idx.push(nj);
        positive_dist.push(pd);
        negative_dist.push(nd);
    }
    Ok(MiningResult {
        positive_idx,
        negative_idx,
        positive_dist,
        negative_dist,
    })
}

/// Unit direction (a − b) / ‖a − b‖, or zero at coincidence.
fn unit_diff(a: &[f64], b: &[f64], d: f64) -> Vec<f64> {
    if d > 0.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) / d).collect()
    } else {
        vec![0.0; a.len()]
    }
}

fn axpy(target: &mut [f64], scale: f64, v: &[f64]) {
    for (t, x) in target.iter_mut().zip(v) {
        *t += scale * x;
    }
}

fn triplet_with_beta(
    x: &Matrix,
    labels: &[u32],
    margin: f64,
    beta: f64,
) -> Result<(f64, Matrix, MiningResult), LossError> {
    let n = x.rows();
    let dist = pairwise_euclidean(x, x)?;
    let mining = mine_batch_hard(&dist, labels)?;
    let inv_n = 1.0 / n as f64;

    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, x.cols());
    for i in 0..n {
        let (p, np) = (mining.positive_idx[i], mining.negative_idx[i]);
        let (d_ap, d_an) = (mining.positive_dist[i], mining.negative_dist[i]);
        let slack = d_ap - d_an + margin;

        let u_ap = unit_diff(x.row(i), x.row(p), d_ap);
        if slack > 0.0 {
            loss += slack;
            let u_an = unit_diff(x.row(i), x.row(np), d_an);
            axpy(grad.row_mut(i), inv_n, &u_ap);
            axpy(grad.row_mut(i), -inv_n, &u_an);
            axpy(grad.row_mut(p), -inv_n, &u_ap);
            axpy(grad.row_mut(np), inv_n, &u_an);
        }
        if beta != 1.0 {
            loss += (beta - 1.0) * d_ap;
            axpy(grad.row_mut(i), (beta - 1.0) * inv_n, &u_ap);
            axpy(grad.row_mut(p), -(beta - 1.0) * inv_n, &u_ap);
        }
    }
    Ok((loss * inv_n, grad, mining))
}

/// Batch-hard triplet loss `(1/N) Σ [d_ap − d_an + α]₊` with mined hardest
/// pairs, plus its embedding gradient and the mining indices.
pub fn triplet_batch_hard(
    x: &Matrix,
    labels: &[u32],
    cfg: &TripletConfig,
) -> Result<(f64, Matrix, MiningResult), LossError> {
    triplet_with_beta(x, labels, cfg.margin, 1.0)
}

/// Single-module combined loss
/// `(1/N) Σ (β−1)·d_ap + [d_ap − d_an + α]₊`: the triplet hinge with the
/// positive distance re-weighted by β ≥ 1. With β = 1 this is exactly
/// [`triplet_batch_hard`], sharing its code path.
pub fn beta_triplet(
    x: &Matrix,
    labels: &[u32],
    cfg: &BetaConfig,
) -> Result<(f64, Matrix, MiningResult), LossError> {
    triplet_with_beta(x, labels, cfg.margin, cfg.beta)
}

/// How the cross-view residual is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MseVariant {
    /// Mean of unsquared residual norms, the printed form of the objective.
    AsWritten,
    /// Mean of squared residual norms, for sensitivity studies.
    Squared,
}

/// Cross-view regression loss: each anchor's cross-view feature is pulled
/// onto the feature of its hardest positive, mined in `x_g` space. Targets
/// are detached — the gradient lands on `x_cv` only.
pub fn cross_view_mse(
    x_cv: &Matrix,
    x_g: &Matrix,
    labels: &[u32],
    variant: MseVariant,
) -> Result<(f64, Matrix, MiningResult), LossError> {
    if x_cv.cols() != x_g.cols() {
        return Err(NumericsError::DimMismatch {
            left: x_cv.cols(),
            right: x_g.cols(),
        }
        .into());
    }
    assert_eq!(x_cv.rows(), x_g.rows());
    let n = x_cv.rows();
    let dist = pairwise_euclidean(x_g, x_g)?;
    let mining = mine_batch_hard(&dist, labels)?;
    let inv_n = 1.0 / n as f64;

    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, x_cv.cols());
    for i in 0..n {
        let target = x_g.row(mining.positive_idx[i]);
        let residual: Vec<f64> = x_cv.row(i).iter().zip(target).map(|(a, b)| a - b).collect();
        let norm = crate::numerics::l2_norm(&residual);
        match variant {
            MseVariant::AsWritten => {
                loss += norm;
                if norm > 0.0 {
                    axpy(grad.row_mut(i), inv_n / norm, &residual);
                }
            }
            MseVariant::Squared => {
                loss += norm * norm;
                axpy(grad.row_mut(i), 2.0 * inv_n, &residual);
            }
        }
    }
    Ok((loss * inv_n, grad, mining))
}
