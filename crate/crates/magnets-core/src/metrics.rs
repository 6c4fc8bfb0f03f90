//! Regression metrics and the explanation-quality protocol.
//!
//! Explanation scoring compares a per-time-step relevance score in [0, 1]
//! against a binary ground-truth mask. Multichannel masks and scores are
//! pooled with a per-time-step maximum over channels first; only samples
//! whose pooled ground truth is non-empty are evaluated. AUC is rank-based
//! with ties credited 1/2, so a constant score gives exactly 0.5; F1
//! thresholds scores strictly above 0.5.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::Explanation;

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(Error::invalid(
            "rmse",
            format!("lengths {} vs {}", y.len(), yhat.len()),
        ));
    }
    let ss: f64 = y
        .iter()
        .zip(yhat.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(libm::sqrt(ss / y.len() as f64))
}

/// R^2 = 1 - SS_res / SS_tot with SS_tot about the mean of `y`.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() || y.len() < 2 {
        return Err(Error::invalid(
            "r2",
            format!("need two equal-length series, got {} vs {}", y.len(), yhat.len()),
        ));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::invalid("r2", "target variance is zero".into()));
    }
    let ss_res: f64 = y
        .iter()
        .zip(yhat.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Per-time-step maximum over channels; input is [c, t] flattened.
pub fn pool_channels(values: &[f64], c: usize, t: usize) -> Vec<f64> {
    debug_assert_eq!(values.len(), c * t);
    let mut out = values[..t].to_vec();
    for ch in 1..c {
        for (o, v) in out.iter_mut().zip(values[ch * t..][..t].iter()) {
            if *v > *o {
                *o = *v;
            }
        }
    }
    out
}

pub fn pool_channels_u8(values: &[u8], c: usize, t: usize) -> Vec<u8> {
    debug_assert_eq!(values.len(), c * t);
    let mut out = values[..t].to_vec();
    for ch in 1..c {
        for (o, v) in out.iter_mut().zip(values[ch * t..][..t].iter()) {
            *o = (*o).max(*v);
        }
    }
    out
}

/// Scale a signed attribution map into [0, 1]: divide by the largest
/// magnitude (when nonzero), then take absolute values.
pub fn normalize_attribution(attr: &[f64]) -> Result<Vec<f64>> {
    if attr.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "attribution".into() });
    }
    let max = attr.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if max == 0.0 {
        return Ok(vec![0.0; attr.len()]);
    }
    Ok(attr.iter().map(|v| v.abs() / max).collect())
}

/// How the M masks of a channel combine into one relevance score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskPooling {
    /// Masks weighted by their relative end-to-end feature weight (default).
    Weighted,
    /// Plain union of masks that carry any weight at all.
    Union,
}

/// Turn a model explanation into a per-time-step relevance score in [0, 1],
/// shape [c, t]. Each mask scores its support by its end-to-end feature
/// weight relative to the largest one; masks below 1e-6 of the maximum
/// contribute nothing.
pub fn magnets_mask_score(expl: &Explanation, pooling: MaskPooling) -> Vec<f64> {
    let shape = expl.masks.shape();
    let (c, m, t) = (shape[0], shape[1], shape[2]);
    let weights: Vec<f64> = expl.feature_weights.iter().map(|w| w.abs()).collect();
    let max_w = weights.iter().fold(0.0f64, |a, b| a.max(*b));
    let mut score = vec![0.0; c * t];
    if max_w == 0.0 {
        return score;
    }
    let floor = 1e-6 * max_w;
    for ch in 0..c {
        for mi in 0..m {
            let w = weights[ch * m + mi];
            if w < floor {
                continue;
            }
            let value = match pooling {
                MaskPooling::Weighted => w / max_w,
                MaskPooling::Union => 1.0,
            };
            let mask_row = &expl.masks.data()[(ch * m + mi) * t..][..t];
            let score_row = &mut score[ch * t..][..t];
            for (s, mv) in score_row.iter_mut().zip(mask_row.iter()) {
                if *mv > 0.0 && value > *s {
                    *s = value;
                }
            }
        }
    }
    score
}

/// Rank-based AUC with ties credited 1/2. Returns None when the ground truth
/// is degenerate (all zeros or all ones).
pub fn explanation_auc(score: &[f64], gt: &[u8]) -> Option<f64> {
    debug_assert_eq!(score.len(), gt.len());
    let pos = gt.iter().filter(|g| **g != 0).count();
    let neg = gt.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|a, b| score[*a].partial_cmp(&score[*b]).expect("finite scores"));
    // average ranks over tied groups
    let mut rank_pos_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && score[order[j + 1]] == score[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if gt[idx] != 0 {
                rank_pos_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let auc = (rank_pos_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos as f64 * neg as f64);
    Some(auc)
}

/// F1 of `score > threshold` against the binary ground truth. With no
/// predicted and no actual positives the score is 1; with no predicted but
/// some actual positives it is 0.
pub fn explanation_f1(score: &[f64], gt: &[u8], threshold: f64) -> f64 {
    debug_assert_eq!(score.len(), gt.len());
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (s, g) in score.iter().zip(gt.iter()) {
        let pred = *s > threshold;
        let actual = *g != 0;
        match (pred, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 && fp == 0 {
        return if fn_ == 0 { 1.0 } else { 0.0 };
    }
    2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64)
}

/// Aggregate explanation quality over a test split.
#[derive(Debug, Clone, Default)]
pub struct ExplanationScore {
    pub per_sample_auc: Vec<f64>,
    pub per_sample_f1: Vec<f64>,
    pub auc_mean: Option<f64>,
    pub f1_mean: Option<f64>,
    /// Samples with non-empty pooled ground truth.
    pub n_evaluated: usize,
    pub n_skipped: usize,
}

/// Score an iterator of per-sample `(score[c*t], gt[c*t])` pairs, pooling
/// channels by per-time-step maximum. Samples with empty pooled ground truth
/// are skipped; AUC additionally skips all-ones ground truth.
pub fn score_samples<'a, I>(samples: I, c: usize, t: usize) -> ExplanationScore
where
    I: Iterator<Item = (&'a [f64], &'a [u8])>,
{
    let mut out = ExplanationScore::default();
    for (score_ct, gt_ct) in samples {
        let gt = pool_channels_u8(gt_ct, c, t);
        if gt.iter().all(|g| *g == 0) {
            out.n_skipped += 1;
            continue;
        }
        let score = pool_channels(score_ct, c, t);
        out.n_evaluated += 1;
        out.per_sample_f1.push(explanation_f1(&score, &gt, 0.5));
        if let Some(auc) = explanation_auc(&score, &gt) {
            out.per_sample_auc.push(auc);
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    out.auc_mean = mean(&out.per_sample_auc);
    out.f1_mean = mean(&out.per_sample_f1);
    out
}

/// Explanation quality of a trained mask-and-aggregate model over a raw test
/// split: per-sample mask scores against ground-truth relevance.
pub fn evaluate_magnets_explanations(
    model: &crate::model::MagnetsModel,
    scaler: &crate::train::Standardizer,
    test_raw: &crate::data::TimeSeriesDataset,
    pooling: MaskPooling,
) -> Result<ExplanationScore> {
    let gt_all = test_raw
        .gt_mask
        .as_ref()
        .ok_or_else(|| Error::invalid("explanations", "dataset has no ground-truth masks".into()))?;
    let (c, t) = (test_raw.c, test_raw.t);
    let mut scores: Vec<Vec<f64>> = Vec::with_capacity(test_raw.n);
    for i in 0..test_raw.n {
        let x_std = scaler.transform_sample(test_raw.sample_x(i), c, t);
        let x = crate::tensor::Tensor::new(&[c, t], x_std).expect("sized");
        let expl = model.explain(&x)?;
        scores.push(magnets_mask_score(&expl, pooling));
    }
    Ok(score_samples(
        scores
            .iter()
            .map(|s| s.as_slice())
            .zip((0..test_raw.n).map(|i| &gt_all[i * c * t..][..c * t])),
        c,
        t,
    ))
}

/// Explanation quality of integrated-gradients attributions of the CNN
/// baseline over a raw test split.
pub fn evaluate_cnn_ig_explanations(
    model: &crate::baselines::CnnModel,
    scaler: &crate::train::Standardizer,
    test_raw: &crate::data::TimeSeriesDataset,
    steps: usize,
) -> Result<ExplanationScore> {
    let gt_all = test_raw
        .gt_mask
        .as_ref()
        .ok_or_else(|| Error::invalid("explanations", "dataset has no ground-truth masks".into()))?;
    let (c, t) = (test_raw.c, test_raw.t);
    let mut scores: Vec<Vec<f64>> = Vec::with_capacity(test_raw.n);
    for i in 0..test_raw.n {
        let x_std = scaler.transform_sample(test_raw.sample_x(i), c, t);
        let x = crate::tensor::Tensor::new(&[c, t], x_std).expect("sized");
        let attr = crate::baselines::integrated_gradients(model, &x, None, steps)?;
        scores.push(normalize_attribution(attr.data())?);
    }
    Ok(score_samples(
        scores
            .iter()
            .map(|s| s.as_slice())
            .zip((0..test_raw.n).map(|i| &gt_all[i * c * t..][..c * t])),
        c,
        t,
    ))
}
