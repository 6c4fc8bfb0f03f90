//! Synthetic benchmark generators with known relevance structure.
//!
//! Each sample is a set of smooth two-sided bump signals; the target is an
//! area under selected regions of the series, where selection is either a
//! fixed threshold or a channel comparison:
//!
//! * univariate:   y = sum_t x1[t] * [x1[t] > 0.5]
//! * bivariate:    y = sum_t x1[t] * [x2[t] > 0.5]
//! * trivariate-1: y = sum_t x1[t] * [x2[t] > x3[t]]
//! * trivariate-2: y = A * sum x1*[x2>x3] + B * sum x2*[x3>x1] + C * sum x3*[x1>x2]
//!
//! All comparisons are strict. The stored ground-truth mask marks every
//! channel participating in a condition region, so channel-max pooling of the
//! mask is well defined. Signal values are quantized to f32 on generation
//! (the on-disk format stores f32), and targets are computed in f64 from the
//! quantized values, so an independent recomputation of the rule reproduces
//! stored targets exactly.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum DatasetKind {
    Univariate,
    Bivariate,
    Trivariate1,
    Trivariate2,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 4] = [
        DatasetKind::Univariate,
        DatasetKind::Bivariate,
        DatasetKind::Trivariate1,
        DatasetKind::Trivariate2,
    ];

    pub fn channels(self) -> usize {
        match self {
            DatasetKind::Univariate => 1,
            DatasetKind::Bivariate => 2,
            DatasetKind::Trivariate1 | DatasetKind::Trivariate2 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Univariate => "univariate",
            DatasetKind::Bivariate => "bivariate",
            DatasetKind::Trivariate1 => "trivariate1",
            DatasetKind::Trivariate2 => "trivariate2",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "univariate" => Some(DatasetKind::Univariate),
            "bivariate" => Some(DatasetKind::Bivariate),
            "trivariate1" => Some(DatasetKind::Trivariate1),
            "trivariate2" => Some(DatasetKind::Trivariate2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub t: usize,
    pub bumps_per_channel: usize,
    /// Bump amplitude interval; must lie within (0, 1.2].
    pub amplitude_range: (f64, f64),
    /// Bump width interval in time steps; must be positive.
    pub width_range: (f64, f64),
    /// Coefficients (A, B, C) of the trivariate-2 target.
    pub trivariate2_coeffs: (f64, f64, f64),
}

impl GeneratorConfig {
    pub fn new(seed: u64) -> Self {
        let t = 128;
        GeneratorConfig {
            seed,
            n_train: 50_000,
            n_test: 10_000,
            t,
            bumps_per_channel: 4,
            amplitude_range: (0.35, 1.05),
            width_range: (t as f64 / 32.0, t as f64 / 8.0),
            trivariate2_coeffs: (1.0, 5.0, -2.0),
        }
    }

    /// Scale the sample counts, e.g. 0.1 for a desk-scale run.
    pub fn scaled(mut self, scale: f64) -> Self {
        self.n_train = ((self.n_train as f64 * scale) as usize).max(1);
        self.n_test = ((self.n_test as f64 * scale) as usize).max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.amplitude_range;
        if !(lo > 0.0 && hi <= 1.2 && lo <= hi) {
            return Err(Error::invalid(
                "generator",
                alloc::format!("amplitude range ({lo}, {hi}) must lie within (0, 1.2]"),
            ));
        }
        let (wlo, whi) = self.width_range;
        if !(wlo > 0.0 && wlo <= whi) {
            return Err(Error::invalid(
                "generator",
                alloc::format!("width range ({wlo}, {whi}) must be positive"),
            ));
        }
        if self.t < 16 {
            return Err(Error::invalid("generator", alloc::format!("t = {} too short", self.t)));
        }
        Ok(())
    }
}

/// A set of series with targets and optional ground-truth relevance masks.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub name: String,
    pub split: Split,
    pub n: usize,
    pub c: usize,
    pub t: usize,
    /// [n, c, t] row-major; values are exactly representable in f32.
    pub x: Vec<f64>,
    /// [n]
    pub y: Vec<f64>,
    /// [n, c, t] of 0/1, present for synthetic data.
    pub gt_mask: Option<Vec<u8>>,
}

impl TimeSeriesDataset {
    pub fn sample_x(&self, i: usize) -> &[f64] {
        &self.x[i * self.c * self.t..][..self.c * self.t]
    }

    pub fn sample_gt(&self, i: usize) -> Option<&[u8]> {
        self.gt_mask
            .as_ref()
            .map(|g| &g[i * self.c * self.t..][..self.c * self.t])
    }

    /// Gather samples into a [len, c, t] batch tensor.
    pub fn batch_x(&self, indices: &[usize]) -> Tensor {
        let stride = self.c * self.t;
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            data.extend_from_slice(&self.x[i * stride..][..stride]);
        }
        Tensor::new(&[indices.len(), self.c, self.t], data).expect("sized")
    }

    pub fn batch_y(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.y[i]).collect()
    }
}

fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

/// Probability that a bump is flipped negative. Two-sided signals keep the
/// above-threshold area identifiable from masked sums alone: with one-sided
/// bumps, the baseline level of the signal couples the target to the sheer
/// size of the selected region, which no sum of standardized values can
/// express.
const NEGATIVE_BUMP_PROB: f64 = 0.42;

/// One smooth channel: a sum of Gaussian bumps, each flipped negative with
/// probability 0.4, every value rounded to f32. Values lie in roughly
/// [-1.5, 1.5] and cross the 0.5 threshold in most but not all samples.
pub fn generate_signal(rng: &mut Rng, t: usize, cfg: &GeneratorConfig) -> Vec<f64> {
    let mut signal = vec![0.0f64; t];
    for _ in 0..cfg.bumps_per_channel {
        let center = rng.range(0.0, t as f64);
        let width = rng.range(cfg.width_range.0, cfg.width_range.1);
        let mut amp = rng.range(cfg.amplitude_range.0, cfg.amplitude_range.1);
        if rng.uniform() < NEGATIVE_BUMP_PROB {
            amp = -amp;
        }
        let inv = 1.0 / (2.0 * width * width);
        for (ti, s) in signal.iter_mut().enumerate() {
            let d = ti as f64 - center;
            *s += amp * libm::exp(-d * d * inv);
        }
    }
    for s in signal.iter_mut() {
        *s = quantize(*s);
    }
    signal
}

/// Target and ground-truth mask for one sample; x is [c, t].
fn apply_rule(kind: DatasetKind, cfg: &GeneratorConfig, x: &[f64], t: usize) -> (f64, Vec<u8>) {
    let c = kind.channels();
    let mut gt = vec![0u8; c * t];
    let y = match kind {
        DatasetKind::Univariate => {
            let mut y = 0.0;
            for ti in 0..t {
                if x[ti] > 0.5 {
                    y += x[ti];
                    gt[ti] = 1;
                }
            }
            y
        }
        DatasetKind::Bivariate => {
            let mut y = 0.0;
            for ti in 0..t {
                if x[t + ti] > 0.5 {
                    y += x[ti];
                    gt[ti] = 1;
                    gt[t + ti] = 1;
                }
            }
            y
        }
        DatasetKind::Trivariate1 => {
            let mut y = 0.0;
            for ti in 0..t {
                if x[t + ti] > x[2 * t + ti] {
                    y += x[ti];
                    gt[ti] = 1;
                    gt[t + ti] = 1;
                    gt[2 * t + ti] = 1;
                }
            }
            y
        }
        DatasetKind::Trivariate2 => {
            let (a, b, cc) = cfg.trivariate2_coeffs;
            let (mut sa, mut sb, mut sc) = (0.0, 0.0, 0.0);
            for ti in 0..t {
                let (x1, x2, x3) = (x[ti], x[t + ti], x[2 * t + ti]);
                let mut any = false;
                if x2 > x3 {
                    sa += x1;
                    any = true;
                }
                if x3 > x1 {
                    sb += x2;
                    any = true;
                }
                if x1 > x2 {
                    sc += x3;
                    any = true;
                }
                if any {
                    gt[ti] = 1;
                    gt[t + ti] = 1;
                    gt[2 * t + ti] = 1;
                }
            }
            a * sa + b * sb + cc * sc
        }
    };
    (y, gt)
}

/// Generate one split of a synthetic dataset. Each sample draws from its own
/// sub-stream of `(seed, split, index)`, so train and test draws are disjoint
/// and the result does not depend on generation order.
pub fn generate(kind: DatasetKind, cfg: &GeneratorConfig, split: Split) -> Result<TimeSeriesDataset> {
    cfg.validate()?;
    let n = match split {
        Split::Train => cfg.n_train,
        Split::Test => cfg.n_test,
    };
    let (c, t) = (kind.channels(), cfg.t);
    let split_code: u64 = match split {
        Split::Train => 0,
        Split::Test => 1,
    };
    let mut x = Vec::with_capacity(n * c * t);
    let mut y = Vec::with_capacity(n);
    let mut gt = Vec::with_capacity(n * c * t);
    for i in 0..n {
        let mut rng = Rng::substream(cfg.seed, (split_code << 32) | i as u64);
        let start = x.len();
        for _ in 0..c {
            x.extend(generate_signal(&mut rng, t, cfg));
        }
        let (yi, gi) = apply_rule(kind, cfg, &x[start..], t);
        y.push(yi);
        gt.extend(gi);
    }
    Ok(TimeSeriesDataset {
        name: kind.name().into(),
        split,
        n,
        c,
        t,
        x,
        y,
        gt_mask: Some(gt),
    })
}

pub fn make_univariate(cfg: &GeneratorConfig, split: Split) -> Result<TimeSeriesDataset> {
    generate(DatasetKind::Univariate, cfg, split)
}

pub fn make_bivariate(cfg: &GeneratorConfig, split: Split) -> Result<TimeSeriesDataset> {
    generate(DatasetKind::Bivariate, cfg, split)
}

pub fn make_trivariate1(cfg: &GeneratorConfig, split: Split) -> Result<TimeSeriesDataset> {
    generate(DatasetKind::Trivariate1, cfg, split)
}

pub fn make_trivariate2(cfg: &GeneratorConfig, split: Split) -> Result<TimeSeriesDataset> {
    generate(DatasetKind::Trivariate2, cfg, split)
}
