//! The mask-and-aggregate regression model.
//!
//! Pipeline per input series x in R^{C x T}:
//!
//! 1. A U-Net predicts M mask logits per channel and time step.
//! 2. Logits are relaxed through a temperature sigmoid with injected noise
//!    and binarized with a straight-through threshold, giving strictly 0/1
//!    masks in the forward pass while gradients follow the relaxation.
//! 3. Each masked signal is summed over time: z[c,m] = sum_t x[c,t]*m[c,m,t],
//!    capturing jointly how long a region is selected and how much signal it
//!    carries.
//! 4. A linear bottleneck maps the C*M aggregated features to K concept
//!    activations; an l1 penalty keeps its weights sparse and a Gram penalty
//!    keeps concept columns near-orthogonal.
//! 5. A linear head maps concepts to the scalar prediction.
//!
//! Every stage past the mask generator is affine, so each prediction
//! decomposes exactly into per-concept and per-feature contributions; see
//! [`MagnetsModel::explain`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::unet::UNet;

/// Noise distribution injected into mask logits during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NoiseKind {
    Gumbel,
    Logistic,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MagnetsConfig {
    /// Input channels C.
    pub channels: usize,
    /// Series length T before padding.
    pub length: usize,
    /// Masks per channel M.
    pub masks_per_channel: usize,
    /// Concept count K.
    pub concepts: usize,
    /// Relaxation temperature tau.
    pub temperature: f64,
    pub lambda_spars: f64,
    pub lambda_ortho: f64,
    pub noise: NoiseKind,
    /// Encoder widths; the decoder mirrors them.
    pub unet_widths: [usize; 3],
}

impl MagnetsConfig {
    pub fn new(channels: usize, length: usize) -> Self {
        MagnetsConfig {
            channels,
            length,
            masks_per_channel: 10,
            concepts: 3,
            temperature: 1.0,
            lambda_spars: 0.0,
            lambda_ortho: 0.0,
            noise: NoiseKind::Logistic,
            unet_widths: [32, 64, 128],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.length == 0 {
            return Err(Error::invalid("config", "channels and length must be positive".into()));
        }
        if self.masks_per_channel == 0 || self.concepts == 0 {
            return Err(Error::invalid("config", "need at least one mask and one concept".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::invalid(
                "config",
                format!("temperature must be positive, got {}", self.temperature),
            ));
        }
        if self.lambda_spars < 0.0 || self.lambda_ortho < 0.0 {
            return Err(Error::invalid("config", "regularizer weights must be non-negative".into()));
        }
        if self.unet_widths.iter().any(|w| *w == 0) {
            return Err(Error::invalid("config", "widths must be positive".into()));
        }
        Ok(())
    }

    /// Length after right-padding to the next multiple of 8 (three poolings).
    pub fn padded_length(&self) -> usize {
        self.length.div_ceil(8) * 8
    }
}

/// How mask noise is supplied during a forward pass.
pub enum MaskNoise<'a> {
    /// No noise: masks are the deterministic sign of the logits (inference).
    Off,
    /// Sample fresh i.i.d. noise per logit (training).
    Sample(&'a mut Rng),
    /// Use a fixed noise tensor of shape [batch, C*M, padded_t] (gradient
    /// verification).
    Frozen(&'a Tensor),
}

/// Which value the aggregation consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskPath {
    /// Binarized masks with straight-through gradients (the real model).
    Hard,
    /// The relaxed sigmoid output itself; makes the whole loss smooth so it
    /// can be verified against finite differences.
    Relaxed,
}

/// Handles into the tape for one forward pass.
pub struct MagnetsTrace {
    /// Registered parameter vars, in [`MagnetsModel::params`] order.
    pub param_vars: Vec<Var>,
    pub logits: Var,
    /// sigmoid((logits + g) / tau), shape [batch, C, M, padded_t].
    pub relaxed: Var,
    /// Binary masks (equal to `relaxed` when running the relaxed path).
    pub masks: Var,
    /// Aggregated features z, shape [batch, C, M].
    pub aggregated: Var,
    /// Concept activations, shape [batch, K].
    pub concepts: Var,
    /// Predictions, shape [batch].
    pub prediction: Var,
}

/// Loss terms for one batch.
pub struct MagnetsLoss {
    pub trace: MagnetsTrace,
    pub total: Var,
    pub mse: f64,
    pub spars: f64,
    pub ortho: f64,
}

/// Everything needed to read one prediction off a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    /// Binary masks, [C, M, T].
    pub masks: Tensor,
    /// Relaxed mask values, [C, M, T].
    pub relaxed: Tensor,
    /// Aggregated features z, [C, M].
    pub aggregated: Tensor,
    /// Concept activations, length K.
    pub concepts: Vec<f64>,
    /// Per-concept contribution w_k * c_k, length K.
    pub contributions: Vec<f64>,
    /// Signed end-to-end weight sum_k w_k * beta[c,m,k] of each aggregated
    /// feature, [C, M].
    pub feature_weights: Tensor,
    pub prediction: f64,
}

/// Mask generator, concept bottleneck and prediction head.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetsModel {
    pub config: MagnetsConfig,
    pub mask_net: UNet,
    /// Bottleneck weights, [C, M, K].
    pub beta: Tensor,
    /// Bottleneck biases, [K].
    pub beta_bias: Tensor,
    /// Head weights, [K].
    pub head_w: Tensor,
    /// Head bias, [1].
    pub head_b: Tensor,
}

impl MagnetsModel {
    pub fn init(config: MagnetsConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (c, m, k) = (config.channels, config.masks_per_channel, config.concepts);
        let mask_net = UNet::init(c, c * m, config.unet_widths, rng);
        // Anchor each concept column on its own channel-mask pair. A single
        // entry near 0.8 per column is the joint minimum of the l1 and Gram
        // penalties (r + (r^2-1)^2 is smallest at r ~ 0.81), so the
        // regularized model starts inside the sparse, near-orthogonal regime
        // it is meant to end in, and the anchored masks receive full-strength
        // gradients from the first step.
        let mut beta = Tensor::zeros(&[c, m, k]);
        for ki in 0..k {
            let pair = ki % (c * m);
            let (ch, mi) = (pair % c, pair / c);
            beta.data_mut()[(ch * m + mi) * k + ki] = 0.8;
        }
        Ok(MagnetsModel {
            mask_net,
            beta,
            beta_bias: Tensor::zeros(&[k]),
            head_w: Tensor::from_fn(&[k], |_| 0.01 * rng.normal()),
            head_b: Tensor::zeros(&[1]),
            config,
        })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = self.mask_net.params();
        out.extend([&self.beta, &self.beta_bias, &self.head_w, &self.head_b]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.mask_net.params_mut();
        out.extend([
            &mut self.beta,
            &mut self.beta_bias,
            &mut self.head_w,
            &mut self.head_b,
        ]);
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = self.mask_net.param_names();
        out.extend(["beta".into(), "beta_bias".into(), "head_w".into(), "head_b".into()]);
        out
    }

    /// Right-pad each row with zeros to the padded length.
    fn pad_input(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 3 || s[1] != self.config.channels || s[2] != self.config.length {
            return Err(Error::shape(
                "magnets_forward",
                format!(
                    "expected [batch, {}, {}], got {s:?}",
                    self.config.channels, self.config.length
                ),
            ));
        }
        Ok(x.right_pad_last_axis(self.config.padded_length()))
    }

    fn sample_noise(&self, shape: &[usize], rng: &mut Rng) -> Tensor {
        match self.config.noise {
            NoiseKind::Gumbel => Tensor::from_fn(shape, |_| rng.gumbel()),
            NoiseKind::Logistic => Tensor::from_fn(shape, |_| rng.logistic()),
        }
    }

    /// Forward pass over a batch [batch, C, T].
    pub fn forward(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        noise: MaskNoise,
        path: MaskPath,
    ) -> Result<MagnetsTrace> {
        let batch = x.shape()[0];
        let (c, m, k) = (
            self.config.channels,
            self.config.masks_per_channel,
            self.config.concepts,
        );
        let tp = self.config.padded_length();
        let x_pad = self.pad_input(x)?;
        let xv = tape.leaf(x_pad);

        let mut param_vars = Vec::new();
        let logits = self.mask_net.forward(tape, &mut param_vars, xv)?;

        // relaxed = sigmoid((logits + g) / tau)
        let relaxed_flat = match noise {
            MaskNoise::Off => tape.noisy_sigmoid(logits, None, self.config.temperature)?,
            MaskNoise::Sample(rng) => {
                let g = self.sample_noise(&[batch, c * m, tp], rng);
                tape.noisy_sigmoid(logits, Some(&g), self.config.temperature)?
            }
            MaskNoise::Frozen(g) => tape.noisy_sigmoid(logits, Some(g), self.config.temperature)?,
        };
        let relaxed = tape.reshape(relaxed_flat, &[batch, c, m, tp])?;
        let masks = match path {
            MaskPath::Hard => tape.ste_binarize(relaxed),
            MaskPath::Relaxed => relaxed,
        };

        // z[b,c,m] = sum over real (unpadded) time of x * mask
        let aggregated = tape.masked_aggregate(xv, masks, self.config.length)?;

        // concepts = z @ beta + b
        let z2 = tape.reshape(aggregated, &[batch, c * m])?;
        let beta_var = tape.leaf(self.beta.clone());
        let beta2 = tape.reshape(beta_var, &[c * m, k])?;
        let bias_var = tape.leaf(self.beta_bias.clone());
        let concepts = tape.linear(z2, beta2, bias_var)?;

        // prediction = concepts @ w + w0
        let w_var = tape.leaf(self.head_w.clone());
        let w2 = tape.reshape(w_var, &[k, 1])?;
        let b_var = tape.leaf(self.head_b.clone());
        let pred2 = tape.linear(concepts, w2, b_var)?;
        let prediction = tape.reshape(pred2, &[batch])?;

        param_vars.extend([beta_var, bias_var, w_var, b_var]);
        Ok(MagnetsTrace {
            param_vars,
            logits,
            relaxed,
            masks,
            aggregated,
            concepts,
            prediction,
        })
    }

    /// Composite loss: MSE + lambda_spars * |beta|_1
    ///                      + lambda_ortho * ||B^T B - I||_F^2.
    pub fn loss(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        y: &[f64],
        noise: MaskNoise,
        path: MaskPath,
    ) -> Result<MagnetsLoss> {
        let trace = self.forward(tape, x, noise, path)?;
        let mse = tape.mse_loss(trace.prediction, y)?;
        let (c, m, k) = (
            self.config.channels,
            self.config.masks_per_channel,
            self.config.concepts,
        );
        // beta is param_vars[len-4]
        let beta_var = trace.param_vars[trace.param_vars.len() - 4];
        let spars = tape.l1_sum(beta_var);
        let beta2 = tape.reshape(beta_var, &[c * m, k])?;
        let ortho = tape.ortho_penalty(beta2)?;

        let spars_scaled = tape.scale(spars, self.config.lambda_spars);
        let ortho_scaled = tape.scale(ortho, self.config.lambda_ortho);
        let reg = tape.add(spars_scaled, ortho_scaled)?;
        let total = tape.add(mse, reg)?;
        Ok(MagnetsLoss {
            mse: tape.value(mse).item(),
            spars: tape.value(spars).item(),
            ortho: tape.value(ortho).item(),
            total,
            trace,
        })
    }

    /// Deterministic predictions for a batch (inference mode).
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let trace = self.forward(&mut tape, x, MaskNoise::Off, MaskPath::Hard)?;
        Ok(tape.value(trace.prediction).data().to_vec())
    }

    /// Sparsity penalty value of the current bottleneck weights.
    pub fn sparsity_loss(&self) -> f64 {
        self.beta.iter().map(|v| v.abs()).sum()
    }

    /// Orthogonality penalty value of the current bottleneck weights.
    pub fn orthogonality_loss(&self) -> f64 {
        let (c, m, k) = (
            self.config.channels,
            self.config.masks_per_channel,
            self.config.concepts,
        );
        let mut tape = Tape::new();
        let beta = tape.leaf(self.beta.clone());
        let beta2 = tape.reshape(beta, &[c * m, k]).expect("beta shape");
        let l = tape.ortho_penalty(beta2).expect("rank 2");
        tape.value(l).item()
    }

    /// Signed end-to-end weight of each aggregated feature on the output:
    /// sum_k w_k * beta[c,m,k].
    pub fn feature_weights(&self) -> Tensor {
        let (c, m, k) = (
            self.config.channels,
            self.config.masks_per_channel,
            self.config.concepts,
        );
        let mut out = Tensor::zeros(&[c, m]);
        for cm in 0..c * m {
            let mut acc = 0.0;
            for (ki, w) in self.head_w.data().iter().enumerate() {
                acc += w * self.beta.data()[cm * k + ki];
            }
            out.data_mut()[cm] = acc;
        }
        out
    }

    /// Deterministic single-sample explanation; `x` is [C, T].
    ///
    /// The affine structure guarantees exact reconstruction:
    /// prediction = w0 + sum_k w_k (b_k + sum_{c,m} beta[c,m,k] z[c,m]).
    pub fn explain(&self, x: &Tensor) -> Result<Explanation> {
        let s = x.shape();
        if s.len() != 2 || s[0] != self.config.channels || s[1] != self.config.length {
            return Err(Error::shape(
                "explain",
                format!("expected [{}, {}], got {s:?}", self.config.channels, self.config.length),
            ));
        }
        let (c, m, t) = (
            self.config.channels,
            self.config.masks_per_channel,
            self.config.length,
        );
        let tp = self.config.padded_length();
        let batched = x.clone().reshaped(&[1, c, t])?;
        let mut tape = Tape::new();
        let trace = self.forward(&mut tape, &batched, MaskNoise::Off, MaskPath::Hard)?;

        // strip padding columns from the exported masks
        let take_masks = |v: &Tensor| -> Tensor {
            let mut out = Tensor::zeros(&[c, m, t]);
            for row in 0..c * m {
                out.data_mut()[row * t..][..t].copy_from_slice(&v.data()[row * tp..][..t]);
            }
            out
        };

        let masks = take_masks(tape.value(trace.masks));
        let relaxed = take_masks(tape.value(trace.relaxed));
        let aggregated = tape.value(trace.aggregated).clone().reshaped(&[c, m])?;
        let concepts = tape.value(trace.concepts).data().to_vec();
        let contributions: Vec<f64> = concepts
            .iter()
            .zip(self.head_w.iter())
            .map(|(ck, wk)| ck * wk)
            .collect();
        let prediction = tape.value(trace.prediction).data()[0];
        Ok(Explanation {
            masks,
            relaxed,
            aggregated,
            concepts,
            contributions,
            feature_weights: self.feature_weights(),
            prediction,
        })
    }
}

impl crate::train::TrainableModel for MagnetsModel {
    fn params(&self) -> Vec<&Tensor> {
        MagnetsModel::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        MagnetsModel::params_mut(self)
    }

    fn param_names(&self) -> Vec<String> {
        MagnetsModel::param_names(self)
    }

    fn batch_loss(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        y: &[f64],
        rng: &mut Rng,
    ) -> Result<crate::train::BatchLoss> {
        let loss = self.loss(tape, x, y, MaskNoise::Sample(rng), MaskPath::Hard)?;
        Ok(crate::train::BatchLoss {
            total: loss.total,
            param_vars: loss.trace.param_vars,
            mse: loss.mse,
            spars: loss.spars,
            ortho: loss.ortho,
        })
    }

    fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        MagnetsModel::predict(self, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tiny_config() -> MagnetsConfig {
        let mut cfg = MagnetsConfig::new(1, 8);
        cfg.masks_per_channel = 2;
        cfg.concepts = 2;
        cfg.unet_widths = [2, 3, 4];
        cfg
    }

    #[test]
    fn config_validation() {
        let mut cfg = MagnetsConfig::new(1, 16);
        assert!(cfg.validate().is_ok());
        cfg.temperature = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = MagnetsConfig::new(1, 16);
        cfg.concepts = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn padded_length_rounds_up_to_multiple_of_8() {
        let mut cfg = MagnetsConfig::new(1, 128);
        assert_eq!(cfg.padded_length(), 128);
        cfg.length = 20;
        assert_eq!(cfg.padded_length(), 24);
    }

    #[test]
    fn bottleneck_and_head_parameter_counts() {
        let mut rng = Rng::new(1);
        let cfg = MagnetsConfig::new(3, 16);
        let model = MagnetsModel::init(cfg, &mut rng).unwrap();
        let (c, m, k) = (3, 10, 3);
        assert_eq!(model.beta.len() + model.beta_bias.len(), c * m * k + k);
        assert_eq!(model.head_w.len() + model.head_b.len(), k + 1);
    }

    #[test]
    fn forward_shapes() {
        let mut rng = Rng::new(2);
        let model = MagnetsModel::init(tiny_config(), &mut rng).unwrap();
        let x = Tensor::from_fn(&[3, 1, 8], |i| (i as f64 * 0.1).sin());
        let mut tape = Tape::new();
        let trace = model.forward(&mut tape, &x, MaskNoise::Off, MaskPath::Hard).unwrap();
        assert_eq!(tape.shape(trace.relaxed), &[3, 1, 2, 8]);
        assert_eq!(tape.shape(trace.aggregated), &[3, 1, 2]);
        assert_eq!(tape.shape(trace.concepts), &[3, 2]);
        assert_eq!(tape.shape(trace.prediction), &[3]);
    }

    #[test]
    fn eval_masks_are_strictly_binary_and_repeatable() {
        let mut rng = Rng::new(3);
        let model = MagnetsModel::init(tiny_config(), &mut rng).unwrap();
        let x = Tensor::from_fn(&[2, 1, 8], |i| (i as f64 * 0.3).cos());
        let run = || {
            let mut tape = Tape::new();
            let trace = model.forward(&mut tape, &x, MaskNoise::Off, MaskPath::Hard).unwrap();
            tape.value(trace.masks).data().to_vec()
        };
        let m1 = run();
        let m2 = run();
        assert_eq!(m1, m2);
        assert!(m1.iter().all(|v| *v == 0.0 || *v == 1.0));
    }

    #[test]
    fn eval_mask_is_sign_of_logit() {
        // with zero temperature-scaled noise, mask = 1 exactly when logit > 0
        let mut rng = Rng::new(4);
        let model = MagnetsModel::init(tiny_config(), &mut rng).unwrap();
        let x = Tensor::from_fn(&[1, 1, 8], |i| i as f64 * 0.2 - 0.8);
        let mut tape = Tape::new();
        let trace = model.forward(&mut tape, &x, MaskNoise::Off, MaskPath::Hard).unwrap();
        let logits = tape.value(trace.logits).data().to_vec();
        let masks = tape.value(trace.masks).data().to_vec();
        for (l, m) in logits.iter().zip(masks.iter()) {
            assert_eq!(*m, if *l > 0.0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn affine_decomposition_is_exact() {
        let mut rng = Rng::new(5);
        let mut model = MagnetsModel::init(tiny_config(), &mut rng).unwrap();
        // randomize the affine stage away from its tiny init
        for p in model.params_mut().into_iter().rev().take(4) {
            for v in p.data_mut() {
                *v = rng.range(-1.0, 1.0);
            }
        }
        let x = Tensor::from_fn(&[1, 8], |i| (i as f64 * 0.7).sin() + 0.5);
        let e = model.explain(&x).unwrap();

        // prediction = w0 + sum_k w_k c_k
        let recon: f64 = model.head_b.item()
            + e.contributions.iter().sum::<f64>();
        assert!((recon - e.prediction).abs() <= 1e-12);

        // c_k = b_k + sum_{c,m} beta[c,m,k] z[c,m]
        let k = model.config.concepts;
        for ki in 0..k {
            let mut ck = model.beta_bias.data()[ki];
            for cm in 0..e.aggregated.len() {
                ck += model.beta.data()[cm * k + ki] * e.aggregated.data()[cm];
            }
            assert!((ck - e.concepts[ki]).abs() <= 1e-12);
        }

        // z[c,m] = sum_t x[c,t] m[c,m,t]
        let (c, m, t) = (1, 2, 8);
        for ci in 0..c {
            for mi in 0..m {
                let mut z = 0.0;
                for ti in 0..t {
                    z += x.data()[ci * t + ti] * e.masks.data()[(ci * m + mi) * t + ti];
                }
                assert!((z - e.aggregated.data()[ci * m + mi]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_beta_gives_bias_only_prediction() {
        let mut rng = Rng::new(6);
        let mut model = MagnetsModel::init(tiny_config(), &mut rng).unwrap();
        model.beta.data_mut().fill(0.0);
        model.beta_bias.data_mut().copy_from_slice(&[0.5, -0.25]);
        model.head_w.data_mut().copy_from_slice(&[2.0, 4.0]);
        model.head_b.data_mut()[0] = 1.0;
        let x = Tensor::from_fn(&[1, 8], |i| i as f64);
        let e = model.explain(&x).unwrap();
        assert!(e.feature_weights.iter().all(|v| *v == 0.0));
        // prediction = w0 + sum_k w_k b_k = 1 + 1 - 1 = 1
        assert!((e.prediction - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn unit_mask_perturbation_changes_z_by_x() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[1, 1, 4], vec![1.5, -2.0, 3.0, 0.25]).unwrap());
        let m0 = Tensor::new(&[1, 1, 1, 4], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let mut m1 = m0.clone();
        m1.data_mut()[1] = 1.0;
        let mv0 = tape.leaf(m0);
        let mv1 = tape.leaf(m1);
        let z0 = tape.masked_aggregate(x, mv0, 4).unwrap();
        let z1 = tape.masked_aggregate(x, mv1, 4).unwrap();
        let delta = tape.value(z1).item() - tape.value(z0).item();
        assert_eq!(delta, -2.0);
    }

    #[test]
    fn relaxed_saturates_at_low_temperature() {
        // tau = 0.1: |relaxed - hard| <= 0.05 whenever |logit + g| >= 0.5
        for logit_plus_noise in [-3.0f64, -0.5, 0.5, 2.0] {
            let relaxed = 1.0 / (1.0 + (-logit_plus_noise / 0.1).exp());
            let hard = if relaxed > 0.5 { 1.0 } else { 0.0 };
            assert!((relaxed - hard).abs() <= 0.05, "at {logit_plus_noise}");
        }
    }

    #[test]
    fn noise_kinds_differ_but_are_seeded() {
        let mut cfg = tiny_config();
        let mut rng = Rng::new(7);
        cfg.noise = NoiseKind::Gumbel;
        let gum = MagnetsModel::init(cfg.clone(), &mut rng).unwrap();
        let x = Tensor::from_fn(&[1, 1, 8], |i| i as f64 * 0.1);
        let sample = |model: &MagnetsModel, seed: u64| {
            let mut rng = Rng::new(seed);
            let mut tape = Tape::new();
            let tr = model
                .forward(&mut tape, &x, MaskNoise::Sample(&mut rng), MaskPath::Hard)
                .unwrap();
            tape.value(tr.relaxed).data().to_vec()
        };
        assert_eq!(sample(&gum, 11), sample(&gum, 11));
        assert_ne!(sample(&gum, 11), sample(&gum, 12));
    }
}
