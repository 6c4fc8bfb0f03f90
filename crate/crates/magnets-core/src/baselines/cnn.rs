//! Black-box convolutional baseline and its post-hoc attributions.
//!
//! The encoder mirrors the mask generator's encoder exactly (same depth,
//! widths and kernel sizes), followed by global average pooling over time and
//! a linear head, so the capacity comparison is parameter-for-parameter.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::train::{BatchLoss, TrainableModel};
use crate::unet::ConvBlock;

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub channels: usize,
    pub length: usize,
    pub widths: [usize; 3],
    pub encoder: Vec<ConvBlock>,
    /// Head weights over the pooled features, [w3].
    pub head_w: Tensor,
    /// Head bias, [1].
    pub head_b: Tensor,
}

pub struct CnnTrace {
    pub param_vars: Vec<Var>,
    pub input: Var,
    pub prediction: Var,
}

impl CnnModel {
    pub fn init(channels: usize, length: usize, widths: [usize; 3], rng: &mut Rng) -> Self {
        let [w1, w2, w3] = widths;
        let encoder = alloc::vec![
            ConvBlock::init(channels, w1, rng),
            ConvBlock::init(w1, w2, rng),
            ConvBlock::init(w2, w3, rng),
        ];
        let bound = libm::sqrt(1.0 / w3 as f64);
        CnnModel {
            channels,
            length,
            widths,
            encoder,
            head_w: Tensor::from_fn(&[w3], |_| rng.range(-bound, bound)),
            head_b: Tensor::zeros(&[1]),
        }
    }

    pub fn padded_length(&self) -> usize {
        self.length.div_ceil(8) * 8
    }

    /// Encoder + global average pooling + linear head; `x` is [batch, c, t].
    pub fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<CnnTrace> {
        let s = x.shape();
        if s.len() != 3 || s[1] != self.channels || s[2] != self.length {
            return Err(Error::shape(
                "cnn_forward",
                format!("expected [batch, {}, {}], got {s:?}", self.channels, self.length),
            ));
        }
        let batch = s[0];
        let x_pad = x.right_pad_last_axis(self.padded_length());
        let input = tape.leaf(x_pad);

        let mut param_vars: Vec<Var> =
            self.params().into_iter().map(|p| tape.leaf(p.clone())).collect();
        let mut it = param_vars[..param_vars.len() - 2].iter().copied();
        let mut h = input;
        for block in &self.encoder {
            h = block.forward(tape, &mut it, h)?;
            h = tape.maxpool1d(h)?;
        }
        // mean over the remaining time axis
        let pooled_t = self.padded_length() / 8;
        let summed = tape.sum_axis(h, 2)?;
        let pooled = tape.scale(summed, 1.0 / pooled_t as f64);

        let w_var = param_vars[param_vars.len() - 2];
        let b_var = param_vars[param_vars.len() - 1];
        let w2 = tape.reshape(w_var, &[self.widths[2], 1])?;
        let pred2 = tape.linear(pooled, w2, b_var)?;
        let prediction = tape.reshape(pred2, &[batch])?;
        // keep ordering: encoder params, then head
        let _ = &mut param_vars;
        Ok(CnnTrace { param_vars, input, prediction })
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

impl TrainableModel for CnnModel {
    fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for block in &self.encoder {
            out.extend(block.params());
        }
        out.extend([&self.head_w, &self.head_b]);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for block in self.encoder.iter_mut() {
            out.extend([
                &mut block.conv0.kernel,
                &mut block.conv0.bias,
                &mut block.conv1.kernel,
                &mut block.conv1.bias,
            ]);
        }
        out.extend([&mut self.head_w, &mut self.head_b]);
        out
    }

    fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..3 {
            for c in 0..2 {
                out.push(format!("cnn.enc{i}.conv{c}.kernel"));
                out.push(format!("cnn.enc{i}.conv{c}.bias"));
            }
        }
        out.push("cnn.head_w".into());
        out.push("cnn.head_b".into());
        out
    }

    fn batch_loss(&self, tape: &mut Tape, x: &Tensor, y: &[f64], _rng: &mut Rng) -> Result<BatchLoss> {
        let trace = self.forward(tape, x)?;
        let total = tape.mse_loss(trace.prediction, y)?;
        Ok(BatchLoss {
            mse: tape.value(total).item(),
            spars: 0.0,
            ortho: 0.0,
            total,
            param_vars: trace.param_vars,
        })
    }

    fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let trace = self.forward(&mut tape, x)?;
        Ok(tape.value(trace.prediction).data().to_vec())
    }
}

/// Integrated-gradients attribution of one sample, [c, t].
///
/// attribution = (x - baseline) * (1/steps) * sum_{i=1..steps}
///     grad f(baseline + (i/steps)(x - baseline)).
/// The default baseline is all zeros (i.e. the per-channel training mean in
/// raw units, since the model consumes standardized inputs).
pub fn integrated_gradients(
    model: &CnnModel,
    x: &Tensor,
    baseline: Option<&Tensor>,
    steps: usize,
) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 2 || s[0] != model.channels || s[1] != model.length {
        return Err(Error::shape(
            "integrated_gradients",
            format!("expected [{}, {}], got {s:?}", model.channels, model.length),
        ));
    }
    if steps < 2 {
        return Err(Error::invalid("integrated_gradients", format!("steps {steps} < 2")));
    }
    let zeros = Tensor::zeros(s);
    let base = baseline.unwrap_or(&zeros);
    if base.shape() != s {
        return Err(Error::shape(
            "integrated_gradients",
            format!("baseline {:?} vs input {s:?}", base.shape()),
        ));
    }
    let (c, t) = (s[0], s[1]);
    let tp = model.padded_length();
    let mut grad_sum = alloc::vec![0.0f64; c * t];
    for i in 1..=steps {
        let alpha = i as f64 / steps as f64;
        let point = Tensor::from_fn(&[1, c, t], |idx| {
            base.data()[idx] + alpha * (x.data()[idx] - base.data()[idx])
        });
        let mut tape = Tape::new();
        let trace = model.forward(&mut tape, &point)?;
        tape.backward(trace.prediction)?;
        let g = tape.grad(trace.input).expect("input is on the loss path");
        for ch in 0..c {
            for ti in 0..t {
                grad_sum[ch * t + ti] += g[ch * tp + ti];
            }
        }
    }
    let inv = 1.0 / steps as f64;
    Ok(Tensor::from_fn(&[c, t], |idx| {
        (x.data()[idx] - base.data()[idx]) * grad_sum[idx] * inv
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unet::UNet;

    #[test]
    fn predicts_one_scalar_per_sample() {
        let mut rng = Rng::new(1);
        let model = CnnModel::init(2, 16, [4, 8, 16], &mut rng);
        let x = Tensor::from_fn(&[5, 2, 16], |i| (i as f64 * 0.01).sin());
        let pred = model.predict(&x).unwrap();
        assert_eq!(pred.len(), 5);
    }

    #[test]
    fn encoder_capacity_matches_mask_network_encoder() {
        let mut rng = Rng::new(2);
        let widths = [4, 8, 16];
        let cnn = CnnModel::init(3, 16, widths, &mut rng);
        let unet = UNet::init(3, 30, widths, &mut rng);
        let head = cnn.head_w.len() + cnn.head_b.len();
        assert_eq!(cnn.param_count(), unet.encoder_param_count() + head);
    }

    #[test]
    fn cnn_gradients_match_finite_differences() {
        let mut rng = Rng::new(3);
        let model = CnnModel::init(1, 16, [2, 3, 4], &mut rng);
        let x = Tensor::from_fn(&[2, 1, 16], |_| rng.range(-1.0, 1.0));
        let y: Vec<f64> = (0..2).map(|_| rng.range(-1.0, 1.0)).collect();

        let mut tape = Tape::new();
        let mut r = Rng::new(0);
        let bl = model.batch_loss(&mut tape, &x, &y, &mut r).unwrap();
        tape.backward(bl.total).unwrap();
        let analytic: Vec<Vec<f64>> = bl
            .param_vars
            .iter()
            .map(|v| tape.grad(*v).unwrap().to_vec())
            .collect();

        let eval = |m: &CnnModel| {
            let mut tape = Tape::new();
            let mut r = Rng::new(0);
            let bl = m.batch_loss(&mut tape, &x, &y, &mut r).unwrap();
            tape.value(bl.total).item()
        };
        let h = 1e-6;
        let mut max_err = 0.0f64;
        for pi in 0..analytic.len() {
            for j in 0..analytic[pi].len() {
                let mut plus = model.clone();
                plus.params_mut()[pi].data_mut()[j] += h;
                let mut minus = model.clone();
                minus.params_mut()[pi].data_mut()[j] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                max_err = max_err.max((fd - analytic[pi][j]).abs() / fd.abs().max(1.0));
            }
        }
        assert!(max_err <= 1e-6, "max relative error {max_err}");
    }

    #[test]
    fn ig_attribution_is_zero_at_the_baseline() {
        let mut rng = Rng::new(4);
        let model = CnnModel::init(1, 16, [2, 3, 4], &mut rng);
        let x = Tensor::zeros(&[1, 16]);
        let attr = integrated_gradients(&model, &x, None, 8).unwrap();
        assert!(attr.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ig_rejects_too_few_steps() {
        let mut rng = Rng::new(5);
        let model = CnnModel::init(1, 16, [2, 3, 4], &mut rng);
        let x = Tensor::zeros(&[1, 16]);
        assert!(integrated_gradients(&model, &x, None, 1).is_err());
    }
}
