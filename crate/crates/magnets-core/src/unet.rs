//! 1-d U-Net used as the mask generation network.
//!
//! Three encoder blocks (two same-padding k=3 convolutions with ReLU, then
//! window-2 max pooling), a bottleneck block at the deepest width, and three
//! decoder blocks (stride-2 transposed convolution, skip concatenation, two
//! convolutions with ReLU), followed by a 1x1 convolution head. Each pooling
//! halves the time axis, so inputs must have length divisible by 8.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub(crate) type VarIter<'a> = core::iter::Copied<core::slice::Iter<'a, Var>>;

/// Kernel + bias of one convolution layer. Kernel layout [cout, cin, k].
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub kernel: Tensor,
    pub bias: Tensor,
}

impl Conv1d {
    pub(crate) fn init(cin: usize, cout: usize, k: usize, rng: &mut Rng) -> Self {
        let bound = libm::sqrt(1.0 / (cin * k) as f64);
        Conv1d {
            kernel: Tensor::from_fn(&[cout, cin, k], |_| rng.range(-bound, bound)),
            bias: Tensor::zeros(&[cout]),
        }
    }

    pub(crate) fn forward(&self, tape: &mut Tape, vars: &mut VarIter, x: Var, relu: bool) -> Result<Var> {
        let w = vars.next().expect("conv kernel var");
        let b = vars.next().expect("conv bias var");
        let y = tape.conv1d(x, w, b)?;
        Ok(if relu { tape.relu(y) } else { y })
    }
}

/// Stride-2 transposed convolution layer. Kernel layout [cin, cout, 2].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTr1d {
    pub kernel: Tensor,
}

impl ConvTr1d {
    pub(crate) fn init(cin: usize, cout: usize, rng: &mut Rng) -> Self {
        let bound = libm::sqrt(1.0 / (cin * 2) as f64);
        ConvTr1d {
            kernel: Tensor::from_fn(&[cin, cout, 2], |_| rng.range(-bound, bound)),
        }
    }

    pub(crate) fn forward(&self, tape: &mut Tape, vars: &mut VarIter, x: Var) -> Result<Var> {
        let w = vars.next().expect("tconv kernel var");
        tape.conv1d_transposed(x, w)
    }
}

/// Two convolutions with ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub conv0: Conv1d,
    pub conv1: Conv1d,
}

impl ConvBlock {
    pub(crate) fn init(cin: usize, cout: usize, rng: &mut Rng) -> Self {
        ConvBlock {
            conv0: Conv1d::init(cin, cout, 3, rng),
            conv1: Conv1d::init(cout, cout, 3, rng),
        }
    }

    pub(crate) fn forward(&self, tape: &mut Tape, vars: &mut VarIter, x: Var) -> Result<Var> {
        let h = self.conv0.forward(tape, vars, x, true)?;
        self.conv1.forward(tape, vars, h, true)
    }

    pub(crate) fn params(&self) -> [&Tensor; 4] {
        [&self.conv0.kernel, &self.conv0.bias, &self.conv1.kernel, &self.conv1.bias]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UNet {
    pub in_channels: usize,
    pub out_channels: usize,
    pub widths: [usize; 3],
    pub encoder: Vec<ConvBlock>,
    pub bottleneck: ConvBlock,
    pub upsample: Vec<ConvTr1d>,
    pub decoder: Vec<ConvBlock>,
    pub head: Conv1d,
}

impl UNet {
    pub fn init(in_channels: usize, out_channels: usize, widths: [usize; 3], rng: &mut Rng) -> Self {
        let [w1, w2, w3] = widths;
        let encoder = alloc::vec![
            ConvBlock::init(in_channels, w1, rng),
            ConvBlock::init(w1, w2, rng),
            ConvBlock::init(w2, w3, rng),
        ];
        let bottleneck = ConvBlock::init(w3, w3, rng);
        let upsample = alloc::vec![
            ConvTr1d::init(w3, w3, rng),
            ConvTr1d::init(w3, w2, rng),
            ConvTr1d::init(w2, w1, rng),
        ];
        let decoder = alloc::vec![
            ConvBlock::init(w3 + w3, w3, rng),
            ConvBlock::init(w2 + w2, w2, rng),
            ConvBlock::init(w1 + w1, w1, rng),
        ];
        let head = Conv1d::init(w1, out_channels, 1, rng);
        UNet {
            in_channels,
            out_channels,
            widths,
            encoder,
            bottleneck,
            upsample,
            decoder,
            head,
        }
    }

    /// Register every parameter as a tape leaf, in [`UNet::params`] order.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|p| tape.leaf(p.clone())).collect()
    }

    /// Forward pass reading parameter values from `vars` (in [`UNet::params`]
    /// order). `x` is [batch, in_channels, t] with t divisible by 8.
    pub fn forward_with(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let mut it = vars.iter().copied();
        let mut skips = Vec::with_capacity(3);
        let mut h = x;
        for block in &self.encoder {
            h = block.forward(tape, &mut it, h)?;
            skips.push(h);
            h = tape.maxpool1d(h)?;
        }
        h = self.bottleneck.forward(tape, &mut it, h)?;
        for (i, block) in self.decoder.iter().enumerate() {
            h = self.upsample[i].forward(tape, &mut it, h)?;
            h = tape.concat_channels(h, skips[2 - i])?;
            h = block.forward(tape, &mut it, h)?;
        }
        self.head.forward(tape, &mut it, h, false)
    }

    /// Register parameters and run the forward pass; the registered vars are
    /// appended to `rec`.
    pub fn forward(&self, tape: &mut Tape, rec: &mut Vec<Var>, x: Var) -> Result<Var> {
        let vars = self.register(tape);
        rec.extend_from_slice(&vars);
        self.forward_with(tape, &vars, x)
    }

    /// All parameter tensors in registration order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for block in &self.encoder {
            out.extend(block.params());
        }
        out.extend(self.bottleneck.params());
        for (up, block) in self.upsample.iter().zip(self.decoder.iter()) {
            out.push(&up.kernel);
            out.extend(block.params());
        }
        out.extend([&self.head.kernel, &self.head.bias]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for block in self.encoder.iter_mut() {
            out.extend([
                &mut block.conv0.kernel,
                &mut block.conv0.bias,
                &mut block.conv1.kernel,
                &mut block.conv1.bias,
            ]);
        }
        out.extend([
            &mut self.bottleneck.conv0.kernel,
            &mut self.bottleneck.conv0.bias,
            &mut self.bottleneck.conv1.kernel,
            &mut self.bottleneck.conv1.bias,
        ]);
        for (up, block) in self.upsample.iter_mut().zip(self.decoder.iter_mut()) {
            out.push(&mut up.kernel);
            out.extend([
                &mut block.conv0.kernel,
                &mut block.conv0.bias,
                &mut block.conv1.kernel,
                &mut block.conv1.bias,
            ]);
        }
        out.extend([&mut self.head.kernel, &mut self.head.bias]);
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..3 {
            for c in 0..2 {
                out.push(format!("unet.enc{i}.conv{c}.kernel"));
                out.push(format!("unet.enc{i}.conv{c}.bias"));
            }
        }
        for c in 0..2 {
            out.push(format!("unet.bottleneck.conv{c}.kernel"));
            out.push(format!("unet.bottleneck.conv{c}.bias"));
        }
        for i in 0..3 {
            out.push(format!("unet.up{i}.kernel"));
            for c in 0..2 {
                out.push(format!("unet.dec{i}.conv{c}.kernel"));
                out.push(format!("unet.dec{i}.conv{c}.bias"));
            }
        }
        out.push("unet.head.kernel".into());
        out.push("unet.head.bias".into());
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Parameter count of the encoder blocks alone (used by the capacity-
    /// matched convolutional baseline).
    pub fn encoder_param_count(&self) -> usize {
        self.encoder
            .iter()
            .map(|b| b.params().iter().map(|t| t.len()).sum::<usize>())
            .sum()
    }
}
