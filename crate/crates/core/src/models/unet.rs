//! Compact convolutional encoder/decoder dry-speech estimator.
//!
//! The encoder halves both axes `depth` times with 4×4 stride-2 convolutions;
//! the decoder doubles them back with transposed convolutions and
//! concatenates the matching encoder map (the padded input at the top level).

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::nn::{Bound, Init, Padding, ParamSpec, Tape, Var};

const KERNEL: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnetConfig {
    pub depth: usize,
    pub base_channels: usize,
}

impl Default for UnetConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            base_channels: 8,
        }
    }
}

impl UnetConfig {
    pub fn tiny() -> Self {
        Self {
            depth: 2,
            base_channels: 2,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.depth == 0 || self.base_channels == 0 || self.depth > 10 {
            return Err(ModelError::Config(format!("degenerate U-net config {self:?}")));
        }
        Ok(())
    }

    /// Next multiple of `2^depth`.
    pub fn padded_extent(&self, n: usize) -> usize {
        n.div_ceil(1 << self.depth) << self.depth
    }

    fn enc_channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Output channels of the decoder step that lands on `level`.
    fn dec_channels(&self, level: usize) -> usize {
        if level == 0 {
            self.base_channels
        } else {
            self.base_channels << (level - 1)
        }
    }

    fn skip_channels(&self, level: usize) -> usize {
        if level == 0 {
            1
        } else {
            self.enc_channels(level - 1)
        }
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        let k2 = KERNEL * KERNEL;
        for l in 0..self.depth {
            let cin = if l == 0 { 1 } else { self.enc_channels(l - 1) };
            let cout = self.enc_channels(l);
            specs.push(ParamSpec::new(
                format!("enc{l}.weight"),
                vec![KERNEL, KERNEL, cin, cout],
                Init::Glorot {
                    fan_in: k2 * cin,
                    fan_out: k2 * cout,
                },
            ));
            specs.push(ParamSpec::new(format!("enc{l}.bias"), vec![cout], Init::Zeros));
        }
        for l in (0..self.depth).rev() {
            let cin = self.decoder_input_channels(l);
            let cout = self.dec_channels(l);
            specs.push(ParamSpec::new(
                format!("dec{l}.weight"),
                vec![KERNEL, KERNEL, cout, cin],
                Init::Glorot {
                    fan_in: k2 * cin,
                    fan_out: k2 * cout,
                },
            ));
            specs.push(ParamSpec::new(format!("dec{l}.bias"), vec![cout], Init::Zeros));
        }
        let c = self.dec_channels(0) + self.skip_channels(0);
        specs.push(ParamSpec::new(
            "out.weight",
            vec![1, 1, c, 1],
            Init::Glorot { fan_in: c, fan_out: 1 },
        ));
        specs.push(ParamSpec::new("out.bias", vec![1], Init::Zeros));
        specs
    }

    /// Channels entering the decoder step that produces `level`.
    fn decoder_input_channels(&self, level: usize) -> usize {
        if level + 1 == self.depth {
            self.enc_channels(self.depth - 1)
        } else {
            self.dec_channels(level + 1) + self.skip_channels(level + 1)
        }
    }

    /// `[T×F]` → `[T×F]`.
    pub fn forward(&self, tape: &mut Tape, params: &Bound, input: Var) -> Result<Var, ModelError> {
        let (t, f) = super::rir::dims2(tape, input)?;
        let (tp, fp) = (self.padded_extent(t), self.padded_extent(f));
        let x = tape.reshape(input, vec![t, f, 1])?;
        let x = tape.pad3(x, (0, tp - t), (0, fp - f))?;

        let mut skips = vec![x];
        let mut h = x;
        for l in 0..self.depth {
            let y = tape.conv2d(
                h,
                params.var(&format!("enc{l}.weight")),
                Some(params.var(&format!("enc{l}.bias"))),
                (2, 2),
                Padding::Same,
            )?;
            h = tape.elu(y);
            skips.push(h);
        }
        // skips[l] has extent (tp, fp) / 2^l
        for l in (0..self.depth).rev() {
            let up = tape.conv2d_transposed(
                h,
                params.var(&format!("dec{l}.weight")),
                Some(params.var(&format!("dec{l}.bias"))),
                (2, 2),
            )?;
            let (lt, lf) = (tp >> l, fp >> l);
            let up = tape.crop3(up, 1, lt, 1, lf)?;
            let up = tape.elu(up);
            h = tape.concat_last(&[up, skips[l]])?;
        }
        let y = tape.conv2d(
            h,
            params.var("out.weight"),
            Some(params.var("out.bias")),
            (1, 1),
            Padding::Valid,
        )?;
        let y = tape.crop3(y, 0, t, 0, f)?;
        Ok(tape.reshape(y, vec![t, f])?)
    }
}
