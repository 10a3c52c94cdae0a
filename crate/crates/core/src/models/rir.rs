//! Per-frequency convolutional RIR estimator.
//!
//! Every kernel spans several frames but a single frequency bin. Valid
//! convolutions shrink the time axis to one step; the channels of the last
//! layer then become the RIR's frame axis.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::nn::{Bound, Init, Padding, ParamSpec, Tape, Var};

/// One `(kT × kF, Cout)` convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub kt: usize,
    pub kf: usize,
    pub cout: usize,
}

impl ConvLayer {
    pub const fn new(kt: usize, kf: usize, cout: usize) -> Self {
        Self { kt, kf, cout }
    }
}

pub const PAPER_RIR_LAYERS: [ConvLayer; 7] = [
    ConvLayer::new(9, 1, 16),
    ConvLayer::new(14, 1, 32),
    ConvLayer::new(27, 1, 64),
    ConvLayer::new(27, 1, 32),
    ConvLayer::new(27, 1, 16),
    ConvLayer::new(28, 1, 4),
    ConvLayer::new(187, 1, 126),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirEstimatorConfig {
    pub layers: Vec<ConvLayer>,
    pub bins: usize,
}

impl RirEstimatorConfig {
    pub fn paper() -> Self {
        Self {
            layers: PAPER_RIR_LAYERS.to_vec(),
            bins: 257,
        }
    }

    /// Full-size kernel lengths (so the 313 → 1 closure holds) with narrower
    /// hidden layers.
    pub fn desk() -> Self {
        let widths = [4, 8, 8, 8, 8, 4, 126];
        Self {
            layers: PAPER_RIR_LAYERS
                .iter()
                .zip(widths)
                .map(|(l, c)| ConvLayer::new(l.kt, 1, c))
                .collect(),
            bins: 257,
        }
    }

    /// Eight input frames, four output frames, five bins: the shape of the
    /// tiny synthesis preset.
    pub fn tiny() -> Self {
        Self {
            layers: vec![
                ConvLayer::new(3, 1, 2),
                ConvLayer::new(3, 1, 2),
                ConvLayer::new(3, 1, 2),
                ConvLayer::new(2, 1, 4),
            ],
            bins: 5,
        }
    }

    /// Input frame count that the stack reduces to exactly one step.
    pub fn input_frames(&self) -> usize {
        closure_frames(&self.layers)
    }

    pub fn output_frames(&self) -> usize {
        self.layers.last().map_or(0, |l| l.cout)
    }

    /// Time extent after each layer, starting with the input.
    pub fn extents(&self) -> Vec<usize> {
        time_extents(self.input_frames(), &self.layers)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        validate_time_stack(&self.layers)?;
        if self.bins == 0 {
            return Err(ModelError::Config("bins must be positive".into()));
        }
        Ok(())
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        conv_stack_specs("conv", 1, &self.layers, true)
    }

    /// `input: [T×F]` → `[R×F]`, non-negative.
    pub fn forward(&self, tape: &mut Tape, params: &Bound, input: Var) -> Result<Var, ModelError> {
        let (t, f) = dims2(tape, input)?;
        if t != self.input_frames() {
            return Err(ModelError::WrongFrameCount {
                expected: self.input_frames(),
                got: t,
            });
        }
        let x = tape.reshape(input, vec![t, f, 1])?;
        let y = apply_conv_stack(tape, params, "conv", &self.layers, x, true)?;
        rir_from_channels(tape, y)
    }
}

/// `Σ (kT - 1) + 1`.
pub(crate) fn closure_frames(layers: &[ConvLayer]) -> usize {
    layers.iter().map(|l| l.kt - 1).sum::<usize>() + 1
}

pub(crate) fn time_extents(input: usize, layers: &[ConvLayer]) -> Vec<usize> {
    let mut out = vec![input];
    let mut t = input;
    for l in layers {
        t = t + 1 - l.kt;
        out.push(t);
    }
    out
}

pub(crate) fn validate_time_stack(layers: &[ConvLayer]) -> Result<(), ModelError> {
    if layers.is_empty() {
        return Err(ModelError::Config("empty convolution stack".into()));
    }
    for (i, l) in layers.iter().enumerate() {
        if l.kf != 1 {
            return Err(ModelError::Config(format!("layer {i}: kF must be 1, got {}", l.kf)));
        }
        if l.kt == 0 || l.cout == 0 {
            return Err(ModelError::Config(format!("layer {i}: zero-sized kernel {l:?}")));
        }
    }
    Ok(())
}

/// Initial bias of the ReLU-terminated last layer, keeping its units active
/// at the start of training.
pub const FINAL_BIAS_INIT: f64 = 0.1;

/// Specs for a valid conv stack; with `final_relu`, the last bias starts at
/// [`FINAL_BIAS_INIT`].
pub(crate) fn conv_stack_specs(prefix: &str, cin: usize, layers: &[ConvLayer], final_relu: bool) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let mut cin = cin;
    for (i, l) in layers.iter().enumerate() {
        let fan_in = l.kt * l.kf * cin;
        let fan_out = l.kt * l.kf * l.cout;
        specs.push(ParamSpec::new(
            format!("{prefix}{i}.weight"),
            vec![l.kt, l.kf, cin, l.cout],
            Init::Glorot { fan_in, fan_out },
        ));
        let bias = if final_relu && i + 1 == layers.len() {
            Init::Constant(FINAL_BIAS_INIT)
        } else {
            Init::Zeros
        };
        specs.push(ParamSpec::new(format!("{prefix}{i}.bias"), vec![l.cout], bias));
        cin = l.cout;
    }
    specs
}

/// Valid stride-1 convolutions, ELU after each; the last one gets ReLU
/// instead when `final_relu` is set.
pub(crate) fn apply_conv_stack(
    tape: &mut Tape,
    params: &Bound,
    prefix: &str,
    layers: &[ConvLayer],
    mut x: Var,
    final_relu: bool,
) -> Result<Var, ModelError> {
    for i in 0..layers.len() {
        let w = params.var(&format!("{prefix}{i}.weight"));
        let b = params.var(&format!("{prefix}{i}.bias"));
        let y = tape.conv2d(x, w, Some(b), (1, 1), Padding::Valid)?;
        x = if final_relu && i + 1 == layers.len() {
            tape.relu(y)
        } else {
            tape.elu(y)
        };
    }
    Ok(x)
}

/// `[1×F×R]` → `[R×F]`.
pub(crate) fn rir_from_channels(tape: &mut Tape, y: Var) -> Result<Var, ModelError> {
    let s = tape.shape(y).to_vec();
    if s[0] != 1 {
        return Err(ModelError::WrongFrameCount {
            expected: 1,
            got: s[0],
        });
    }
    let flat = tape.reshape(y, vec![s[1], s[2]])?;
    Ok(tape.transpose(flat)?)
}

pub(crate) fn dims2(tape: &Tape, v: Var) -> Result<(usize, usize), ModelError> {
    match tape.shape(v) {
        &[t, f] => Ok((t, f)),
        other => Err(ModelError::Shape(format!("expected [frames × bins], got {other:?}"))),
    }
}
