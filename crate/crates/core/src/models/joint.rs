//! Shared-trunk model with a dry-speech head and an RIR head.
//!
//! The trunk is the first two layers of the RIR stack. The RIR head runs the
//! remaining layers; the dry head is a residual Bi-GRU over the trunk
//! features (zero-padded back to the input frame count and flattened per
//! frame) concatenated with the input log-magnitude.

use serde::{Deserialize, Serialize};

use super::dry_gru::DryGruConfig;
use super::rir::{
    apply_conv_stack, closure_frames, conv_stack_specs, dims2, rir_from_channels, time_extents,
    validate_time_stack, ConvLayer, RirEstimatorConfig,
};
use super::{LossWeights, ModelError};
use crate::nn::{Bound, ParamSpec, Tape, Var};

/// Number of leading RIR-stack layers shared by both heads.
pub const TRUNK_LAYERS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub trunk: Vec<ConvLayer>,
    pub rir_head: Vec<ConvLayer>,
    pub dry: DryGruConfig,
    pub bins: usize,
    pub weights: LossWeights,
}

impl JointConfig {
    fn from_parts(rir: RirEstimatorConfig, dry: DryGruConfig) -> Self {
        let (trunk, head) = rir.layers.split_at(TRUNK_LAYERS);
        let bins = rir.bins;
        let c2 = trunk.last().map_or(0, |l| l.cout);
        Self {
            trunk: trunk.to_vec(),
            rir_head: head.to_vec(),
            dry: DryGruConfig {
                in_features: bins * c2 + bins,
                out_bins: bins,
                ..dry
            },
            bins,
            weights: LossWeights::default(),
        }
    }

    pub fn paper() -> Self {
        Self::from_parts(RirEstimatorConfig::paper(), DryGruConfig::paper())
    }

    pub fn desk() -> Self {
        Self::from_parts(RirEstimatorConfig::desk(), DryGruConfig::desk())
    }

    pub fn tiny() -> Self {
        let rir = RirEstimatorConfig::tiny();
        let dry = DryGruConfig {
            layers: 1,
            hidden: 3,
            residual: true,
            in_features: 0,
            out_bins: rir.bins,
        };
        Self::from_parts(rir, dry)
    }

    fn all_layers(&self) -> Vec<ConvLayer> {
        self.trunk.iter().chain(&self.rir_head).copied().collect()
    }

    pub fn input_frames(&self) -> usize {
        closure_frames(&self.all_layers())
    }

    pub fn output_frames(&self) -> usize {
        self.rir_head.last().map_or(0, |l| l.cout)
    }

    /// Frame count after the trunk.
    pub fn trunk_frames(&self) -> usize {
        *time_extents(self.input_frames(), &self.trunk).last().unwrap()
    }

    pub fn trunk_channels(&self) -> usize {
        self.trunk.last().map_or(0, |l| l.cout)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        validate_time_stack(&self.trunk)?;
        validate_time_stack(&self.rir_head)?;
        self.dry.validate()?;
        self.weights.validate()?;
        let want = self.bins * self.trunk_channels() + self.bins;
        if self.dry.in_features != want || self.dry.out_bins != self.bins {
            return Err(ModelError::Config(format!(
                "dry head expects {} inputs and {} outputs, config has {} and {}",
                want, self.bins, self.dry.in_features, self.dry.out_bins
            )));
        }
        Ok(())
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = conv_stack_specs("trunk", 1, &self.trunk, false);
        specs.extend(conv_stack_specs("rir", self.trunk_channels(), &self.rir_head, true));
        specs.extend(self.dry.param_specs("dry."));
        specs
    }

    /// `input: [T×F]` → `(dry log-magnitude [T×F], RIR magnitude [R×F])`.
    pub fn forward(&self, tape: &mut Tape, params: &Bound, input: Var) -> Result<(Var, Var), ModelError> {
        let (t, f) = dims2(tape, input)?;
        if t != self.input_frames() {
            return Err(ModelError::WrongFrameCount {
                expected: self.input_frames(),
                got: t,
            });
        }
        let x = tape.reshape(input, vec![t, f, 1])?;
        let trunk = apply_conv_stack(tape, params, "trunk", &self.trunk, x, false)?;

        let rir = apply_conv_stack(tape, params, "rir", &self.rir_head, trunk, true)?;
        let rir = rir_from_channels(tape, rir)?;

        let t2 = tape.shape(trunk)[0];
        let c2 = tape.shape(trunk)[2];
        let before = (t - t2) / 2;
        let padded = tape.pad3(trunk, (before, t - t2 - before), (0, 0))?;
        let flat = tape.reshape(padded, vec![t, f * c2])?;
        let features = tape.concat_last(&[flat, input])?;
        let dry = self.dry.forward(tape, params, "dry.", features)?;
        Ok((dry, rir))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trunk_extent_and_width() {
        let c = JointConfig::paper();
        c.validate().unwrap();
        assert_eq!(c.input_frames(), 313);
        assert_eq!(c.trunk_frames(), 292);
        assert_eq!(c.trunk_channels(), 32);
        assert_eq!(c.output_frames(), 126);
        assert_eq!(c.dry.layer_width(), 760);
    }

    #[test]
    fn tiny_closure() {
        let c = JointConfig::tiny();
        c.validate().unwrap();
        assert_eq!(c.input_frames(), 8);
        assert_eq!(c.output_frames(), 4);
    }
}
