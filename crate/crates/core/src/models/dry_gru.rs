//! Residual bidirectional-GRU dry-speech estimator on log-magnitude frames.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::nn::{Bound, GruParams, Init, ParamSpec, Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DryGruConfig {
    pub layers: usize,
    /// Hidden units per direction; layer width is twice this.
    pub hidden: usize,
    pub residual: bool,
    pub in_features: usize,
    pub out_bins: usize,
}

impl DryGruConfig {
    /// 380 units per direction, 760 per layer.
    pub fn paper() -> Self {
        Self {
            layers: 3,
            hidden: 380,
            residual: true,
            in_features: 257,
            out_bins: 257,
        }
    }

    pub fn desk() -> Self {
        Self {
            hidden: 64,
            ..Self::paper()
        }
    }

    pub fn tiny() -> Self {
        Self {
            layers: 2,
            hidden: 4,
            residual: true,
            in_features: 5,
            out_bins: 5,
        }
    }

    pub fn layer_width(&self) -> usize {
        2 * self.hidden
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers == 0 || self.hidden == 0 || self.in_features == 0 || self.out_bins == 0 {
            return Err(ModelError::Config(format!("degenerate GRU config {self:?}")));
        }
        Ok(())
    }

    pub fn param_specs(&self, prefix: &str) -> Vec<ParamSpec> {
        let width = self.layer_width();
        let h = self.hidden;
        let mut specs = vec![
            ParamSpec::new(
                format!("{prefix}in_proj.weight"),
                vec![self.in_features, width],
                Init::Glorot {
                    fan_in: self.in_features,
                    fan_out: width,
                },
            ),
            ParamSpec::new(format!("{prefix}in_proj.bias"), vec![width], Init::Zeros),
        ];
        for l in 0..self.layers {
            for dir in ["fwd", "bwd"] {
                let base = format!("{prefix}gru{l}.{dir}");
                specs.push(ParamSpec::new(
                    format!("{base}.w"),
                    vec![width, 3 * h],
                    Init::Glorot {
                        fan_in: width,
                        fan_out: 3 * h,
                    },
                ));
                specs.push(ParamSpec::new(format!("{base}.u"), vec![h, 3 * h], Init::OrthogonalBlocks));
                specs.push(ParamSpec::new(format!("{base}.b"), vec![3 * h], Init::Zeros));
            }
        }
        specs.push(ParamSpec::new(
            format!("{prefix}out_proj.weight"),
            vec![width, self.out_bins],
            Init::Glorot {
                fan_in: width,
                fan_out: self.out_bins,
            },
        ));
        specs.push(ParamSpec::new(format!("{prefix}out_proj.bias"), vec![self.out_bins], Init::Zeros));
        specs
    }

    /// `[T × in_features]` → `[T × out_bins]`.
    pub fn forward(&self, tape: &mut Tape, params: &Bound, prefix: &str, input: Var) -> Result<Var, ModelError> {
        let s = tape.shape(input).to_vec();
        if s.len() != 2 || s[1] != self.in_features || s[0] == 0 {
            return Err(ModelError::Shape(format!(
                "GRU input {s:?}, expected [T × {}]",
                self.in_features
            )));
        }
        let p = |n: &str| params.var(&format!("{prefix}{n}"));
        let mut x = tape.linear(input, p("in_proj.weight"), p("in_proj.bias"))?;
        for l in 0..self.layers {
            let dir = |d: &str| GruParams {
                w: p(&format!("gru{l}.{d}.w")),
                u: p(&format!("gru{l}.{d}.u")),
                b: p(&format!("gru{l}.{d}.b")),
            };
            let y = tape.bigru_layer(x, dir("fwd"), dir("bwd"))?;
            x = if self.residual { tape.add(x, y)? } else { y };
        }
        Ok(tape.linear(x, p("out_proj.weight"), p("out_proj.bias"))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ParamStore, Tensor};
    use rand::SeedableRng;

    #[test]
    fn paper_width_is_760() {
        let c = DryGruConfig::paper();
        assert_eq!(c.layer_width(), 760);
        let specs = c.param_specs("");
        let w = specs.iter().find(|s| s.name == "gru0.fwd.w").unwrap();
        assert_eq!(w.shape, vec![760, 1140]);
    }

    #[test]
    fn preserves_frame_count() {
        let c = DryGruConfig::tiny();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let store = ParamStore::init(&c.param_specs(""), &mut rng);
        for t in [1usize, 2, 17, 400] {
            let mut tape = Tape::inference();
            let p = store.bind(&mut tape);
            let x = tape.constant(Tensor::full(vec![t, 5], 0.1));
            let y = c.forward(&mut tape, &p, "", x).unwrap();
            assert_eq!(tape.shape(y), &[t, 5]);
        }
    }
}
