//! Model architectures, presets and the weighted training loss.

mod check;
mod dry_gru;
mod joint;
mod reconstruct;
mod rir;
mod unet;

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Bound, NnError, ParamSpec, ParamStore, Tape, Tensor, Var};

pub use check::{check_model_gradients, random_case};
pub use dry_gru::DryGruConfig;
pub use joint::{JointConfig, TRUNK_LAYERS};
pub use reconstruct::reconstruct_reverb;
pub use rir::{ConvLayer, RirEstimatorConfig, PAPER_RIR_LAYERS};
pub use unet::UnetConfig;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("expected {expected} input frames, got {got}")]
    WrongFrameCount { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Rir,
    DryGru,
    DryUnet,
    Joint,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Rir, ModelKind::DryGru, ModelKind::DryUnet, ModelKind::Joint];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rir => "rir",
            ModelKind::DryGru => "dry-gru",
            ModelKind::DryUnet => "dry-unet",
            ModelKind::Joint => "joint",
        }
    }

    pub fn estimates_dry(self) -> bool {
        !matches!(self, ModelKind::Rir)
    }

    pub fn estimates_rir(self) -> bool {
        matches!(self, ModelKind::Rir | ModelKind::Joint)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Size preset. `Paper` is the full-size architecture, `Desk` narrows
/// hidden widths for single-core training, and `Tiny` is a 5-bin model for
/// gradient checks and smoke tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
    Tiny,
}

/// Weights of the dry, RIR and reconstruction loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub dry: f64,
    pub rir: f64,
    pub rec: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            dry: 1.0,
            rir: 1.0,
            rec: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(dry: f64, rir: f64, rec: f64) -> Result<Self, ModelError> {
        let w = Self { dry, rir, rec };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [self.dry, self.rir, self.rec];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) || all.iter().all(|&w| w == 0.0) {
            return Err(ModelError::Config(format!(
                "loss weights must be non-negative and not all zero, got {self:?}"
            )));
        }
        Ok(())
    }
}

impl std::str::FromStr for LossWeights {
    type Err = ModelError;

    /// Parses `w_dry,w_rir,w_rec`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ModelError::Config(format!("weights {s:?}: {e}")))?;
        match parts[..] {
            [d, r, c] => Self::new(d, r, c),
            _ => Err(ModelError::Config(format!("weights {s:?}: expected three values"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    Rir(RirEstimatorConfig),
    DryGru(DryGruConfig),
    DryUnet(UnetConfig),
    Joint(JointConfig),
}

impl ModelConfig {
    pub fn preset(kind: ModelKind, scale: Scale) -> Self {
        match (kind, scale) {
            (ModelKind::Rir, Scale::Paper) => Self::Rir(RirEstimatorConfig::paper()),
            (ModelKind::Rir, Scale::Desk) => Self::Rir(RirEstimatorConfig::desk()),
            (ModelKind::Rir, Scale::Tiny) => Self::Rir(RirEstimatorConfig::tiny()),
            (ModelKind::DryGru, Scale::Paper) => Self::DryGru(DryGruConfig::paper()),
            (ModelKind::DryGru, Scale::Desk) => Self::DryGru(DryGruConfig::desk()),
            (ModelKind::DryGru, Scale::Tiny) => Self::DryGru(DryGruConfig::tiny()),
            (ModelKind::DryUnet, Scale::Tiny) => Self::DryUnet(UnetConfig::tiny()),
            (ModelKind::DryUnet, _) => Self::DryUnet(UnetConfig::default()),
            (ModelKind::Joint, Scale::Paper) => Self::Joint(JointConfig::paper()),
            (ModelKind::Joint, Scale::Desk) => Self::Joint(JointConfig::desk()),
            (ModelKind::Joint, Scale::Tiny) => Self::Joint(JointConfig::tiny()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Rir(_) => ModelKind::Rir,
            Self::DryGru(_) => ModelKind::DryGru,
            Self::DryUnet(_) => ModelKind::DryUnet,
            Self::Joint(_) => ModelKind::Joint,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            Self::Rir(c) => c.validate(),
            Self::DryGru(c) => c.validate(),
            Self::DryUnet(c) => c.validate(),
            Self::Joint(c) => c.validate(),
        }
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        match self {
            Self::Rir(c) => c.param_specs(),
            Self::DryGru(c) => c.param_specs(""),
            Self::DryUnet(c) => c.param_specs(),
            Self::Joint(c) => c.param_specs(),
        }
    }

    pub fn init_params(&self, rng: &mut impl Rng) -> ParamStore {
        ParamStore::init(&self.param_specs(), rng)
    }

    /// Required input frame count, if the architecture fixes one.
    pub fn input_frames(&self) -> Option<usize> {
        match self {
            Self::Rir(c) => Some(c.input_frames()),
            Self::Joint(c) => Some(c.input_frames()),
            _ => None,
        }
    }

    /// Number of RIR frames emitted, for RIR-estimating models.
    pub fn rir_frames(&self) -> Option<usize> {
        match self {
            Self::Rir(c) => Some(c.output_frames()),
            Self::Joint(c) => Some(c.output_frames()),
            _ => None,
        }
    }

    /// Loss weights in effect; standalone models use only their own term.
    pub fn weights(&self) -> LossWeights {
        match self {
            Self::Rir(_) => LossWeights {
                dry: 0.0,
                rir: 1.0,
                rec: 0.0,
            },
            Self::DryGru(_) | Self::DryUnet(_) => LossWeights {
                dry: 1.0,
                rir: 0.0,
                rec: 0.0,
            },
            Self::Joint(c) => c.weights,
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &Bound, input: Var) -> Result<Outputs, ModelError> {
        Ok(match self {
            Self::Rir(c) => Outputs {
                dry: None,
                rir: Some(c.forward(tape, params, input)?),
            },
            Self::DryGru(c) => Outputs {
                dry: Some(c.forward(tape, params, "", input)?),
                rir: None,
            },
            Self::DryUnet(c) => Outputs {
                dry: Some(c.forward(tape, params, input)?),
                rir: None,
            },
            Self::Joint(c) => {
                let (dry, rir) = c.forward(tape, params, input)?;
                Outputs {
                    dry: Some(dry),
                    rir: Some(rir),
                }
            }
        })
    }

    /// Forward pass plus every loss term the model can supervise.
    pub fn loss(
        &self,
        tape: &mut Tape,
        params: &Bound,
        input: &Tensor,
        targets: &Targets,
    ) -> Result<LossTerms, ModelError> {
        let x = tape.constant(input.clone());
        let out = self.forward(tape, params, x)?;
        weighted_loss(tape, &out, targets, self.weights(), self.kind() == ModelKind::Joint)
    }

    /// Human-readable layer summary.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let stack = |s: &mut String, title: &str, layers: &[ConvLayer], cin: usize, t0: usize| {
            let _ = writeln!(s, "{title}:");
            let mut t = t0;
            let mut c = cin;
            for (i, l) in layers.iter().enumerate() {
                let t1 = t + 1 - l.kt;
                let _ = writeln!(
                    s,
                    "  conv{i}: ({}x{}, {}) in {c} ch, frames {t} -> {t1}",
                    l.kt, l.kf, l.cout
                );
                t = t1;
                c = l.cout;
            }
        };
        match self {
            Self::Rir(c) => {
                let _ = writeln!(s, "model: rir, bins {}", c.bins);
                stack(&mut s, "layers", &c.layers, 1, c.input_frames());
                let _ = writeln!(s, "activations: ELU x{} then ReLU", c.layers.len() - 1);
                let _ = writeln!(s, "output: {} x {}", c.output_frames(), c.bins);
            }
            Self::DryGru(c) => {
                let _ = writeln!(
                    s,
                    "model: dry-gru, {} Bi-GRU layers, hidden {} per direction, width {}, residual {}",
                    c.layers,
                    c.hidden,
                    c.layer_width(),
                    c.residual
                );
                let _ = writeln!(s, "features: {} -> {}", c.in_features, c.out_bins);
            }
            Self::DryUnet(c) => {
                let _ = writeln!(
                    s,
                    "model: dry-unet, depth {}, base channels {}, 4x4 stride 2",
                    c.depth, c.base_channels
                );
            }
            Self::Joint(c) => {
                let _ = writeln!(s, "model: joint, bins {}", c.bins);
                stack(&mut s, "trunk", &c.trunk, 1, c.input_frames());
                stack(&mut s, "rir head", &c.rir_head, c.trunk_channels(), c.trunk_frames());
                let _ = writeln!(
                    s,
                    "dry head: {} Bi-GRU layers, hidden {} per direction, width {}, features {} -> {}",
                    c.dry.layers,
                    c.dry.hidden,
                    c.dry.layer_width(),
                    c.dry.in_features,
                    c.dry.out_bins
                );
                let w = c.weights;
                let _ = writeln!(s, "loss weights: dry {}, rir {}, rec {}", w.dry, w.rir, w.rec);
            }
        }
        s
    }
}

/// Model outputs on a tape; absent heads are `None`.
#[derive(Debug, Clone, Copy)]
pub struct Outputs {
    pub dry: Option<Var>,
    pub rir: Option<Var>,
}

/// Supervision for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    /// `[T×F]` log-magnitude.
    pub dry_logmag: Tensor,
    /// `[R×F]` normalized magnitude.
    pub rir_mag: Tensor,
    /// `[T×F]` normalized magnitude.
    pub reverb_mag: Tensor,
}

/// Loss nodes; terms a model does not compute are `None`.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub l_dry: Option<Var>,
    pub l_rir: Option<Var>,
    pub l_rec: Option<Var>,
}

/// Scalar loss values, zero for terms that were not computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub total: f64,
    pub l_dry: f64,
    pub l_rir: f64,
    pub l_rec: f64,
}

impl LossValues {
    pub fn all_finite(&self) -> bool {
        [self.total, self.l_dry, self.l_rir, self.l_rec].iter().all(|v| v.is_finite())
    }

    pub fn add_scaled(&mut self, other: &LossValues, s: f64) {
        self.total += s * other.total;
        self.l_dry += s * other.l_dry;
        self.l_rir += s * other.l_rir;
        self.l_rec += s * other.l_rec;
    }
}

impl LossTerms {
    pub fn values(&self, tape: &Tape) -> LossValues {
        let get = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
        LossValues {
            total: tape.value(self.total).item(),
            l_dry: get(self.l_dry),
            l_rir: get(self.l_rir),
            l_rec: get(self.l_rec),
        }
    }
}

/// `total = w_dry·l_dry + w_rir·l_rir + w_rec·l_rec`, with the
/// reconstruction term feeding the de-logged dry target through the RIR
/// estimate. With `all_terms`, every term the outputs permit is computed
/// even at zero weight, so it can be logged.
pub fn weighted_loss(
    tape: &mut Tape,
    out: &Outputs,
    targets: &Targets,
    weights: LossWeights,
    all_terms: bool,
) -> Result<LossTerms, ModelError> {
    let wanted = |w: f64| all_terms || w != 0.0;
    let l_dry = match out.dry {
        Some(d) if wanted(weights.dry) => {
            let t = tape.constant(targets.dry_logmag.clone());
            Some(tape.mse(d, t)?)
        }
        _ => None,
    };
    let (l_rir, l_rec) = match out.rir {
        Some(r) => {
            let l_rir = if wanted(weights.rir) {
                let t = tape.constant(targets.rir_mag.clone());
                Some(tape.mse(r, t)?)
            } else {
                None
            };
            let l_rec = if wanted(weights.rec) {
                let dry_mag = tape.constant(targets.dry_logmag.map(f64::exp));
                let rec = tape.reconstruct_reverb(r, dry_mag)?;
                let t = tape.constant(targets.reverb_mag.clone());
                Some(tape.mse(rec, t)?)
            } else {
                None
            };
            (l_rir, l_rec)
        }
        None => (None, None),
    };
    let terms: Vec<(Var, f64)> = [(l_dry, weights.dry), (l_rir, weights.rir), (l_rec, weights.rec)]
        .into_iter()
        .filter_map(|(v, w)| v.map(|v| (v, w)))
        .collect();
    if terms.is_empty() {
        return Err(ModelError::Config("no loss term applies to this model".into()));
    }
    let total = tape.weighted_sum(&terms);
    Ok(LossTerms {
        total,
        l_dry,
        l_rir,
        l_rec,
    })
}

/// A configuration together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

/// Plain-tensor inference outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub dry_logmag: Option<Tensor>,
    pub rir_mag: Option<Tensor>,
}

impl Model {
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let params = config.init_params(rng);
        Ok(Self { config, params })
    }

    pub fn predict(&self, input: &Tensor) -> Result<Prediction, ModelError> {
        let mut tape = Tape::inference();
        let p = self.params.bind(&mut tape);
        let x = tape.constant(input.clone());
        let out = self.config.forward(&mut tape, &p, x)?;
        Ok(Prediction {
            dry_logmag: out.dry.map(|v| tape.value(v).clone()),
            rir_mag: out.rir.map(|v| tape.value(v).clone()),
        })
    }

    /// Loss values without gradients.
    pub fn evaluate_loss(&self, input: &Tensor, targets: &Targets) -> Result<LossValues, ModelError> {
        let mut tape = Tape::inference();
        let p = self.params.bind(&mut tape);
        let terms = self.config.loss(&mut tape, &p, input, targets)?;
        Ok(terms.values(&tape))
    }

    /// Loss values and gradients, in parameter-store order.
    pub fn loss_and_grads(&self, input: &Tensor, targets: &Targets) -> Result<(LossValues, Vec<Tensor>), ModelError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let terms = self.config.loss(&mut tape, &p, input, targets)?;
        let values = terms.values(&tape);
        let grads = tape.backward(terms.total)?;
        let g = p
            .vars()
            .iter()
            .zip(self.params.tensors())
            .map(|(&v, t)| grads.wrt(v, t))
            .collect();
        Ok((values, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
    }

    fn tiny_case(config: &ModelConfig, rng: &mut ChaCha8Rng) -> (Tensor, Targets) {
        random_case(config, (16, 16), rng)
    }

    #[test]
    fn tiny_models_match_finite_differences() {
        for kind in ModelKind::ALL {
            let report = check_model_gradients(&ModelConfig::preset(kind, Scale::Tiny), 11, Some(40)).unwrap();
            assert!(report.checked > 0);
            let err = report.max_rel_err;
            assert!(err < 1e-5, "{kind}: {err}");
        }
    }

    #[test]
    fn joint_rec_only_loss_leaves_dry_head_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cfg = JointConfig::tiny();
        cfg.weights = LossWeights::new(0.0, 0.0, 1.0).unwrap();
        let config = ModelConfig::Joint(cfg);
        let model = Model::new(config.clone(), &mut rng).unwrap();
        let (input, targets) = tiny_case(&config, &mut rng);
        let (_, grads) = model.loss_and_grads(&input, &targets).unwrap();
        for (name, g) in model.params.names().iter().zip(&grads) {
            if name.starts_with("dry.") {
                assert_eq!(g.max_abs(), 0.0, "{name}");
            }
        }
    }

    #[test]
    fn each_joint_term_reaches_the_trunk() {
        for w in [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)] {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let mut cfg = JointConfig::tiny();
            cfg.weights = LossWeights::new(w.0, w.1, w.2).unwrap();
            let config = ModelConfig::Joint(cfg);
            let mut model = Model::new(config.clone(), &mut rng).unwrap();
            for t in model.params.tensors_mut() {
                if t.rank() == 1 {
                    *t = Tensor::from_fn(t.shape().to_vec(), |_| rng.gen_range(0.0..0.5));
                }
            }
            let (input, targets) = tiny_case(&config, &mut rng);
            let (_, grads) = model.loss_and_grads(&input, &targets).unwrap();
            let trunk: f64 = model
                .params
                .names()
                .iter()
                .zip(&grads)
                .filter(|(n, _)| n.starts_with("trunk"))
                .map(|(_, g)| g.norm())
                .sum();
            assert!(trunk > 0.0, "weights {w:?}");
        }
    }

    fn joint_outputs(tape: &mut Tape, targets: &Targets, dry_offset: f64) -> Outputs {
        let dry = tape.constant(targets.dry_logmag.map(|v| v + dry_offset));
        let rir = tape.constant(targets.rir_mag.clone());
        Outputs {
            dry: Some(dry),
            rir: Some(rir),
        }
    }

    fn consistent_targets(rng: &mut ChaCha8Rng) -> Targets {
        let dry_logmag = random(vec![8, 5], -2.0, 0.0, rng);
        let rir_mag = random(vec![4, 5], 0.0, 1.0, rng);
        let to_nd = |t: &Tensor| {
            ndarray::Array2::from_shape_vec((t.shape()[0], t.shape()[1]), t.data().to_vec()).unwrap()
        };
        let rev = reconstruct_reverb(&to_nd(&rir_mag), &to_nd(&dry_logmag).mapv(f64::exp)).unwrap();
        Targets {
            dry_logmag,
            rir_mag,
            reverb_mag: Tensor::new(vec![8, 5], rev.into_raw_vec_and_offset().0).unwrap(),
        }
    }

    #[test]
    fn loss_term_semantics() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let targets = consistent_targets(&mut rng);

        let mut tape = Tape::inference();
        let out = joint_outputs(&mut tape, &targets, 0.0);
        let v = weighted_loss(&mut tape, &out, &targets, LossWeights::default(), true)
            .unwrap()
            .values(&tape);
        assert!(v.total.abs() < 1e-24, "{v:?}");

        let out = joint_outputs(&mut tape, &targets, 1.0);
        let v = weighted_loss(&mut tape, &out, &targets, LossWeights::default(), true)
            .unwrap()
            .values(&tape);
        assert!((v.l_dry - 1.0).abs() < 1e-12);
        assert!((v.total - 1.0).abs() < 1e-12);

        let mut w_targets = targets.clone();
        w_targets.reverb_mag = w_targets.reverb_mag.map(|v| v + 0.5);
        let out = joint_outputs(&mut tape, &w_targets, 0.3);
        let v = weighted_loss(&mut tape, &out, &w_targets, LossWeights::new(1.0, 0.0, 0.0).unwrap(), true)
            .unwrap()
            .values(&tape);
        assert_eq!(v.total, v.l_dry);
        assert!(v.l_rec > 0.0);
    }

    #[test]
    fn weights_parse_and_validate() {
        let w: LossWeights = "1,0,0.5".parse().unwrap();
        assert_eq!(w, LossWeights::new(1.0, 0.0, 0.5).unwrap());
        assert!("0,0,0".parse::<LossWeights>().is_err());
        assert!("1,-1,0".parse::<LossWeights>().is_err());
        assert!("1,2".parse::<LossWeights>().is_err());
    }

    #[test]
    fn config_serde_round_trip_and_describe() {
        for kind in ModelKind::ALL {
            for scale in [Scale::Tiny, Scale::Desk, Scale::Paper] {
                let c = ModelConfig::preset(kind, scale);
                c.validate().unwrap();
                let s = serde_json::to_string(&c).unwrap();
                assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
            }
        }
        let d = ModelConfig::preset(ModelKind::Rir, Scale::Paper).describe();
        assert!(d.contains("(187x1, 126)"));
        assert!(d.contains("frames 214 -> 187"));
    }
}
