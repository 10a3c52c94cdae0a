//! End-to-end gradient checks on small model instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Model, ModelConfig, ModelError, Targets};
use crate::nn::{grad_check, GradCheckReport, NnError, Tensor, DEFAULT_EPS};

fn random(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Random input and targets sized for `config`. Models without a fixed
/// frame count get `fallback` frames and bins.
pub fn random_case(config: &ModelConfig, fallback: (usize, usize), rng: &mut ChaCha8Rng) -> (Tensor, Targets) {
    let bins = match config {
        ModelConfig::Rir(c) => c.bins,
        ModelConfig::DryGru(c) => c.out_bins,
        ModelConfig::Joint(c) => c.bins,
        ModelConfig::DryUnet(_) => fallback.1,
    };
    let t = config.input_frames().unwrap_or(fallback.0);
    let r = config.rir_frames().unwrap_or(4);
    let input = random(vec![t, bins], -2.0, 0.0, rng);
    let targets = Targets {
        dry_logmag: random(vec![t, bins], -2.0, 0.0, rng),
        rir_mag: random(vec![r, bins], 0.0, 1.0, rng),
        reverb_mag: random(vec![t, bins], 0.0, 1.0, rng),
    };
    (input, targets)
}

/// Checks the full training loss of a freshly initialized model against
/// central differences. Biases are randomized so that every activation is
/// exercised on both sides of zero; at most `max_per_param` elements are
/// probed per tensor.
pub fn check_model_gradients(
    config: &ModelConfig,
    seed: u64,
    max_per_param: Option<usize>,
) -> Result<GradCheckReport, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Model::new(config.clone(), &mut rng)?;
    let tensors: Vec<Tensor> = model
        .params
        .iter()
        .map(|(n, t)| {
            if n.ends_with("bias") || n.ends_with(".b") {
                random(t.shape().to_vec(), -0.3, 0.3, &mut rng)
            } else {
                t.clone()
            }
        })
        .collect();
    let fallback = match config {
        ModelConfig::DryUnet(_) => (16, 16),
        _ => (6, 5),
    };
    let (input, targets) = random_case(config, fallback, &mut rng);
    let store = &model.params;
    let report = grad_check(&tensors, DEFAULT_EPS, max_per_param, |tape, vars| {
        let p = store.wrap(vars);
        config
            .loss(tape, &p, &input, &targets)
            .map(|t| t.total)
            .map_err(|e| NnError::ShapeMismatch(e.to_string()))
    })?;
    Ok(report)
}
