use std::path::Path;

use rand::Rng;

use crate::corpus::{
    cache_path, load_manifest, read_example, synthesize_from_clips, CorpusError, Split, SynthConfig,
    TrainingExample,
};
use crate::models::Targets;
use crate::nn::Tensor;
use crate::rng;
use crate::synthetic::{decaying_rir, speech_like};

/// A training example converted to tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub input: Tensor,
    pub targets: Targets,
}

impl Example {
    pub fn new(id: impl Into<String>, ex: &TrainingExample) -> Self {
        Self {
            id: id.into(),
            input: ex.input_tensor(),
            targets: ex.targets(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
            Split::Discarded => &[],
        }
    }

    /// Loads the cached examples of every pair in the manifest.
    pub fn from_manifest(path: &Path) -> Result<Self, CorpusError> {
        let m = load_manifest(path)?;
        let mut d = Self::default();
        for (i, pair) in m.pairs.iter().enumerate() {
            let ex = read_example(&cache_path(path, i))?;
            let e = Example::new(format!("pair_{i:05}"), &ex);
            match pair.split {
                Split::Train => d.train.push(e),
                Split::Val => d.val.push(e),
                Split::Test => d.test.push(e),
                Split::Discarded => {}
            }
        }
        Ok(d)
    }

    /// In-memory examples synthesized at the tiny preset from generated
    /// speech and RIRs.
    pub fn synthetic_tiny(n_train: usize, n_val: usize, seed: u64) -> Self {
        let cfg = SynthConfig::tiny();
        let mut rng = rng::stream(seed, "synthetic");
        let mut make = |i: usize| {
            let dry = speech_like(0.02, 0.0, cfg.sample_rate, &mut rng);
            let t60 = rng.gen_range(0.0005..0.002);
            let rir = decaying_rir(0.002, t60, rng.gen_range(0..3), cfg.sample_rate, &mut rng);
            let ex = synthesize_from_clips(&dry, &rir, &cfg).expect("tiny synthesis");
            Example::new(format!("synthetic_{i:03}"), &ex)
        };
        let train = (0..n_train).map(&mut make).collect();
        let val = (n_train..n_train + n_val).map(&mut make).collect();
        Self {
            train,
            val,
            test: Vec::new(),
        }
    }
}
