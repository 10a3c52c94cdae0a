//! RIR corpus ingestion, group-aware splitting, dry/RIR pairing,
//! reverberant synthesis and manifest persistence.

mod cache;
mod ingest;
mod manifest;
mod pairs;
mod split;
mod synth;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::DspError;

pub use cache::{cache_path, read_example, write_example, CACHE_HEADER_LEN, CACHE_MAGIC, CACHE_VERSION};
pub use ingest::{collect_dry_files, ingest_rirs, DryFile, IngestReport, DEFAULT_GROUP_PATTERN};
pub use manifest::{load_manifest, save_manifest, MANIFEST_VERSION};
pub use pairs::make_pairs;
pub use split::{split_groups, SplitOptions};
pub(crate) use synth::aligned_signals;
pub use synth::{synthesize_example, synthesize_from_clips, NormScales, SynthConfig, TrainingExample};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no WAV files found under {0}")]
    NoFilesFound(PathBuf),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("split {0} is empty")]
    EmptySplit(Split),
    #[error("nothing left after trimming leading silence")]
    EmptyAfterTrim,
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("unknown RIR id {0}")]
    UnknownRir(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.into(),
            msg: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Discarded,
}

impl Split {
    pub const USABLE: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Discarded => "discarded",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirRecord {
    pub id: String,
    pub path: PathBuf,
    pub group_key: String,
    pub split: Split,
    pub duration_s: f64,
}

/// One dry clip convolved with one RIR.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub dry_path: PathBuf,
    pub rir_id: String,
    pub seed: u64,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub discarded: usize,
}

impl SplitCounts {
    pub fn of(records: &[RirRecord]) -> Self {
        let mut c = Self::default();
        for r in records {
            *c.get_mut(r.split) += 1;
        }
        c
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
            Split::Discarded => self.discarded,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut usize {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
            Split::Discarded => &mut self.discarded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub rirs: Vec<RirRecord>,
    pub pairs: Vec<PairRecord>,
    pub split_counts: SplitCounts,
    /// Present once examples have been synthesized and cached.
    pub synth: Option<SynthConfig>,
}

impl CorpusManifest {
    pub fn new(rirs: Vec<RirRecord>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            split_counts: SplitCounts::of(&rirs),
            rirs,
            pairs: Vec::new(),
            synth: None,
        }
    }

    pub fn rir(&self, id: &str) -> Option<&RirRecord> {
        self.rirs.iter().find(|r| r.id == id)
    }

    pub fn rirs_in(&self, split: Split) -> impl Iterator<Item = &RirRecord> {
        self.rirs.iter().filter(move |r| r.split == split)
    }

    /// Indices into `pairs` belonging to `split`.
    pub fn pair_indices(&self, split: Split) -> Vec<usize> {
        (0..self.pairs.len()).filter(|&i| self.pairs[i].split == split).collect()
    }

    /// Checks that no group straddles two retained splits and that every
    /// pair references a known RIR in its own split.
    pub fn check_consistency(&self) -> Result<(), CorpusError> {
        let mut seen = std::collections::HashMap::new();
        for r in &self.rirs {
            if r.split == Split::Discarded {
                continue;
            }
            if let Some(&s) = seen.get(&r.group_key) {
                if s != r.split {
                    return Err(CorpusError::InsufficientData(format!(
                        "group {} appears in {} and {}",
                        r.group_key, s, r.split
                    )));
                }
            }
            seen.insert(r.group_key.clone(), r.split);
        }
        for p in &self.pairs {
            let r = self.rir(&p.rir_id).ok_or_else(|| CorpusError::UnknownRir(p.rir_id.clone()))?;
            if r.split != p.split {
                return Err(CorpusError::Invalid(format!(
                    "pair with {} in {} but RIR is in {}",
                    p.rir_id, p.split, r.split
                )));
            }
        }
        Ok(())
    }
}
