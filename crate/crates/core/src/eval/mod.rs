//! Spectral and decay metrics, audio reconstruction and evaluation reports.

mod metrics;

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

use crate::corpus::{load_manifest, CorpusError, PairRecord, Split, SynthConfig};
use crate::dsp::{
    log_magnitude, magnitude, normalize_spectrogram, read_wav, stft, AudioClip, DspError, LOG_FLOOR,
};
use crate::models::{reconstruct_reverb, Model, ModelError, ModelKind, Prediction};
use crate::nn::Tensor;
use crate::trainer::{Checkpoint, Dataset, Example, TrainError};

pub use metrics::{
    energy_decay_curve, log_spectral_distance, mse, reconstruct_audio, t60_estimate, DEFAULT_HOP_S,
    EDC_FLOOR_DB, T60_FIT_RANGE,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("RIR has zero energy")]
    ZeroEnergy,
    #[error("decay curve never falls below -25 dB")]
    InsufficientDecay,
    #[error("split {0} has no examples")]
    EmptySplit(Split),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub example_id: String,
    pub kind: ModelKind,
    pub metric: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub metric: &'static str,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
}

impl MetricsReport {
    /// Mean and population standard deviation per metric, in order of first
    /// appearance.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut names: Vec<&'static str> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.metric) {
                names.push(r.metric);
            }
        }
        names
            .into_iter()
            .map(|metric| {
                let vals: Vec<f64> = self.rows.iter().filter(|r| r.metric == metric).map(|r| r.value).collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                Aggregate {
                    metric,
                    mean,
                    std: var.sqrt(),
                    count: vals.len(),
                }
            })
            .collect()
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.aggregates().into_iter().find(|a| a.metric == metric).map(|a| a.mean)
    }

    /// `example_id,metric,value` rows, a blank line, then
    /// `metric,mean,std,count` aggregates.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("example_id,metric,value\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{:e}\n", r.example_id, r.metric, r.value));
        }
        s.push_str("\nmetric,mean,std,count\n");
        for a in self.aggregates() {
            s.push_str(&format!("{},{:e},{:e},{}\n", a.metric, a.mean, a.std, a.count));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let io = |e: std::io::Error| EvalError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(self.to_csv().as_bytes()).map_err(io)
    }
}

fn to_array(t: &Tensor) -> Array2<f64> {
    let s = t.shape();
    Array2::from_shape_vec((s[0], s[1]), t.data().to_vec()).expect("rank-2 tensor")
}

fn edc_db(mag: &Array2<f64>) -> Vec<f64> {
    energy_decay_curve(mag).unwrap_or_else(|_| vec![EDC_FLOOR_DB; mag.nrows()])
}

/// Metrics for one example. Dry estimates get `lsd` and `dry_mse`; RIR
/// estimates get `rir_mse`, `edc_mse` and, when both curves reach -25 dB,
/// `t60_abs_err`; joint models also get `l_rec`.
pub fn example_metrics(kind: ModelKind, ex: &Example, pred: &Prediction) -> Result<Vec<(&'static str, f64)>, EvalError> {
    let mut out = Vec::new();
    let dry_ref = to_array(&ex.targets.dry_logmag);
    let rir_ref = to_array(&ex.targets.rir_mag);
    if kind.estimates_dry() {
        let est = to_array(pred.dry_logmag.as_ref().ok_or_else(|| EvalError::InvalidInput("missing dry estimate".into()))?);
        out.push(("lsd", log_spectral_distance(&est, &dry_ref)?));
        out.push(("dry_mse", mse(&est, &dry_ref)?));
    }
    if kind.estimates_rir() {
        let est = to_array(pred.rir_mag.as_ref().ok_or_else(|| EvalError::InvalidInput("missing RIR estimate".into()))?);
        out.push(("rir_mse", mse(&est, &rir_ref)?));
        let (ce, cr) = (edc_db(&est), edc_db(&rir_ref));
        let edc = ce.iter().zip(&cr).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / ce.len().max(1) as f64;
        out.push(("edc_mse", edc));
        if let (Ok(te), Ok(tr)) = (t60_estimate(&ce, DEFAULT_HOP_S), t60_estimate(&cr, DEFAULT_HOP_S)) {
            out.push(("t60_abs_err", (te - tr).abs()));
        }
        if kind == ModelKind::Joint {
            let rec = reconstruct_reverb(&est, &dry_ref.mapv(f64::exp)).map_err(ModelError::from)?;
            out.push(("l_rec", mse(&rec, &to_array(&ex.targets.reverb_mag))?));
        }
    }
    Ok(out)
}

/// Runs `predict` on every example and collects per-example metrics.
pub fn evaluate_with<F>(kind: ModelKind, examples: &[Example], split: Split, predict: F) -> Result<MetricsReport, EvalError>
where
    F: Fn(&Example) -> Result<Prediction, EvalError>,
{
    if examples.is_empty() {
        return Err(EvalError::EmptySplit(split));
    }
    let mut report = MetricsReport::default();
    for ex in examples {
        let pred = predict(ex)?;
        for (metric, value) in example_metrics(kind, ex, &pred)? {
            if !value.is_finite() {
                return Err(EvalError::InvalidInput(format!("{metric} for {} is {value}", ex.id)));
            }
            report.rows.push(MetricRow {
                example_id: ex.id.clone(),
                kind,
                metric,
                value,
            });
        }
    }
    Ok(report)
}

/// Evaluates a checkpoint on one split of a synthesized manifest.
pub fn evaluate(ckpt: &Checkpoint, manifest_path: &Path, split: Split) -> Result<MetricsReport, EvalError> {
    let data = Dataset::from_manifest(manifest_path)?;
    let model = Model {
        config: ckpt.model.clone(),
        params: ckpt.params.clone(),
    };
    evaluate_with(model.config.kind(), data.split(split), split, |ex| Ok(model.predict(&ex.input)?))
}

/// Waveforms for listening to one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Audition {
    pub reverberant: AudioClip,
    pub dry: AudioClip,
    /// Dry estimate with the reverberant phase, at the reverberant level.
    pub estimate: Option<AudioClip>,
}

/// Re-synthesizes `pair`, runs the model and rebuilds the dry estimate.
pub fn audition(model: &Model, pair: &PairRecord, manifest_path: &Path, cfg: &SynthConfig) -> Result<Audition, EvalError> {
    let manifest = load_manifest(manifest_path)?;
    let rir = manifest
        .rir(&pair.rir_id)
        .ok_or_else(|| CorpusError::UnknownRir(pair.rir_id.clone()))?;
    let dry = read_wav(&pair.dry_path)?;
    let rir = read_wav(&rir.path)?;
    audition_clips(model, &dry, &rir, cfg)
}

/// [`audition`] on in-memory clips.
pub fn audition_clips(model: &Model, dry: &AudioClip, rir: &AudioClip, cfg: &SynthConfig) -> Result<Audition, EvalError> {
    cfg.validate()?;
    let (dry, reverberant, _) = crate::corpus::aligned_signals(dry, rir, cfg)?;
    let spec = stft(&reverberant, cfg.frame_len, cfg.hop)?;
    let norm = normalize_spectrogram(&magnitude(&spec));
    let input = log_magnitude(&norm.mag, LOG_FLOOR);
    let (t, f) = input.dim();
    let x = Tensor::new(vec![t, f], input.iter().copied().collect()).map_err(ModelError::from)?;
    let pred = model.predict(&x)?;
    let estimate = match pred.dry_logmag {
        Some(est) => Some(reconstruct_audio(&to_array(&est), &spec, norm.scale, Some(reverberant.len()))?),
        None => None,
    };
    Ok(Audition {
        reverberant,
        dry,
        estimate,
    })
}
