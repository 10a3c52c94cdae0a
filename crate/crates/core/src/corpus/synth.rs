use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::{CorpusError, CorpusManifest, PairRecord};
use crate::dsp::{
    convolve_fft, delay, detect_direct_path_delay, fix_length, log_magnitude, magnitude,
    normalize_spectrogram, pad_to_min_length, read_wav, resample, stft, trim_leading_silence,
    AudioClip, LOG_FLOOR, SILENCE_THRESHOLD_DB,
};
use crate::models::Targets;
use crate::nn::Tensor;

/// Signal and framing parameters for example synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    /// Length of the dry and reverberant clips after alignment.
    pub clip_samples: usize,
    /// RIRs are zero-padded to at least this many samples.
    pub rir_min_samples: usize,
    /// Frames kept for the RIR target.
    pub rir_frames: usize,
    pub silence_db: f64,
}

impl Default for SynthConfig {
    /// 16 kHz, 32 ms frames with 16 ms hop, 5 s clips, RIRs padded to 2 s.
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            frame_len: 512,
            hop: 256,
            clip_samples: 80000,
            rir_min_samples: 32000,
            rir_frames: 126,
            silence_db: SILENCE_THRESHOLD_DB,
        }
    }
}

impl SynthConfig {
    /// 8-frame × 5-bin examples with 4-frame RIR targets, matching the
    /// tiny model presets.
    pub fn tiny() -> Self {
        Self {
            sample_rate: 16000,
            frame_len: 8,
            hop: 4,
            clip_samples: 28,
            rir_min_samples: 12,
            rir_frames: 4,
            silence_db: SILENCE_THRESHOLD_DB,
        }
    }

    pub fn frames(&self) -> usize {
        crate::dsp::frame_count(self.clip_samples, self.hop)
    }

    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let rir_available = crate::dsp::frame_count(self.rir_min_samples, self.hop);
        if self.sample_rate == 0
            || self.hop == 0
            || self.frame_len < 2
            || self.hop > self.frame_len / 2
            || self.clip_samples == 0
            || self.rir_frames == 0
            || self.rir_frames > rir_available
        {
            return Err(CorpusError::Invalid(format!("inconsistent synthesis config {self:?}")));
        }
        Ok(())
    }
}

/// Normalization maxima divided out of each spectrogram.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormScales {
    pub input: f64,
    pub dry: f64,
    pub rir: f64,
    pub reverb: f64,
}

/// Model input plus the three supervision targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    /// Log of the max-normalized reverberant magnitude, `[T×F]`.
    pub input_logmag: Array2<f64>,
    /// Log of the max-normalized aligned dry magnitude, `[T×F]`.
    pub dry_target_logmag: Array2<f64>,
    /// Leading frames of the max-normalized RIR magnitude, `[R×F]`.
    pub rir_target_mag: Array2<f64>,
    /// Max-normalized reverberant magnitude, `[T×F]`.
    pub reverb_target_mag: Array2<f64>,
    pub scales: NormScales,
}

fn to_tensor(a: &Array2<f64>) -> Tensor {
    let (r, c) = a.dim();
    Tensor::new(vec![r, c], a.iter().copied().collect()).expect("non-empty example arrays")
}

impl TrainingExample {
    pub fn input_tensor(&self) -> Tensor {
        to_tensor(&self.input_logmag)
    }

    pub fn targets(&self) -> Targets {
        Targets {
            dry_logmag: to_tensor(&self.dry_target_logmag),
            rir_mag: to_tensor(&self.rir_target_mag),
            reverb_mag: to_tensor(&self.reverb_target_mag),
        }
    }

    pub fn all_finite(&self) -> bool {
        [
            &self.input_logmag,
            &self.dry_target_logmag,
            &self.rir_target_mag,
            &self.reverb_target_mag,
        ]
        .iter()
        .all(|a| a.iter().all(|v| v.is_finite()))
    }
}

/// Aligned, length-fixed dry and reverberant waveforms for `dry` ⊛ `rir`,
/// and the padded RIR, all at the configured rate.
pub(crate) fn aligned_signals(
    dry: &AudioClip,
    rir: &AudioClip,
    cfg: &SynthConfig,
) -> Result<(AudioClip, AudioClip, AudioClip), CorpusError> {
    let dry = resample(dry, cfg.sample_rate)?;
    let rir = resample(rir, cfg.sample_rate)?;
    let d = detect_direct_path_delay(&rir)?;
    let reverb = AudioClip::new(convolve_fft(dry.samples(), rir.samples()), cfg.sample_rate)?;
    let dry_aligned = delay(&dry, d);
    let (dry_trim, offset) = trim_leading_silence(&dry_aligned, cfg.silence_db);
    if dry_trim.is_empty() {
        return Err(CorpusError::EmptyAfterTrim);
    }
    let reverb_trim = AudioClip::new(reverb.samples()[offset.min(reverb.len())..].to_vec(), cfg.sample_rate)?;
    Ok((
        fix_length(&dry_trim, cfg.clip_samples),
        fix_length(&reverb_trim, cfg.clip_samples),
        pad_to_min_length(&rir, cfg.rir_min_samples),
    ))
}

/// Builds one example from in-memory clips: resample, convolve, align the
/// dry clip by the direct-path delay, trim the shared leading silence, fix
/// lengths, then take max-normalized magnitude STFTs.
pub fn synthesize_from_clips(
    dry: &AudioClip,
    rir: &AudioClip,
    cfg: &SynthConfig,
) -> Result<TrainingExample, CorpusError> {
    cfg.validate()?;
    let (dry, reverb, rir) = aligned_signals(dry, rir, cfg)?;
    let spec = |c: &AudioClip| -> Result<_, CorpusError> {
        Ok(normalize_spectrogram(&magnitude(&stft(c, cfg.frame_len, cfg.hop)?)))
    };
    let dry_mag = spec(&dry)?;
    let reverb_mag = spec(&reverb)?;
    let rir_mag = spec(&rir)?;
    Ok(TrainingExample {
        input_logmag: log_magnitude(&reverb_mag.mag, LOG_FLOOR),
        dry_target_logmag: log_magnitude(&dry_mag.mag, LOG_FLOOR),
        rir_target_mag: rir_mag.mag.slice(s![..cfg.rir_frames, ..]).to_owned(),
        reverb_target_mag: reverb_mag.mag,
        scales: NormScales {
            input: reverb_mag.scale,
            dry: dry_mag.scale,
            rir: rir_mag.scale,
            reverb: reverb_mag.scale,
        },
    })
}

/// Reads the pair's files and synthesizes the example.
pub fn synthesize_example(
    pair: &PairRecord,
    manifest: &CorpusManifest,
    cfg: &SynthConfig,
) -> Result<TrainingExample, CorpusError> {
    let rir = manifest
        .rir(&pair.rir_id)
        .ok_or_else(|| CorpusError::UnknownRir(pair.rir_id.clone()))?;
    let dry = read_wav(&pair.dry_path)?;
    let rir_clip = read_wav(&rir.path)?;
    synthesize_from_clips(&dry, &rir_clip, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::frame_count;
    use crate::synthetic::{decaying_rir, speech_like};
    use rand::SeedableRng;

    fn delta(at: usize, len: usize) -> AudioClip {
        let mut s = vec![0.0; len];
        s[at] = 1.0;
        AudioClip::new(s, 16000).unwrap()
    }

    fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn dry_clip(seed: u64) -> AudioClip {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        speech_like(5.5, 0.2, 16000, &mut rng)
    }

    #[test]
    fn shapes_follow_frame_arithmetic() {
        let cfg = SynthConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let rir = decaying_rir(0.6, 0.4, 40, 16000, &mut rng);
        let ex = synthesize_from_clips(&dry_clip(1), &rir, &cfg).unwrap();
        let t = frame_count(80000, 256);
        assert_eq!(t, 313);
        assert_eq!(ex.input_logmag.dim(), (t, 257));
        assert_eq!(ex.dry_target_logmag.dim(), (t, 257));
        assert_eq!(ex.rir_target_mag.dim(), (126, 257));
        assert_eq!(ex.reverb_target_mag.dim(), (t, 257));
        assert!(ex.all_finite());
        let max = ex.reverb_target_mag.iter().fold(0.0f64, |m, &v| m.max(v));
        assert_eq!(max, 1.0);
    }

    #[test]
    fn delta_rir_makes_input_equal_dry_target() {
        let cfg = SynthConfig::default();
        let ex = synthesize_from_clips(&dry_clip(2), &delta(0, 100), &cfg).unwrap();
        assert!(max_diff(&ex.input_logmag, &ex.dry_target_logmag) < 1e-6);
        let dry_mag = ex.dry_target_logmag.mapv(f64::exp);
        let floor_mask = ex.reverb_target_mag.mapv(|v| v.max(LOG_FLOOR));
        assert!(max_diff(&floor_mask, &dry_mag) < 1e-6);
    }

    #[test]
    fn delayed_delta_matches_undelayed_after_alignment() {
        let cfg = SynthConfig::default();
        let dry = dry_clip(3);
        let a = synthesize_from_clips(&dry, &delta(0, 1000), &cfg).unwrap();
        let b = synthesize_from_clips(&dry, &delta(480, 1000), &cfg).unwrap();
        assert!(max_diff(&a.input_logmag, &b.input_logmag) < 1e-6);
        assert!(max_diff(&a.dry_target_logmag, &b.dry_target_logmag) < 1e-6);
        assert!(max_diff(&a.reverb_target_mag, &b.reverb_target_mag) < 1e-6);
    }

    #[test]
    fn deterministic_and_error_paths() {
        let cfg = SynthConfig::tiny();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let dry = speech_like(0.01, 0.0, 16000, &mut rng);
        let rir = decaying_rir(0.002, 0.001, 2, 16000, &mut rng);
        let a = synthesize_from_clips(&dry, &rir, &cfg).unwrap();
        assert_eq!(a, synthesize_from_clips(&dry, &rir, &cfg).unwrap());
        assert_eq!(a.input_logmag.dim(), (8, 5));
        assert_eq!(a.rir_target_mag.dim(), (4, 5));

        let zero = AudioClip::new(vec![0.0; 10], 16000).unwrap();
        assert!(matches!(
            synthesize_from_clips(&dry, &zero, &cfg),
            Err(CorpusError::Dsp(crate::dsp::DspError::AllZeroRir))
        ));
        assert!(matches!(
            synthesize_from_clips(&zero, &rir, &cfg),
            Err(CorpusError::EmptyAfterTrim)
        ));
    }
}
