//! Deterministic stand-ins for recorded material: voiced, syllabic
//! speech-like signals and exponentially decaying noise RIRs, plus helpers
//! that write small WAV corpora for demos and tests.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::Split;
use crate::dsp::{write_wav, AudioClip, DspError, WavFormat};

/// Harmonic tone bursts with a gliding pitch, syllable-shaped envelopes and
/// pauses, preceded by `lead_s` seconds of silence.
pub fn speech_like(duration_s: f64, lead_s: f64, sample_rate: u32, rng: &mut impl Rng) -> AudioClip {
    let sr = sample_rate as f64;
    let n = (duration_s * sr).round() as usize;
    let lead = ((lead_s * sr).round() as usize).min(n);
    let mut out = vec![0.0; n];
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut pos = lead;
    while pos < n {
        let syllable = ((rng.gen_range(0.08..0.25)) * sr) as usize;
        let end = (pos + syllable).min(n);
        let f0_start = rng.gen_range(90.0..220.0);
        let f0_end = f0_start * rng.gen_range(0.8..1.25);
        let harmonics = rng.gen_range(4..10);
        let amp = rng.gen_range(0.2..0.6);
        let mut phase = 0.0f64;
        let len = (end - pos).max(1) as f64;
        for (i, o) in out[pos..end].iter_mut().enumerate() {
            let u = i as f64 / len;
            let f0 = f0_start + (f0_end - f0_start) * u;
            phase += 2.0 * std::f64::consts::PI * f0 / sr;
            let env = (std::f64::consts::PI * u).sin().powi(2);
            let voiced: f64 = (1..=harmonics)
                .map(|h| (h as f64 * phase).sin() / h as f64)
                .sum();
            *o = amp * env * voiced / 2.0 + env * noise.sample(rng);
        }
        pos = end + (rng.gen_range(0.02..0.15) * sr) as usize;
    }
    AudioClip::new(out, sample_rate).expect("finite by construction")
}

/// Gaussian noise under an exponential envelope reaching -60 dB after
/// `t60_s`, with a unit direct path at `delay` samples.
pub fn decaying_rir(length_s: f64, t60_s: f64, delay: usize, sample_rate: u32, rng: &mut impl Rng) -> AudioClip {
    let sr = sample_rate as f64;
    let n = ((length_s * sr).round() as usize).max(delay + 1);
    let normal = Normal::new(0.0, 1.0).unwrap();
    // amplitude decays 60 dB (factor 1000) over t60
    let rate = 3.0 * std::f64::consts::LN_10 / (t60_s * sr);
    let mut out = vec![0.0; n];
    out[delay] = 1.0;
    for (i, o) in out.iter_mut().enumerate().skip(delay + 1) {
        let t = (i - delay) as f64;
        *o = 0.3 * (-rate * t).exp() * normal.sample(rng);
    }
    AudioClip::new(out, sample_rate).expect("finite by construction")
}

/// Writes one RIR per `(group, count)` member as `{group}_mic{i}.wav`.
/// Returns the written paths.
pub fn write_rir_corpus(
    dir: &Path,
    groups: &[(String, usize)],
    sample_rate: u32,
    rng: &mut impl Rng,
) -> Result<Vec<PathBuf>, DspError> {
    std::fs::create_dir_all(dir).map_err(|e| DspError::Io(format!("{}: {e}", dir.display())))?;
    let mut paths = Vec::new();
    for (group, count) in groups {
        let t60 = rng.gen_range(0.2..0.9);
        for i in 0..*count {
            let delay = rng.gen_range(0..200);
            let len = rng.gen_range(0.4..1.2);
            let rir = decaying_rir(len, t60 * rng.gen_range(0.9..1.1), delay, sample_rate, rng);
            let path = dir.join(format!("{group}_mic{i}.wav"));
            write_wav(&path, &rir, WavFormat::Float32)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

/// Writes `count` speech-like clips named `dry{i:03}.wav`.
pub fn write_dry_corpus(
    dir: &Path,
    count: usize,
    duration_s: f64,
    sample_rate: u32,
    rng: &mut impl Rng,
) -> Result<Vec<PathBuf>, DspError> {
    std::fs::create_dir_all(dir).map_err(|e| DspError::Io(format!("{}: {e}", dir.display())))?;
    (0..count)
        .map(|i| {
            let lead = rng.gen_range(0.0..0.3);
            let clip = speech_like(duration_s, lead, sample_rate, rng);
            let path = dir.join(format!("dry{i:03}.wav"));
            write_wav(&path, &clip, WavFormat::Float32)?;
            Ok(path)
        })
        .collect()
}

/// Writes dry clips into `train/`, `val/` and `test/` subdirectories of
/// `dir`, `counts[i]` clips for the i-th split.
pub fn write_split_dry_corpus(
    dir: &Path,
    counts: [usize; 3],
    duration_s: f64,
    sample_rate: u32,
    rng: &mut impl Rng,
) -> Result<(), DspError> {
    for (split, n) in Split::USABLE.iter().zip(counts) {
        write_dry_corpus(&dir.join(split.name()), n, duration_s, sample_rate, rng)?;
    }
    Ok(())
}
