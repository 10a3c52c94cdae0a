//! Runs a desk-scale joint model on one reverberant clip and writes the
//! reverberant, dry and estimated waveforms. The model here is untrained, so
//! the estimate is peak-normalized before writing; load a checkpoint for a
//! meaningful one.

use dereverb::corpus::SynthConfig;
use dereverb::dsp::{write_wav, AudioClip, WavFormat};
use dereverb::eval::audition_clips;
use dereverb::models::{Model, ModelConfig, ModelKind, Scale};
use dereverb::synthetic::{decaying_rir, speech_like};
use rand::SeedableRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let dry = speech_like(5.5, 0.2, 16000, &mut rng);
    let rir = decaying_rir(0.8, 0.5, 30, 16000, &mut rng);
    let model = Model::new(ModelConfig::preset(ModelKind::Joint, Scale::Desk), &mut rng)?;

    let a = audition_clips(&model, &dry, &rir, &SynthConfig::default())?;
    let dir = std::env::temp_dir().join("dereverb-audition");
    std::fs::create_dir_all(&dir)?;
    write_wav(dir.join("reverberant.wav"), &a.reverberant, WavFormat::Float32)?;
    write_wav(dir.join("dry.wav"), &a.dry, WavFormat::Float32)?;
    if let Some(est) = &a.estimate {
        println!("estimate: {} samples, peak {:.3e}", est.len(), est.peak());
        let gain = 0.9 / est.peak().max(f64::MIN_POSITIVE);
        let scaled = AudioClip::new(est.samples().iter().map(|v| v * gain).collect(), est.sample_rate())?;
        write_wav(dir.join("estimate.wav"), &scaled, WavFormat::Float32)?;
    }
    println!("wrote auditions to {}", dir.display());
    Ok(())
}
