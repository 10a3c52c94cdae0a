//! Convolves a synthetic dry utterance with a synthetic room response, builds
//! one training example from the pair and writes both waveforms as WAV.

use dereverb::corpus::{synthesize_from_clips, SynthConfig};
use dereverb::dsp::{convolve_fft, write_wav, AudioClip, WavFormat};
use dereverb::synthetic::{decaying_rir, speech_like};
use rand::SeedableRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let dry = speech_like(5.5, 0.2, 16000, &mut rng);
    let rir = decaying_rir(0.8, 0.6, 40, 16000, &mut rng);

    let cfg = SynthConfig::default();
    let ex = synthesize_from_clips(&dry, &rir, &cfg)?;
    println!("input log-magnitude      {:?}", ex.input_logmag.dim());
    println!("dry target log-magnitude {:?}", ex.dry_target_logmag.dim());
    println!("RIR target magnitude     {:?}", ex.rir_target_mag.dim());
    println!("normalization scales     {:?}", ex.scales);

    let wet = convolve_fft(dry.samples(), rir.samples());
    let peak = wet.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let wet = AudioClip::new(wet.iter().map(|v| 0.9 * v / peak).collect(), 16000)?;
    let dir = std::env::temp_dir().join("dereverb-synthesize");
    std::fs::create_dir_all(&dir)?;
    write_wav(dir.join("dry.wav"), &dry, WavFormat::Pcm16)?;
    write_wav(dir.join("reverberant.wav"), &wet, WavFormat::Pcm16)?;
    println!("wrote dry.wav and reverberant.wav to {}", dir.display());
    Ok(())
}
