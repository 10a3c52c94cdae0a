//! Short-time Fourier analysis and overlap-add resynthesis of a 5 s clip.

use dereverb::dsp::{istft, magnitude, stft};
use dereverb::synthetic::speech_like;
use rand::SeedableRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let clip = speech_like(5.0, 0.1, 16000, &mut rng);
    let spec = stft(&clip, 512, 256)?;
    println!("{} samples -> {} frames x {} bins", clip.len(), spec.frames(), spec.bins());

    let mag = magnitude(&spec);
    let energy: f64 = mag.mag.iter().map(|m| m * m).sum();
    println!("spectral energy {energy:.3}");

    let back = istft(&spec, Some(clip.len()))?;
    let err = back
        .samples()
        .iter()
        .zip(clip.samples())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("max reconstruction error {err:.2e}");
    Ok(())
}
