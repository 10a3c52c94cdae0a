//! Energy decay curves and reverberation time estimates of synthetic rooms.

use dereverb::dsp::{magnitude, stft};
use dereverb::eval::{energy_decay_curve, t60_estimate, DEFAULT_HOP_S};
use dereverb::synthetic::decaying_rir;
use ndarray::s;
use rand::SeedableRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for t60 in [0.3, 0.6, 1.0] {
        let rir = decaying_rir(2.0, t60, 0, 16000, &mut rng);
        let mag = magnitude(&stft(&rir, 512, 256)?).mag;
        let head = mag.slice(s![..126, ..]).to_owned();
        let edc = energy_decay_curve(&head)?;
        let est = t60_estimate(&edc, DEFAULT_HOP_S)?;
        println!(
            "true T60 {t60:.1} s, estimate {est:.2} s, EDC at 0.5 s {:.1} dB",
            edc[(0.5 / DEFAULT_HOP_S) as usize]
        );
    }
    Ok(())
}
