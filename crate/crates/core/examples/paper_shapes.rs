//! Builds the full-size RIR estimator, runs one forward pass on a 5 s clip
//! and prints the shape of every layer with its time.

use std::time::Instant;

use dereverb::dsp::{log_magnitude, magnitude, stft};
use dereverb::models::RirEstimatorConfig;
use dereverb::nn::{Padding, ParamStore, Tape, Tensor};
use dereverb::synthetic::speech_like;
use rand::SeedableRng;

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let clip = speech_like(5.0, 0.1, 16000, &mut rng);
    let spec = stft(&clip, 512, 256).expect("stft");
    let logmag = log_magnitude(&magnitude(&spec).mag, 1e-5);
    let (t, f) = logmag.dim();
    println!("5 s at 16 kHz -> log-STFT {t}x{f}");

    let config = RirEstimatorConfig::paper();
    let store = ParamStore::init(&config.param_specs(), &mut rng);
    let mut tape = Tape::inference();
    let p = store.bind(&mut tape);
    let input = Tensor::new(vec![t, f], logmag.iter().copied().collect()).expect("shape");
    let x0 = tape.constant(input.clone());

    let total = Instant::now();
    let mut x = tape.reshape(x0, vec![t, f, 1]).expect("reshape");
    for (i, layer) in config.layers.iter().enumerate() {
        let start = Instant::now();
        let w = p.var(&format!("conv{i}.weight"));
        let b = p.var(&format!("conv{i}.bias"));
        x = tape.conv2d(x, w, Some(b), (1, 1), Padding::Valid).expect("conv");
        x = tape.elu(x);
        println!(
            "conv{i} kT {:>3} -> {:?} ({:.0} ms)",
            layer.kt,
            tape.shape(x),
            start.elapsed().as_secs_f64() * 1e3
        );
    }
    println!("layers alone: {:.0} ms", total.elapsed().as_secs_f64() * 1e3);

    let mut tape = Tape::inference();
    let p = store.bind(&mut tape);
    let x = tape.constant(input);
    let start = Instant::now();
    let y = config.forward(&mut tape, &p, x).expect("forward");
    println!(
        "full forward: {:?} in {:.0} ms",
        tape.shape(y),
        start.elapsed().as_secs_f64() * 1e3
    );
}
