//! Band-limited sample-rate conversion with a Kaiser-windowed sinc
//! polyphase filter bank.

use super::{AudioClip, DspError};

pub const KAISER_BETA: f64 = 8.6;
pub const TAPS_PER_PHASE: usize = 32;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.92;

/// Resamples `clip` to `target_rate`. Output length is
/// `round(len * target / source)`.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, DspError> {
    if target_rate == 0 {
        return Err(DspError::InvalidRate(target_rate));
    }
    let source_rate = clip.sample_rate();
    if source_rate == target_rate {
        return Ok(clip.clone());
    }
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = source_rate as u64 / g;
    let bank = FilterBank::new(up as usize, down as usize);

    let input = clip.samples();
    let out_len = ((input.len() as u128 * target_rate as u128 + source_rate as u128 / 2)
        / source_rate as u128) as usize;
    let half = (TAPS_PER_PHASE / 2) as i64;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let pos = n * down;
        let base = (pos / up) as i64;
        let phase = (pos % up) as usize;
        let taps = bank.phase(phase);
        let mut acc = 0.0;
        for (j, &h) in taps.iter().enumerate() {
            let idx = base + j as i64 - half + 1;
            if idx >= 0 && (idx as usize) < input.len() {
                acc += h * input[idx as usize];
            }
        }
        out.push(acc);
    }
    AudioClip::new(out, target_rate)
}

struct FilterBank {
    taps: Vec<f64>,
}

impl FilterBank {
    fn new(up: usize, down: usize) -> Self {
        let cutoff = ROLLOFF * (up as f64 / down as f64).min(1.0);
        let half = (TAPS_PER_PHASE / 2) as f64;
        let norm = bessel_i0(KAISER_BETA);
        let mut taps = Vec::with_capacity(up * TAPS_PER_PHASE);
        for phase in 0..up {
            let frac = phase as f64 / up as f64;
            let start = taps.len();
            for j in 0..TAPS_PER_PHASE {
                // distance from the output instant to input sample `base + j - half + 1`
                let d = j as f64 - half + 1.0 - frac;
                let u = d / half;
                let w = if u.abs() <= 1.0 {
                    bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / norm
                } else {
                    0.0
                };
                taps.push(cutoff * sinc(cutoff * d) * w);
            }
            // unit DC gain per phase
            let sum: f64 = taps[start..].iter().sum();
            for t in &mut taps[start..] {
                *t /= sum;
            }
        }
        Self { taps }
    }

    fn phase(&self, p: usize) -> &[f64] {
        &self.taps[p * TAPS_PER_PHASE..(p + 1) * TAPS_PER_PHASE]
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
