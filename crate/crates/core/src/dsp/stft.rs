//! Center-padded STFT analysis and weighted overlap-add synthesis.

use ndarray::Array2;
use realfft::num_complex::Complex;
use realfft::RealFftPlanner;

use super::{AudioClip, DspError};

pub const DEFAULT_FRAME_LEN: usize = 512;
pub const DEFAULT_HOP: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    /// `[frames × bins]`
    pub re: Array2<f64>,
    pub im: Array2<f64>,
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn frames(&self) -> usize {
        self.re.nrows()
    }

    pub fn bins(&self) -> usize {
        self.re.ncols()
    }
}

/// Non-negative magnitude spectrogram with the normalization scale that was
/// divided out (0 when unnormalized).
#[derive(Debug, Clone, PartialEq)]
pub struct MagSpectrogram {
    pub mag: Array2<f64>,
    pub scale: f64,
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// Index into a signal of length `len` under repeated mirror reflection
/// (edge samples not duplicated).
fn reflect_index(i: i64, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as i64 - 1);
    let m = i.rem_euclid(period);
    if m < len as i64 {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Number of frames produced by [`stft`] for a signal of `len` samples.
pub fn frame_count(len: usize, hop: usize) -> usize {
    1 + len / hop
}

/// STFT with a periodic Hann window. The signal is reflect-padded by
/// `frame_len / 2` on both sides, giving `1 + len / hop` frames and
/// `frame_len / 2 + 1` bins.
pub fn stft(clip: &AudioClip, frame_len: usize, hop: usize) -> Result<ComplexSpectrogram, DspError> {
    if frame_len < 2 || frame_len % 2 != 0 || hop == 0 {
        return Err(DspError::InvalidFraming { frame_len, hop });
    }
    let x = clip.samples();
    if x.is_empty() {
        return Err(DspError::EmptyAudio("stft input".into()));
    }
    let frames = frame_count(x.len(), hop);
    let bins = frame_len / 2 + 1;
    let pad = (frame_len / 2) as i64;
    let window = hann(frame_len);
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(frame_len);
    let mut buf = fft.make_input_vec();
    let mut spec = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();
    let mut re = Array2::zeros((frames, bins));
    let mut im = Array2::zeros((frames, bins));
    for m in 0..frames {
        let start = (m * hop) as i64 - pad;
        for (n, b) in buf.iter_mut().enumerate() {
            *b = x[reflect_index(start + n as i64, x.len())] * window[n];
        }
        fft.process_with_scratch(&mut buf, &mut spec, &mut scratch)
            .expect("fft length");
        for (k, c) in spec.iter().enumerate() {
            re[[m, k]] = c.re;
            im[[m, k]] = c.im;
        }
    }
    Ok(ComplexSpectrogram {
        re,
        im,
        frame_len,
        hop,
        sample_rate: clip.sample_rate(),
    })
}

/// Inverse of [`stft`] by weighted overlap-add. The output has
/// `(frames - 1) * hop` samples unless `length` asks for a different count.
pub fn istft(spec: &ComplexSpectrogram, length: Option<usize>) -> Result<AudioClip, DspError> {
    let frame_len = spec.frame_len;
    let hop = spec.hop;
    let frames = spec.frames();
    if spec.bins() != frame_len / 2 + 1 || spec.im.dim() != spec.re.dim() {
        return Err(DspError::ShapeMismatch(format!(
            "spectrogram {:?} for frame length {frame_len}",
            spec.re.dim()
        )));
    }
    if hop == 0 || hop > frame_len / 2 {
        return Err(DspError::NonColaParams { frame_len, hop });
    }
    let pad = frame_len / 2;
    let max_len = (frames - 1) * hop + pad;
    let out_len = length.unwrap_or((frames - 1) * hop);
    if out_len > max_len {
        return Err(DspError::ShapeMismatch(format!(
            "requested {out_len} samples, {frames} frames cover {max_len}"
        )));
    }

    let window = hann(frame_len);
    let ifft = RealFftPlanner::<f64>::new().plan_fft_inverse(frame_len);
    let mut spectrum = ifft.make_input_vec();
    let mut frame = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();
    let padded_len = (frames - 1) * hop + frame_len;
    let mut acc = vec![0.0; padded_len];
    let mut wsum = vec![0.0; padded_len];
    let inv_n = 1.0 / frame_len as f64;
    for m in 0..frames {
        for (k, c) in spectrum.iter_mut().enumerate() {
            *c = Complex::new(spec.re[[m, k]], spec.im[[m, k]]);
        }
        spectrum[0].im = 0.0;
        spectrum[frame_len / 2].im = 0.0;
        ifft.process_with_scratch(&mut spectrum, &mut frame, &mut scratch)
            .expect("fft length");
        let off = m * hop;
        for n in 0..frame_len {
            acc[off + n] += frame[n] * inv_n * window[n];
            wsum[off + n] += window[n] * window[n];
        }
    }
    let mut out = Vec::with_capacity(out_len);
    for i in pad..pad + out_len {
        if wsum[i] < 1e-10 {
            return Err(DspError::NonColaParams { frame_len, hop });
        }
        out.push(acc[i] / wsum[i]);
    }
    AudioClip::new(out, spec.sample_rate)
}

/// `sqrt(re² + im²)` per bin, unnormalized.
pub fn magnitude(spec: &ComplexSpectrogram) -> MagSpectrogram {
    let mut mag = spec.re.clone();
    mag.zip_mut_with(&spec.im, |r, &i| *r = r.hypot(i));
    MagSpectrogram { mag, scale: 0.0 }
}

pub const LOG_FLOOR: f64 = 1e-5;

/// Natural log of the magnitude, floored to keep silent bins finite.
pub fn log_magnitude(mag: &Array2<f64>, floor: f64) -> Array2<f64> {
    mag.mapv(|m| m.max(floor).ln())
}

/// Divides by the global maximum. All-zero input comes back unchanged with
/// scale 0.
pub fn normalize_spectrogram(mag: &MagSpectrogram) -> MagSpectrogram {
    let max = mag.mag.iter().fold(0.0f64, |m, &v| m.max(v));
    if max <= 0.0 {
        return MagSpectrogram {
            mag: mag.mag.clone(),
            scale: 0.0,
        };
    }
    MagSpectrogram {
        mag: mag.mag.mapv(|v| v / max),
        scale: max,
    }
}

/// Undoes [`normalize_spectrogram`]; unnormalized input passes through.
pub fn denormalize_spectrogram(mag: &MagSpectrogram) -> MagSpectrogram {
    if mag.scale <= 0.0 {
        return MagSpectrogram {
            mag: mag.mag.clone(),
            scale: 0.0,
        };
    }
    MagSpectrogram {
        mag: mag.mag.mapv(|v| v * mag.scale),
        scale: 0.0,
    }
}
