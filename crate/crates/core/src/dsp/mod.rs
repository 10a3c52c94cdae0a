//! Audio I/O, resampling, convolution, STFT and alignment primitives.
//!
//! Everything here is a pure function of its inputs.

mod align;
mod audio;
mod convolve;
mod resample;
mod stft;

use thiserror::Error;

pub use align::{
    delay, detect_direct_path_delay, fix_length, pad_to_min_length, trim_leading_silence,
    DIRECT_PATH_RATIO, SILENCE_THRESHOLD_DB,
};
pub use audio::{read_wav, write_wav, AudioClip, WavFormat};
pub use convolve::{convolve_direct, convolve_fft};
pub use resample::{resample, KAISER_BETA, TAPS_PER_PHASE};
pub use stft::{
    denormalize_spectrogram, frame_count, hann, istft, log_magnitude, magnitude,
    normalize_spectrogram, stft, ComplexSpectrogram, MagSpectrogram, DEFAULT_FRAME_LEN,
    DEFAULT_HOP, LOG_FLOOR,
};

#[derive(Debug, Error)]
pub enum DspError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("no audio samples in {0}")]
    EmptyAudio(String),
    #[error("I/O failure: {0}")]
    Io(String),
    #[error("invalid sample rate {0}")]
    InvalidRate(u32),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("invalid framing: frame length {frame_len}, hop {hop}")]
    InvalidFraming { frame_len: usize, hop: usize },
    #[error("frame length {frame_len} with hop {hop} does not satisfy overlap-add")]
    NonColaParams { frame_len: usize, hop: usize },
    #[error("RIR is all zeros")]
    AllZeroRir,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}
