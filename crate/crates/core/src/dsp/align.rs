use super::{AudioClip, DspError};

/// Direct-path onset threshold relative to the RIR peak (-20 dB).
pub const DIRECT_PATH_RATIO: f64 = 0.1;
pub const SILENCE_THRESHOLD_DB: f64 = -40.0;

/// First sample whose magnitude reaches 10% of the RIR peak.
pub fn detect_direct_path_delay(rir: &AudioClip) -> Result<usize, DspError> {
    let peak = rir.peak();
    if peak == 0.0 {
        return Err(DspError::AllZeroRir);
    }
    let threshold = DIRECT_PATH_RATIO * peak;
    Ok(rir
        .samples()
        .iter()
        .position(|s| s.abs() >= threshold)
        .expect("peak sample always passes"))
}

/// Drops everything before the first sample louder than `threshold_db`
/// relative to the clip peak. Returns the trimmed clip and the number of
/// samples removed; an all-silent clip trims to nothing.
pub fn trim_leading_silence(clip: &AudioClip, threshold_db: f64) -> (AudioClip, usize) {
    let peak = clip.peak();
    let threshold = peak * 10f64.powf(threshold_db / 20.0);
    let offset = if peak == 0.0 {
        clip.len()
    } else {
        clip.samples()
            .iter()
            .position(|s| s.abs() > threshold)
            .unwrap_or(clip.len())
    };
    (clip.with_samples(clip.samples()[offset..].to_vec()), offset)
}

/// Truncates or zero-pads the tail to exactly `target_len` samples.
pub fn fix_length(clip: &AudioClip, target_len: usize) -> AudioClip {
    let mut s = clip.samples().to_vec();
    s.resize(target_len, 0.0);
    clip.with_samples(s)
}

/// Zero-pads the tail up to `min_len`; longer clips are left alone.
pub fn pad_to_min_length(clip: &AudioClip, min_len: usize) -> AudioClip {
    if clip.len() >= min_len {
        clip.clone()
    } else {
        fix_length(clip, min_len)
    }
}

/// Prepends `delay` zeros.
pub fn delay(clip: &AudioClip, delay: usize) -> AudioClip {
    let mut s = vec![0.0; delay + clip.len()];
    s[delay..].copy_from_slice(clip.samples());
    clip.with_samples(s)
}
