use ndarray::Array2;

use super::EvalError;
use crate::dsp::{istft, AudioClip, ComplexSpectrogram};

/// Floor of the energy decay curve, in dB.
pub const EDC_FLOOR_DB: f64 = -120.0;
/// Frame hop of the standard STFT, in seconds.
pub const DEFAULT_HOP_S: f64 = 0.016;
/// Fit range of the decay line, in dB.
pub const T60_FIT_RANGE: (f64, f64) = (-5.0, -25.0);

const DB_PER_NEPER: f64 = 20.0 / std::f64::consts::LN_10;

fn same_dims(a: &Array2<f64>, b: &Array2<f64>) -> Result<(), EvalError> {
    if a.dim() != b.dim() {
        return Err(EvalError::ShapeMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Mean over frames of the RMS (over bins) natural-log magnitude
/// difference, expressed in dB.
pub fn log_spectral_distance(est_logmag: &Array2<f64>, ref_logmag: &Array2<f64>) -> Result<f64, EvalError> {
    same_dims(est_logmag, ref_logmag)?;
    let (t, f) = est_logmag.dim();
    if t == 0 || f == 0 {
        return Err(EvalError::ShapeMismatch("empty spectrogram".into()));
    }
    let total: f64 = est_logmag
        .rows()
        .into_iter()
        .zip(ref_logmag.rows())
        .map(|(e, r)| {
            let ms = e.iter().zip(r).map(|(a, b)| (DB_PER_NEPER * (a - b)).powi(2)).sum::<f64>() / f as f64;
            ms.sqrt()
        })
        .sum();
    Ok(total / t as f64)
}

/// Mean squared difference of two equally shaped arrays.
pub fn mse(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64, EvalError> {
    same_dims(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len().max(1) as f64)
}

/// Schroeder backward integration of per-frame energy, in dB relative to
/// the total and clamped at [`EDC_FLOOR_DB`].
pub fn energy_decay_curve(rir_mag: &Array2<f64>) -> Result<Vec<f64>, EvalError> {
    if rir_mag.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(EvalError::InvalidInput("RIR magnitude must be finite and non-negative".into()));
    }
    let energy: Vec<f64> = rir_mag.rows().into_iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let mut tail = vec![0.0; energy.len()];
    let mut acc = 0.0;
    for (t, e) in energy.iter().enumerate().rev() {
        acc += e;
        tail[t] = acc;
    }
    let total = tail.first().copied().unwrap_or(0.0);
    if total <= 0.0 {
        return Err(EvalError::ZeroEnergy);
    }
    Ok(tail
        .iter()
        .map(|&s| {
            if s <= 0.0 {
                EDC_FLOOR_DB
            } else {
                (10.0 * (s / total).log10()).max(EDC_FLOOR_DB)
            }
        })
        .collect())
}

/// Reverberation time from a least-squares line through the EDC points
/// between -5 and -25 dB, extrapolated to -60 dB.
pub fn t60_estimate(edc: &[f64], hop_s: f64) -> Result<f64, EvalError> {
    let (hi, lo) = T60_FIT_RANGE;
    if !edc.iter().any(|&v| v <= lo) {
        return Err(EvalError::InsufficientDecay);
    }
    let pts: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= hi && v >= lo)
        .map(|(t, &v)| (t as f64, v))
        .collect();
    if pts.len() < 2 {
        return Err(EvalError::InsufficientDecay);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(EvalError::InsufficientDecay);
    }
    Ok(-60.0 / slope * hop_s)
}

/// Waveform from an estimated log-magnitude and the phase of a reference
/// (reverberant) spectrogram. Bins where the reference is exactly zero
/// take zero phase.
pub fn reconstruct_audio(
    est_logmag: &Array2<f64>,
    phase_ref: &ComplexSpectrogram,
    scale: f64,
    length: Option<usize>,
) -> Result<AudioClip, EvalError> {
    same_dims(est_logmag, &phase_ref.re)?;
    let mut re = Array2::zeros(est_logmag.dim());
    let mut im = Array2::zeros(est_logmag.dim());
    for ((idx, &lm), (r, i)) in est_logmag
        .indexed_iter()
        .zip(re.iter_mut().zip(im.iter_mut()))
    {
        let mag = lm.exp() * scale;
        let (pr, pi) = (phase_ref.re[idx], phase_ref.im[idx]);
        let norm = pr.hypot(pi);
        if norm > 0.0 {
            *r = mag * pr / norm;
            *i = mag * pi / norm;
        } else {
            *r = mag;
        }
    }
    let spec = ComplexSpectrogram {
        re,
        im,
        frame_len: phase_ref.frame_len,
        hop: phase_ref.hop,
        sample_rate: phase_ref.sample_rate,
    };
    Ok(istft(&spec, length)?)
}
