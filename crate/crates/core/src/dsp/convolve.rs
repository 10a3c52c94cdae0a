use realfft::RealFftPlanner;

/// Full linear convolution by direct summation.
pub fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    assert!(!x.is_empty() && !h.is_empty(), "convolution of empty sequence");
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (o, &hj) in out[i..].iter_mut().zip(h) {
            *o += xi * hj;
        }
    }
    out
}

/// Full linear convolution through a zero-padded real FFT whose size is the
/// next power of two at or above `len(x) + len(h) - 1`.
pub fn convolve_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    assert!(!x.is_empty() && !h.is_empty(), "convolution of empty sequence");
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two().max(2);
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut xa = vec![0.0; n];
    xa[..x.len()].copy_from_slice(x);
    let mut ha = vec![0.0; n];
    ha[..h.len()].copy_from_slice(h);
    let mut xs = fwd.make_output_vec();
    let mut hs = fwd.make_output_vec();
    fwd.process(&mut xa, &mut xs).expect("fft length");
    fwd.process(&mut ha, &mut hs).expect("fft length");
    for (a, b) in xs.iter_mut().zip(&hs) {
        *a *= *b;
    }
    // the DC and Nyquist bins of a real signal have zero imaginary part
    xs[0].im = 0.0;
    xs[n / 2].im = 0.0;
    let mut out = inv.make_output_vec();
    inv.process(&mut xs, &mut out).expect("fft length");
    out.truncate(out_len);
    let scale = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    out
}
