//! 2-D cross-correlation layers over `[T×F×C]` feature maps.
//!
//! Kernels are `[kT×kF×Cin×Cout]` for [`Tape::conv2d`] and
//! `[kT×kF×Cout×Cin]` for [`Tape::conv2d_transposed`], so the same tensor
//! drives a convolution and its adjoint.

use realfft::num_complex::Complex;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use super::linalg::{gemm, MatMut, MatRef};
use super::{NnError, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    /// Output extent `ceil(in / stride)`; the extra padding goes after.
    Same,
}

/// Time-only convolutions with at least this many taps and output frames
/// take the FFT route in the forward pass.
const FFT_MIN_EXTENT: usize = 8;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    t: usize,
    f: usize,
    cin: usize,
    kt: usize,
    kf: usize,
    cout: usize,
    st: usize,
    sf: usize,
    t_out: usize,
    f_out: usize,
}

impl Geometry {
    fn is_time_only(&self) -> bool {
        self.kf == 1 && self.st == 1 && self.sf == 1
    }

    fn prefers_fft(&self) -> bool {
        self.is_time_only() && self.kt >= FFT_MIN_EXTENT && self.t_out >= FFT_MIN_EXTENT
    }
}

fn same_pad(len: usize, k: usize, s: usize) -> (usize, usize) {
    let out = len.div_ceil(s);
    let total = ((out - 1) * s + k).saturating_sub(len);
    (total / 2, total - total / 2)
}

impl Tape {
    /// Strided 2-D cross-correlation with optional per-channel bias.
    pub fn conv2d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Var, NnError> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(kernel).to_vec();
        if xs.len() != 3 || ks.len() != 4 || ks[2] != xs[2] || stride.0 == 0 || stride.1 == 0 {
            return Err(NnError::ShapeMismatch(format!(
                "conv2d input {xs:?}, kernel {ks:?}, stride {stride:?}"
            )));
        }
        let input = match padding {
            Padding::Valid => x,
            Padding::Same => {
                let pt = same_pad(xs[0], ks[0], stride.0);
                let pf = same_pad(xs[1], ks[1], stride.1);
                if pt == (0, 0) && pf == (0, 0) {
                    x
                } else {
                    self.pad3(x, pt, pf)?
                }
            }
        };
        let ps = self.shape(input).to_vec();
        if ks[0] > ps[0] || ks[1] > ps[1] {
            return Err(NnError::ShapeMismatch(format!(
                "conv2d kernel {ks:?} larger than padded input {ps:?}"
            )));
        }
        let geo = Geometry {
            t: ps[0],
            f: ps[1],
            cin: ps[2],
            kt: ks[0],
            kf: ks[1],
            cout: ks[3],
            st: stride.0,
            sf: stride.1,
            t_out: (ps[0] - ks[0]) / stride.0 + 1,
            f_out: (ps[1] - ks[1]) / stride.1 + 1,
        };
        let (xv, wv) = (self.value(input), self.value(kernel));
        let out = if geo.prefers_fft() {
            conv_forward_fft(&geo, xv.data(), wv.data())
        } else {
            conv_forward_gemm(&geo, xv.data(), wv.data())
        };
        let out = Tensor::new(vec![geo.t_out, geo.f_out, geo.cout], out)?;
        let saved = self.will_record(&[input, kernel]).then(|| (xv.clone(), wv.clone()));
        let y = self.record(out, &[input, kernel], move || {
            let (xv, wv) = saved.unwrap();
            Box::new(move |g, need| {
                let dx = need[0].then(|| {
                    let mut dx = vec![0.0; xv.len()];
                    conv_backward_input(&geo, g.data(), wv.data(), &mut dx);
                    Tensor::new(xv.shape().to_vec(), dx).unwrap()
                });
                let dw = need[1].then(|| {
                    let mut dw = vec![0.0; wv.len()];
                    conv_backward_kernel(&geo, g.data(), xv.data(), &mut dw);
                    Tensor::new(wv.shape().to_vec(), dw).unwrap()
                });
                vec![dx, dw]
            })
        });
        match bias {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    /// Adjoint of a valid strided [`Tape::conv2d`]; output extent
    /// `(T - 1) * stride + kT`.
    pub fn conv2d_transposed(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: (usize, usize),
    ) -> Result<Var, NnError> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(kernel).to_vec();
        if xs.len() != 3 || ks.len() != 4 || ks[3] != xs[2] || stride.0 == 0 || stride.1 == 0 {
            return Err(NnError::ShapeMismatch(format!(
                "conv2d_transposed input {xs:?}, kernel {ks:?}, stride {stride:?}"
            )));
        }
        // reuse the forward geometry with input/output roles swapped
        let geo = Geometry {
            t: (xs[0] - 1) * stride.0 + ks[0],
            f: (xs[1] - 1) * stride.1 + ks[1],
            cin: ks[2],
            kt: ks[0],
            kf: ks[1],
            cout: ks[3],
            st: stride.0,
            sf: stride.1,
            t_out: xs[0],
            f_out: xs[1],
        };
        let (xv, wv) = (self.value(x), self.value(kernel));
        let mut out = vec![0.0; geo.t * geo.f * geo.cin];
        conv_backward_input(&geo, xv.data(), wv.data(), &mut out);
        let out = Tensor::new(vec![geo.t, geo.f, geo.cin], out)?;
        let saved = self.will_record(&[x, kernel]).then(|| (xv.clone(), wv.clone()));
        let y = self.record(out, &[x, kernel], move || {
            let (xv, wv) = saved.unwrap();
            Box::new(move |g, need| {
                let dx = need[0].then(|| {
                    Tensor::new(xv.shape().to_vec(), conv_forward_gemm(&geo, g.data(), wv.data())).unwrap()
                });
                let dw = need[1].then(|| {
                    let mut dw = vec![0.0; wv.len()];
                    conv_backward_kernel(&geo, xv.data(), g.data(), &mut dw);
                    Tensor::new(wv.shape().to_vec(), dw).unwrap()
                });
                vec![dx, dw]
            })
        });
        match bias {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }
}

fn conv_forward_gemm(g: &Geometry, x: &[f64], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.t_out * g.f_out * g.cout];
    if g.is_time_only() {
        // every time shift is one (t_out·F × Cin)·(Cin × Cout) product
        let rows = g.t_out * g.f;
        for kt in 0..g.kt {
            gemm(
                rows,
                g.cin,
                g.cout,
                MatRef::rows(x, kt * g.f * g.cin, g.cin),
                MatRef::rows(w, kt * g.cin * g.cout, g.cout),
                1.0,
                MatMut::rows(&mut out, 0, g.cout),
            );
        }
        return out;
    }
    for to in 0..g.t_out {
        for kt in 0..g.kt {
            let ti = to * g.st + kt;
            for kf in 0..g.kf {
                gemm(
                    g.f_out,
                    g.cin,
                    g.cout,
                    MatRef::strided(x, (ti * g.f + kf) * g.cin, g.sf * g.cin, 1),
                    MatRef::rows(w, (kt * g.kf + kf) * g.cin * g.cout, g.cout),
                    1.0,
                    MatMut::rows(&mut out, to * g.f_out * g.cout, g.cout),
                );
            }
        }
    }
    out
}

/// Accumulates the input-side adjoint of `g_out` into `dx`.
fn conv_backward_input(g: &Geometry, g_out: &[f64], w: &[f64], dx: &mut [f64]) {
    if g.is_time_only() {
        let rows = g.t_out * g.f;
        for kt in 0..g.kt {
            gemm(
                rows,
                g.cout,
                g.cin,
                MatRef::rows(g_out, 0, g.cout),
                MatRef::transposed(w, kt * g.cin * g.cout, g.cout),
                1.0,
                MatMut::rows(dx, kt * g.f * g.cin, g.cin),
            );
        }
        return;
    }
    for to in 0..g.t_out {
        for kt in 0..g.kt {
            let ti = to * g.st + kt;
            for kf in 0..g.kf {
                gemm(
                    g.f_out,
                    g.cout,
                    g.cin,
                    MatRef::rows(g_out, to * g.f_out * g.cout, g.cout),
                    MatRef::transposed(w, (kt * g.kf + kf) * g.cin * g.cout, g.cout),
                    1.0,
                    MatMut::strided(dx, (ti * g.f + kf) * g.cin, g.sf * g.cin, 1),
                );
            }
        }
    }
}

/// Accumulates the kernel gradient for input `x` and output gradient `g_out`.
fn conv_backward_kernel(g: &Geometry, g_out: &[f64], x: &[f64], dw: &mut [f64]) {
    if g.is_time_only() {
        let rows = g.t_out * g.f;
        for kt in 0..g.kt {
            gemm(
                g.cin,
                rows,
                g.cout,
                MatRef::transposed(x, kt * g.f * g.cin, g.cin),
                MatRef::rows(g_out, 0, g.cout),
                1.0,
                MatMut::rows(dw, kt * g.cin * g.cout, g.cout),
            );
        }
        return;
    }
    for to in 0..g.t_out {
        for kt in 0..g.kt {
            let ti = to * g.st + kt;
            for kf in 0..g.kf {
                gemm(
                    g.cin,
                    g.f_out,
                    g.cout,
                    MatRef::strided(x, (ti * g.f + kf) * g.cin, 1, g.sf * g.cin),
                    MatRef::rows(g_out, to * g.f_out * g.cout, g.cout),
                    1.0,
                    MatMut::rows(dw, (kt * g.kf + kf) * g.cin * g.cout, g.cout),
                );
            }
        }
    }
}

/// Time-axis correlation through the frequency domain, one frequency row at
/// a time: `Y_co = Σ_ci X_ci · conj(W_ci,co)`.
/// Smallest even length of the form `2^a 3^b 5^c` that is at least `min`.
fn fft_len(min: usize) -> usize {
    let smooth = |mut v: usize| {
        for p in [2, 3, 5] {
            while v % p == 0 {
                v /= p;
            }
        }
        v == 1
    };
    let mut n = min.max(2).next_multiple_of(2);
    while !smooth(n) {
        n += 2;
    }
    n
}

/// `dst[c * dst_stride + r] = src[r * src_stride + c]` for an
/// `rows × cols` block, in cache-sized tiles.
fn transpose(src: &[f64], src_stride: usize, rows: usize, cols: usize, dst: &mut [f64], dst_stride: usize) {
    const TILE: usize = 32;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * dst_stride + r] = src[r * src_stride + c];
                }
            }
        }
    }
}

/// Forward pass of a time-only convolution by per-row FFT correlation. The
/// channel mixing at each frequency bin is one real GEMM on
/// `[x_re | x_im] · [[k_re, k_im], [-k_im, k_re]]`.
fn conv_forward_fft(g: &Geometry, x: &[f64], w: &[f64]) -> Vec<f64> {
    // circular correlation is exact on the valid outputs once n >= t
    let n = fft_len(g.t);
    let bins = n / 2 + 1;
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut spec_buf = vec![Complex::new(0.0, 0.0); bins];
    let mut scratch = vec![Complex::new(0.0, 0.0); fwd.get_scratch_len().max(inv.get_scratch_len())];
    let (cin2, cout2) = (2 * g.cin, 2 * g.cout);

    // kernel spectra as [channel pair][bin], then per bin as [cin2][cout2]
    let pairs = g.cin * g.cout;
    let mut taps = vec![0.0; pairs * n];
    transpose(w, pairs, g.kt, pairs, &mut taps, n);
    let mut k_re = vec![0.0; pairs * bins];
    let mut k_im = vec![0.0; pairs * bins];
    for p in 0..pairs {
        fwd.process_with_scratch(&mut taps[p * n..(p + 1) * n], &mut spec_buf, &mut scratch)
            .expect("fft length");
        for (b, c) in spec_buf.iter().enumerate() {
            k_re[p * bins + b] = c.re;
            k_im[p * bins + b] = -c.im;
        }
    }
    drop(taps);
    let mut by_bin = vec![0.0; bins * pairs];
    let mut k = vec![0.0; bins * cin2 * cout2];
    let blocks = [(&k_re, [(0, 0, 1.0), (1, 1, 1.0)]), (&k_im, [(0, 1, 1.0), (1, 0, -1.0)])];
    for (part, placements) in blocks {
        transpose(part, bins, pairs, bins, &mut by_bin, pairs);
        for (rb, cb, sign) in placements {
            for b in 0..bins {
                let dst = &mut k[b * cin2 * cout2..(b + 1) * cin2 * cout2];
                for ci in 0..g.cin {
                    let src = &by_bin[b * pairs + ci * g.cout..b * pairs + (ci + 1) * g.cout];
                    let row = (rb * g.cin + ci) * cout2 + cb * g.cout;
                    for (d, &v) in dst[row..row + g.cout].iter_mut().zip(src) {
                        *d = sign * v;
                    }
                }
            }
        }
    }
    drop((k_re, k_im, by_bin));

    const BLOCK: usize = 32;
    let block = BLOCK.min(g.f);
    let mut xt = vec![0.0; block * g.cin * n];
    let mut spectra = vec![0.0; block * cin2 * bins];
    let mut xs = vec![0.0; bins * block * cin2];
    let mut ys = vec![0.0; bins * block * cout2];
    let mut yt = vec![0.0; block * cout2 * bins];
    let mut time_buf = vec![0.0; n];
    let mut ob = vec![0.0; block * g.cout * g.t_out];
    let mut out = vec![0.0; g.t_out * g.f * g.cout];
    let inv_n = 1.0 / n as f64;
    for f0 in (0..g.f).step_by(block) {
        let rows = block.min(g.f - f0);
        let width = rows * g.cin;
        // [t][row, ci] -> [row, ci][t], zero padded to n
        xt.iter_mut().for_each(|v| *v = 0.0);
        transpose(&x[f0 * g.cin..], g.f * g.cin, g.t, width, &mut xt, n);
        for j in 0..width {
            let (fl, ci) = (j / g.cin, j % g.cin);
            fwd.process_with_scratch(&mut xt[j * n..(j + 1) * n], &mut spec_buf, &mut scratch)
                .expect("fft length");
            let re = (fl * cin2 + ci) * bins;
            let im = (fl * cin2 + g.cin + ci) * bins;
            for (b, c) in spec_buf.iter().enumerate() {
                spectra[re + b] = c.re;
                spectra[im + b] = c.im;
            }
        }
        // [row, part, ci][bin] -> [bin][row, part, ci]
        transpose(&spectra, bins, rows * cin2, bins, &mut xs, block * cin2);
        for b in 0..bins {
            gemm(
                rows,
                cin2,
                cout2,
                MatRef::rows(&xs, b * block * cin2, cin2),
                MatRef::rows(&k, b * cin2 * cout2, cout2),
                0.0,
                MatMut::rows(&mut ys, b * block * cout2, cout2),
            );
        }
        transpose(&ys, block * cout2, bins, rows * cout2, &mut yt, bins);
        for fl in 0..rows {
            for co in 0..g.cout {
                let re = (fl * cout2 + co) * bins;
                let im = (fl * cout2 + g.cout + co) * bins;
                for (b, c) in spec_buf.iter_mut().enumerate() {
                    *c = Complex::new(yt[re + b], yt[im + b]);
                }
                spec_buf[0].im = 0.0;
                spec_buf[bins - 1].im = 0.0;
                inv.process_with_scratch(&mut spec_buf, &mut time_buf, &mut scratch)
                    .expect("fft length");
                let dst = (fl * g.cout + co) * g.t_out;
                for (o, &v) in ob[dst..dst + g.t_out].iter_mut().zip(&time_buf) {
                    *o = v * inv_n;
                }
            }
        }
        // [row, co][to] -> [to][row, co]
        transpose(&ob, g.t_out, rows * g.cout, g.t_out, &mut out[f0 * g.cout..], g.f * g.cout);
    }
    out
}
