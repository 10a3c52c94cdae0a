//! Reverberant magnitude estimate from an RIR magnitude estimate and a dry
//! magnitude spectrogram: a causal 1-D convolution along time, run
//! independently in every frequency bin.

use ndarray::Array2;

use crate::nn::{NnError, Tape, Tensor, Var};

/// `out[t, f] = Σ_{τ ≤ min(t, R-1)} rir[τ, f] · dry[t - τ, f]`
fn forward(rir: &[f64], r: usize, dry: &[f64], t: usize, f: usize) -> Vec<f64> {
    let mut out = vec![0.0; t * f];
    for ti in 0..t {
        let row = &mut out[ti * f..(ti + 1) * f];
        for tau in 0..r.min(ti + 1) {
            let k = &rir[tau * f..(tau + 1) * f];
            let d = &dry[(ti - tau) * f..(ti - tau + 1) * f];
            for ((o, kv), dv) in row.iter_mut().zip(k).zip(d) {
                *o += kv * dv;
            }
        }
    }
    out
}

/// Plain-array version of [`Tape::reconstruct_reverb`].
pub fn reconstruct_reverb(rir_mag: &Array2<f64>, dry_mag: &Array2<f64>) -> Result<Array2<f64>, NnError> {
    if rir_mag.ncols() != dry_mag.ncols() {
        return Err(NnError::ShapeMismatch(format!(
            "rir {:?} vs dry {:?}",
            rir_mag.dim(),
            dry_mag.dim()
        )));
    }
    let (r, f) = rir_mag.dim();
    let t = dry_mag.nrows();
    let rir = rir_mag.as_standard_layout();
    let dry = dry_mag.as_standard_layout();
    let out = forward(rir.as_slice().unwrap(), r, dry.as_slice().unwrap(), t, f);
    Ok(Array2::from_shape_vec((t, f), out).expect("shape"))
}

impl Tape {
    /// Differentiable in both arguments. `rir: [R×F]`, `dry: [T×F]` →
    /// `[T×F]`.
    pub fn reconstruct_reverb(&mut self, rir: Var, dry: Var) -> Result<Var, NnError> {
        let (rs, ds) = (self.shape(rir).to_vec(), self.shape(dry).to_vec());
        if rs.len() != 2 || ds.len() != 2 || rs[1] != ds[1] {
            return Err(NnError::ShapeMismatch(format!("reconstruct_reverb rir {rs:?}, dry {ds:?}")));
        }
        let (r, f, t) = (rs[0], rs[1], ds[0]);
        let rv = self.value(rir).clone();
        let dv = self.value(dry).clone();
        let out = Tensor::new(vec![t, f], forward(rv.data(), r, dv.data(), t, f))?;
        Ok(self.record(out, &[rir, dry], move || {
            Box::new(move |g, need| {
                let g = g.data();
                let drir = need[0].then(|| {
                    let mut d = vec![0.0; r * f];
                    for tau in 0..r.min(t) {
                        let drow = &mut d[tau * f..(tau + 1) * f];
                        for ti in tau..t {
                            let gr = &g[ti * f..(ti + 1) * f];
                            let dr = &dv.data()[(ti - tau) * f..(ti - tau + 1) * f];
                            for ((o, gv), x) in drow.iter_mut().zip(gr).zip(dr) {
                                *o += gv * x;
                            }
                        }
                    }
                    Tensor::new(vec![r, f], d).unwrap()
                });
                let ddry = need[1].then(|| {
                    let mut d = vec![0.0; t * f];
                    for s in 0..t {
                        let drow = &mut d[s * f..(s + 1) * f];
                        for tau in 0..r.min(t - s) {
                            let gr = &g[(s + tau) * f..(s + tau + 1) * f];
                            let k = &rv.data()[tau * f..(tau + 1) * f];
                            for ((o, gv), kv) in drow.iter_mut().zip(gr).zip(k) {
                                *o += gv * kv;
                            }
                        }
                    }
                    Tensor::new(vec![t, f], d).unwrap()
                });
                vec![drir, ddry]
            })
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn naive(rir: &Array2<f64>, dry: &Array2<f64>) -> Array2<f64> {
        let (r, f) = rir.dim();
        let t = dry.nrows();
        let mut out = Array2::zeros((t, f));
        for fi in 0..f {
            for ti in 0..t {
                let mut acc = 0.0;
                for tau in 0..=ti.min(r - 1) {
                    acc += rir[[tau, fi]] * dry[[ti - tau, fi]];
                }
                out[[ti, fi]] = acc;
            }
        }
        out
    }

    fn random(shape: (usize, usize), rng: &mut impl Rng) -> Array2<f64> {
        Array2::from_shape_fn(shape, |_| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn frame_delta_is_identity_and_shift() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let dry = random((20, 7), &mut rng);
        let mut rir = Array2::zeros((6, 7));
        rir.row_mut(0).fill(1.0);
        assert_eq!(reconstruct_reverb(&rir, &dry).unwrap(), dry);
        let mut rir = Array2::zeros((6, 7));
        rir.row_mut(3).fill(1.0);
        let out = reconstruct_reverb(&rir, &dry).unwrap();
        for t in 0..20 {
            for f in 0..7 {
                let want = if t < 3 { 0.0 } else { dry[[t - 3, f]] };
                assert_eq!(out[[t, f]], want);
            }
        }
    }

    #[test]
    fn matches_naive_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (r, t, f) = (rng.gen_range(1..10), rng.gen_range(1..30), rng.gen_range(1..6));
            let rir = random((r, f), &mut rng);
            let dry = random((t, f), &mut rng);
            let a = reconstruct_reverb(&rir, &dry).unwrap();
            let b = naive(&rir, &dry);
            let scale = b.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
            let err = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale;
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn linear_in_each_argument() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (r1, r2) = (random((4, 3), &mut rng), random((4, 3), &mut rng));
        let (d1, d2) = (random((9, 3), &mut rng), random((9, 3), &mut rng));
        let lhs = reconstruct_reverb(&(&r1 + &r2), &d1).unwrap();
        let rhs = reconstruct_reverb(&r1, &d1).unwrap() + reconstruct_reverb(&r2, &d1).unwrap();
        assert!(lhs.iter().zip(rhs.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
        let lhs = reconstruct_reverb(&r1, &(&d1 + &d2)).unwrap();
        let rhs = reconstruct_reverb(&r1, &d1).unwrap() + reconstruct_reverb(&r1, &d2).unwrap();
        assert!(lhs.iter().zip(rhs.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn shape_mismatch() {
        let rir = Array2::zeros((3, 4));
        let dry = Array2::zeros((5, 5));
        assert!(reconstruct_reverb(&rir, &dry).is_err());
    }
}
