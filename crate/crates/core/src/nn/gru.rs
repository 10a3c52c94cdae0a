//! Gated recurrent units with hand-derived backpropagation.
//!
//! Parameters for one direction are packed gate-major as
//! `w: [Din × 3H]`, `u: [H × 3H]`, `b: [3H]` with gate order (z, r, n):
//!
//! ```text
//! z  = σ(x·Wz + h·Uz + bz)
//! r  = σ(x·Wr + h·Ur + br)
//! n  = tanh(x·Wn + (r ⊙ h)·Un + bn)
//! h' = (1 − z) ⊙ h + z ⊙ n
//! ```

use super::linalg::{gemm, MatMut, MatRef};
use super::{NnError, Tape, Tensor, Var};

/// Tape handles for one GRU direction.
#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    pub w: Var,
    pub u: Var,
    pub b: Var,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step activations kept for the backward pass.
struct StepCache {
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
}

/// One step given the precomputed input projection `a = x·W + b`.
fn cell_forward(a: &[f64], h: &[f64], u: &[f64], hidden: usize, h_out: &mut [f64]) -> StepCache {
    let three = 3 * hidden;
    let mut hu = vec![0.0; three];
    for (i, &hi) in h.iter().enumerate() {
        let row = &u[i * three..(i + 1) * three];
        for j in 0..2 * hidden {
            hu[j] += hi * row[j];
        }
    }
    let mut z = vec![0.0; hidden];
    let mut r = vec![0.0; hidden];
    for j in 0..hidden {
        z[j] = sigmoid(a[j] + hu[j]);
        r[j] = sigmoid(a[hidden + j] + hu[hidden + j]);
    }
    let mut rhu = vec![0.0; hidden];
    for i in 0..hidden {
        let rh = r[i] * h[i];
        let row = &u[i * three + 2 * hidden..(i + 1) * three];
        for j in 0..hidden {
            rhu[j] += rh * row[j];
        }
    }
    let mut n = vec![0.0; hidden];
    for j in 0..hidden {
        n[j] = (a[2 * hidden + j] + rhu[j]).tanh();
        h_out[j] = (1.0 - z[j]) * h[j] + z[j] * n[j];
    }
    StepCache { z, r, n }
}

/// Backward of one step. Accumulates into `du`, writes the pre-activation
/// gradient `da` (for W, b and x) and returns the gradient for `h`.
fn cell_backward(
    dh_out: &[f64],
    h: &[f64],
    cache: &StepCache,
    u: &[f64],
    hidden: usize,
    da: &mut [f64],
    du: &mut [f64],
) -> Vec<f64> {
    let three = 3 * hidden;
    let StepCache { z, r, n } = cache;
    let mut dh: Vec<f64> = (0..hidden).map(|j| dh_out[j] * (1.0 - z[j])).collect();
    for j in 0..hidden {
        let dz = dh_out[j] * (n[j] - h[j]);
        let dn = dh_out[j] * z[j];
        da[j] = dz * z[j] * (1.0 - z[j]);
        da[2 * hidden + j] = dn * (1.0 - n[j] * n[j]);
    }
    // candidate path through (r ⊙ h)·Un
    let dan = &da[2 * hidden..three].to_vec();
    for i in 0..hidden {
        let row = &u[i * three + 2 * hidden..(i + 1) * three];
        let drh: f64 = row.iter().zip(dan).map(|(w, d)| w * d).sum();
        da[hidden + i] = drh * h[i] * r[i] * (1.0 - r[i]);
        dh[i] += drh * r[i];
        let rh = r[i] * h[i];
        let du_row = &mut du[i * three + 2 * hidden..(i + 1) * three];
        for (g, d) in du_row.iter_mut().zip(dan) {
            *g += rh * d;
        }
    }
    // gate paths through h·[Uz Ur]
    for i in 0..hidden {
        let row = &u[i * three..i * three + 2 * hidden];
        let s: f64 = row.iter().zip(&da[..2 * hidden]).map(|(w, d)| w * d).sum();
        dh[i] += s;
        let du_row = &mut du[i * three..i * three + 2 * hidden];
        for (g, d) in du_row.iter_mut().zip(&da[..2 * hidden]) {
            *g += h[i] * d;
        }
    }
    dh
}

fn check_params(tape: &Tape, din: usize, p: &GruParams) -> Result<usize, NnError> {
    let us = tape.shape(p.u);
    if us.len() != 2 || us[1] != 3 * us[0] {
        return Err(NnError::ShapeMismatch(format!("GRU recurrent matrix {us:?}")));
    }
    let hidden = us[0];
    if tape.shape(p.w) != [din, 3 * hidden] || tape.shape(p.b) != [3 * hidden] {
        return Err(NnError::ShapeMismatch(format!(
            "GRU input weights {:?} / bias {:?} for input {din}, hidden {hidden}",
            tape.shape(p.w),
            tape.shape(p.b)
        )));
    }
    Ok(hidden)
}

/// `a = X·W + b` for all rows of `X`.
fn project(x: &[f64], rows: usize, din: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let three = b.len();
    let mut a: Vec<f64> = (0..rows).flat_map(|_| b.iter().copied()).collect();
    gemm(rows, din, three, MatRef::rows(x, 0, din), MatRef::rows(w, 0, three), 1.0, MatMut::rows(&mut a, 0, three));
    a
}

/// `(dX, dW, db)` from pre-activation gradients `da: [rows × 3H]`.
fn project_backward(
    da: &[f64],
    x: &[f64],
    rows: usize,
    din: usize,
    w: &[f64],
    need: (bool, bool, bool),
) -> (Option<Vec<f64>>, Option<Vec<f64>>, Option<Vec<f64>>) {
    let three = w.len() / din;
    let dx = need.0.then(|| {
        let mut dx = vec![0.0; rows * din];
        gemm(rows, three, din, MatRef::rows(da, 0, three), MatRef::transposed(w, 0, three), 0.0, MatMut::rows(&mut dx, 0, din));
        dx
    });
    let dw = need.1.then(|| {
        let mut dw = vec![0.0; din * three];
        gemm(din, rows, three, MatRef::transposed(x, 0, din), MatRef::rows(da, 0, three), 0.0, MatMut::rows(&mut dw, 0, three));
        dw
    });
    let db = need.2.then(|| {
        let mut db = vec![0.0; three];
        for row in da.chunks_exact(three) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        db
    });
    (dx, dw, db)
}

impl Tape {
    /// Single GRU step: `x: [Din]`, `h: [H]` → `[H]`.
    pub fn gru_cell(&mut self, x: Var, h: Var, p: GruParams) -> Result<Var, NnError> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 1 {
            return Err(NnError::ShapeMismatch(format!("gru_cell input {xs:?}")));
        }
        let din = xs[0];
        let hidden = check_params(self, din, &p)?;
        if self.shape(h) != [hidden] {
            return Err(NnError::ShapeMismatch(format!("gru_cell state {:?}", self.shape(h))));
        }
        let xv = self.value(x).clone();
        let hv = self.value(h).clone();
        let wv = self.value(p.w).clone();
        let uv = self.value(p.u).clone();
        let a = project(xv.data(), 1, din, wv.data(), self.value(p.b).data());
        let mut out = vec![0.0; hidden];
        let cache = cell_forward(&a, hv.data(), uv.data(), hidden, &mut out);
        let out = Tensor::new(vec![hidden], out)?;
        Ok(self.record(out, &[x, h, p.w, p.u, p.b], move || {
            Box::new(move |g, need| {
                let mut da = vec![0.0; 3 * hidden];
                let mut du = vec![0.0; uv.len()];
                let dh = cell_backward(g.data(), hv.data(), &cache, uv.data(), hidden, &mut da, &mut du);
                let (dx, dw, db) = project_backward(&da, xv.data(), 1, din, wv.data(), (need[0], need[2], need[4]));
                vec![
                    dx.map(|d| Tensor::new(vec![din], d).unwrap()),
                    Some(Tensor::new(vec![hidden], dh).unwrap()),
                    dw.map(|d| Tensor::new(wv.shape().to_vec(), d).unwrap()),
                    Some(Tensor::new(uv.shape().to_vec(), du).unwrap()),
                    db.map(|d| Tensor::new(vec![3 * hidden], d).unwrap()),
                ]
            })
        }))
    }

    /// Runs one GRU direction over `seq: [T×Din]` from a zero state. With
    /// `reverse`, steps run right to left; outputs stay in input order.
    pub fn gru_sequence(&mut self, seq: Var, p: GruParams, reverse: bool) -> Result<Var, NnError> {
        let ss = self.shape(seq).to_vec();
        if ss.len() != 2 {
            return Err(NnError::ShapeMismatch(format!("gru sequence {ss:?}")));
        }
        let (steps, din) = (ss[0], ss[1]);
        let hidden = check_params(self, din, &p)?;
        let three = 3 * hidden;
        let xv = self.value(seq).clone();
        let wv = self.value(p.w).clone();
        let uv = self.value(p.u).clone();
        let a = project(xv.data(), steps, din, wv.data(), self.value(p.b).data());

        let order: Vec<usize> = if reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        };
        let mut out = vec![0.0; steps * hidden];
        // state entering each step, in processing order
        let mut h_in = Vec::with_capacity(steps);
        let mut caches = Vec::with_capacity(steps);
        let mut h = vec![0.0; hidden];
        for &t in &order {
            let mut next = vec![0.0; hidden];
            let cache = cell_forward(&a[t * three..(t + 1) * three], &h, uv.data(), hidden, &mut next);
            out[t * hidden..(t + 1) * hidden].copy_from_slice(&next);
            h_in.push(std::mem::replace(&mut h, next));
            caches.push(cache);
        }
        let out = Tensor::new(vec![steps, hidden], out)?;
        Ok(self.record(out, &[seq, p.w, p.u, p.b], move || {
            Box::new(move |g, need| {
                let mut da = vec![0.0; steps * three];
                let mut du = vec![0.0; uv.len()];
                let mut dh_next = vec![0.0; hidden];
                for (k, &t) in order.iter().enumerate().rev() {
                    let mut dh: Vec<f64> = g.data()[t * hidden..(t + 1) * hidden].to_vec();
                    for (d, n) in dh.iter_mut().zip(&dh_next) {
                        *d += n;
                    }
                    dh_next = cell_backward(
                        &dh,
                        &h_in[k],
                        &caches[k],
                        uv.data(),
                        hidden,
                        &mut da[t * three..(t + 1) * three],
                        &mut du,
                    );
                }
                let (dx, dw, db) =
                    project_backward(&da, xv.data(), steps, din, wv.data(), (need[0], need[1], need[3]));
                vec![
                    dx.map(|d| Tensor::new(vec![steps, din], d).unwrap()),
                    dw.map(|d| Tensor::new(wv.shape().to_vec(), d).unwrap()),
                    Some(Tensor::new(uv.shape().to_vec(), du).unwrap()),
                    db.map(|d| Tensor::new(vec![three], d).unwrap()),
                ]
            })
        }))
    }

    /// Bidirectional GRU: `[T×Din]` → `[T×2H]`, forward features first.
    pub fn bigru_layer(&mut self, seq: Var, fwd: GruParams, bwd: GruParams) -> Result<Var, NnError> {
        if self.shape(seq).first() == Some(&0) {
            return Err(NnError::ShapeMismatch("empty sequence".into()));
        }
        let f = self.gru_sequence(seq, fwd, false)?;
        let b = self.gru_sequence(seq, bwd, true)?;
        self.concat_last(&[f, b])
    }
}
