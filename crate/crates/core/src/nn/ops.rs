//! Elementwise, reduction, matrix and layout ops.

use super::linalg::{gemm, MatMut, MatRef};
use super::{NnError, Tape, Tensor, Var};

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), NnError> {
    if cond {
        Ok(())
    } else {
        Err(NnError::ShapeMismatch(msg()))
    }
}

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.value(a).same_shape(self.value(b), "add")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.record(out, &[a, b], || {
            Box::new(|g, _| vec![Some(g.clone()), Some(g.clone())])
        }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.value(a).same_shape(self.value(b), "sub")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.record(out, &[a, b], || {
            Box::new(|g, _| vec![Some(g.clone()), Some(g.map(|v| -v))])
        }))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a).clone(), self.value(b).clone());
        assert_eq!(av.shape(), bv.shape(), "mul shapes");
        let out = av.zip_map(&bv, |x, y| x * y);
        self.record(out, &[a, b], move || {
            Box::new(move |g, need| {
                vec![
                    need[0].then(|| g.zip_map(&bv, |x, y| x * y)),
                    need[1].then(|| g.zip_map(&av, |x, y| x * y)),
                ]
            })
        })
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v * s);
        self.record(out, &[a], move || Box::new(move |g, _| vec![Some(g.map(|v| v * s))]))
    }

    /// Adds `bias` (shape `[C]`) along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, NnError> {
        let c = *self.shape(x).last().unwrap();
        check(self.shape(bias) == [c], || {
            format!("bias {:?} for input {:?}", self.shape(bias), self.shape(x))
        })?;
        let mut out = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for row in out.data_mut().chunks_exact_mut(c) {
            for (o, bv) in row.iter_mut().zip(&b) {
                *o += bv;
            }
        }
        Ok(self.record(out, &[x, bias], move || {
            Box::new(move |g, need| {
                let db = need[1].then(|| {
                    let mut db = vec![0.0; c];
                    for row in g.data().chunks_exact(c) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    Tensor::new(vec![c], db).unwrap()
                });
                vec![Some(g.clone()), db]
            })
        }))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let shape = self.shape(a).to_vec();
        let out = Tensor::scalar(self.value(a).sum());
        self.record(out, &[a], move || {
            Box::new(move |g, _| vec![Some(Tensor::full(shape.clone(), g.item()))])
        })
    }

    /// Mean squared difference over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.value(a).same_shape(self.value(b), "mse")?;
        let diff = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let n = diff.len() as f64;
        let out = Tensor::scalar(diff.dot(&diff) / n);
        Ok(self.record(out, &[a, b], move || {
            Box::new(move |g, need| {
                let k = 2.0 * g.item() / n;
                vec![
                    need[0].then(|| diff.map(|d| k * d)),
                    need[1].then(|| diff.map(|d| -k * d)),
                ]
            })
        }))
    }

    /// `Σ wᵢ·sᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let mut total = 0.0;
        for &(v, w) in terms {
            total += w * self.value(v).item();
        }
        let inputs: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let weights: Vec<f64> = terms.iter().map(|t| t.1).collect();
        self.record(Tensor::scalar(total), &inputs, move || {
            Box::new(move |g, _| {
                weights
                    .iter()
                    .map(|w| Some(Tensor::scalar(w * g.item())))
                    .collect()
            })
        })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let saved = self.will_record(&[a]).then(|| out.clone());
        self.record(out, &[a], move || {
            let saved = saved.unwrap();
            Box::new(move |g, _| vec![Some(g.zip_map(&saved, |x, y| x * y))])
        })
    }

    /// Exponential linear unit with alpha 1.
    pub fn elu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        let saved = self.will_record(&[a]).then(|| out.clone());
        self.record(out, &[a], move || {
            let saved = saved.unwrap();
            Box::new(move |g, _| {
                // d/dx = 1 above zero, exp(x) = elu(x) + 1 below
                vec![Some(g.zip_map(&saved, |gv, y| if y > 0.0 { gv } else { gv * (y + 1.0) }))]
            })
        })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let saved = self.will_record(&[a]).then(|| out.clone());
        self.record(out, &[a], move || {
            let saved = saved.unwrap();
            Box::new(move |g, _| vec![Some(g.zip_map(&saved, |gv, y| if y > 0.0 { gv } else { 0.0 }))])
        })
    }

    /// `[M×K] · [K×N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        check(sa.len() == 2 && sb.len() == 2 && sa[1] == sb[0], || {
            format!("matmul {sa:?} x {sb:?}")
        })?;
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            MatRef::rows(self.value(a).data(), 0, k),
            MatRef::rows(self.value(b).data(), 0, n),
            0.0,
            MatMut::rows(&mut out, 0, n),
        );
        let out = Tensor::new(vec![m, n], out)?;
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let need_a = self.requires_grad(a);
        let need_b = self.requires_grad(b);
        Ok(self.record(out, &[a, b], move || {
            // only keep what the backward rule reads
            let av = need_b.then_some(av);
            let bv = need_a.then_some(bv);
            Box::new(move |g, need| {
                let da = need[0].then(|| {
                    let mut da = vec![0.0; m * k];
                    gemm(
                        m,
                        n,
                        k,
                        MatRef::rows(g.data(), 0, n),
                        MatRef::transposed(bv.as_ref().unwrap().data(), 0, n),
                        0.0,
                        MatMut::rows(&mut da, 0, k),
                    );
                    Tensor::new(vec![m, k], da).unwrap()
                });
                let db = need[1].then(|| {
                    let mut db = vec![0.0; k * n];
                    gemm(
                        k,
                        m,
                        n,
                        MatRef::transposed(av.as_ref().unwrap().data(), 0, k),
                        MatRef::rows(g.data(), 0, n),
                        0.0,
                        MatMut::rows(&mut db, 0, n),
                    );
                    Tensor::new(vec![k, n], db).unwrap()
                });
                vec![da, db]
            })
        }))
    }

    /// `x · W + b` for `x` of shape `[T×Din]` or `[Din]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let xs = self.shape(x).to_vec();
        if xs.len() == 1 {
            let x2 = self.reshape(x, vec![1, xs[0]])?;
            let y = self.linear(x2, w, b)?;
            let dout = self.shape(y)[1];
            return self.reshape(y, vec![dout]);
        }
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, NnError> {
        let old = self.shape(a).to_vec();
        let out = self.value(a).clone().reshape(shape)?;
        Ok(self.record(out, &[a], move || {
            Box::new(move |g, _| vec![Some(g.clone().reshape(old.clone()).unwrap())])
        }))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&mut self, a: Var) -> Result<Var, NnError> {
        let s = self.shape(a).to_vec();
        check(s.len() == 2, || format!("transpose of {s:?}"))?;
        let out = transpose2(self.value(a), s[0], s[1]);
        Ok(self.record(out, &[a], move || {
            Box::new(move |g, _| vec![Some(transpose2(g, s[1], s[0]))])
        }))
    }

    /// Concatenates along the last axis; leading axes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = self.shape(parts[0]).to_vec();
        let lead = &first[..first.len() - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            check(s.len() == first.len() && &s[..s.len() - 1] == lead, || {
                format!("concat {:?} with {:?}", first, s)
            })?;
            widths.push(*s.last().unwrap());
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let out = Tensor::new(shape, out)?;
        let shapes: Vec<Vec<usize>> = parts.iter().map(|&p| self.shape(p).to_vec()).collect();
        Ok(self.record(out, parts, move || {
            Box::new(move |g, need| {
                let mut offset = 0;
                let mut grads = Vec::with_capacity(widths.len());
                for (i, &w) in widths.iter().enumerate() {
                    grads.push(need[i].then(|| {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            let start = r * total + offset;
                            d.extend_from_slice(&g.data()[start..start + w]);
                        }
                        Tensor::new(shapes[i].clone(), d).unwrap()
                    }));
                    offset += w;
                }
                grads
            })
        }))
    }

    /// Zero-pads the first two axes of a rank-3 tensor.
    pub fn pad3(&mut self, a: Var, t: (usize, usize), f: (usize, usize)) -> Result<Var, NnError> {
        let s = self.shape(a).to_vec();
        check(s.len() == 3, || format!("pad3 of {s:?}"))?;
        let out_shape = vec![s[0] + t.0 + t.1, s[1] + f.0 + f.1, s[2]];
        let out = embed3(self.value(a), &out_shape, t.0, f.0);
        Ok(self.record(out, &[a], move || {
            Box::new(move |g, _| vec![Some(extract3(g, t.0, s[0], f.0, s[1]))])
        }))
    }

    /// Window `[t0, t0+tl) × [f0, f0+fl)` of the first two axes of a rank-3
    /// tensor.
    pub fn crop3(&mut self, a: Var, t0: usize, tl: usize, f0: usize, fl: usize) -> Result<Var, NnError> {
        let s = self.shape(a).to_vec();
        check(s.len() == 3 && t0 + tl <= s[0] && f0 + fl <= s[1], || {
            format!("crop [{t0}+{tl}, {f0}+{fl}] of {s:?}")
        })?;
        let out = extract3(self.value(a), t0, tl, f0, fl);
        Ok(self.record(out, &[a], move || {
            Box::new(move |g, _| vec![Some(embed3(g, &s, t0, f0))])
        }))
    }
}

pub(crate) fn transpose2(t: &Tensor, rows: usize, cols: usize) -> Tensor {
    let d = t.data();
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = d[r * cols + c];
        }
    }
    Tensor::new(vec![cols, rows], out).unwrap()
}

/// Places `src` into a zero tensor of `shape` at offset `(t0, f0)`.
fn embed3(src: &Tensor, shape: &[usize], t0: usize, f0: usize) -> Tensor {
    let s = src.shape();
    let (f_out, c) = (shape[1], shape[2]);
    let mut out = Tensor::zeros(shape.to_vec());
    let od = out.data_mut();
    for t in 0..s[0] {
        let src_row = &src.data()[t * s[1] * c..(t + 1) * s[1] * c];
        let start = ((t + t0) * f_out + f0) * c;
        od[start..start + s[1] * c].copy_from_slice(src_row);
    }
    out
}

fn extract3(src: &Tensor, t0: usize, tl: usize, f0: usize, fl: usize) -> Tensor {
    let s = src.shape();
    let c = s[2];
    let mut out = Vec::with_capacity(tl * fl * c);
    for t in t0..t0 + tl {
        let start = (t * s[1] + f0) * c;
        out.extend_from_slice(&src.data()[start..start + fl * c]);
    }
    Tensor::new(vec![tl, fl, c], out).unwrap()
}
