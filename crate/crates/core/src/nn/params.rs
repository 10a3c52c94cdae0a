use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{NnError, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Glorot { fan_in: usize, fan_out: usize },
    /// `[H × k·H]` made of `k` independent orthogonal `H × H` blocks.
    OrthogonalBlocks,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, init: Init) -> Self {
        Self {
            name: name.into(),
            shape,
            init,
        }
    }
}

/// Ordered, named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn init(specs: &[ParamSpec], rng: &mut impl Rng) -> Self {
        let named = specs
            .iter()
            .map(|s| (s.name.clone(), init_tensor(s, rng)))
            .collect();
        Self::from_named(named).expect("parameter names are unique")
    }

    pub fn from_named(named: Vec<(String, Tensor)>) -> Result<Self, NnError> {
        let mut index = HashMap::with_capacity(named.len());
        let mut names = Vec::with_capacity(named.len());
        let mut tensors = Vec::with_capacity(named.len());
        for (i, (name, t)) in named.into_iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(NnError::ShapeMismatch(format!("duplicate parameter {name}")));
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self {
            names,
            tensors,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn to_f32_precision(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::to_f32_precision).collect(),
            index: self.index.clone(),
        }
    }

    /// Places every parameter on `tape` as a trainable leaf.
    pub fn bind<'a>(&'a self, tape: &mut Tape) -> Bound<'a> {
        let vars = self.tensors.iter().map(|t| tape.param(t.clone())).collect();
        Bound { store: self, vars }
    }

    /// Wraps vars already placed on a tape, in store order.
    pub fn wrap<'a>(&'a self, vars: &[Var]) -> Bound<'a> {
        assert_eq!(vars.len(), self.tensors.len());
        Bound {
            store: self,
            vars: vars.to_vec(),
        }
    }

    /// Binds externally supplied tensors under this store's names, for
    /// perturbation-based checks.
    pub fn bind_with<'a>(&'a self, tape: &mut Tape, tensors: &[Tensor]) -> Bound<'a> {
        assert_eq!(tensors.len(), self.tensors.len());
        let vars = tensors.iter().map(|t| tape.param(t.clone())).collect();
        Bound { store: self, vars }
    }
}

/// Tape handles for a [`ParamStore`].
pub struct Bound<'a> {
    store: &'a ParamStore,
    vars: Vec<Var>,
}

impl Bound<'_> {
    /// Handle for `name`. Panics on unknown names, which are programming
    /// errors in model code.
    pub fn var(&self, name: &str) -> Var {
        match self.store.position(name) {
            Some(i) => self.vars[i],
            None => panic!("unknown parameter {name}"),
        }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

fn init_tensor(spec: &ParamSpec, rng: &mut impl Rng) -> Tensor {
    match spec.init {
        Init::Zeros => Tensor::zeros(spec.shape.clone()),
        Init::Constant(c) => Tensor::full(spec.shape.clone(), c),
        Init::Glorot { fan_in, fan_out } => {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Tensor::from_fn(spec.shape.clone(), |_| rng.gen_range(-limit..limit))
        }
        Init::OrthogonalBlocks => {
            let (h, cols) = (spec.shape[0], spec.shape[1]);
            let mut out = Tensor::zeros(spec.shape.clone());
            for block in 0..cols / h {
                let q = random_orthogonal(h, rng);
                for i in 0..h {
                    for j in 0..h {
                        out.data_mut()[i * cols + block * h + j] = q[i * h + j];
                    }
                }
            }
            out
        }
    }
}

/// Orthonormalized Gaussian matrix (modified Gram-Schmidt over rows).
pub(crate) fn random_orthogonal(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let mut m: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let d: f64 = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum();
                for k in 0..n {
                    m[i * n + k] -= d * m[j * n + k];
                }
            }
            let norm = (0..n).map(|k| m[i * n + k].powi(2)).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for k in 0..n {
                m[i * n + k] /= norm;
            }
        }
        if ok {
            return m;
        }
    }
}
