use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for a fixed list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = params
            .into_iter()
            .map(|p| (Tensor::zeros(p.shape().to_vec()), Tensor::zeros(p.shape().to_vec())))
            .unzip();
        Self {
            config,
            step: 0,
            m,
            v,
        }
    }

    /// One bias-corrected Adam update. The step counter is incremented
    /// before the update, so the first call uses t = 1.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::ShapeMismatch(format!(
                "adam: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            p.same_shape(g, "adam grad")?;
            p.same_shape(m, "adam moment")?;
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for (i, &gi) in g.data().iter().enumerate() {
                md[i] = beta1 * md[i] + (1.0 - beta1) * gi;
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * gi * gi;
                let m_hat = md[i] / c1;
                let v_hat = vd[i] / c2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_magnitude() {
        let mut p = Tensor::full(vec![3], 2.0);
        let g = Tensor::full(vec![3], 1.0);
        let mut s = AdamState::new(AdamConfig::with_lr(0.01), [&p]);
        s.step(&mut [&mut p], &[&g]).unwrap();
        let expected = 2.0 - 0.01 / (1.0 + 1e-8);
        for v in p.data() {
            assert!((v - expected).abs() < 1e-15);
        }
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = Tensor::from_fn(vec![4], |i| i as f64 - 1.5);
        let before = p.clone();
        let g = Tensor::zeros(vec![4]);
        let mut s = AdamState::new(AdamConfig::with_lr(0.1), [&p]);
        s.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn quadratic_descends() {
        // f(θ) = θ², θ0 = 1, lr 0.1. Momentum carries θ across the minimum at
        // step 12, so |θ| is monotone only on the approach.
        let mut theta = Tensor::scalar(1.0);
        let mut s = AdamState::new(AdamConfig::with_lr(0.1), [&theta]);
        let mut prev = 1.0f64;
        let mut crossed = false;
        for _ in 0..50 {
            let g = Tensor::scalar(2.0 * theta.item());
            s.step(&mut [&mut theta], &[&g]).unwrap();
            crossed |= theta.item() < 0.0;
            if !crossed {
                assert!(theta.item().abs() < prev);
            }
            prev = theta.item().abs();
        }
        assert!(crossed);
        assert!(theta.item().abs() < 0.1, "{}", theta.item());
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Tensor::zeros(vec![2]);
        let g = Tensor::zeros(vec![3]);
        let mut s = AdamState::new(AdamConfig::default(), [&p]);
        assert!(s.step(&mut [&mut p], &[&g]).is_err());
    }
}
