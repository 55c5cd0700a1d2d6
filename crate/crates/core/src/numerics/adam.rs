use std::collections::BTreeMap;

use crate::error::{GamcError, Result};
use crate::numerics::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Moments {
    first: Tensor2,
    second: Tensor2,
}

/// Adam with bias correction. Moment buffers are keyed by parameter name and
/// created on first use.
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update of every parameter in `params` from `grads`.
    ///
    /// Fails without touching anything if a parameter has no gradient or a
    /// gradient's shape differs from its parameter's.
    pub fn apply<'a, S: AsRef<str>>(
        &mut self,
        params: impl IntoIterator<Item = (S, &'a mut Tensor2)>,
        grads: &BTreeMap<String, Tensor2>,
    ) -> Result<()> {
        let params: Vec<(S, &mut Tensor2)> = params.into_iter().collect();
        for (name, p) in &params {
            let name = name.as_ref();
            let g = grads
                .get(name)
                .ok_or_else(|| GamcError::Contract(format!("missing gradient for parameter `{name}`")))?;
            if g.shape() != p.shape() {
                return Err(GamcError::shape("adam_step", p.shape(), g.shape()));
            }
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for (name, p) in params {
            let name = name.as_ref();
            let g = &grads[name];
            let m = self.moments.entry(name.to_string()).or_insert_with(|| Moments {
                first: Tensor2::zeros(p.rows(), p.cols()),
                second: Tensor2::zeros(p.rows(), p.cols()),
            });
            let iter = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.first.data_mut().iter_mut().zip(m.second.data_mut().iter_mut()));
            for ((w, &gi), (m1, m2)) in iter {
                *m1 = beta1 * *m1 + (1.0 - beta1) * gi;
                *m2 = beta2 * *m2 + (1.0 - beta2) * gi * gi;
                let m_hat = *m1 / bc1;
                let v_hat = *m2 / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grads(entries: &[(&str, Tensor2)]) -> BTreeMap<String, Tensor2> {
        entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut adam = AdamState::new(AdamConfig::default());
        let mut p = Tensor2::from_rows(&[[1.0, -2.0]]).unwrap();
        let before = p.clone();
        adam.apply([("w", &mut p)], &grads(&[("w", Tensor2::zeros(1, 2))])).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig::default();
        let mut adam = AdamState::new(cfg);
        let mut p = Tensor2::scalar(1.0);
        adam.apply([("p", &mut p)], &grads(&[("p", Tensor2::scalar(1.0))])).unwrap();
        let expected = 1.0 - cfg.lr * 1.0 / (1.0 + cfg.eps);
        assert!((p.item().unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut adam = AdamState::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        let mut p = Tensor2::scalar(0.0);
        for _ in 0..200 {
            let g = 2.0 * (p.item().unwrap() - 3.0);
            adam.apply([("p", &mut p)], &grads(&[("p", Tensor2::scalar(g))])).unwrap();
        }
        assert!((p.item().unwrap() - 3.0).abs() < 1e-2, "{}", p.item().unwrap());
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let mut adam = AdamState::new(AdamConfig::default());
        let mut p = Tensor2::scalar(1.0);
        let err = adam.apply([("p", &mut p)], &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, GamcError::Contract(_)));
        assert_eq!(adam.step_count(), 0);
    }
}
