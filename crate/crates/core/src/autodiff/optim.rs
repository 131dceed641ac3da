use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    #[serde(default = "RmsPropConfig::default_decay")]
    pub decay: f64,
    #[serde(default = "RmsPropConfig::default_epsilon")]
    pub epsilon: f64,
}

impl RmsPropConfig {
    fn default_decay() -> f64 {
        0.9
    }

    fn default_epsilon() -> f64 {
        1e-8
    }

    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            decay: Self::default_decay(),
            epsilon: Self::default_epsilon(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "decay must lie in (0, 1), got {}",
                self.decay
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Plain (uncentered) RMSProp.
///
/// `acc <- decay * acc + (1 - decay) * g^2`, `p <- p - lr * g / (sqrt(acc) + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub config: RmsPropConfig,
    pub accumulators: Vec<Tensor>,
}

impl RmsPropState {
    pub fn new(config: RmsPropConfig, params: &[Parameter]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            accumulators: params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect(),
        })
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [Parameter], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.accumulators.len() {
            return Err(Error::Dimension {
                what: "rmsprop parameter count",
                expected: self.accumulators.len(),
                actual: grads.len().min(params.len()),
            });
        }
        for ((p, g), acc) in params.iter().zip(grads).zip(&self.accumulators) {
            if p.value.shape() != g.shape() || acc.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "rmsprop_step",
                    lhs: p.value.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient(p.name.clone()));
            }
        }
        let RmsPropConfig {
            learning_rate,
            decay,
            epsilon,
        } = self.config;
        for ((p, g), acc) in params.iter_mut().zip(grads).zip(&mut self.accumulators) {
            for ((w, &gi), a) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(acc.data_mut())
            {
                *a = decay * *a + (1.0 - decay) * gi * gi;
                *w -= learning_rate * gi / (a.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Vec<Parameter> {
        vec![Parameter {
            name: "w".into(),
            value: Tensor::vector(vec![v]),
        }]
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![Parameter {
            name: "w".into(),
            value: Tensor::vector(vec![1.0, -2.0, 3.0]),
        }];
        let before = params.clone();
        let mut st = RmsPropState::new(RmsPropConfig::with_learning_rate(1e-3), &params).unwrap();
        st.step(&mut params, &[Tensor::zeros(&[3])]).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let mut params = scalar_param(0.0);
        let cfg = RmsPropConfig {
            learning_rate: 1e-6,
            decay: 0.9,
            epsilon: 1e-8,
        };
        let mut st = RmsPropState::new(cfg, &params).unwrap();
        st.step(&mut params, &[Tensor::vector(vec![1.0])]).unwrap();
        let expected = -1e-6 / (0.1f64.sqrt() + 1e-8);
        assert!((params[0].value.item() - expected).abs() < 1e-20);
        assert!((st.accumulators[0].item() - 0.1).abs() < 1e-16);
    }

    #[test]
    fn repeated_unit_steps_shrink_toward_learning_rate() {
        // acc_t = 1 - 0.9^t, so |step_t| = lr / (sqrt(1 - 0.9^t) + eps).
        let lr = 1e-6;
        let mut params = scalar_param(0.0);
        let mut st = RmsPropState::new(RmsPropConfig::with_learning_rate(lr), &params).unwrap();
        let mut prev_pos = 0.0;
        let mut prev_mag = f64::INFINITY;
        for t in 1..=200 {
            st.step(&mut params, &[Tensor::vector(vec![1.0])]).unwrap();
            let pos = params[0].value.item();
            let mag = prev_pos - pos;
            let closed = lr / ((1.0 - 0.9f64.powi(t)).sqrt() + 1e-8);
            assert!((mag - closed).abs() < 1e-18, "t={t}");
            assert!(mag < prev_mag && mag > lr * (1.0 - 1e-7));
            prev_mag = mag;
            prev_pos = pos;
        }
        assert!((prev_mag - lr).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut params = scalar_param(0.0);
        let mut st = RmsPropState::new(RmsPropConfig::with_learning_rate(1e-3), &params).unwrap();
        let err = st
            .step(&mut params, &[Tensor::vector(vec![f64::NAN])])
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "w"));
        assert_eq!(params[0].value.item(), 0.0);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(RmsPropConfig::with_learning_rate(0.0).validate().is_err());
        let mut c = RmsPropConfig::with_learning_rate(1e-3);
        c.decay = 1.0;
        assert!(c.validate().is_err());
    }
}
