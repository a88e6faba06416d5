use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment accumulators for an ordered parameter list.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Param]) -> Self {
        Self {
            config,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Gradients are validated before any
    /// parameter is touched, so a failed step leaves `params` unchanged.
    pub fn step(&mut self, params: &mut [Param], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Invalid(format!(
                "adam: {} params, {} grads, {} accumulators",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.value.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.value.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient {
                    param: p.name.clone(),
                });
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((w, &gi), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(values: &[f64]) -> Vec<Param> {
        vec![Param::new("w", Tensor::vector(values).unwrap())]
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = one_param(&[0.5, -1.5]);
        let mut adam = AdamState::new(AdamConfig::default(), &params);
        for _ in 0..5 {
            adam.step(&mut params, &[Tensor::zeros(&[2])]).unwrap();
        }
        assert_eq!(params[0].value.data(), &[0.5, -1.5]);
        assert_eq!(adam.steps(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = 1, v_hat = 1 after bias correction, so the step is lr / (1 + eps).
        let mut params = one_param(&[0.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &params);
        adam.step(&mut params, &[Tensor::vector(&[1.0]).unwrap()]).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((params[0].value.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_step_approaches_learning_rate() {
        let mut params = one_param(&[0.0]);
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..Default::default()
        };
        let mut adam = AdamState::new(cfg, &params);
        let g = Tensor::vector(&[-3.0]).unwrap();
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..2000 {
            adam.step(&mut params, std::slice::from_ref(&g)).unwrap();
            let now = params[0].value.data()[0];
            last_step = now - prev;
            prev = now;
        }
        assert!((last_step - 0.01).abs() < 1e-9, "step {last_step}");
    }

    #[test]
    fn non_finite_gradient_names_param() {
        let mut params = one_param(&[1.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &params);
        let bad = Tensor::from_parts(vec![1], vec![f64::NAN]);
        match adam.step(&mut params, &[bad]) {
            Err(Error::NonFiniteGradient { param }) => assert_eq!(param, "w"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(params[0].value.data(), &[1.0]);
        assert_eq!(adam.steps(), 0);
    }
}
