use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation `{other}` (expected relu or tanh)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtvaeConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    /// Number of classes, i.e. initial groups.
    pub num_classes: usize,
    /// Gumbel-softmax temperature, in `(0, 5]`.
    pub tau: f64,
    /// Weight of the mutual-information term.
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub activation: Activation,
    /// Extra scale on the class-head initialization. Larger values give
    /// informative class posteriors from the first step, so the decoder
    /// learns to rely on `y` before `z` absorbs the speaker identity.
    pub class_init_gain: f64,
    /// Independent initializations trained; the one with the lowest
    /// final-epoch loss is kept.
    pub restarts: usize,
}

impl DtvaeConfig {
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: 32,
            latent_dim: 2,
            num_classes,
            tau: 0.5,
            beta: 1.0,
            epochs: 100,
            batch_size: 16,
            learning_rate: 5e-3,
            seed: 0,
            activation: Activation::Relu,
            class_init_gain: 10.0,
            restarts: 5,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("latent_dim", self.latent_dim),
            ("num_classes", self.num_classes),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("restarts", self.restarts),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.tau > 0.0 && self.tau <= 5.0) {
            return Err(Error::Config(format!("tau must be in (0, 5], got {}", self.tau)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.class_init_gain > 0.0 && self.class_init_gain.is_finite()) {
            return Err(Error::Config(format!("class_init_gain must be positive, got {}", self.class_init_gain)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}
