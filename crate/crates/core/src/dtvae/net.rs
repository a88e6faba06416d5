//! Parameters, encoder/decoder graph construction and the pure
//! single-utterance operations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Activation, DtvaeConfig};
use crate::error::{Error, Result};
use crate::ndgrad::{Graph, NodeId, Param, Tensor};

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub d: usize,
    pub h: usize,
    pub l: usize,
    pub m: usize,
}

pub(crate) const ENC_W1: usize = 0;
pub(crate) const DEC_W1: usize = 8;

/// Tensor names in storage order.
pub const PARAM_NAMES: [&str; 14] = [
    "enc_w1", "enc_b1", "enc_w_mu", "enc_b_mu", "enc_w_lv", "enc_b_lv", "enc_w_y", "enc_b_y", "dec_w1", "dec_b1",
    "dec_w_mu", "dec_b_mu", "dec_w_lv", "dec_b_lv",
];

impl Dims {
    /// `(rows, cols)` of each tensor in storage order.
    pub fn shapes(&self) -> [(usize, usize); 14] {
        let Dims { d, h, l, m } = *self;
        [
            (d, h),
            (1, h),
            (h, l),
            (1, l),
            (h, l),
            (1, l),
            (h, m),
            (1, m),
            (l + m, h),
            (1, h),
            (h, d),
            (1, d),
            (h, d),
            (1, d),
        ]
    }
}

/// Trained or initialized network, with the input standardization it was
/// trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct DtvaeParams {
    pub dims: Dims,
    pub activation: Activation,
    pub tau: f64,
    pub beta: f64,
    tensors: Vec<Param>,
    std_mean: Vec<f64>,
    std_scale: Vec<f64>,
}

/// Odd storage slots hold biases, kept as 1-D rows.
fn tensor_shape(index: usize, rows: usize, cols: usize) -> Vec<usize> {
    if index % 2 == 1 {
        vec![cols]
    } else {
        vec![rows, cols]
    }
}

impl DtvaeParams {
    /// Weights uniform in `±1/sqrt(fan_in)` (the class head additionally
    /// scaled by `class_init_gain`), zero biases, identity standardization.
    pub fn init(config: &DtvaeConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let dims = Dims {
            d: config.input_dim,
            h: config.hidden_dim,
            l: config.latent_dim,
            m: config.num_classes,
        };
        let tensors = dims
            .shapes()
            .iter()
            .zip(PARAM_NAMES)
            .enumerate()
            .map(|(i, (&(r, c), name))| {
                let data = if i % 2 == 1 {
                    vec![0.0; c]
                } else {
                    let mut bound = 1.0 / (r as f64).sqrt();
                    if i == ENC_W1 + 6 {
                        bound *= config.class_init_gain;
                    }
                    (0..r * c).map(|_| rng.random_range(-bound..bound)).collect()
                };
                Param::new(name, Tensor::from_parts(tensor_shape(i, r, c), data))
            })
            .collect();
        Ok(Self {
            dims,
            activation: config.activation,
            tau: config.tau,
            beta: config.beta,
            tensors,
            std_mean: vec![0.0; dims.d],
            std_scale: vec![1.0; dims.d],
        })
    }

    /// All-zero network, mainly for testing.
    pub fn zeros(config: &DtvaeConfig) -> Result<Self> {
        let mut p = Self::init(config, &mut ChaCha8Rng::seed_from_u64(0))?;
        for t in &mut p.tensors {
            t.value = Tensor::zeros(t.value.shape());
        }
        Ok(p)
    }

    pub(crate) fn from_parts(
        dims: Dims,
        activation: Activation,
        tau: f64,
        beta: f64,
        tensors: Vec<Param>,
        std_mean: Vec<f64>,
        std_scale: Vec<f64>,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau <= 5.0) || !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("invalid tau {tau} or beta {beta}")));
        }
        let mut p = Self {
            dims,
            activation,
            tau,
            beta,
            tensors: Vec::new(),
            std_mean: vec![0.0; dims.d],
            std_scale: vec![1.0; dims.d],
        };
        p.set_standardization(std_mean, std_scale)?;
        if tensors.len() != PARAM_NAMES.len() {
            return Err(Error::Invalid(format!("expected {} tensors, got {}", PARAM_NAMES.len(), tensors.len())));
        }
        p.tensors = tensors;
        for (i, t) in p.tensors.clone().into_iter().enumerate() {
            p.set_tensor(i, t.value)?;
        }
        Ok(p)
    }

    pub fn tensors(&self) -> &[Param] {
        &self.tensors
    }

    /// Replaces tensor `index`; the shape must match.
    pub fn set_tensor(&mut self, index: usize, value: Tensor) -> Result<()> {
        if index >= PARAM_NAMES.len() {
            return Err(Error::Invalid(format!("no tensor at index {index}")));
        }
        let (r, c) = self.dims.shapes()[index];
        let shape = tensor_shape(index, r, c);
        if value.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                op: PARAM_NAMES[index],
                lhs: shape,
                rhs: value.shape().to_vec(),
            });
        }
        self.tensors[index].value = value;
        Ok(())
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Param] {
        &mut self.tensors
    }

    pub fn std_mean(&self) -> &[f64] {
        &self.std_mean
    }

    pub fn std_scale(&self) -> &[f64] {
        &self.std_scale
    }

    pub fn set_standardization(&mut self, mean: Vec<f64>, scale: Vec<f64>) -> Result<()> {
        for v in [&mean, &scale] {
            if v.len() != self.dims.d {
                return Err(Error::DimMismatch {
                    expected: self.dims.d,
                    got: v.len(),
                });
            }
        }
        if mean.iter().any(|v| !v.is_finite()) || scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Invalid("standardization needs finite means and positive scales".into()));
        }
        self.std_mean = mean;
        self.std_scale = scale;
        Ok(())
    }

    /// Maps raw rows into the standardized model space as a `[n, D]` tensor.
    pub fn standardize(&self, rows: &[&[f64]]) -> Result<Tensor> {
        let d = self.dims.d;
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimMismatch { expected: d, got: r.len() });
            }
            data.extend(r.iter().zip(&self.std_mean).zip(&self.std_scale).map(|((x, m), s)| (x - m) / s));
        }
        Tensor::matrix(rows.len(), d, data)
    }

    /// Encoder outputs for one raw utterance.
    pub fn encode(&self, x: &[f64]) -> Result<EncoderOutput> {
        let xs = self.standardize(&[x])?;
        let mut g = Graph::new();
        let net = NetNodes::load(&mut g, self, false);
        let x = g.constant(xs);
        let (mu, lv, logits) = net.encoder(&mut g, x)?;
        Ok(EncoderOutput {
            mu_z: g.value(mu).data().to_vec(),
            logvar_z: g.value(lv).data().to_vec(),
            class_logits: g.value(logits).data().to_vec(),
        })
    }

    /// Class logits for many raw utterances, one row each.
    pub fn class_logits(&self, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let xs = self.standardize(rows)?;
        let mut g = Graph::new();
        let net = NetNodes::load(&mut g, self, false);
        let x = g.constant(xs);
        let (_, _, logits) = net.encoder(&mut g, x)?;
        let t = g.value(logits);
        Ok((0..t.rows()).map(|r| t.row(r).to_vec()).collect())
    }

    /// Decoder outputs (model space) for one `(y, z)` pair.
    pub fn decode(&self, y: &[f64], z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len(y, self.dims.m)?;
        check_len(z, self.dims.l)?;
        let mut g = Graph::new();
        let net = NetNodes::load(&mut g, self, false);
        let y = g.constant(Tensor::matrix(1, y.len(), y.to_vec())?);
        let z = g.constant(Tensor::matrix(1, z.len(), z.to_vec())?);
        let (mu, lv) = net.decoder(&mut g, z, y)?;
        Ok((g.value(mu).data().to_vec(), g.value(lv).data().to_vec()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub mu_z: Vec<f64>,
    pub logvar_z: Vec<f64>,
    pub class_logits: Vec<f64>,
}

/// One latent draw for an utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub mu_z: Vec<f64>,
    pub logvar_z: Vec<f64>,
    pub class_logits: Vec<f64>,
}

impl LatentSample {
    pub fn draw(enc: EncoderOutput, eps: &[f64], gumbel: &[f64], tau: f64) -> Result<Self> {
        let z = sample_z(&enc.mu_z, &enc.logvar_z, eps)?;
        let y = sample_y(&enc.class_logits, gumbel, tau)?;
        Ok(Self {
            z,
            y,
            mu_z: enc.mu_z,
            logvar_z: enc.logvar_z,
            class_logits: enc.class_logits,
        })
    }
}

fn check_len(v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimMismatch { expected, got: v.len() });
    }
    Ok(())
}

/// Reparameterized draw `mu + exp(logvar / 2) * eps`.
pub fn sample_z(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    check_len(logvar, mu.len())?;
    check_len(eps, mu.len())?;
    Ok(mu
        .iter()
        .zip(logvar)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// Gumbel-softmax relaxation `softmax((logits + gumbel) / tau)`.
pub fn sample_y(logits: &[f64], gumbel: &[f64], tau: f64) -> Result<Vec<f64>> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    check_len(gumbel, logits.len())?;
    let a: Vec<f64> = logits.iter().zip(gumbel).map(|(l, g)| (l + g) / tau).collect();
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = a.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Parameter nodes inside one graph.
pub(crate) struct NetNodes {
    pub ids: Vec<NodeId>,
    activation: Activation,
}

impl NetNodes {
    pub fn load(g: &mut Graph, p: &DtvaeParams, trainable: bool) -> Self {
        let ids = p
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    g.param(t.value.clone())
                } else {
                    g.constant(t.value.clone())
                }
            })
            .collect();
        Self {
            ids,
            activation: p.activation,
        }
    }

    fn affine(&self, g: &mut Graph, x: NodeId, w: usize) -> Result<NodeId> {
        let xw = g.matmul(x, self.ids[w])?;
        g.add(xw, self.ids[w + 1])
    }

    fn hidden(&self, g: &mut Graph, x: NodeId, w: usize) -> Result<NodeId> {
        let a = self.affine(g, x, w)?;
        match self.activation {
            Activation::Relu => g.relu(a),
            Activation::Tanh => g.tanh(a),
        }
    }

    /// `(mu_z, logvar_z, class_logits)` for a `[B, D]` model-space batch.
    pub fn encoder(&self, g: &mut Graph, x: NodeId) -> Result<(NodeId, NodeId, NodeId)> {
        let h = self.hidden(g, x, ENC_W1)?;
        let mu = self.affine(g, h, ENC_W1 + 2)?;
        let lv = self.affine(g, h, ENC_W1 + 4)?;
        let lv = g.clamp(lv, LOGVAR_MIN, LOGVAR_MAX)?;
        let logits = self.affine(g, h, ENC_W1 + 6)?;
        Ok((mu, lv, logits))
    }

    /// `(mu_x, logvar_x)` from `[B, L]` latents and `[B, M]` class vectors.
    pub fn decoder(&self, g: &mut Graph, z: NodeId, y: NodeId) -> Result<(NodeId, NodeId)> {
        let zy = g.concat(z, y)?;
        let h = self.hidden(g, zy, DEC_W1)?;
        let mu = self.affine(g, h, DEC_W1 + 2)?;
        let lv = self.affine(g, h, DEC_W1 + 4)?;
        let lv = g.clamp(lv, LOGVAR_MIN, LOGVAR_MAX)?;
        Ok((mu, lv))
    }
}
