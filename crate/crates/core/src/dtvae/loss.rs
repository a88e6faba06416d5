//! Reconstruction loss, mutual-information loss and their sum, built on the
//! autodiff graph so the same code yields values and gradients.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{Gumbel, StandardNormal};

use super::net::{Dims, DtvaeParams, NetNodes};
use crate::error::{Error, Result};
use crate::ndgrad::{Graph, NodeId, Tensor};

/// Per-batch random draws. Everything stochastic in the losses comes from
/// here, so fixing the noise makes the losses deterministic functions of
/// the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    /// `[B, L]` standard normal, reparameterizes encoder `z`.
    pub eps_z: Tensor,
    /// `[B, M]` Gumbel(0, 1), relaxes encoder `y`.
    pub gumbel: Tensor,
    /// `[B, M]` Gumbel draws for generated classes (uniform prior).
    pub gen_gumbel: Tensor,
    /// `[B, L]` prior draws for generated `z`.
    pub gen_z: Tensor,
    /// `[B, D]` standard normal decoder noise for generated `x`.
    pub gen_eps_x: Tensor,
}

impl Noise {
    pub fn draw(rng: &mut impl Rng, batch: usize, dims: Dims) -> Self {
        let mut normal = |cols: usize| {
            let data = (0..batch * cols).map(|_| rng.sample(StandardNormal)).collect();
            Tensor::from_parts(vec![batch, cols], data)
        };
        let eps_z = normal(dims.l);
        let gen_z = normal(dims.l);
        let gen_eps_x = normal(dims.d);
        let gumbel_dist = Gumbel::new(0.0, 1.0).expect("unit Gumbel");
        let mut gumbel = |cols: usize| {
            let data = (0..batch * cols).map(|_| rng.sample(gumbel_dist)).collect();
            Tensor::from_parts(vec![batch, cols], data)
        };
        let g1 = gumbel(dims.m);
        let g2 = gumbel(dims.m);
        Self {
            eps_z,
            gumbel: g1,
            gen_gumbel: g2,
            gen_z,
            gen_eps_x,
        }
    }

    pub fn zeros(batch: usize, dims: Dims) -> Self {
        Self {
            eps_z: Tensor::zeros(&[batch, dims.l]),
            gumbel: Tensor::zeros(&[batch, dims.m]),
            gen_gumbel: Tensor::zeros(&[batch, dims.m]),
            gen_z: Tensor::zeros(&[batch, dims.l]),
            gen_eps_x: Tensor::zeros(&[batch, dims.d]),
        }
    }

    fn check(&self, batch: usize, dims: Dims) -> Result<()> {
        let expect = [
            (&self.eps_z, dims.l),
            (&self.gumbel, dims.m),
            (&self.gen_gumbel, dims.m),
            (&self.gen_z, dims.l),
            (&self.gen_eps_x, dims.d),
        ];
        for (t, cols) in expect {
            if t.shape() != [batch, cols] {
                return Err(Error::ShapeMismatch {
                    op: "noise",
                    lhs: vec![batch, cols],
                    rhs: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

/// Which part of the total loss to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Reconstruction,
    MutualInformation,
    Total,
}

/// Batch means of the loss components; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub categorical_kl: f64,
    pub gaussian_kl: f64,
    pub nll: f64,
    pub mi: f64,
    pub total: f64,
}

pub(crate) struct LossGraph {
    pub graph: Graph,
    pub loss: NodeId,
    pub params: Vec<NodeId>,
    pub breakdown: LossBreakdown,
}

/// `log[2q / (q + p)]` from log densities, computed as `ln 2 - softplus(log p - log q)`.
pub fn discriminator(log_q: f64, log_p: f64) -> f64 {
    let t = log_p - log_q;
    LN_2 - (t.max(0.0) + (-t.abs()).exp().ln_1p())
}

fn tag<T>(term: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite { .. } => Error::NonFiniteLoss { term },
        other => other,
    })
}

/// Per-row `log N(x; mu, diag exp(lv))` as a `[B, 1]` node.
fn log_normal(g: &mut Graph, x: NodeId, mu: NodeId, lv: NodeId) -> Result<NodeId> {
    let diff = g.sub(x, mu)?;
    let sq = g.square(diff)?;
    let neg_lv = g.scale(lv, -1.0)?;
    let prec = g.exp(neg_lv)?;
    let maha = g.mul(sq, prec)?;
    let t = g.add(maha, lv)?;
    let t = g.offset(t, (2.0 * PI).ln())?;
    let s = g.row_sum(t)?;
    g.scale(s, -0.5)
}

/// Per-row `log q(z, y | x)`: Gaussian density of `z` plus `y`-weighted class log-posterior.
fn log_q(g: &mut Graph, z: NodeId, y: NodeId, mu: NodeId, lv: NodeId, logits: NodeId) -> Result<NodeId> {
    let lz = log_normal(g, z, mu, lv)?;
    let lsm = g.log_softmax(logits)?;
    let wy = g.mul(y, lsm)?;
    let ly = g.row_sum(wy)?;
    g.add(lz, ly)
}

/// Per-row discriminator node `ln 2 - softplus(log p - log q)`.
fn disc(g: &mut Graph, log_q: NodeId, log_p: NodeId) -> Result<NodeId> {
    let t = g.sub(log_p, log_q)?;
    let sp = g.softplus(t)?;
    let neg = g.scale(sp, -1.0)?;
    g.offset(neg, LN_2)
}

fn scalar(g: &Graph, id: NodeId) -> f64 {
    g.value(id).item()
}

/// Builds the requested loss for a batch of model-space rows.
pub(crate) fn build_loss(
    p: &DtvaeParams,
    x: Tensor,
    noise: &Noise,
    objective: Objective,
    trainable: bool,
) -> Result<LossGraph> {
    let dims = p.dims;
    let batch = x.rows();
    if batch == 0 {
        return Err(Error::Invalid("loss over an empty batch".into()));
    }
    if x.cols() != dims.d {
        return Err(Error::DimMismatch {
            expected: dims.d,
            got: x.cols(),
        });
    }
    noise.check(batch, dims)?;
    let mut g = Graph::new();
    let net = NetNodes::load(&mut g, p, trainable);
    let x = g.constant(x);
    let inv_tau = 1.0 / p.tau;

    let (mu, lv, logits) = tag("encoder", net.encoder(&mut g, x))?;
    let (z, y) = tag("sample", (|| {
        let eps = g.constant(noise.eps_z.clone());
        let half = g.scale(lv, 0.5)?;
        let sd = g.exp(half)?;
        let shift = g.mul(sd, eps)?;
        let z = g.add(mu, shift)?;
        let gum = g.constant(noise.gumbel.clone());
        let a = g.add(logits, gum)?;
        let a = g.scale(a, inv_tau)?;
        let y = g.softmax(a)?;
        Ok((z, y))
    })())?;
    let (mux, lvx) = tag("decoder", net.decoder(&mut g, z, y))?;
    let log_p_enc = tag("nll", log_normal(&mut g, x, mux, lvx))?;

    let mut breakdown = LossBreakdown::default();
    let mut terms: Vec<NodeId> = Vec::new();

    if objective != Objective::MutualInformation {
        let cat = tag("categorical_kl", (|| {
            let q = g.softmax(logits)?;
            let lq = g.log_softmax(logits)?;
            let lqm = g.offset(lq, (dims.m as f64).ln())?;
            let t = g.mul(q, lqm)?;
            let s = g.row_sum(t)?;
            g.mean(s)
        })())?;
        let gauss = tag("gaussian_kl", (|| {
            let e = g.exp(lv)?;
            let m2 = g.square(mu)?;
            let t = g.add(e, m2)?;
            let t = g.sub(t, lv)?;
            let t = g.offset(t, -1.0)?;
            let s = g.row_sum(t)?;
            let s = g.scale(s, 0.5)?;
            g.mean(s)
        })())?;
        let nll = tag("nll", (|| {
            let m = g.mean(log_p_enc)?;
            g.scale(m, -1.0)
        })())?;
        breakdown.categorical_kl = scalar(&g, cat);
        breakdown.gaussian_kl = scalar(&g, gauss);
        breakdown.nll = scalar(&g, nll);
        terms.extend([cat, gauss, nll]);
    }

    if objective != Objective::Reconstruction && p.beta > 0.0 {
        let mi = tag("mi", (|| {
            // Encoder side: samples already drawn above.
            let lq_enc = log_q(&mut g, z, y, mu, lv, logits)?;
            let d_enc = disc(&mut g, lq_enc, log_p_enc)?;

            // Generative side: y from the uniform prior, z from N(0, I), x from the decoder.
            let gg = g.constant(noise.gen_gumbel.clone());
            let gg = g.scale(gg, inv_tau)?;
            let y_g = g.softmax(gg)?;
            let z_g = g.constant(noise.gen_z.clone());
            let (mux_g, lvx_g) = net.decoder(&mut g, z_g, y_g)?;
            let half = g.scale(lvx_g, 0.5)?;
            let sd = g.exp(half)?;
            let eps = g.constant(noise.gen_eps_x.clone());
            let shift = g.mul(sd, eps)?;
            let x_g = g.add(mux_g, shift)?;
            let (mu_g, lv_g, logits_g) = net.encoder(&mut g, x_g)?;
            let lq_gen = log_q(&mut g, z_g, y_g, mu_g, lv_g, logits_g)?;
            let lp_gen = log_normal(&mut g, x_g, mux_g, lvx_g)?;
            let d_gen = disc(&mut g, lq_gen, lp_gen)?;

            // -log sigma(D) = softplus(-D); -log(1 - sigma(D)) = softplus(D).
            let neg = g.scale(d_gen, -1.0)?;
            let a = g.softplus(neg)?;
            let a = g.mean(a)?;
            let b = g.softplus(d_enc)?;
            let b = g.mean(b)?;
            let s = g.add(a, b)?;
            g.scale(s, p.beta)
        })())?;
        breakdown.mi = scalar(&g, mi);
        terms.push(mi);
    }

    let loss = match terms.as_slice() {
        [] => g.constant(Tensor::scalar(0.0)),
        [first, rest @ ..] => {
            let mut acc = *first;
            for t in rest {
                acc = g.add(acc, *t)?;
            }
            acc
        }
    };
    breakdown.total = scalar(&g, loss);
    let params = net.ids;
    Ok(LossGraph {
        graph: g,
        loss,
        params,
        breakdown,
    })
}

/// Loss value and breakdown for raw input rows under fixed noise.
pub fn evaluate_loss(p: &DtvaeParams, rows: &[&[f64]], noise: &Noise, objective: Objective) -> Result<LossBreakdown> {
    let x = p.standardize(rows)?;
    Ok(build_loss(p, x, noise, objective, false)?.breakdown)
}

/// Loss value and its gradient with respect to every parameter tensor, in storage order.
pub fn loss_gradients(
    p: &DtvaeParams,
    rows: &[&[f64]],
    noise: &Noise,
    objective: Objective,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let x = p.standardize(rows)?;
    let lg = build_loss(p, x, noise, objective, true)?;
    let grads = lg.graph.backward(lg.loss)?;
    Ok((lg.breakdown, lg.params.iter().map(|&id| grads.get(id)).collect()))
}

pub fn loss_reconstruction(p: &DtvaeParams, rows: &[&[f64]], noise: &Noise) -> Result<f64> {
    Ok(evaluate_loss(p, rows, noise, Objective::Reconstruction)?.total)
}

pub fn loss_mi(p: &DtvaeParams, rows: &[&[f64]], noise: &Noise) -> Result<f64> {
    Ok(evaluate_loss(p, rows, noise, Objective::MutualInformation)?.total)
}

pub fn total_loss(p: &DtvaeParams, rows: &[&[f64]], noise: &Noise) -> Result<LossBreakdown> {
    evaluate_loss(p, rows, noise, Objective::Total)
}
