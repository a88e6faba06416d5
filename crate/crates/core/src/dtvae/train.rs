use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::DtvaeConfig;
use super::loss::{build_loss, Noise, Objective};
use super::net::{argmax, DtvaeParams};
use crate::ahc::ClusterAssignment;
use crate::error::{Error, Result};
use crate::ndgrad::{AdamConfig, AdamState, Tensor};
use crate::synthdata::Corpus;

/// Scales below this are treated as constant dimensions and left unscaled.
const STD_FLOOR: f64 = 1e-12;

/// Per-dimension mean and (population) standard deviation.
pub fn standardization(corpus: &Corpus) -> (Vec<f64>, Vec<f64>) {
    let d = corpus.dim();
    let n = corpus.len().max(1) as f64;
    let mut mean = vec![0.0; d];
    for u in corpus.utterances() {
        for (m, x) in mean.iter_mut().zip(&u.embedding) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for u in corpus.utterances() {
        for ((v, x), m) in var.iter_mut().zip(&u.embedding).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s < STD_FLOOR {
                1.0
            } else {
                s
            }
        })
        .collect();
    (mean, scale)
}

/// Trained parameters and the mean total loss of every epoch.
#[derive(Debug, Clone)]
pub struct DtvaeTraining {
    pub params: DtvaeParams,
    pub loss_trace: Vec<f64>,
}

pub fn train(corpus: &Corpus, config: &DtvaeConfig) -> Result<DtvaeTraining> {
    train_objective(corpus, config, Objective::Total)
}

/// Training on a chosen objective. The random stream is consumed identically
/// for every objective. Restart `r` draws from stream `r` of the seed.
pub(crate) fn train_objective(corpus: &Corpus, config: &DtvaeConfig, objective: Objective) -> Result<DtvaeTraining> {
    config.validate()?;
    if corpus.dim() != config.input_dim {
        return Err(Error::DimMismatch {
            expected: config.input_dim,
            got: corpus.dim(),
        });
    }
    if corpus.is_empty() {
        return Err(Error::Invalid("cannot train on an empty corpus".into()));
    }
    let mut best: Option<DtvaeTraining> = None;
    for restart in 0..config.restarts {
        let run = train_once(corpus, config, objective, restart as u64)?;
        let last = |t: &DtvaeTraining| *t.loss_trace.last().expect("epochs > 0");
        if best.as_ref().is_none_or(|b| last(&run) < last(b)) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts > 0"))
}

fn train_once(corpus: &Corpus, config: &DtvaeConfig, objective: Objective, stream: u64) -> Result<DtvaeTraining> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let mut params = DtvaeParams::init(config, &mut rng)?;
    let (mean, scale) = standardization(corpus);
    params.set_standardization(mean, scale)?;
    let rows = corpus.embeddings();
    let all = params.standardize(&rows)?;
    let d = config.input_dim;

    let adam_config = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_config, params.tensors());
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let diverged = |_| Error::Diverged { epoch, batch: batch_idx };
            let mut data = Vec::with_capacity(chunk.len() * d);
            for &i in chunk {
                data.extend_from_slice(all.row(i));
            }
            let x = Tensor::matrix(chunk.len(), d, data)?;
            let noise = Noise::draw(&mut rng, chunk.len(), params.dims);
            let lg = build_loss(&params, x, &noise, objective, true).map_err(diverged)?;
            let loss = lg.breakdown.total;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: batch_idx });
            }
            let grads = lg.graph.backward(lg.loss).map_err(diverged)?;
            let grads: Vec<Tensor> = lg.params.iter().map(|&id| grads.get(id)).collect();
            adam.step(params.tensors_mut(), &grads).map_err(diverged)?;
            weighted += loss * chunk.len() as f64;
        }
        trace.push(weighted / corpus.len() as f64);
    }
    Ok(DtvaeTraining {
        params,
        loss_trace: trace,
    })
}

/// Per-utterance class index (argmax of the class posterior).
pub fn classify(params: &DtvaeParams, corpus: &Corpus) -> Result<Vec<usize>> {
    if corpus.dim() != params.dims.d {
        return Err(Error::DimMismatch {
            expected: params.dims.d,
            got: corpus.dim(),
        });
    }
    let logits = params.class_logits(&corpus.embeddings())?;
    Ok(logits.iter().map(|l| argmax(l)).collect())
}

/// Groups by argmax class; empty classes are dropped and the remaining
/// groups numbered in class order.
pub fn assign_groups(params: &DtvaeParams, corpus: &Corpus) -> Result<ClusterAssignment> {
    Ok(ClusterAssignment::from_raw(&classify(params, corpus)?))
}
