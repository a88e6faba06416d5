use std::collections::{BTreeMap, HashMap};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::synthdata::Corpus;

/// Floor added to the within-speaker covariance after every M-step.
pub const WITHIN_FLOOR: f64 = 1e-8;
const MIN_WITHIN_EIGEN: f64 = 1e-10;

/// Two-covariance PLDA: `x = mu + y + e`, `y ~ N(0, B)`, `e ~ N(0, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    pub mu: DVector<f64>,
    pub between: DMatrix<f64>,
    pub within: DMatrix<f64>,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(1.0);
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Invalid(format!("{name} has non-finite entries")));
    }
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return Err(Error::Invalid(format!("{name} is not symmetric")));
    }
    Ok(())
}

pub(crate) fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

pub(crate) fn log_det(ch: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

impl PldaModel {
    pub fn new(mu: DVector<f64>, between: DMatrix<f64>, within: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if d == 0 || between.shape() != (d, d) || within.shape() != (d, d) {
            return Err(Error::Invalid(format!(
                "plda shapes: mu {d}, B {:?}, W {:?}",
                between.shape(),
                within.shape()
            )));
        }
        if !mu.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("mu has non-finite entries".into()));
        }
        check_symmetric("B", &between)?;
        check_symmetric("W", &within)?;
        let w_min = within.clone().symmetric_eigenvalues().min();
        if w_min < MIN_WITHIN_EIGEN {
            return Err(Error::Singular(format!("W smallest eigenvalue {w_min:e} below {MIN_WITHIN_EIGEN:e}")));
        }
        let b_min = between.clone().symmetric_eigenvalues().min();
        if b_min < -1e-9 * between.amax().max(1.0) {
            return Err(Error::Invalid(format!("B has negative eigenvalue {b_min:e}")));
        }
        Ok(Self { mu, between, within })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Marginal log-likelihood of a labeled corpus under the model.
    pub fn log_likelihood(&self, corpus: &Corpus) -> Result<f64> {
        let stats = SpeakerStats::collect(corpus)?;
        stats.check_dim(self.dim())?;
        stats.log_likelihood(self)
    }
}

/// Sufficient statistics of a labeled corpus grouped by speaker.
#[derive(Debug, Clone)]
pub(crate) struct SpeakerStats {
    dim: usize,
    total: usize,
    counts: Vec<usize>,
    means: Vec<DVector<f64>>,
    grand_mean: DVector<f64>,
    /// `sum_i sum_j (x_ij - xbar_i)(x_ij - xbar_i)^T`
    within_scatter: DMatrix<f64>,
}

impl SpeakerStats {
    pub(crate) fn collect(corpus: &Corpus) -> Result<Self> {
        let labels = corpus
            .speaker_labels()
            .ok_or_else(|| Error::Invalid("PLDA needs a fully labeled corpus".into()))?;
        let dim = corpus.dim();
        let speakers = labels.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0usize; speakers];
        let mut sums = vec![DVector::zeros(dim); speakers];
        let mut grand = DVector::zeros(dim);
        for (u, &s) in corpus.utterances().iter().zip(&labels) {
            let x = DVector::from_column_slice(&u.embedding);
            counts[s] += 1;
            sums[s] += &x;
            grand += &x;
        }
        let means: Vec<DVector<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| s / n as f64)
            .collect();
        let mut within_scatter = DMatrix::zeros(dim, dim);
        for (u, &s) in corpus.utterances().iter().zip(&labels) {
            let d = DVector::from_column_slice(&u.embedding) - &means[s];
            within_scatter.ger(1.0, &d, &d, 1.0);
        }
        symmetrize(&mut within_scatter);
        Ok(Self {
            dim,
            total: corpus.len(),
            grand_mean: grand / corpus.len().max(1) as f64,
            counts,
            means,
            within_scatter,
        })
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: self.dim,
            });
        }
        Ok(())
    }

    fn check_trainable(&self) -> Result<()> {
        if self.counts.len() < 2 {
            return Err(Error::Invalid(format!(
                "PLDA training needs at least 2 speakers, got {}",
                self.counts.len()
            )));
        }
        if let Some(i) = self.counts.iter().position(|&n| n < 2) {
            return Err(Error::Invalid(format!(
                "speaker #{i} has {} utterance(s); PLDA training needs at least 2",
                self.counts[i]
            )));
        }
        Ok(())
    }

    /// `sum_i log N(X_i)` using the within/mean decomposition of each
    /// speaker's stacked covariance `I (x) W + 11^T (x) B`.
    pub(crate) fn log_likelihood(&self, model: &PldaModel) -> Result<f64> {
        let d = self.dim as f64;
        let w_chol = cholesky(&model.within, "W")?;
        let w_logdet = log_det(&w_chol);
        let w_inv = w_chol.inverse();
        let within_quad = (&w_inv * &self.within_scatter).trace();

        let mut per_count: BTreeMap<usize, Cholesky<f64, Dyn>> = BTreeMap::new();
        for &n in &self.counts {
            if let std::collections::btree_map::Entry::Vacant(slot) = per_count.entry(n) {
                let m = &model.within + &model.between * n as f64;
                slot.insert(cholesky(&m, "W + nB")?);
            }
        }
        let mut ll = -0.5 * (self.total as f64 * d * (2.0 * std::f64::consts::PI).ln());
        ll -= 0.5 * (self.total - self.counts.len()) as f64 * w_logdet;
        ll -= 0.5 * within_quad;
        for (mean, &n) in self.means.iter().zip(&self.counts) {
            let ch = &per_count[&n];
            let c = mean - &model.mu;
            let solved = ch.solve(&c);
            ll -= 0.5 * (log_det(ch) + n as f64 * c.dot(&solved));
        }
        Ok(ll)
    }

    /// One EM iteration with `mu` held fixed.
    pub(crate) fn em_step(&self, model: &PldaModel) -> Result<PldaModel> {
        let dim = self.dim;
        // Posterior gain G_n = B (B + W/n)^-1 and covariance C_n = B - G_n B depend only on n.
        let mut per_count: HashMap<usize, (DMatrix<f64>, DMatrix<f64>)> = HashMap::new();
        for &n in &self.counts {
            if per_count.contains_key(&n) {
                continue;
            }
            let s = &model.between + &model.within / n as f64;
            let ch = cholesky(&s, "B + W/n")?;
            // G = B S^-1  =>  G^T = S^-1 B
            let gain = ch.solve(&model.between).transpose();
            let mut cov = &model.between - &gain * &model.between;
            symmetrize(&mut cov);
            per_count.insert(n, (gain, cov));
        }

        let mut b_acc = DMatrix::zeros(dim, dim);
        let mut w_acc = self.within_scatter.clone();
        for (mean, &n) in self.means.iter().zip(&self.counts) {
            let (gain, cov) = &per_count[&n];
            let c = mean - &model.mu;
            let m = gain * &c;
            b_acc += cov;
            b_acc.ger(1.0, &m, &m, 1.0);
            let r = &c - &m;
            w_acc += cov * n as f64;
            w_acc.ger(n as f64, &r, &r, 1.0);
        }
        let mut between = b_acc / self.counts.len() as f64;
        let mut within = w_acc / self.total as f64;
        symmetrize(&mut between);
        symmetrize(&mut within);
        for i in 0..dim {
            within[(i, i)] += WITHIN_FLOOR;
        }
        PldaModel::new(model.mu.clone(), between, within)
    }

    /// Moment initialization: grand mean, scatter of speaker means, pooled within scatter.
    pub(crate) fn initial_model(&self) -> Result<PldaModel> {
        let dim = self.dim;
        let mut between = DMatrix::zeros(dim, dim);
        for mean in &self.means {
            let c = mean - &self.grand_mean;
            between.ger(1.0 / self.means.len() as f64, &c, &c, 1.0);
        }
        symmetrize(&mut between);
        let mut within = &self.within_scatter / self.total as f64;
        for i in 0..dim {
            within[(i, i)] += WITHIN_FLOOR;
        }
        PldaModel::new(self.grand_mean.clone(), between, within)
    }
}

#[derive(Debug, Clone)]
pub struct PldaTraining {
    pub model: PldaModel,
    /// Marginal log-likelihood after each EM iteration.
    pub trace: Vec<f64>,
}

/// Trains from a moment-based initialization.
pub fn train_plda(corpus: &Corpus, iterations: usize) -> Result<PldaTraining> {
    let stats = SpeakerStats::collect(corpus)?;
    stats.check_trainable()?;
    let init = stats.initial_model()?;
    run_em(&stats, init, iterations)
}

/// Trains from explicit starting parameters (their `mu` is kept).
pub fn train_plda_from(corpus: &Corpus, init: PldaModel, iterations: usize) -> Result<PldaTraining> {
    let stats = SpeakerStats::collect(corpus)?;
    stats.check_trainable()?;
    stats.check_dim(init.dim())?;
    run_em(&stats, init, iterations)
}

fn run_em(stats: &SpeakerStats, init: PldaModel, iterations: usize) -> Result<PldaTraining> {
    if iterations == 0 {
        return Err(Error::Config("PLDA iterations must be >= 1".into()));
    }
    let mut model = init;
    let mut trace = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        model = stats.em_step(&model)?;
        trace.push(stats.log_likelihood(&model)?);
    }
    Ok(PldaTraining { model, trace })
}
