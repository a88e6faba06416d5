use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

use super::model::{cholesky, log_det, PldaModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Llr,
    PScore,
    Distance,
}

/// Symmetric `n x n` pairwise matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    values: Vec<f64>,
    kind: ScoreKind,
}

impl ScoreMatrix {
    pub fn new(n: usize, values: Vec<f64>, kind: ScoreKind) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Invalid(format!(
                "score matrix of order {n} needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("score matrix has non-finite entries".into()));
        }
        Ok(Self { n, values, kind })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Min–max maps off-diagonal LLRs onto `[0, 1]`; the diagonal becomes 1.
    /// A constant off-diagonal maps to 0.5.
    pub fn p_normalize(mut self) -> Result<ScoreMatrix> {
        if self.kind != ScoreKind::Llr {
            return Err(Error::Invalid(format!("p_normalize expects LLR scores, got {:?}", self.kind)));
        }
        let n = self.n;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            for j in (i + 1)..n {
                let s = self.values[i * n + j];
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
        let span = hi - lo;
        for i in 0..n {
            for j in 0..n {
                let v = &mut self.values[i * n + j];
                *v = if i == j {
                    1.0
                } else if span > 0.0 {
                    ((*v - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.5
                };
            }
        }
        self.kind = ScoreKind::PScore;
        Ok(self)
    }

    /// `1 - p` entrywise.
    pub fn to_distance(mut self) -> Result<ScoreMatrix> {
        if self.kind != ScoreKind::PScore {
            return Err(Error::Invalid(format!("to_distance expects p-scores, got {:?}", self.kind)));
        }
        for v in &mut self.values {
            *v = 1.0 - *v;
        }
        self.kind = ScoreKind::Distance;
        Ok(self)
    }
}

/// Precomputed closed-form LLR:
/// `llr(a, b) = a'Qa/2 + b'Qb/2 + a'Pb + k` on mean-removed vectors, with
/// `T = B + W`, `S = T - B T^-1 B`, `Q = T^-1 - S^-1`, `P = T^-1 B S^-1`,
/// `k = (log|T| - log|S|) / 2`.
///
/// The scorer counts every pair it evaluates; the counter is atomic so
/// concurrent scoring reports an exact total.
#[derive(Debug)]
pub struct PldaScorer {
    mu: DVector<f64>,
    q: DMatrix<f64>,
    p: DMatrix<f64>,
    constant: f64,
    evaluations: AtomicU64,
}

struct Prepared {
    centered: Vec<f64>,
    projected: Vec<f64>,
    self_terms: Vec<f64>,
}

impl PldaScorer {
    pub fn new(model: &PldaModel) -> Result<Self> {
        let total = &model.between + &model.within;
        let t_chol = cholesky(&total, "B + W")?;
        let t_inv = t_chol.inverse();
        let schur = &total - &model.between * &t_inv * &model.between;
        let schur = (&schur + schur.transpose()) * 0.5;
        let s_chol = cholesky(&schur, "T - B T^-1 B")?;
        let s_inv = s_chol.inverse();
        let q = &t_inv - &s_inv;
        let p = &t_inv * &model.between * &s_inv;
        Ok(Self {
            mu: model.mu.clone(),
            q: (&q + q.transpose()) * 0.5,
            p: (&p + p.transpose()) * 0.5,
            constant: 0.5 * (log_det(&t_chol) - log_det(&s_chol)),
            evaluations: AtomicU64::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Total pair evaluations performed by this scorer.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::SeqCst)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn prepare(&self, rows: &[&[f64]]) -> Result<Prepared> {
        let d = self.dim();
        let mut centered = Vec::with_capacity(rows.len() * d);
        let mut projected = Vec::with_capacity(rows.len() * d);
        let mut self_terms = Vec::with_capacity(rows.len());
        for r in rows {
            self.check(r)?;
            let e = DVector::from_iterator(d, r.iter().zip(self.mu.iter()).map(|(x, m)| x - m));
            self_terms.push(0.5 * e.dot(&(&self.q * &e)));
            projected.extend((&self.p * &e).iter());
            centered.extend(e.iter());
        }
        Ok(Prepared {
            centered,
            projected,
            self_terms,
        })
    }

    #[inline]
    fn pair(&self, prep: &Prepared, i: usize, j: usize) -> f64 {
        let d = self.dim();
        let cross: f64 = prep.centered[i * d..(i + 1) * d]
            .iter()
            .zip(&prep.projected[j * d..(j + 1) * d])
            .map(|(a, b)| a * b)
            .sum();
        prep.self_terms[i] + prep.self_terms[j] + cross + self.constant
    }

    pub fn score_pair(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        let prep = self.prepare(&[x1, x2])?;
        self.evaluations.fetch_add(1, Ordering::SeqCst);
        Ok(self.pair(&prep, 0, 1))
    }

    /// All `n(n-1)/2` pairs; the diagonal is 0.
    pub fn score_matrix(&self, rows: &[&[f64]]) -> Result<ScoreMatrix> {
        self.score_matrix_threaded(rows, 1)
    }

    /// Same result as [`Self::score_matrix`], with rows of the upper
    /// triangle split across `threads` workers.
    pub fn score_matrix_threaded(&self, rows: &[&[f64]], threads: usize) -> Result<ScoreMatrix> {
        let n = rows.len();
        let prep = self.prepare(rows)?;
        let mut values = vec![0.0; n * n];
        let threads = threads.clamp(1, n.max(1));
        if threads == 1 {
            for i in 0..n {
                self.fill_row(&prep, &mut values[i * n..(i + 1) * n], i);
            }
        } else {
            std::thread::scope(|scope| {
                let mut chunks: Vec<(usize, &mut [f64])> = values.chunks_mut(n).enumerate().collect();
                // Interleave rows so the triangular workload is balanced.
                let mut buckets: Vec<Vec<(usize, &mut [f64])>> = (0..threads).map(|_| Vec::new()).collect();
                for (k, item) in chunks.drain(..).enumerate() {
                    buckets[k % threads].push(item);
                }
                for bucket in buckets {
                    let prep = &prep;
                    scope.spawn(move || {
                        for (i, row) in bucket {
                            self.fill_row(prep, row, i);
                        }
                    });
                }
            });
        }
        for i in 0..n {
            for j in 0..i {
                values[i * n + j] = values[j * n + i];
            }
        }
        ScoreMatrix::new(n, values, ScoreKind::Llr)
    }

    fn fill_row(&self, prep: &Prepared, row: &mut [f64], i: usize) {
        let n = row.len();
        for (j, slot) in row.iter_mut().enumerate().skip(i + 1) {
            *slot = self.pair(prep, i, j);
        }
        self.evaluations
            .fetch_add((n - i - 1) as u64, Ordering::SeqCst);
    }
}

pub fn score_pair(model: &PldaModel, x1: &[f64], x2: &[f64]) -> Result<f64> {
    PldaScorer::new(model)?.score_pair(x1, x2)
}

pub fn score_matrix(model: &PldaModel, rows: &[&[f64]]) -> Result<(ScoreMatrix, u64)> {
    let scorer = PldaScorer::new(model)?;
    let m = scorer.score_matrix(rows)?;
    Ok((m, scorer.evaluations()))
}
