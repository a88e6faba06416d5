//! Clustering accuracy under the best injective cluster-to-class mapping.

use super::hungarian::hungarian;
use crate::ahc::ClusterAssignment;
use crate::error::{Error, Result};
use crate::synthdata::Corpus;

/// Counts of (predicted cluster, true class) pairs over densified labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    n: u64,
}

impl ConfusionMatrix {
    pub fn new(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimMismatch {
                expected: truth.len(),
                got: predicted.len(),
            });
        }
        if truth.is_empty() {
            return Err(Error::Invalid("accuracy of an empty labeling".into()));
        }
        let t = ClusterAssignment::from_raw(truth);
        let p = ClusterAssignment::from_raw(predicted);
        let mut counts = vec![vec![0u64; t.k()]; p.k()];
        for (&pi, &ti) in p.labels().iter().zip(t.labels()) {
            counts[pi][ti] += 1;
        }
        Ok(Self {
            counts,
            n: truth.len() as u64,
        })
    }

    /// Rows are predicted clusters, columns true classes.
    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.n
    }

    /// Largest number of utterances an injective mapping can match.
    pub fn best_matched(&self) -> u64 {
        let profit: Vec<Vec<f64>> = self
            .counts
            .iter()
            .map(|r| r.iter().map(|&c| c as f64).collect())
            .collect();
        let a = hungarian(&profit).expect("non-empty count matrix");
        a.mapping
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| self.counts[i][j]))
            .sum()
    }
}

pub fn acc(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    let cm = ConfusionMatrix::new(truth, predicted)?;
    Ok(cm.best_matched() as f64 / cm.total() as f64)
}

/// ACC against the corpus speaker labels; fails when any label is missing.
pub fn corpus_acc(corpus: &Corpus, assignment: &ClusterAssignment) -> Result<f64> {
    let truth = corpus
        .speaker_labels()
        .ok_or_else(|| Error::Invalid("accuracy needs a speaker label on every utterance".into()))?;
    acc(&truth, assignment.labels())
}
