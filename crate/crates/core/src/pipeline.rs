//! End-to-end clustering paths and pairwise-cost accounting.
//!
//! * baseline: full PLDA score matrix, p-normalization, AHC.
//! * DTVAE fixed K: the argmax groups are the clusters; no scoring.
//! * DTVAE open K: PLDA scoring and AHC run inside each DTVAE group only.

use std::fmt;
use std::time::Instant;

use crate::ahc::{ahc_cluster, ClusterAssignment, StopRule};
use crate::dtvae::{self, DtvaeConfig, DtvaeParams};
use crate::error::{Error, Result};
use crate::plda::{PldaModel, PldaScorer};
use crate::synthdata::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Baseline,
    DtvaeFixedK,
    DtvaeOpen,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::DtvaeFixedK => "dtvae_fixed_k",
            Method::DtvaeOpen => "dtvae_open",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Method::Baseline, Method::DtvaeFixedK, Method::DtvaeOpen]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseTimings {
    pub dtvae_train: f64,
    /// PLDA scoring plus p-score/distance conversion.
    pub plda_score: f64,
    pub ahc: f64,
    pub total: f64,
}

impl PhaseTimings {
    pub fn total_without_training(&self) -> f64 {
        (self.total - self.dtvae_train).max(0.0)
    }

    pub fn phases(&self) -> [(&'static str, f64); 4] {
        [
            ("dtvae_train", self.dtvae_train),
            ("plda_score", self.plda_score),
            ("ahc", self.ahc),
            ("total", self.total),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub method: Method,
    pub assignment: ClusterAssignment,
    /// Exact count from the PLDA scorer.
    pub pair_evaluations: u64,
    pub timings: PhaseTimings,
    /// Stop rule given to AHC; `None` on the fixed-K path.
    pub stop: Option<StopRule>,
    /// DTVAE group sizes in group order; the baseline reports one group.
    pub group_sizes: Vec<usize>,
    pub corpus_fingerprint: u64,
}

impl PipelineResult {
    pub fn n(&self) -> usize {
        self.assignment.len()
    }
}

fn check_corpus(corpus: &Corpus) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::Invalid("cannot cluster an empty corpus".into()));
    }
    Ok(())
}

fn check_plda(corpus: &Corpus, plda: &PldaModel) -> Result<()> {
    if plda.dim() != corpus.dim() {
        return Err(Error::DimMismatch {
            expected: plda.dim(),
            got: corpus.dim(),
        });
    }
    Ok(())
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Scores, normalizes and clusters one set of rows. Returns local labels
/// and the (scoring, AHC) seconds.
fn cluster_rows(scorer: &PldaScorer, rows: &[&[f64]], stop: StopRule) -> Result<(ClusterAssignment, f64, f64)> {
    let t = Instant::now();
    let distances = scorer.score_matrix(rows)?.p_normalize()?.to_distance()?;
    let t_score = secs(t);
    let t = Instant::now();
    let (assignment, _) = ahc_cluster(&distances, stop)?;
    Ok((assignment, t_score, secs(t)))
}

pub fn run_baseline(corpus: &Corpus, plda: &PldaModel, stop: StopRule) -> Result<PipelineResult> {
    check_corpus(corpus)?;
    check_plda(corpus, plda)?;
    let start = Instant::now();
    let scorer = PldaScorer::new(plda)?;
    let (assignment, plda_score, ahc) = cluster_rows(&scorer, &corpus.embeddings(), stop)?;
    Ok(PipelineResult {
        method: Method::Baseline,
        assignment,
        pair_evaluations: scorer.evaluations(),
        timings: PhaseTimings {
            dtvae_train: 0.0,
            plda_score,
            ahc,
            total: secs(start),
        },
        stop: Some(stop),
        group_sizes: vec![corpus.len()],
        corpus_fingerprint: corpus.fingerprint(),
    })
}

fn train_groups(corpus: &Corpus, config: &DtvaeConfig) -> Result<(DtvaeParams, f64)> {
    let t = Instant::now();
    let trained = dtvae::train(corpus, config)?;
    Ok((trained.params, secs(t)))
}

/// Trains a DTVAE with `num_classes = K` and returns its argmax groups.
pub fn run_dtvae_fixed_k(corpus: &Corpus, config: &DtvaeConfig) -> Result<PipelineResult> {
    if config.num_classes < 2 {
        return Err(Error::Config(format!("fixed-K path needs K >= 2, got {}", config.num_classes)));
    }
    check_corpus(corpus)?;
    let start = Instant::now();
    let (params, train_time) = train_groups(corpus, config)?;
    let mut result = run_dtvae_fixed_k_with(corpus, &params)?;
    result.timings.dtvae_train += train_time;
    result.timings.total = secs(start);
    Ok(result)
}

/// Fixed-K path with an already trained model.
pub fn run_dtvae_fixed_k_with(corpus: &Corpus, params: &DtvaeParams) -> Result<PipelineResult> {
    check_corpus(corpus)?;
    let start = Instant::now();
    let assignment = dtvae::assign_groups(params, corpus)?;
    let elapsed = secs(start);
    Ok(PipelineResult {
        method: Method::DtvaeFixedK,
        group_sizes: assignment.sizes(),
        assignment,
        pair_evaluations: 0,
        timings: PhaseTimings {
            dtvae_train: elapsed,
            plda_score: 0.0,
            ahc: 0.0,
            total: elapsed,
        },
        stop: None,
        corpus_fingerprint: corpus.fingerprint(),
    })
}

/// Trains a DTVAE with `num_classes` initial groups, then clusters inside each group.
pub fn run_dtvae_open(
    corpus: &Corpus,
    config: &DtvaeConfig,
    plda: &PldaModel,
    stop_per_group: StopRule,
) -> Result<PipelineResult> {
    check_corpus(corpus)?;
    check_plda(corpus, plda)?;
    let start = Instant::now();
    let (params, train_time) = train_groups(corpus, config)?;
    let mut result = run_dtvae_open_with(corpus, &params, plda, stop_per_group)?;
    result.timings.dtvae_train += train_time;
    result.timings.total = secs(start);
    Ok(result)
}

/// Open-K path with an already trained model.
pub fn run_dtvae_open_with(
    corpus: &Corpus,
    params: &DtvaeParams,
    plda: &PldaModel,
    stop_per_group: StopRule,
) -> Result<PipelineResult> {
    let groups = dtvae::assign_groups(params, corpus)?;
    run_grouped(corpus, &groups, plda, stop_per_group)
}

/// Per-group scoring and AHC under a given grouping. Groups are processed in
/// index order and their clusters numbered consecutively. A fixed K larger
/// than a group is clamped to the group size.
pub fn run_grouped(
    corpus: &Corpus,
    groups: &ClusterAssignment,
    plda: &PldaModel,
    stop_per_group: StopRule,
) -> Result<PipelineResult> {
    check_corpus(corpus)?;
    check_plda(corpus, plda)?;
    if groups.len() != corpus.len() {
        return Err(Error::DimMismatch {
            expected: corpus.len(),
            got: groups.len(),
        });
    }
    let start = Instant::now();
    let scorer = PldaScorer::new(plda)?;
    let rows = corpus.embeddings();
    let mut labels = vec![0usize; corpus.len()];
    let mut timings = PhaseTimings::default();
    let mut next_label = 0;
    for members in groups.members() {
        if members.len() == 1 {
            labels[members[0]] = next_label;
            next_label += 1;
            continue;
        }
        let stop = match stop_per_group {
            StopRule::FixedK(k) => StopRule::FixedK(k.min(members.len())),
            t => t,
        };
        let group_rows: Vec<&[f64]> = members.iter().map(|&i| rows[i]).collect();
        let (local, t_score, t_ahc) = cluster_rows(&scorer, &group_rows, stop)?;
        timings.plda_score += t_score;
        timings.ahc += t_ahc;
        for (&i, &l) in members.iter().zip(local.labels()) {
            labels[i] = next_label + l;
        }
        next_label += local.k();
    }
    timings.total = secs(start);
    Ok(PipelineResult {
        method: Method::DtvaeOpen,
        assignment: ClusterAssignment::new(labels)?,
        pair_evaluations: scorer.evaluations(),
        timings,
        stop: Some(stop_per_group),
        group_sizes: groups.sizes(),
        corpus_fingerprint: corpus.fingerprint(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCountStats {
    pub full: u64,
    pub grouped: u64,
    /// `1 - grouped / full`, or 0 when there are no pairs.
    pub reduction: f64,
}

fn pairs(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

pub fn pair_count_stats(group_sizes: &[usize], n: usize) -> Result<PairCountStats> {
    let total: usize = group_sizes.iter().sum();
    if total != n {
        return Err(Error::Invalid(format!("group sizes sum to {total}, expected {n}")));
    }
    let full = pairs(n);
    let grouped = group_sizes.iter().map(|&g| pairs(g)).sum();
    let reduction = if full == 0 {
        0.0
    } else {
        1.0 - grouped as f64 / full as f64
    };
    Ok(PairCountStats {
        full,
        grouped,
        reduction,
    })
}
