//! Benchmark report rows, CSV round trip and text table rendering.

use std::fmt::Write as _;
use std::path::Path;

use super::acc::corpus_acc;
use crate::ahc::StopRule;
use crate::error::{Error, Result};
use crate::pipeline::PipelineResult;
use crate::synthdata::Corpus;

pub const CSV_HEADER: &str = "method,n,k,acc,pair_evals,t_train_s,t_score_s,t_ahc_s,t_total_s,reduction_pct";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub n: usize,
    /// Fixed cluster count (`"5"`) or threshold (`"t=0.4"`).
    pub k: String,
    /// `None` when the corpus is unlabeled.
    pub acc: Option<f64>,
    pub pair_evals: u64,
    pub t_train_s: f64,
    pub t_score_s: f64,
    pub t_ahc_s: f64,
    pub t_total_s: f64,
    /// Pair evaluations saved relative to the paired baseline, in percent.
    pub reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

fn stop_label(result: &PipelineResult) -> String {
    match result.stop {
        Some(StopRule::FixedK(k)) => k.to_string(),
        Some(StopRule::Threshold(t)) => format!("t={t}"),
        None => result.assignment.k().to_string(),
    }
}

fn row_for(corpus: &Corpus, result: &PipelineResult, baseline_pairs: u64) -> Result<BenchRow> {
    if result.corpus_fingerprint != corpus.fingerprint() || result.n() != corpus.len() {
        return Err(Error::Invalid(format!(
            "{} result was computed on a different corpus",
            result.method
        )));
    }
    let acc = if corpus.is_labeled() {
        Some(corpus_acc(corpus, &result.assignment)?)
    } else {
        None
    };
    let reduction_pct = if baseline_pairs == 0 {
        0.0
    } else {
        100.0 * (1.0 - result.pair_evaluations as f64 / baseline_pairs as f64)
    };
    Ok(BenchRow {
        method: result.method.as_str().to_string(),
        n: result.n(),
        k: stop_label(result),
        acc,
        pair_evals: result.pair_evaluations,
        t_train_s: result.timings.dtvae_train,
        t_score_s: result.timings.plda_score,
        t_ahc_s: result.timings.ahc,
        t_total_s: result.timings.total,
        reduction_pct,
    })
}

/// One row for the baseline, then one per further result, all on `corpus`.
pub fn make_report(corpus: &Corpus, results: &[PipelineResult], baseline: &PipelineResult) -> Result<BenchReport> {
    let base_pairs = baseline.pair_evaluations;
    let mut rows = vec![row_for(corpus, baseline, base_pairs)?];
    for r in results {
        rows.push(row_for(corpus, r, base_pairs)?);
    }
    Ok(BenchReport { rows })
}

impl BenchReport {
    pub fn extend(&mut self, other: BenchReport) {
        self.rows.extend(other.rows);
    }

    /// Zeroes every timing column, for byte-reproducible output.
    pub fn without_timings(mut self) -> Self {
        for r in &mut self.rows {
            r.t_train_s = 0.0;
            r.t_score_s = 0.0;
            r.t_ahc_s = 0.0;
            r.t_total_s = 0.0;
        }
        self
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let acc = r.acc.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.n,
                r.k,
                acc,
                r.pair_evals,
                r.t_train_s,
                r.t_score_s,
                r.t_ahc_s,
                r.t_total_s,
                r.reduction_pct
            );
        }
        out
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => return Err(Error::parse(path, 1, format!("expected header `{CSV_HEADER}`"))),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let line_no = i + 1;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(Error::parse(path, line_no, format!("expected 10 fields, got {}", f.len())));
            }
            let bad = |name: &str| Error::parse(path, line_no, format!("invalid {name} `{line}`"));
            let num = |s: &str, name: &str| s.parse::<f64>().map_err(|_| bad(name));
            rows.push(BenchRow {
                method: f[0].to_string(),
                n: f[1].parse().map_err(|_| bad("n"))?,
                k: f[2].to_string(),
                acc: if f[3].is_empty() { None } else { Some(num(f[3], "acc")?) },
                pair_evals: f[4].parse().map_err(|_| bad("pair_evals"))?,
                t_train_s: num(f[5], "t_train_s")?,
                t_score_s: num(f[6], "t_score_s")?,
                t_ahc_s: num(f[7], "t_ahc_s")?,
                t_total_s: num(f[8], "t_total_s")?,
                reduction_pct: num(f[9], "reduction_pct")?,
            });
        }
        Ok(Self { rows })
    }

    /// Human-readable table with right-aligned numeric columns.
    pub fn to_table(&self) -> String {
        let header: Vec<String> = CSV_HEADER.split(',').map(str::to_string).collect();
        let mut cells: Vec<Vec<String>> = vec![header];
        for r in &self.rows {
            cells.push(vec![
                r.method.clone(),
                r.n.to_string(),
                r.k.clone(),
                r.acc.map(|a| format!("{:.2}%", 100.0 * a)).unwrap_or_else(|| "-".into()),
                r.pair_evals.to_string(),
                format!("{:.3}", r.t_train_s),
                format!("{:.3}", r.t_score_s),
                format!("{:.3}", r.t_ahc_s),
                format!("{:.3}", r.t_total_s),
                format!("{:.2}", r.reduction_pct),
            ]);
        }
        let widths: Vec<usize> = (0..10).map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
