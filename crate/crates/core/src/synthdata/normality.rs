use super::corpus::Corpus;
use crate::error::{Error, Result};

/// Chi-square(2) upper 1% point, `-2 ln 0.01`.
pub fn jb_critical_1pct() -> f64 {
    -2.0 * 0.01f64.ln()
}

pub const MIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimNormality {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub jarque_bera: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalityReport {
    pub samples: usize,
    pub dims: Vec<DimNormality>,
}

impl NormalityReport {
    pub fn pass_fraction(&self) -> f64 {
        self.dims.iter().filter(|d| d.pass).count() as f64 / self.dims.len() as f64
    }
}

/// Moment statistics for one sample; population (biased) moments.
pub fn jarque_bera(xs: &[f64]) -> Result<DimNormality> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 <= 0.0 {
        return Err(Error::Invalid("zero variance; moments undefined".into()));
    }
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let jarque_bera = n / 6.0 * (skewness * skewness + excess_kurtosis * excess_kurtosis / 4.0);
    Ok(DimNormality {
        skewness,
        excess_kurtosis,
        jarque_bera,
        pass: jarque_bera <= jb_critical_1pct(),
    })
}

/// Per-dimension Jarque–Bera test at the 1% level.
pub fn normality_diagnostic(corpus: &Corpus) -> Result<NormalityReport> {
    if corpus.len() < MIN_SAMPLES {
        return Err(Error::Invalid(format!(
            "normality diagnostic needs at least {MIN_SAMPLES} utterances, got {}",
            corpus.len()
        )));
    }
    let dims = (0..corpus.dim())
        .map(|d| {
            let xs: Vec<f64> = corpus.utterances().iter().map(|u| u.embedding[d]).collect();
            jarque_bera(&xs).map_err(|_| Error::Invalid(format!("dimension {d} has zero variance")))
        })
        .collect::<Result<_>>()?;
    Ok(NormalityReport {
        samples: corpus.len(),
        dims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate_corpus, GenConfig, NoiseFamily, Utterance};

    #[test]
    fn two_point_distribution() {
        let xs: Vec<f64> = (0..60).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let r = jarque_bera(&xs).unwrap();
        assert!(r.skewness.abs() < 1e-15);
        assert!((r.excess_kurtosis + 2.0).abs() < 1e-12);
        assert!((r.jarque_bera - 10.0).abs() < 1e-12);
    }

    #[test]
    fn critical_value() {
        assert!((jb_critical_1pct() - 9.21).abs() < 1e-3);
    }

    #[test]
    fn gaussian_mostly_passes() {
        for seed in 0..4 {
            let cfg = GenConfig::balanced(1, 5000, 40, seed).with_std(1.0, 1.0);
            let report = normality_diagnostic(&generate_corpus(&cfg).unwrap()).unwrap();
            assert!(report.pass_fraction() >= 0.95, "seed {seed}: {}", report.pass_fraction());
        }
    }

    #[test]
    fn student_t_mostly_fails() {
        for seed in 0..4 {
            let cfg = GenConfig::balanced(1, 2000, 20, seed)
                .with_std(1.0, 1.0)
                .with_noise(NoiseFamily::StudentT { dof: 3.0 });
            let report = normality_diagnostic(&generate_corpus(&cfg).unwrap()).unwrap();
            assert!(report.pass_fraction() < 0.5, "seed {seed}: {}", report.pass_fraction());
        }
    }

    #[test]
    fn too_few_samples() {
        let c = generate_corpus(&GenConfig::balanced(1, 19, 3, 0)).unwrap();
        assert!(normality_diagnostic(&c).is_err());
    }

    #[test]
    fn constant_dimension_is_an_error() {
        let utts = (0..25)
            .map(|i| Utterance {
                id: format!("u{i}"),
                speaker: None,
                embedding: vec![i as f64, 1.0],
            })
            .collect();
        let c = Corpus::new(2, utts).unwrap();
        assert!(normality_diagnostic(&c).unwrap_err().to_string().contains("dimension 1"));
    }
}
