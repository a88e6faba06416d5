use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use super::corpus::{Corpus, Utterance};
use crate::error::{Error, Result};

/// Channel-noise distribution. Every family is rescaled to unit variance so
/// `within_std` is the per-dimension standard deviation regardless of shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseFamily {
    Gaussian,
    StudentT { dof: f64 },
    Laplace,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UttsPerSpeaker {
    Fixed(usize),
    PerSpeaker(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub speakers: usize,
    pub utterances: UttsPerSpeaker,
    pub dim: usize,
    pub between_std: f64,
    pub within_std: f64,
    pub noise: NoiseFamily,
    pub seed: u64,
}

impl GenConfig {
    /// Gaussian corpus with `utts` utterances per speaker, unit within-speaker
    /// spread and between/within ratio 5.
    pub fn balanced(speakers: usize, utts: usize, dim: usize, seed: u64) -> Self {
        Self {
            speakers,
            utterances: UttsPerSpeaker::Fixed(utts),
            dim,
            between_std: 5.0,
            within_std: 1.0,
            noise: NoiseFamily::Gaussian,
            seed,
        }
    }

    pub fn with_std(mut self, between_std: f64, within_std: f64) -> Self {
        self.between_std = between_std;
        self.within_std = within_std;
        self
    }

    pub fn with_noise(mut self, noise: NoiseFamily) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.speakers == 0 || self.dim == 0 {
            return bad("speakers and dim must be positive".into());
        }
        match &self.utterances {
            UttsPerSpeaker::Fixed(0) => return bad("utterances per speaker must be positive".into()),
            UttsPerSpeaker::PerSpeaker(v) if v.len() != self.speakers || v.contains(&0) => {
                return bad(format!(
                    "per-speaker counts must be {} positive integers",
                    self.speakers
                ))
            }
            _ => {}
        }
        if !(self.between_std > 0.0 && self.between_std.is_finite()) {
            return bad(format!("between_std must be > 0, got {}", self.between_std));
        }
        if !(self.within_std >= 0.0 && self.within_std.is_finite()) {
            return bad(format!("within_std must be >= 0, got {}", self.within_std));
        }
        if let NoiseFamily::StudentT { dof } = self.noise {
            if !(dof > 2.0 && dof.is_finite()) {
                return bad(format!("student-t dof must be > 2, got {dof}"));
            }
        }
        Ok(())
    }

    fn count_for(&self, speaker: usize) -> usize {
        match &self.utterances {
            UttsPerSpeaker::Fixed(n) => *n,
            UttsPerSpeaker::PerSpeaker(v) => v[speaker],
        }
    }
}

fn unit_noise(noise: NoiseFamily, rng: &mut ChaCha8Rng) -> f64 {
    match noise {
        NoiseFamily::Gaussian => StandardNormal.sample(rng),
        NoiseFamily::StudentT { dof } => {
            let t: f64 = StudentT::new(dof).expect("validated dof").sample(rng);
            t * ((dof - 2.0) / dof).sqrt()
        }
        NoiseFamily::Laplace => {
            // Inverse CDF with scale 1/sqrt(2) (unit variance).
            let u: f64 = rng.random::<f64>() - 0.5;
            let b = std::f64::consts::FRAC_1_SQRT_2;
            -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
        }
    }
}

fn digits(n: usize) -> usize {
    n.max(1).to_string().len()
}

/// Draws speaker means from `N(0, between_std^2 I)` and adds per-utterance
/// noise of scale `within_std`. Utterances are grouped by speaker in order.
pub fn generate_corpus(config: &GenConfig) -> Result<Corpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let spk_w = digits(config.speakers);
    let utt_w = digits((0..config.speakers).map(|s| config.count_for(s)).max().unwrap_or(1));

    let mut utterances = Vec::new();
    for s in 0..config.speakers {
        let mean: Vec<f64> = (0..config.dim)
            .map(|_| config.between_std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let speaker = format!("spk{s:0spk_w$}");
        for j in 0..config.count_for(s) {
            let embedding = mean
                .iter()
                .map(|&m| m + config.within_std * unit_noise(config.noise, &mut rng))
                .collect();
            utterances.push(Utterance {
                id: format!("{speaker}_utt{j:0utt_w$}"),
                speaker: Some(speaker.clone()),
                embedding,
            });
        }
    }
    Corpus::new(config.dim, utterances)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_speaker_count() {
        let c = generate_corpus(&GenConfig::balanced(3, 50, 20, 7)).unwrap();
        assert_eq!(c.len(), 150);
        assert_eq!(c.dim(), 20);
        assert_eq!(c.speaker_count(), 3);
    }

    #[test]
    fn zero_within_noise_repeats_the_mean() {
        let c = generate_corpus(&GenConfig::balanced(2, 4, 5, 1).with_std(1.0, 0.0)).unwrap();
        let u = c.utterances();
        for j in 1..4 {
            assert_eq!(u[0].embedding, u[j].embedding);
            assert_eq!(u[4].embedding, u[4 + j].embedding);
        }
        assert_ne!(u[0].embedding, u[4].embedding);
    }

    #[test]
    fn same_seed_same_corpus() {
        for noise in [
            NoiseFamily::Gaussian,
            NoiseFamily::StudentT { dof: 3.0 },
            NoiseFamily::Laplace,
        ] {
            let cfg = GenConfig::balanced(4, 10, 6, 99).with_noise(noise);
            assert_eq!(generate_corpus(&cfg).unwrap(), generate_corpus(&cfg).unwrap());
        }
    }

    #[test]
    fn per_speaker_counts() {
        let mut cfg = GenConfig::balanced(3, 1, 2, 0);
        cfg.utterances = UttsPerSpeaker::PerSpeaker(vec![1, 4, 2]);
        let c = generate_corpus(&cfg).unwrap();
        assert_eq!(c.len(), 7);
        assert_eq!(c.speaker_labels().unwrap(), vec![0, 1, 1, 1, 1, 2, 2]);
    }

    #[test]
    fn config_validation() {
        let base = GenConfig::balanced(3, 5, 4, 0);
        assert!(generate_corpus(&base.clone().with_std(0.0, 1.0)).is_err());
        assert!(generate_corpus(&base.clone().with_std(1.0, -1.0)).is_err());
        assert!(generate_corpus(&base.clone().with_noise(NoiseFamily::StudentT { dof: 2.0 })).is_err());
        let mut zero = base.clone();
        zero.speakers = 0;
        assert!(generate_corpus(&zero).is_err());
    }

    #[test]
    fn noise_families_have_unit_variance() {
        for noise in [
            NoiseFamily::Gaussian,
            NoiseFamily::StudentT { dof: 5.0 },
            NoiseFamily::Laplace,
        ] {
            let cfg = GenConfig::balanced(1, 40_000, 1, 3).with_std(1e-9, 1.0).with_noise(noise);
            let c = generate_corpus(&cfg).unwrap();
            let xs: Vec<f64> = c.utterances().iter().map(|u| u.embedding[0]).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
            assert!((v - 1.0).abs() < 0.06, "{noise:?}: variance {v}");
        }
    }

    fn mean_cov_error(m: usize, seed: u64) -> f64 {
        let dim = 4;
        let cfg = GenConfig::balanced(m, 1, dim, seed).with_std(2.0, 0.0);
        let c = generate_corpus(&cfg).unwrap();
        let mut cov = vec![0.0; dim * dim];
        for u in c.utterances() {
            for i in 0..dim {
                for j in 0..dim {
                    cov[i * dim + j] += u.embedding[i] * u.embedding[j] / m as f64;
                }
            }
        }
        (0..dim * dim)
            .map(|k| {
                let target = if k % (dim + 1) == 0 { 4.0 } else { 0.0 };
                (cov[k] - target).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn speaker_mean_covariance_converges() {
        let small: f64 = (0..8).map(|s| mean_cov_error(50, s)).sum::<f64>() / 8.0;
        let large: f64 = (0..8).map(|s| mean_cov_error(500, s)).sum::<f64>() / 8.0;
        assert!(large < small, "m=500 error {large} not below m=50 error {small}");
    }
}
