use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::synthdata::{generate_corpus, Corpus, GenConfig, NoiseFamily, Utterance};

fn log_gauss(v: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let ch = cov.clone().cholesky().unwrap();
    let logdet = 2.0 * ch.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let quad = v.dot(&ch.solve(v));
    -0.5 * (v.len() as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

/// Direct evaluation of the same/different-speaker joint densities.
fn llr_oracle(m: &PldaModel, x1: &[f64], x2: &[f64]) -> f64 {
    let d = m.dim();
    let t = &m.between + &m.within;
    let mut same = DMatrix::zeros(2 * d, 2 * d);
    let mut diff = DMatrix::zeros(2 * d, 2 * d);
    same.view_mut((0, 0), (d, d)).copy_from(&t);
    same.view_mut((d, d), (d, d)).copy_from(&t);
    same.view_mut((0, d), (d, d)).copy_from(&m.between);
    same.view_mut((d, 0), (d, d)).copy_from(&m.between);
    diff.view_mut((0, 0), (d, d)).copy_from(&t);
    diff.view_mut((d, d), (d, d)).copy_from(&t);
    let v = DVector::from_iterator(
        2 * d,
        x1.iter()
            .zip(m.mu.iter())
            .map(|(x, u)| x - u)
            .chain(x2.iter().zip(m.mu.iter()).map(|(x, u)| x - u)),
    );
    log_gauss(&v, &same) - log_gauss(&v, &diff)
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * floor
}

fn random_model(seed: u64, d: usize) -> PldaModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let b = random_spd(&mut rng, d, 0.1);
    let w = random_spd(&mut rng, d, 0.2);
    PldaModel::new(mu, b, w).unwrap()
}

fn iso_model(d: usize, b: f64, w: f64) -> PldaModel {
    PldaModel::new(
        DVector::zeros(d),
        DMatrix::identity(d, d) * b,
        DMatrix::identity(d, d) * w,
    )
    .unwrap()
}

#[test]
fn scalar_llr_matches_bivariate_densities() {
    // D = 1, B = W = 1, mu = 0, x1 = x2 = 1:
    // same ~ N(0, [[2,1],[1,2]]), diff ~ N(0, [[2,0],[0,2]]).
    let m = iso_model(1, 1.0, 1.0);
    let same_det: f64 = 3.0;
    let same_quad = (2.0 * 1.0 - 2.0 * 1.0 + 2.0 * 1.0) / 3.0; // v' S^-1 v, S^-1 = [[2,-1],[-1,2]]/3
    let diff_quad: f64 = 1.0; // (1 + 1) / 2
    let expected = (-0.5 * same_det.ln() - 0.5 * same_quad) - (-0.5 * 4f64.ln() - 0.5 * diff_quad);
    let got = score_pair(&m, &[1.0], &[1.0]).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn llr_matches_density_oracle_on_random_models() {
    for seed in 0..10 {
        let m = random_model(seed, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let x1: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x2: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = score_pair(&m, &x1, &x2).unwrap();
        let want = llr_oracle(&m, &x1, &x2);
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn zero_between_gives_zero_llr() {
    let m = PldaModel::new(DVector::zeros(3), DMatrix::zeros(3, 3), DMatrix::identity(3, 3)).unwrap();
    let s = PldaScorer::new(&m).unwrap();
    for (a, b) in [([1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]), ([0.0; 3], [9.0, 9.0, 9.0])] {
        assert!(s.score_pair(&a, &b).unwrap().abs() < 1e-12);
    }
}

#[test]
fn dimension_mismatch() {
    let m = iso_model(3, 1.0, 1.0);
    assert!(matches!(
        score_pair(&m, &[1.0, 2.0], &[1.0, 2.0, 3.0]),
        Err(crate::Error::DimMismatch { expected: 3, got: 2 })
    ));
}

fn rows(c: &Corpus) -> Vec<&[f64]> {
    c.embeddings()
}

#[test]
fn score_matrix_counts_and_consistency() {
    let m = random_model(3, 4);
    let c = generate_corpus(&GenConfig::balanced(3, 1, 4, 1).with_std(1.0, 0.5)).unwrap();
    let scorer = PldaScorer::new(&m).unwrap();
    let sm = scorer.score_matrix(&rows(&c)).unwrap();
    assert_eq!(scorer.evaluations(), 3);
    assert_eq!(sm.kind(), ScoreKind::Llr);
    for i in 0..3 {
        assert_eq!(sm.get(i, i), 0.0);
        for j in 0..3 {
            assert_eq!(sm.get(i, j), sm.get(j, i));
            if i != j {
                let direct = score_pair(&m, &c.utterances()[i].embedding, &c.utterances()[j].embedding).unwrap();
                assert!((sm.get(i, j) - direct).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn threaded_scoring_is_identical_and_counts_exactly() {
    let m = random_model(5, 6);
    let c = generate_corpus(&GenConfig::balanced(7, 9, 6, 2)).unwrap();
    let serial = PldaScorer::new(&m).unwrap();
    let parallel = PldaScorer::new(&m).unwrap();
    let a = serial.score_matrix(&rows(&c)).unwrap();
    let b = parallel.score_matrix_threaded(&rows(&c), 4).unwrap();
    assert_eq!(a, b);
    let n = c.len() as u64;
    assert_eq!(serial.evaluations(), n * (n - 1) / 2);
    assert_eq!(parallel.evaluations(), n * (n - 1) / 2);
}

#[test]
fn p_normalize_affine_map() {
    // off-diagonal {2, 5, 8}
    let v = vec![0.0, 2.0, 5.0, 2.0, 0.0, 8.0, 5.0, 8.0, 0.0];
    let p = ScoreMatrix::new(3, v, ScoreKind::Llr).unwrap().p_normalize().unwrap();
    assert_eq!(p.kind(), ScoreKind::PScore);
    assert_eq!((p.get(0, 1), p.get(0, 2), p.get(1, 2)), (0.0, 0.5, 1.0));
    assert_eq!((p.get(0, 0), p.get(1, 1)), (1.0, 1.0));
    let d = p.clone().to_distance().unwrap();
    assert_eq!(d.kind(), ScoreKind::Distance);
    for (pv, dv) in p.values().iter().zip(d.values()) {
        assert_eq!(*dv, 1.0 - pv);
    }
    assert_eq!(d.get(2, 2), 0.0);
}

#[test]
fn p_normalize_constant_scores() {
    let v = vec![0.0, 3.0, 3.0, 3.0, 0.0, 3.0, 3.0, 3.0, 0.0];
    let p = ScoreMatrix::new(3, v, ScoreKind::Llr).unwrap().p_normalize().unwrap();
    assert_eq!(p.get(0, 1), 0.5);
    assert_eq!(p.get(1, 2), 0.5);
}

#[test]
fn wrong_kind_is_rejected() {
    let m = ScoreMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0], ScoreKind::Distance).unwrap();
    assert!(m.clone().p_normalize().is_err());
    assert!(m.to_distance().is_err());
}

proptest! {
    #[test]
    fn p_scores_bounded_and_order_preserving(raw in prop::collection::vec(-50.0f64..50.0, 10)) {
        // Fill the upper triangle of a 5x5 matrix.
        let n = 5;
        let mut v = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                v[i * n + j] = raw[k];
                v[j * n + i] = raw[k];
                k += 1;
            }
        }
        let llr = ScoreMatrix::new(n, v, ScoreKind::Llr).unwrap();
        let p = llr.clone().p_normalize().unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((0.0..=1.0).contains(&p.get(i, j)));
                prop_assert_eq!(p.get(i, j), p.get(j, i));
                for a in 0..n {
                    for b in 0..n {
                        if i != j && a != b && llr.get(i, j) > llr.get(a, b) {
                            prop_assert!(p.get(i, j) >= p.get(a, b));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn llr_is_exchangeable(seed in 0u64..1000) {
        let m = random_model(seed, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let s = PldaScorer::new(&m).unwrap();
        prop_assert!((s.score_pair(&a, &b).unwrap() - s.score_pair(&b, &a).unwrap()).abs() <= 1e-9);
    }
}

/// Brute-force marginal likelihood with each speaker's full stacked covariance.
fn log_likelihood_oracle(m: &PldaModel, c: &Corpus) -> f64 {
    let labels = c.speaker_labels().unwrap();
    let d = m.dim();
    let speakers = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for s in 0..speakers {
        let xs: Vec<&Utterance> = c.utterances().iter().zip(&labels).filter(|(_, &l)| l == s).map(|(u, _)| u).collect();
        let n = xs.len();
        let mut cov = DMatrix::zeros(n * d, n * d);
        for a in 0..n {
            for b in 0..n {
                let block = if a == b { &m.between + &m.within } else { m.between.clone() };
                cov.view_mut((a * d, b * d), (d, d)).copy_from(&block);
            }
        }
        let v = DVector::from_iterator(
            n * d,
            xs.iter().flat_map(|u| u.embedding.iter().zip(m.mu.iter()).map(|(x, mu)| x - mu)),
        );
        total += log_gauss(&v, &cov);
    }
    total
}

#[test]
fn log_likelihood_matches_stacked_density() {
    let mut cfg = GenConfig::balanced(3, 1, 3, 8).with_std(1.0, 0.7);
    cfg.utterances = crate::synthdata::UttsPerSpeaker::PerSpeaker(vec![2, 4, 3]);
    let c = generate_corpus(&cfg).unwrap();
    for seed in 0..5 {
        let m = random_model(seed, 3);
        let got = m.log_likelihood(&c).unwrap();
        let want = log_likelihood_oracle(&m, &c);
        assert!((got - want).abs() < 1e-9 * want.abs(), "{got} vs {want}");
    }
}

fn assert_monotone(trace: &[f64]) {
    for w in trace.windows(2) {
        assert!(w[1] - w[0] >= -1e-8, "log-likelihood decreased: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn em_is_monotone() {
    for (seed, noise) in [
        (1, NoiseFamily::Gaussian),
        (2, NoiseFamily::Laplace),
        (3, NoiseFamily::StudentT { dof: 4.0 }),
    ] {
        let cfg = GenConfig::balanced(30, 6, 5, seed).with_std(2.0, 1.0).with_noise(noise);
        let c = generate_corpus(&cfg).unwrap();
        let fit = train_plda(&c, 20).unwrap();
        assert_eq!(fit.trace.len(), 20);
        assert_monotone(&fit.trace);
    }
}

#[test]
fn em_step_from_truth_does_not_decrease() {
    let c = generate_corpus(&GenConfig::balanced(40, 5, 3, 4).with_std(2.0, 1.0)).unwrap();
    let truth = iso_model(3, 4.0, 1.0);
    let before = truth.log_likelihood(&c).unwrap();
    let fit = train_plda_from(&c, truth, 1).unwrap();
    assert!(fit.trace[0] >= before - 1e-8);
}

#[test]
fn generate_and_refit_recovers_covariances() {
    // B = 4I, W = I, m = 200, N = 20, dim = 5
    let cfg = GenConfig::balanced(200, 20, 5, 2024).with_std(2.0, 1.0);
    let c = generate_corpus(&cfg).unwrap();
    let fit = train_plda(&c, 50).unwrap();
    let b_diag: Vec<f64> = (0..5).map(|i| fit.model.between[(i, i)]).collect();
    let w_diag: Vec<f64> = (0..5).map(|i| fit.model.within[(i, i)]).collect();
    let b_mean = b_diag.iter().sum::<f64>() / 5.0;
    let w_mean = w_diag.iter().sum::<f64>() / 5.0;
    assert!((b_mean - 4.0).abs() / 4.0 <= 0.15, "mean B diagonal {b_mean}");
    assert!((w_mean - 1.0).abs() <= 0.15, "mean W diagonal {w_mean}");
    for w in &w_diag {
        assert!((w - 1.0).abs() <= 0.15, "W diagonal {w_diag:?}");
    }

    // Noise draws are consumed even at within_std = 0, so this replays the
    // exact speaker means. B should track their sample covariance closely.
    let means = generate_corpus(&cfg.clone().with_std(2.0, 0.0)).unwrap();
    let centers: Vec<&[f64]> = means.embeddings().into_iter().step_by(20).collect();
    for i in 0..5 {
        let avg = centers.iter().map(|m| m[i]).sum::<f64>() / 200.0;
        let var = centers.iter().map(|m| (m[i] - avg).powi(2)).sum::<f64>() / 200.0;
        assert!((b_diag[i] - var).abs() / var <= 0.05, "B[{i}] {} vs sample {var}", b_diag[i]);
    }
}

#[test]
fn training_validation() {
    let c = generate_corpus(&GenConfig::balanced(3, 4, 2, 0)).unwrap();
    assert!(matches!(train_plda(&c, 0), Err(crate::Error::Config(_))));
    assert!(train_plda(&c.unlabeled(), 5).is_err());
    let one = generate_corpus(&GenConfig::balanced(1, 4, 2, 0)).unwrap();
    assert!(train_plda(&one, 5).is_err());
    let singles = generate_corpus(&GenConfig::balanced(4, 1, 2, 0)).unwrap();
    assert!(train_plda(&singles, 5).is_err());
}

#[test]
fn same_speaker_scores_exceed_different_speaker_scores() {
    let train = generate_corpus(&GenConfig::balanced(50, 10, 8, 10)).unwrap();
    let model = train_plda(&train, 10).unwrap().model;
    let test = generate_corpus(&GenConfig::balanced(5, 10, 8, 11)).unwrap();
    let labels = test.speaker_labels().unwrap();
    let (sm, _) = score_matrix(&model, &rows(&test)).unwrap();
    let (mut same, mut ns, mut diff, mut nd) = (0.0, 0, 0.0, 0);
    for i in 0..test.len() {
        for j in (i + 1)..test.len() {
            if labels[i] == labels[j] {
                same += sm.get(i, j);
                ns += 1;
            } else {
                diff += sm.get(i, j);
                nd += 1;
            }
        }
    }
    assert!(same / ns as f64 > diff / nd as f64);
}

#[test]
fn model_file_round_trip() {
    let m = random_model(9, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plda.txt");
    save_plda(&m, &path).unwrap();
    assert_eq!(load_plda(&path).unwrap(), m);
    assert!(parse_plda("#plda v1 dim=2\nmu\n1,2\nB\n1,0\n", std::path::Path::new("x")).is_err());
}

#[test]
fn model_validation() {
    let d = 2;
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(PldaModel::new(DVector::zeros(d), asym, DMatrix::identity(d, d)).is_err());
    assert!(PldaModel::new(DVector::zeros(d), DMatrix::identity(d, d), DMatrix::zeros(d, d)).is_err());
    let neg = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
    assert!(PldaModel::new(DVector::zeros(d), neg, DMatrix::identity(d, d)).is_err());
}
