//! Library-level integration: Monte Carlo oracles for the samplers and an
//! end-to-end train/evaluate pass over the synthetic fixtures.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use expevo::checkpoint::ModelFile;
use expevo::evaluation::{self, reports, FeatureMode};
use expevo::experience::{mh_sweep, propose_experience, ExperienceState, MhScope};
use expevo::facet::FacetState;
use expevo::langmodel::{KalmanNoise, LanguageModel};
use expevo::stochastic::GbmParams;
use expevo::synth::{standard_suite, Fixture};
use expevo::trainer::{self, TrainConfig};

#[test]
fn proposal_median_matches_lognormal_median() {
    // The log-normal median is exp(location): s0 exp((mu - sigma^2/2) t).
    let params = GbmParams { mu: 0.5, sigma: 0.8, s0: 2.0 };
    let t = 1.7;
    let mut rng = ChaCha12Rng::seed_from_u64(21);
    let n = 100_000;
    let mut draws: Vec<f64> = (0..n)
        .map(|_| propose_experience(&params, t, &mut rng))
        .collect();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = draws[n / 2];
    let expected = 2.0 * ((0.5 - 0.32f64) * t).exp();
    assert!(
        (median - expected).abs() / expected < 0.02,
        "median {median} vs {expected}"
    );
}

#[test]
fn acceptance_band_in_live_regime() {
    // With a small noise scale the sampler neither freezes nor accepts
    // everything on the synthetic suite.
    let data = Fixture::S1.generate().unwrap();
    let mut config = TrainConfig::new(2);
    config.iterations = 20;
    config.sigma_lm = 1e-6;
    config.early_stop_window = 0;
    config.seed = 5;
    let model = trainer::train(&data.corpus, &config).unwrap();
    let later = &model.acceptance_history[5..];
    let mean = later.iter().sum::<f64>() / later.len() as f64;
    assert!(
        mean > 0.05 && mean < 0.95,
        "mean acceptance {mean} outside the sanity band"
    );
}

#[test]
fn full_scope_sweep_is_finite_and_deterministic() {
    let data = Fixture::S3.generate().unwrap();
    let corpus = &data.corpus;
    let lm = LanguageModel::new(
        corpus.n_epochs as usize,
        1,
        corpus.vocab_size(),
        0.3,
        0.01,
        KalmanNoise::Literal,
    );
    let run = || {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let facets = FacetState::init_random(corpus, 1, 0.5, &mut rng).unwrap();
        let mut state = ExperienceState::init(corpus);
        for _ in 0..3 {
            mh_sweep(corpus, &mut state, &lm, &facets, 0.4, MhScope::Full, &mut rng).unwrap();
        }
        state.e
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    assert!(a.iter().all(|e| e.is_finite() && *e > 0.0));
}

#[test]
fn standard_suite_is_reproducible() {
    let a = standard_suite().unwrap();
    let b = standard_suite().unwrap();
    assert_eq!(a.len(), 3);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.reviews, y.reviews);
        assert_eq!(x.truth, y.truth);
    }
}

#[test]
fn short_training_raises_ll_across_iterations() {
    let data = Fixture::S2.generate().unwrap();
    let mut config = TrainConfig::new(3);
    config.iterations = 30;
    config.early_stop_window = 0;
    config.seed = 3;
    let initial = trainer::initialize(&data.corpus, &config).unwrap();
    let initial_ll =
        trainer::log_likelihood(&data.corpus, &initial.facets, &initial.lm);
    assert!(initial_ll.is_finite() && initial_ll < 0.0);

    let model = trainer::train(&data.corpus, &config).unwrap();
    let h = &model.ll_history;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let first = mean(&h[..5]);
    let last = mean(&h[h.len() - 5..]);
    assert!(last > first, "LL did not rise: first5 {first}, last5 {last}");
}

#[test]
fn end_to_end_library_flow() {
    let data = Fixture::S3.generate().unwrap();
    let mut config = TrainConfig::new(2);
    config.iterations = 5;
    config.holdout_recent = 3;
    config.seed = 99;
    let model = trainer::train(&data.corpus, &config).unwrap();

    let mask = trainer::holdout_most_recent(&data.corpus, 3);
    let keep: Vec<bool> = mask.iter().map(|m| !m).collect();
    let train_corpus = data.corpus.subset(&keep).unwrap();
    let file = ModelFile::from_model(&model, &train_corpus);

    let prediction =
        evaluation::rating_prediction(&file, &data.corpus, 3, 1.0, FeatureMode::Pi).unwrap();
    assert!(prediction.mse.is_finite());
    assert_eq!(
        prediction.n_test,
        mask.iter().filter(|m| **m).count()
    );

    // Raw feature mode runs on the same checkpoint.
    let raw =
        evaluation::rating_prediction(&file, &data.corpus, 3, 1.0, FeatureMode::Raw).unwrap();
    assert!(raw.mse.is_finite());

    let labels: Vec<(String, bool)> = data
        .corpus
        .user_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i % 2 == 0))
        .collect();
    let rank = evaluation::rank_users(&file, &labels, 100).unwrap();
    assert!(rank.ndcg >= 0.0 && rank.ndcg <= 1.0);
    assert!(rank.kendall_tau_distance >= 0.0 && rank.kendall_tau_distance <= 1.0);

    let bundle = reports::export_reports(&file, &reports::ReportOptions::default()).unwrap();
    assert_eq!(bundle.len(), 6);
}
