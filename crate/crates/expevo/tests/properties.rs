//! Property tests over the library's structural invariants.

use proptest::prelude::*;

use expevo::corpus::{Corpus, CorpusConfig, RawReview};
use expevo::evaluation::mse;
use expevo::experience::{acceptance_ratio, Neighbor};
use expevo::langmodel::{inverse_map, softmax_map, KalmanNoise, LanguageModel};
use expevo::stochastic::EPS_T;

fn raw_review_strategy() -> impl Strategy<Value = RawReview> {
    let word = prop::sample::select(vec!["ale", "stout", "hops", "malt", "crisp", "roast"]);
    (
        0u8..6,
        0u8..4,
        0i64..200_000_000,
        1u8..=5,
        prop::collection::vec(word, 0..8),
    )
        .prop_map(|(u, i, ts, rating, words)| RawReview {
            user_id: format!("u{u}"),
            item_id: format!("i{i}"),
            timestamp: ts,
            rating: rating as f64,
            text: words.join(" "),
        })
}

fn permissive() -> CorpusConfig {
    CorpusConfig {
        min_df: 1,
        min_user_reviews: 0,
        min_token_len: 1,
        ..CorpusConfig::default()
    }
}

proptest! {
    #[test]
    fn corpus_is_sorted_and_fine_times_floored(
        raws in prop::collection::vec(raw_review_strategy(), 1..40)
    ) {
        let corpus = match Corpus::build(raws, permissive()) {
            Ok(c) => c,
            // All-empty texts leave no vocabulary; nothing to check.
            Err(expevo::Error::EmptyVocabulary) => return Ok(()),
            Err(e) => panic!("unexpected error {e}"),
        };
        for w in corpus.reviews.windows(2) {
            prop_assert!(w[0].timestamp <= w[1].timestamp);
        }
        for user_reviews in corpus.reviews_by_user() {
            let mut prev = 0.0;
            for i in user_reviews {
                let t = corpus.reviews[i].t_fine;
                prop_assert!(t >= EPS_T);
                prop_assert!(t >= prev);
                prev = t;
            }
        }
        for r in &corpus.reviews {
            prop_assert!(r.epoch < corpus.n_epochs);
            for &w in &r.tokens {
                prop_assert!((w as usize) < corpus.vocab_size());
            }
        }
    }

    #[test]
    fn corpus_build_is_deterministic_and_round_trips(
        raws in prop::collection::vec(raw_review_strategy(), 1..25)
    ) {
        let a = Corpus::build(raws.clone(), permissive());
        let b = Corpus::build(raws, permissive());
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a.vocabulary, &b.vocabulary);
                prop_assert_eq!(&a.reviews, &b.reviews);
                let json = serde_json::to_vec(&a).unwrap();
                let back: Corpus = serde_json::from_slice(&json).unwrap();
                prop_assert_eq!(a.reviews, back.reviews);
                prop_assert_eq!(a.vocabulary, back.vocabulary);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "determinism broke on error paths"),
        }
    }

    #[test]
    fn softmax_maps_into_open_simplex_and_inverts(
        mut beta in prop::collection::vec(-30.0..30.0f64, 2..24)
    ) {
        let ref_word = beta.len() - 1;
        beta[ref_word] = 0.0;
        let p = softmax_map(&beta).unwrap();
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| *x > 0.0 && *x < 1.0));
        let back = inverse_map(&p, ref_word).unwrap();
        for (a, b) in beta.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn mse_is_translation_consistent(
        pairs in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 1..30),
        shift in -100.0..100.0f64
    ) {
        let preds: Vec<f64> = pairs.iter().map(|(p, _)| *p).collect();
        let truth: Vec<f64> = pairs.iter().map(|(_, t)| *t).collect();
        let base = mse(&preds, &truth).unwrap();
        let preds2: Vec<f64> = preds.iter().map(|p| p + shift).collect();
        let truth2: Vec<f64> = truth.iter().map(|t| t + shift).collect();
        let shifted = mse(&preds2, &truth2).unwrap();
        prop_assert!((base - shifted).abs() < 1e-9 * (1.0 + base));
    }

    #[test]
    fn identity_candidate_always_has_unit_ratio(
        e_a in 0.01..50.0f64,
        e_b in 0.01..50.0f64,
        e_c in 0.01..50.0f64,
        sigma in 0.0..3.0f64,
        beta_vals in prop::collection::vec(-4.0..4.0f64, 4)
    ) {
        let mut lm = LanguageModel::new(2, 2, 2, sigma, 0.01, KalmanNoise::Literal);
        lm.set_beta_row(0, 0, &[beta_vals[0], 0.0]);
        lm.set_beta_row(0, 1, &[beta_vals[1], 0.0]);
        lm.set_beta_row(1, 0, &[beta_vals[2], 0.0]);
        lm.set_beta_row(1, 1, &[beta_vals[3], 0.0]);
        let pairs = vec![(0u32, 0u32), (1, 0)];
        let q = acceptance_ratio(
            &lm,
            &pairs,
            Some(Neighbor { epoch: 0, experience: e_a }),
            1,
            e_b,
            e_b,
            Some(Neighbor { epoch: 1, experience: e_c }),
        ).unwrap();
        prop_assert!((q - 1.0).abs() < 1e-12);
    }
}
