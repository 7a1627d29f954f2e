mod common;

use bitext::mtmetrics::{bleu_corpus, chrf_pp, evaluate, rouge_l_corpus, tokenize_13a, BleuOptions};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

#[test]
fn thousand_random_corpora_match_the_oracles() {
    let mut rng = common::rng(0xB1E0);
    for case in 0..1000 {
        let segments = 1 + case % 6;
        let (h, r) = common::corpus(&mut rng, segments);
        let b = bleu_corpus(&h, &r, BleuOptions::default()).unwrap();
        let c = chrf_pp(&h, &r).unwrap();
        let l = rouge_l_corpus(&h, &r);
        let (ob, oc, ol) = (common::bleu(&h, &r), common::chrf_pp(&h, &r), common::rouge_l(&h, &r));
        assert!((b - ob).abs() <= TOL, "bleu {b} vs {ob} on {h:?} / {r:?}");
        assert!((c - oc).abs() <= TOL, "chrf {c} vs {oc} on {h:?} / {r:?}");
        assert!((l - ol).abs() <= TOL, "rouge {l} vs {ol} on {h:?} / {r:?}");
    }
}

#[test]
fn perfect_corpora_score_exactly_100() {
    let mut rng = common::rng(7);
    for _ in 0..200 {
        let n = 1 + (common::sentence(&mut rng, 3).len() % 5);
        let refs: Vec<String> = (0..n)
            .map(|_| common::sentence(&mut rng, 10))
            .map(|s| {
                if s.chars().any(char::is_alphanumeric) {
                    s
                } else {
                    "fallback word".into()
                }
            })
            .collect();
        let m = evaluate(&refs, &refs).unwrap();
        assert_eq!((m.bleu, m.chrf_pp, m.rouge_l), (100.0, 100.0, 100.0), "{refs:?}");
    }
}

#[test]
fn hand_computed_brevity_case() {
    let b = bleu_corpus(&["a b c d".into()], &["a b c d e".into()], BleuOptions::default()).unwrap();
    assert!((b - 100.0 * (1.0f64 - 5.0 / 4.0).exp()).abs() < 1e-9);
    assert!((b - 77.88).abs() < 0.01);
}

fn text_strategy() -> impl Strategy<Value = String> {
    // ASCII printable plus digits-heavy runs, newlines, entities and Arabic.
    let atom = prop_oneof![
        "[ -~]{0,6}",
        "[0-9.,-]{1,5}",
        Just("&quot;".to_string()),
        Just("&amp;".to_string()),
        Just("<skipped>".to_string()),
        Just("-\n".to_string()),
        Just("\n".to_string()),
        Just("كتاب".to_string()),
        Just("\u{a0}".to_string()),
    ];
    prop::collection::vec(atom, 0..8).prop_map(|v| v.concat())
}

proptest! {
    #[test]
    fn tokenizer_matches_char_loop(s in text_strategy()) {
        prop_assert_eq!(tokenize_13a(&s), common::tokenize(&s));
    }

    #[test]
    fn metrics_stay_in_range(h in text_strategy(), r in text_strategy()) {
        let (h, r) = (vec![h], vec![r]);
        for v in [
            bleu_corpus(&h, &r, BleuOptions::default()).unwrap(),
            chrf_pp(&h, &r).unwrap(),
            rouge_l_corpus(&h, &r),
        ] {
            prop_assert!((0.0..=100.0 + 1e-9).contains(&v), "{}", v);
        }
    }

    #[test]
    fn scores_do_not_depend_on_parallelism(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (h, r) = common::corpus(&mut rng, 20);
        bitext::set_parallelism(false);
        let a = evaluate(&h, &r).unwrap();
        bitext::set_parallelism(true);
        let b = evaluate(&h, &r).unwrap();
        prop_assert_eq!(a, b);
    }
}
