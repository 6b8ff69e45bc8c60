use proptest::prelude::*;

use uqkit_core::clustering::{build_clusters, ClusterAssignment, ExactMatch};
use uqkit_core::estimators::{
    discrete_semantic_entropy, eos_up, ln_up, score, semantic_entropy, ClusterMass, Estimator,
    ScoreConfig,
};
use uqkit_core::eval::{auroc, evaluate_records, sweep_m, LabeledScore, SweepConfig};
use uqkit_core::sequence::{dedup, AnswerSet, DedupKey, GeneratedSequence};
use uqkit_core::synthetic::{random_tree, RandomTreeConfig, SequenceTree, EOS_SYMBOL};

fn tree_config() -> impl Strategy<Value = RandomTreeConfig> {
    (2usize..=4, 1usize..=3, 0.0f64..6.0).prop_map(|(vocab_size, max_depth, sharpness)| {
        RandomTreeConfig {
            vocab_size,
            max_depth,
            sharpness,
            ..RandomTreeConfig::default()
        }
    })
}

fn sampled_set() -> impl Strategy<Value = AnswerSet> {
    (tree_config(), any::<u64>(), 1usize..30)
        .prop_map(|(config, seed, m)| random_tree(&config, seed).unwrap().sample(m, seed ^ 0xA5A5))
}

/// Token-level fixture: `lps[i]` are per-token logprobs of answer `i`.
fn answers_from(lps: &[Vec<f64>]) -> AnswerSet {
    let samples = lps
        .iter()
        .enumerate()
        .map(|(i, tokens)| {
            let texts: Vec<String> = (0..tokens.len()).map(|k| format!("a{i}_{k}")).collect();
            GeneratedSequence::from_tokens(&texts, tokens, Some(-0.05)).unwrap()
        })
        .collect();
    AnswerSet::new("q", "", samples).unwrap()
}

proptest! {
    #[test]
    fn eos_up_never_increases_when_appending(answers in sampled_set()) {
        let mut previous = eos_up(&answers.prefix(1).unwrap()).unwrap();
        prop_assert!((0.0..=1.0).contains(&previous));
        for k in 2..=answers.m() {
            let current = eos_up(&answers.prefix(k).unwrap()).unwrap();
            prop_assert!(current <= previous + 1e-12, "{current} > {previous} at k={k}");
            previous = current;
        }
    }

    #[test]
    fn dedup_counts_reexpand_to_m(answers in sampled_set()) {
        for key in [DedupKey::TokenSequence, DedupKey::Text] {
            let unique = dedup(&answers, key).unwrap();
            prop_assert_eq!(unique.total_count(), answers.m());
            prop_assert!(unique.len() <= answers.m());
        }
    }

    #[test]
    fn entropy_bounds(answers in sampled_set()) {
        let record = score(&answers, &Estimator::ALL, &ScoreConfig::default(), &ExactMatch);
        let unique = dedup(&answers, DedupKey::TokenSequence).unwrap();
        prop_assert!(record.excluded.is_empty(), "{:?}", record.excluded);
        prop_assert!(record.get(Estimator::Se).unwrap() >= 0.0);
        prop_assert!(record.get(Estimator::Dse).unwrap() >= 0.0);
        prop_assert!(record.get(Estimator::Dse).unwrap() <= (unique.len() as f64).ln() + 1e-12);
        prop_assert!(record.get(Estimator::Dse).unwrap() <= (answers.m() as f64).ln() + 1e-12);
        prop_assert!(record.get(Estimator::E).unwrap() >= 0.0);
        let up = record.get(Estimator::EosUp).unwrap();
        prop_assert!((0.0..=1.0).contains(&up));
    }

    #[test]
    fn semantic_entropy_is_scale_invariant(
        lps in prop::collection::vec(prop::collection::vec(-3.0f64..-0.01, 1..5), 1..8),
        labels in prop::collection::vec(0usize..3, 8),
        shift in -2.0f64..0.0,
    ) {
        let shifted: Vec<Vec<f64>> = lps.iter().map(|t| t.iter().map(|x| x + shift).collect()).collect();
        let base = answers_from(&lps);
        let scaled = answers_from(&shifted);
        let mut ids: Vec<usize> = labels[..lps.len()].to_vec();
        // make ids dense
        let mut seen = Vec::new();
        for id in ids.iter_mut() {
            *id = match seen.iter().position(|s| s == id) {
                Some(p) => p,
                None => { seen.push(*id); seen.len() - 1 }
            };
        }
        let clusters = ClusterAssignment::from_labels(ids).unwrap();
        let a = semantic_entropy(&dedup(&base, DedupKey::TokenSequence).unwrap(), &clusters, ClusterMass::UniqueAnswers).unwrap();
        let b = semantic_entropy(&dedup(&scaled, DedupKey::TokenSequence).unwrap(), &clusters, ClusterMass::UniqueAnswers).unwrap();
        prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        prop_assert!(a >= 0.0 && a <= (clusters.num_clusters() as f64).ln() + 1e-12);
    }

    #[test]
    fn semantic_entropy_equals_discrete_when_equiprobable(
        k in 1usize..10,
        lp in -2.0f64..-0.01,
        labels in prop::collection::vec(0usize..4, 10),
    ) {
        let answers = answers_from(&vec![vec![lp]; k]);
        let mut seen = Vec::new();
        let ids: Vec<usize> = labels[..k].iter().map(|l| match seen.iter().position(|s| s == l) {
            Some(p) => p,
            None => { seen.push(*l); seen.len() - 1 }
        }).collect();
        let clusters = ClusterAssignment::from_labels(ids).unwrap();
        let unique = dedup(&answers, DedupKey::TokenSequence).unwrap();
        let se = semantic_entropy(&unique, &clusters, ClusterMass::UniqueAnswers).unwrap();
        let dse = discrete_semantic_entropy(&unique, &clusters).unwrap();
        prop_assert!((se - dse).abs() < 1e-12);
    }

    #[test]
    fn auroc_monotone_invariance_and_complement(
        raw in prop::collection::vec((0i32..20, any::<bool>()), 2..120),
    ) {
        prop_assume!(raw.iter().any(|r| r.1) && raw.iter().any(|r| !r.1));
        let mk = |f: &dyn Fn(f64) -> f64| -> Vec<LabeledScore> {
            raw.iter().enumerate().map(|(i, &(s, y))| LabeledScore {
                question_id: i.to_string(), score: f(s as f64), incorrect: y,
            }).collect()
        };
        let base = auroc(&mk(&|x| x)).unwrap();
        let transformed = auroc(&mk(&|x| (x / 4.0).exp() + x * x * x)).unwrap();
        prop_assert_eq!(base, transformed);
        let negated = auroc(&mk(&|x| -x)).unwrap();
        prop_assert!((base - (1.0 - negated)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn single_sample_rankings_coincide(
        seeds in prop::collection::vec(any::<u64>(), 4..40),
        labels in prop::collection::vec(any::<bool>(), 40),
    ) {
        let config = RandomTreeConfig { vocab_size: 3, max_depth: 3, sharpness: 2.0, ..Default::default() };
        let dataset: Vec<AnswerSet> = seeds.iter().zip(&labels).map(|(&s, &correct)| {
            random_tree(&config, s).unwrap().sample(1, s.wrapping_add(1)).with_label(correct)
        }).collect();
        prop_assume!(labels[..seeds.len()].iter().any(|&b| b) && labels[..seeds.len()].iter().any(|&b| !b));
        let estimators = [Estimator::E, Estimator::LnUp, Estimator::EUnnorm, Estimator::EosUp];
        let results = sweep_m(&dataset, &[1], &estimators, &SweepConfig::default(), &ExactMatch).unwrap();
        prop_assert_eq!(results[0].auroc.to_bits(), results[1].auroc.to_bits());
        prop_assert_eq!(results[2].auroc.to_bits(), results[3].auroc.to_bits());
    }
}

#[test]
fn full_m_sweep_equals_direct_scoring() {
    let config = RandomTreeConfig::default();
    let dataset: Vec<AnswerSet> = (0..30u64)
        .map(|s| {
            random_tree(&config, s)
                .unwrap()
                .sample(6, s)
                .with_label(s % 3 == 0)
        })
        .collect();
    let estimators = Estimator::METHODS;
    let swept = sweep_m(
        &dataset,
        &[6],
        &estimators,
        &SweepConfig::default(),
        &ExactMatch,
    )
    .unwrap();
    let direct: Vec<_> = dataset
        .iter()
        .map(|a| {
            (
                score(a, &estimators, &ScoreConfig::default(), &ExactMatch),
                !a.correct().unwrap(),
            )
        })
        .collect();
    assert_eq!(swept, evaluate_records(&estimators, 6, &direct).unwrap());
}

fn uniform_binary(depth: usize) -> SequenceTree {
    let mut builder = SequenceTree::builder(&["a", "b"], depth);
    let mut level: Vec<Vec<&str>> = vec![vec![]];
    for d in 0..=depth {
        let mut next = Vec::new();
        for prefix in &level {
            if d == depth {
                builder = builder.node(prefix, &[(EOS_SYMBOL, 1.0)]);
            } else {
                builder = builder.node(prefix, &[("a", 0.5), ("b", 0.5)]);
                for t in ["a", "b"] {
                    let mut child = prefix.clone();
                    child.push(t);
                    next.push(child);
                }
            }
        }
        level = next;
    }
    builder.build().unwrap()
}

#[test]
fn length_normalization_breaks_probability_semantics() {
    // 16 complete sequences, p = 1/16 each, but p' = 0.5 each
    let tree = uniform_binary(4);
    let all = tree.enumerate_all().unwrap();
    assert_eq!(all.len(), 16);
    let samples: Vec<GeneratedSequence> = all
        .iter()
        .map(|s| {
            GeneratedSequence::from_tokens(&tree.render(&s.tokens), &[0.5f64.ln(); 4], Some(0.0))
                .unwrap()
        })
        .collect();
    let normalized_mass: f64 = samples
        .iter()
        .map(|s| s.length_normalized_logprob().unwrap().exp())
        .sum();
    assert!(normalized_mass > 1.0);
    let answers = AnswerSet::new("q", "", samples).unwrap();
    assert!((ln_up(&answers, DedupKey::TokenSequence).unwrap() - -7.0).abs() < 1e-12);
    assert!(eos_up(&answers).unwrap().abs() < 1e-12);
}

#[test]
fn clusters_from_exact_backend_count_distinct_texts() {
    let answers = answers_from(&[vec![-0.1], vec![-0.2], vec![-0.3]]);
    let unique = dedup(&answers, DedupKey::TokenSequence).unwrap();
    assert_eq!(
        build_clusters(&unique, &ExactMatch, "")
            .unwrap()
            .num_clusters(),
        3
    );
}
