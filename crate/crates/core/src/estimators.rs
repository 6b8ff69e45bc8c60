//! Uncertainty scores over one answer set.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::clustering::{build_clusters, ClusterAssignment, EquivalenceBackend};
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, exp, ln, shannon_entropy, sqrt};
use crate::sequence::{
    dedup, unobserved_probability, AnswerSet, DedupKey, ProbMode, UniqueAnswers,
};

/// Score names; the string forms are stable CSV/JSON column names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Estimator {
    /// Predictive entropy over length-normalized probabilities.
    E,
    /// Semantic entropy.
    Se,
    /// Discrete semantic entropy.
    Dse,
    /// Unobserved probability with EOS-inclusive joint probabilities.
    EosUp,
    /// Unobserved probability with length-normalized, EOS-free probabilities.
    LnUp,
    /// Unnormalized EOS-inclusive Monte-Carlo entropy. Convergence oracle
    /// only, not one of the compared methods.
    EUnnorm,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Estimator::E,
        Estimator::Se,
        Estimator::Dse,
        Estimator::EosUp,
        Estimator::LnUp,
        Estimator::EUnnorm,
    ];

    /// The five compared methods, without the oracle.
    pub const METHODS: [Estimator; 5] = [
        Estimator::E,
        Estimator::Se,
        Estimator::Dse,
        Estimator::EosUp,
        Estimator::LnUp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::E => "E",
            Estimator::Se => "SE",
            Estimator::Dse => "DSE",
            Estimator::EosUp => "EOS_UP",
            Estimator::LnUp => "LN_UP",
            Estimator::EUnnorm => "E_UNNORM",
        }
    }

    pub fn needs_clusters(self) -> bool {
        matches!(self, Estimator::Se | Estimator::Dse)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownEstimator(pub String);

impl fmt::Display for UnknownEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown estimator {:?}", self.0)
    }
}

impl FromStr for Estimator {
    type Err = UnknownEstimator;

    /// Case-insensitive; `-` is accepted for `_`.
    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_uppercase().replace('-', "_");
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == wanted)
            .ok_or_else(|| UnknownEstimator(String::from(s)))
    }
}

/// How a cluster's `p'` mass is accumulated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ClusterMass {
    /// Each unique answer in the cluster contributes once.
    #[default]
    UniqueAnswers,
    /// Each unique answer contributes once per time it was sampled.
    SampleMultiset,
}

/// `-(1/M) sum_m log p'(s_m|x)` over all `M` draws, duplicates included.
///
/// With `normalize_length = false` the EOS-inclusive joint log-probability
/// replaces `log p'`, which makes the mean an unbiased Monte-Carlo estimate
/// of the true sequence entropy.
pub fn predictive_entropy(answers: &AnswerSet, normalize_length: bool) -> Result<f64> {
    let terms = answers
        .samples()
        .iter()
        .map(|s| {
            if normalize_length {
                s.length_normalized_logprob()
            } else {
                s.joint_logprob(true)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(-compensated_sum(terms) / answers.m() as f64)
}

/// Mean and standard error of the unnormalized Monte-Carlo entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    /// Sample standard deviation of `-log p(s_m|x)` over `sqrt(M)`; zero when `M = 1`.
    pub std_error: f64,
    pub samples: usize,
}

pub fn entropy_monte_carlo(answers: &AnswerSet) -> Result<MonteCarloEstimate> {
    let nll = answers
        .samples()
        .iter()
        .map(|s| s.joint_logprob(true).map(|lp| -lp))
        .collect::<Result<Vec<f64>>>()?;
    let m = nll.len();
    let mean = compensated_sum(nll.clone()) / m as f64;
    let std_error = if m > 1 {
        let ss = compensated_sum(nll.iter().map(|x| (x - mean) * (x - mean)).collect());
        sqrt(ss / (m - 1) as f64 / m as f64)
    } else {
        0.0
    };
    Ok(MonteCarloEstimate {
        mean,
        std_error,
        samples: m,
    })
}

fn check_partition(unique: &UniqueAnswers, clusters: &ClusterAssignment) -> Result<()> {
    if clusters.len() != unique.len() {
        return Err(Error::InvalidPartition(alloc::format!(
            "{} answers assigned but {} unique answers",
            clusters.len(),
            unique.len()
        )));
    }
    Ok(())
}

/// Semantic entropy: cluster masses `p'(C) = sum_{s in C} p'(s|x)` are
/// renormalized to sum to one before taking the Shannon entropy.
pub fn semantic_entropy(
    unique: &UniqueAnswers,
    clusters: &ClusterAssignment,
    mass: ClusterMass,
) -> Result<f64> {
    check_partition(unique, clusters)?;
    let mut per_cluster: Vec<Vec<f64>> = vec![Vec::new(); clusters.num_clusters()];
    for (i, entry) in unique.iter().enumerate() {
        let p = exp(entry.representative.length_normalized_logprob()?);
        let weight = match mass {
            ClusterMass::UniqueAnswers => 1.0,
            ClusterMass::SampleMultiset => entry.count as f64,
        };
        per_cluster[clusters.cluster_of(i)].push(weight * p);
    }
    let masses: Vec<f64> = per_cluster.into_iter().map(compensated_sum).collect();
    let total = compensated_sum(masses.clone());
    if total.is_nan() || total <= 0.0 {
        return Err(Error::DegenerateMass);
    }
    Ok(shannon_entropy(masses.into_iter().map(|m| m / total)))
}

/// Discrete semantic entropy: cluster probability is the fraction of the
/// `M` samples (duplicates included) that fall in the cluster.
pub fn discrete_semantic_entropy(
    unique: &UniqueAnswers,
    clusters: &ClusterAssignment,
) -> Result<f64> {
    check_partition(unique, clusters)?;
    let mut counts = vec![0usize; clusters.num_clusters()];
    for (i, entry) in unique.iter().enumerate() {
        counts[clusters.cluster_of(i)] += entry.count;
    }
    let m = unique.total_count() as f64;
    Ok(shannon_entropy(counts.into_iter().map(|c| c as f64 / m)))
}

/// Unobserved probability from EOS-inclusive joint probabilities, with
/// answers collapsed by token sequence. Always in `[0, 1]`.
pub fn eos_up(answers: &AnswerSet) -> Result<f64> {
    let unique = dedup(answers, DedupKey::TokenSequence)?;
    unobserved_probability(&unique, ProbMode::EosInclusive)
}

/// Unobserved probability from length-normalized, EOS-free probabilities.
/// Not clamped; negative whenever the normalized masses sum past one.
pub fn ln_up(answers: &AnswerSet, key: DedupKey) -> Result<f64> {
    let unique = dedup(answers, key)?;
    unobserved_probability(&unique, ProbMode::LengthNormalized)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreConfig {
    /// Dedup key for LN-UP and for the unique set that SE/DSE cluster.
    /// EOS-UP always collapses by token sequence.
    pub dedup: DedupKey,
    pub cluster_mass: ClusterMass,
}

/// Scores for one question. An estimator whose preconditions fail on this
/// question lands in `excluded` with the reason, never in `scores`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub question_id: String,
    pub m_used: usize,
    pub scores: BTreeMap<Estimator, f64>,
    pub excluded: BTreeMap<Estimator, Error>,
    /// Backend name, when any clustered estimator was requested.
    pub cluster_backend: Option<String>,
}

impl ScoreRecord {
    pub fn get(&self, estimator: Estimator) -> Option<f64> {
        self.scores.get(&estimator).copied()
    }
}

/// Computes each requested estimator on `answers`.
///
/// Clusters are built at most once, and only when SE or DSE is requested.
pub fn score<B: EquivalenceBackend + ?Sized>(
    answers: &AnswerSet,
    estimators: &[Estimator],
    config: &ScoreConfig,
    backend: &B,
) -> ScoreRecord {
    let mut record = ScoreRecord {
        question_id: String::from(answers.question_id()),
        m_used: answers.m(),
        scores: BTreeMap::new(),
        excluded: BTreeMap::new(),
        cluster_backend: None,
    };
    let mut clustered: Option<Result<(UniqueAnswers, ClusterAssignment)>> = None;
    for &estimator in estimators {
        let value = match estimator {
            Estimator::E => predictive_entropy(answers, true),
            Estimator::EUnnorm => predictive_entropy(answers, false),
            Estimator::EosUp => eos_up(answers),
            Estimator::LnUp => ln_up(answers, config.dedup),
            Estimator::Se | Estimator::Dse => {
                record.cluster_backend = Some(String::from(backend.name()));
                let parts = clustered.get_or_insert_with(|| {
                    let unique = dedup(answers, config.dedup)?;
                    let clusters = build_clusters(&unique, backend, answers.question_text())?;
                    Ok((unique, clusters))
                });
                match parts {
                    Ok((unique, clusters)) if estimator == Estimator::Se => {
                        semantic_entropy(unique, clusters, config.cluster_mass)
                    }
                    Ok((unique, clusters)) => discrete_semantic_entropy(unique, clusters),
                    Err(e) => Err(e.clone()),
                }
            }
        };
        match value {
            Ok(v) => {
                record.scores.insert(estimator, v);
            }
            Err(e) => {
                record.excluded.insert(estimator, e);
            }
        }
    }
    record
}

/// `ln(n)` for bounding entropies over `n` outcomes.
pub fn max_entropy(n: usize) -> f64 {
    ln(n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::ExactMatch;
    use crate::sequence::GeneratedSequence;

    fn seq_p(tokens: &[&str], probs: &[f64], eos: Option<f64>) -> GeneratedSequence {
        let lps: Vec<f64> = probs.iter().map(|&p| ln(p)).collect();
        GeneratedSequence::from_tokens(tokens, &lps, eos.map(ln)).unwrap()
    }

    fn set(samples: Vec<GeneratedSequence>) -> AnswerSet {
        AnswerSet::new("q", "question?", samples).unwrap()
    }

    fn vatican() -> AnswerSet {
        set(vec![
            seq_p(&["vatican"], &[0.8], Some(0.6)),
            seq_p(&["vatican", "city"], &[0.8, 0.4], Some(1.0)),
        ])
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.name().parse::<Estimator>().unwrap(), e);
        }
        assert_eq!("eos_up".parse::<Estimator>().unwrap(), Estimator::EosUp);
        assert_eq!("ln-up".parse::<Estimator>().unwrap(), Estimator::LnUp);
        assert!("entropy".parse::<Estimator>().is_err());
    }

    #[test]
    fn predictive_entropy_single_and_duplicates() {
        let s = seq_p(&["a"], &[0.5], Some(1.0));
        let one = predictive_entropy(&set(vec![s.clone()]), true).unwrap();
        assert!((one - core::f64::consts::LN_2).abs() < 1e-15);
        let two = predictive_entropy(&set(vec![s.clone(), s]), true).unwrap();
        assert!((two - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn predictive_entropy_errors() {
        let no_eos = GeneratedSequence::from_tokens(&["a"], &[-0.3], None).unwrap();
        assert_eq!(
            predictive_entropy(&set(vec![no_eos.clone()]), false),
            Err(Error::MissingEos)
        );
        assert!(predictive_entropy(&set(vec![no_eos]), true).is_ok());
        let empty = GeneratedSequence::from_tokens::<&str>(&[], &[], Some(0.0)).unwrap();
        assert_eq!(
            predictive_entropy(&set(vec![empty]), true),
            Err(Error::EmptySequence)
        );
    }

    #[test]
    fn semantic_entropy_fixtures() {
        let answers = set(vec![
            seq_p(&["a"], &[0.3], Some(1.0)),
            seq_p(&["b"], &[0.3], Some(1.0)),
        ]);
        let unique = dedup(&answers, DedupKey::TokenSequence).unwrap();
        let one = ClusterAssignment::from_labels(vec![0, 0]).unwrap();
        assert_eq!(
            semantic_entropy(&unique, &one, ClusterMass::UniqueAnswers).unwrap(),
            0.0
        );
        let two = ClusterAssignment::singletons(2).unwrap();
        let se = semantic_entropy(&unique, &two, ClusterMass::UniqueAnswers).unwrap();
        assert!((se - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn semantic_entropy_singletons_match_renormalized_shannon() {
        // p' = 0.5, 0.3, 0.2 renormalize to themselves; oracle value computed by hand
        let answers = set(vec![
            seq_p(&["a"], &[0.5], Some(1.0)),
            seq_p(&["b", "b"], &[0.3, 0.3], Some(1.0)),
            seq_p(&["c"], &[0.2], Some(1.0)),
        ]);
        let unique = dedup(&answers, DedupKey::TokenSequence).unwrap();
        let se = semantic_entropy(
            &unique,
            &ClusterAssignment::singletons(3).unwrap(),
            ClusterMass::UniqueAnswers,
        )
        .unwrap();
        assert!((se - 1.0296530140645737).abs() < 1e-12);
    }

    #[test]
    fn semantic_entropy_unique_vs_multiset_mass() {
        let a = seq_p(&["a"], &[0.4], Some(1.0));
        let b = seq_p(&["b"], &[0.4], Some(1.0));
        let answers = set(vec![a.clone(), a.clone(), a, b]);
        let unique = dedup(&answers, DedupKey::TokenSequence).unwrap();
        let clusters = ClusterAssignment::singletons(2).unwrap();
        let se = semantic_entropy(&unique, &clusters, ClusterMass::UniqueAnswers).unwrap();
        assert!((se - core::f64::consts::LN_2).abs() < 1e-15);
        let multi = semantic_entropy(&unique, &clusters, ClusterMass::SampleMultiset).unwrap();
        let dse = discrete_semantic_entropy(&unique, &clusters).unwrap();
        assert!((multi - dse).abs() < 1e-15);
    }

    #[test]
    fn semantic_entropy_errors() {
        let answers = set(vec![
            seq_p(&["a"], &[0.5], Some(1.0)),
            seq_p(&["b"], &[0.5], Some(1.0)),
        ]);
        let unique = dedup(&answers, DedupKey::TokenSequence).unwrap();
        let wrong = ClusterAssignment::singletons(3).unwrap();
        assert!(matches!(
            semantic_entropy(&unique, &wrong, ClusterMass::UniqueAnswers),
            Err(Error::InvalidPartition(_))
        ));
        assert!(matches!(
            discrete_semantic_entropy(&unique, &wrong),
            Err(Error::InvalidPartition(_))
        ));

        // masses underflow to zero
        let tiny = set(vec![GeneratedSequence::from_tokens(
            &["z"],
            &[-800.0],
            Some(0.0),
        )
        .unwrap()]);
        let unique = dedup(&tiny, DedupKey::TokenSequence).unwrap();
        assert_eq!(
            semantic_entropy(
                &unique,
                &ClusterAssignment::singletons(1).unwrap(),
                ClusterMass::UniqueAnswers
            ),
            Err(Error::DegenerateMass)
        );
    }

    #[test]
    fn discrete_semantic_entropy_fixtures() {
        let a = seq_p(&["a"], &[0.9], Some(1.0));
        let b = seq_p(&["b"], &[0.1], Some(1.0));
        let single = set(vec![a.clone(), a.clone(), a.clone()]);
        let unique = dedup(&single, DedupKey::TokenSequence).unwrap();
        assert_eq!(
            discrete_semantic_entropy(&unique, &ClusterAssignment::singletons(1).unwrap()).unwrap(),
            0.0
        );

        let even = set(vec![a.clone(), b.clone(), a.clone(), b.clone()]);
        let unique = dedup(&even, DedupKey::TokenSequence).unwrap();
        let dse =
            discrete_semantic_entropy(&unique, &ClusterAssignment::singletons(2).unwrap()).unwrap();
        assert!((dse - core::f64::consts::LN_2).abs() < 1e-15);

        let split = set(vec![a.clone(), a, b]);
        let unique = dedup(&split, DedupKey::TokenSequence).unwrap();
        let dse =
            discrete_semantic_entropy(&unique, &ClusterAssignment::singletons(2).unwrap()).unwrap();
        assert!((dse - 0.6365141682948128).abs() < 1e-12);
    }

    #[test]
    fn eos_up_fixtures() {
        assert!((eos_up(&vatican()).unwrap() - 0.2).abs() < 1e-12);
        let certain = set(vec![GeneratedSequence::from_tokens(
            &["a", "b"],
            &[0.0, 0.0],
            Some(0.0),
        )
        .unwrap()]);
        assert_eq!(eos_up(&certain).unwrap(), 0.0);
        let missing = set(vec![
            GeneratedSequence::from_tokens(&["a"], &[-0.1], None).unwrap()
        ]);
        assert_eq!(eos_up(&missing), Err(Error::MissingEos));
    }

    #[test]
    fn ln_up_fixtures() {
        let one = set(vec![seq_p(&["a"], &[0.7], None)]);
        assert!((ln_up(&one, DedupKey::TokenSequence).unwrap() - 0.3).abs() < 1e-15);

        let two = set(vec![
            seq_p(&["a"], &[0.9], None),
            seq_p(&["b"], &[0.8], None),
        ]);
        assert!((ln_up(&two, DedupKey::TokenSequence).unwrap() + 0.7).abs() < 1e-15);

        let v = ln_up(&vatican(), DedupKey::TokenSequence).unwrap();
        assert!((v - -0.36568542494923806).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_standard_error() {
        let a = seq_p(&["a"], &[0.5], Some(1.0));
        let b = seq_p(&["b"], &[0.25], Some(1.0));
        let est = entropy_monte_carlo(&set(vec![a.clone(), b])).unwrap();
        let (x, y) = (ln(2.0), ln(4.0));
        assert!((est.mean - (x + y) / 2.0).abs() < 1e-15);
        // sample sd of two points is |x - y| / sqrt(2); SE divides by sqrt(2) again
        assert!((est.std_error - (y - x) / 2.0).abs() < 1e-15);
        assert_eq!(entropy_monte_carlo(&set(vec![a])).unwrap().std_error, 0.0);
    }

    #[test]
    fn score_collects_exclusions() {
        let answers = set(vec![
            GeneratedSequence::from_tokens(&["a"], &[-0.2], None).unwrap(),
            GeneratedSequence::from_tokens(&["b"], &[-1.0], None).unwrap(),
        ]);
        let record = score(
            &answers,
            &Estimator::ALL,
            &ScoreConfig::default(),
            &ExactMatch,
        );
        assert_eq!(record.m_used, 2);
        assert_eq!(
            record.excluded.get(&Estimator::EosUp),
            Some(&Error::MissingEos)
        );
        assert_eq!(
            record.excluded.get(&Estimator::EUnnorm),
            Some(&Error::MissingEos)
        );
        assert!(record.get(Estimator::E).is_some());
        assert!((record.get(Estimator::Dse).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(record.cluster_backend.as_deref(), Some("exact"));

        let no_clusters = score(
            &answers,
            &[Estimator::E],
            &ScoreConfig::default(),
            &ExactMatch,
        );
        assert_eq!(no_clusters.cluster_backend, None);
    }
}
