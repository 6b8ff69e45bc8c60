//! AUROC of uncertainty scores against answer incorrectness, and the sweep
//! over the number of samples `M`.
//!
//! Orientation is fixed: the positive class is an *incorrect* answer and the
//! score is an uncertainty, so a useful estimator has AUROC above 0.5.

use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::clustering::EquivalenceBackend;
use crate::error::{Error, Result};
use crate::estimators::{score, Estimator, ScoreConfig, ScoreRecord};
use crate::sequence::AnswerSet;
use crate::synthetic::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScore {
    pub question_id: String,
    pub score: f64,
    /// Positive class.
    pub incorrect: bool,
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half. Computed from mid-ranks in `O(n log n)`.
pub fn auroc(items: &[LabeledScore]) -> Result<f64> {
    if let Some(bad) = items.iter().find(|i| !i.score.is_finite()) {
        return Err(Error::NonFiniteScore(bad.question_id.clone()));
    }
    let positives = items.iter().filter(|i| i.incorrect).count();
    let negatives = items.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<&LabeledScore> = items.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score));

    // ranks are 1-based; a tie group spanning ranks lo..=hi gets (lo + hi) / 2
    let mut positive_rank_sum = 0.0_f64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && order[end].score == order[start].score {
            end += 1;
        }
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let tied_positives = order[start..end].iter().filter(|i| i.incorrect).count();
        positive_rank_sum += mid_rank * tied_positives as f64;
        start = end;
    }
    let (p, n) = (positives as f64, negatives as f64);
    let u = positive_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

/// How an answer set is cut down to `m` samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Truncation {
    /// The first `m` samples in sampling order.
    #[default]
    Prefix,
    /// A seeded subset of size `m`, kept in sampling order. The draw depends
    /// on the seed, the question's position in the dataset and `m`.
    RandomSubsample { seed: u64 },
}

pub fn truncate(
    answers: &AnswerSet,
    m: usize,
    truncation: Truncation,
    question_index: usize,
) -> Result<AnswerSet> {
    if m == 0 || m > answers.m() {
        return Err(Error::InsufficientSamples {
            question_id: String::from(answers.question_id()),
            available: answers.m(),
            required: m.max(1),
        });
    }
    match truncation {
        Truncation::Prefix => answers.prefix(m),
        Truncation::RandomSubsample { seed } => {
            let stream = derive_seed(seed, question_index as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(stream, m as u64));
            let mut pool: Vec<usize> = (0..answers.m()).collect();
            for i in 0..m {
                let j = i + (rng.next_u64() % (pool.len() - i) as u64) as usize;
                pool.swap(i, j);
            }
            let mut chosen = pool[..m].to_vec();
            chosen.sort_unstable();
            answers.select(&chosen)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub estimator: Estimator,
    pub m: usize,
    pub auroc: f64,
    /// Questions that contributed to the AUROC.
    pub n_questions: usize,
    /// Questions dropped because the estimator's preconditions failed.
    pub excluded: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepConfig {
    pub truncation: Truncation,
    pub score: ScoreConfig,
}

/// AUROC per estimator over already-scored questions. `records` pairs each
/// score record with its incorrectness label; excluded scores are dropped.
pub fn evaluate_records(
    estimators: &[Estimator],
    m: usize,
    records: &[(ScoreRecord, bool)],
) -> Result<Vec<SweepResult>> {
    estimators
        .iter()
        .map(|&estimator| {
            let items: Vec<LabeledScore> = records
                .iter()
                .filter_map(|(r, incorrect)| {
                    r.get(estimator).map(|score| LabeledScore {
                        question_id: r.question_id.clone(),
                        score,
                        incorrect: *incorrect,
                    })
                })
                .collect();
            Ok(SweepResult {
                estimator,
                m,
                auroc: auroc(&items)?,
                n_questions: items.len(),
                excluded: records.len() - items.len(),
            })
        })
        .collect()
}

/// Scores every question at each `m` and reports AUROC per estimator,
/// ordered by `m` then by the order of `estimators`.
pub fn sweep_m<B: EquivalenceBackend + ?Sized>(
    dataset: &[AnswerSet],
    m_values: &[usize],
    estimators: &[Estimator],
    config: &SweepConfig,
    backend: &B,
) -> Result<Vec<SweepResult>> {
    check_sweep_inputs(dataset, m_values)?;
    let mut results = Vec::new();
    for &m in m_values {
        let records = dataset
            .iter()
            .enumerate()
            .map(|(i, answers)| {
                let cut = truncate(answers, m, config.truncation, i)?;
                let incorrect = !answers.correct().expect("checked above");
                Ok((score(&cut, estimators, &config.score, backend), incorrect))
            })
            .collect::<Result<Vec<_>>>()?;
        results.extend(evaluate_records(estimators, m, &records)?);
    }
    Ok(results)
}

/// Every question labeled and holding at least `max(m_values)` samples.
pub fn check_sweep_inputs(dataset: &[AnswerSet], m_values: &[usize]) -> Result<()> {
    let needed = m_values.iter().copied().max().unwrap_or(1).max(1);
    for answers in dataset {
        if answers.correct().is_none() {
            return Err(Error::MissingLabel(String::from(answers.question_id())));
        }
        if answers.m() < needed || m_values.contains(&0) {
            return Err(Error::InsufficientSamples {
                question_id: String::from(answers.question_id()),
                available: answers.m(),
                required: needed,
            });
        }
    }
    Ok(())
}
