//! Sequence-probability arithmetic over sampled answers.
//!
//! All log-probabilities are natural logs. A [`GeneratedSequence`] holds the
//! conditional log-probabilities of its tokens `t_1..t_N` and, separately,
//! the log-probability of the end-of-sequence step that closed it. Only
//! EOS-terminated sequences are mutually exclusive events, so only
//! [`ProbMode::EosInclusive`] masses can be summed into a probability.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, exp};

/// Observed mass in `[1, 1 + MASS_TOLERANCE]` is treated as exactly 1.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Maximum joint log-probability disagreement between two samples of the
/// same token path.
pub const DUPLICATE_TOLERANCE: f64 = 1e-6;

/// One sampled answer.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSequence {
    token_texts: Vec<String>,
    token_logprobs: Vec<f64>,
    eos_logprob: Option<f64>,
    text: String,
}

impl GeneratedSequence {
    /// Builds a sequence; `token_texts` excludes the EOS token.
    pub fn new(
        token_texts: Vec<String>,
        token_logprobs: Vec<f64>,
        eos_logprob: Option<f64>,
        text: String,
    ) -> Result<Self> {
        if token_texts.len() != token_logprobs.len() {
            return Err(Error::InvalidSequence(format!(
                "{} tokens but {} log-probabilities",
                token_texts.len(),
                token_logprobs.len()
            )));
        }
        for (i, &lp) in token_logprobs.iter().enumerate() {
            check_logprob(lp).map_err(|why| {
                Error::InvalidSequence(format!("token {i} log-probability {lp} {why}"))
            })?;
        }
        if let Some(lp) = eos_logprob {
            check_logprob(lp)
                .map_err(|why| Error::InvalidSequence(format!("EOS log-probability {lp} {why}")))?;
        }
        Ok(Self {
            token_texts,
            token_logprobs,
            eos_logprob,
            text,
        })
    }

    /// Convenience constructor whose text is the tokens joined by single spaces.
    pub fn from_tokens<S: AsRef<str>>(
        tokens: &[S],
        token_logprobs: &[f64],
        eos_logprob: Option<f64>,
    ) -> Result<Self> {
        let token_texts: Vec<String> = tokens.iter().map(|t| String::from(t.as_ref())).collect();
        let text = token_texts.join(" ");
        Self::new(token_texts, token_logprobs.to_vec(), eos_logprob, text)
    }

    pub fn token_texts(&self) -> &[String] {
        &self.token_texts
    }

    pub fn token_logprobs(&self) -> &[f64] {
        &self.token_logprobs
    }

    pub fn eos_logprob(&self) -> Option<f64> {
        self.eos_logprob
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Number of tokens, EOS excluded.
    pub fn len(&self) -> usize {
        self.token_texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_texts.is_empty()
    }

    /// `log p(s|x)`: the sum of token log-probabilities, plus the EOS step
    /// when `include_eos` is set.
    pub fn joint_logprob(&self, include_eos: bool) -> Result<f64> {
        let eos = if include_eos {
            Some(self.eos_logprob.ok_or(Error::MissingEos)?)
        } else if self.is_empty() {
            return Err(Error::EmptySequence);
        } else {
            None
        };
        let sum: f64 = self.token_logprobs.iter().sum::<f64>() + eos.unwrap_or(0.0);
        Ok(sum.min(0.0))
    }

    /// `log p'(s|x) = (1/N) sum_i log p(t_i|t_<i, x)`, EOS excluded from
    /// both the sum and `N`.
    pub fn length_normalized_logprob(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptySequence);
        }
        let sum: f64 = self.token_logprobs.iter().sum();
        Ok((sum / self.len() as f64).min(0.0))
    }

    fn raw_token_sum(&self) -> f64 {
        self.token_logprobs.iter().sum::<f64>() + self.eos_logprob.unwrap_or(0.0)
    }
}

fn check_logprob(lp: f64) -> core::result::Result<(), &'static str> {
    if !lp.is_finite() {
        Err("is not finite")
    } else if lp > 0.0 {
        Err("is positive")
    } else {
        Ok(())
    }
}

/// Sampling settings of the run that produced an answer set. Descriptive
/// only; no score reads them.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SamplingMeta {
    pub top_k: Option<u32>,
    pub nucleus_p: Option<f64>,
    pub temperature: Option<f64>,
}

impl SamplingMeta {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.nucleus_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidMeta(format!("nucleus_p {p} outside (0, 1]")));
            }
        }
        if let Some(t) = self.temperature {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidMeta(format!(
                    "temperature {t} is not positive"
                )));
            }
        }
        Ok(())
    }
}

/// The `M >= 1` samples drawn for one input, in sampling order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerSet {
    question_id: String,
    question_text: String,
    samples: Vec<GeneratedSequence>,
    correct: Option<bool>,
    meta: SamplingMeta,
}

impl AnswerSet {
    pub fn new(
        question_id: impl Into<String>,
        question_text: impl Into<String>,
        samples: Vec<GeneratedSequence>,
    ) -> Result<Self> {
        let question_id = question_id.into();
        if samples.is_empty() {
            return Err(Error::EmptyAnswerSet(question_id));
        }
        Ok(Self {
            question_id,
            question_text: question_text.into(),
            samples,
            correct: None,
            meta: SamplingMeta::default(),
        })
    }

    /// Attaches the judge verdict for the question's reference answer.
    pub fn with_label(mut self, correct: bool) -> Self {
        self.correct = Some(correct);
        self
    }

    pub fn with_meta(mut self, meta: SamplingMeta) -> Result<Self> {
        meta.validate()?;
        self.meta = meta;
        Ok(self)
    }

    pub fn question_id(&self) -> &str {
        &self.question_id
    }

    pub fn question_text(&self) -> &str {
        &self.question_text
    }

    pub fn samples(&self) -> &[GeneratedSequence] {
        &self.samples
    }

    /// `M`, duplicates included.
    pub fn m(&self) -> usize {
        self.samples.len()
    }

    pub fn correct(&self) -> Option<bool> {
        self.correct
    }

    pub fn meta(&self) -> &SamplingMeta {
        &self.meta
    }

    /// The first `m` samples, keeping labels and metadata.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        self.select(&(0..m).collect::<Vec<_>>())
    }

    /// The samples at `indices` (in the given order), keeping labels and metadata.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.iter().any(|&i| i >= self.m()) || indices.is_empty() {
            return Err(Error::InsufficientSamples {
                question_id: self.question_id.clone(),
                available: self.m(),
                required: indices.iter().map(|i| i + 1).max().unwrap_or(1),
            });
        }
        Ok(Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            question_id: self.question_id.clone(),
            question_text: self.question_text.clone(),
            correct: self.correct,
            meta: self.meta,
        })
    }
}

/// Equality used to collapse repeated samples into the set `A`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum DedupKey {
    /// Token-list equality; two tokenizations of one text stay distinct.
    #[default]
    TokenSequence,
    /// Exact equality of the rendered text.
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniqueAnswer {
    /// First occurrence in sampling order.
    pub representative: GeneratedSequence,
    pub count: usize,
}

/// The set `A` of distinct sampled answers, with multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct UniqueAnswers {
    entries: Vec<UniqueAnswer>,
    key: DedupKey,
}

impl UniqueAnswers {
    pub fn entries(&self) -> &[UniqueAnswer] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn key(&self) -> DedupKey {
        self.key
    }

    /// Sum of counts; equals `M` of the source answer set.
    pub fn total_count(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &UniqueAnswer> {
        self.entries.iter()
    }
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum KeyValue<'a> {
    Tokens(&'a [String]),
    Text(&'a str),
}

/// Collapses samples under `key`, keeping first occurrences in order.
///
/// Under [`DedupKey::TokenSequence`], repeats of a token path must report the
/// same joint log-probability (tokens plus EOS when recorded) within
/// [`DUPLICATE_TOLERANCE`]; otherwise [`Error::InconsistentDuplicate`].
pub fn dedup(answers: &AnswerSet, key: DedupKey) -> Result<UniqueAnswers> {
    let mut index: BTreeMap<KeyValue<'_>, usize> = BTreeMap::new();
    let mut entries: Vec<UniqueAnswer> = Vec::new();
    for sample in answers.samples() {
        let k = match key {
            DedupKey::TokenSequence => KeyValue::Tokens(sample.token_texts()),
            DedupKey::Text => KeyValue::Text(sample.text()),
        };
        match index.get(&k) {
            Some(&i) => {
                let entry = &mut entries[i];
                if key == DedupKey::TokenSequence {
                    let expected = entry.representative.raw_token_sum();
                    let found = sample.raw_token_sum();
                    let eos_mismatch = entry.representative.eos_logprob().is_some()
                        != sample.eos_logprob().is_some();
                    if eos_mismatch || (expected - found).abs() > DUPLICATE_TOLERANCE {
                        return Err(Error::InconsistentDuplicate { expected, found });
                    }
                }
                entry.count += 1;
            }
            None => {
                index.insert(k, entries.len());
                entries.push(UniqueAnswer {
                    representative: sample.clone(),
                    count: 1,
                });
            }
        }
    }
    Ok(UniqueAnswers { entries, key })
}

/// Which sequence probability feeds the unobserved mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbMode {
    /// `p(s|x)` with the EOS step, no normalization.
    EosInclusive,
    /// `p'(s|x)`, length normalized, EOS excluded.
    LengthNormalized,
}

/// `P(A-bar|x) = 1 - sum_{s in A} p(s|x)`; each unique answer counts once.
///
/// Under [`ProbMode::EosInclusive`] the result lies in `[0, 1]`: a mass in
/// `[1, 1 + MASS_TOLERANCE]` yields 0 and anything larger is
/// [`Error::InvalidMass`]. Under [`ProbMode::LengthNormalized`] the result is
/// returned as computed and can be negative.
pub fn unobserved_probability(unique: &UniqueAnswers, mode: ProbMode) -> Result<f64> {
    let terms = unique
        .iter()
        .map(|entry| {
            let lp = match mode {
                ProbMode::EosInclusive => entry.representative.joint_logprob(true)?,
                ProbMode::LengthNormalized => entry.representative.length_normalized_logprob()?,
            };
            Ok(exp(lp))
        })
        .collect::<Result<Vec<f64>>>()?;
    let observed = compensated_sum(terms);
    match mode {
        ProbMode::LengthNormalized => Ok(1.0 - observed),
        ProbMode::EosInclusive => {
            if observed > 1.0 + MASS_TOLERANCE {
                Err(Error::InvalidMass(observed))
            } else {
                Ok((1.0 - observed).clamp(0.0, 1.0))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ln;
    use alloc::vec;

    fn seq(tokens: &[&str], probs: &[f64], eos: Option<f64>) -> GeneratedSequence {
        let lps: Vec<f64> = probs.iter().map(|&p| ln(p)).collect();
        GeneratedSequence::from_tokens(tokens, &lps, eos.map(ln)).unwrap()
    }

    fn vatican() -> AnswerSet {
        AnswerSet::new(
            "vatican",
            "Where are St. Peter's Basilica and the Sistine Chapel?",
            vec![
                seq(&["vatican"], &[0.8], Some(0.6)),
                seq(&["vatican", "city"], &[0.8, 0.4], Some(1.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn joint_logprob_with_eos() {
        let s = seq(&["vatican"], &[0.8], Some(0.6));
        assert!((exp(s.joint_logprob(true).unwrap()) - 0.48).abs() < 1e-12);
        let city = seq(&["vatican", "city"], &[0.8, 0.4], Some(1.0));
        assert!((exp(city.joint_logprob(true).unwrap()) - 0.32).abs() < 1e-12);
    }

    #[test]
    fn joint_logprob_identity_and_errors() {
        let s = GeneratedSequence::from_tokens(&["a"], &[0.0], Some(0.0)).unwrap();
        assert_eq!(s.joint_logprob(true).unwrap(), 0.0);

        let no_eos = GeneratedSequence::from_tokens(&["a"], &[-0.1], None).unwrap();
        assert_eq!(no_eos.joint_logprob(true), Err(Error::MissingEos));
        assert_eq!(no_eos.joint_logprob(false).unwrap(), -0.1);

        let empty = GeneratedSequence::from_tokens::<&str>(&[], &[], Some(-0.5)).unwrap();
        assert_eq!(empty.joint_logprob(true).unwrap(), -0.5);
        assert_eq!(empty.joint_logprob(false), Err(Error::EmptySequence));
        assert_eq!(empty.length_normalized_logprob(), Err(Error::EmptySequence));
    }

    #[test]
    fn construction_rejects_bad_inputs() {
        assert!(matches!(
            GeneratedSequence::from_tokens(&["a", "b"], &[-0.1], None),
            Err(Error::InvalidSequence(_))
        ));
        assert!(GeneratedSequence::from_tokens(&["a"], &[0.1], None).is_err());
        assert!(GeneratedSequence::from_tokens(&["a"], &[f64::NAN], None).is_err());
        assert!(GeneratedSequence::from_tokens(&["a"], &[-0.1], Some(0.2)).is_err());
        assert_eq!(
            AnswerSet::new("q", "", vec![]),
            Err(Error::EmptyAnswerSet("q".into()))
        );
        let meta = SamplingMeta {
            nucleus_p: Some(1.5),
            ..Default::default()
        };
        assert!(vatican().with_meta(meta).is_err());
    }

    #[test]
    fn length_normalization() {
        let s = seq(&["vatican", "city"], &[0.8, 0.4], Some(1.0));
        let lnp = s.length_normalized_logprob().unwrap();
        assert!((lnp - ln(0.32) / 2.0).abs() < 1e-15);

        let one = GeneratedSequence::from_tokens(&["x"], &[-1.0], None).unwrap();
        assert_eq!(one.length_normalized_logprob().unwrap(), -1.0);

        let short = GeneratedSequence::from_tokens(&["a"; 3], &[-0.5; 3], None).unwrap();
        let long = GeneratedSequence::from_tokens(&["a"; 7], &[-0.5; 7], None).unwrap();
        assert_eq!(
            short.length_normalized_logprob().unwrap(),
            long.length_normalized_logprob().unwrap()
        );
    }

    #[test]
    fn dedup_by_text_counts() {
        let a = seq(&["vatican"], &[0.8], Some(0.6));
        let b = seq(&["vatican", "city"], &[0.8, 0.4], Some(1.0));
        let set = AnswerSet::new("q", "", vec![a.clone(), a.clone(), b]).unwrap();
        let unique = dedup(&set, DedupKey::Text).unwrap();
        let counts: Vec<usize> = unique.iter().map(|e| e.count).collect();
        assert_eq!(counts, vec![2, 1]);
        assert_eq!(unique.entries()[0].representative, a);
        assert_eq!(unique.total_count(), 3);
    }

    #[test]
    fn dedup_identical_samples() {
        let a = seq(&["x", "y"], &[0.5, 0.5], Some(0.5));
        let set = AnswerSet::new("q", "", vec![a; 7]).unwrap();
        let unique = dedup(&set, DedupKey::TokenSequence).unwrap();
        assert_eq!(unique.len(), 1);
        assert_eq!(unique.entries()[0].count, 7);
    }

    #[test]
    fn dedup_token_key_separates_tokenizations() {
        let whole =
            GeneratedSequence::new(vec!["rome".into()], vec![-0.2], Some(-0.1), "rome".into())
                .unwrap();
        let split = GeneratedSequence::new(
            vec!["ro".into(), "me".into()],
            vec![-0.3, -0.1],
            Some(-0.1),
            "rome".into(),
        )
        .unwrap();
        let set = AnswerSet::new("q", "", vec![whole, split]).unwrap();
        assert_eq!(dedup(&set, DedupKey::TokenSequence).unwrap().len(), 2);
        assert_eq!(dedup(&set, DedupKey::Text).unwrap().len(), 1);
    }

    #[test]
    fn dedup_flags_inconsistent_duplicates() {
        let a = GeneratedSequence::from_tokens(&["x"], &[-0.5], Some(-0.1)).unwrap();
        let close = GeneratedSequence::from_tokens(&["x"], &[-0.5 + 1e-9], Some(-0.1)).unwrap();
        let far = GeneratedSequence::from_tokens(&["x"], &[-0.4], Some(-0.1)).unwrap();
        let ok = AnswerSet::new("q", "", vec![a.clone(), close]).unwrap();
        assert_eq!(dedup(&ok, DedupKey::TokenSequence).unwrap().len(), 1);
        let bad = AnswerSet::new("q", "", vec![a, far]).unwrap();
        assert!(matches!(
            dedup(&bad, DedupKey::TokenSequence),
            Err(Error::InconsistentDuplicate { .. })
        ));
    }

    #[test]
    fn unobserved_probability_vatican() {
        let unique = dedup(&vatican(), DedupKey::TokenSequence).unwrap();
        let up = unobserved_probability(&unique, ProbMode::EosInclusive).unwrap();
        assert!((up - 0.2).abs() < 1e-12);
    }

    #[test]
    fn unobserved_probability_certain_answer() {
        let s = GeneratedSequence::from_tokens(&["a", "b"], &[0.0, 0.0], Some(0.0)).unwrap();
        let unique = dedup(
            &AnswerSet::new("q", "", vec![s]).unwrap(),
            DedupKey::TokenSequence,
        )
        .unwrap();
        assert_eq!(
            unobserved_probability(&unique, ProbMode::EosInclusive).unwrap(),
            0.0
        );
    }

    #[test]
    fn unobserved_probability_clamp_band() {
        // two answers each claiming 0.5 + tiny overshoot
        let within = ln(0.5 + 2e-7);
        let beyond = ln(0.5 + 1e-3);
        let mk = |lp: f64| {
            let a = GeneratedSequence::from_tokens(&["a"], &[lp], Some(0.0)).unwrap();
            let b = GeneratedSequence::from_tokens(&["b"], &[lp], Some(0.0)).unwrap();
            dedup(
                &AnswerSet::new("q", "", vec![a, b]).unwrap(),
                DedupKey::TokenSequence,
            )
            .unwrap()
        };
        assert_eq!(
            unobserved_probability(&mk(within), ProbMode::EosInclusive).unwrap(),
            0.0
        );
        assert!(matches!(
            unobserved_probability(&mk(beyond), ProbMode::EosInclusive),
            Err(Error::InvalidMass(_))
        ));
        // the length-normalized mass is never clamped
        let ln_up = unobserved_probability(&mk(beyond), ProbMode::LengthNormalized).unwrap();
        assert!((ln_up + 2e-3).abs() < 1e-12);
    }

    #[test]
    fn unobserved_probability_requires_eos() {
        let a = GeneratedSequence::from_tokens(&["a"], &[-0.5], None).unwrap();
        let unique = dedup(
            &AnswerSet::new("q", "", vec![a]).unwrap(),
            DedupKey::TokenSequence,
        )
        .unwrap();
        assert_eq!(
            unobserved_probability(&unique, ProbMode::EosInclusive),
            Err(Error::MissingEos)
        );
        let up = unobserved_probability(&unique, ProbMode::LengthNormalized).unwrap();
        assert!((up - (1.0 - exp(-0.5))).abs() < 1e-15);
    }

    #[test]
    fn prefix_and_select() {
        let set = vatican().with_label(true);
        let p = set.prefix(1).unwrap();
        assert_eq!(p.m(), 1);
        assert_eq!(p.correct(), Some(true));
        assert!(matches!(
            set.prefix(3),
            Err(Error::InsufficientSamples { required: 3, .. })
        ));
        assert_eq!(set.select(&[1]).unwrap().samples()[0].len(), 2);
    }
}
