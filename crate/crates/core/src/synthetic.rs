//! An exactly enumerable autoregressive sequence model.
//!
//! A [`SequenceTree`] stores, for each reachable token prefix, a conditional
//! distribution over the vocabulary plus EOS. Complete (EOS-terminated)
//! sequences partition the event space, so their path probabilities sum to
//! one and every quantity an estimator approximates can be computed exactly.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, ln, shannon_entropy};
use crate::sequence::{AnswerSet, GeneratedSequence};

/// Spelling of the end-of-sequence symbol in distributions and specs.
pub const EOS_SYMBOL: &str = "<eos>";

/// Per-node tolerance on the sum of conditional probabilities.
pub const NODE_SUM_TOLERANCE: f64 = 1e-12;

/// Default cap on the number of complete sequences [`SequenceTree::enumerate_all`] materializes.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

/// A complete sequence of token indices (EOS excluded) and its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct CompleteSequence {
    pub tokens: Vec<usize>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTree {
    vocab: Vec<String>,
    /// prefix -> probabilities indexed by token, EOS last
    nodes: BTreeMap<Vec<usize>, Vec<f64>>,
    max_depth: usize,
}

impl SequenceTree {
    pub fn builder<S: AsRef<str>>(vocab: &[S], max_depth: usize) -> SequenceTreeBuilder {
        SequenceTreeBuilder {
            vocab: vocab.iter().map(|s| String::from(s.as_ref())).collect(),
            max_depth,
            nodes: Vec::new(),
        }
    }

    /// Builds a tree from dense distributions (`vocab.len() + 1` entries per
    /// node, EOS last) and validates it.
    pub fn from_parts(
        vocab: Vec<String>,
        nodes: BTreeMap<Vec<usize>, Vec<f64>>,
        max_depth: usize,
    ) -> Result<Self> {
        let tree = Self {
            vocab,
            nodes,
            max_depth,
        };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<()> {
        let v = self.vocab.len();
        let mut seen = BTreeSet::new();
        for tok in &self.vocab {
            if tok.is_empty() || tok == EOS_SYMBOL || !seen.insert(tok.as_str()) {
                return Err(Error::InvalidTree(format!(
                    "bad or duplicate vocabulary entry {tok:?}"
                )));
            }
        }
        if !self.nodes.contains_key(&Vec::new()) {
            return Err(Error::InvalidTree(String::from("missing root node")));
        }
        for (prefix, dist) in &self.nodes {
            let at = || self.render(prefix).join(" ");
            if dist.len() != v + 1 {
                return Err(Error::InvalidTree(format!(
                    "node [{}] has {} entries, expected {}",
                    at(),
                    dist.len(),
                    v + 1
                )));
            }
            if prefix.iter().any(|&t| t >= v) {
                return Err(Error::InvalidTree(String::from(
                    "prefix uses a token outside the vocabulary",
                )));
            }
            if let Some(p) = dist
                .iter()
                .find(|p| !(p.is_finite() && **p >= 0.0 && **p <= 1.0))
            {
                return Err(Error::InvalidTree(format!(
                    "node [{}] has probability {p}",
                    at()
                )));
            }
            let sum: f64 = compensated_sum(dist.clone());
            if (sum - 1.0).abs() > NODE_SUM_TOLERANCE {
                return Err(Error::InvalidTree(format!("node [{}] sums to {sum}", at())));
            }
            if prefix.len() > self.max_depth {
                return Err(Error::InvalidTree(format!(
                    "node [{}] is deeper than max_depth",
                    at()
                )));
            }
            if prefix.len() == self.max_depth && dist[..v].iter().any(|&p| p > 0.0) {
                return Err(Error::InvalidTree(format!(
                    "node [{}] at max_depth must end with probability 1",
                    at()
                )));
            }
            for (t, &p) in dist[..v].iter().enumerate() {
                if p > 0.0 {
                    let mut child = prefix.clone();
                    child.push(t);
                    if !self.nodes.contains_key(&child) {
                        return Err(Error::InvalidTree(format!(
                            "node [{}] is missing though reachable",
                            self.render(&child).join(" ")
                        )));
                    }
                }
            }
            if let Some((&last, parent)) = prefix.split_last() {
                let reachable = self.nodes.get(parent).is_some_and(|d| d[last] > 0.0);
                if !reachable {
                    return Err(Error::InvalidTree(format!(
                        "node [{}] is unreachable",
                        at()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Dense conditional distribution at `prefix`, EOS last.
    pub fn node(&self, prefix: &[usize]) -> Option<&[f64]> {
        self.nodes.get(prefix).map(Vec::as_slice)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&[usize], &[f64])> {
        self.nodes.iter().map(|(k, v)| (k.as_slice(), v.as_slice()))
    }

    pub fn token_index(&self, token: &str) -> Option<usize> {
        self.vocab.iter().position(|t| t == token)
    }

    pub fn render(&self, tokens: &[usize]) -> Vec<&str> {
        tokens.iter().map(|&t| self.vocab[t].as_str()).collect()
    }

    fn eos(&self) -> usize {
        self.vocab.len()
    }

    /// Product of conditionals along `tokens` and the closing EOS step;
    /// `None` unless that is a complete path with positive probability.
    pub fn path_probability(&self, tokens: &[usize]) -> Option<f64> {
        let mut p = 1.0;
        for depth in 0..=tokens.len() {
            let dist = self.nodes.get(&tokens[..depth])?;
            let step = if depth == tokens.len() {
                self.eos()
            } else {
                *tokens.get(depth).filter(|&&t| t < self.eos())?
            };
            p *= dist[step];
        }
        (p > 0.0).then_some(p)
    }

    pub fn enumerate_all(&self) -> Result<Vec<CompleteSequence>> {
        self.enumerate_capped(DEFAULT_ENUMERATION_CAP)
    }

    /// Every complete sequence with positive probability, depth first, EOS
    /// before token continuations, tokens in vocabulary order.
    pub fn enumerate_capped(&self, cap: usize) -> Result<Vec<CompleteSequence>> {
        let mut out = Vec::new();
        let mut stack: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
        while let Some((prefix, p)) = stack.pop() {
            let dist = &self.nodes[&prefix];
            let p_end = p * dist[self.eos()];
            if p_end > 0.0 {
                if out.len() == cap {
                    return Err(Error::StateSpaceTooLarge { cap });
                }
                out.push(CompleteSequence {
                    tokens: prefix.clone(),
                    probability: p_end,
                });
            }
            for t in (0..self.eos()).rev() {
                if dist[t] > 0.0 {
                    let mut child = prefix.clone();
                    child.push(t);
                    stack.push((child, p * dist[t]));
                }
            }
        }
        Ok(out)
    }

    /// `-sum_s p(s) ln p(s)` over all complete sequences, in nats.
    pub fn exact_entropy(&self) -> Result<f64> {
        Ok(shannon_entropy(
            self.enumerate_all()?.into_iter().map(|s| s.probability),
        ))
    }

    /// `m` independent ancestral samples with their true conditional
    /// log-probabilities, EOS step included. Deterministic in `seed`.
    pub fn sample(&self, m: usize, seed: u64) -> AnswerSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, m, "synthetic")
    }

    pub fn sample_with<R: RngCore>(&self, rng: &mut R, m: usize, question_id: &str) -> AnswerSet {
        let samples = (0..m.max(1)).map(|_| self.draw(rng)).collect();
        AnswerSet::new(question_id, "", samples).expect("at least one sample")
    }

    fn draw<R: RngCore>(&self, rng: &mut R) -> GeneratedSequence {
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        loop {
            let dist = &self.nodes[&tokens];
            let step = pick(dist, unit_interval(rng));
            let lp = ln(dist[step]);
            if step == self.eos() {
                let texts: Vec<&str> = self.render(&tokens);
                return GeneratedSequence::from_tokens(&texts, &logprobs, Some(lp))
                    .expect("tree conditionals are valid probabilities");
            }
            tokens.push(step);
            logprobs.push(lp);
        }
    }

    /// `1 - sum` of true path probabilities of the distinct sampled token paths.
    pub fn exact_missing_mass(&self, answers: &AnswerSet) -> Result<f64> {
        let mut distinct = BTreeSet::new();
        for (index, s) in answers.samples().iter().enumerate() {
            let path = s
                .token_texts()
                .iter()
                .map(|t| self.token_index(t))
                .collect::<Option<Vec<usize>>>()
                .ok_or(Error::UnknownSequence { index })?;
            self.path_probability(&path)
                .ok_or(Error::UnknownSequence { index })?;
            distinct.insert(path);
        }
        let probs = distinct
            .iter()
            .filter_map(|p| self.path_probability(p))
            .collect();
        Ok(1.0 - compensated_sum(probs))
    }
}

fn unit_interval<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF pick over positive entries; rounding past the total falls
/// back to the last positive entry.
fn pick(dist: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

type NamedNode = (Vec<String>, Vec<(String, f64)>);

/// Accumulates named-token distributions for [`SequenceTree::from_parts`].
#[derive(Debug, Clone)]
pub struct SequenceTreeBuilder {
    vocab: Vec<String>,
    max_depth: usize,
    nodes: Vec<NamedNode>,
}

impl SequenceTreeBuilder {
    /// Adds the distribution at `prefix`; unlisted symbols get probability 0.
    pub fn node<S: AsRef<str>, T: AsRef<str>>(mut self, prefix: &[S], dist: &[(T, f64)]) -> Self {
        self.nodes.push((
            prefix.iter().map(|s| String::from(s.as_ref())).collect(),
            dist.iter()
                .map(|(t, p)| (String::from(t.as_ref()), *p))
                .collect(),
        ));
        self
    }

    pub fn build(self) -> Result<SequenceTree> {
        let index = |tok: &str| -> Result<usize> {
            if tok == EOS_SYMBOL {
                return Ok(self.vocab.len());
            }
            self.vocab
                .iter()
                .position(|t| t == tok)
                .ok_or_else(|| Error::InvalidTree(format!("unknown token {tok:?}")))
        };
        let mut nodes = BTreeMap::new();
        for (prefix, dist) in &self.nodes {
            let key = prefix
                .iter()
                .map(|t| match index(t)? {
                    i if i == self.vocab.len() => {
                        Err(Error::InvalidTree(String::from("EOS inside a prefix")))
                    }
                    i => Ok(i),
                })
                .collect::<Result<Vec<usize>>>()?;
            let mut dense = vec![0.0; self.vocab.len() + 1];
            for (tok, p) in dist {
                let i = index(tok)?;
                if dense[i] != 0.0 {
                    return Err(Error::InvalidTree(format!("symbol {tok:?} listed twice")));
                }
                dense[i] = *p;
            }
            if nodes.insert(key, dense).is_some() {
                return Err(Error::InvalidTree(format!(
                    "node [{}] defined twice",
                    prefix.join(" ")
                )));
            }
        }
        SequenceTree::from_parts(self.vocab, nodes, self.max_depth)
    }
}

/// SplitMix64 finalizer applied to `base + index`; derives independent
/// seeds for per-item generators.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Parameters of [`random_tree`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomTreeConfig {
    pub vocab_size: usize,
    pub max_depth: usize,
    /// Exponent applied to uniform weights before normalizing; 0 gives
    /// uniform conditionals, larger values concentrate mass.
    pub sharpness: f64,
    /// Minimum branch probability before the final renormalization.
    pub floor: f64,
    /// Whether the root may end immediately (empty answer).
    pub allow_empty: bool,
}

impl Default for RandomTreeConfig {
    fn default() -> Self {
        Self {
            vocab_size: 4,
            max_depth: 3,
            sharpness: 1.0,
            floor: 1e-4,
            allow_empty: false,
        }
    }
}

/// Seeded random tree. Each node below `max_depth` continues with a random
/// non-empty subset of the vocabulary and, except at an empty-disallowed
/// root, may also end.
pub fn random_tree(config: &RandomTreeConfig, seed: u64) -> Result<SequenceTree> {
    let v = config.vocab_size.max(1);
    let mut estimated = 1usize;
    let mut level = 1usize;
    for _ in 0..config.max_depth {
        level = level.saturating_mul(v);
        estimated = estimated.saturating_add(level);
    }
    if estimated > DEFAULT_ENUMERATION_CAP {
        return Err(Error::StateSpaceTooLarge {
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    let vocab: Vec<String> = (0..v).map(|i| format!("w{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = BTreeMap::new();
    let mut pending = vec![Vec::<usize>::new()];
    while let Some(prefix) = pending.pop() {
        let mut dist = vec![0.0; v + 1];
        if prefix.len() == config.max_depth {
            dist[v] = 1.0;
        } else {
            let k = 1 + (rng.next_u64() % v as u64) as usize;
            let mut order: Vec<usize> = (0..v).collect();
            for i in 0..k {
                let j = i + (rng.next_u64() % (v - i) as u64) as usize;
                order.swap(i, j);
            }
            let mut support: Vec<usize> = order[..k].to_vec();
            if !prefix.is_empty() || config.allow_empty {
                support.push(v);
            }
            support.sort_unstable();
            for &s in &support {
                dist[s] = libm::pow(1.0 - unit_interval(&mut rng), config.sharpness);
            }
            normalize(&mut dist);
            for &s in &support {
                dist[s] = dist[s].max(config.floor);
            }
            normalize(&mut dist);
            for &t in support.iter().filter(|&&s| s < v) {
                let mut child = prefix.clone();
                child.push(t);
                pending.push(child);
            }
        }
        nodes.insert(prefix, dist);
    }
    SequenceTree::from_parts(vocab, nodes, config.max_depth)
}

fn normalize(dist: &mut [f64]) {
    let total = compensated_sum(dist.to_vec());
    for p in dist.iter_mut() {
        *p /= total;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkConfig {
    pub questions: usize,
    pub samples_per_question: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            questions: 500,
            samples_per_question: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkQuestion {
    pub tree: SequenceTree,
    pub answers: AnswerSet,
    pub exact_entropy: f64,
}

/// Labeled synthetic questions with a known link between uncertainty and
/// error: each question gets its own random tree (vocabulary 2..=5, depth
/// 1..=4, sharpness log-uniform in [0.25, 16]), and is marked incorrect with
/// probability `H / H_max`, where `H_max` is the largest exact entropy in the set.
pub fn synthetic_benchmark(config: &BenchmarkConfig) -> Result<Vec<BenchmarkQuestion>> {
    let mut staged = Vec::with_capacity(config.questions);
    for i in 0..config.questions {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, i as u64));
        let tree_config = RandomTreeConfig {
            vocab_size: 2 + (rng.next_u64() % 4) as usize,
            max_depth: 1 + (rng.next_u64() % 4) as usize,
            sharpness: 0.25 * libm::pow(64.0, unit_interval(&mut rng)),
            ..RandomTreeConfig::default()
        };
        let tree = random_tree(&tree_config, rng.next_u64())?;
        let exact_entropy = tree.exact_entropy()?;
        let mut answers =
            tree.sample_with(&mut rng, config.samples_per_question, &format!("q{i:04}"));
        answers = AnswerSet::new(
            answers.question_id(),
            format!("synthetic question {i}"),
            answers.samples().to_vec(),
        )?;
        let draw = unit_interval(&mut rng);
        staged.push((tree, answers, exact_entropy, draw));
    }
    let h_max = staged.iter().map(|s| s.2).fold(0.0_f64, f64::max);
    Ok(staged
        .into_iter()
        .map(|(tree, answers, exact_entropy, draw)| {
            let p_incorrect = if h_max > 0.0 {
                exact_entropy / h_max
            } else {
                0.0
            };
            BenchmarkQuestion {
                answers: answers.with_label(draw >= p_incorrect),
                tree,
                exact_entropy,
            }
        })
        .collect())
}

/// The example tree: "vatican" (0.8) then EOS (0.6) or "city" (0.4) then
/// EOS; the remaining 0.2 at the root goes to a single `other` answer.
pub fn vatican_tree() -> SequenceTree {
    SequenceTree::builder(&["vatican", "city", "other"], 2)
        .node::<&str, &str>(&[], &[("vatican", 0.8), ("other", 0.2)])
        .node(&["vatican"], &[("city", 0.4), (EOS_SYMBOL, 0.6)])
        .node(&["vatican", "city"], &[(EOS_SYMBOL, 1.0)])
        .node(&["other"], &[(EOS_SYMBOL, 1.0)])
        .build()
        .expect("fixture tree is valid")
}
