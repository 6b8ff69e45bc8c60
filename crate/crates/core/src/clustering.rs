//! Semantic partition of unique answers.
//!
//! A backend decides pairwise equivalence; the partition is the transitive
//! closure of its positive decisions, so a non-transitive backend still
//! yields a valid partition.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sequence::UniqueAnswers;

/// Partition of unique answers into clusters with dense ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    cluster_of: Vec<usize>,
    num_clusters: usize,
}

impl ClusterAssignment {
    /// Validates that ids are dense in `[0, num_clusters)` with every id used.
    pub fn from_labels(cluster_of: Vec<usize>) -> Result<Self> {
        if cluster_of.is_empty() {
            return Err(Error::InvalidPartition(String::from("no answers assigned")));
        }
        let num_clusters = cluster_of.iter().max().map_or(0, |m| m + 1);
        let mut used = vec![false; num_clusters];
        for &c in &cluster_of {
            used[c] = true;
        }
        if let Some(missing) = used.iter().position(|u| !u) {
            return Err(Error::InvalidPartition(format!(
                "cluster id {missing} is unused"
            )));
        }
        Ok(Self {
            cluster_of,
            num_clusters,
        })
    }

    /// Every answer in its own cluster.
    pub fn singletons(n: usize) -> Result<Self> {
        Self::from_labels((0..n).collect())
    }

    pub fn cluster_of(&self, answer: usize) -> usize {
        self.cluster_of[answer]
    }

    pub fn labels(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    /// Number of answers assigned.
    pub fn len(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cluster_of.is_empty()
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.cluster_of
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }
}

/// Pairwise semantic-equivalence decision.
///
/// `equivalent(a, a, q)` is never queried; reflexivity is assumed.
pub trait EquivalenceBackend {
    /// Recorded alongside every score that used this backend.
    fn name(&self) -> &str;

    fn equivalent(&self, a: &str, b: &str, question: &str) -> Result<bool>;
}

impl<B: EquivalenceBackend + ?Sized> EquivalenceBackend for &B {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn equivalent(&self, a: &str, b: &str, question: &str) -> Result<bool> {
        (**self).equivalent(a, b, question)
    }
}

/// Exact string equality.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatch;

impl EquivalenceBackend for ExactMatch {
    fn name(&self) -> &str {
        "exact"
    }

    fn equivalent(&self, a: &str, b: &str, _question: &str) -> Result<bool> {
        Ok(a == b)
    }
}

/// Equality after [`normalize_answer`].
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalizedMatch;

impl EquivalenceBackend for NormalizedMatch {
    fn name(&self) -> &str {
        "normalized"
    }

    fn equivalent(&self, a: &str, b: &str, _question: &str) -> Result<bool> {
        Ok(normalize_answer(a) == normalize_answer(b))
    }
}

/// Lowercases, trims, collapses internal whitespace and strips trailing
/// `.`, `?` and `!`.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    String::from(collapsed.trim_end_matches(['.', '?', '!']).trim_end())
}

/// Disjoint-set forest with union by rank and path halving.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            core::cmp::Ordering::Less => self.parent[ra] = rb,
            core::cmp::Ordering::Greater => self.parent[rb] = ra,
            core::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }

    pub fn connected(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }
}

/// Clusters the unique answers by the transitive closure of `backend`.
///
/// Pairs `(i, j)`, `i < j`, are visited in lexicographic order; a pair whose
/// members are already joined is skipped without a query. Cluster ids follow
/// the smallest member index. Any backend failure aborts the whole question.
pub fn build_clusters<B: EquivalenceBackend + ?Sized>(
    unique: &UniqueAnswers,
    backend: &B,
    question: &str,
) -> Result<ClusterAssignment> {
    let texts: Vec<&str> = unique.iter().map(|e| e.representative.text()).collect();
    let n = texts.len();
    let mut sets = UnionFind::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if sets.connected(i, j) {
                continue;
            }
            if backend.equivalent(texts[i], texts[j], question)? {
                sets.union(i, j);
            }
        }
    }
    let mut id_of_root = vec![usize::MAX; n];
    let mut next = 0;
    let labels = (0..n)
        .map(|i| {
            let root = sets.find(i);
            if id_of_root[root] == usize::MAX {
                id_of_root[root] = next;
                next += 1;
            }
            id_of_root[root]
        })
        .collect();
    ClusterAssignment::from_labels(labels)
}
