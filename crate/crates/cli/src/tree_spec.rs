//! JSON configuration for synthetic sequence trees.
//!
//! ```json
//! {
//!   "vocab": ["vatican", "city", "other"],
//!   "max_depth": 2,
//!   "nodes": {
//!     "":             {"vatican": 0.8, "other": 0.2},
//!     "vatican":      {"city": 0.4, "<eos>": 0.6},
//!     "vatican city": {"<eos>": 1.0},
//!     "other":        {"<eos>": 1.0}
//!   }
//! }
//! ```
//!
//! Node keys are token prefixes joined by single spaces; the root is `""`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uqkit_core::{SequenceTree, EOS_SYMBOL};

use crate::error::CliError;

/// Per-node tolerance on probability sums in spec files. Sums inside it are
/// renormalized before building the tree.
pub const SPEC_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub vocab: Vec<String>,
    pub nodes: BTreeMap<String, BTreeMap<String, f64>>,
    pub max_depth: usize,
}

impl TreeSpec {
    pub fn from_tree(tree: &SequenceTree) -> Self {
        let nodes = tree
            .nodes()
            .map(|(prefix, dist)| {
                let key = tree.render(prefix).join(" ");
                let next = dist
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(i, &p)| {
                        let sym = tree.vocab().get(i).map_or(EOS_SYMBOL, String::as_str);
                        (sym.to_string(), p)
                    })
                    .collect();
                (key, next)
            })
            .collect();
        TreeSpec {
            vocab: tree.vocab().to_vec(),
            nodes,
            max_depth: tree.max_depth(),
        }
    }

    pub fn into_tree(self) -> Result<SequenceTree, uqkit_core::Error> {
        let invalid = |msg: String| uqkit_core::Error::InvalidTree(msg);
        if let Some(bad) = self
            .vocab
            .iter()
            .find(|t| t.chars().any(char::is_whitespace))
        {
            return Err(invalid(format!(
                "vocabulary token {bad:?} contains whitespace"
            )));
        }
        let mut builder = SequenceTree::builder(&self.vocab, self.max_depth);
        for (key, dist) in &self.nodes {
            let sum: f64 = dist.values().sum();
            if (sum - 1.0).abs() > SPEC_SUM_TOLERANCE {
                return Err(invalid(format!("node {key:?} sums to {sum}")));
            }
            let prefix: Vec<&str> = key.split_whitespace().collect();
            let normalized: Vec<(&str, f64)> =
                dist.iter().map(|(t, p)| (t.as_str(), p / sum)).collect();
            builder = builder.node(&prefix, &normalized);
        }
        builder.build()
    }
}

pub fn parse_tree(text: &str, path: &Path) -> Result<SequenceTree, CliError> {
    let spec: TreeSpec = serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: PathBuf::from(path),
        line: e.line(),
        message: e.to_string(),
    })?;
    Ok(spec.into_tree()?)
}

pub fn load_tree(path: &Path) -> Result<SequenceTree, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_tree(&text, path)
}
