//! JSONL sample and label files.
//!
//! One [`SampleRecord`] per line, one generated answer each; rows for a
//! question may appear in any order and are regrouped by `question_id`
//! (first appearance order) and sorted by `sample_index`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uqkit_core::{AnswerSet, GeneratedSequence, SamplingMeta};

use crate::error::CliError;

/// Positive log-probabilities up to this size are read as 0 (rounding in
/// upstream dumps); larger ones are rejected.
pub const LOGPROB_ROUNDING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub question_id: String,
    pub question: String,
    pub sample_index: u64,
    pub tokens: Vec<String>,
    pub token_logprobs: Vec<f64>,
    pub eos_logprob: Option<f64>,
    pub text: String,
    #[serde(default)]
    pub meta: MetaRecord,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nucleus_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl From<MetaRecord> for SamplingMeta {
    fn from(m: MetaRecord) -> Self {
        SamplingMeta {
            top_k: m.top_k,
            nucleus_p: m.nucleus_p,
            temperature: m.temperature,
        }
    }
}

impl From<&SamplingMeta> for MetaRecord {
    fn from(m: &SamplingMeta) -> Self {
        MetaRecord {
            top_k: m.top_k,
            nucleus_p: m.nucleus_p,
            temperature: m.temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub question_id: String,
    pub correct: bool,
    #[serde(default)]
    pub judge_model: String,
    #[serde(default)]
    pub judge_response: String,
}

fn clamp_rounding(lp: f64) -> f64 {
    if lp > 0.0 && lp <= LOGPROB_ROUNDING_TOLERANCE {
        0.0
    } else {
        lp
    }
}

impl SampleRecord {
    pub fn to_sequence(&self) -> uqkit_core::Result<GeneratedSequence> {
        GeneratedSequence::new(
            self.tokens.clone(),
            self.token_logprobs
                .iter()
                .copied()
                .map(clamp_rounding)
                .collect(),
            self.eos_logprob.map(clamp_rounding),
            self.text.clone(),
        )
    }
}

struct Group {
    question_id: String,
    question: String,
    first_line: usize,
    rows: Vec<(u64, usize, GeneratedSequence, MetaRecord)>,
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn lines<'a, R: BufRead + 'a>(
    reader: R,
    path: &'a Path,
) -> impl Iterator<Item = Result<(usize, String), CliError>> + 'a {
    reader
        .lines()
        .enumerate()
        .map(move |(i, line)| line.map(|l| (i + 1, l)).map_err(|e| CliError::io(path, e)))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

fn parse_error(path: &Path, line: usize, message: impl ToString) -> CliError {
    CliError::Parse {
        path: PathBuf::from(path),
        line,
        message: message.to_string(),
    }
}

/// Parses sample rows and groups them into answer sets.
pub fn parse_samples<R: BufRead>(reader: R, path: &Path) -> Result<Vec<AnswerSet>, CliError> {
    let mut groups: Vec<Group> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for row in lines(reader, path) {
        let (line, text) = row?;
        let record: SampleRecord =
            serde_json::from_str(&text).map_err(|e| parse_error(path, line, e))?;
        let sequence = record
            .to_sequence()
            .map_err(|e| parse_error(path, line, e))?;
        let slot = *by_id.entry(record.question_id.clone()).or_insert_with(|| {
            groups.push(Group {
                question_id: record.question_id.clone(),
                question: record.question.clone(),
                first_line: line,
                rows: Vec::new(),
            });
            groups.len() - 1
        });
        let group = &mut groups[slot];
        if group.question != record.question {
            return Err(parse_error(
                path,
                line,
                format!(
                    "question text for {:?} differs from line {}",
                    record.question_id, group.first_line
                ),
            ));
        }
        if group.rows.iter().any(|r| r.0 == record.sample_index) {
            return Err(CliError::DuplicateSampleIndex {
                path: PathBuf::from(path),
                line,
                question_id: record.question_id,
                sample_index: record.sample_index,
            });
        }
        group
            .rows
            .push((record.sample_index, line, sequence, record.meta));
    }
    groups
        .into_iter()
        .map(|mut g| {
            g.rows.sort_by_key(|r| r.0);
            let meta_line = g.rows[0].1;
            let meta: SamplingMeta = g.rows[0].3.clone().into();
            let samples = g.rows.into_iter().map(|r| r.2).collect();
            AnswerSet::new(g.question_id, g.question, samples)?
                .with_meta(meta)
                .map_err(|e| parse_error(path, meta_line, e))
        })
        .collect()
}

pub fn read_samples(path: &Path) -> Result<Vec<AnswerSet>, CliError> {
    parse_samples(open(path)?, path)
}

/// Parses label rows keyed by question id; a question may appear once.
pub fn parse_labels<R: BufRead>(
    reader: R,
    path: &Path,
) -> Result<BTreeMap<String, LabelRecord>, CliError> {
    let mut labels = BTreeMap::new();
    for row in lines(reader, path) {
        let (line, text) = row?;
        let record: LabelRecord =
            serde_json::from_str(&text).map_err(|e| parse_error(path, line, e))?;
        if labels.contains_key(&record.question_id) {
            return Err(parse_error(
                path,
                line,
                format!("second label for {:?}", record.question_id),
            ));
        }
        labels.insert(record.question_id.clone(), record);
    }
    Ok(labels)
}

pub fn read_labels(path: &Path) -> Result<BTreeMap<String, LabelRecord>, CliError> {
    parse_labels(open(path)?, path)
}

/// Attaches labels; with `require`, every answer set must have one.
pub fn attach_labels(
    sets: Vec<AnswerSet>,
    labels: &BTreeMap<String, LabelRecord>,
    require: bool,
) -> Result<Vec<AnswerSet>, CliError> {
    sets.into_iter()
        .map(|set| match labels.get(set.question_id()) {
            Some(l) => Ok(set.with_label(l.correct)),
            None if require => Err(CliError::MissingLabel(set.question_id().to_string())),
            None => Ok(set),
        })
        .collect()
}

/// Reads samples and, when given, labels.
pub fn ingest(
    samples: &Path,
    labels: Option<&Path>,
    require_labels: bool,
) -> Result<Vec<AnswerSet>, CliError> {
    let sets = read_samples(samples)?;
    match labels {
        Some(path) => attach_labels(sets, &read_labels(path)?, require_labels),
        None if require_labels => match sets.first() {
            Some(s) => Err(CliError::MissingLabel(s.question_id().to_string())),
            None => Ok(sets),
        },
        None => Ok(sets),
    }
}

pub fn to_records(set: &AnswerSet) -> Vec<SampleRecord> {
    set.samples()
        .iter()
        .enumerate()
        .map(|(i, s)| SampleRecord {
            question_id: set.question_id().to_string(),
            question: set.question_text().to_string(),
            sample_index: i as u64,
            tokens: s.token_texts().to_vec(),
            token_logprobs: s.token_logprobs().to_vec(),
            eos_logprob: s.eos_logprob(),
            text: s.text().to_string(),
            meta: set.meta().into(),
        })
        .collect()
}

pub fn write_samples<W: Write>(mut out: W, sets: &[AnswerSet]) -> std::io::Result<()> {
    for set in sets {
        for record in to_records(set) {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}

/// Writes one label row per labeled answer set.
pub fn write_labels<W: Write>(
    mut out: W,
    sets: &[AnswerSet],
    judge_model: &str,
) -> std::io::Result<()> {
    for set in sets {
        if let Some(correct) = set.correct() {
            let record = LabelRecord {
                question_id: set.question_id().to_string(),
                correct,
                judge_model: judge_model.to_string(),
                judge_response: if correct { "yes" } else { "no" }.to_string(),
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}
