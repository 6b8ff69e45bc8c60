//! CSV outputs: per-question scores, AUROC tables and simulation reports.
//!
//! Floats are written as the shortest decimal that round-trips, with `-0`
//! printed as `0`. Row order always follows input order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use uqkit_core::{Estimator, ScoreRecord, SweepResult};

use crate::error::CliError;

pub const EXCLUDED_PREFIX: &str = "excluded_";
/// Trailing label column written by `score --labels`.
pub const CORRECT_COLUMN: &str = "correct";

pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x}")
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match CliError::from(e) {
        CliError::Parse { line, message, .. } => parse_error(path, line as u64, message),
        CliError::Io { source, .. } => CliError::io(path, source),
        other => other,
    }
}

pub fn write_scores<W: Write>(
    out: W,
    estimators: &[Estimator],
    records: &[ScoreRecord],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["question_id".to_string(), "m_used".to_string()];
    header.extend(estimators.iter().map(|e| e.name().to_string()));
    header.extend(
        estimators
            .iter()
            .map(|e| format!("{EXCLUDED_PREFIX}{}", e.name())),
    );
    header.push("cluster_backend".to_string());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.question_id.clone(), r.m_used.to_string()];
        row.extend(
            estimators
                .iter()
                .map(|&e| r.get(e).map(format_float).unwrap_or_default()),
        );
        row.extend(
            estimators
                .iter()
                .map(|e| if r.excluded.contains_key(e) { "1" } else { "0" }.to_string()),
        );
        row.push(r.cluster_backend.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Scores read back from a score CSV. Exclusion reasons are not stored in
/// the file, so excluded cells simply come back absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub estimators: Vec<Estimator>,
    pub records: Vec<ScoreRecord>,
}

pub fn parse_scores<R: Read>(input: R, path: &Path) -> Result<ScoreTable, CliError> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| header.iter().position(|h| h == name);
    let qid =
        column("question_id").ok_or_else(|| parse_error(path, 1, "missing question_id column"))?;
    let m_col = column("m_used").ok_or_else(|| parse_error(path, 1, "missing m_used column"))?;
    let backend_col = column("cluster_backend");
    let mut estimators = Vec::new();
    let mut columns = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if i == qid
            || i == m_col
            || Some(i) == backend_col
            || h == CORRECT_COLUMN
            || h.starts_with(EXCLUDED_PREFIX)
        {
            continue;
        }
        let e = Estimator::from_str(h).map_err(|e| parse_error(path, 1, e.to_string()))?;
        estimators.push(e);
        columns.push(i);
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let m_used = row[m_col]
            .parse()
            .map_err(|_| parse_error(path, line, format!("bad m_used {:?}", &row[m_col])))?;
        let mut scores = BTreeMap::new();
        for (&e, &c) in estimators.iter().zip(&columns) {
            let cell = row.get(c).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(path, line, format!("bad {e} value {cell:?}")))?;
            scores.insert(e, v);
        }
        records.push(ScoreRecord {
            question_id: row[qid].to_string(),
            m_used,
            scores,
            excluded: BTreeMap::new(),
            cluster_backend: backend_col
                .and_then(|c| row.get(c))
                .filter(|s| !s.is_empty())
                .map(str::to_string),
        });
    }
    Ok(ScoreTable {
        estimators,
        records,
    })
}

pub fn read_scores(path: &Path) -> Result<ScoreTable, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_scores(std::io::BufReader::new(file), path)
}

pub fn write_auroc<W: Write>(
    out: W,
    results: &[SweepResult],
    cluster_backend: &str,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "estimator",
        "m",
        "auroc",
        "n_questions",
        "excluded",
        "cluster_backend",
    ])?;
    for r in results {
        let backend = if r.estimator.needs_clusters() {
            cluster_backend
        } else {
            ""
        };
        w.write_record([
            r.estimator.name().to_string(),
            r.m.to_string(),
            format_float(r.auroc),
            r.n_questions.to_string(),
            r.excluded.to_string(),
            backend.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ReportItem {
    ExactEntropy,
    MissingMass,
}

impl ReportItem {
    pub fn name(self) -> &'static str {
        match self {
            ReportItem::ExactEntropy => "exact_entropy",
            ReportItem::MissingMass => "missing_mass",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRow {
    pub question_id: String,
    pub m: usize,
    pub exact_entropy: f64,
    pub missing_mass: f64,
}

pub fn write_simulation<W: Write>(
    out: W,
    items: &[ReportItem],
    rows: &[SimulationRow],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["question_id", "m"];
    header.extend(items.iter().map(|i| i.name()));
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.question_id.clone(), r.m.to_string()];
        row.extend(items.iter().map(|i| match i {
            ReportItem::ExactEntropy => format_float(r.exact_entropy),
            ReportItem::MissingMass => format_float(r.missing_mass),
        }));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
