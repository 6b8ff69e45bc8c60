use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use uqkit_core::estimators::score;
use uqkit_core::eval::{check_sweep_inputs, evaluate_records, truncate};
use uqkit_core::synthetic::{synthetic_benchmark, BenchmarkConfig};
use uqkit_core::{
    AnswerSet, ClusterMass, DedupKey, EquivalenceBackend, Estimator, ExactMatch, NormalizedMatch,
    ScoreConfig, ScoreRecord, SweepResult, Truncation,
};

use crate::entail::{EntailmentClient, EntailmentConfig};
use crate::error::CliError;
use crate::prompts::{render, PromptMode};
use crate::records::{ingest, read_labels, write_labels, write_samples};
use crate::report::{
    read_scores, write_auroc, write_scores, write_simulation, ReportItem, SimulationRow,
    CORRECT_COLUMN,
};
use crate::tree_spec::load_tree;

#[derive(Debug, Parser)]
#[command(
    name = "uqkit",
    version,
    about = "Uncertainty scores for sampled LLM answers"
)]
pub struct Cli {
    /// Print errors to stderr as one JSON object.
    #[arg(long, global = true)]
    pub json_errors: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every question in a samples file.
    Score(ScoreArgs),
    /// AUROC of a score CSV against labels.
    Evaluate(EvaluateArgs),
    /// AUROC per estimator across sample budgets.
    Sweep(SweepArgs),
    /// Sample from a sequence tree or generate the synthetic benchmark.
    Simulate(SimulateArgs),
    /// Render a correctness-judging prompt.
    JudgePrompt(JudgePromptArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DedupArg {
    Token,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClusterMassArg {
    Unique,
    Multiset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Exact,
    Normalized,
    External,
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    Estimator::from_str(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct EstimatorArgs {
    /// Comma-separated estimator names.
    #[arg(long, value_delimiter = ',', value_parser = parse_estimator, default_value = "E,SE,DSE,EOS_UP,LN_UP")]
    pub estimators: Vec<Estimator>,
    #[arg(long, value_enum, default_value = "token")]
    pub dedup: DedupArg,
    /// Whether SE sums each unique answer once or every sample.
    #[arg(long, value_enum, default_value = "unique")]
    pub cluster_mass: ClusterMassArg,
}

impl EstimatorArgs {
    fn config(&self) -> ScoreConfig {
        ScoreConfig {
            dedup: match self.dedup {
                DedupArg::Token => DedupKey::TokenSequence,
                DedupArg::Text => DedupKey::Text,
            },
            cluster_mass: match self.cluster_mass {
                ClusterMassArg::Unique => ClusterMass::UniqueAnswers,
                ClusterMassArg::Multiset => ClusterMass::SampleMultiset,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "exact")]
    pub cluster_backend: BackendArg,
    /// Base URL of the entailment service.
    #[arg(long, env = "UQKIT_ENTAIL_URL")]
    pub entail_url: Option<String>,
    #[arg(long, default_value_t = 10.0)]
    pub entail_timeout_secs: f64,
    #[arg(long, default_value_t = 8)]
    pub entail_max_in_flight: usize,
}

pub enum Backend {
    Exact(ExactMatch),
    Normalized(NormalizedMatch),
    External(Box<EntailmentClient>),
}

impl EquivalenceBackend for Backend {
    fn name(&self) -> &str {
        match self {
            Backend::Exact(b) => b.name(),
            Backend::Normalized(b) => b.name(),
            Backend::External(b) => b.name(),
        }
    }

    fn equivalent(&self, a: &str, b: &str, question: &str) -> uqkit_core::Result<bool> {
        match self {
            Backend::Exact(x) => x.equivalent(a, b, question),
            Backend::Normalized(x) => x.equivalent(a, b, question),
            Backend::External(x) => x.equivalent(a, b, question),
        }
    }
}

impl BackendArgs {
    pub fn build(&self) -> Result<Backend, CliError> {
        Ok(match self.cluster_backend {
            BackendArg::Exact => Backend::Exact(ExactMatch),
            BackendArg::Normalized => Backend::Normalized(NormalizedMatch),
            BackendArg::External => {
                let url = self.entail_url.clone().ok_or_else(|| {
                    CliError::Usage(
                        "--cluster-backend external needs --entail-url or UQKIT_ENTAIL_URL".into(),
                    )
                })?;
                if !(self.entail_timeout_secs.is_finite() && self.entail_timeout_secs > 0.0) {
                    return Err(CliError::Usage(
                        "--entail-timeout-secs must be positive".into(),
                    ));
                }
                let mut config = EntailmentConfig::new(url);
                config.timeout = Duration::from_secs_f64(self.entail_timeout_secs);
                config.max_in_flight = self.entail_max_in_flight.max(1);
                Backend::External(Box::new(EntailmentClient::new(config)))
            }
        })
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub samples: PathBuf,
    /// Optional labels; adds a trailing `correct` column.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub estimators: EstimatorArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Comma-separated sample budgets.
    #[arg(long, value_delimiter = ',', required = true)]
    pub m_values: Vec<usize>,
    /// Draw seeded random subsets instead of taking the first m samples.
    #[arg(long)]
    pub subsample_seed: Option<u64>,
    #[command(flatten)]
    pub estimators: EstimatorArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Tree spec JSON.
    #[arg(
        long,
        conflicts_with = "benchmark",
        required_unless_present = "benchmark"
    )]
    pub tree: Option<PathBuf>,
    /// Generate this many labeled synthetic questions instead of one tree.
    #[arg(long)]
    pub benchmark: Option<usize>,
    /// Samples per question.
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the sampled answers as JSONL.
    #[arg(long)]
    pub emit_samples: Option<PathBuf>,
    /// Write synthetic labels as JSONL (benchmark only).
    #[arg(long, requires = "benchmark")]
    pub emit_labels: Option<PathBuf>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "exact_entropy,missing_mass"
    )]
    pub report: Vec<ReportItem>,
    /// Question id for samples drawn from --tree.
    #[arg(long, default_value = "synthetic")]
    pub question_id: String,
    /// Report CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct JudgePromptArgs {
    #[arg(long, value_enum)]
    pub mode: PromptMode,
    #[arg(long)]
    pub question: String,
    /// Reference answer; repeat for the multiple-answer prompt.
    #[arg(long, required = true)]
    pub expected: Vec<String>,
    #[arg(long)]
    pub predicted: String,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Score(args) => cmd_score(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::JudgePrompt(args) => cmd_judge_prompt(args),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| CliError::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

fn csv_to_bytes(write: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing CSV to memory");
    buf
}

fn score_all(
    sets: &[AnswerSet],
    estimators: &[Estimator],
    config: &ScoreConfig,
    backend: &Backend,
) -> Vec<ScoreRecord> {
    sets.par_iter()
        .map(|set| score(set, estimators, config, backend))
        .collect()
}

pub fn cmd_score(args: ScoreArgs) -> Result<(), CliError> {
    let sets = ingest(&args.samples, args.labels.as_deref(), args.labels.is_some())?;
    let backend = args.backend.build()?;
    let estimators = &args.estimators.estimators;
    let records = score_all(&sets, estimators, &args.estimators.config(), &backend);
    let mut bytes = csv_to_bytes(|buf| write_scores(buf, estimators, &records));
    if args.labels.is_some() {
        bytes = append_correct_column(&bytes, &sets);
    }
    emit(args.out.as_deref(), &bytes)
}

fn append_correct_column(csv_bytes: &[u8], sets: &[AnswerSet]) -> Vec<u8> {
    let mut reader = csv::Reader::from_reader(csv_bytes);
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = reader.headers().expect("own CSV").clone();
        header.push_field(CORRECT_COLUMN);
        w.write_record(&header).expect("memory write");
        for (row, set) in reader.records().zip(sets) {
            let mut row = row.expect("own CSV");
            row.push_field(match set.correct() {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            });
            w.write_record(&row).expect("memory write");
        }
        w.flush().expect("memory write");
    }
    out
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let table = read_scores(&args.scores)?;
    let labels = read_labels(&args.labels)?;
    let mut by_m: BTreeMap<usize, Vec<(ScoreRecord, bool)>> = BTreeMap::new();
    for record in table.records {
        let label = labels
            .get(&record.question_id)
            .ok_or_else(|| CliError::MissingLabel(record.question_id.clone()))?;
        by_m.entry(record.m_used)
            .or_default()
            .push((record, !label.correct));
    }
    let backend = by_m
        .values()
        .flatten()
        .find_map(|(r, _)| r.cluster_backend.clone())
        .unwrap_or_default();
    let mut results = Vec::new();
    for (m, records) in &by_m {
        results.extend(evaluate_records(&table.estimators, *m, records)?);
    }
    let bytes = csv_to_bytes(|buf| write_auroc(buf, &results, &backend));
    emit(args.out.as_deref(), &bytes)
}

pub fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let sets = ingest(&args.samples, Some(&args.labels), true)?;
    check_sweep_inputs(&sets, &args.m_values)?;
    let backend = args.backend.build()?;
    let estimators = &args.estimators.estimators;
    let config = args.estimators.config();
    let truncation = match args.subsample_seed {
        Some(seed) => Truncation::RandomSubsample { seed },
        None => Truncation::Prefix,
    };
    let mut results: Vec<SweepResult> = Vec::new();
    for &m in &args.m_values {
        let records = sets
            .par_iter()
            .enumerate()
            .map(|(i, set)| {
                let cut = truncate(set, m, truncation, i)?;
                let incorrect = !set.correct().expect("labels required above");
                Ok((score(&cut, estimators, &config, &backend), incorrect))
            })
            .collect::<uqkit_core::Result<Vec<_>>>()?;
        results.extend(evaluate_records(estimators, m, &records)?);
    }
    let bytes = csv_to_bytes(|buf| write_auroc(buf, &results, backend.name()));
    emit(args.out.as_deref(), &bytes)
}

fn write_jsonl(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w).map_err(|e| CliError::io(path, e))
}

pub fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    if args.m == 0 {
        return Err(CliError::Usage("--m must be at least 1".into()));
    }
    let mut rows = Vec::new();
    let mut sets = Vec::new();
    if let Some(n) = args.benchmark {
        let questions = synthetic_benchmark(&BenchmarkConfig {
            questions: n,
            samples_per_question: args.m,
            seed: args.seed,
        })?;
        for q in questions {
            rows.push(SimulationRow {
                question_id: q.answers.question_id().to_string(),
                m: args.m,
                exact_entropy: q.exact_entropy,
                missing_mass: q.tree.exact_missing_mass(&q.answers)?,
            });
            sets.push(q.answers);
        }
    } else {
        let path = args
            .tree
            .as_deref()
            .expect("clap requires --tree or --benchmark");
        let tree = load_tree(path)?;
        let drawn = tree.sample(args.m, args.seed);
        let answers = AnswerSet::new(args.question_id.as_str(), "", drawn.samples().to_vec())?;
        rows.push(SimulationRow {
            question_id: args.question_id.clone(),
            m: args.m,
            exact_entropy: tree.exact_entropy()?,
            missing_mass: tree.exact_missing_mass(&answers)?,
        });
        sets.push(answers);
    }
    if let Some(path) = &args.emit_samples {
        write_jsonl(path, |w| write_samples(w, &sets))?;
    }
    if let Some(path) = &args.emit_labels {
        write_jsonl(path, |w| write_labels(w, &sets, "synthetic"))?;
    }
    let bytes = csv_to_bytes(|buf| write_simulation(buf, &args.report, &rows));
    emit(args.out.as_deref(), &bytes)
}

pub fn cmd_judge_prompt(args: JudgePromptArgs) -> Result<(), CliError> {
    let mut prompt = render(args.mode, &args.question, &args.expected, &args.predicted)?;
    prompt.push('\n');
    emit(None, prompt.as_bytes())
}
