//! Subcommand implementations: deterministic run execution with JSONL/JSON
//! outputs, post-hoc scoring to CSV, and coupon-bound diagnostics.

use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use qdspace::coupon::{partial_collection_bounds, ProbabilityVector};
use qdspace::engine::{run_with_progress, EngineConfig, HistoryEntry, RunOutput};
use qdspace::metrics::score_history;
use qdspace::problems::{build_problem, BuiltinProblem, Problem};
use qdspace::CellId;

use crate::config::ExperimentConfig;
use crate::{BoundsArgs, RunArgs, ScoreArgs};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn config<E: std::fmt::Display>(e: E) -> Self {
        CliError::Config(e.to_string())
    }

    fn runtime<E: std::fmt::Display>(e: E) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// One line of `history.jsonl`.
#[derive(Serialize, Deserialize)]
struct HistoryRecord {
    index: usize,
    state: Vec<f64>,
    cell: Vec<u32>,
    birth: u32,
    reign: u32,
    objective: f64,
}

#[derive(Serialize)]
struct LandmarksFile {
    scale: f64,
    landmark_indices: Vec<usize>,
    magnitude_trace: Vec<f64>,
    states: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    problem: &'a str,
    algorithm: &'a str,
    seed: u64,
    eval_budget: usize,
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config).map_err(CliError::config)?;
    let mut cfg = ExperimentConfig::parse_toml(&text).map_err(CliError::Config)?;

    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.problem_params.instance_seed.get_or_insert(seed);
    }
    if let Some(out) = args.output {
        cfg.output = out;
    }
    if let Some(budget) = args.eval_budget {
        cfg.engine.eval_budget = budget;
    }
    if let Some(algorithm) = args.algorithm {
        cfg.engine.algorithm = algorithm;
    }
    if let Some(theta) = args.baseline_bandwidth {
        cfg.engine.baseline_bandwidth = Some(theta);
    }
    if let Some(workers) = args.workers {
        cfg.engine.workers = workers;
    }
    cfg.resolve();

    let engine_cfg = cfg.engine_config().map_err(CliError::Config)?;
    let problem = build_problem(&cfg.problem, &cfg.problem_params()).map_err(CliError::config)?;

    match problem {
        BuiltinProblem::Rastrigin(p) => execute(&p, &engine_cfg, &cfg),
        BuiltinProblem::IntegerRastrigin(p) => execute(&p, &engine_cfg, &cfg),
        BuiltinProblem::Sk(p) => execute(&p, &engine_cfg, &cfg),
        BuiltinProblem::Labs(p) => execute(&p, &engine_cfg, &cfg),
    }
}

fn execute<P: Problem>(
    problem: &P,
    engine_cfg: &EngineConfig,
    cfg: &ExperimentConfig,
) -> Result<(), CliError> {
    let output = run_with_progress(problem, engine_cfg, |p| {
        eprintln!(
            "epoch {}: evaluations={} expeditions={}",
            p.epoch, p.evaluations, p.expeditions
        );
    })
    .map_err(|e| match e {
        qdspace::engine::EngineError::InvalidConfig(msg) => CliError::Config(msg),
        other => CliError::Runtime(other.to_string()),
    })?;

    write_outputs(problem, engine_cfg, cfg, &output)
}

fn write_outputs<P: Problem>(
    problem: &P,
    engine_cfg: &EngineConfig,
    cfg: &ExperimentConfig,
    output: &RunOutput<P::State>,
) -> Result<(), CliError> {
    let dir = &cfg.output;
    fs::create_dir_all(dir).map_err(CliError::runtime)?;

    let file = fs::File::create(dir.join("history.jsonl")).map_err(CliError::runtime)?;
    let mut writer = BufWriter::new(file);
    for (index, entry) in output.history.iter().enumerate() {
        let record = HistoryRecord {
            index,
            state: problem.encode(&entry.state),
            cell: entry.cell.ranks().to_vec(),
            birth: entry.birth,
            reign: entry.reign,
            objective: entry.objective,
        };
        let line = serde_json::to_string(&record).map_err(CliError::runtime)?;
        writeln!(writer, "{line}").map_err(CliError::runtime)?;
    }
    writer.flush().map_err(CliError::runtime)?;

    let landmarks = LandmarksFile {
        scale: output.landmarks.scale,
        landmark_indices: output.landmarks.landmark_indices.clone(),
        magnitude_trace: output.landmarks.magnitude_trace.clone(),
        states: output
            .landmarks
            .states
            .iter()
            .map(|s| problem.encode(s))
            .collect(),
    };
    let text = serde_json::to_string_pretty(&landmarks).map_err(CliError::runtime)?;
    fs::write(dir.join("landmarks.json"), text).map_err(CliError::runtime)?;

    let echo = serde_json::to_string_pretty(cfg).map_err(CliError::runtime)?;
    fs::write(dir.join("config.echo.json"), echo).map_err(CliError::runtime)?;

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        problem: &cfg.problem,
        algorithm: &cfg.engine.algorithm,
        seed: engine_cfg.seed,
        eval_budget: engine_cfg.eval_budget,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(CliError::runtime)?;
    fs::write(dir.join("manifest.json"), text).map_err(CliError::runtime)?;
    Ok(())
}

fn read_history(dir: &Path) -> Result<Vec<HistoryRecord>, CliError> {
    let file = fs::File::open(dir.join("history.jsonl")).map_err(CliError::config)?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(CliError::runtime)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: HistoryRecord = serde_json::from_str(&line).map_err(CliError::config)?;
        records.push(record);
    }
    Ok(records)
}

pub fn score(args: ScoreArgs) -> Result<(), CliError> {
    let dir = &args.run;
    let echo = fs::read_to_string(dir.join("config.echo.json")).map_err(CliError::config)?;
    let cfg: ExperimentConfig = serde_json::from_str(&echo).map_err(CliError::config)?;
    let records = read_history(dir)?;
    if records.is_empty() {
        return Err(CliError::Config("history.jsonl is empty".into()));
    }

    let normalization = match (args.min_objective, args.max_objective) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => {
            return Err(CliError::Config(
                "provide both --min-objective and --max-objective or neither".into(),
            ))
        }
    };

    let problem = build_problem(&cfg.problem, &cfg.problem_params()).map_err(CliError::config)?;
    let scores = match problem {
        BuiltinProblem::Rastrigin(p) => score_records(&p, &records, normalization),
        BuiltinProblem::IntegerRastrigin(p) => score_records(&p, &records, normalization),
        BuiltinProblem::Sk(p) => score_records(&p, &records, normalization),
        BuiltinProblem::Labs(p) => score_records(&p, &records, normalization),
    }?;

    let file = fs::File::create(dir.join("scores.csv")).map_err(CliError::runtime)?;
    let mut writer = BufWriter::new(file);
    writeln!(writer, "epoch,num_evals,qd,wqd,magnitude").map_err(CliError::runtime)?;
    for epoch in 1..=scores.epochs() {
        let i = epoch - 1;
        writeln!(
            writer,
            "{},{},{},{},{}",
            epoch, scores.num_evals[i], scores.qd[i], scores.wqd[i], scores.magnitude[i]
        )
        .map_err(CliError::runtime)?;
    }
    writer.flush().map_err(CliError::runtime)?;
    Ok(())
}

fn score_records<P: Problem>(
    problem: &P,
    records: &[HistoryRecord],
    normalization: Option<(f64, f64)>,
) -> Result<qdspace::metrics::EpochScores, CliError> {
    let history: Vec<HistoryEntry<P::State>> = records
        .iter()
        .map(|r| HistoryEntry {
            state: problem.decode(&r.state),
            cell: CellId::from_ranks(r.cell.clone()),
            birth: r.birth,
            reign: r.reign,
            objective: r.objective,
        })
        .collect();
    score_history(
        &history,
        |a: &P::State, b: &P::State| problem.dissimilarity(a, b),
        normalization,
    )
    .map_err(CliError::runtime)
}

fn parse_distribution(spec: &str, n: Option<usize>) -> Result<Vec<f64>, CliError> {
    if spec == "uniform" {
        let n = n.ok_or_else(|| CliError::Config("uniform distribution needs --n".into()))?;
        if n == 0 {
            return Err(CliError::Config("--n must be positive".into()));
        }
        return Ok(vec![1.0 / n as f64; n]);
    }
    if let Some(gamma) = spec.strip_prefix("zipf:") {
        let gamma: f64 = gamma
            .parse()
            .map_err(|_| CliError::Config(format!("bad zipf exponent '{gamma}'")))?;
        let n = n.ok_or_else(|| CliError::Config("zipf distribution needs --n".into()))?;
        if n == 0 {
            return Err(CliError::Config("--n must be positive".into()));
        }
        let raw: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-gamma)).collect();
        let total: f64 = raw.iter().sum();
        return Ok(raw.into_iter().map(|v| v / total).collect());
    }
    if let Some(list) = spec.strip_prefix("list:") {
        let values: Result<Vec<f64>, _> = list.split(',').map(str::parse).collect();
        return values.map_err(|e| CliError::Config(format!("bad probability list: {e}")));
    }
    Err(CliError::Config(format!(
        "unknown distribution spec '{spec}' (uniform | zipf:<gamma> | list:p1,p2,...)"
    )))
}

#[derive(Serialize)]
struct BoundsReport {
    n: usize,
    m: usize,
    c: usize,
    exact: Option<f64>,
    lower: f64,
    upper: f64,
}

pub fn bounds(args: BoundsArgs) -> Result<(), CliError> {
    let values = parse_distribution(&args.dist, args.n)?;
    let p = ProbabilityVector::new(values).map_err(CliError::config)?;
    let result = partial_collection_bounds(&p, args.m, args.c).map_err(CliError::config)?;
    let report = BoundsReport {
        n: p.len(),
        m: args.m,
        c: args.c,
        exact: result.exact,
        lower: result.lower,
        upper: result.upper,
    };
    println!(
        "{}",
        serde_json::to_string(&report).map_err(CliError::runtime)?
    );
    Ok(())
}
