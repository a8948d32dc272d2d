//! Benchmark harness: JSON-defined design-task questions, agent execution,
//! verification by simulation + reading tool, and aggregation into solve
//! rate, median APE and confidence intervals.
//!
//! Verification dispatches through the same `measure::read_feature` the
//! agent's simulate_and_read tool uses, so the grader and the agent see
//! byte-identical measurement semantics.

pub mod agents;
mod report;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agents::{AgentFactory, BisectionAgent, NoopAgent, OracleAgent, ReplayAgent};
pub use report::{median, solve_rate_confidence_interval, CategoryStats, Report};

use crate::agent::{run_session, SessionConfig, SessionOutcome};
use crate::engine::{self, EngineKind, SimulationJob, TransientSpec};
use crate::measure::{self, Measurement, MeasurementKind};
use crate::netlist::{parse_netlist, ComponentKind, Netlist, NetlistError};

pub const SCHEMA_ID: &str = "spicedeck-questions/1";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("missing circuit fixture `{0}`")]
    MissingFixture(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ParameterTuning,
    TopologyAdaption,
}

impl Category {
    pub fn label(&self) -> &'static str {
        match self {
            Category::ParameterTuning => "parameter_tuning",
            Category::TopologyAdaption => "topology_adaption",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub value: f64,
    pub unit: String,
}

/// Verification spec: a reading tool over a signal, or the topology
/// predicate checking a direct component bridge between two nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tool", rename_all = "snake_case")]
pub enum Verification {
    Mean {
        signal: String,
    },
    Ripple {
        signal: String,
    },
    SwitchingFrequency {
        signal: String,
    },
    SettleTime {
        signal: String,
    },
    PinConnectedVia {
        node_a: String,
        node_b: String,
        kind: String,
        value: f64,
    },
}

impl Verification {
    pub fn measurement(&self) -> Option<(MeasurementKind, &str)> {
        match self {
            Verification::Mean { signal } => Some((MeasurementKind::Mean, signal)),
            Verification::Ripple { signal } => Some((MeasurementKind::Ripple, signal)),
            Verification::SwitchingFrequency { signal } => {
                Some((MeasurementKind::SwitchingFrequency, signal))
            }
            Verification::SettleTime { signal } => Some((MeasurementKind::SettleTime, signal)),
            Verification::PinConnectedVia { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkQuestion {
    pub id: String,
    /// Circuit fixture path, relative to the question file.
    pub circuit: PathBuf,
    /// Circuit class for the report breakdown; defaults to the fixture stem.
    #[serde(default)]
    pub class: Option<String>,
    pub prompt_template: String,
    pub category: Category,
    #[serde(default)]
    pub target: Option<Target>,
    /// Percent tolerance on the target; defaults to 5 when absent.
    #[serde(default)]
    pub tolerance_pct: Option<f64>,
    pub verification: Verification,
}

impl BenchmarkQuestion {
    pub fn effective_tolerance_pct(&self) -> f64 {
        self.tolerance_pct.unwrap_or(5.0)
    }

    pub fn class_label(&self) -> String {
        self.class.clone().unwrap_or_else(|| {
            self.circuit
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "unknown".to_string())
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct QuestionFile {
    schema: String,
    questions: Vec<BenchmarkQuestion>,
}

/// A question with its circuit fixture parsed and attached.
#[derive(Debug, Clone)]
pub struct LoadedQuestion {
    pub spec: BenchmarkQuestion,
    pub netlist: Netlist,
}

/// Load and validate a question file; fixture paths resolve relative to it.
pub fn load_questions(path: &Path) -> Result<Vec<LoadedQuestion>, BenchError> {
    let text = std::fs::read_to_string(path)?;
    let mut deserializer = serde_json::Deserializer::from_str(&text);
    let file: QuestionFile = serde_path_to_error::deserialize(&mut deserializer)
        .map_err(|e| BenchError::SchemaViolation(format!("{} at {}", e.inner(), e.path())))?;
    if file.schema != SCHEMA_ID {
        return Err(BenchError::SchemaViolation(format!(
            "unknown schema id `{}`, expected `{SCHEMA_ID}`",
            file.schema
        )));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut loaded = Vec::with_capacity(file.questions.len());
    let mut seen_ids = std::collections::HashSet::new();
    for mut q in file.questions {
        if !seen_ids.insert(q.id.clone()) {
            return Err(BenchError::SchemaViolation(format!(
                "duplicate question id `{}`",
                q.id
            )));
        }
        validate_question(&q)?;
        let resolved = base.join(&q.circuit);
        if !resolved.exists() {
            return Err(BenchError::MissingFixture(resolved));
        }
        let deck_text = std::fs::read_to_string(&resolved)?;
        let netlist = parse_netlist(&deck_text).map_err(|e| {
            BenchError::SchemaViolation(format!(
                "question `{}`: circuit {} does not parse: {e}",
                q.id,
                resolved.display()
            ))
        })?;
        q.circuit = resolved;
        loaded.push(LoadedQuestion { spec: q, netlist });
    }
    Ok(loaded)
}

fn validate_question(q: &BenchmarkQuestion) -> Result<(), BenchError> {
    let fail = |msg: String| {
        Err(BenchError::SchemaViolation(format!(
            "question `{}`: {msg}",
            q.id
        )))
    };
    match q.category {
        Category::ParameterTuning => {
            if q.target.is_none() {
                return fail("parameter_tuning requires a target".to_string());
            }
            if q.verification.measurement().is_none() {
                return fail("parameter_tuning requires a measurement verification".to_string());
            }
            if let Some(t) = &q.target {
                if t.value == 0.0 {
                    return fail("target value must be nonzero (APE divides by it)".to_string());
                }
            }
            if !q.prompt_template.contains("{target}") {
                return fail("prompt_template lacks the {target} placeholder".to_string());
            }
        }
        Category::TopologyAdaption => {
            if q.target.is_some() {
                return fail("topology_adaption takes no target".to_string());
            }
            if q.tolerance_pct.is_some() {
                return fail("topology_adaption takes no tolerance".to_string());
            }
            if q.verification.measurement().is_some() {
                return fail("topology_adaption requires a topology predicate".to_string());
            }
        }
    }
    if let Verification::PinConnectedVia { kind, value, .. } = &q.verification {
        if ComponentKind::from_name(kind).is_none() || kind.len() != 1 {
            return fail(format!(
                "predicate kind `{kind}` must be a single kind letter"
            ));
        }
        if *value <= 0.0 {
            return fail("predicate value must be positive".to_string());
        }
    }
    Ok(())
}

/// Instantiate a question prompt: fill the target placeholder and append
/// the serialized circuit.
pub fn render_prompt(q: &BenchmarkQuestion, netlist: &Netlist) -> String {
    let mut prompt = match &q.target {
        Some(target) => q
            .prompt_template
            .replace("{target}", &format_target(target)),
        None => q.prompt_template.clone(),
    };
    prompt.push_str("\n\nNetlist:\n");
    prompt.push_str(&crate::netlist::serialize_netlist(netlist));
    prompt
}

/// Engineering-style target rendering: 0.1 A becomes "100 mA".
pub fn format_target(target: &Target) -> String {
    let rendered = crate::netlist::render_magnitude(target.value);
    let split = rendered
        .find(|c: char| c.is_ascii_alphabetic())
        .unwrap_or(rendered.len());
    let (digits, prefix) = rendered.split_at(split);
    format!("{digits} {prefix}{}", target.unit)
}

/// True iff a single two-terminal component of the given kind and value
/// (within 1%) directly bridges the two nodes.
pub fn pin_connected_via(
    netlist: &Netlist,
    pin_node: &str,
    target_node: &str,
    kind: ComponentKind,
    value: f64,
) -> Result<bool, NetlistError> {
    netlist.direct_link(pin_node, target_node, kind, value, 0.01)
}

/// Absolute percentage error between target `actual` and achieved `found`.
pub fn absolute_percentage_error(actual: f64, found: f64) -> f64 {
    ((actual - found) / actual).abs() * 100.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub question_id: String,
    pub run: usize,
    pub category: Category,
    pub class: String,
    pub solved: bool,
    pub measured: Option<Measurement>,
    pub ape: Option<f64>,
    pub failure_reason: Option<String>,
}

/// Options shared by every question evaluation in a run.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub engine: EngineKind,
    /// Overrides the steady-state default for verification simulations.
    pub transient: Option<TransientSpec>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            engine: EngineKind::Reference,
            transient: None,
        }
    }
}

/// Verify one answered netlist against its question: simulate and read the
/// named feature (parameter tuning) or run the topology predicate.
pub fn evaluate_answer(
    q: &LoadedQuestion,
    answer: &Netlist,
    run: usize,
    opts: &EvalOptions,
) -> EvalResult {
    let base = EvalResult {
        question_id: q.spec.id.clone(),
        run,
        category: q.spec.category,
        class: q.spec.class_label(),
        solved: false,
        measured: None,
        ape: None,
        failure_reason: None,
    };
    match &q.spec.verification {
        Verification::PinConnectedVia {
            node_a,
            node_b,
            kind,
            value,
        } => {
            let kind = ComponentKind::from_name(kind).expect("validated at load");
            match pin_connected_via(answer, node_a, node_b, kind, *value) {
                Ok(ok) => EvalResult {
                    solved: ok,
                    failure_reason: (!ok).then(|| "predicate not satisfied".to_string()),
                    ..base
                },
                Err(err) => EvalResult {
                    failure_reason: Some(err.to_string()),
                    ..base
                },
            }
        }
        verification => {
            let (kind, signal) = verification
                .measurement()
                .expect("measurement verification");
            let target = q.spec.target.as_ref().expect("validated at load");
            let analysis = opts.transient.unwrap_or_else(|| {
                let f_s = engine::detect_buck_pattern(answer)
                    .map(|p| p.switching_frequency)
                    .unwrap_or(500e3);
                if kind == MeasurementKind::SettleTime {
                    TransientSpec::from_start(f_s)
                } else {
                    TransientSpec::steady_state(f_s)
                }
            });
            let job = SimulationJob {
                netlist: answer.clone(),
                analysis,
                engine: opts.engine.clone(),
            };
            let dataset = match engine::run(&job) {
                Ok(ds) => ds,
                Err(err) => {
                    return EvalResult {
                        failure_reason: Some(format!("simulation failed: {err}")),
                        ..base
                    }
                }
            };
            let measurement = match measure::read_feature(&dataset, signal, kind) {
                Ok(m) => m,
                Err(err) => {
                    return EvalResult {
                        failure_reason: Some(format!("measurement failed: {err}")),
                        ..base
                    }
                }
            };
            let ape = absolute_percentage_error(target.value, measurement.value);
            let tolerance = q.spec.effective_tolerance_pct() / 100.0 * target.value.abs();
            let solved = (measurement.value - target.value).abs() <= tolerance;
            EvalResult {
                solved,
                measured: Some(measurement),
                ape: Some(ape),
                failure_reason: None,
                ..base
            }
        }
    }
}

/// Harness-level knobs for a full benchmark run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub n_runs: usize,
    pub workers: usize,
    pub session: SessionConfig,
    pub eval: EvalOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            n_runs: 1,
            workers: 1,
            session: SessionConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

/// Outcome of one question in one run, with its session transcript kept
/// for the audit trail.
pub struct QuestionOutcome {
    pub result: EvalResult,
    pub session: SessionOutcome,
}

fn evaluate_one(
    q: &LoadedQuestion,
    run: usize,
    factory: &dyn AgentFactory,
    opts: &RunOptions,
) -> QuestionOutcome {
    let mut client = factory.client_for(q, run);
    let prompt = render_prompt(&q.spec, &q.netlist);
    let session = run_session(&prompt, &q.netlist, &opts.session, client.as_mut());
    let result = match &session.final_netlist {
        Some(answer) => evaluate_answer(q, answer, run, &opts.eval),
        None => EvalResult {
            question_id: q.spec.id.clone(),
            run,
            category: q.spec.category,
            class: q.spec.class_label(),
            solved: false,
            measured: None,
            ape: None,
            failure_reason: Some(format!(
                "no final netlist (termination: {:?})",
                session.termination
            )),
        },
    };
    QuestionOutcome { result, session }
}

/// Evaluate all questions for one run. Parallel across questions when the
/// `parallel` feature is enabled and `workers > 1`; results are ordered by
/// question id either way.
pub fn run_once(
    questions: &[LoadedQuestion],
    run: usize,
    factory: &dyn AgentFactory,
    opts: &RunOptions,
) -> Vec<QuestionOutcome> {
    let mut outcomes = run_once_inner(questions, run, factory, opts);
    outcomes.sort_by(|a, b| a.result.question_id.cmp(&b.result.question_id));
    outcomes
}

#[cfg(feature = "parallel")]
fn run_once_inner(
    questions: &[LoadedQuestion],
    run: usize,
    factory: &dyn AgentFactory,
    opts: &RunOptions,
) -> Vec<QuestionOutcome> {
    use rayon::prelude::*;
    if opts.workers <= 1 {
        return questions
            .iter()
            .map(|q| evaluate_one(q, run, factory, opts))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .expect("worker pool");
    pool.install(|| {
        questions
            .par_iter()
            .map(|q| evaluate_one(q, run, factory, opts))
            .collect()
    })
}

#[cfg(not(feature = "parallel"))]
fn run_once_inner(
    questions: &[LoadedQuestion],
    run: usize,
    factory: &dyn AgentFactory,
    opts: &RunOptions,
) -> Vec<QuestionOutcome> {
    questions
        .iter()
        .map(|q| evaluate_one(q, run, factory, opts))
        .collect()
}

/// Run the whole benchmark `n_runs` times and aggregate a report.
/// `on_outcome` observes every (run, outcome) pair, e.g. to persist
/// transcripts.
pub fn run_benchmark_with<F>(
    questions: &[LoadedQuestion],
    factory: &dyn AgentFactory,
    opts: &RunOptions,
    mut on_outcome: F,
) -> Report
where
    F: FnMut(&QuestionOutcome),
{
    let mut all_results: Vec<EvalResult> = Vec::new();
    let mut per_run_rates: Vec<f64> = Vec::new();
    for run in 0..opts.n_runs.max(1) {
        let outcomes = run_once(questions, run, factory, opts);
        let solved = outcomes.iter().filter(|o| o.result.solved).count();
        per_run_rates.push(100.0 * solved as f64 / questions.len().max(1) as f64);
        for outcome in &outcomes {
            on_outcome(outcome);
        }
        all_results.extend(outcomes.into_iter().map(|o| o.result));
    }
    Report::aggregate(factory.name(), per_run_rates, all_results)
}

pub fn run_benchmark(
    questions: &[LoadedQuestion],
    factory: &dyn AgentFactory,
    opts: &RunOptions,
) -> Report {
    run_benchmark_with(questions, factory, opts, |_| {})
}
