//! spicedeck command line: parse and edit SPICE decks, run transient
//! simulations, read waveform features, drive LLM agent sessions, and run
//! the design-task benchmark.
//!
//! Configuration precedence is fixed: config file, overridden by flags,
//! overridden by environment variables. Credentials are env-only.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use spicedeck_core::agent::{
    self, Datasheet, HttpClient, LlmClient, ScriptedClient, SessionConfig, Termination,
};
use spicedeck_core::benchmark::{
    self, AgentFactory, BisectionAgent, LoadedQuestion, NoopAgent, OracleAgent, ReplayAgent,
    RunOptions,
};
use spicedeck_core::engine::{self, EngineConfig, EngineKind, SimulationJob, TransientSpec};
use spicedeck_core::measure::MeasurementKind;
use spicedeck_core::netlist::{parse_netlist, serialize_netlist, Netlist};

const ENV_ENGINE: &str = "SPICEDECK_ENGINE";
const ENV_ENGINE_CMD: &str = "SPICEDECK_ENGINE_CMD";
const ENV_CONFIG: &str = "SPICEDECK_CONFIG";

// Exit codes, documented in the README: 2 input/config error, 3 unknown
// signal, 4 iteration cap, 5 engine or session failure.
const EXIT_INPUT: u8 = 2;
const EXIT_UNKNOWN_SIGNAL: u8 = 3;
const EXIT_ITERATION_CAP: u8 = 4;
const EXIT_RUNTIME: u8 = 5;

#[derive(Parser)]
#[command(
    name = "spicedeck",
    version,
    about = "SPICE netlist tooling for switched-mode power supply design tasks",
    subcommand_required = true
)]
struct Cli {
    /// Config file (TOML). Default: $SPICEDECK_CONFIG, then ./spicedeck.toml.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a deck and print it normalized (or as JSON cards).
    Parse {
        deck: PathBuf,
        /// Emit a structured card listing instead of deck text.
        #[arg(long)]
        json: bool,
    },
    /// Simulate a deck (or read a raw file) and print one measurement line.
    Measure {
        /// Deck (.cir/.sp) to simulate, or raw waveform file to read directly.
        input: PathBuf,
        #[arg(long)]
        signal: String,
        /// mean | ripple | switching_frequency | settle_time
        #[arg(long)]
        kind: String,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Run a transient simulation and write the raw waveform file.
    Simulate {
        deck: PathBuf,
        /// Output raw file path.
        #[arg(long, short)]
        out: PathBuf,
        /// Write the ASCII Values form instead of binary.
        #[arg(long)]
        ascii: bool,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Run one agent session against a deck and a free-form request.
    Ask {
        deck: PathBuf,
        /// The design request, e.g. "set the output voltage to 9 V".
        #[arg(long)]
        prompt: String,
        /// Attach a plain-text datasheet for retrieval.
        #[arg(long)]
        rag: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        max_iter: usize,
        /// Play back a scripted client file instead of a live endpoint.
        #[arg(long)]
        scripted: Option<PathBuf>,
        /// Disable tools (single-turn baseline).
        #[arg(long)]
        no_tools: bool,
        #[arg(long, default_value = "spicedeck-out")]
        out_dir: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Run the benchmark over a question file and write report artifacts.
    Bench {
        questions: PathBuf,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// oracle | noop | bisection | replay=<script.json> | live
        #[arg(long, default_value = "oracle")]
        agent: String,
        #[arg(long, default_value_t = 8)]
        max_iter: usize,
        #[arg(long, default_value = "bench-out")]
        out_dir: PathBuf,
        /// Skip writing per-session transcripts under <out-dir>/transcripts.
        #[arg(long)]
        no_transcripts: bool,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Re-render the report table from a previous run's summary.json.
    Report { summary: PathBuf },
}

#[derive(Args, Clone)]
struct EngineArgs {
    /// reference | external
    #[arg(long)]
    engine: Option<String>,
    /// External engine command template with {netlist_path} and {raw_path}.
    #[arg(long)]
    engine_cmd: Option<String>,
    /// Transient stop time in seconds (engine default if omitted).
    #[arg(long)]
    tstop: Option<f64>,
    /// Integration/print step hint in seconds.
    #[arg(long)]
    tstep: Option<f64>,
    /// Discard samples before this time.
    #[arg(long)]
    record_from: Option<f64>,
    /// External engine timeout in seconds.
    #[arg(long)]
    engine_timeout: Option<u64>,
    /// Keep external engine scratch directories.
    #[arg(long)]
    keep_artifacts: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    engine: Option<String>,
    engine_command: Option<String>,
    engine_timeout_secs: Option<u64>,
    api_base: Option<String>,
    model: Option<String>,
    max_iterations: Option<usize>,
}

fn load_file_config(explicit: Option<&Path>) -> Result<FileConfig, String> {
    let path = explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var(ENV_CONFIG).ok().map(PathBuf::from))
        .or_else(|| {
            let conventional = PathBuf::from("spicedeck.toml");
            conventional.exists().then_some(conventional)
        });
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
        }
        None => Ok(FileConfig::default()),
    }
}

/// Resolved engine selection honoring config < flags < env.
fn resolve_engine(args: &EngineArgs, file: &FileConfig) -> Result<EngineKind, String> {
    let selection = std::env::var(ENV_ENGINE)
        .ok()
        .or_else(|| args.engine.clone())
        .or_else(|| file.engine.clone())
        .unwrap_or_else(|| "reference".to_string());
    match selection.as_str() {
        "reference" => Ok(EngineKind::Reference),
        "external" => {
            let template = std::env::var(ENV_ENGINE_CMD)
                .ok()
                .or_else(|| args.engine_cmd.clone())
                .or_else(|| file.engine_command.clone())
                .ok_or_else(|| {
                    format!(
                        "external engine selected but no command template \
                         (set {ENV_ENGINE_CMD}, --engine-cmd, or engine_command in the config)"
                    )
                })?;
            let timeout = args
                .engine_timeout
                .or(file.engine_timeout_secs)
                .unwrap_or(60);
            Ok(EngineKind::External(EngineConfig {
                command_template: template,
                working_dir: None,
                timeout: Duration::from_secs(timeout),
                keep_artifacts: args.keep_artifacts,
            }))
        }
        other => Err(format!("unknown engine `{other}` (reference|external)")),
    }
}

fn resolve_transient(args: &EngineArgs) -> Option<TransientSpec> {
    args.tstop.map(|t_stop| TransientSpec {
        t_stop,
        t_step_hint: args.tstep.unwrap_or(0.0),
        t_start_record: args.record_from.unwrap_or(0.0),
    })
}

/// Endpoint settings resolve env-first, then the config file. The API key
/// is env-only; it is never accepted as a flag or stored in config.
fn build_http_client(file_cfg: &FileConfig) -> Result<HttpClient, String> {
    let base = std::env::var(agent::http::ENV_API_BASE)
        .ok()
        .or_else(|| file_cfg.api_base.clone())
        .ok_or_else(|| {
            format!(
                "no endpoint configured (set {} or api_base in the config)",
                agent::http::ENV_API_BASE
            )
        })?;
    let model = std::env::var(agent::http::ENV_MODEL)
        .ok()
        .or_else(|| file_cfg.model.clone())
        .ok_or_else(|| {
            format!(
                "no model configured (set {} or model in the config)",
                agent::http::ENV_MODEL
            )
        })?;
    let key = std::env::var(agent::http::ENV_API_KEY).ok();
    Ok(HttpClient::new(&base, key, &model))
}

fn read_deck(path: &Path) -> Result<Netlist, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_netlist(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn default_analysis(netlist: &Netlist, kind: Option<MeasurementKind>) -> TransientSpec {
    let f_s = engine::detect_buck_pattern(netlist)
        .map(|p| p.switching_frequency)
        .unwrap_or(500e3);
    if kind == Some(MeasurementKind::SettleTime) {
        TransientSpec::from_start(f_s)
    } else {
        TransientSpec::steady_state(f_s)
    }
}

fn cmd_parse(deck: &Path, json: bool) -> Result<(), (u8, String)> {
    let netlist = read_deck(deck).map_err(|e| (EXIT_INPUT, e))?;
    if json {
        let text = serde_json::to_string_pretty(&netlist).expect("netlist serializes");
        println!("{text}");
    } else {
        print!("{}", serialize_netlist(&netlist));
    }
    Ok(())
}

fn cmd_measure(
    input: &Path,
    signal: &str,
    kind_text: &str,
    engine_args: &EngineArgs,
    file_cfg: &FileConfig,
) -> Result<(), (u8, String)> {
    let kind = MeasurementKind::parse(kind_text).ok_or_else(|| {
        (
            EXIT_INPUT,
            format!("unknown measurement kind `{kind_text}`"),
        )
    })?;
    let is_raw = input
        .extension()
        .map(|e| e.eq_ignore_ascii_case("raw"))
        .unwrap_or(false);
    let dataset = if is_raw {
        let bytes =
            std::fs::read(input).map_err(|e| (EXIT_INPUT, format!("{}: {e}", input.display())))?;
        engine::parse_raw(&bytes).map_err(|e| (EXIT_INPUT, e.to_string()))?
    } else {
        let netlist = read_deck(input).map_err(|e| (EXIT_INPUT, e))?;
        let analysis = resolve_transient(engine_args)
            .unwrap_or_else(|| default_analysis(&netlist, Some(kind)));
        let job = SimulationJob {
            netlist,
            analysis,
            engine: resolve_engine(engine_args, file_cfg).map_err(|e| (EXIT_INPUT, e))?,
        };
        engine::run(&job).map_err(|e| (EXIT_RUNTIME, e.to_string()))?
    };
    let measurement =
        spicedeck_core::measure::read_feature(&dataset, signal, kind).map_err(|e| match e {
            spicedeck_core::measure::MeasureError::UnknownSignal(_) => {
                (EXIT_UNKNOWN_SIGNAL, e.to_string())
            }
            other => (EXIT_RUNTIME, other.to_string()),
        })?;
    println!("{}", measurement.render());
    Ok(())
}

fn cmd_simulate(
    deck: &Path,
    out: &Path,
    ascii: bool,
    engine_args: &EngineArgs,
    file_cfg: &FileConfig,
) -> Result<(), (u8, String)> {
    let netlist = read_deck(deck).map_err(|e| (EXIT_INPUT, e))?;
    let analysis =
        resolve_transient(engine_args).unwrap_or_else(|| default_analysis(&netlist, None));
    let job = SimulationJob {
        netlist,
        analysis,
        engine: resolve_engine(engine_args, file_cfg).map_err(|e| (EXIT_INPUT, e))?,
    };
    let dataset = engine::run(&job).map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
    let payload = if ascii {
        engine::write_raw_ascii(&dataset).into_bytes()
    } else {
        engine::write_raw(&dataset)
    };
    std::fs::write(out, payload).map_err(|e| (EXIT_RUNTIME, format!("{}: {e}", out.display())))?;
    println!(
        "wrote {} ({} points, {} signals)",
        out.display(),
        dataset.n_points(),
        dataset.variables().len() - 1
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ask(
    deck: &Path,
    prompt: &str,
    rag: Option<&Path>,
    max_iter: usize,
    scripted: Option<&Path>,
    no_tools: bool,
    out_dir: &Path,
    engine_args: &EngineArgs,
    file_cfg: &FileConfig,
) -> Result<(), (u8, String)> {
    let netlist = read_deck(deck).map_err(|e| (EXIT_INPUT, e))?;
    let datasheet = match rag {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| (EXIT_INPUT, format!("{}: {e}", path.display())))?;
            if text.trim().is_empty() {
                return Err((
                    EXIT_INPUT,
                    format!("{}: document contains no tokens", path.display()),
                ));
            }
            Some(Datasheet {
                name: path.display().to_string(),
                text,
            })
        }
        None => None,
    };
    let cfg = SessionConfig {
        max_iterations: file_cfg.max_iterations.unwrap_or(max_iter),
        datasheet,
        engine: resolve_engine(engine_args, file_cfg).map_err(|e| (EXIT_INPUT, e))?,
        transient: resolve_transient(engine_args),
        tools_enabled: !no_tools,
        ..SessionConfig::default()
    };
    let mut client: Box<dyn LlmClient> = match scripted {
        Some(path) => {
            Box::new(ScriptedClient::from_path(path).map_err(|e| (EXIT_INPUT, e.to_string()))?)
        }
        None => Box::new(build_http_client(file_cfg).map_err(|e| (EXIT_INPUT, e))?),
    };
    let outcome = agent::run_session(prompt, &netlist, &cfg, client.as_mut());

    std::fs::create_dir_all(out_dir)
        .map_err(|e| (EXIT_RUNTIME, format!("{}: {e}", out_dir.display())))?;
    let transcript_path = out_dir.join("transcript.jsonl");
    std::fs::write(
        &transcript_path,
        agent::transcript_to_jsonl(&outcome.transcript),
    )
    .map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
    if let Some(final_netlist) = &outcome.final_netlist {
        let final_path = out_dir.join("final.cir");
        std::fs::write(&final_path, serialize_netlist(final_netlist))
            .map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
        println!("final netlist: {}", final_path.display());
    }
    if let Some(candidate) = &outcome.last_candidate {
        if outcome.final_netlist.is_none() {
            let path = out_dir.join("last_candidate.cir");
            std::fs::write(&path, serialize_netlist(candidate))
                .map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
            println!("last candidate: {}", path.display());
        }
    }
    println!(
        "termination: {:?} after {} iterations (transcript: {})",
        outcome.termination,
        outcome.iterations_used,
        transcript_path.display()
    );
    for note in &outcome.notes {
        println!("note: {note}");
    }
    match outcome.termination {
        Termination::FinalAnswer => Ok(()),
        Termination::IterationCap => Err((EXIT_ITERATION_CAP, "iteration cap reached".into())),
        Termination::Error => Err((EXIT_RUNTIME, "session failed".into())),
    }
}

fn build_agent(agent: &str, file_cfg: &FileConfig) -> Result<Box<dyn AgentFactory>, String> {
    match agent {
        "oracle" => Ok(Box::new(OracleAgent::default())),
        "noop" => Ok(Box::new(NoopAgent)),
        "bisection" => Ok(Box::new(BisectionAgent)),
        "live" => {
            // Validate the endpoint configuration up front.
            build_http_client(file_cfg)?;
            Ok(Box::new(LiveAgent {
                api_base: std::env::var(agent::http::ENV_API_BASE)
                    .ok()
                    .or_else(|| file_cfg.api_base.clone())
                    .expect("validated above"),
                model: std::env::var(agent::http::ENV_MODEL)
                    .ok()
                    .or_else(|| file_cfg.model.clone())
                    .expect("validated above"),
            }))
        }
        other => match other.strip_prefix("replay=") {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
                let script = serde_json::from_str(&text).map_err(|e| format!("{path}: {e}"))?;
                Ok(Box::new(ReplayAgent::new(script)))
            }
            None => Err(format!(
                "unknown agent `{other}` (oracle|noop|bisection|replay=<file>|live)"
            )),
        },
    }
}

/// Live-endpoint factory; one HTTP client per session.
struct LiveAgent {
    api_base: String,
    model: String,
}

impl AgentFactory for LiveAgent {
    fn client_for(&self, _question: &LoadedQuestion, _run: usize) -> Box<dyn LlmClient + Send> {
        let key = std::env::var(agent::http::ENV_API_KEY).ok();
        Box::new(HttpClient::new(&self.api_base, key, &self.model))
    }

    fn name(&self) -> &str {
        "live"
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    questions_path: &Path,
    runs: usize,
    workers: usize,
    agent_name: &str,
    max_iter: usize,
    out_dir: &Path,
    keep_transcripts: bool,
    engine_args: &EngineArgs,
    file_cfg: &FileConfig,
) -> Result<(), (u8, String)> {
    let questions =
        benchmark::load_questions(questions_path).map_err(|e| (EXIT_INPUT, e.to_string()))?;
    let factory = build_agent(agent_name, file_cfg).map_err(|e| (EXIT_INPUT, e))?;
    let engine = resolve_engine(engine_args, file_cfg).map_err(|e| (EXIT_INPUT, e))?;
    let opts = RunOptions {
        n_runs: runs.max(1),
        workers: workers.max(1),
        session: SessionConfig {
            max_iterations: file_cfg.max_iterations.unwrap_or(max_iter),
            engine: engine.clone(),
            transient: resolve_transient(engine_args),
            ..SessionConfig::default()
        },
        eval: benchmark::EvalOptions {
            engine,
            transient: resolve_transient(engine_args),
        },
    };

    std::fs::create_dir_all(out_dir)
        .map_err(|e| (EXIT_RUNTIME, format!("{}: {e}", out_dir.display())))?;
    let transcripts_dir = out_dir.join("transcripts");
    if keep_transcripts {
        std::fs::create_dir_all(&transcripts_dir).map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
    }
    let report = benchmark::run_benchmark_with(&questions, factory.as_ref(), &opts, |outcome| {
        if keep_transcripts {
            let name = format!(
                "run{}-{}.jsonl",
                outcome.result.run, outcome.result.question_id
            );
            let _ = std::fs::write(
                transcripts_dir.join(name),
                agent::transcript_to_jsonl(&outcome.session.transcript),
            );
        }
    });

    std::fs::write(out_dir.join("report.txt"), report.table())
        .map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
    std::fs::write(out_dir.join("report.csv"), report.to_csv())
        .map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
    let summary = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(out_dir.join("summary.json"), summary)
        .map_err(|e| (EXIT_RUNTIME, e.to_string()))?;

    println!("solve_rate: {:.1}", report.solve_rate);
    match report.median_ape {
        Some(ape) => println!("median_ape: {ape:.1}"),
        None => println!("median_ape: n/a"),
    }
    if let Some((lo, hi)) = report.solve_rate_ci {
        println!("solve_rate_ci95: ({lo:.1}, {hi:.1})");
    }
    println!("artifacts: {}", out_dir.display());
    Ok(())
}

fn cmd_report(summary: &Path) -> Result<(), (u8, String)> {
    let text = std::fs::read_to_string(summary)
        .map_err(|e| (EXIT_INPUT, format!("{}: {e}", summary.display())))?;
    let report: benchmark::Report =
        serde_json::from_str(&text).map_err(|e| (EXIT_INPUT, format!("bad summary: {e}")))?;
    print!("{}", report.table());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file_cfg = match load_file_config(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let outcome = match &cli.command {
        Command::Parse { deck, json } => cmd_parse(deck, *json),
        Command::Measure {
            input,
            signal,
            kind,
            engine,
        } => cmd_measure(input, signal, kind, engine, &file_cfg),
        Command::Simulate {
            deck,
            out,
            ascii,
            engine,
        } => cmd_simulate(deck, out, *ascii, engine, &file_cfg),
        Command::Ask {
            deck,
            prompt,
            rag,
            max_iter,
            scripted,
            no_tools,
            out_dir,
            engine,
        } => cmd_ask(
            deck,
            prompt,
            rag.as_deref(),
            *max_iter,
            scripted.as_deref(),
            *no_tools,
            out_dir,
            engine,
            &file_cfg,
        ),
        Command::Bench {
            questions,
            runs,
            workers,
            agent,
            max_iter,
            out_dir,
            no_transcripts,
            engine,
        } => cmd_bench(
            questions,
            *runs,
            *workers,
            agent,
            *max_iter,
            out_dir,
            !*no_transcripts,
            engine,
            &file_cfg,
        ),
        Command::Report { summary } => cmd_report(summary),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
