//! The tool-calling agent loop: carry a conversation with an LLM endpoint,
//! expose netlist/simulation/datasheet tools, execute requested calls, and
//! emit a final adapted netlist.
//!
//! The LLM never sees raw waveform vectors; simulation feedback is always
//! the rendered one-line measurement string.

pub mod client;
pub mod http;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use client::{
    ClientError, LlmClient, OneShotClient, Sampling, Script, ScriptCall, ScriptTurn, ScriptedClient,
};
pub use http::HttpClient;

use crate::engine::{self, EngineKind, SimulationJob, TransientSpec};
use crate::measure::{self, MeasurementKind};
use crate::netlist::{parse_netlist, Netlist};
use crate::rag::{self, RetrievalConfig, RetrievalIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub id: String,
    pub text: String,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    pub fn system(content: &str) -> ChatMessage {
        ChatMessage {
            role: Role::System,
            content: content.to_string(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn user(content: &str) -> ChatMessage {
        ChatMessage {
            role: Role::User,
            content: content.to_string(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn tool(result: &ToolResult) -> ChatMessage {
        ChatMessage {
            role: Role::Tool,
            content: result.text.clone(),
            tool_calls: Vec::new(),
            tool_call_id: Some(result.id.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolParam {
    pub name: String,
    pub kind: String,
    pub description: String,
    pub required: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ToolParam>,
}

impl ToolSpec {
    /// The `{"type": "function", ...}` wire form.
    pub fn to_wire(&self) -> Value {
        let mut properties = serde_json::Map::new();
        let mut required = Vec::new();
        for p in &self.params {
            properties.insert(
                p.name.clone(),
                serde_json::json!({ "type": p.kind, "description": p.description }),
            );
            if p.required {
                required.push(Value::String(p.name.clone()));
            }
        }
        serde_json::json!({
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {
                    "type": "object",
                    "properties": properties,
                    "required": required,
                }
            }
        })
    }
}

/// A datasheet attached to a session, as pre-extracted plain text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Datasheet {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub max_iterations: usize,
    pub temperature: f64,
    pub top_p: f64,
    /// Appended to the built prompt; the required directives always stay.
    pub extra_instructions: Option<String>,
    pub datasheet: Option<Datasheet>,
    pub retrieval: RetrievalConfig,
    pub engine: EngineKind,
    /// Overrides the per-read transient window when set.
    pub transient: Option<TransientSpec>,
    /// With tools disabled the session reduces to a single LLM turn plus
    /// netlist extraction (the bare-model baseline).
    pub tools_enabled: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            max_iterations: 8,
            temperature: 1.0,
            top_p: 1.0,
            extra_instructions: None,
            datasheet: None,
            retrieval: RetrievalConfig::default(),
            engine: EngineKind::Reference,
            transient: None,
            tools_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FinalAnswer,
    IterationCap,
    Error,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionOutcome {
    /// Present exactly when the session terminated with a final answer.
    pub final_netlist: Option<Netlist>,
    pub transcript: Vec<ChatMessage>,
    pub iterations_used: usize,
    pub termination: Termination,
    /// Last accepted candidate when the iteration cap was hit.
    pub last_candidate: Option<Netlist>,
    pub notes: Vec<String>,
}

/// Build the session system prompt: the adapted netlist must always appear
/// in responses, reasoning is prompted stepwise, tool availability is
/// stated, and the datasheet clause appears only when one is attached.
pub fn build_system_prompt(cfg: &SessionConfig) -> String {
    let mut prompt = String::from(
        "You are an assistant for adapting switched-mode power supply circuits \
         described as SPICE netlists. Always include the complete adapted netlist \
         in your responses, inside a fenced code block. Think step by step.",
    );
    if cfg.tools_enabled {
        prompt.push_str(
            "\nYou can call submit_netlist to register a candidate netlist and \
             simulate_and_read to simulate the current candidate and read one \
             waveform feature (mean, ripple, switching_frequency or settle_time). \
             Measurements come back as short text lines, never raw waveforms.",
        );
    }
    if cfg.datasheet.is_some() {
        prompt.push_str(
            "\nYou have access to the datasheet of the circuit's controller; call \
             search_datasheet to retrieve relevant passages.",
        );
    }
    if let Some(extra) = &cfg.extra_instructions {
        prompt.push('\n');
        prompt.push_str(extra);
    }
    prompt
}

/// The tool surface exposed to the LLM. `search_datasheet` appears only
/// when a datasheet is attached.
pub fn default_toolset(datasheet_attached: bool) -> Vec<ToolSpec> {
    let mut tools = vec![
        ToolSpec {
            name: "submit_netlist".to_string(),
            description: "Validate a complete SPICE netlist and store it as the current \
                          candidate for simulation."
                .to_string(),
            params: vec![ToolParam {
                name: "text".to_string(),
                kind: "string".to_string(),
                description: "Full netlist text, one card per line.".to_string(),
                required: true,
            }],
        },
        ToolSpec {
            name: "simulate_and_read".to_string(),
            description: "Run a transient simulation of the current candidate netlist and \
                          extract one feature from a signal."
                .to_string(),
            params: vec![
                ToolParam {
                    name: "signal".to_string(),
                    kind: "string".to_string(),
                    description: "Signal name, e.g. V(out) or I(L).".to_string(),
                    required: true,
                },
                ToolParam {
                    name: "kind".to_string(),
                    kind: "string".to_string(),
                    description: "One of mean, ripple, switching_frequency, settle_time."
                        .to_string(),
                    required: true,
                },
            ],
        },
    ];
    if datasheet_attached {
        tools.push(ToolSpec {
            name: "search_datasheet".to_string(),
            description: "Retrieve the most relevant datasheet passages for a query.".to_string(),
            params: vec![ToolParam {
                name: "query".to_string(),
                kind: "string".to_string(),
                description: "Free-text search query.".to_string(),
                required: true,
            }],
        });
    }
    tools
}

/// Extract a netlist from assistant prose: first any fenced code block that
/// parses, then the longest run of card-shaped lines ending at `.end`.
pub fn extract_netlist_from_response(text: &str) -> Option<Netlist> {
    // Fenced blocks, netlist-tagged fences first.
    let mut blocks: Vec<(String, String)> = Vec::new();
    let mut fence_lang: Option<String> = None;
    let mut body = String::new();
    for line in text.lines() {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("```") {
            match fence_lang.take() {
                Some(lang) => {
                    blocks.push((lang, std::mem::take(&mut body)));
                }
                None => {
                    fence_lang = Some(rest.trim().to_ascii_lowercase());
                }
            }
            continue;
        }
        if fence_lang.is_some() {
            body.push_str(line);
            body.push('\n');
        }
    }
    let tagged = ["spice", "netlist", "cir", "sp"];
    let mut ordered: Vec<&(String, String)> = blocks
        .iter()
        .filter(|(lang, _)| tagged.contains(&lang.as_str()))
        .collect();
    ordered.extend(
        blocks
            .iter()
            .filter(|(lang, _)| !tagged.contains(&lang.as_str())),
    );
    for (_, block) in ordered {
        if let Ok(netlist) = parse_netlist(block) {
            if netlist.components().next().is_some() {
                return Some(netlist);
            }
        }
    }

    // Fallback: contiguous card-shaped lines ending at ".end".
    let lines: Vec<&str> = text.lines().collect();
    let mut best: Option<Netlist> = None;
    let mut best_len = 0usize;
    for (end_idx, line) in lines.iter().enumerate() {
        if !line.trim().eq_ignore_ascii_case(".end") {
            continue;
        }
        let mut start = end_idx;
        while start > 0 && looks_like_card(lines[start - 1]) {
            start -= 1;
        }
        while start <= end_idx {
            let candidate = lines[start..=end_idx].join("\n");
            if let Ok(netlist) = parse_netlist(&candidate) {
                if netlist.components().next().is_some() && end_idx - start > best_len {
                    best_len = end_idx - start;
                    best = Some(netlist);
                }
                break;
            }
            start += 1;
        }
    }
    best
}

fn looks_like_card(line: &str) -> bool {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return true;
    }
    let first = trimmed.chars().next().unwrap();
    if first == '.' || first == '*' || first == '+' {
        return true;
    }
    matches!(
        first.to_ascii_uppercase(),
        'R' | 'L' | 'C' | 'V' | 'I' | 'D' | 'S' | 'X' | 'M' | 'Q'
    ) && trimmed.split_whitespace().count() >= 3
}

struct SessionState {
    candidate: Netlist,
    submitted: bool,
    engine: EngineKind,
    transient: Option<TransientSpec>,
    datasheet_index: Option<RetrievalIndex>,
    retrieval: RetrievalConfig,
}

impl SessionState {
    fn execute(&mut self, call: &ToolCall) -> ToolResult {
        let outcome = match call.name.as_str() {
            "submit_netlist" => self.submit_netlist(&call.arguments),
            "simulate_and_read" => self.simulate_and_read(&call.arguments),
            "search_datasheet" => self.search_datasheet(&call.arguments),
            other => Err(format!("unknown tool `{other}`")),
        };
        match outcome {
            Ok(text) => ToolResult {
                id: call.id.clone(),
                text,
                success: true,
            },
            Err(text) => ToolResult {
                id: call.id.clone(),
                text,
                success: false,
            },
        }
    }

    fn string_arg(arguments: &Value, key: &str) -> Result<String, String> {
        arguments
            .get(key)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| format!("malformed tool arguments: missing string field `{key}`"))
    }

    fn submit_netlist(&mut self, arguments: &Value) -> Result<String, String> {
        let text = Self::string_arg(arguments, "text")?;
        match parse_netlist(&text) {
            Ok(netlist) => {
                let cards = netlist.cards().len();
                self.candidate = netlist;
                self.submitted = true;
                Ok(format!("netlist accepted ({cards} cards)"))
            }
            Err(err) => Err(format!("netlist rejected: {err}")),
        }
    }

    fn simulate_and_read(&mut self, arguments: &Value) -> Result<String, String> {
        let signal = Self::string_arg(arguments, "signal")?;
        let kind_text = Self::string_arg(arguments, "kind")?;
        let kind = MeasurementKind::parse(&kind_text).ok_or_else(|| {
            format!("malformed tool arguments: unknown measurement kind `{kind_text}`")
        })?;
        let analysis = self.transient.unwrap_or_else(|| {
            let f_s = engine::detect_buck_pattern(&self.candidate)
                .map(|p| p.switching_frequency)
                .unwrap_or(500e3);
            if kind == MeasurementKind::SettleTime {
                TransientSpec::from_start(f_s)
            } else {
                TransientSpec::steady_state(f_s)
            }
        });
        let job = SimulationJob {
            netlist: self.candidate.clone(),
            analysis,
            engine: self.engine.clone(),
        };
        let dataset = engine::run(&job).map_err(|e| format!("simulation failed: {e}"))?;
        let measurement =
            measure::read_feature(&dataset, &signal, kind).map_err(|e| e.to_string())?;
        Ok(measurement.render())
    }

    fn search_datasheet(&mut self, arguments: &Value) -> Result<String, String> {
        let query = Self::string_arg(arguments, "query")?;
        let index = self
            .datasheet_index
            .as_ref()
            .ok_or_else(|| "no datasheet attached to this session".to_string())?;
        let hits = index
            .retrieve(&query, self.retrieval.max_chunks)
            .map_err(|e| e.to_string())?;
        if hits.is_empty() {
            return Ok("no matching passages".to_string());
        }
        Ok(hits
            .iter()
            .map(|hit| format!("[chunk {}] {}", hit.chunk.ordinal, hit.chunk.text))
            .collect::<Vec<_>>()
            .join("\n---\n"))
    }
}

/// Run one agent session. One iteration is one assistant turn; a turn with
/// no tool calls and a parseable netlist in the content is the final
/// answer. Hitting the cap reports the last accepted candidate separately
/// instead of promoting it to a final answer.
pub fn run_session(
    task_prompt: &str,
    initial_netlist: &Netlist,
    cfg: &SessionConfig,
    client: &mut dyn LlmClient,
) -> SessionOutcome {
    let tools = if cfg.tools_enabled {
        default_toolset(cfg.datasheet.is_some())
    } else {
        Vec::new()
    };
    let sampling = Sampling {
        temperature: cfg.temperature,
        top_p: cfg.top_p,
    };
    let mut notes = Vec::new();
    let datasheet_index = cfg.datasheet.as_ref().and_then(|sheet| {
        match rag::chunk_document(&sheet.text, &sheet.name, &cfg.retrieval)
            .and_then(|chunks| rag::index(chunks, &cfg.retrieval))
        {
            Ok(index) => Some(index),
            Err(err) => {
                notes.push(format!("datasheet indexing failed: {err}"));
                None
            }
        }
    });
    let mut state = SessionState {
        candidate: initial_netlist.clone(),
        submitted: false,
        engine: cfg.engine.clone(),
        transient: cfg.transient,
        datasheet_index,
        retrieval: cfg.retrieval.clone(),
    };

    let mut transcript = vec![
        ChatMessage::system(&build_system_prompt(cfg)),
        ChatMessage::user(task_prompt),
    ];
    let max_turns = if cfg.tools_enabled {
        cfg.max_iterations.max(1)
    } else {
        1
    };

    for turn in 1..=max_turns {
        let message = match client.complete(&transcript, &tools, &sampling) {
            Ok(message) => message,
            Err(err) => {
                notes.push(format!("endpoint error: {err}"));
                return SessionOutcome {
                    final_netlist: None,
                    transcript,
                    iterations_used: turn - 1,
                    termination: Termination::Error,
                    last_candidate: state.submitted.then(|| state.candidate.clone()),
                    notes,
                };
            }
        };
        transcript.push(message.clone());

        if message.tool_calls.is_empty() {
            if let Some(netlist) = extract_netlist_from_response(&message.content) {
                return SessionOutcome {
                    final_netlist: Some(netlist),
                    transcript,
                    iterations_used: turn,
                    termination: Termination::FinalAnswer,
                    last_candidate: state.submitted.then(|| state.candidate.clone()),
                    notes,
                };
            }
            notes.push(format!(
                "turn {turn}: no tool calls and no parseable netlist"
            ));
            continue;
        }

        for call in &message.tool_calls {
            let result = state.execute(call);
            transcript.push(ChatMessage::tool(&result));
        }
    }

    SessionOutcome {
        final_netlist: None,
        transcript,
        iterations_used: max_turns,
        termination: Termination::IterationCap,
        last_candidate: state.submitted.then_some(state.candidate),
        notes,
    }
}

/// Serialize a transcript as one JSON message per line (the benchmark's
/// per-session audit log format).
pub fn transcript_to_jsonl(transcript: &[ChatMessage]) -> String {
    transcript
        .iter()
        .map(|m| serde_json::to_string(m).expect("chat messages serialize"))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}
