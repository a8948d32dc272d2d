//! Deterministic scripted agents for the harness: a perfect oracle that
//! computes answers analytically from the buck parameters, a no-op agent
//! that returns the input deck unchanged, a greedy-bisection agent that
//! adjusts one component against simulation feedback, and a replay agent
//! that plays back a canned script.

use serde_json::json;

use super::{Category, LoadedQuestion, Verification};
use crate::agent::{
    ChatMessage, ClientError, LlmClient, OneShotClient, Role, Sampling, Script, ScriptedClient,
    ToolCall, ToolSpec,
};
use crate::engine::{detect_buck_pattern, PulseSpec};
use crate::measure::MeasurementKind;
use crate::netlist::{
    render_magnitude, serialize_netlist, Component, ComponentKind, Netlist, PhysicalValue,
};

/// Builds one client per (question, run) pair.
pub trait AgentFactory: Sync {
    fn client_for(&self, question: &LoadedQuestion, run: usize) -> Box<dyn LlmClient + Send>;
    fn name(&self) -> &str;
}

fn fenced(netlist: &Netlist) -> String {
    format!("```spice\n{}```", serialize_netlist(netlist))
}

/// Returns the input deck unchanged in a single turn.
pub struct NoopAgent;

impl AgentFactory for NoopAgent {
    fn client_for(&self, question: &LoadedQuestion, _run: usize) -> Box<dyn LlmClient + Send> {
        Box::new(OneShotClient::new(fenced(&question.netlist)))
    }

    fn name(&self) -> &str {
        "noop"
    }
}

/// Replays a fixed script for every question.
pub struct ReplayAgent {
    script: Script,
}

impl ReplayAgent {
    pub fn new(script: Script) -> ReplayAgent {
        ReplayAgent { script }
    }
}

impl AgentFactory for ReplayAgent {
    fn client_for(&self, _question: &LoadedQuestion, _run: usize) -> Box<dyn LlmClient + Send> {
        Box::new(ScriptedClient::new(self.script.clone()))
    }

    fn name(&self) -> &str {
        "replay"
    }
}

/// Named pieces of a buck deck the analytic agents edit.
struct BuckHandles {
    pulse_source: String,
    pulse: PulseSpec,
    dc_source: Option<String>,
    inductor: String,
    capacitor: String,
}

fn buck_handles(netlist: &Netlist) -> Option<BuckHandles> {
    let mut pulse_source = None;
    let mut dc_source = None;
    let mut inductor = None;
    let mut capacitor = None;
    for c in netlist.components() {
        match c.kind {
            ComponentKind::VoltageSource => {
                if let Some(p) = c.value.as_deref().and_then(PulseSpec::parse) {
                    pulse_source = Some((c.name.clone(), p));
                } else if c.scalar_value().is_some() {
                    dc_source = Some(c.name.clone());
                }
            }
            ComponentKind::Inductor => inductor = Some(c.name.clone()),
            ComponentKind::Capacitor => capacitor = Some(c.name.clone()),
            _ => {}
        }
    }
    let (pulse_source, pulse) = pulse_source?;
    Some(BuckHandles {
        pulse_source,
        pulse,
        dc_source,
        inductor: inductor?,
        capacitor: capacitor?,
    })
}

/// Computes the correct deck analytically from the buck parameters and
/// answers in one turn; used as the harness upper bound.
pub struct OracleAgent {
    /// Ceiling used when a target output voltage forces a supply raise.
    pub max_duty: f64,
    /// Duty chosen after raising the supply.
    pub raised_duty: f64,
}

impl Default for OracleAgent {
    fn default() -> Self {
        OracleAgent {
            max_duty: 0.95,
            raised_duty: 0.75,
        }
    }
}

impl OracleAgent {
    fn answer(&self, q: &LoadedQuestion) -> Option<Netlist> {
        let deck = &q.netlist;
        match (&q.spec.category, &q.spec.verification) {
            (
                Category::TopologyAdaption,
                Verification::PinConnectedVia {
                    node_a,
                    node_b,
                    kind,
                    value,
                },
            ) => {
                let mut name = format!("{}fix", kind.to_ascii_uppercase());
                let mut suffix = 1;
                while deck.component(&name).is_some() {
                    name = format!("{}fix{suffix}", kind.to_ascii_uppercase());
                    suffix += 1;
                }
                let bridge = Component::new(
                    &name,
                    &[node_a.as_str(), node_b.as_str()],
                    Some(&render_magnitude(*value)),
                )
                .ok()?;
                deck.add_component(bridge).ok()
            }
            (Category::ParameterTuning, verification) => {
                let target = q.spec.target.as_ref()?.value;
                let handles = buck_handles(deck)?;
                let params = detect_buck_pattern(deck).ok()?;
                let (kind, signal) = verification.measurement()?;
                let supply_signal = signal.eq_ignore_ascii_case("V(in)");
                match kind {
                    MeasurementKind::Mean if supply_signal => {
                        self.set_supply(deck, &handles, target)
                    }
                    MeasurementKind::Mean => {
                        if target < self.max_duty * params.v_in {
                            let duty = target / params.v_in;
                            self.set_pulse(deck, &handles, |p| PulseSpec {
                                width: duty * p.period,
                                ..p
                            })
                        } else {
                            // Insufficient headroom: raise the supply, then
                            // dimension the duty for the new input.
                            let v_in = target / self.raised_duty;
                            let raised = self.set_supply(deck, &handles, v_in)?;
                            let handles = buck_handles(&raised)?;
                            self.set_pulse(&raised, &handles, |p| PulseSpec {
                                width: self.raised_duty * p.period,
                                ..p
                            })
                        }
                    }
                    MeasurementKind::Ripple => {
                        let v_out = params.duty * params.v_in;
                        let is_current = signal.to_ascii_lowercase().starts_with("i(");
                        if is_current {
                            let l =
                                v_out * (1.0 - params.duty) / (target * params.switching_frequency);
                            deck.set_component_value(&handles.inductor, &PhysicalValue::new(l))
                                .ok()
                        } else {
                            let delta_i = v_out * (1.0 - params.duty)
                                / (params.inductance * params.switching_frequency);
                            let c = delta_i / (8.0 * target * params.switching_frequency);
                            deck.set_component_value(&handles.capacitor, &PhysicalValue::new(c))
                                .ok()
                        }
                    }
                    MeasurementKind::SwitchingFrequency => {
                        let duty = handles.pulse.duty();
                        self.set_pulse(deck, &handles, |p| PulseSpec {
                            period: 1.0 / target,
                            width: duty / target,
                            ..p
                        })
                    }
                    MeasurementKind::SettleTime => None,
                }
            }
            _ => None,
        }
    }

    fn set_supply(&self, deck: &Netlist, handles: &BuckHandles, v_in: f64) -> Option<Netlist> {
        match &handles.dc_source {
            Some(name) => deck
                .set_component_value(name, &PhysicalValue::new(v_in))
                .ok(),
            // Pulse-at-switching-node form: the supply is the pulse high level.
            None => self.set_pulse(deck, handles, |p| PulseSpec { v2: v_in, ..p }),
        }
    }

    fn set_pulse<F>(&self, deck: &Netlist, handles: &BuckHandles, edit: F) -> Option<Netlist>
    where
        F: FnOnce(PulseSpec) -> PulseSpec,
    {
        let new_pulse = edit(handles.pulse);
        deck.set_component_spec(&handles.pulse_source, &new_pulse.render())
            .ok()
    }
}

impl AgentFactory for OracleAgent {
    fn client_for(&self, question: &LoadedQuestion, _run: usize) -> Box<dyn LlmClient + Send> {
        let content = match self.answer(question) {
            Some(deck) => fenced(&deck),
            None => fenced(&question.netlist),
        };
        Box::new(OneShotClient::new(content))
    }

    fn name(&self) -> &str {
        "oracle"
    }
}

/// Which scalar the bisection client turns.
#[derive(Debug, Clone)]
enum Knob {
    /// Inductance; larger values shrink the current ripple.
    Inductor(String),
    /// Capacitance; larger values shrink the voltage ripple.
    Capacitor(String),
    /// Pulse width; wider pulses raise the mean output.
    PulseWidth(String),
    /// Pulse period; longer periods lower the switching frequency.
    PulsePeriod(String),
    /// DC source value (or pulse amplitude); sets the supply directly.
    Supply,
}

impl Knob {
    /// Does the measurement grow with the knob?
    fn increasing(&self) -> bool {
        matches!(self, Knob::PulseWidth(_) | Knob::Supply)
    }
}

/// Greedy bisection: keep a bracket on one component value, probe the
/// current candidate, and move the knob to the geometric mean of the
/// bracket (biased by the measured/target ratio being above or below one)
/// until the reading lands inside the question tolerance.
pub struct BisectionAgent;

impl AgentFactory for BisectionAgent {
    fn client_for(&self, question: &LoadedQuestion, _run: usize) -> Box<dyn LlmClient + Send> {
        match BisectionClient::for_question(question) {
            Some(client) => Box::new(client),
            // Topology and unsupported questions fall back to the no-op answer.
            None => Box::new(OneShotClient::new(fenced(&question.netlist))),
        }
    }

    fn name(&self) -> &str {
        "bisection"
    }
}

pub struct BisectionClient {
    deck: Netlist,
    knob: Knob,
    lo: f64,
    hi: f64,
    /// Knob value behind the most recent measurement.
    last_knob: f64,
    target: f64,
    tolerance_frac: f64,
    signal: String,
    kind: MeasurementKind,
    probed: bool,
}

impl BisectionClient {
    pub fn for_question(q: &LoadedQuestion) -> Option<BisectionClient> {
        if q.spec.category != Category::ParameterTuning {
            return None;
        }
        let (kind, signal) = q.spec.verification.measurement()?;
        let target = q.spec.target.as_ref()?.value;
        let handles = buck_handles(&q.netlist)?;
        let (knob, current) = match kind {
            MeasurementKind::Mean if signal.eq_ignore_ascii_case("V(in)") => {
                let current = match &handles.dc_source {
                    Some(name) => q.netlist.component(name)?.scalar_value()?.magnitude,
                    None => handles.pulse.v2,
                };
                (Knob::Supply, current)
            }
            MeasurementKind::Mean => (
                Knob::PulseWidth(handles.pulse_source.clone()),
                handles.pulse.width,
            ),
            MeasurementKind::Ripple => {
                if signal.to_ascii_lowercase().starts_with("i(") {
                    let current = q
                        .netlist
                        .component(&handles.inductor)?
                        .scalar_value()?
                        .magnitude;
                    (Knob::Inductor(handles.inductor.clone()), current)
                } else {
                    let current = q
                        .netlist
                        .component(&handles.capacitor)?
                        .scalar_value()?
                        .magnitude;
                    (Knob::Capacitor(handles.capacitor.clone()), current)
                }
            }
            MeasurementKind::SwitchingFrequency => (
                Knob::PulsePeriod(handles.pulse_source.clone()),
                handles.pulse.period,
            ),
            MeasurementKind::SettleTime => return None,
        };
        let (mut lo, mut hi) = (current / 8.0, current * 8.0);
        if let Knob::PulseWidth(_) = knob {
            lo = lo.max(0.005 * handles.pulse.period);
            hi = hi.min(0.98 * handles.pulse.period);
        }
        Some(BisectionClient {
            deck: q.netlist.clone(),
            knob,
            lo,
            hi,
            last_knob: current,
            target,
            tolerance_frac: q.spec.effective_tolerance_pct() / 100.0,
            signal: signal.to_string(),
            kind,
            probed: false,
        })
    }

    fn apply_knob(&self, value: f64) -> Option<Netlist> {
        match &self.knob {
            Knob::Inductor(name) | Knob::Capacitor(name) => self
                .deck
                .set_component_value(name, &PhysicalValue::new(value))
                .ok(),
            Knob::PulseWidth(name) => {
                let pulse = self
                    .deck
                    .component(name)?
                    .value
                    .as_deref()
                    .and_then(PulseSpec::parse)?;
                self.deck
                    .set_component_spec(
                        name,
                        &PulseSpec {
                            width: value,
                            ..pulse
                        }
                        .render(),
                    )
                    .ok()
            }
            Knob::PulsePeriod(name) => {
                let pulse = self
                    .deck
                    .component(name)?
                    .value
                    .as_deref()
                    .and_then(PulseSpec::parse)?;
                let duty = pulse.duty();
                self.deck
                    .set_component_spec(
                        name,
                        &PulseSpec {
                            period: value,
                            width: duty * value,
                            ..pulse
                        }
                        .render(),
                    )
                    .ok()
            }
            Knob::Supply => {
                let handles = buck_handles(&self.deck)?;
                match &handles.dc_source {
                    Some(name) => self
                        .deck
                        .set_component_value(name, &PhysicalValue::new(value))
                        .ok(),
                    None => self
                        .deck
                        .set_component_spec(
                            &handles.pulse_source,
                            &PulseSpec {
                                v2: value,
                                ..handles.pulse
                            }
                            .render(),
                        )
                        .ok(),
                }
            }
        }
    }

    fn last_measurement(&self, messages: &[ChatMessage]) -> Option<f64> {
        let label = self.kind.label();
        messages.iter().rev().find_map(|m| {
            if m.role != Role::Tool {
                return None;
            }
            let mut tokens = m.content.split_whitespace();
            if tokens.next() != Some(label) {
                return None;
            }
            tokens.next()?.parse::<f64>().ok()
        })
    }

    fn read_call(&self) -> ToolCall {
        ToolCall {
            id: String::new(), // filled by the turn builder
            name: "simulate_and_read".to_string(),
            arguments: json!({ "signal": self.signal, "kind": self.kind.label() }),
        }
    }
}

impl LlmClient for BisectionClient {
    fn complete(
        &mut self,
        messages: &[ChatMessage],
        _tools: &[ToolSpec],
        _sampling: &Sampling,
    ) -> Result<ChatMessage, ClientError> {
        let turn_id = messages.len();
        let with_ids = |mut calls: Vec<ToolCall>| {
            for (i, call) in calls.iter_mut().enumerate() {
                call.id = format!("bisect-{turn_id}-{i}");
            }
            calls
        };

        if !self.probed {
            self.probed = true;
            return Ok(ChatMessage {
                role: Role::Assistant,
                content: "Probing the current design point.".to_string(),
                tool_calls: with_ids(vec![self.read_call()]),
                tool_call_id: None,
            });
        }

        let measured = match self.last_measurement(messages) {
            Some(m) => m,
            None => {
                // Simulation or parsing trouble: stop editing and answer
                // with the current candidate.
                return Ok(ChatMessage {
                    role: Role::Assistant,
                    content: format!("Stopping on unreadable feedback.\n{}", fenced(&self.deck)),
                    tool_calls: Vec::new(),
                    tool_call_id: None,
                });
            }
        };

        if (measured - self.target).abs() <= self.tolerance_frac * self.target.abs() {
            return Ok(ChatMessage {
                role: Role::Assistant,
                content: format!(
                    "Measured {measured} is within tolerance of {}.\n{}",
                    self.target,
                    fenced(&self.deck)
                ),
                tool_calls: Vec::new(),
                tool_call_id: None,
            });
        }

        // Shrink the bracket around the measured side of the target.
        let too_low = measured < self.target;
        if too_low == self.knob.increasing() {
            self.lo = self.last_knob;
        } else {
            self.hi = self.last_knob;
        }
        let next = (self.lo * self.hi).sqrt();
        match self.apply_knob(next) {
            Some(deck) => {
                self.deck = deck;
                self.last_knob = next;
                let deck_text = serialize_netlist(&self.deck);
                Ok(ChatMessage {
                    role: Role::Assistant,
                    content: format!("Measured {measured}, moving the knob to {next:.3e}."),
                    tool_calls: with_ids(vec![
                        ToolCall {
                            id: String::new(),
                            name: "submit_netlist".to_string(),
                            arguments: json!({ "text": deck_text }),
                        },
                        self.read_call(),
                    ]),
                    tool_call_id: None,
                })
            }
            None => Ok(ChatMessage {
                role: Role::Assistant,
                content: format!("Cannot edit further.\n{}", fenced(&self.deck)),
                tool_calls: Vec::new(),
                tool_call_id: None,
            }),
        }
    }
}
