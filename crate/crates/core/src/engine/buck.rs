//! Built-in reference engine for the canonical ideal buck converter.
//!
//! The engine exists so the full tool loop and benchmark run offline on the
//! easy circuit class; it is not a general circuit simulator. Dynamics are
//! the standard two-state buck equations with an ideal switch and diode:
//! during the on phase the inductor sees `v_in - v_out`, during the off
//! phase `-v_out` while the diode conducts, and the inductor current is
//! clamped at zero when the diode would reverse (discontinuous conduction).
//!
//! Integration is fixed-step trapezoidal with exact stepping to the
//! switching instants. The initial state is placed on the periodic steady
//! state (one affine Newton step on the period map in continuous
//! conduction, the standard duty-ratio relation in discontinuous
//! conduction), so recorded waveforms are free of the multi-millisecond
//! LC start-up ring and measurements read the steady state directly.

use serde::{Deserialize, Serialize};

use super::{Dataset, EngineError, TransientSpec, VarKind, Variable};
use crate::netlist::{Component, ComponentKind, Netlist, PhysicalValue};

/// Parameters of the canonical ideal buck converter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuckParams {
    pub v_in: f64,
    pub inductance: f64,
    pub capacitance: f64,
    pub load: f64,
    pub switching_frequency: f64,
    pub duty: f64,
    pub esr: f64,
}

impl BuckParams {
    pub fn validated(self) -> Result<Self, EngineError> {
        let positive = [
            ("v_in", self.v_in),
            ("inductance", self.inductance),
            ("capacitance", self.capacitance),
            ("load", self.load),
            ("switching_frequency", self.switching_frequency),
        ];
        for (name, value) in positive {
            if value <= 0.0 || !value.is_finite() {
                return Err(EngineError::PatternMismatch(format!(
                    "buck parameter {name} must be positive, got {value}"
                )));
            }
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(EngineError::PatternMismatch(format!(
                "duty must lie in (0,1), got {}",
                self.duty
            )));
        }
        if self.esr < 0.0 {
            return Err(EngineError::PatternMismatch(format!(
                "esr must be non-negative, got {}",
                self.esr
            )));
        }
        Ok(self)
    }

    pub fn period(&self) -> f64 {
        1.0 / self.switching_frequency
    }
}

/// Fields of a PULSE(v1 v2 td tr tf pw per) source spec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub v1: f64,
    pub v2: f64,
    pub delay: f64,
    pub rise: f64,
    pub fall: f64,
    pub width: f64,
    pub period: f64,
}

impl PulseSpec {
    pub fn parse(value_text: &str) -> Option<PulseSpec> {
        let lower = value_text.to_ascii_lowercase();
        let start = lower.find("pulse")?;
        let open = lower[start..].find('(')? + start;
        let close = lower[open..].find(')')? + open;
        let inner = &value_text[open + 1..close];
        let fields: Vec<f64> = inner
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|tok| PhysicalValue::parse(tok).map(|v| v.magnitude))
            .collect::<Option<Vec<f64>>>()?;
        if fields.len() < 7 {
            return None;
        }
        Some(PulseSpec {
            v1: fields[0],
            v2: fields[1],
            delay: fields[2],
            rise: fields[3],
            fall: fields[4],
            width: fields[5],
            period: fields[6],
        })
    }

    /// Rise and fall times are treated as ideal; the duty ratio is the
    /// pulse width over the period.
    pub fn duty(&self) -> f64 {
        self.width / self.period
    }

    pub fn frequency(&self) -> f64 {
        1.0 / self.period
    }

    pub fn render(&self) -> String {
        use crate::netlist::render_magnitude as rm;
        format!(
            "PULSE({} {} {} {} {} {} {})",
            rm(self.v1),
            rm(self.v2),
            rm(self.delay),
            rm(self.rise),
            rm(self.fall),
            rm(self.width),
            rm(self.period)
        )
    }
}

fn eq_node(a: &str, b: &str) -> bool {
    a.eq_ignore_ascii_case(b)
}

fn is_ground(node: &str) -> bool {
    node == "0"
}

fn other_node<'a>(c: &'a Component, node: &str) -> Option<&'a str> {
    if c.nodes.len() != 2 {
        return None;
    }
    if eq_node(&c.nodes[0], node) {
        Some(&c.nodes[1])
    } else if eq_node(&c.nodes[1], node) {
        Some(&c.nodes[0])
    } else {
        None
    }
}

fn bridges(c: &Component, a: &str, b: &str) -> bool {
    other_node(c, a).map(|n| eq_node(n, b)).unwrap_or(false)
}

/// Recognize the canonical ideal-buck pattern and extract its parameters.
///
/// Matching is structural, not name-based: one DC supply, one pulse-driven
/// switch (or a pulse source directly at the switching node), one inductor,
/// one output capacitor (optionally with a series resistance), one load
/// resistor and, in the switch form, a freewheeling diode to ground.
pub fn detect_buck_pattern(netlist: &Netlist) -> Result<BuckParams, EngineError> {
    let mismatch = |msg: &str| EngineError::PatternMismatch(msg.to_string());

    if netlist
        .components()
        .any(|c| c.kind == ComponentKind::Subcircuit)
    {
        return Err(mismatch("subcircuit instances are not an ideal buck"));
    }

    let inductors: Vec<&Component> = netlist
        .components()
        .filter(|c| c.kind == ComponentKind::Inductor)
        .collect();
    let capacitors: Vec<&Component> = netlist
        .components()
        .filter(|c| c.kind == ComponentKind::Capacitor)
        .collect();
    let resistors: Vec<&Component> = netlist
        .components()
        .filter(|c| c.kind == ComponentKind::Resistor)
        .collect();
    let sources: Vec<&Component> = netlist
        .components()
        .filter(|c| c.kind == ComponentKind::VoltageSource)
        .collect();
    let switches: Vec<&Component> = netlist
        .components()
        .filter(|c| c.kind == ComponentKind::Switch)
        .collect();

    let [inductor] = inductors.as_slice() else {
        return Err(mismatch("expected exactly one inductor"));
    };
    let [capacitor] = capacitors.as_slice() else {
        return Err(mismatch("expected exactly one capacitor"));
    };
    let inductance = inductor
        .scalar_value()
        .map(|v| v.magnitude)
        .ok_or_else(|| mismatch("inductor value is not scalar"))?;
    let capacitance = capacitor
        .scalar_value()
        .map(|v| v.magnitude)
        .ok_or_else(|| mismatch("capacitor value is not scalar"))?;

    let pulses: Vec<(&Component, PulseSpec)> = sources
        .iter()
        .filter_map(|c| {
            c.value
                .as_deref()
                .and_then(PulseSpec::parse)
                .map(|p| (*c, p))
        })
        .collect();
    let dc_sources: Vec<(&Component, f64)> = sources
        .iter()
        .filter_map(|c| c.scalar_value().map(|v| (*c, v.magnitude)))
        .collect();
    let [(pulse_comp, pulse)] = pulses.as_slice() else {
        return Err(mismatch("expected exactly one pulse source"));
    };
    if !(pulse.period > 0.0 && pulse.width > 0.0 && pulse.width < pulse.period) {
        return Err(mismatch("pulse width must lie inside the period"));
    }

    let (v_in, switch_node): (f64, String) = if let [switch] = switches.as_slice() {
        // Switch form: DC supply into the switch, pulse drives the control
        // pins, freewheeling diode from ground to the switching node.
        let [(dc_comp, v_in)] = dc_sources.as_slice() else {
            return Err(mismatch("expected exactly one DC supply"));
        };
        if switch.nodes.len() < 4 {
            return Err(mismatch("switch card needs 4 nodes"));
        }
        let supply_node = if is_ground(&dc_comp.nodes[1]) {
            &dc_comp.nodes[0]
        } else if is_ground(&dc_comp.nodes[0]) {
            &dc_comp.nodes[1]
        } else {
            return Err(mismatch("DC supply must reference ground"));
        };
        let (t0, t1) = (&switch.nodes[0], &switch.nodes[1]);
        let switch_node = if eq_node(t0, supply_node) {
            t1.clone()
        } else if eq_node(t1, supply_node) {
            t0.clone()
        } else {
            return Err(mismatch("switch does not connect to the supply node"));
        };
        let diode_ok = netlist
            .components()
            .filter(|c| c.kind == ComponentKind::Diode)
            .any(|d| bridges(d, "0", &switch_node));
        if !diode_ok {
            return Err(mismatch(
                "expected a freewheeling diode between ground and the switching node",
            ));
        }
        let _ = pulse_comp;
        (*v_in, switch_node)
    } else if switches.is_empty() {
        // Pulse-at-switching-node form: the pulse source swings the node
        // between ground and v_in directly.
        if !dc_sources.is_empty() {
            return Err(mismatch("unexpected extra DC source in pulse-driven form"));
        }
        let switch_node = if is_ground(&pulse_comp.nodes[1]) {
            pulse_comp.nodes[0].clone()
        } else if is_ground(&pulse_comp.nodes[0]) {
            pulse_comp.nodes[1].clone()
        } else {
            return Err(mismatch("pulse source must reference ground"));
        };
        if pulse.v2 <= 0.0 {
            return Err(mismatch("pulse amplitude must be positive"));
        }
        (pulse.v2, switch_node)
    } else {
        return Err(mismatch("expected at most one switch"));
    };

    let out_node = other_node(inductor, &switch_node)
        .ok_or_else(|| mismatch("inductor does not connect to the switching node"))?
        .to_string();

    // Capacitor on the output, optionally through a series (ESR) resistor.
    let mut esr = 0.0;
    let mut esr_name: Option<&str> = None;
    if !bridges(capacitor, &out_node, "0") {
        let far = other_node(capacitor, &out_node)
            .or_else(|| other_node(capacitor, "0"))
            .ok_or_else(|| mismatch("capacitor does not connect to the output"))?;
        let anchor = if other_node(capacitor, &out_node).is_some() {
            "0"
        } else {
            out_node.as_str()
        };
        let series = resistors
            .iter()
            .find(|r| bridges(r, far, anchor))
            .ok_or_else(|| mismatch("capacitor is not on the output node"))?;
        esr = series
            .scalar_value()
            .map(|v| v.magnitude)
            .ok_or_else(|| mismatch("series capacitor resistance is not scalar"))?;
        esr_name = Some(series.name.as_str());
    }

    let loads: Vec<&&Component> = resistors
        .iter()
        .filter(|r| Some(r.name.as_str()) != esr_name)
        .filter(|r| bridges(r, &out_node, "0"))
        .collect();
    let [load_comp] = loads.as_slice() else {
        return Err(mismatch("expected exactly one load resistor at the output"));
    };
    let load = load_comp
        .scalar_value()
        .map(|v| v.magnitude)
        .ok_or_else(|| mismatch("load resistor value is not scalar"))?;

    // Any remaining resistor must sit in the gate-drive path, which the
    // ideal model ignores; resistors elsewhere break the pattern.
    for r in &resistors {
        if Some(r.name.as_str()) == esr_name || r.name.eq_ignore_ascii_case(&load_comp.name) {
            continue;
        }
        let touches_power = r
            .nodes
            .iter()
            .any(|n| eq_node(n, &out_node) || eq_node(n, &switch_node));
        if touches_power {
            return Err(mismatch("unexpected resistor in the power path"));
        }
    }

    BuckParams {
        v_in,
        inductance,
        capacitance,
        load,
        switching_frequency: pulse.frequency(),
        duty: pulse.duty(),
        esr,
    }
    .validated()
}

/// Two-state integrator state: inductor current and capacitor voltage.
#[derive(Clone, Copy, Debug)]
struct State {
    i: f64,
    v: f64,
}

struct Model {
    /// Load divider R/(R+esr); output voltage is k*(v_c + esr*i_l).
    k: f64,
    p: BuckParams,
    on: PhaseStep,
    off: PhaseStep,
    h_on: f64,
    h_off: f64,
    n_on: usize,
    n_off: usize,
}

/// Trapezoidal update x' = m*x + v for one affine phase.
#[derive(Clone, Copy)]
struct PhaseStep {
    m: [[f64; 2]; 2],
    v: [f64; 2],
}

impl PhaseStep {
    /// Build from x' = a*x + b with step h: (I - h/2 a) x' = (I + h/2 a) x + h b.
    fn new(a: [[f64; 2]; 2], b: [f64; 2], h: f64) -> PhaseStep {
        let l = [
            [1.0 - 0.5 * h * a[0][0], -0.5 * h * a[0][1]],
            [-0.5 * h * a[1][0], 1.0 - 0.5 * h * a[1][1]],
        ];
        let det = l[0][0] * l[1][1] - l[0][1] * l[1][0];
        let inv = [
            [l[1][1] / det, -l[0][1] / det],
            [-l[1][0] / det, l[0][0] / det],
        ];
        let r = [
            [1.0 + 0.5 * h * a[0][0], 0.5 * h * a[0][1]],
            [0.5 * h * a[1][0], 1.0 + 0.5 * h * a[1][1]],
        ];
        let m = mat_mul(inv, r);
        let hb = [h * b[0], h * b[1]];
        let v = [
            inv[0][0] * hb[0] + inv[0][1] * hb[1],
            inv[1][0] * hb[0] + inv[1][1] * hb[1],
        ];
        PhaseStep { m, v }
    }

    fn apply(&self, x: State) -> State {
        State {
            i: self.m[0][0] * x.i + self.m[0][1] * x.v + self.v[0],
            v: self.m[1][0] * x.i + self.m[1][1] * x.v + self.v[1],
        }
    }
}

fn mat_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

impl Model {
    fn new(p: &BuckParams, steps_per_period: usize) -> Model {
        let k = p.load / (p.load + p.esr);
        let a = [
            [-k * p.esr / p.inductance, -k / p.inductance],
            [k / p.capacitance, -k / (p.load * p.capacitance)],
        ];
        let t = p.period();
        let n_on =
            ((p.duty * steps_per_period as f64).round() as usize).clamp(1, steps_per_period - 1);
        let n_off = steps_per_period - n_on;
        let h_on = p.duty * t / n_on as f64;
        let h_off = (1.0 - p.duty) * t / n_off as f64;
        let on = PhaseStep::new(a, [p.v_in / p.inductance, 0.0], h_on);
        let off = PhaseStep::new(a, [0.0, 0.0], h_off);
        Model {
            k,
            p: *p,
            on,
            off,
            h_on,
            h_off,
            n_on,
            n_off,
        }
    }

    fn v_out(&self, x: State) -> f64 {
        self.k * (x.v + self.p.esr * x.i)
    }

    /// Scalar trapezoidal RC decay for the idle (diode blocking) phase.
    fn idle_decay(&self, v: f64, h: f64) -> f64 {
        let q = 0.5 * h * self.k / (self.p.load * self.p.capacitance);
        v * (1.0 - q) / (1.0 + q)
    }

    /// Integrate one full period. `record` receives (t, state, v_sw, i_in)
    /// after every accepted step. Returns the end state and whether the
    /// diode clamp engaged.
    fn run_period<F: FnMut(f64, State, f64, f64)>(
        &self,
        t0: f64,
        mut x: State,
        record: &mut F,
    ) -> (State, bool) {
        let mut clamped = false;
        let mut t = t0;
        for _ in 0..self.n_on {
            x = self.on.apply(x);
            t += self.h_on;
            record(t, x, self.p.v_in, x.i);
        }
        let mut idle = false;
        for _ in 0..self.n_off {
            if idle {
                x = State {
                    i: 0.0,
                    v: self.idle_decay(x.v, self.h_off),
                };
                t += self.h_off;
                record(t, x, self.v_out(x), 0.0);
                continue;
            }
            let next = self.off.apply(x);
            if next.i < 0.0 {
                clamped = true;
                idle = true;
                // Split the step at the zero crossing of the inductor
                // current, then let the capacitor discharge alone.
                let theta = (x.i / (x.i - next.i)).clamp(0.0, 1.0);
                let v_cross = x.v + theta * (next.v - x.v);
                let t_cross = t + theta * self.h_off;
                if theta > 0.0 && theta < 1.0 {
                    record(
                        t_cross,
                        State { i: 0.0, v: v_cross },
                        self.v_out(State { i: 0.0, v: v_cross }),
                        0.0,
                    );
                }
                let remaining = (1.0 - theta) * self.h_off;
                let v_end = self.idle_decay(v_cross, remaining);
                x = State { i: 0.0, v: v_end };
                t += self.h_off;
                record(t, x, self.v_out(x), 0.0);
            } else {
                x = next;
                t += self.h_off;
                record(t, x, 0.0, 0.0);
            }
        }
        (x, clamped)
    }
}

/// Analytic steady-state seed, refined to the exact discrete periodic orbit
/// in continuous conduction via one Newton step on the (affine) period map.
fn steady_state_init(model: &Model) -> State {
    let p = &model.p;
    let v_out = p.duty * p.v_in;
    let i_out = v_out / p.load;
    let delta_i = v_out * (1.0 - p.duty) / (p.inductance * p.switching_frequency);

    if 0.5 * delta_i >= i_out {
        // Discontinuous conduction: standard conversion ratio.
        let k = 2.0 * p.inductance * p.switching_frequency / p.load;
        let m = 2.0 / (1.0 + (1.0 + 4.0 * k / (p.duty * p.duty)).sqrt());
        return State {
            i: 0.0,
            v: m * p.v_in,
        };
    }

    let x0 = State {
        i: i_out - 0.5 * delta_i,
        v: v_out,
    };
    let probe = |x: State| -> (State, bool) {
        let mut sink = |_t: f64, _x: State, _sw: f64, _ii: f64| {};
        model.run_period(0.0, x, &mut sink)
    };
    let (fx, clamped) = probe(x0);
    if clamped {
        return x0;
    }
    let d = 1e-3 * (x0.i.abs() + x0.v.abs()).max(1.0);
    let (fi, ci) = probe(State {
        i: x0.i + d,
        v: x0.v,
    });
    let (fv, cv) = probe(State {
        i: x0.i,
        v: x0.v + d,
    });
    if ci || cv {
        return x0;
    }
    // Period map is affine here: P(x) = M x + c. Solve (I - M)(x* - x0) = fx - x0.
    let m = [
        [(fi.i - fx.i) / d, (fv.i - fx.i) / d],
        [(fi.v - fx.v) / d, (fv.v - fx.v) / d],
    ];
    let a = [[1.0 - m[0][0], -m[0][1]], [-m[1][0], 1.0 - m[1][1]]];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() < 1e-30 {
        return x0;
    }
    let rhs = [fx.i - x0.i, fx.v - x0.v];
    let dx = [
        (a[1][1] * rhs[0] - a[0][1] * rhs[1]) / det,
        (a[0][0] * rhs[1] - a[1][0] * rhs[0]) / det,
    ];
    let refined = State {
        i: x0.i + dx[0],
        v: x0.v + dx[1],
    };
    if refined.i.is_finite() && refined.v.is_finite() && refined.i >= 0.0 {
        refined
    } else {
        x0
    }
}

/// Steps per period derived from the hint; the default is T/400.
fn steps_per_period(p: &BuckParams, spec: &TransientSpec) -> Result<usize, EngineError> {
    let t = p.period();
    let n = if spec.t_step_hint > 0.0 {
        (t / spec.t_step_hint).round() as i64
    } else {
        400
    };
    if n < 50 {
        return Err(EngineError::StepTooCoarse {
            steps_per_period: n.max(0) as usize,
        });
    }
    Ok((n as usize).min(1_000_000))
}

/// Run the reference buck engine. The emitted dataset carries time, V(out),
/// I(L), V(sw), V(in) and I(Vin) columns, with samples restricted to
/// `t >= t_start_record`.
pub fn run_reference_buck(
    params: &BuckParams,
    spec: &TransientSpec,
) -> Result<Dataset, EngineError> {
    let p = params.validated()?;
    spec.validated()?;
    let n = steps_per_period(&p, spec)?;
    let model = Model::new(&p, n);
    let periods = (spec.t_stop * p.switching_frequency).ceil() as usize;
    if periods == 0 {
        return Err(EngineError::PatternMismatch(
            "t_stop shorter than one switching period".to_string(),
        ));
    }

    let mut x = steady_state_init(&model);
    let mut time = Vec::new();
    let mut v_out = Vec::new();
    let mut i_l = Vec::new();
    let mut v_sw = Vec::new();
    let mut v_in_col = Vec::new();
    let mut i_in = Vec::new();

    let record_from = spec.t_start_record;
    let t_stop = spec.t_stop;
    {
        let mut record = |t: f64, x: State, sw: f64, ii: f64| {
            if t >= record_from && t <= t_stop {
                time.push(t);
                v_out.push(model.v_out(x));
                i_l.push(x.i);
                v_sw.push(sw);
                v_in_col.push(p.v_in);
                i_in.push(ii);
            }
        };
        // Initial sample at t = 0 (or at the recording start boundary).
        if record_from <= 0.0 {
            record(0.0, x, p.v_in, x.i);
        }
        let period = p.period();
        for k in 0..periods {
            let t0 = k as f64 * period;
            if t0 > t_stop {
                break;
            }
            let (next, _) = model.run_period(t0, x, &mut record);
            x = next;
        }
    }

    if time.len() < 2 {
        return Err(EngineError::PatternMismatch(
            "recording window contains fewer than two samples".to_string(),
        ));
    }
    Dataset::new(
        vec![
            Variable {
                name: "time".into(),
                kind: VarKind::Time,
            },
            Variable {
                name: "V(out)".into(),
                kind: VarKind::Voltage,
            },
            Variable {
                name: "I(L)".into(),
                kind: VarKind::Current,
            },
            Variable {
                name: "V(sw)".into(),
                kind: VarKind::Voltage,
            },
            Variable {
                name: "V(in)".into(),
                kind: VarKind::Voltage,
            },
            Variable {
                name: "I(Vin)".into(),
                kind: VarKind::Current,
            },
        ],
        vec![time, v_out, i_l, v_sw, v_in_col, i_in],
    )
}
