//! SPICE netlist parsing, editing, and serialization.
//!
//! The deck model is deliberately shallow: cards keep their tokens close to
//! the source text so that controller-specific cards the tool layer cannot
//! interpret pass through edits untouched. Name and node comparisons are
//! case-insensitive per SPICE convention; node "0" is ground by definition
//! and "GND" is not aliased to it.

mod value;

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use value::{render_magnitude, PhysicalValue};

#[derive(Debug, Error)]
pub enum NetlistError {
    #[error("netlist contains no cards")]
    EmptyDeck,
    #[error("duplicate component name `{0}`")]
    DuplicateName(String),
    #[error("line {line}: malformed card: {reason}")]
    MalformedCard { line: usize, reason: String },
    #[error("no component named `{0}`")]
    UnknownComponent(String),
    #[error("component `{0}` does not carry a scalar value")]
    NonScalarComponent(String),
    #[error("pin index {index} out of range for `{name}` ({count} pins)")]
    PinIndexOutOfRange {
        name: String,
        index: usize,
        count: usize,
    },
    #[error("node `{0}` does not appear in the netlist")]
    UnknownNode(String),
}

/// Component kind, derived from the first letter of the component name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComponentKind {
    Resistor,
    Inductor,
    Capacitor,
    VoltageSource,
    CurrentSource,
    Diode,
    Switch,
    Subcircuit,
    Mosfet,
    Bjt,
    /// First letter outside the supported set; preserved verbatim.
    Other(char),
}

impl ComponentKind {
    pub fn from_name(name: &str) -> Option<ComponentKind> {
        let first = name.chars().next()?;
        if !first.is_ascii_alphabetic() {
            return None;
        }
        Some(match first.to_ascii_uppercase() {
            'R' => ComponentKind::Resistor,
            'L' => ComponentKind::Inductor,
            'C' => ComponentKind::Capacitor,
            'V' => ComponentKind::VoltageSource,
            'I' => ComponentKind::CurrentSource,
            'D' => ComponentKind::Diode,
            'S' => ComponentKind::Switch,
            'X' => ComponentKind::Subcircuit,
            'M' => ComponentKind::Mosfet,
            'Q' => ComponentKind::Bjt,
            other => ComponentKind::Other(other),
        })
    }

    pub fn letter(&self) -> char {
        match self {
            ComponentKind::Resistor => 'R',
            ComponentKind::Inductor => 'L',
            ComponentKind::Capacitor => 'C',
            ComponentKind::VoltageSource => 'V',
            ComponentKind::CurrentSource => 'I',
            ComponentKind::Diode => 'D',
            ComponentKind::Switch => 'S',
            ComponentKind::Subcircuit => 'X',
            ComponentKind::Mosfet => 'M',
            ComponentKind::Bjt => 'Q',
            ComponentKind::Other(c) => *c,
        }
    }

    /// How many leading tokens after the name are node names. `None` means
    /// all tokens are nodes except the trailing subcircuit name (X cards),
    /// or every token for unknown kinds.
    fn node_budget(&self) -> Option<usize> {
        match self {
            ComponentKind::Resistor
            | ComponentKind::Inductor
            | ComponentKind::Capacitor
            | ComponentKind::VoltageSource
            | ComponentKind::CurrentSource
            | ComponentKind::Diode => Some(2),
            ComponentKind::Switch => Some(4),
            ComponentKind::Mosfet => Some(4),
            ComponentKind::Bjt => Some(3),
            ComponentKind::Subcircuit | ComponentKind::Other(_) => None,
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// One component card. For subcircuit instances (kind X) `nodes` is the
/// ordered pin list and `value` holds the subcircuit name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub kind: ComponentKind,
    pub nodes: Vec<String>,
    /// Text after the node tokens, whitespace-normalized. Stored verbatim so
    /// parameter expressions and model references survive round-trips.
    pub value: Option<String>,
}

impl Component {
    pub fn new(name: &str, nodes: &[&str], value: Option<&str>) -> Result<Component, NetlistError> {
        let kind = ComponentKind::from_name(name).ok_or_else(|| NetlistError::MalformedCard {
            line: 0,
            reason: format!("component name `{name}` does not start with a letter"),
        })?;
        Ok(Component {
            name: name.to_string(),
            kind,
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            value: value.map(|s| s.to_string()),
        })
    }

    fn from_tokens(tokens: &[&str], line: usize) -> Result<Component, NetlistError> {
        let name = tokens[0];
        let kind = ComponentKind::from_name(name).ok_or_else(|| NetlistError::MalformedCard {
            line,
            reason: format!("component name `{name}` does not start with a letter"),
        })?;
        let rest = &tokens[1..];
        if rest.len() < 2 {
            return Err(NetlistError::MalformedCard {
                line,
                reason: format!("component `{name}` has fewer than 2 nodes"),
            });
        }
        let (nodes, value): (Vec<String>, Option<String>) = match kind.node_budget() {
            Some(budget) => {
                let n = budget.min(rest.len());
                let nodes = rest[..n].iter().map(|s| s.to_string()).collect();
                let tail = rest[n..].join(" ");
                (nodes, if tail.is_empty() { None } else { Some(tail) })
            }
            None => match kind {
                ComponentKind::Subcircuit => {
                    let pins = rest[..rest.len() - 1]
                        .iter()
                        .map(|s| s.to_string())
                        .collect();
                    (pins, Some(rest[rest.len() - 1].to_string()))
                }
                // Unknown kinds: every token is kept as an opaque node token.
                _ => (rest.iter().map(|s| s.to_string()).collect(), None),
            },
        };
        Ok(Component {
            name: name.to_string(),
            kind,
            nodes,
            value,
        })
    }

    /// The subcircuit name of an X card.
    pub fn subcircuit(&self) -> Option<&str> {
        match self.kind {
            ComponentKind::Subcircuit => self.value.as_deref(),
            _ => None,
        }
    }

    /// Numeric interpretation of the value text, when it is a plain scalar.
    /// Sources accept an optional leading "DC" keyword ("DC 12" or "12");
    /// anything else (PULSE, AC specs, model names) is not a scalar.
    pub fn scalar_value(&self) -> Option<PhysicalValue> {
        let text = self.value.as_deref()?;
        let tokens: Vec<&str> = text.split_whitespace().collect();
        match self.kind {
            ComponentKind::Resistor | ComponentKind::Inductor | ComponentKind::Capacitor => {
                if tokens.len() == 1 {
                    PhysicalValue::parse(tokens[0])
                } else {
                    None
                }
            }
            ComponentKind::VoltageSource | ComponentKind::CurrentSource => {
                match tokens.as_slice() {
                    [v] => PhysicalValue::parse(v),
                    [dc, v] if dc.eq_ignore_ascii_case("dc") => PhysicalValue::parse(v),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    /// True for kinds whose two nodes form a single branch.
    pub fn is_two_terminal(&self) -> bool {
        matches!(
            self.kind,
            ComponentKind::Resistor
                | ComponentKind::Inductor
                | ComponentKind::Capacitor
                | ComponentKind::VoltageSource
                | ComponentKind::CurrentSource
                | ComponentKind::Diode
        ) && self.nodes.len() == 2
    }

    fn to_line(&self) -> String {
        let mut parts = vec![self.name.clone()];
        parts.extend(self.nodes.iter().cloned());
        if let Some(v) = &self.value {
            parts.push(v.clone());
        }
        parts.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Card {
    Component(Component),
    Directive { keyword: String, args: String },
    Comment(String),
}

impl Card {
    pub fn component(&self) -> Option<&Component> {
        match self {
            Card::Component(c) => Some(c),
            _ => None,
        }
    }

    fn to_line(&self) -> String {
        match self {
            Card::Component(c) => c.to_line(),
            Card::Directive { keyword, args } => {
                if args.is_empty() {
                    format!(".{keyword}")
                } else {
                    format!(".{keyword} {args}")
                }
            }
            Card::Comment(text) => format!("*{text}"),
        }
    }
}

/// An ordered, editable SPICE deck. Values are immutable after construction;
/// edits return new decks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Netlist {
    pub title: String,
    cards: Vec<Card>,
    pub end_present: bool,
}

impl Netlist {
    pub fn from_cards(
        title: &str,
        cards: Vec<Card>,
        end_present: bool,
    ) -> Result<Netlist, NetlistError> {
        if cards.is_empty() {
            return Err(NetlistError::EmptyDeck);
        }
        check_unique_names(&cards)?;
        Ok(Netlist {
            title: title.to_string(),
            cards,
            end_present,
        })
    }

    pub fn cards(&self) -> &[Card] {
        &self.cards
    }

    pub fn components(&self) -> impl Iterator<Item = &Component> {
        self.cards.iter().filter_map(Card::component)
    }

    /// Case-insensitive component lookup.
    pub fn component(&self, name: &str) -> Option<&Component> {
        self.components()
            .find(|c| c.name.eq_ignore_ascii_case(name))
    }

    /// Directives with the given keyword (compared case-insensitively).
    pub fn directives<'a>(&'a self, keyword: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.cards.iter().filter_map(move |c| match c {
            Card::Directive { keyword: k, args } if k.eq_ignore_ascii_case(keyword) => {
                Some(args.as_str())
            }
            _ => None,
        })
    }

    /// Replace the scalar value of a component. Only R, L, C and DC V/I
    /// carry scalar values; sources keep their "DC" prefix if present.
    pub fn set_component_value(
        &self,
        name: &str,
        value: &PhysicalValue,
    ) -> Result<Netlist, NetlistError> {
        let mut out = self.clone();
        let comp = out
            .cards
            .iter_mut()
            .filter_map(|c| match c {
                Card::Component(c) if c.name.eq_ignore_ascii_case(name) => Some(c),
                _ => None,
            })
            .next()
            .ok_or_else(|| NetlistError::UnknownComponent(name.to_string()))?;
        if comp.scalar_value().is_none() {
            return Err(NetlistError::NonScalarComponent(comp.name.clone()));
        }
        let rendered = value.render();
        let keeps_dc_prefix = comp
            .value
            .as_deref()
            .map(|v| v.split_whitespace().count() == 2)
            .unwrap_or(false);
        comp.value = Some(if keeps_dc_prefix {
            format!("DC {rendered}")
        } else {
            rendered
        });
        Ok(out)
    }

    /// Replace a component's raw value text (model references, PULSE specs
    /// and the like). The scalar-value sibling is `set_component_value`.
    pub fn set_component_spec(&self, name: &str, text: &str) -> Result<Netlist, NetlistError> {
        let mut out = self.clone();
        let comp = out
            .cards
            .iter_mut()
            .filter_map(|c| match c {
                Card::Component(c) if c.name.eq_ignore_ascii_case(name) => Some(c),
                _ => None,
            })
            .next()
            .ok_or_else(|| NetlistError::UnknownComponent(name.to_string()))?;
        comp.value = Some(text.split_whitespace().collect::<Vec<_>>().join(" "));
        Ok(out)
    }

    /// Reconnect one pin of a component to a different node.
    pub fn rewire_pin(
        &self,
        name: &str,
        pin_index: usize,
        node: &str,
    ) -> Result<Netlist, NetlistError> {
        let mut out = self.clone();
        let comp = out
            .cards
            .iter_mut()
            .filter_map(|c| match c {
                Card::Component(c) if c.name.eq_ignore_ascii_case(name) => Some(c),
                _ => None,
            })
            .next()
            .ok_or_else(|| NetlistError::UnknownComponent(name.to_string()))?;
        if pin_index >= comp.nodes.len() {
            return Err(NetlistError::PinIndexOutOfRange {
                name: comp.name.clone(),
                index: pin_index,
                count: comp.nodes.len(),
            });
        }
        comp.nodes[pin_index] = node.to_string();
        Ok(out)
    }

    /// Append a component card (kept ahead of the final `.end`).
    pub fn add_component(&self, component: Component) -> Result<Netlist, NetlistError> {
        if self.component(&component.name).is_some() {
            return Err(NetlistError::DuplicateName(component.name));
        }
        let mut out = self.clone();
        out.cards.push(Card::Component(component));
        Ok(out)
    }

    fn node_known(&self, node: &str) -> bool {
        self.components()
            .flat_map(|c| c.nodes.iter())
            .any(|n| n.eq_ignore_ascii_case(node))
    }

    /// Connectivity between two nodes: direct two-terminal links plus
    /// whether any component path exists (components act as hyperedges
    /// joining all their nodes).
    pub fn connectivity_query(
        &self,
        node_a: &str,
        node_b: &str,
    ) -> Result<Connectivity, NetlistError> {
        for node in [node_a, node_b] {
            if !self.node_known(node) {
                return Err(NetlistError::UnknownNode(node.to_string()));
            }
        }
        let a = node_a.to_ascii_lowercase();
        let b = node_b.to_ascii_lowercase();
        if a == b {
            return Ok(Connectivity {
                same_node: true,
                direct_links: Vec::new(),
                path: Some(Vec::new()),
            });
        }

        let direct_links: Vec<DirectLink> = self
            .components()
            .filter(|c| c.is_two_terminal())
            .filter(|c| {
                let n0 = c.nodes[0].to_ascii_lowercase();
                let n1 = c.nodes[1].to_ascii_lowercase();
                (n0 == a && n1 == b) || (n0 == b && n1 == a)
            })
            .map(|c| DirectLink {
                component: c.name.clone(),
                kind: c.kind,
                value: c.scalar_value().map(|v| v.magnitude),
            })
            .collect();

        // BFS over nodes; every component joins all of its nodes.
        let mut adjacency: HashMap<String, Vec<(String, String)>> = HashMap::new();
        for c in self.components() {
            for (i, ni) in c.nodes.iter().enumerate() {
                for nj in c.nodes.iter().skip(i + 1) {
                    let ki = ni.to_ascii_lowercase();
                    let kj = nj.to_ascii_lowercase();
                    if ki == kj {
                        continue;
                    }
                    adjacency
                        .entry(ki.clone())
                        .or_default()
                        .push((kj.clone(), c.name.clone()));
                    adjacency.entry(kj).or_default().push((ki, c.name.clone()));
                }
            }
        }
        let mut visited: HashSet<String> = HashSet::new();
        let mut queue: VecDeque<(String, Vec<String>)> = VecDeque::new();
        visited.insert(a.clone());
        queue.push_back((a, Vec::new()));
        let mut path = None;
        while let Some((node, via)) = queue.pop_front() {
            if node == b {
                path = Some(via);
                break;
            }
            if let Some(neighbors) = adjacency.get(&node) {
                for (next, through) in neighbors {
                    if visited.insert(next.clone()) {
                        let mut via = via.clone();
                        via.push(through.clone());
                        queue.push_back((next.clone(), via));
                    }
                }
            }
        }

        Ok(Connectivity {
            same_node: false,
            direct_links,
            path,
        })
    }

    /// True when a single two-terminal component of the given kind, with a
    /// scalar value within `value_tol` (fractional), bridges the two nodes.
    pub fn direct_link(
        &self,
        node_a: &str,
        node_b: &str,
        kind: ComponentKind,
        value: f64,
        value_tol: f64,
    ) -> Result<bool, NetlistError> {
        let conn = self.connectivity_query(node_a, node_b)?;
        Ok(conn.direct_links.iter().any(|link| {
            link.kind == kind
                && link
                    .value
                    .map(|v| (v - value).abs() <= value_tol * value.abs())
                    .unwrap_or(false)
        }))
    }
}

/// A direct two-terminal bridge between two queried nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectLink {
    pub component: String,
    pub kind: ComponentKind,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connectivity {
    pub same_node: bool,
    pub direct_links: Vec<DirectLink>,
    /// Component names along a shortest path, `None` when unreachable.
    /// Empty for same-node queries.
    pub path: Option<Vec<String>>,
}

impl Connectivity {
    pub fn connected(&self) -> bool {
        self.same_node || self.path.is_some()
    }
}

fn check_unique_names(cards: &[Card]) -> Result<(), NetlistError> {
    let mut seen: HashSet<String> = HashSet::new();
    for card in cards {
        if let Card::Component(c) = card {
            if !seen.insert(c.name.to_ascii_lowercase()) {
                return Err(NetlistError::DuplicateName(c.name.clone()));
            }
        }
    }
    Ok(())
}

/// Parse SPICE deck text. Continuation lines (leading '+') are merged into
/// the preceding card before classification; parsing stops at `.end`.
///
/// A classic bare title line is accepted only in first position and only
/// when the line cannot be read as a card; a one-line deck like
/// "R1 SW N01 10k" therefore parses as a component, not a title.
pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistError> {
    let mut logical: Vec<(usize, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if let Some(rest) = line.trim_start().strip_prefix('+') {
            match logical.last_mut() {
                Some((_, prev)) => {
                    prev.push(' ');
                    prev.push_str(rest.trim());
                    continue;
                }
                None => {
                    return Err(NetlistError::MalformedCard {
                        line: idx + 1,
                        reason: "continuation line with no preceding card".to_string(),
                    })
                }
            }
        }
        logical.push((idx + 1, line.to_string()));
    }

    let mut title = String::new();
    let mut cards: Vec<Card> = Vec::new();
    let mut end_present = false;
    let mut first_content = true;

    for (line_no, line) in logical {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if end_present {
            break;
        }
        if let Some(comment) = trimmed.strip_prefix('*') {
            cards.push(Card::Comment(comment.to_string()));
            first_content = false;
            continue;
        }
        if let Some(directive) = trimmed.strip_prefix('.') {
            let mut parts = directive.splitn(2, char::is_whitespace);
            let keyword = parts.next().unwrap_or("").to_string();
            let args = parts
                .next()
                .map(|a| a.split_whitespace().collect::<Vec<_>>().join(" "))
                .unwrap_or_default();
            if keyword.eq_ignore_ascii_case("end") {
                end_present = true;
            } else if keyword.eq_ignore_ascii_case("title") {
                title = args;
            } else {
                cards.push(Card::Directive { keyword, args });
            }
            first_content = false;
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        match Component::from_tokens(&tokens, line_no) {
            Ok(component) => cards.push(Card::Component(component)),
            Err(err) => {
                if first_content {
                    // Classic SPICE title line.
                    title = trimmed.to_string();
                } else {
                    return Err(err);
                }
            }
        }
        first_content = false;
    }

    if cards.is_empty() {
        return Err(NetlistError::EmptyDeck);
    }
    check_unique_names(&cards)?;
    Ok(Netlist {
        title,
        cards,
        end_present,
    })
}

/// Render a deck back to text, one card per line, whitespace-normalized.
pub fn serialize_netlist(netlist: &Netlist) -> String {
    let mut lines: Vec<String> = Vec::new();
    if !netlist.title.is_empty() {
        lines.push(format!(".title {}", netlist.title));
    }
    for card in &netlist.cards {
        lines.push(card.to_line());
    }
    if netlist.end_present {
        lines.push(".end".to_string());
    }
    lines.join("\n") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUCK: &str = "\
* reference buck converter
V1 IN 0 12
S1 IN SW GATE 0 SWIDEAL
VG GATE 0 PULSE(0 1 0 1n 1n 1u 2u)
D1 0 SW DIDEAL
L1 SW OUT 10u
C1 OUT 0 100u
R1 OUT 0 6
.model SWIDEAL SW(Ron=1m Roff=1meg Vt=0.5)
.model DIDEAL D(Ron=1m Roff=1meg Vfwd=0)
.tran 10n 2m
.end
";

    #[test]
    fn parses_resistor_card() {
        let n = parse_netlist("R1 SW N01 10k").unwrap();
        let c = n.component("R1").unwrap();
        assert_eq!(c.kind, ComponentKind::Resistor);
        assert_eq!(c.nodes, vec!["SW", "N01"]);
        assert_eq!(c.scalar_value().unwrap().magnitude, 1e4);
    }

    #[test]
    fn parses_subcircuit_instance() {
        let n = parse_netlist("XU1 FB1 IN 0 SW1 IN SW2 IN FB2 0 LTC3419").unwrap();
        let c = n.component("XU1").unwrap();
        assert_eq!(c.kind, ComponentKind::Subcircuit);
        assert_eq!(
            c.nodes,
            vec!["FB1", "IN", "0", "SW1", "IN", "SW2", "IN", "FB2", "0"]
        );
        assert_eq!(c.subcircuit(), Some("LTC3419"));
    }

    #[test]
    fn empty_text_is_empty_deck() {
        assert!(matches!(parse_netlist(""), Err(NetlistError::EmptyDeck)));
        assert!(matches!(
            parse_netlist("\n  \n"),
            Err(NetlistError::EmptyDeck)
        ));
    }

    #[test]
    fn duplicate_names_rejected_case_insensitively() {
        let err = parse_netlist("R1 a b 1k\nr1 c d 2k").unwrap_err();
        assert!(matches!(err, NetlistError::DuplicateName(_)));
    }

    #[test]
    fn component_with_one_node_is_malformed() {
        let err = parse_netlist("R1 a 1k\nR2 x").unwrap_err();
        assert!(matches!(err, NetlistError::MalformedCard { line: 2, .. }));
    }

    #[test]
    fn continuations_merge_into_previous_card() {
        let n = parse_netlist("XU1 FB1 IN 0\n+ SW1 IN SW2\n+ IN FB2 0 LTC3419").unwrap();
        let c = n.component("XU1").unwrap();
        assert_eq!(c.nodes.len(), 9);
        assert_eq!(c.subcircuit(), Some("LTC3419"));
    }

    #[test]
    fn bare_first_line_becomes_title_when_unreadable_as_card() {
        let n = parse_netlist("voltage divider\nV1 1 0 10\nR1 1 2 1k\nR2 2 0 1k\n.end").unwrap();
        assert_eq!(n.title, "voltage divider");
        assert_eq!(n.components().count(), 3);
        // First lines that do read as cards stay cards; a multi-word title
        // starting with a kind letter is taken at face value.
        let n2 = parse_netlist("my divider title\nR1 1 2 1k").unwrap();
        assert_eq!(n2.title, "");
        assert_eq!(n2.components().count(), 2);
    }

    #[test]
    fn round_trip_is_structural_identity() {
        let n = parse_netlist(BUCK).unwrap();
        let text = serialize_netlist(&n);
        let again = parse_netlist(&text).unwrap();
        assert_eq!(n, again);
    }

    #[test]
    fn serialize_is_stable_after_normalization() {
        let messy = "R1   SW\tN01   10k\n.end";
        let once = serialize_netlist(&parse_netlist(messy).unwrap());
        let twice = serialize_netlist(&parse_netlist(&once).unwrap());
        assert_eq!(once, twice);
        assert_eq!(once, "R1 SW N01 10k\n.end\n");
    }

    #[test]
    fn cards_after_end_are_ignored() {
        let n = parse_netlist("R1 a b 1k\n.end\nR2 c d 2k").unwrap();
        assert!(n.component("R2").is_none());
        assert!(n.end_present);
    }

    #[test]
    fn unknown_kinds_pass_through_verbatim() {
        let n = parse_netlist("B1 out 0 V=V(a)*2\nR1 out 0 1k").unwrap();
        let c = n.component("B1").unwrap();
        assert_eq!(c.kind, ComponentKind::Other('B'));
        assert_eq!(c.nodes, vec!["out", "0", "V=V(a)*2"]);
        let text = serialize_netlist(&n);
        assert!(text.contains("B1 out 0 V=V(a)*2"));
    }

    #[test]
    fn set_value_rewrites_only_that_card() {
        let n = parse_netlist(BUCK).unwrap();
        let edited = n
            .set_component_value("R1", &PhysicalValue::new(2e4))
            .unwrap();
        let before = serialize_netlist(&n);
        let after = serialize_netlist(&edited);
        let diff: Vec<(&str, &str)> = before
            .lines()
            .zip(after.lines())
            .filter(|(a, b)| a != b)
            .collect();
        assert_eq!(diff, vec![("R1 OUT 0 6", "R1 OUT 0 20k")]);
    }

    #[test]
    fn set_value_keeps_dc_prefix() {
        let n = parse_netlist("V1 in 0 DC 12\nR1 in 0 1k").unwrap();
        let edited = n
            .set_component_value("V1", &PhysicalValue::new(38.0))
            .unwrap();
        assert_eq!(
            edited.component("V1").unwrap().value.as_deref(),
            Some("DC 38")
        );
    }

    #[test]
    fn set_value_errors() {
        let n = parse_netlist(BUCK).unwrap();
        assert!(matches!(
            n.set_component_value("R99", &PhysicalValue::new(1.0)),
            Err(NetlistError::UnknownComponent(_))
        ));
        assert!(matches!(
            n.set_component_value("S1", &PhysicalValue::new(1.0)),
            Err(NetlistError::NonScalarComponent(_))
        ));
        // A pulse source is not scalar either.
        assert!(matches!(
            n.set_component_value("VG", &PhysicalValue::new(1.0)),
            Err(NetlistError::NonScalarComponent(_))
        ));
    }

    #[test]
    fn rewire_pin_updates_in_place() {
        let n = parse_netlist("XU1 FB1 IN 0 SW1 LTC\nR1 a b 1k").unwrap();
        let edited = n.rewire_pin("XU1", 2, "IN").unwrap();
        assert_eq!(edited.component("XU1").unwrap().nodes[2], "IN");
        // No-op rewire leaves the deck equal.
        let same = n.rewire_pin("XU1", 0, "FB1").unwrap();
        assert_eq!(same, n);
        assert!(matches!(
            n.rewire_pin("XU1", 99, "IN"),
            Err(NetlistError::PinIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn add_component_appends_and_round_trips() {
        let n = parse_netlist(BUCK).unwrap();
        let r = Component::new("Rmode", &["MODE", "INTVCC"], Some("100k")).unwrap();
        let edited = n.add_component(r).unwrap();
        assert_eq!(edited.components().count(), n.components().count() + 1);
        let again = parse_netlist(&serialize_netlist(&edited)).unwrap();
        assert!(again.component("Rmode").is_some());

        let dup = Component::new("r1", &["a", "b"], Some("1k")).unwrap();
        assert!(matches!(
            n.add_component(dup),
            Err(NetlistError::DuplicateName(_))
        ));
    }

    #[test]
    fn connectivity_direct_link_and_path() {
        let n = parse_netlist(
            "XU1 FB IN MODE SW INTVCC 0 CTRL\nRmode MODE INTVCC 100k\nL1 SW OUT 10u\nR1 OUT 0 6",
        )
        .unwrap();
        assert!(n
            .direct_link("MODE", "INTVCC", ComponentKind::Resistor, 1e5, 0.01)
            .unwrap());
        assert!(n
            .direct_link("mode", "intvcc", ComponentKind::Resistor, 1e5, 0.01)
            .unwrap());
        // Wrong value misses.
        assert!(!n
            .direct_link("MODE", "INTVCC", ComponentKind::Resistor, 1e4, 0.01)
            .unwrap());
        // Path exists across the controller hyperedge.
        let conn = n.connectivity_query("OUT", "FB").unwrap();
        assert!(conn.connected());
        // Same node is trivially connected.
        assert!(n.connectivity_query("SW", "sw").unwrap().connected());
        assert!(matches!(
            n.connectivity_query("SW", "nope"),
            Err(NetlistError::UnknownNode(_))
        ));
    }

    #[test]
    fn untouched_mode_pin_has_no_direct_link() {
        let n =
            parse_netlist("XU1 FB IN MODE SW INTVCC 0 CTRL\nL1 SW OUT 10u\nR1 OUT 0 6").unwrap();
        assert!(!n
            .direct_link("MODE", "INTVCC", ComponentKind::Resistor, 1e5, 0.01)
            .unwrap());
        // But a component path still exists through the controller pins.
        assert!(n.connectivity_query("MODE", "INTVCC").unwrap().connected());
    }

    #[test]
    fn title_directive_round_trips() {
        let n = parse_netlist(".title step-down stage\nR1 a b 1k\n.end").unwrap();
        assert_eq!(n.title, "step-down stage");
        let again = parse_netlist(&serialize_netlist(&n)).unwrap();
        assert_eq!(again.title, "step-down stage");
        assert_eq!(n, again);
    }
}
