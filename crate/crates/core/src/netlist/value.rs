//! Numeric component values with SPICE engineering suffixes.

use serde::{Deserialize, Serialize};

/// Suffix multipliers per SPICE convention. "meg" must be matched before "m".
const SUFFIXES: &[(&str, f64)] = &[
    ("meg", 1e6),
    ("f", 1e-15),
    ("p", 1e-12),
    ("n", 1e-9),
    ("u", 1e-6),
    ("m", 1e-3),
    ("k", 1e3),
    ("g", 1e9),
    ("t", 1e12),
];

/// A scalar physical quantity: magnitude plus an optional unit tag.
///
/// The unit is carried for display only; netlist text stores bare
/// suffixed numbers ("10k"), with the unit implied by the component kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalValue {
    pub magnitude: f64,
    pub unit: Option<String>,
}

impl PhysicalValue {
    pub fn new(magnitude: f64) -> Self {
        PhysicalValue {
            magnitude,
            unit: None,
        }
    }

    pub fn with_unit(magnitude: f64, unit: &str) -> Self {
        PhysicalValue {
            magnitude,
            unit: Some(unit.to_string()),
        }
    }

    /// Parse a SPICE value token such as "10k", "4.7u", "2.2meg", "1e-6"
    /// or "100nF" (trailing letters after the suffix are kept as the unit).
    pub fn parse(token: &str) -> Option<PhysicalValue> {
        let token = token.trim();
        let (number, rest) = split_number(token)?;
        if rest.is_empty() {
            return Some(PhysicalValue::new(number));
        }
        let lower = rest.to_ascii_lowercase();
        for (suffix, factor) in SUFFIXES {
            if lower.starts_with(suffix) {
                let unit = &rest[suffix.len()..];
                if !unit.is_empty() && !unit.chars().all(unit_char) {
                    return None;
                }
                return Some(PhysicalValue {
                    magnitude: number * factor,
                    unit: non_empty(unit),
                });
            }
        }
        if rest.chars().all(unit_char) {
            return Some(PhysicalValue {
                magnitude: number,
                unit: non_empty(rest),
            });
        }
        None
    }

    /// Render the magnitude in the shortest suffix form ("10k", not "10000").
    pub fn render(&self) -> String {
        render_magnitude(self.magnitude)
    }
}

fn unit_char(c: char) -> bool {
    c.is_alphabetic() || c == 'Ω' || c == 'µ'
}

fn non_empty(s: &str) -> Option<String> {
    if s.is_empty() {
        None
    } else {
        Some(s.to_string())
    }
}

/// Split a leading decimal number (with optional exponent) off a token.
/// Returns the parsed number and the unparsed remainder.
fn split_number(token: &str) -> Option<(f64, &str)> {
    let bytes = token.as_bytes();
    let mut i = 0;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let mut saw_digits = i > int_start;
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        saw_digits |= i > frac_start;
    }
    if !saw_digits {
        return None;
    }
    // Exponent: only consume 'e'/'E' when digits follow, otherwise the
    // letter belongs to a suffix or unit.
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let exp_start = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_start {
            i = j;
        }
    }
    let number: f64 = token[..i].parse().ok()?;
    Some((number, &token[i..]))
}

/// Render a magnitude with the engineering suffix that puts the mantissa
/// in [1, 1000). The decimal shift is done on the digit string, so the
/// rendered text re-parses to the same value a float multiply would give.
pub fn render_magnitude(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("{:e} always contains 'e'");
    let exp: i32 = exp.parse().expect("valid exponent");
    let neg = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();

    let e3 = (exp.div_euclid(3) * 3).clamp(-15, 12);
    let suffix = match e3 {
        -15 => "f",
        -12 => "p",
        -9 => "n",
        -6 => "u",
        -3 => "m",
        0 => "",
        3 => "k",
        6 => "meg",
        9 => "g",
        12 => "t",
        _ => unreachable!(),
    };

    // Decimal point goes after `point` digits of the mantissa.
    let point = 1 + (exp - e3);
    let body = if point <= 0 {
        format!("0.{}{}", "0".repeat(-point as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    } else {
        format!(
            "{}.{}",
            &digits[..point as usize],
            &digits[point as usize..]
        )
    };
    format!("{}{}{}", if neg { "-" } else { "" }, body, suffix)
}
