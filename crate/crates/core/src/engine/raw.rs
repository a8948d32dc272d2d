//! Reader and writer for the de-facto SPICE raw waveform file format
//! (ASCII header, then an ASCII "Values:" section or a little-endian
//! "Binary:" payload).

use super::{Dataset, EngineError, VarKind, Variable};

/// Parse raw waveform bytes into a [`Dataset`].
///
/// The binary payload width is resolved by size arithmetic first (time as
/// 8-byte floats with 4-byte data is the common transient layout; all
/// 8-byte is the other), falling back to the header's "double" flag only
/// when the arithmetic is ambiguous.
pub fn parse_raw(bytes: &[u8]) -> Result<Dataset, EngineError> {
    let mut cursor = 0usize;
    let mut plotname = None;
    let mut flags = String::new();
    let mut n_variables: Option<usize> = None;
    let mut n_points: Option<usize> = None;
    let mut saw_title = false;
    let mut variables: Vec<Variable> = Vec::new();
    let mut payload: Option<Payload> = None;

    while cursor < bytes.len() {
        let line_end = bytes[cursor..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| cursor + p)
            .unwrap_or(bytes.len());
        let line = std::str::from_utf8(&bytes[cursor..line_end])
            .map_err(|_| EngineError::HeaderMalformed("non-ASCII bytes in header".into()))?
            .trim_end_matches('\r');
        let after_line = (line_end + 1).min(bytes.len());

        if let Some(rest) = strip_key(line, "Title:") {
            let _ = rest;
            saw_title = true;
        } else if strip_key(line, "Date:").is_some()
            || strip_key(line, "Command:").is_some()
            || strip_key(line, "Offset:").is_some()
        {
            // Informational; ignored.
        } else if let Some(rest) = strip_key(line, "Plotname:") {
            plotname = Some(rest.to_string());
        } else if let Some(rest) = strip_key(line, "Flags:") {
            flags = rest.to_ascii_lowercase();
        } else if let Some(rest) = strip_key(line, "No. Variables:") {
            n_variables = Some(parse_count(rest, "No. Variables")?);
        } else if let Some(rest) = strip_key(line, "No. Points:") {
            n_points = Some(parse_count(rest, "No. Points")?);
        } else if strip_key(line, "Variables:").is_some() {
            let nv = n_variables.ok_or_else(|| {
                EngineError::HeaderMalformed("Variables: before No. Variables:".into())
            })?;
            cursor = after_line;
            for _ in 0..nv {
                let var_end = bytes[cursor..]
                    .iter()
                    .position(|&b| b == b'\n')
                    .map(|p| cursor + p)
                    .ok_or_else(|| {
                        EngineError::HeaderMalformed("truncated Variables section".into())
                    })?;
                let var_line = std::str::from_utf8(&bytes[cursor..var_end])
                    .map_err(|_| EngineError::HeaderMalformed("non-ASCII variable line".into()))?;
                let fields: Vec<&str> = var_line.split_whitespace().collect();
                if fields.len() < 3 {
                    return Err(EngineError::HeaderMalformed(format!(
                        "variable line `{var_line}` needs index, name and type"
                    )));
                }
                variables.push(Variable {
                    name: fields[1].to_string(),
                    kind: VarKind::from_label(fields[2]),
                });
                cursor = var_end + 1;
            }
            continue;
        } else if line.trim() == "Values:" {
            payload = Some(Payload::Ascii(after_line));
            break;
        } else if line.trim() == "Binary:" {
            payload = Some(Payload::Binary(after_line));
            break;
        } else if !line.trim().is_empty() {
            return Err(EngineError::HeaderMalformed(format!(
                "unrecognized header line `{line}`"
            )));
        }
        cursor = after_line;
    }

    if !saw_title {
        return Err(EngineError::HeaderMalformed("missing Title:".into()));
    }
    if plotname.is_none() {
        return Err(EngineError::HeaderMalformed("missing Plotname:".into()));
    }
    if flags.contains("complex") {
        return Err(EngineError::HeaderMalformed(
            "complex data is not supported".into(),
        ));
    }
    let nv =
        n_variables.ok_or_else(|| EngineError::HeaderMalformed("missing No. Variables:".into()))?;
    let np = n_points.ok_or_else(|| EngineError::HeaderMalformed("missing No. Points:".into()))?;
    if variables.len() != nv {
        return Err(EngineError::HeaderMalformed(format!(
            "declared {nv} variables, listed {}",
            variables.len()
        )));
    }
    if nv == 0 {
        return Err(EngineError::HeaderMalformed("no variables declared".into()));
    }
    let payload = payload
        .ok_or_else(|| EngineError::HeaderMalformed("missing Values:/Binary: marker".into()))?;

    let columns = match payload {
        Payload::Ascii(start) => parse_ascii_values(&bytes[start..], nv, np)?,
        Payload::Binary(start) => parse_binary_values(&bytes[start..], nv, np, &flags)?,
    };
    Dataset::new(variables, columns)
}

enum Payload {
    Ascii(usize),
    Binary(usize),
}

fn strip_key<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let lower = line.to_ascii_lowercase();
    if lower.starts_with(&key.to_ascii_lowercase()) {
        Some(line[key.len()..].trim())
    } else {
        None
    }
}

fn parse_count(text: &str, what: &str) -> Result<usize, EngineError> {
    text.trim()
        .parse()
        .map_err(|_| EngineError::HeaderMalformed(format!("bad {what} count `{text}`")))
}

fn parse_ascii_values(bytes: &[u8], nv: usize, np: usize) -> Result<Vec<Vec<f64>>, EngineError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| EngineError::HeaderMalformed("non-ASCII Values section".into()))?;
    let mut tokens = text.split_whitespace();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(np); nv];
    for point in 0..np {
        let idx_tok = tokens.next().ok_or(EngineError::PayloadSizeMismatch {
            expected: np * (nv + 1),
            actual: point * (nv + 1),
        })?;
        let idx: usize = idx_tok.parse().map_err(|_| {
            EngineError::HeaderMalformed(format!("expected point index, found `{idx_tok}`"))
        })?;
        if idx != point {
            return Err(EngineError::HeaderMalformed(format!(
                "point index {idx} out of order (expected {point})"
            )));
        }
        for column in columns.iter_mut() {
            let tok = tokens.next().ok_or(EngineError::PayloadSizeMismatch {
                expected: np * (nv + 1),
                actual: point * (nv + 1) + 1,
            })?;
            let value: f64 = tok
                .parse()
                .map_err(|_| EngineError::HeaderMalformed(format!("bad value token `{tok}`")))?;
            column.push(value);
        }
    }
    Ok(columns)
}

fn parse_binary_values(
    bytes: &[u8],
    nv: usize,
    np: usize,
    flags: &str,
) -> Result<Vec<Vec<f64>>, EngineError> {
    let mixed_record = 8 + 4 * (nv - 1);
    let wide_record = 8 * nv;
    let actual = bytes.len();
    let layout = if actual == np * mixed_record && actual == np * wide_record {
        // nv == 1; both layouts coincide and the flag decides nothing.
        Layout::Wide
    } else if actual == np * mixed_record {
        Layout::Mixed
    } else if actual == np * wide_record {
        Layout::Wide
    } else if flags.contains("double") {
        return Err(EngineError::PayloadSizeMismatch {
            expected: np * wide_record,
            actual,
        });
    } else {
        return Err(EngineError::PayloadSizeMismatch {
            expected: np * mixed_record,
            actual,
        });
    };

    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(np); nv];
    let mut offset = 0usize;
    for _ in 0..np {
        for (vi, column) in columns.iter_mut().enumerate() {
            let value = match layout {
                Layout::Wide => read_f64(bytes, &mut offset),
                Layout::Mixed => {
                    if vi == 0 {
                        read_f64(bytes, &mut offset)
                    } else {
                        read_f32(bytes, &mut offset)
                    }
                }
            };
            column.push(value);
        }
    }
    Ok(columns)
}

enum Layout {
    Mixed,
    Wide,
}

fn read_f64(bytes: &[u8], offset: &mut usize) -> f64 {
    let v = f64::from_le_bytes(bytes[*offset..*offset + 8].try_into().unwrap());
    *offset += 8;
    v
}

fn read_f32(bytes: &[u8], offset: &mut usize) -> f64 {
    let v = f32::from_le_bytes(bytes[*offset..*offset + 4].try_into().unwrap());
    *offset += 4;
    v as f64
}

/// Write a dataset in the binary layout (8-byte first column, 4-byte rest).
/// `parse_raw(write_raw(ds))` equals `ds` up to float32 quantization on the
/// non-time columns.
pub fn write_raw(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(header(ds, "Binary:").as_bytes());
    for point in 0..ds.n_points() {
        for (vi, column) in ds.columns().iter().enumerate() {
            if vi == 0 {
                out.extend_from_slice(&column[point].to_le_bytes());
            } else {
                out.extend_from_slice(&(column[point] as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Write a dataset in the ASCII "Values:" layout (full f64 precision).
pub fn write_raw_ascii(ds: &Dataset) -> String {
    let mut out = header(ds, "Values:");
    for point in 0..ds.n_points() {
        for (vi, column) in ds.columns().iter().enumerate() {
            if vi == 0 {
                out.push_str(&format!(" {}\t{:e}\n", point, column[point]));
            } else {
                out.push_str(&format!("\t{:e}\n", column[point]));
            }
        }
    }
    out
}

fn header(ds: &Dataset, marker: &str) -> String {
    let mut out = String::new();
    out.push_str("Title: spicedeck dataset\n");
    out.push_str("Plotname: Transient Analysis\n");
    out.push_str("Flags: real\n");
    out.push_str(&format!("No. Variables: {}\n", ds.variables().len()));
    out.push_str(&format!("No. Points: {}\n", ds.n_points()));
    out.push_str("Variables:\n");
    for (i, var) in ds.variables().iter().enumerate() {
        out.push_str(&format!("\t{}\t{}\t{}\n", i, var.name, var.kind.label()));
    }
    out.push_str(marker);
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_dataset() -> Dataset {
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
            ],
            vec![vec![0.0, 1e-6, 2e-6], vec![1.0, 1.5, 1.25]],
        )
        .unwrap()
    }

    #[test]
    fn parses_handwritten_ascii_fixture() {
        let text = "Title: three point fixture\n\
                    Plotname: Transient Analysis\n\
                    Flags: real\n\
                    No. Variables: 2\n\
                    No. Points: 3\n\
                    Variables:\n\
                    \t0\ttime\ttime\n\
                    \t1\tV(out)\tvoltage\n\
                    Values:\n\
                    \t0\t0.0\t1.0\n\
                    \t1\t1e-6\t1.5\n\
                    \t2\t2e-6\t1.25\n";
        let ds = parse_raw(text.as_bytes()).unwrap();
        assert_eq!(ds.n_points(), 3);
        assert_eq!(ds.variables().len(), 2);
        assert_eq!(ds.column("v(out)").unwrap().1[1], 1.5);
    }

    #[test]
    fn binary_round_trip_is_exact_for_this_data() {
        let ds = small_dataset();
        let bytes = write_raw(&ds);
        let back = parse_raw(&bytes).unwrap();
        // 1.0, 1.5, 1.25 are exactly representable in f32.
        assert_eq!(ds, back);
    }

    #[test]
    fn ascii_round_trip_is_exact() {
        let ds = small_dataset();
        let text = write_raw_ascii(&ds);
        let back = parse_raw(text.as_bytes()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn truncated_binary_is_size_mismatch() {
        let ds = small_dataset();
        let mut bytes = write_raw(&ds);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            parse_raw(&bytes),
            Err(EngineError::PayloadSizeMismatch { .. })
        ));
    }

    #[test]
    fn missing_header_fields_are_malformed() {
        let text = "Plotname: Transient Analysis\nFlags: real\n";
        assert!(matches!(
            parse_raw(text.as_bytes()),
            Err(EngineError::HeaderMalformed(_))
        ));
    }

    #[test]
    fn all_double_layout_detected_by_size() {
        let ds = small_dataset();
        // Hand-build an all-f64 payload under the same header.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(header(&ds, "Binary:").as_bytes());
        for point in 0..ds.n_points() {
            for column in ds.columns() {
                bytes.extend_from_slice(&column[point].to_le_bytes());
            }
        }
        let back = parse_raw(&bytes).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn non_monotonic_time_rejected() {
        let text = "Title: bad\nPlotname: t\nFlags: real\nNo. Variables: 1\nNo. Points: 2\n\
                    Variables:\n\t0\ttime\ttime\nValues:\n\t0\t1.0\n\t1\t0.5\n";
        assert!(matches!(
            parse_raw(text.as_bytes()),
            Err(EngineError::NonMonotonicTime)
        ));
    }
}
