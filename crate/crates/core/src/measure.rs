//! Deterministic waveform feature extraction: mean, peak-to-peak ripple,
//! switching frequency, and settle-in time.
//!
//! These are the reading tools the agent calls instead of looking at raw
//! sample vectors; their one-line rendered form is the stable contract the
//! LLM sees. All functions are pure over immutable inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Dataset;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("trace too short: {0}")]
    TraceTooShort(String),
    #[error("window [{t_start}, {t_end}] selects no usable samples")]
    EmptyWindow { t_start: f64, t_end: f64 },
    #[error("no spectral peak above the noise floor (signal may be constant)")]
    NoPeak,
    #[error("signal never reaches 90% of its steady-state value")]
    NeverSettles,
    #[error("steady-state window still drifting; settle time is ambiguous")]
    AmbiguousSteadyState,
    #[error("no signal named `{0}` in the dataset")]
    UnknownSignal(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
}

/// A single named signal over its time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub name: String,
    pub unit: String,
    time: Vec<f64>,
    values: Vec<f64>,
}

impl Trace {
    pub fn new(
        name: &str,
        unit: &str,
        time: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Trace, MeasureError> {
        if time.len() != values.len() {
            return Err(MeasureError::InvalidTrace(format!(
                "time has {} samples, values {}",
                time.len(),
                values.len()
            )));
        }
        if time.len() < 2 {
            return Err(MeasureError::TraceTooShort(format!(
                "{} samples, need at least 2",
                time.len()
            )));
        }
        if time.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MeasureError::InvalidTrace(
                "time axis is not strictly increasing".to_string(),
            ));
        }
        Ok(Trace {
            name: name.to_string(),
            unit: unit.to_string(),
            time,
            values,
        })
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn t_start(&self) -> f64 {
        self.time[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.time.last().unwrap()
    }

    /// Linear interpolation of the signal at time `t` (clamped to range).
    fn sample_at(&self, t: f64) -> f64 {
        if t <= self.time[0] {
            return self.values[0];
        }
        if t >= self.t_end() {
            return *self.values.last().unwrap();
        }
        let idx = match self
            .time
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.values[i],
            Err(i) => i,
        };
        let (t0, t1) = (self.time[idx - 1], self.time[idx]);
        let (v0, v1) = (self.values[idx - 1], self.values[idx]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    fn window_indices(&self, w: &SteadyWindow) -> std::ops::Range<usize> {
        let start = self.time.partition_point(|&t| t < w.t_start);
        let end = self.time.partition_point(|&t| t <= w.t_end);
        start..end
    }
}

/// A steady-state time window, with a drift diagnostic raised when the
/// windowed mean is still moving by more than 1% of its value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyWindow {
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default)]
    pub drift: bool,
}

impl SteadyWindow {
    pub fn new(t_start: f64, t_end: f64) -> SteadyWindow {
        SteadyWindow {
            t_start,
            t_end,
            drift: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Mean,
    Ripple,
    SwitchingFrequency,
    SettleTime,
}

impl MeasurementKind {
    pub fn label(&self) -> &'static str {
        match self {
            MeasurementKind::Mean => "mean",
            MeasurementKind::Ripple => "ripple",
            MeasurementKind::SwitchingFrequency => "switching_frequency",
            MeasurementKind::SettleTime => "settle_time",
        }
    }

    pub fn parse(text: &str) -> Option<MeasurementKind> {
        match text.trim().to_ascii_lowercase().as_str() {
            "mean" => Some(MeasurementKind::Mean),
            "ripple" => Some(MeasurementKind::Ripple),
            "switching_frequency" => Some(MeasurementKind::SwitchingFrequency),
            "settle_time" => Some(MeasurementKind::SettleTime),
            _ => None,
        }
    }
}

impl std::fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A named scalar feature extracted from a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub kind: MeasurementKind,
    pub value: f64,
    pub unit: String,
    pub window: SteadyWindow,
    pub diagnostics: String,
}

impl Measurement {
    /// The one-line text form fed back to the LLM:
    /// `<kind> <value> <unit> (window <t0>..<t1>)`.
    pub fn render(&self) -> String {
        let mut line = format!(
            "{} {} {} (window {}..{})",
            self.kind.label(),
            format_quantity(self.value),
            self.unit,
            format_quantity(self.window.t_start),
            format_quantity(self.window.t_end),
        );
        if !self.diagnostics.is_empty() {
            line.push_str(&format!(" [{}]", self.diagnostics));
        }
        line
    }
}

/// Fixed-point for mid-range magnitudes, scientific outside; trailing
/// zeros trimmed. Deterministic for identical inputs.
pub fn format_quantity(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let abs = v.abs();
    let text = if (1e-3..1e7).contains(&abs) {
        format!("{v:.6}")
    } else {
        format!("{v:.6e}")
    };
    trim_number(&text)
}

fn trim_number(text: &str) -> String {
    if let Some(epos) = text.find(['e', 'E']) {
        let (mant, exp) = text.split_at(epos);
        let mant = trim_mantissa(mant);
        format!("{mant}{exp}")
    } else {
        trim_mantissa(text)
    }
}

fn trim_mantissa(mant: &str) -> String {
    if !mant.contains('.') {
        return mant.to_string();
    }
    let trimmed = mant.trim_end_matches('0');
    let trimmed = trimmed.strip_suffix('.').unwrap_or(trimmed);
    trimmed.to_string()
}

/// Last `frac` of the trace's time span, flagged when the mean over the
/// first and second halves of the window differ by more than 1%.
pub fn steady_state_window(trace: &Trace, frac: f64) -> Result<SteadyWindow, MeasureError> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(MeasureError::InvalidTrace(format!(
            "window fraction {frac} outside (0, 1]"
        )));
    }
    let span = trace.t_end() - trace.t_start();
    if span <= 0.0 {
        return Err(MeasureError::TraceTooShort(
            "trace spans no time".to_string(),
        ));
    }
    let t_start = trace.t_end() - frac * span;
    let mut window = SteadyWindow::new(t_start, trace.t_end());
    let mid = 0.5 * (window.t_start + window.t_end);
    let first = integrate_mean(trace, window.t_start, mid);
    let second = integrate_mean(trace, mid, window.t_end);
    let whole = integrate_mean(trace, window.t_start, window.t_end);
    if (second - first).abs() > 0.01 * whole.abs() {
        window.drift = true;
    }
    Ok(window)
}

/// Trapezoidal time-weighted average of the piecewise-linear signal over
/// [t0, t1], with interpolated window boundaries.
fn integrate_mean(trace: &Trace, t0: f64, t1: f64) -> f64 {
    debug_assert!(t1 > t0);
    let mut knots: Vec<(f64, f64)> = Vec::new();
    knots.push((t0, trace.sample_at(t0)));
    for i in trace.window_indices(&SteadyWindow::new(t0, t1)) {
        let t = trace.time[i];
        if t > t0 && t < t1 {
            knots.push((t, trace.values[i]));
        }
    }
    knots.push((t1, trace.sample_at(t1)));
    // A constant signal averages to itself exactly, without quadrature
    // round-off.
    let first = knots[0].1;
    if knots.iter().all(|&(_, v)| v == first) {
        return first;
    }
    let mut acc = 0.0;
    for pair in knots.windows(2) {
        let (ta, va) = pair[0];
        let (tb, vb) = pair[1];
        acc += 0.5 * (va + vb) * (tb - ta);
    }
    acc / (t1 - t0)
}

fn check_window(trace: &Trace, w: &SteadyWindow) -> Result<(), MeasureError> {
    let inside = w.t_start < w.t_end
        && w.t_start >= trace.t_start() - 1e-15
        && w.t_end <= trace.t_end() + 1e-15;
    if !inside {
        return Err(MeasureError::EmptyWindow {
            t_start: w.t_start,
            t_end: w.t_end,
        });
    }
    Ok(())
}

/// Time-weighted mean over the window (robust to non-uniform sampling).
pub fn get_mean_output_voltage(
    trace: &Trace,
    window: &SteadyWindow,
) -> Result<Measurement, MeasureError> {
    check_window(trace, window)?;
    let value = integrate_mean(trace, window.t_start, window.t_end);
    Ok(Measurement {
        kind: MeasurementKind::Mean,
        value,
        unit: trace.unit.clone(),
        window: *window,
        diagnostics: drift_note(window),
    })
}

/// Peak-to-peak value of the samples inside the window.
pub fn get_ripple(trace: &Trace, window: &SteadyWindow) -> Result<Measurement, MeasureError> {
    check_window(trace, window)?;
    let range = trace.window_indices(window);
    if range.is_empty() {
        return Err(MeasureError::EmptyWindow {
            t_start: window.t_start,
            t_end: window.t_end,
        });
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in &trace.values[range] {
        min = min.min(v);
        max = max.max(v);
    }
    Ok(Measurement {
        kind: MeasurementKind::Ripple,
        value: max - min,
        unit: trace.unit.clone(),
        window: *window,
        diagnostics: drift_note(window),
    })
}

fn drift_note(window: &SteadyWindow) -> String {
    if window.drift {
        "window mean still drifting > 1%".to_string()
    } else {
        String::new()
    }
}

/// Fundamental frequency: resample the window to a uniform power-of-two
/// grid, remove the mean, apply a Hann taper, take the FFT, pick the
/// highest-magnitude bin and refine it by parabolic interpolation.
pub fn get_switching_frequency(
    trace: &Trace,
    window: &SteadyWindow,
) -> Result<Measurement, MeasureError> {
    use rustfft::num_complex::Complex;
    use rustfft::FftPlanner;

    check_window(trace, window)?;
    let sample_count = trace.window_indices(window).len();
    if sample_count < 8 {
        return Err(MeasureError::EmptyWindow {
            t_start: window.t_start,
            t_end: window.t_end,
        });
    }
    let n = sample_count.next_power_of_two();
    let span = window.t_end - window.t_start;
    let dt = span / n as f64;

    let mut grid: Vec<f64> = (0..n)
        .map(|i| trace.sample_at(window.t_start + i as f64 * dt))
        .collect();
    let mean = grid.iter().sum::<f64>() / n as f64;
    let scale = grid
        .iter()
        .map(|v| (v - mean).abs())
        .fold(0.0f64, f64::max)
        .max(grid.iter().map(|v| v.abs()).fold(0.0f64, f64::max));
    for (i, v) in grid.iter_mut().enumerate() {
        let hann = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos());
        *v = (*v - mean) * hann;
    }

    let mut buffer: Vec<Complex<f64>> = grid.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buffer);
    let magnitudes: Vec<f64> = buffer[..n / 2].iter().map(|c| c.norm()).collect();

    let (peak_bin, peak_mag) = magnitudes
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &m)| (i, m))
        .fold(
            (0usize, 0.0f64),
            |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            },
        );
    if peak_bin == 0 || peak_mag <= 1e-9 * n as f64 * scale {
        return Err(MeasureError::NoPeak);
    }

    let refined_bin = if peak_bin + 1 < magnitudes.len() && peak_bin >= 1 {
        let alpha = magnitudes[peak_bin - 1];
        let beta = magnitudes[peak_bin];
        let gamma = magnitudes[peak_bin + 1];
        let denom = alpha - 2.0 * beta + gamma;
        let delta = if denom.abs() < 1e-300 {
            0.0
        } else {
            (0.5 * (alpha - gamma) / denom).clamp(-0.5, 0.5)
        };
        peak_bin as f64 + delta
    } else {
        peak_bin as f64
    };
    let frequency = refined_bin / span;

    let periods_in_window = span * frequency;
    let mut diagnostics = drift_note(window);
    if periods_in_window < 8.0 {
        if !diagnostics.is_empty() {
            diagnostics.push_str("; ");
        }
        diagnostics.push_str(&format!(
            "window spans only {periods_in_window:.1} periods of the fundamental"
        ));
    }

    Ok(Measurement {
        kind: MeasurementKind::SwitchingFrequency,
        value: frequency,
        unit: "Hz".to_string(),
        window: *window,
        diagnostics,
    })
}

/// Earliest time the signal reaches 90% of the steady-state mean (mirrored
/// for negative means). Signals settling toward zero never settle by this
/// definition, and a drifting steady window makes the answer ambiguous.
pub fn get_settle_in_time(trace: &Trace) -> Result<Measurement, MeasureError> {
    let window = steady_state_window(trace, 0.2)?;
    let steady = integrate_mean(trace, window.t_start, window.t_end);
    let full_scale = trace.values.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    if steady.abs() < 0.01 * full_scale || full_scale == 0.0 {
        return Err(MeasureError::NeverSettles);
    }
    if window.drift {
        return Err(MeasureError::AmbiguousSteadyState);
    }
    let threshold = 0.9 * steady;
    let crossed = |v: f64| {
        if steady > 0.0 {
            v >= threshold
        } else {
            v <= threshold
        }
    };
    for (t, v) in trace.time.iter().zip(trace.values.iter()) {
        if crossed(*v) {
            return Ok(Measurement {
                kind: MeasurementKind::SettleTime,
                value: *t,
                unit: "s".to_string(),
                window,
                diagnostics: String::new(),
            });
        }
    }
    Err(MeasureError::NeverSettles)
}

/// Dispatch facade over the four reading tools; both the agent and the
/// benchmark verification path go through here.
pub fn read_feature(
    dataset: &Dataset,
    signal: &str,
    kind: MeasurementKind,
) -> Result<Measurement, MeasureError> {
    let (variable, values) = dataset
        .column(signal)
        .ok_or_else(|| MeasureError::UnknownSignal(signal.to_string()))?;
    if variable.kind == crate::engine::VarKind::Time {
        return Err(MeasureError::UnknownSignal(format!(
            "{signal} is the time axis"
        )));
    }
    let trace = Trace::new(
        &variable.name,
        variable.kind.unit(),
        dataset.time().to_vec(),
        values.to_vec(),
    )?;
    match kind {
        MeasurementKind::Mean => {
            let window = steady_state_window(&trace, 0.2)?;
            get_mean_output_voltage(&trace, &window)
        }
        MeasurementKind::Ripple => {
            let window = steady_state_window(&trace, 0.2)?;
            get_ripple(&trace, &window)
        }
        MeasurementKind::SwitchingFrequency => {
            let window = steady_state_window(&trace, 0.2)?;
            get_switching_frequency(&trace, &window)
        }
        MeasurementKind::SettleTime => get_settle_in_time(&trace),
    }
}
