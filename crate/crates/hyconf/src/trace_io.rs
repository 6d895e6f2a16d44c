//! CSV serialization for sampled traces and stimuli.
//!
//! Trace files carry one row per sample under the header
//! `t,j,<var>...,act:<NAME>...`: global time, segment index, the continuous
//! variables, then one `act:`-prefixed column per action indicator. `inf`
//! (and `-inf`) are the literals for infinite values. Values print in the
//! shortest decimal form that parses back to the same bits, so a write/read
//! cycle reproduces the trace exactly. Rows are written sorted by `(j, t)`
//! and the loader re-sorts, so hand-edited files may leave rows in any
//! order.
//!
//! Stimulus files carry rows `t,kind,name,value` with `kind` either
//! `action` (`name` is the input action to offer at `t`, `value` empty) or
//! `signal` (`name` is an input variable, `value` its sample at `t`).
//! Signal rows must form a rectangular grid: every listed variable needs a
//! value at every listed time.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::atrace::{ATrace, ATraceError};
use crate::simulate::Stimulus;
use crate::trajectory::{Trajectory, TrajectoryError};
use crate::valuation::Valuation;
use crate::DELTA_MERGE;

/// Header prefix marking a column as an action indicator.
const ACTION_PREFIX: &str = "act:";

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Trace(#[from] ATraceError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

fn syntax(line: usize, message: impl Into<String>) -> TraceIoError {
    TraceIoError::Syntax {
        line,
        message: message.into(),
    }
}

/// Splits into trimmed cells. A trailing `\r` on the line is dropped first,
/// so files with CRLF endings load unchanged.
fn cells(line: &str) -> Vec<&str> {
    line.strip_suffix('\r')
        .unwrap_or(line)
        .split(',')
        .map(str::trim)
        .collect()
}

fn parse_value(line: usize, cell: &str) -> Result<f64, TraceIoError> {
    let value: f64 = cell
        .parse()
        .map_err(|_| syntax(line, format!("`{cell}` is not a number")))?;
    if value.is_nan() {
        return Err(syntax(line, "NaN is not a trace value"));
    }
    Ok(value)
}

/// Renders a sampled trace as CSV. The output is canonical: columns sorted
/// by name with indicators last, rows sorted by `(j, t)`, values in
/// shortest round-trip decimal form.
pub fn write_trace(trace: &ATrace) -> String {
    let continuous = trace.continuous_vars();
    let actions = trace.action_vars();
    let mut out = String::from("t,j");
    for v in &continuous {
        out.push(',');
        out.push_str(v);
    }
    for a in actions {
        out.push(',');
        out.push_str(ACTION_PREFIX);
        out.push_str(a);
    }
    out.push('\n');
    for (j, segment) in trace.segments().iter().enumerate() {
        for (t, val) in segment.iter() {
            out.push_str(&format!("{t},{j}"));
            for v in continuous.iter().chain(actions) {
                let x = val.get(v).expect("validated trace covers its variables");
                out.push_str(&format!(",{}", x.value()));
            }
            out.push('\n');
        }
    }
    out
}

/// Parses trace CSV. Segment starts within [`DELTA_MERGE`] of the previous
/// segment's end are snapped onto it, so traces written by other tools load
/// even when their boundary times differ in the last bits; every other
/// trace invariant is enforced as on direct construction.
pub fn read_trace(text: &str) -> Result<ATrace, TraceIoError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let Some((header_line, header)) = lines.next() else {
        return Err(syntax(1, "empty file"));
    };
    let header_cells = cells(header);
    if header_cells.len() < 2 || header_cells[0] != "t" || header_cells[1] != "j" {
        return Err(syntax(header_line, "header must start with `t,j`"));
    }
    let mut columns: Vec<String> = Vec::new();
    let mut action_vars = BTreeSet::new();
    for cell in &header_cells[2..] {
        let name = match cell.strip_prefix(ACTION_PREFIX) {
            Some(rest) => {
                action_vars.insert(rest.to_string());
                rest
            }
            None => cell,
        };
        if name.is_empty() {
            return Err(syntax(header_line, "empty column name"));
        }
        if columns.iter().any(|c| c == name) {
            return Err(syntax(header_line, format!("duplicate column `{name}`")));
        }
        columns.push(name.to_string());
    }

    // (segment, time, row values) triples, later sorted by (segment, time).
    let mut rows: Vec<(usize, f64, Vec<f64>)> = Vec::new();
    for (line_no, line) in lines {
        let row = cells(line);
        if row.len() != columns.len() + 2 {
            return Err(syntax(
                line_no,
                format!("expected {} cells, got {}", columns.len() + 2, row.len()),
            ));
        }
        let t = parse_value(line_no, row[0])?;
        if !t.is_finite() {
            return Err(syntax(line_no, "sample times must be finite"));
        }
        let j: usize = row[1]
            .parse()
            .map_err(|_| syntax(line_no, format!("`{}` is not a segment index", row[1])))?;
        let values = row[2..]
            .iter()
            .map(|cell| parse_value(line_no, cell))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push((j, t, values));
    }
    if rows.is_empty() {
        return Err(syntax(header_line, "no data rows"));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let last_segment = rows.last().expect("nonempty").0;
    let mut grouped: Vec<Vec<(f64, Valuation)>> = vec![Vec::new(); last_segment + 1];
    for (j, t, values) in rows {
        let mut val = Valuation::new();
        for (name, x) in columns.iter().zip(&values) {
            val.insert(name.clone(), *x);
        }
        grouped[j].push((t, val));
    }
    if let Some(j) = grouped.iter().position(Vec::is_empty) {
        return Err(syntax(
            header_line,
            format!("segment {j} has no rows but a later segment does"),
        ));
    }

    let mut segments = Vec::with_capacity(grouped.len());
    let mut previous_end: Option<f64> = None;
    for mut points in grouped {
        if let Some(end) = previous_end {
            let start = &mut points[0].0;
            if *start != end && (*start - end).abs() <= DELTA_MERGE {
                *start = end;
            }
        }
        let segment = Trajectory::new(points)?;
        previous_end = Some(segment.end_time());
        segments.push(segment);
    }
    Ok(ATrace::new(segments, action_vars)?)
}

/// Renders a stimulus as CSV rows `t,kind,name,value`. The horizon is not
/// stored; it travels with the simulation configuration.
pub fn write_stimulus(stim: &Stimulus) -> String {
    let mut out = String::from("t,kind,name,value\n");
    for (t, action) in &stim.schedule {
        out.push_str(&format!("{t},action,{action},\n"));
    }
    if let Some(signals) = &stim.signals {
        let vars = signals.vars().clone();
        for (t, val) in signals.iter() {
            for v in &vars {
                let x = val.get(v).expect("trajectory covers its variables");
                out.push_str(&format!("{t},signal,{v},{}\n", x.value()));
            }
        }
    }
    out
}

/// Parses stimulus CSV. The horizon comes from the caller; action times
/// must lie within it, and if signal rows are present their grid must cover
/// `[0, horizon]`.
pub fn read_stimulus(text: &str, horizon: f64) -> Result<Stimulus, TraceIoError> {
    if !horizon.is_finite() || horizon < 0.0 {
        return Err(syntax(1, format!("invalid horizon {horizon}")));
    }
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let Some((header_line, header)) = lines.next() else {
        return Err(syntax(1, "empty file"));
    };
    if cells(header) != ["t", "kind", "name", "value"] {
        return Err(syntax(header_line, "header must be `t,kind,name,value`"));
    }

    let mut schedule: Vec<(f64, String)> = Vec::new();
    // time -> variable -> value, collected before the grid shape is known.
    let mut signal_rows: Vec<(f64, String, f64)> = Vec::new();
    for (line_no, line) in lines {
        let row = cells(line);
        if row.len() != 4 {
            return Err(syntax(line_no, format!("expected 4 cells, got {}", row.len())));
        }
        let t = parse_value(line_no, row[0])?;
        if !t.is_finite() {
            return Err(syntax(line_no, "times must be finite"));
        }
        let name = row[2];
        if name.is_empty() {
            return Err(syntax(line_no, "empty name"));
        }
        match row[1] {
            "action" => {
                if !row[3].is_empty() {
                    return Err(syntax(line_no, "action rows take no value"));
                }
                if t < 0.0 || t > horizon {
                    return Err(syntax(
                        line_no,
                        format!("action at t = {t} is outside [0, {horizon}]"),
                    ));
                }
                schedule.push((t, name.to_string()));
            }
            "signal" => {
                let value = parse_value(line_no, row[3])?;
                if !value.is_finite() {
                    return Err(syntax(line_no, "signal values must be finite"));
                }
                signal_rows.push((t, name.to_string(), value));
            }
            other => {
                return Err(syntax(
                    line_no,
                    format!("unknown kind `{other}`, expected `action` or `signal`"),
                ));
            }
        }
    }
    schedule.sort_by(|a, b| a.0.total_cmp(&b.0));

    let signals = if signal_rows.is_empty() {
        None
    } else {
        let vars: BTreeSet<String> = signal_rows.iter().map(|(_, v, _)| v.clone()).collect();
        let mut grid: BTreeMap<u64, (f64, Valuation)> = BTreeMap::new();
        for (t, v, x) in signal_rows {
            let slot = grid
                .entry(t.to_bits())
                .or_insert_with(|| (t, Valuation::new()));
            if slot.1.get(&v).is_some() {
                return Err(syntax(1, format!("duplicate signal sample for `{v}` at t = {t}")));
            }
            slot.1.insert(v, x);
        }
        let mut points: Vec<(f64, Valuation)> = grid.into_values().collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (t, val) in &points {
            for v in &vars {
                if val.get(v).is_none() {
                    return Err(syntax(1, format!("missing signal sample for `{v}` at t = {t}")));
                }
            }
        }
        let traj = Trajectory::new(points)?;
        if traj.start_time() > 0.0 || traj.end_time() < horizon {
            return Err(syntax(
                1,
                format!(
                    "signals cover [{}, {}] but must cover [0, {horizon}]",
                    traj.start_time(),
                    traj.end_time()
                ),
            ));
        }
        Some(traj)
    };
    Ok(Stimulus {
        horizon,
        schedule,
        signals,
    })
}
