//! Line-oriented text format for automata, with a parser and a printer that
//! round-trip each other.
//!
//! ```text
//! # comments run to the end of the line
//! automaton thermostat
//!
//! inputs
//!   action ON
//! outputs
//!   var y
//!   action OFF
//! internal
//!   var x
//!
//! location mode_ON
//!   flow x' = -x + 20
//!   invariant x <= 20
//!   output y = x
//!
//! transition mode_ON -> mode_OFF on OFF guard x >= 18 reset x = 18
//! init mode_ON x = 5
//! ```
//!
//! `inputs`, `outputs`, and `internal` open declaration sections of `var`
//! and `action` lines. Each `location` block takes one `flow` line per
//! internal variable, one `output` line per output variable, and at most
//! one `invariant` line (absent means `true`). A `transition` line may end
//! in a comma-separated `reset` list; an `init` line names the starting
//! location and the starting value of every internal variable. Keywords and
//! the names `xi`, `exp`, and `true` are reserved.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::automaton::{Hioa, Location, ModelError, TransitionRule};
use crate::expr::{Expr, ParseError, Predicate};
use crate::valuation::Valuation;

const KEYWORDS: [&str; 18] = [
    "automaton",
    "inputs",
    "outputs",
    "internal",
    "var",
    "action",
    "location",
    "flow",
    "invariant",
    "output",
    "transition",
    "init",
    "on",
    "guard",
    "reset",
    "true",
    "exp",
    "xi",
];

#[derive(Debug, Error)]
pub enum DslError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn syntax(line: usize, message: impl Into<String>) -> DslError {
    DslError::Syntax {
        line,
        message: message.into(),
    }
}

/// Re-anchors an expression error to the full line it came from.
fn embedded(line: usize, base_col: usize, err: ParseError) -> DslError {
    syntax(
        line,
        format!("column {}: {}", base_col + err.col, err.message),
    )
}

fn check_name(line: usize, name: &str, what: &str) -> Result<(), DslError> {
    let mut chars = name.chars();
    let head_ok = chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
    if !head_ok || !chars.all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(syntax(line, format!("`{name}` is not a valid {what} name")));
    }
    if KEYWORDS.contains(&name) {
        return Err(syntax(line, format!("`{name}` is a reserved word")));
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Inputs,
    Outputs,
    Internal,
}

/// One word of a line along with its 1-based starting column.
fn words(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

/// Parses the text format into a validated automaton.
pub fn parse_automaton(text: &str) -> Result<Hioa, DslError> {
    let mut name: Option<String> = None;
    let mut section: Option<Section> = None;
    let mut model = Hioa {
        name: String::new(),
        input_vars: Default::default(),
        output_vars: Default::default(),
        internal_vars: Default::default(),
        input_actions: Default::default(),
        output_actions: Default::default(),
        internal_actions: Default::default(),
        locations: Vec::new(),
        transitions: Vec::new(),
        init: Vec::new(),
    };
    let mut open_location: Option<(usize, Location, bool)> = None;

    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let tokens = words(line);
        let Some(&(_, head)) = tokens.first() else {
            continue;
        };
        // Declarations after the location block close it.
        if !matches!(head, "flow" | "invariant" | "output") {
            if let Some((_, loc, _)) = open_location.take() {
                model.locations.push(loc);
            }
        }
        match head {
            "automaton" => {
                if name.is_some() {
                    return Err(syntax(line_no, "duplicate `automaton` line"));
                }
                let [_, (_, n)] = tokens[..] else {
                    return Err(syntax(line_no, "expected `automaton NAME`"));
                };
                check_name(line_no, n, "automaton")?;
                name = Some(n.to_string());
            }
            "inputs" | "outputs" | "internal" => {
                if tokens.len() != 1 {
                    return Err(syntax(line_no, format!("`{head}` takes no arguments")));
                }
                section = Some(match head {
                    "inputs" => Section::Inputs,
                    "outputs" => Section::Outputs,
                    _ => Section::Internal,
                });
            }
            "var" | "action" => {
                let [_, (_, n)] = tokens[..] else {
                    return Err(syntax(line_no, format!("expected `{head} NAME`")));
                };
                check_name(line_no, n, head)?;
                let target = match (section, head) {
                    (None, _) => {
                        return Err(syntax(
                            line_no,
                            "declaration outside of an `inputs`, `outputs`, or `internal` section",
                        ))
                    }
                    (Some(Section::Inputs), "var") => &mut model.input_vars,
                    (Some(Section::Outputs), "var") => &mut model.output_vars,
                    (Some(Section::Internal), "var") => &mut model.internal_vars,
                    (Some(Section::Inputs), _) => &mut model.input_actions,
                    (Some(Section::Outputs), _) => &mut model.output_actions,
                    (Some(Section::Internal), _) => &mut model.internal_actions,
                };
                if !target.insert(n.to_string()) {
                    return Err(syntax(line_no, format!("duplicate declaration of `{n}`")));
                }
            }
            "location" => {
                let [_, (_, n)] = tokens[..] else {
                    return Err(syntax(line_no, "expected `location NAME`"));
                };
                check_name(line_no, n, "location")?;
                open_location = Some((
                    line_no,
                    Location {
                        name: n.to_string(),
                        flow: BTreeMap::new(),
                        invariant: Predicate::True,
                        outputs: BTreeMap::new(),
                    },
                    false,
                ));
            }
            "flow" | "output" => {
                let Some((_, loc, _)) = open_location.as_mut() else {
                    return Err(syntax(line_no, format!("`{head}` outside of a location")));
                };
                let Some((lhs, rhs)) = line.split_once('=') else {
                    return Err(syntax(line_no, format!("expected `{head} NAME = EXPR`")));
                };
                let lhs_words = words(lhs);
                let [_, (_, target)] = lhs_words[..] else {
                    return Err(syntax(line_no, format!("expected `{head} NAME = EXPR`")));
                };
                let var = if head == "flow" {
                    let Some(stripped) = target.strip_suffix('\'') else {
                        return Err(syntax(
                            line_no,
                            "a flow assigns to a primed variable, as in `x' = ...`",
                        ));
                    };
                    stripped
                } else {
                    target
                };
                check_name(line_no, var, "variable")?;
                let base = line.find('=').unwrap() + 1;
                let expr = Expr::parse(rhs).map_err(|e| embedded(line_no, base, e))?;
                let map = if head == "flow" {
                    &mut loc.flow
                } else {
                    &mut loc.outputs
                };
                if map.insert(var.to_string(), expr).is_some() {
                    return Err(syntax(line_no, format!("duplicate `{head}` for `{var}`")));
                }
            }
            "invariant" => {
                let Some((line_no_open, loc, seen)) = open_location.as_mut() else {
                    return Err(syntax(line_no, "`invariant` outside of a location"));
                };
                let _ = line_no_open;
                if *seen {
                    return Err(syntax(line_no, "duplicate `invariant` line"));
                }
                let base = tokens[0].0 + "invariant".len();
                let body = &line[base - 1..];
                loc.invariant =
                    Predicate::parse(body).map_err(|e| embedded(line_no, base - 1, e))?;
                *seen = true;
            }
            "transition" => {
                let head_words: Vec<(usize, &str)> = tokens.iter().copied().take(7).collect();
                let valid = head_words.len() == 7
                    && head_words[2].1 == "->"
                    && head_words[4].1 == "on"
                    && head_words[6].1 == "guard";
                if !valid {
                    return Err(syntax(
                        line_no,
                        "expected `transition SRC -> DST on ACTION guard PRED [reset VAR = EXPR, ...]`",
                    ));
                }
                let (_, source) = head_words[1];
                let (_, target) = head_words[3];
                let (_, action) = head_words[5];
                check_name(line_no, source, "location")?;
                check_name(line_no, target, "location")?;
                check_name(line_no, action, "action")?;

                let guard_from = head_words[6].0 - 1 + "guard".len();
                let tail = &line[guard_from..];
                let reset_at = words(tail)
                    .iter()
                    .find(|(_, w)| *w == "reset")
                    .map(|(c, _)| c - 1);
                let (guard_text, reset_text) = match reset_at {
                    Some(at) => (&tail[..at], Some(&tail[at + "reset".len()..])),
                    None => (tail, None),
                };
                let guard = Predicate::parse(guard_text)
                    .map_err(|e| embedded(line_no, guard_from, e))?;
                let mut resets = BTreeMap::new();
                if let Some(rest) = reset_text {
                    for part in rest.split(',') {
                        let Some((v, e)) = part.split_once('=') else {
                            return Err(syntax(
                                line_no,
                                "expected `reset VAR = EXPR, VAR = EXPR, ...`",
                            ));
                        };
                        let var = v.trim();
                        check_name(line_no, var, "variable")?;
                        let expr =
                            Expr::parse(e).map_err(|err| embedded(line_no, guard_from, err))?;
                        if resets.insert(var.to_string(), expr).is_some() {
                            return Err(syntax(line_no, format!("duplicate reset of `{var}`")));
                        }
                    }
                }
                model.transitions.push(TransitionRule {
                    source: source.to_string(),
                    target: target.to_string(),
                    action: action.to_string(),
                    guard,
                    resets,
                });
            }
            "init" => {
                if tokens.len() < 2 {
                    return Err(syntax(line_no, "expected `init LOCATION [VAR = NUM, ...]`"));
                }
                let (loc_col, loc_name) = tokens[1];
                check_name(line_no, loc_name, "location")?;
                let rest = &line[loc_col - 1 + loc_name.len()..];
                let mut values = Valuation::new();
                if !rest.trim().is_empty() {
                    for part in rest.split(',') {
                        let Some((v, num)) = part.split_once('=') else {
                            return Err(syntax(line_no, "expected `VAR = NUM` in `init`"));
                        };
                        let var = v.trim();
                        check_name(line_no, var, "variable")?;
                        let value: f64 = num.trim().parse().map_err(|_| {
                            syntax(line_no, format!("`{}` is not a number", num.trim()))
                        })?;
                        if values.get(var).is_some() {
                            return Err(syntax(line_no, format!("duplicate value for `{var}`")));
                        }
                        values.insert(var.to_string(), value);
                    }
                }
                model.init.push((loc_name.to_string(), values));
            }
            other => {
                return Err(syntax(line_no, format!("unknown directive `{other}`")));
            }
        }
    }
    if let Some((_, loc, _)) = open_location.take() {
        model.locations.push(loc);
    }
    let Some(n) = name else {
        return Err(syntax(1, "missing `automaton NAME` line"));
    };
    model.name = n;
    Ok(model.validated()?)
}

/// Prints an automaton in the text format. Parsing the result builds the
/// same automaton back, provided its expressions came from this format (a
/// hand-built negative literal prints as a negation).
pub fn print_automaton(model: &Hioa) -> String {
    let mut out = String::new();
    let mut push = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    push(format!("automaton {}", model.name));

    for (header, vars, actions) in [
        ("inputs", &model.input_vars, &model.input_actions),
        ("outputs", &model.output_vars, &model.output_actions),
        ("internal", &model.internal_vars, &model.internal_actions),
    ] {
        if vars.is_empty() && actions.is_empty() {
            continue;
        }
        push(String::new());
        push(header.to_string());
        for v in vars {
            push(format!("  var {v}"));
        }
        for a in actions {
            push(format!("  action {a}"));
        }
    }

    for loc in &model.locations {
        push(String::new());
        push(format!("location {}", loc.name));
        for (v, e) in &loc.flow {
            push(format!("  flow {v}' = {e}"));
        }
        push(format!("  invariant {}", loc.invariant));
        for (v, e) in &loc.outputs {
            push(format!("  output {v} = {e}"));
        }
    }

    if !model.transitions.is_empty() {
        push(String::new());
    }
    for rule in &model.transitions {
        let mut line = format!(
            "transition {} -> {} on {} guard {}",
            rule.source, rule.target, rule.action, rule.guard
        );
        if !rule.resets.is_empty() {
            let parts: Vec<String> = rule
                .resets
                .iter()
                .map(|(v, e)| format!("{v} = {e}"))
                .collect();
            line.push_str(&format!(" reset {}", parts.join(", ")));
        }
        push(line);
    }

    if !model.init.is_empty() {
        push(String::new());
    }
    for (loc, values) in &model.init {
        let mut line = format!("init {loc}");
        let parts: Vec<String> = values
            .iter()
            .map(|(v, x)| format!("{v} = {}", x.value()))
            .collect();
        if !parts.is_empty() {
            line.push_str(&format!(" {}", parts.join(", ")));
        }
        push(line);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::build_thermostat;

    const THERMOSTAT: &str = "\
# Two-mode heater with a hysteresis band.
automaton thermostat

inputs
  action ON
outputs
  var y
  action OFF
internal
  var x

location mode_ON
  flow x' = -x + 20
  invariant x <= 20
  output y = x

location mode_OFF
  flow x' = -x
  invariant x >= 0
  output y = x

transition mode_ON -> mode_OFF on OFF guard x >= 18
transition mode_OFF -> mode_ON on ON guard x <= 2

init mode_ON x = 5
";

    #[test]
    fn parses_the_reference_model() {
        let parsed = parse_automaton(THERMOSTAT).unwrap();
        assert_eq!(parsed, build_thermostat());
    }

    #[test]
    fn print_parse_round_trips() {
        let model = build_thermostat();
        let text = print_automaton(&model);
        let reparsed = parse_automaton(&text).unwrap();
        assert_eq!(reparsed, model);
        assert_eq!(print_automaton(&reparsed), text);
    }

    #[test]
    fn resets_and_inputs_round_trip() {
        let text = "\
automaton sampler
inputs
  var u
  action tick
outputs
  var y
internal
  var x
location hold
  flow x' = u - x / 2
  output y = x * 2
transition hold -> hold on tick guard x >= 1 reset x = x / 2
init hold x = 1.5
";
        let model = parse_automaton(text).unwrap();
        assert_eq!(model.transitions.len(), 1);
        assert_eq!(model.transitions[0].resets.len(), 1);
        let reparsed = parse_automaton(&print_automaton(&model)).unwrap();
        assert_eq!(reparsed, model);
    }

    #[test]
    fn reports_lines_and_columns() {
        let text = "automaton broken\ninternal\n  var x\nlocation l\n  flow x' = x +\n";
        let err = parse_automaton(text).unwrap_err();
        let DslError::Syntax { line, message } = err else {
            panic!("expected a syntax error");
        };
        assert_eq!(line, 5);
        assert!(message.contains("column"), "got: {message}");
    }

    #[test]
    fn rejects_reserved_and_malformed_names() {
        for bad in [
            "automaton xi\n",
            "automaton m\ninternal\n  var exp\n",
            "automaton m\ninternal\n  var 9x\n",
            "automaton m\ninputs\n  action guard\n",
        ] {
            assert!(matches!(
                parse_automaton(bad),
                Err(DslError::Syntax { .. })
            ));
        }
    }

    #[test]
    fn rejects_structural_mistakes() {
        // A variable declared outside any section.
        assert!(parse_automaton("automaton m\n  var x\n").is_err());
        // A flow without a location.
        assert!(parse_automaton("automaton m\nflow x' = 1\n").is_err());
        // A duplicate invariant.
        let dup = "automaton m\ninternal\n  var x\nlocation l\n  flow x' = 0\n  invariant x >= 0\n  invariant x <= 1\ninit l x = 0\n";
        assert!(parse_automaton(dup).is_err());
        // Model-level validation still runs.
        let missing_init = "automaton m\ninternal\n  var x\nlocation l\n  flow x' = 0\n";
        assert!(matches!(
            parse_automaton(missing_init),
            Err(DslError::Model(_))
        ));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# header\nautomaton m # trailing\n\ninternal\n  var x # state\nlocation l\n  flow x' = 0\ninit l x = 0\n";
        let model = parse_automaton(text).unwrap();
        assert_eq!(model.name, "m");
    }
}
