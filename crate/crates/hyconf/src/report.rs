//! Deterministic plain-text rendering of check results.
//!
//! Reports are line-oriented `key = value` files; every number is printed
//! with nine significant digits so identical runs diff byte-for-byte.
//! Closeness verdicts additionally render their per-point matching as CSV
//! for plotting.

use std::fmt::Write as _;

use crate::closeness::{CloseMode, ClosenessVerdict, Counterexample, PointId};
use crate::conformance::{ConformanceReport, HiocoReport, PairOutcome, TestOutcome};
use crate::semitrans::{SemitransConfig, SemitransReport};

/// Formats with nine significant digits, positional when the exponent is
/// moderate and scientific otherwise, trailing zeros trimmed. Infinities
/// print as `inf`/`-inf`, matching the trace CSV literal.
pub fn sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    // The exponent of the value after rounding to nine digits; taking it
    // from the formatted string keeps 9.999999996 in the right decade.
    let sci = format!("{x:.8e}");
    let (mantissa, exponent) = sci.split_once('e').expect("scientific form has an e");
    let exp: i32 = exponent.parse().expect("exponent is an integer");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_string()
}

fn mode_name(mode: CloseMode) -> &'static str {
    match mode {
        CloseMode::Plain => "plain",
        CloseMode::Extended => "extended",
    }
}

/// An ordered list of `key = value` lines.
#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new(check: &str) -> Report {
        let mut r = Report::default();
        r.set("check", check);
        r
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.lines.push((key.to_string(), value.into()));
    }

    pub fn set_num(&mut self, key: &str, value: f64) {
        self.set(key, sig9(value));
    }

    pub fn set_count(&mut self, key: &str, value: usize) {
        self.set(key, value.to_string());
    }

    pub fn set_bool(&mut self, key: &str, value: bool) {
        self.set(key, if value { "true" } else { "false" });
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn set_point(report: &mut Report, key: &str, p: &PointId) {
    report.set(key, format!("t={} j={}", sig9(p.time), p.segment));
}

fn set_counterexample(report: &mut Report, c: &Counterexample) {
    report.set("counterexample_direction", c.direction.to_string());
    set_point(report, "counterexample_source", &c.source);
    match &c.best_target {
        Some(p) => set_point(report, "counterexample_best_target", p),
        None => report.set("counterexample_best_target", "none within tau"),
    }
    report.set_num("counterexample_best_distance", c.best_distance.value());
}

/// Renders one closeness verdict.
pub fn closeness_report(v: &ClosenessVerdict) -> String {
    let mut r = Report::new("closeness");
    r.set("mode", mode_name(v.mode));
    r.set_num("tau", v.params.tau);
    r.set_num("epsilon", v.params.epsilon);
    r.set_num("horizon", v.params.horizon);
    r.set_count("max_jumps", v.params.max_jumps);
    r.set_bool("close", v.close);
    r.set_count("sources_first", v.sources[0]);
    r.set_count("sources_second", v.sources[1]);
    r.set_num("max_sample_gap", v.max_sample_gap);
    if let Some(c) = &v.counterexample {
        set_counterexample(&mut r, c);
    }
    r.render()
}

/// Renders the matching behind a closeness verdict as CSV: one row per
/// matched point when the check passed, or the single hardest point when it
/// failed. Empty partner cells mean no candidate lay within `tau`.
pub fn witness_csv(v: &ClosenessVerdict) -> String {
    let mut out = String::from("direction,t,j,partner_t,partner_j,distance\n");
    for w in &v.witnesses {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            w.direction,
            sig9(w.source.time),
            w.source.segment,
            sig9(w.target.time),
            w.target.segment,
            sig9(w.distance.value()),
        );
    }
    if let Some(c) = &v.counterexample {
        let (pt, pj) = match &c.best_target {
            Some(p) => (sig9(p.time), p.segment.to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{pt},{pj},{}",
            c.direction,
            sig9(c.source.time),
            c.source.segment,
            sig9(c.best_distance.value()),
        );
    }
    out
}

/// Renders a suite-level conformance report, one line per quantified pair.
pub fn conformance_report(r: &ConformanceReport) -> String {
    let mut out = Report::new("conformance");
    out.set("mode", mode_name(r.mode));
    out.set_num("tau", r.params.tau);
    out.set_num("epsilon", r.params.epsilon);
    out.set_num("horizon", r.params.horizon);
    out.set_count("max_jumps", r.params.max_jumps);
    out.set_bool("conforms", r.conforms);
    out.set_count("pairs", r.outcomes.len());
    for (i, outcome) in r.outcomes.iter().enumerate() {
        let key = format!("pair_{i}");
        match outcome {
            PairOutcome::Matched { partner, verdict } => {
                let worst = verdict
                    .witnesses
                    .iter()
                    .map(|w| w.distance)
                    .max()
                    .map(|d| sig9(d.value()))
                    .unwrap_or_else(|| "0".to_string());
                out.set(&key, format!("matched partner={partner} worst_distance={worst}"));
            }
            PairOutcome::InputNotCovered => {
                out.set(&key, "input_not_covered");
            }
            PairOutcome::NotClose { partner, verdict } => {
                let distance = verdict
                    .counterexample
                    .as_ref()
                    .map(|c| sig9(c.best_distance.value()))
                    .unwrap_or_default();
                out.set(
                    &key,
                    format!("not_close best_partner={partner} best_distance={distance}"),
                );
            }
        }
    }
    out.render()
}

/// Renders a model-level conformance report, one line per test trace.
pub fn hioco_report(r: &HiocoReport) -> String {
    let mut out = Report::new("hioco");
    out.set_bool("conforms", r.conforms);
    out.set_count("tests", r.outcomes.len());
    for (i, outcome) in r.outcomes.iter().enumerate() {
        let key = format!("test_{i}");
        match outcome {
            TestOutcome::NotExhibited => out.set(&key, "not_exhibited"),
            TestOutcome::Passed => out.set(&key, "passed"),
            TestOutcome::ForbiddenOutput { action } => {
                out.set(&key, format!("forbidden_output {action}"));
            }
            TestOutcome::ForbiddenFlow { probe } => {
                out.set(&key, format!("forbidden_flow probe={}", sig9(*probe)));
            }
        }
    }
    out.render()
}

/// Renders a semi-transitivity run, configuration included so a report
/// identifies its experiment.
pub fn semitrans_report(config: &SemitransConfig, r: &SemitransReport) -> String {
    let mut out = Report::new("semitrans");
    out.set("seed", config.seed.to_string());
    out.set("trials", r.trials.to_string());
    out.set_num("tau_min", config.tau_range.0);
    out.set_num("tau_max", config.tau_range.1);
    out.set_num("epsilon_min", config.epsilon_range.0);
    out.set_num("epsilon_max", config.epsilon_range.1);
    out.set("regenerated", r.regenerated.to_string());
    out.set_count("violations", r.violations.len());
    for index in &r.violations {
        out.set("violation_trial", index.to_string());
    }
    out.set_count("exhausted", r.exhausted.len());
    for index in &r.exhausted {
        out.set("exhausted_trial", index.to_string());
    }
    out.set_bool("passed", r.passed());
    out.render()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atrace::ATrace;
    use crate::closeness::{close_ext, close_plain, ClosenessParams};
    use crate::trajectory::Trajectory;
    use crate::valuation::Valuation;
    use std::collections::BTreeSet;

    #[test]
    fn sig9_rounds_to_nine_significant_digits() {
        let cases = [
            (0.0, "0"),
            (-0.0, "0"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (18.0, "18"),
            (2.0149030205422647, "2.01490302"),
            (123456789.123, "123456789"),
            (1234567890.0, "1.23456789e9"),
            (0.000123456789123, "0.000123456789"),
            (0.0000123456789, "1.23456789e-5"),
            (999.999999999, "1000"),
            (9.99999999951e8, "1e9"),
            (f64::INFINITY, "inf"),
            (f64::NEG_INFINITY, "-inf"),
            (1e-300, "1e-300"),
        ];
        for (x, expected) in cases {
            assert_eq!(sig9(x), expected, "for {x:e}");
        }
    }

    fn square_trace(level: f64) -> ATrace {
        let mut points = Vec::new();
        for i in 0..=10 {
            let t = i as f64 * 0.5;
            let mut v = Valuation::new();
            v.insert("x", level + (t - 2.5).abs());
            points.push((t, v));
        }
        let seg = Trajectory::new(points).unwrap();
        ATrace::new(vec![seg], BTreeSet::new()).unwrap()
    }

    #[test]
    fn closeness_reports_are_deterministic_and_complete() {
        let params = ClosenessParams::new(0.5, 0.2, 5.0, 3).unwrap();
        let pass = close_plain(&square_trace(0.0), &square_trace(0.1), &params).unwrap();
        assert!(pass.close);
        let report = closeness_report(&pass);
        assert!(report.contains("check = closeness"));
        assert!(report.contains("close = true"));
        assert!(!report.contains("counterexample"));
        assert_eq!(report, closeness_report(&pass));

        let csv = witness_csv(&pass);
        assert_eq!(csv.lines().count(), 1 + pass.witnesses.len());

        let fail = close_ext(&square_trace(0.0), &square_trace(5.0), &params).unwrap();
        assert!(!fail.close);
        let report = closeness_report(&fail);
        assert!(report.contains("close = false"));
        assert!(report.contains("counterexample_best_distance = "));
        let csv = witness_csv(&fail);
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn report_lines_are_key_value_pairs() {
        let mut r = Report::new("demo");
        r.set_num("tau", 0.8);
        r.set_bool("ok", true);
        r.set_count("n", 3);
        assert_eq!(r.render(), "check = demo\ntau = 0.8\nok = true\nn = 3\n");
    }
}
