//! Approximate trace comparison: two sampled traces are (τ,ε)-close when
//! every point of each trace, up to a time horizon and a jump budget, has a
//! point of the other trace within τ in time and within ε in value.
//!
//! Value distance is the extended Euclidean norm: action indicator
//! variables contribute nothing when both sides spike, make the distance
//! infinite when exactly one side spikes, and compare as plain zeros
//! otherwise. `close_plain` removes the indicators before comparing;
//! `close_ext` keeps them, so a missing or extra action can never be
//! compensated by a small ε.
//!
//! The main checker windows candidates with a binary search and reuses the
//! previous match as a starting guess. `close_naive` is the literal
//! quadratic definition, kept as an oracle for equivalence testing.

use thiserror::Error;

use crate::atrace::ATrace;
use crate::ext_real::ExtReal;

#[derive(Debug, Error, PartialEq)]
pub enum ClosenessError {
    #[error("parameter {name} must be finite and non-negative, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("the traces range over different variables")]
    VariableMismatch,
    #[error("the traces declare different action variables")]
    ActionVariableMismatch,
}

/// Matching tolerances and the scope of points that must be matched.
///
/// Points later than `horizon` or in a segment past `max_jumps` do not need
/// a partner, but they remain available as partners for in-scope points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosenessParams {
    /// Time slack: a partner may be up to this far away in time.
    pub tau: f64,
    /// Value slack: a partner may be up to this far away in norm.
    pub epsilon: f64,
    /// Only points at times up to this need a partner.
    pub horizon: f64,
    /// Only points in segments with index up to this need a partner.
    pub max_jumps: usize,
}

impl ClosenessParams {
    pub fn new(
        tau: f64,
        epsilon: f64,
        horizon: f64,
        max_jumps: usize,
    ) -> Result<ClosenessParams, ClosenessError> {
        for (name, value) in [("tau", tau), ("epsilon", epsilon), ("horizon", horizon)] {
            if !value.is_finite() || value < 0.0 {
                return Err(ClosenessError::InvalidParameter { name, value });
            }
        }
        Ok(ClosenessParams {
            tau,
            epsilon,
            horizon,
            max_jumps,
        })
    }
}

/// Whether action indicator variables take part in the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloseMode {
    /// Compare continuous variables only.
    Plain,
    /// Compare continuous variables and action indicators together.
    Extended,
}

/// Which trace the source points were drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Points of the first trace matched against the second.
    FirstToSecond,
    /// Points of the second trace matched against the first.
    SecondToFirst,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::FirstToSecond => write!(f, "1->2"),
            Direction::SecondToFirst => write!(f, "2->1"),
        }
    }
}

/// A point of a sampled trace, identified by time and segment index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointId {
    pub time: f64,
    pub segment: usize,
}

/// A successful match: the partner found for one in-scope source point.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub direction: Direction,
    pub source: PointId,
    pub target: PointId,
    pub distance: ExtReal,
}

/// The in-scope point hardest to match, reported when the check fails.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub direction: Direction,
    pub source: PointId,
    /// The partner minimizing the distance, if any lies within τ.
    pub best_target: Option<PointId>,
    /// The distance that partner achieves; no smaller value is possible.
    pub best_distance: ExtReal,
}

/// Outcome of one closeness check.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosenessVerdict {
    pub close: bool,
    pub mode: CloseMode,
    pub params: ClosenessParams,
    /// One match per in-scope point, populated only when the check passes.
    pub witnesses: Vec<Witness>,
    /// The hardest point overall, populated only when the check fails.
    pub counterexample: Option<Counterexample>,
    /// In-scope points per direction.
    pub sources: [usize; 2],
    /// Coarsest sampling step seen in either trace; matching decisions are
    /// only as fine as the sampling.
    pub max_sample_gap: f64,
}

/// Columns of one trace laid out for sequential scanning. Row `k` holds the
/// selected variables of point `k` in time order.
struct Flat {
    times: Vec<f64>,
    segments: Vec<usize>,
    data: Vec<f64>,
    width: usize,
}

impl Flat {
    fn build(trace: &ATrace, mode: CloseMode) -> Flat {
        let vars: Vec<String> = match mode {
            CloseMode::Plain => trace.continuous_vars().into_iter().collect(),
            CloseMode::Extended => trace.vars().iter().cloned().collect(),
        };
        let n = trace.point_count();
        let mut flat = Flat {
            times: Vec::with_capacity(n),
            segments: Vec::with_capacity(n),
            data: Vec::with_capacity(n * vars.len()),
            width: vars.len(),
        };
        for (t, seg, val) in trace.points() {
            flat.times.push(t);
            flat.segments.push(seg);
            for v in &vars {
                flat.data.push(val.get(v).unwrap().value());
            }
        }
        flat
    }

    fn len(&self) -> usize {
        self.times.len()
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.width..(k + 1) * self.width]
    }

    fn id(&self, k: usize) -> PointId {
        PointId {
            time: self.times[k],
            segment: self.segments[k],
        }
    }
}

/// Extended Euclidean norm of the difference of two rows.
fn row_distance(a: &[f64], b: &[f64]) -> ExtReal {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        match (x.is_infinite(), y.is_infinite()) {
            (true, true) => {}
            (false, false) => {
                let d = x - y;
                acc += d * d;
            }
            _ => return ExtReal::INFINITY,
        }
    }
    ExtReal::finite(acc.sqrt())
}

/// How many candidates near the previous match are probed before falling
/// back to a full window scan.
const HINT_PROBES: usize = 8;

struct DirectionScan {
    witnesses: Vec<Witness>,
    worst: Option<Counterexample>,
    sources: usize,
}

/// Matches every in-scope point of `src` against `dst`.
fn scan_direction(
    src: &Flat,
    dst: &Flat,
    direction: Direction,
    params: &ClosenessParams,
) -> DirectionScan {
    let eps = ExtReal::finite(params.epsilon);
    let mut out = DirectionScan {
        witnesses: Vec::new(),
        worst: None,
        sources: 0,
    };
    let mut hint = 0usize;
    for k in 0..src.len() {
        let t = src.times[k];
        if t > params.horizon || src.segments[k] > params.max_jumps {
            continue;
        }
        out.sources += 1;
        let row = src.row(k);
        // Candidate membership is decided by the exact predicate
        // |t - s| <= tau. The binary-searched window bounds carry one
        // rounding each, so they are padded by an ulp and serve only as a
        // superset prefilter.
        let lo = dst
            .times
            .partition_point(|&s| s < (t - params.tau).next_down());
        let hi = dst
            .times
            .partition_point(|&s| s <= (t + params.tau).next_up());
        let in_window = |c: usize| (t - dst.times[c]).abs() <= params.tau;

        let mut matched = None;
        let probe_from = hint.clamp(lo, hi);
        for c in probe_from..(probe_from + HINT_PROBES).min(hi) {
            if in_window(c) && row_distance(row, dst.row(c)) <= eps {
                matched = Some(c);
                break;
            }
        }
        let mut best: Option<(ExtReal, usize)> = None;
        if matched.is_none() {
            for c in lo..hi {
                if !in_window(c) {
                    continue;
                }
                let d = row_distance(row, dst.row(c));
                if d <= eps {
                    matched = Some(c);
                    break;
                }
                if best.as_ref().map(|(b, _)| d < *b).unwrap_or(true) {
                    best = Some((d, c));
                }
            }
        }
        match matched {
            Some(c) => {
                hint = c;
                out.witnesses.push(Witness {
                    direction,
                    source: src.id(k),
                    target: dst.id(c),
                    distance: row_distance(row, dst.row(c)),
                });
            }
            None => {
                let (best_distance, best_target) = match best {
                    Some((d, c)) => (d, Some(dst.id(c))),
                    None => (ExtReal::INFINITY, None),
                };
                let is_worse = out
                    .worst
                    .as_ref()
                    .map(|w| best_distance > w.best_distance)
                    .unwrap_or(true);
                if is_worse {
                    out.worst = Some(Counterexample {
                        direction,
                        source: src.id(k),
                        best_target,
                        best_distance,
                    });
                }
            }
        }
    }
    out
}

fn check_vars(a: &ATrace, b: &ATrace, mode: CloseMode) -> Result<(), ClosenessError> {
    match mode {
        CloseMode::Plain => {
            if a.continuous_vars() != b.continuous_vars() {
                return Err(ClosenessError::VariableMismatch);
            }
        }
        CloseMode::Extended => {
            if a.vars() != b.vars() {
                return Err(ClosenessError::VariableMismatch);
            }
            if a.action_vars() != b.action_vars() {
                return Err(ClosenessError::ActionVariableMismatch);
            }
        }
    }
    Ok(())
}

fn close_in_mode(
    a: &ATrace,
    b: &ATrace,
    params: &ClosenessParams,
    mode: CloseMode,
) -> Result<ClosenessVerdict, ClosenessError> {
    ClosenessParams::new(params.tau, params.epsilon, params.horizon, params.max_jumps)?;
    check_vars(a, b, mode)?;
    let fa = Flat::build(a, mode);
    let fb = Flat::build(b, mode);

    let first = scan_direction(&fa, &fb, Direction::FirstToSecond, params);
    let second = scan_direction(&fb, &fa, Direction::SecondToFirst, params);

    // The reported counterexample is the hardest point overall; on a tie
    // the first direction wins because only strictly worse points replace
    // the candidate.
    let counterexample = match (first.worst, second.worst) {
        (None, w) => w,
        (w, None) => w,
        (Some(w1), Some(w2)) => Some(if w2.best_distance > w1.best_distance {
            w2
        } else {
            w1
        }),
    };
    let close = counterexample.is_none();
    let mut witnesses = Vec::new();
    if close {
        witnesses.reserve(first.witnesses.len() + second.witnesses.len());
        witnesses.extend(first.witnesses);
        witnesses.extend(second.witnesses);
    }
    Ok(ClosenessVerdict {
        close,
        mode,
        params: *params,
        witnesses,
        counterexample,
        sources: [first.sources, second.sources],
        max_sample_gap: a.max_sample_gap().max(b.max_sample_gap()),
    })
}

/// (τ,ε)-closeness over the continuous variables only.
pub fn close_plain(
    a: &ATrace,
    b: &ATrace,
    params: &ClosenessParams,
) -> Result<ClosenessVerdict, ClosenessError> {
    close_in_mode(a, b, params, CloseMode::Plain)
}

/// (τ,ε)-closeness over continuous variables and action indicators.
pub fn close_ext(
    a: &ATrace,
    b: &ATrace,
    params: &ClosenessParams,
) -> Result<ClosenessVerdict, ClosenessError> {
    close_in_mode(a, b, params, CloseMode::Extended)
}

/// The definition spelled out: for every in-scope point of either trace,
/// scan all points of the other for one within τ and ε. Quadratic; used as
/// the oracle the windowed checker is tested against.
pub fn close_naive(
    a: &ATrace,
    b: &ATrace,
    params: &ClosenessParams,
    mode: CloseMode,
) -> Result<bool, ClosenessError> {
    ClosenessParams::new(params.tau, params.epsilon, params.horizon, params.max_jumps)?;
    check_vars(a, b, mode)?;
    let fa = Flat::build(a, mode);
    let fb = Flat::build(b, mode);
    let eps = ExtReal::finite(params.epsilon);
    for (src, dst) in [(&fa, &fb), (&fb, &fa)] {
        for k in 0..src.len() {
            if src.times[k] > params.horizon || src.segments[k] > params.max_jumps {
                continue;
            }
            let mut found = false;
            for c in 0..dst.len() {
                if (src.times[k] - dst.times[c]).abs() <= params.tau
                    && row_distance(src.row(k), dst.row(c)) <= eps
                {
                    found = true;
                    break;
                }
            }
            if !found {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// The smallest ε that would make the traces (τ,ε)-close under the given
/// scope, or infinity when some point has no partner of finite distance
/// within τ. `params.epsilon` is ignored.
pub fn min_epsilon(
    a: &ATrace,
    b: &ATrace,
    params: &ClosenessParams,
    mode: CloseMode,
) -> Result<ExtReal, ClosenessError> {
    ClosenessParams::new(params.tau, 0.0, params.horizon, params.max_jumps)?;
    check_vars(a, b, mode)?;
    let fa = Flat::build(a, mode);
    let fb = Flat::build(b, mode);
    let mut needed = ExtReal::ZERO;
    for (src, dst) in [(&fa, &fb), (&fb, &fa)] {
        for k in 0..src.len() {
            if src.times[k] > params.horizon || src.segments[k] > params.max_jumps {
                continue;
            }
            let t = src.times[k];
            let lo = dst
                .times
                .partition_point(|&s| s < (t - params.tau).next_down());
            let hi = dst
                .times
                .partition_point(|&s| s <= (t + params.tau).next_up());
            let mut best = ExtReal::INFINITY;
            for c in lo..hi {
                if (t - dst.times[c]).abs() > params.tau {
                    continue;
                }
                let d = row_distance(src.row(k), dst.row(c));
                if d < best {
                    best = d;
                }
            }
            if best > needed {
                needed = best;
            }
        }
    }
    Ok(needed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Trajectory;
    use crate::valuation::Valuation;
    use std::collections::BTreeSet;

    fn plain_trace(points: &[(f64, f64)]) -> ATrace {
        let traj = Trajectory::new(
            points
                .iter()
                .map(|&(t, v)| (t, [("y", v)].into_iter().collect()))
                .collect(),
        )
        .unwrap();
        ATrace::new(vec![traj], BTreeSet::new()).unwrap()
    }

    /// Two segments with an action spike closing the first.
    fn spiked_trace(spike: bool) -> ATrace {
        let mk = |t: f64, y: f64, a: f64| -> (f64, Valuation) {
            (t, [("y", y), ("act", a)].into_iter().collect())
        };
        let first = Trajectory::new(vec![
            mk(0.0, 1.0, 0.0),
            mk(1.0, 2.0, if spike { f64::INFINITY } else { 0.0 }),
        ])
        .unwrap();
        let second = Trajectory::new(vec![mk(1.0, 2.0, 0.0), mk(2.0, 3.0, 0.0)]).unwrap();
        ATrace::new(vec![first, second], ["act".to_string()].into()).unwrap()
    }

    fn params(tau: f64, eps: f64) -> ClosenessParams {
        ClosenessParams::new(tau, eps, 100.0, 100).unwrap()
    }

    #[test]
    fn a_trace_is_close_to_itself_with_zero_slack() {
        let a = plain_trace(&[(0.0, 1.0), (0.5, 2.0), (1.0, 0.5)]);
        let v = close_plain(&a, &a, &params(0.0, 0.0)).unwrap();
        assert!(v.close);
        assert_eq!(v.sources, [3, 3]);
        assert_eq!(v.witnesses.len(), 6);
        assert!(v.witnesses.iter().all(|w| w.distance == ExtReal::ZERO));
    }

    #[test]
    fn time_shift_needs_tau() {
        let a = plain_trace(&[(0.0, 1.0), (0.25, 1.0), (0.5, 1.0)]);
        let b = plain_trace(&[(0.25, 1.0), (0.5, 1.0), (0.75, 1.0)]);
        assert!(close_plain(&a, &b, &params(0.25, 0.0)).unwrap().close);
        assert!(!close_plain(&a, &b, &params(0.2, 0.0)).unwrap().close);
    }

    #[test]
    fn counterexample_reports_the_hardest_point() {
        let a = plain_trace(&[(0.0, 0.0), (1.0, 5.0), (2.0, 0.0)]);
        let b = plain_trace(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]);
        let v = close_plain(&a, &b, &params(0.5, 1.0)).unwrap();
        assert!(!v.close);
        assert!(v.witnesses.is_empty());
        let ce = v.counterexample.unwrap();
        assert_eq!(ce.direction, Direction::FirstToSecond);
        assert_eq!(ce.source.time, 1.0);
        assert_eq!(ce.best_distance, ExtReal::finite(4.0));
        assert_eq!(ce.best_target.unwrap().time, 1.0);
    }

    #[test]
    fn out_of_scope_points_need_no_partner_but_still_serve() {
        let a = plain_trace(&[(0.0, 1.0), (1.0, 1.0), (2.0, 9.0)]);
        let b = plain_trace(&[(0.0, 1.0), (1.0, 1.0)]);
        // The wild point at t = 2 is beyond the horizon, so it needs no
        // partner and the traces count as close.
        let p = ClosenessParams::new(0.0, 0.0, 1.5, 10).unwrap();
        let v = close_plain(&a, &b, &p).unwrap();
        assert!(v.close);
        assert_eq!(v.sources, [2, 2]);

        // With the horizon extended it must be matched and fails.
        let p = ClosenessParams::new(0.0, 0.0, 2.5, 10).unwrap();
        assert!(!close_plain(&a, &b, &p).unwrap().close);
    }

    #[test]
    fn segment_budget_scopes_sources() {
        let a = spiked_trace(true);
        let b = spiked_trace(true);
        // Restricting to segment 0 checks only the first segment's points.
        let p = ClosenessParams {
            tau: 0.0,
            epsilon: 0.0,
            horizon: 100.0,
            max_jumps: 0,
        };
        let v = close_ext(&a, &b, &p).unwrap();
        assert!(v.close);
        assert_eq!(v.sources, [2, 2]);
    }

    #[test]
    fn matched_spikes_cost_nothing_lone_spikes_cost_everything() {
        let spiked = spiked_trace(true);
        let plain = spiked_trace(false);

        // Spike against spike: the indicator contributes zero.
        let v = close_ext(&spiked, &spiked, &params(0.0, 0.0)).unwrap();
        assert!(v.close);

        // Spike against no spike: infinite distance in extended mode, no
        // matter how generous epsilon is.
        let v = close_ext(&spiked, &plain, &params(0.0, 1e6)).unwrap();
        assert!(!v.close);
        let ce = v.counterexample.unwrap();
        assert_eq!(ce.source.time, 1.0);
        assert_eq!(ce.source.segment, 0);
        assert!(ce.best_distance.is_infinite());

        // Plain mode ignores the indicator entirely.
        let v = close_plain(&spiked, &plain, &params(0.0, 0.0)).unwrap();
        assert!(v.close);

        assert_eq!(
            min_epsilon(&spiked, &plain, &params(0.5, 0.0), CloseMode::Extended).unwrap(),
            ExtReal::INFINITY
        );
        assert_eq!(
            min_epsilon(&spiked, &plain, &params(0.5, 0.0), CloseMode::Plain).unwrap(),
            ExtReal::ZERO
        );
    }

    #[test]
    fn naive_oracle_agrees_on_the_basics() {
        let a = plain_trace(&[(0.0, 1.0), (0.5, 2.0), (1.0, 3.0)]);
        let b = plain_trace(&[(0.25, 1.4), (0.75, 2.6)]);
        for (tau, eps) in [(0.25, 0.5), (0.25, 0.3), (0.1, 0.5), (0.0, 5.0)] {
            let p = params(tau, eps);
            let fast = close_plain(&a, &b, &p).unwrap().close;
            let slow = close_naive(&a, &b, &p, CloseMode::Plain).unwrap();
            assert_eq!(fast, slow, "tau={tau} eps={eps}");
        }
    }

    #[test]
    fn min_epsilon_is_the_exact_threshold() {
        let a = plain_trace(&[(0.0, 0.0), (1.0, 5.0), (2.0, 0.0)]);
        let b = plain_trace(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]);
        let p = params(0.5, 0.0);
        let needed = min_epsilon(&a, &b, &p, CloseMode::Plain).unwrap();
        assert_eq!(needed, ExtReal::finite(4.0));
        let at = |eps: f64| close_plain(&a, &b, &params(0.5, eps)).unwrap().close;
        assert!(at(4.0));
        assert!(!at(3.9999999));
    }

    #[test]
    fn variable_mismatch_is_an_error() {
        let a = plain_trace(&[(0.0, 1.0)]);
        let traj = Trajectory::new(vec![(0.0, [("z", 1.0)].into_iter().collect())]).unwrap();
        let b = ATrace::new(vec![traj], BTreeSet::new()).unwrap();
        assert_eq!(
            close_plain(&a, &b, &params(0.1, 0.1)).unwrap_err(),
            ClosenessError::VariableMismatch
        );
    }

    #[test]
    fn parameters_are_validated() {
        let a = plain_trace(&[(0.0, 1.0)]);
        let bad = ClosenessParams {
            tau: -1.0,
            epsilon: 0.0,
            horizon: 1.0,
            max_jumps: 0,
        };
        assert!(matches!(
            close_plain(&a, &a, &bad).unwrap_err(),
            ClosenessError::InvalidParameter { name: "tau", .. }
        ));
    }
}
