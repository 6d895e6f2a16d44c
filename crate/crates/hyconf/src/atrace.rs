//! Traces over hybrid time domains.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ext_real::ExtReal;
use crate::trajectory::{Trajectory, TrajectoryError};
use crate::valuation::Valuation;

#[derive(Debug, Error, PartialEq)]
pub enum ATraceError {
    #[error("a hybrid time domain needs at least one boundary time")]
    NoBoundaries,
    #[error("hybrid time domain must start at a non-negative time, got {0}")]
    NegativeStart(f64),
    #[error("hybrid time domain boundaries must be non-decreasing (boundary {index} at {time})")]
    DecreasingBoundary { index: usize, time: f64 },
    #[error("a trace needs at least one segment")]
    NoSegments,
    #[error("segment {index} ranges over a different variable set")]
    InconsistentVariables { index: usize },
    #[error("segment {index} starts at {start} but the previous segment ends at {end}")]
    MisalignedSegments { index: usize, start: f64, end: f64 },
    #[error("action variable `{0}` is not a variable of the trace")]
    UnknownActionVariable(String),
    #[error(
        "action variable `{action}` takes the value {value} in segment {segment}; \
         only 0 and inf are allowed"
    )]
    InvalidActionValue {
        action: String,
        segment: usize,
        value: f64,
    },
    #[error(
        "action variable `{action}` is infinite away from the close of segment {segment} \
         (t = {time})"
    )]
    SpikeNotAtClose {
        action: String,
        segment: usize,
        time: f64,
    },
    #[error("more than one action variable is infinite at the close of segment {segment}")]
    MultipleSpikes { segment: usize },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Boundary times `t_0 <= t_1 <= ... <= t_J` of a hybrid time domain with
/// `J` segments; segment `j` spans `[t_j, t_{j+1}]` at jump index `j`.
///
/// Domains produced from executions start at zero. Retimed traces may start
/// later, which is why only non-negativity of `t_0` is required.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTimeDomain {
    boundaries: Vec<f64>,
}

impl HybridTimeDomain {
    pub fn new(boundaries: Vec<f64>) -> Result<HybridTimeDomain, ATraceError> {
        if boundaries.is_empty() {
            return Err(ATraceError::NoBoundaries);
        }
        if boundaries[0] < 0.0 {
            return Err(ATraceError::NegativeStart(boundaries[0]));
        }
        for i in 1..boundaries.len() {
            if boundaries[i] < boundaries[i - 1] {
                return Err(ATraceError::DecreasingBoundary {
                    index: i,
                    time: boundaries[i],
                });
            }
        }
        Ok(HybridTimeDomain { boundaries })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Number of segments (one less than the number of boundaries).
    pub fn segments(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn end(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    /// Interior boundary times, i.e. the instants at which jumps happen.
    pub fn jump_times(&self) -> &[f64] {
        &self.boundaries[1..self.boundaries.len() - 1]
    }
}

/// A sampled trace over a hybrid time domain.
///
/// The trace holds one trajectory per segment; segment `j` lives exactly on
/// `[t_j, t_{j+1}]`, so consecutive segments share their boundary time while
/// remaining distinct hybrid-time points `(t_{j+1}, j)` and `(t_{j+1}, j+1)`.
/// A subset of the variables are action indicators: each takes the value `0`
/// everywhere except at the single point closing a segment, where it may be
/// infinite, and at most one indicator is infinite per point.
#[derive(Debug, Clone, PartialEq)]
pub struct ATrace {
    domain: HybridTimeDomain,
    segments: Vec<Trajectory>,
    action_vars: BTreeSet<String>,
}

impl ATrace {
    /// Builds a trace from abutting segments, deriving the domain from their
    /// start and end times.
    pub fn new(
        segments: Vec<Trajectory>,
        action_vars: BTreeSet<String>,
    ) -> Result<ATrace, ATraceError> {
        if segments.is_empty() {
            return Err(ATraceError::NoSegments);
        }
        let vars = segments[0].vars().clone();
        let mut boundaries = Vec::with_capacity(segments.len() + 1);
        boundaries.push(segments[0].start_time());
        for (index, seg) in segments.iter().enumerate() {
            if *seg.vars() != vars {
                return Err(ATraceError::InconsistentVariables { index });
            }
            if index > 0 {
                let prev_end = boundaries[index];
                if seg.start_time() != prev_end {
                    return Err(ATraceError::MisalignedSegments {
                        index,
                        start: seg.start_time(),
                        end: prev_end,
                    });
                }
            }
            boundaries.push(seg.end_time());
        }
        for a in &action_vars {
            if !vars.contains(a) {
                return Err(ATraceError::UnknownActionVariable(a.clone()));
            }
        }
        let trace = ATrace {
            domain: HybridTimeDomain::new(boundaries)?,
            segments,
            action_vars,
        };
        trace.check_action_vars()?;
        Ok(trace)
    }

    fn check_action_vars(&self) -> Result<(), ATraceError> {
        if self.action_vars.is_empty() {
            return Ok(());
        }
        for (segment, seg) in self.segments.iter().enumerate() {
            let close = seg.end_time();
            for (t, val) in seg.iter() {
                let mut spikes = 0usize;
                for a in &self.action_vars {
                    let v = val.get(a).expect("validated variable set");
                    if v.is_infinite() {
                        if t != close {
                            return Err(ATraceError::SpikeNotAtClose {
                                action: a.clone(),
                                segment,
                                time: t,
                            });
                        }
                        spikes += 1;
                    } else if v.value() != 0.0 {
                        return Err(ATraceError::InvalidActionValue {
                            action: a.clone(),
                            segment,
                            value: v.value(),
                        });
                    }
                }
                if spikes > 1 {
                    return Err(ATraceError::MultipleSpikes { segment });
                }
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> &HybridTimeDomain {
        &self.domain
    }

    pub fn segments(&self) -> &[Trajectory] {
        &self.segments
    }

    pub fn segment(&self, j: usize) -> &Trajectory {
        &self.segments[j]
    }

    /// All variables, action indicators included.
    pub fn vars(&self) -> &BTreeSet<String> {
        self.segments[0].vars()
    }

    pub fn action_vars(&self) -> &BTreeSet<String> {
        &self.action_vars
    }

    pub fn continuous_vars(&self) -> BTreeSet<String> {
        self.vars().difference(&self.action_vars).cloned().collect()
    }

    /// Total number of sample points across all segments.
    pub fn point_count(&self) -> usize {
        self.segments.iter().map(Trajectory::len).sum()
    }

    /// Iterates all hybrid-time sample points `(t, j, value)` in order of
    /// ascending time, jump index breaking ties at segment boundaries.
    pub fn points(&self) -> impl Iterator<Item = (f64, usize, &Valuation)> {
        self.segments
            .iter()
            .enumerate()
            .flat_map(|(j, seg)| seg.iter().map(move |(t, v)| (t, j, v)))
    }

    /// Largest gap between consecutive sample times within any segment.
    pub fn max_sample_gap(&self) -> f64 {
        self.segments
            .iter()
            .map(Trajectory::max_sample_gap)
            .fold(0.0, f64::max)
    }

    /// Action name whose indicator spikes at the close of segment `j`, if any.
    pub fn closing_action(&self, j: usize) -> Option<&str> {
        let val = self.segments[j].last_val();
        self.action_vars
            .iter()
            .find(|a| val.get(a).is_some_and(ExtReal::is_infinite))
            .map(String::as_str)
    }

    /// Keeps the given variables; indicators among them stay indicators. The
    /// domain is unchanged, so restriction never drops sample points.
    pub fn restrict(&self, vars: &BTreeSet<String>) -> Result<ATrace, ATraceError> {
        let segments = self
            .segments
            .iter()
            .map(|seg| seg.restrict(vars))
            .collect::<Result<Vec<_>, _>>()?;
        let action_vars = self.action_vars.intersection(vars).cloned().collect();
        ATrace::new(segments, action_vars)
    }

    /// Drops all action indicator variables.
    pub fn strip_actions(&self) -> ATrace {
        let keep = self.continuous_vars();
        self.restrict(&keep)
            .expect("continuous variables are a subset of the trace variables")
    }

    /// Keeps the action indicator columns but silences them: every indicator
    /// reads zero everywhere. The result is the trace of a system with the
    /// same continuous behavior that never fires an action.
    pub fn zero_actions(&self) -> ATrace {
        let segments = self
            .segments
            .iter()
            .map(|seg| {
                let points = seg
                    .iter()
                    .map(|(t, val)| {
                        let mut v = Valuation::new();
                        for (name, value) in val.iter() {
                            if self.action_vars.contains(name) {
                                v.insert(name, ExtReal::ZERO);
                            } else {
                                v.insert(name, value);
                            }
                        }
                        (t, v)
                    })
                    .collect();
                Trajectory::new(points).expect("sample times unchanged")
            })
            .collect();
        ATrace::new(segments, self.action_vars.clone()).expect("structure unchanged")
    }

    /// Moves the whole domain by `dt`; the result must not start before zero.
    pub fn shift_time(&self, dt: f64) -> Result<ATrace, ATraceError> {
        let segments = self
            .segments
            .iter()
            .map(|seg| seg.shift(dt))
            .collect::<Result<Vec<_>, _>>()?;
        ATrace::new(segments, self.action_vars.clone())
    }

    /// Adds `delta` to every continuous variable at every sample; action
    /// indicators are left untouched.
    pub fn offset_values(&self, delta: f64) -> ATrace {
        let segments = self
            .segments
            .iter()
            .map(|seg| {
                let points = seg
                    .iter()
                    .map(|(t, val)| {
                        let mut v = Valuation::new();
                        for (name, value) in val.iter() {
                            if self.action_vars.contains(name) || value.is_infinite() {
                                v.insert(name, value);
                            } else {
                                v.insert(name, ExtReal::finite(value.value() + delta));
                            }
                        }
                        (t, v)
                    })
                    .collect();
                Trajectory::new(points).expect("sample times unchanged")
            })
            .collect();
        ATrace::new(segments, self.action_vars.clone()).expect("structure unchanged")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn val(x: f64, spike: bool) -> Valuation {
        let mut v = Valuation::new();
        v.insert("x", x);
        v.insert("a", if spike { ExtReal::INFINITY } else { ExtReal::ZERO });
        v
    }

    fn seg(points: &[(f64, f64)], spike_at_close: bool) -> Trajectory {
        let last = points.len() - 1;
        Trajectory::new(
            points
                .iter()
                .enumerate()
                .map(|(i, &(t, x))| (t, val(x, spike_at_close && i == last)))
                .collect(),
        )
        .unwrap()
    }

    fn actions() -> BTreeSet<String> {
        ["a".to_string()].into()
    }

    #[test]
    fn builds_domain_from_segments() {
        let tr = ATrace::new(
            vec![
                seg(&[(0.0, 1.0), (1.0, 2.0)], true),
                seg(&[(1.0, 2.0), (3.0, 0.0)], false),
            ],
            actions(),
        )
        .unwrap();
        assert_eq!(tr.domain().boundaries(), &[0.0, 1.0, 3.0]);
        assert_eq!(tr.domain().segments(), 2);
        assert_eq!(tr.domain().jump_times(), &[1.0]);
        assert_eq!(tr.closing_action(0), Some("a"));
        assert_eq!(tr.closing_action(1), None);
    }

    #[test]
    fn boundary_points_stay_distinct() {
        let tr = ATrace::new(
            vec![
                seg(&[(0.0, 1.0), (1.0, 2.0)], true),
                seg(&[(1.0, 5.0), (2.0, 6.0)], false),
            ],
            actions(),
        )
        .unwrap();
        let pts: Vec<(f64, usize)> = tr.points().map(|(t, j, _)| (t, j)).collect();
        assert_eq!(pts, vec![(0.0, 0), (1.0, 0), (1.0, 1), (2.0, 1)]);
    }

    #[test]
    fn rejects_gaps_and_bad_spikes() {
        let err = ATrace::new(
            vec![
                seg(&[(0.0, 1.0), (1.0, 2.0)], false),
                seg(&[(1.5, 2.0), (2.0, 0.0)], false),
            ],
            actions(),
        )
        .unwrap_err();
        assert!(matches!(err, ATraceError::MisalignedSegments { index: 1, .. }));

        // Spike in the interior of a segment.
        let bad = Trajectory::new(vec![
            (0.0, val(0.0, false)),
            (1.0, val(1.0, true)),
            (2.0, val(2.0, false)),
        ])
        .unwrap();
        let err = ATrace::new(vec![bad], actions()).unwrap_err();
        assert!(matches!(err, ATraceError::SpikeNotAtClose { .. }));

        // Action indicator with a value other than 0/inf.
        let mut v = Valuation::new();
        v.insert("x", 0.0);
        v.insert("a", 0.5);
        let bad = Trajectory::new(vec![(0.0, v)]).unwrap();
        let err = ATrace::new(vec![bad], actions()).unwrap_err();
        assert!(matches!(err, ATraceError::InvalidActionValue { .. }));
    }

    #[test]
    fn rejects_two_spikes_at_one_point() {
        let mut v0 = Valuation::new();
        v0.insert("a", ExtReal::ZERO);
        v0.insert("b", ExtReal::ZERO);
        let mut v1 = Valuation::new();
        v1.insert("a", ExtReal::INFINITY);
        v1.insert("b", ExtReal::INFINITY);
        let tr = Trajectory::new(vec![(0.0, v0), (1.0, v1)]).unwrap();
        let err = ATrace::new(vec![tr], ["a".to_string(), "b".to_string()].into()).unwrap_err();
        assert!(matches!(err, ATraceError::MultipleSpikes { segment: 0 }));
    }

    #[test]
    fn strip_and_zero_actions() {
        let tr = ATrace::new(
            vec![
                seg(&[(0.0, 1.0), (1.0, 2.0)], true),
                seg(&[(1.0, 2.0), (2.0, 0.0)], false),
            ],
            actions(),
        )
        .unwrap();

        let stripped = tr.strip_actions();
        assert!(stripped.action_vars().is_empty());
        assert_eq!(stripped.vars().len(), 1);
        assert_eq!(stripped.domain(), tr.domain());

        let zeroed = tr.zero_actions();
        assert_eq!(zeroed.vars(), tr.vars());
        assert_eq!(zeroed.closing_action(0), None);
        let spikes = zeroed
            .points()
            .filter(|(_, _, v)| v.get("a").unwrap().is_infinite())
            .count();
        assert_eq!(spikes, 0);
    }

    #[test]
    fn shift_and_offset_build_retimed_twins() {
        let tr = ATrace::new(
            vec![
                seg(&[(0.0, 5.0), (2.0, 18.0)], true),
                seg(&[(2.0, 18.0), (4.0, 2.0)], false),
            ],
            actions(),
        )
        .unwrap();
        let moved = tr.shift_time(0.5).unwrap().offset_values(-1.0);
        assert_eq!(moved.domain().boundaries(), &[0.5, 2.5, 4.5]);
        assert_eq!(
            moved.segment(0).first_val().get("x"),
            Some(ExtReal::finite(4.0))
        );
        // The spike follows the retiming and stays a spike.
        assert_eq!(moved.closing_action(0), Some("a"));
        assert!(tr.shift_time(-1.0).is_err());
    }
}
