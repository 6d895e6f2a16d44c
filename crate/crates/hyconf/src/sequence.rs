//! Hybrid sequences: alternating runs of trajectories and named actions,
//! plus their restriction to an external interface and the split into
//! input and output halves used by conformance checking.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::atrace::{ATrace, ATraceError};
use crate::ext_real::ExtReal;
use crate::trajectory::{Trajectory, TrajectoryError};
use crate::valuation::Valuation;

#[derive(Debug, Error, PartialEq)]
pub enum SequenceError {
    #[error("a hybrid sequence needs at least one trajectory")]
    Empty,
    #[error("{trajectories} trajectories require {} actions, found {actions}", trajectories - 1)]
    LengthMismatch { trajectories: usize, actions: usize },
    #[error("trajectory {index} carries a different variable set")]
    InconsistentVariables { index: usize },
    #[error("trajectory {index} starts at {found} instead of {expected}")]
    MisalignedSegments {
        index: usize,
        expected: f64,
        found: f64,
    },
    #[error("sequence starts at negative time {0}")]
    NegativeStart(f64),
    #[error(
        "dropping action `{action}` at time {time} leaves a discontinuity: {detail}"
    )]
    DiscontinuousDrop {
        action: String,
        time: f64,
        detail: String,
    },
    #[error("action `{0}` is not part of the given action set")]
    UnknownAction(String),
    #[error("segment {segment} ends in a jump without a closing action")]
    BoundaryWithoutAction { segment: usize },
    #[error("segment {segment} closes with more than one action")]
    AmbiguousClosingAction { segment: usize },
    #[error("the final segment closes with action `{0}`, which nothing follows")]
    TrailingAction(String),
    #[error("sequence variables do not match the external variables of the interface")]
    VariablesOutsideInterface,
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    ATrace(#[from] ATraceError),
}

/// An alternating run `traj_0, act_1, traj_1, ..., act_n, traj_n` over a
/// common variable set. Consecutive trajectories abut exactly in time;
/// action `act_j` fires at the closing instant of `traj_{j-1}`. Zero-length
/// trajectories are allowed, so several actions may share one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridSequence {
    trajectories: Vec<Trajectory>,
    actions: Vec<String>,
}

impl HybridSequence {
    pub fn new(
        trajectories: Vec<Trajectory>,
        actions: Vec<String>,
    ) -> Result<HybridSequence, SequenceError> {
        if trajectories.is_empty() {
            return Err(SequenceError::Empty);
        }
        if actions.len() != trajectories.len() - 1 {
            return Err(SequenceError::LengthMismatch {
                trajectories: trajectories.len(),
                actions: actions.len(),
            });
        }
        if trajectories[0].start_time() < 0.0 {
            return Err(SequenceError::NegativeStart(trajectories[0].start_time()));
        }
        let vars = trajectories[0].vars().clone();
        let mut end = trajectories[0].end_time();
        for (index, traj) in trajectories.iter().enumerate().skip(1) {
            if traj.vars() != &vars {
                return Err(SequenceError::InconsistentVariables { index });
            }
            if traj.start_time() != end {
                return Err(SequenceError::MisalignedSegments {
                    index,
                    expected: end,
                    found: traj.start_time(),
                });
            }
            end = traj.end_time();
        }
        Ok(HybridSequence {
            trajectories,
            actions,
        })
    }

    /// A sequence consisting of a single trajectory and no actions.
    pub fn from_trajectory(traj: Trajectory) -> Result<HybridSequence, SequenceError> {
        HybridSequence::new(vec![traj], Vec::new())
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn vars(&self) -> &BTreeSet<String> {
        self.trajectories[0].vars()
    }

    pub fn start_time(&self) -> f64 {
        self.trajectories[0].start_time()
    }

    pub fn end_time(&self) -> f64 {
        self.trajectories.last().unwrap().end_time()
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// Actions with their firing instants, in order.
    pub fn action_events(&self) -> Vec<(f64, &str)> {
        self.actions
            .iter()
            .enumerate()
            .map(|(i, a)| (self.trajectories[i].end_time(), a.as_str()))
            .collect()
    }

    /// Keeps only the listed variables in every trajectory.
    pub fn restrict(&self, vars: &BTreeSet<String>) -> Result<HybridSequence, SequenceError> {
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| t.restrict(vars))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(HybridSequence {
            trajectories,
            actions: self.actions.clone(),
        })
    }

    /// Drops every action not in `keep`, gluing the trajectories around it.
    /// The glue requires the remaining variables to be continuous across the
    /// dropped action within `tol`; a jump there cannot be represented once
    /// the action is gone.
    pub fn filter_actions(
        &self,
        keep: &BTreeSet<String>,
        tol: f64,
    ) -> Result<HybridSequence, SequenceError> {
        let mut trajectories: Vec<Trajectory> = vec![self.trajectories[0].clone()];
        let mut actions = Vec::new();
        for (i, action) in self.actions.iter().enumerate() {
            let next = &self.trajectories[i + 1];
            if keep.contains(action) {
                actions.push(action.clone());
                trajectories.push(next.clone());
            } else {
                let open = trajectories.pop().unwrap();
                let time = open.end_time();
                let glued = open.concat(next, tol).map_err(|e| {
                    SequenceError::DiscontinuousDrop {
                        action: action.clone(),
                        time,
                        detail: e.to_string(),
                    }
                })?;
                trajectories.push(glued);
            }
        }
        Ok(HybridSequence {
            trajectories,
            actions,
        })
    }

    /// Renders the sequence as a sampled trace with one indicator column per
    /// action name in `universe`: zero everywhere, infinity at the closing
    /// sample of the segment whose end fires that action. Every action of
    /// the sequence must be in `universe`.
    pub fn to_atrace(&self, universe: &BTreeSet<String>) -> Result<ATrace, SequenceError> {
        for a in &self.actions {
            if !universe.contains(a) {
                return Err(SequenceError::UnknownAction(a.clone()));
            }
        }
        let mut segments = Vec::with_capacity(self.trajectories.len());
        for (j, traj) in self.trajectories.iter().enumerate() {
            let closing = self.actions.get(j);
            let end = traj.end_time();
            let points = traj
                .iter()
                .map(|(t, val)| {
                    let mut v: Valuation = val.clone();
                    for name in universe {
                        let spike = t == end && closing.map(|a| a == name).unwrap_or(false);
                        v.insert(name.clone(), if spike { f64::INFINITY } else { 0.0 });
                    }
                    (t, v)
                })
                .collect();
            segments.push(Trajectory::new(points)?);
        }
        Ok(ATrace::new(segments, universe.clone())?)
    }

    /// Reads a sampled trace back as an alternating sequence. The indicator
    /// columns name the action closing each segment and are dropped from
    /// the values. Every non-final segment must close with exactly one
    /// action, the final segment with none.
    pub fn from_atrace(trace: &ATrace) -> Result<HybridSequence, SequenceError> {
        let last = trace.segments().len() - 1;
        let mut actions = Vec::with_capacity(last);
        for (j, segment) in trace.segments().iter().enumerate() {
            let closing: Vec<&String> = trace
                .action_vars()
                .iter()
                .filter(|a| segment.last_val().get(a).is_some_and(ExtReal::is_infinite))
                .collect();
            match (j == last, closing.len()) {
                (false, 1) => actions.push(closing[0].clone()),
                (false, 0) => return Err(SequenceError::BoundaryWithoutAction { segment: j }),
                (false, _) => return Err(SequenceError::AmbiguousClosingAction { segment: j }),
                (true, 0) => {}
                (true, _) => return Err(SequenceError::TrailingAction(closing[0].clone())),
            }
        }
        let continuous = trace.continuous_vars();
        let trajectories = trace
            .segments()
            .iter()
            .map(|s| s.restrict(&continuous))
            .collect::<Result<Vec<_>, _>>()?;
        HybridSequence::new(trajectories, actions)
    }
}

/// The externally visible interface of a model: input and output variables
/// and actions. Internal names never appear here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalSignature {
    pub input_vars: BTreeSet<String>,
    pub output_vars: BTreeSet<String>,
    pub input_actions: BTreeSet<String>,
    pub output_actions: BTreeSet<String>,
}

impl ExternalSignature {
    pub fn external_vars(&self) -> BTreeSet<String> {
        self.input_vars.union(&self.output_vars).cloned().collect()
    }

    pub fn external_actions(&self) -> BTreeSet<String> {
        self.input_actions
            .union(&self.output_actions)
            .cloned()
            .collect()
    }

    /// Two interfaces can be related by conformance when the variable
    /// classes agree and the external action names agree. The input/output
    /// classification of the actions themselves may differ between the two.
    pub fn conformance_compatible(&self, other: &ExternalSignature) -> bool {
        self.input_vars == other.input_vars
            && self.output_vars == other.output_vars
            && self.external_actions() == other.external_actions()
    }
}

/// An externally observable behavior: a hybrid sequence over exactly the
/// external variables, with every action drawn from the external actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub sig: ExternalSignature,
    pub seq: HybridSequence,
}

impl Trace {
    pub fn new(sig: ExternalSignature, seq: HybridSequence) -> Result<Trace, SequenceError> {
        if seq.vars() != &sig.external_vars() {
            return Err(SequenceError::VariablesOutsideInterface);
        }
        let ext = sig.external_actions();
        for a in seq.actions() {
            if !ext.contains(a) {
                return Err(SequenceError::UnknownAction(a.clone()));
            }
        }
        Ok(Trace { sig, seq })
    }

    /// Splits the behavior into its input half (input variables and input
    /// actions) and output half (output variables and output actions).
    /// Variables are restricted before actions are dropped, so only jumps in
    /// the surviving variables can make the split fail.
    pub fn split(&self, tol: f64) -> Result<SolutionPair, SequenceError> {
        let u = self
            .seq
            .restrict(&self.sig.input_vars)?
            .filter_actions(&self.sig.input_actions, tol)?;
        let y = self
            .seq
            .restrict(&self.sig.output_vars)?
            .filter_actions(&self.sig.output_actions, tol)?;
        Ok(SolutionPair { u, y })
    }

    /// The full behavior as a sampled trace with one indicator column per
    /// external action, shared across all traces over this interface.
    pub fn to_atrace(&self) -> Result<ATrace, SequenceError> {
        self.seq.to_atrace(&self.sig.external_actions())
    }
}

/// The stimulus/response decomposition of one behavior: `u` ranges over the
/// input variables and input actions, `y` over the output variables and
/// output actions.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPair {
    pub u: HybridSequence,
    pub y: HybridSequence,
}
