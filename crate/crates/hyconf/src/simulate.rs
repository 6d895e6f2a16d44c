//! Deterministic fixed-step simulation of hybrid I/O automata.
//!
//! Flows are integrated with classic fourth-order Runge-Kutta steps.
//! Guarded transitions are urgent: a rule fires the instant its guard
//! becomes true, localized by bisecting the step that crossed the boundary.
//! Constant-true guards are exempt from urgency (they would fire forever
//! at time zero) and fire only when the stimulus schedules their action.
//! Input-action rules can likewise be exempted, see [`Urgency`].
//!
//! Two standard fixed-step caveats apply: a guard that becomes true and
//! false again strictly inside one step goes undetected, and invariant
//! violations are localized only to within the event tolerance. Identical
//! model, stimulus, and configuration reproduce the execution bit for bit.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::automaton::{Hioa, ModelError, State};
use crate::expr::{BoundExpr, BoundPred, EvalError, Predicate};
use crate::sequence::{HybridSequence, SequenceError, SolutionPair, Trace};
use crate::trajectory::{Trajectory, TrajectoryError};
use crate::valuation::Valuation;
use crate::DELTA_MERGE;

/// Default integration step width.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Default width below which an event crossing is considered localized.
pub const DEFAULT_EVENT_TOLERANCE: f64 = 1e-9;

/// Which guarded rules fire on their own the moment their guard holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Urgency {
    /// Every rule with a non-trivial guard is urgent, input actions
    /// included. This closes the loop for models that listen to their own
    /// environment.
    #[default]
    Urgent,
    /// Only output and internal rules are urgent. Input actions occur
    /// exactly when the stimulus schedule says so, which keeps the input
    /// half of the behavior identical across model variants.
    ScheduledInputs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Integration step width.
    pub step: f64,
    /// Event localization width.
    pub event_tolerance: f64,
    pub urgency: Urgency,
    /// Consecutive zero-duration steps tolerated before the run is declared
    /// stalled.
    pub max_stalled_steps: usize,
}

impl Default for SimConfig {
    fn default() -> SimConfig {
        SimConfig {
            step: DEFAULT_STEP,
            event_tolerance: DEFAULT_EVENT_TOLERANCE,
            urgency: Urgency::Urgent,
            max_stalled_steps: 32,
        }
    }
}

/// External drive for one run: how long to simulate, when to offer input
/// actions, and the input signals as a sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    pub horizon: f64,
    /// Input actions to offer, sorted by time within `[0, horizon]`.
    pub schedule: Vec<(f64, String)>,
    /// Sampled input signals covering `[0, horizon]`, over exactly the input
    /// variables. Required whenever the model has input variables.
    pub signals: Option<Trajectory>,
}

impl Stimulus {
    /// A stimulus that schedules nothing and drives no signals.
    pub fn quiet(horizon: f64) -> Stimulus {
        Stimulus {
            horizon,
            schedule: Vec::new(),
            signals: None,
        }
    }

    pub fn validate(&self, model: &Hioa) -> Result<(), SimError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::NonPositiveHorizon(self.horizon));
        }
        let mut prev = 0.0;
        for (index, (t, action)) in self.schedule.iter().enumerate() {
            if !t.is_finite() || *t < 0.0 || *t > self.horizon {
                return Err(SimError::ScheduleOutOfRange {
                    time: *t,
                    horizon: self.horizon,
                });
            }
            if *t < prev {
                return Err(SimError::ScheduleUnsorted { index });
            }
            prev = *t;
            if !model.input_actions.contains(action) {
                return Err(SimError::ScheduleNotInput {
                    action: action.clone(),
                });
            }
        }
        match &self.signals {
            None => {
                if !model.input_vars.is_empty() {
                    return Err(SimError::SignalsMissing);
                }
            }
            Some(traj) => {
                if traj.vars() != &model.input_vars {
                    return Err(SimError::SignalVarsMismatch);
                }
                if traj.start_time() > 0.0 || traj.end_time() < self.horizon {
                    return Err(SimError::SignalDomainTooShort {
                        needed: self.horizon,
                        start: traj.start_time(),
                        end: traj.end_time(),
                    });
                }
                for (_, val) in traj.iter() {
                    for (name, v) in val.iter() {
                        if !v.is_finite() {
                            return Err(SimError::SignalNotFinite {
                                variable: name.to_string(),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// The input behavior this stimulus describes, as a hybrid sequence over
    /// `input_vars`: the scheduled actions at their instants, between them
    /// the signals sampled at their own knots. Matches the input half of any
    /// execution the stimulus drives, up to interpolation rounding.
    pub fn input_half(&self, input_vars: &BTreeSet<String>) -> Result<HybridSequence, SimError> {
        let signals = match &self.signals {
            None if input_vars.is_empty() => None,
            None => return Err(SimError::SignalsMissing),
            Some(sig) => {
                if sig.vars() != input_vars {
                    return Err(SimError::SignalVarsMismatch);
                }
                Some(sig)
            }
        };
        let mut boundaries = vec![0.0];
        boundaries.extend(self.schedule.iter().map(|(t, _)| *t));
        boundaries.push(self.horizon);
        let mut pieces = Vec::with_capacity(boundaries.len() - 1);
        for w in boundaries.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mut points = Vec::new();
            match signals {
                Some(sig) => {
                    points.push((lo, sig.value_at(lo)?));
                    for &t in sig.times() {
                        if t > lo && t < hi {
                            points.push((t, sig.value_at(t)?));
                        }
                    }
                    if hi > lo {
                        points.push((hi, sig.value_at(hi)?));
                    }
                }
                None => {
                    points.push((lo, Valuation::new()));
                    if hi > lo {
                        points.push((hi, Valuation::new()));
                    }
                }
            }
            pieces.push(Trajectory::new(points)?);
        }
        let actions = self.schedule.iter().map(|(_, a)| a.clone()).collect();
        Ok(HybridSequence::new(pieces, actions)?)
    }
}

/// A completed run: trajectories over the full variable set (internal,
/// input, and output), the actions between them, and the location each
/// trajectory evolved in.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub trajectories: Vec<Trajectory>,
    pub actions: Vec<String>,
    pub locations: Vec<String>,
}

impl Execution {
    pub fn duration(&self) -> f64 {
        self.trajectories.last().map_or(0.0, |t| t.end_time())
    }

    /// The discrete state at the end of the run.
    pub fn final_state(&self, model: &Hioa) -> Result<State, SimError> {
        let last = self.trajectories.last().ok_or(SimError::EmptyExecution)?;
        let values = last.last_val().restrict(&model.internal_vars)?;
        Ok(State::new(self.locations.last().unwrap().clone(), values))
    }

    /// The run as one hybrid sequence over the full variable set.
    pub fn to_sequence(&self) -> Result<HybridSequence, SequenceError> {
        HybridSequence::new(self.trajectories.clone(), self.actions.clone())
    }

    /// The externally observable part of the run: external variables only,
    /// internal actions glued away.
    pub fn trace(&self, model: &Hioa) -> Result<Trace, SequenceError> {
        let sig = model.signature();
        let seq = self
            .to_sequence()?
            .restrict(&sig.external_vars())?
            .filter_actions(&sig.external_actions(), DELTA_MERGE)?;
        Trace::new(sig, seq)
    }

    /// The input/output decomposition of the externally observable part.
    pub fn solution_pair(&self, model: &Hioa) -> Result<SolutionPair, SequenceError> {
        self.trace(model)?.split(DELTA_MERGE)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("horizon must be positive and finite, got {0}")]
    NonPositiveHorizon(f64),
    #[error("scheduled time {time} lies outside [0, {horizon}]")]
    ScheduleOutOfRange { time: f64, horizon: f64 },
    #[error("schedule entry {index} is out of order")]
    ScheduleUnsorted { index: usize },
    #[error("scheduled action `{action}` is not an input action")]
    ScheduleNotInput { action: String },
    #[error("the model has input variables but the stimulus drives no signals")]
    SignalsMissing,
    #[error("input signals must cover exactly the input variables")]
    SignalVarsMismatch,
    #[error("input signals cover [{start}, {end}] but [0, {needed}] is required")]
    SignalDomainTooShort { needed: f64, start: f64, end: f64 },
    #[error("input signal `{variable}` takes a non-finite value")]
    SignalNotFinite { variable: String },
    #[error("step width must be positive and finite, got {0}")]
    NonPositiveStep(f64),
    #[error("state became non-finite at time {time}")]
    NonFiniteState { time: f64 },
    #[error("{steps} zero-duration steps in a row at time {time}; the run is stalled")]
    Stalled { time: f64, steps: usize },
    #[error("invariant of `{location}` fails at time {time} with no rule to fire")]
    InvariantHalt {
        time: f64,
        location: String,
        /// The run up to the moment the invariant became unsatisfiable.
        partial: Box<Execution>,
    },
    #[error("transitions on `{action}` from `{location}` are simultaneously enabled at time {time}")]
    AmbiguousTransitions {
        time: f64,
        location: String,
        action: String,
    },
    #[error("firing `{action}` at time {time} violates the invariant of `{target}`")]
    JumpViolatesInvariant {
        time: f64,
        action: String,
        target: String,
    },
    #[error("execution has no trajectories")]
    EmptyExecution,
    #[error("the invariant of `{location}` does not hold at the probed state")]
    ProbeOutsideInvariant { location: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Valuation(#[from] crate::valuation::ValuationError),
}

/// Input signals resampled into slot-aligned columns for fast evaluation.
pub(crate) struct InputFn {
    times: Vec<f64>,
    /// One column per input variable, in sorted name order.
    columns: Vec<Vec<f64>>,
}

impl InputFn {
    pub(crate) fn empty() -> InputFn {
        InputFn {
            times: Vec::new(),
            columns: Vec::new(),
        }
    }

    pub(crate) fn from_trajectory(traj: &Trajectory) -> InputFn {
        let names: Vec<&str> = traj.vars().iter().map(|s| s.as_str()).collect();
        let mut columns = vec![Vec::with_capacity(traj.len()); names.len()];
        let mut times = Vec::with_capacity(traj.len());
        for (t, val) in traj.iter() {
            times.push(t);
            for (i, name) in names.iter().enumerate() {
                columns[i].push(val.get(name).unwrap().value());
            }
        }
        InputFn { times, columns }
    }

    fn width(&self) -> usize {
        self.columns.len()
    }

    /// Linear interpolation, clamped to the sampled domain.
    fn eval(&self, t: f64, out: &mut [f64]) {
        if self.columns.is_empty() {
            return;
        }
        let n = self.times.len();
        let hi = self.times.partition_point(|&s| s < t).min(n - 1).max(1);
        let (t0, t1) = (self.times[hi - 1], self.times[hi]);
        let w = if t <= t0 {
            0.0
        } else if t >= t1 {
            1.0
        } else {
            (t - t0) / (t1 - t0)
        };
        for (i, col) in self.columns.iter().enumerate() {
            out[i] = col[hi - 1] + w * (col[hi] - col[hi - 1]);
        }
    }
}

/// A transition rule bound to slot indices for the simulation loop.
pub(crate) struct BoundRule {
    pub(crate) action: String,
    pub(crate) target: usize,
    pub(crate) guard: BoundPred,
    pub(crate) trivial_guard: bool,
    pub(crate) is_input: bool,
    /// Reset assignments as (internal slot, expression).
    pub(crate) resets: Vec<(usize, BoundExpr)>,
}

/// A location bound to slot indices. The slot layout is the internal
/// variables in sorted order followed by the input variables in sorted
/// order.
pub(crate) struct BoundLocation {
    pub(crate) name: String,
    /// Flow right-hand sides, one per internal slot.
    pub(crate) flow: Vec<BoundExpr>,
    pub(crate) invariant: BoundPred,
    /// Output expressions in sorted output-variable order.
    pub(crate) outputs: Vec<BoundExpr>,
    pub(crate) rules: Vec<BoundRule>,
}

pub(crate) struct Runtime {
    pub(crate) locations: Vec<BoundLocation>,
    pub(crate) x_names: Vec<String>,
    pub(crate) u_names: Vec<String>,
    pub(crate) y_names: Vec<String>,
    pub(crate) inputs: InputFn,
}

impl Runtime {
    pub(crate) fn new(model: &Hioa, stim: &Stimulus) -> Result<Runtime, SimError> {
        let x_names: Vec<String> = model.internal_vars.iter().cloned().collect();
        let u_names: Vec<String> = model.input_vars.iter().cloned().collect();
        let y_names: Vec<String> = model.output_vars.iter().cloned().collect();
        let slot_of = |n: &str| {
            x_names
                .iter()
                .position(|x| x == n)
                .or_else(|| u_names.iter().position(|u| u == n).map(|i| i + x_names.len()))
        };
        let loc_index: BTreeMap<&str, usize> = model
            .locations
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.as_str(), i))
            .collect();

        let mut locations = Vec::with_capacity(model.locations.len());
        for loc in &model.locations {
            let flow = x_names
                .iter()
                .map(|x| loc.flow[x].bind(&slot_of))
                .collect::<Result<Vec<_>, _>>()?;
            let outputs = y_names
                .iter()
                .map(|y| loc.outputs[y].bind(&slot_of))
                .collect::<Result<Vec<_>, _>>()?;
            let mut rules = Vec::new();
            for rule in &model.transitions {
                if rule.source != loc.name {
                    continue;
                }
                let resets = rule
                    .resets
                    .iter()
                    .map(|(x, e)| Ok((slot_of(x).unwrap(), e.bind(&slot_of)?)))
                    .collect::<Result<Vec<_>, EvalError>>()?;
                rules.push(BoundRule {
                    action: rule.action.clone(),
                    target: loc_index[rule.target.as_str()],
                    guard: rule.guard.bind(&slot_of)?,
                    trivial_guard: rule.guard == Predicate::True,
                    is_input: model.input_actions.contains(&rule.action),
                    resets,
                });
            }
            locations.push(BoundLocation {
                name: loc.name.clone(),
                flow,
                invariant: loc.invariant.bind(&slot_of)?,
                outputs,
                rules,
            });
        }
        let inputs = match &stim.signals {
            Some(traj) => InputFn::from_trajectory(traj),
            None => InputFn::empty(),
        };
        Ok(Runtime {
            locations,
            x_names,
            u_names,
            y_names,
            inputs,
        })
    }

    pub(crate) fn nx(&self) -> usize {
        self.x_names.len()
    }

    /// Fills the input half of the slot array for time `t`.
    pub(crate) fn fill_inputs(&self, t: f64, slots: &mut [f64]) {
        let nx = self.nx();
        self.inputs.eval(t, &mut slots[nx..nx + self.inputs.width()]);
    }

    /// One RK4 step of width `dt` from `(t, slots)`; returns the new
    /// internal values. `slots` holds the current internals and inputs.
    pub(crate) fn rk4(&self, loc: usize, t: f64, slots: &[f64], dt: f64) -> Result<Vec<f64>, SimError> {
        let flow = &self.locations[loc].flow;
        let nx = self.nx();
        let mut stage = slots.to_vec();
        let deriv = |stage: &[f64]| -> Result<Vec<f64>, EvalError> {
            flow.iter().map(|e| e.eval(stage)).collect()
        };

        let k1 = deriv(&stage)?;
        self.fill_inputs(t + dt / 2.0, &mut stage);
        for i in 0..nx {
            stage[i] = slots[i] + dt / 2.0 * k1[i];
        }
        let k2 = deriv(&stage)?;
        for i in 0..nx {
            stage[i] = slots[i] + dt / 2.0 * k2[i];
        }
        let k3 = deriv(&stage)?;
        self.fill_inputs(t + dt, &mut stage);
        for i in 0..nx {
            stage[i] = slots[i] + dt * k3[i];
        }
        let k4 = deriv(&stage)?;

        let mut x = Vec::with_capacity(nx);
        for i in 0..nx {
            let v = slots[i] + dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
            if !v.is_finite() {
                return Err(SimError::NonFiniteState { time: t + dt });
            }
            x.push(v);
        }
        Ok(x)
    }

    /// The sample valuation at `(t, slots)`: internals, inputs, and outputs.
    pub(crate) fn sample(&self, loc: usize, slots: &[f64]) -> Result<Valuation, SimError> {
        let mut val = Valuation::new();
        for (i, name) in self.x_names.iter().enumerate() {
            val.insert(name.clone(), slots[i]);
        }
        for (i, name) in self.u_names.iter().enumerate() {
            val.insert(name.clone(), slots[self.nx() + i]);
        }
        for (i, name) in self.y_names.iter().enumerate() {
            let v = self.locations[loc].outputs[i].eval(slots)?;
            val.insert(name.clone(), v);
        }
        Ok(val)
    }
}

/// Runs `model` under `stim`, producing the full execution.
pub fn simulate(model: &Hioa, stim: &Stimulus, config: &SimConfig) -> Result<Execution, SimError> {
    if !(config.step > 0.0 && config.step.is_finite()) {
        return Err(SimError::NonPositiveStep(config.step));
    }
    stim.validate(model)?;
    let rt = Runtime::new(model, stim)?;
    let start = model.start_state()?;
    let mut loc = rt
        .locations
        .iter()
        .position(|l| l.name == start.location)
        .expect("validated start location");

    let nx = rt.nx();
    let width = nx + rt.inputs.width();
    let mut slots = vec![0.0; width];
    for (i, name) in rt.x_names.iter().enumerate() {
        slots[i] = start.values.get(name).unwrap().value();
    }
    let mut t = 0.0;
    rt.fill_inputs(t, &mut slots);

    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut actions: Vec<String> = Vec::new();
    let mut locations: Vec<String> = Vec::new();
    let mut segment: Vec<(f64, Valuation)> = vec![(t, rt.sample(loc, &slots)?)];
    let mut schedule_at = 0usize;
    let mut stalled = 0usize;
    let tol = config.event_tolerance;

    // Interior sample times of the input signals. Flow phases end on them,
    // so no integration step straddles a kink of the piecewise-linear input
    // and every kink lands exactly on a recorded sample.
    let knots: Vec<f64> = stim
        .signals
        .as_ref()
        .map(|sig| {
            sig.times()
                .iter()
                .copied()
                .filter(|&s| s > 0.0 && s < stim.horizon)
                .collect()
        })
        .unwrap_or_default();

    // Fires `rule` at the current instant: closes the open segment, records
    // the action, applies the resets, and reopens a segment at the target.
    #[allow(clippy::too_many_arguments)]
    fn fire(
        rt: &Runtime,
        rule_loc: usize,
        rule_idx: usize,
        t: f64,
        slots: &mut [f64],
        loc: &mut usize,
        segment: &mut Vec<(f64, Valuation)>,
        trajectories: &mut Vec<Trajectory>,
        actions: &mut Vec<String>,
        locations: &mut Vec<String>,
    ) -> Result<(), SimError> {
        let rule = &rt.locations[rule_loc].rules[rule_idx];
        let mut next = slots.to_vec();
        for (slot, expr) in &rule.resets {
            next[*slot] = expr.eval(slots)?;
        }
        if !rt.locations[rule.target].invariant.holds(&next)? {
            return Err(SimError::JumpViolatesInvariant {
                time: t,
                action: rule.action.clone(),
                target: rt.locations[rule.target].name.clone(),
            });
        }
        trajectories.push(Trajectory::new(std::mem::take(segment))?);
        locations.push(rt.locations[rule_loc].name.clone());
        actions.push(rule.action.clone());
        slots.copy_from_slice(&next);
        *loc = rule.target;
        segment.push((t, rt.sample(rule.target, slots)?));
        Ok(())
    }

    'run: loop {
        // Discrete phase: everything due at the current instant fires before
        // time advances. Scheduled input actions take precedence; urgent
        // rules follow in declaration order.
        loop {
            if stalled > config.max_stalled_steps {
                return Err(SimError::Stalled {
                    time: t,
                    steps: stalled,
                });
            }
            if schedule_at < stim.schedule.len() && stim.schedule[schedule_at].0 <= t + tol {
                let action = stim.schedule[schedule_at].1.clone();
                schedule_at += 1;
                stalled += 1;
                let mut enabled: Vec<usize> = Vec::new();
                for (i, rule) in rt.locations[loc].rules.iter().enumerate() {
                    if rule.action == action && rule.guard.holds(&slots)? {
                        enabled.push(i);
                    }
                }
                match enabled.len() {
                    0 => {
                        // Stutter: the input occurs, the state is unchanged.
                        trajectories.push(Trajectory::new(std::mem::take(&mut segment))?);
                        locations.push(rt.locations[loc].name.clone());
                        actions.push(action);
                        segment.push((t, rt.sample(loc, &slots)?));
                    }
                    1 => fire(
                        &rt,
                        loc,
                        enabled[0],
                        t,
                        &mut slots,
                        &mut loc,
                        &mut segment,
                        &mut trajectories,
                        &mut actions,
                        &mut locations,
                    )?,
                    _ => {
                        return Err(SimError::AmbiguousTransitions {
                            time: t,
                            location: rt.locations[loc].name.clone(),
                            action,
                        })
                    }
                }
                continue;
            }
            let urgent_now = {
                let mut found = None;
                for (i, rule) in rt.locations[loc].rules.iter().enumerate() {
                    if is_urgent(rule, config.urgency) && rule.guard.holds(&slots)? {
                        found = Some(i);
                        break;
                    }
                }
                found
            };
            if let Some(i) = urgent_now {
                stalled += 1;
                fire(
                    &rt,
                    loc,
                    i,
                    t,
                    &mut slots,
                    &mut loc,
                    &mut segment,
                    &mut trajectories,
                    &mut actions,
                    &mut locations,
                )?;
                continue;
            }
            break;
        }

        if t >= stim.horizon {
            break 'run;
        }

        // Flow phase: integrate toward the next scheduled action, the next
        // input-signal kink, or the horizon, watching urgent guards and the
        // invariant on the way.
        let target = stim
            .schedule
            .get(schedule_at)
            .map(|(s, _)| *s)
            .unwrap_or(stim.horizon)
            .min(stim.horizon);
        let target = knots
            .get(knots.partition_point(|&s| s <= t))
            .map_or(target, |&s| s.min(target));
        let phase_start = t;
        let mut k = 0u64;
        while t < target {
            let remaining = target - t;
            let t_next = if remaining <= config.step * (1.0 + 1e-9) {
                target
            } else {
                k += 1;
                phase_start + k as f64 * config.step
            };
            let dt = t_next - t;
            let x_next = rt.rk4(loc, t, &slots, dt)?;

            let mut probe = slots.to_vec();
            let eval_at = |dt_probe: f64, probe: &mut [f64]| -> Result<(), SimError> {
                let x = rt.rk4(loc, t, &slots, dt_probe)?;
                probe[..nx].copy_from_slice(&x);
                rt.fill_inputs(t + dt_probe, probe);
                Ok(())
            };

            probe[..nx].copy_from_slice(&x_next);
            rt.fill_inputs(t_next, &mut probe);
            let guard_hit = {
                let mut hit = false;
                for rule in &rt.locations[loc].rules {
                    if is_urgent(rule, config.urgency) && rule.guard.holds(&probe)? {
                        hit = true;
                        break;
                    }
                }
                hit
            };
            let invariant_lost = !rt.locations[loc].invariant.holds(&probe)?;

            if guard_hit {
                // Bisect to the earliest instant any urgent guard holds; the
                // upper end is kept on the satisfied side so the fired
                // guard's predicate holds exactly at the returned point.
                // Candidate widths are round-tripped through the absolute
                // time so that `(t + hi) - t == hi` exactly; replaying the
                // recorded samples then reproduces this step bit for bit.
                let (mut lo, mut hi) = (0.0f64, dt);
                while hi - lo > tol {
                    let mid = (t + (lo + (hi - lo) / 2.0)) - t;
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    eval_at(mid, &mut probe)?;
                    let mut any = false;
                    for rule in &rt.locations[loc].rules {
                        if is_urgent(rule, config.urgency) && rule.guard.holds(&probe)? {
                            any = true;
                            break;
                        }
                    }
                    if any {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                eval_at(hi, &mut probe)?;
                // An invariant violation strictly before the crossing means
                // the run dies before it can fire.
                if !rt.locations[loc].invariant.holds(&probe)? {
                    let halt = localize_invariant_loss(&rt, loc, t, &slots, hi, tol, &mut probe)?;
                    slots.copy_from_slice(&probe);
                    if halt > 0.0 {
                        segment.push((t + halt, rt.sample(loc, &probe)?));
                    }
                    trajectories.push(Trajectory::new(segment)?);
                    locations.push(rt.locations[loc].name.clone());
                    return Err(SimError::InvariantHalt {
                        time: t + halt,
                        location: rt.locations[loc].name.clone(),
                        partial: Box::new(Execution {
                            trajectories,
                            actions,
                            locations,
                        }),
                    });
                }
                t += hi;
                slots.copy_from_slice(&probe);
                segment.push((t, rt.sample(loc, &slots)?));
                stalled = 0;
                break; // restart at the discrete phase to fire the rule
            }

            if invariant_lost {
                let halt = localize_invariant_loss(&rt, loc, t, &slots, dt, tol, &mut probe)?;
                slots.copy_from_slice(&probe);
                if halt > 0.0 {
                    segment.push((t + halt, rt.sample(loc, &probe)?));
                }
                trajectories.push(Trajectory::new(segment)?);
                locations.push(rt.locations[loc].name.clone());
                return Err(SimError::InvariantHalt {
                    time: t + halt,
                    location: rt.locations[loc].name.clone(),
                    partial: Box::new(Execution {
                        trajectories,
                        actions,
                        locations,
                    }),
                });
            }

            t = t_next;
            slots[..nx].copy_from_slice(&x_next);
            rt.fill_inputs(t, &mut slots);
            segment.push((t, rt.sample(loc, &slots)?));
            stalled = 0;
        }
    }

    trajectories.push(Trajectory::new(segment)?);
    locations.push(rt.locations[loc].name.clone());
    Ok(Execution {
        trajectories,
        actions,
        locations,
    })
}

pub(crate) fn is_urgent(rule: &BoundRule, urgency: Urgency) -> bool {
    if rule.trivial_guard {
        return false;
    }
    match urgency {
        Urgency::Urgent => true,
        Urgency::ScheduledInputs => !rule.is_input,
    }
}

/// Bisects the largest `dt` in `[0, hi]` at which the invariant still holds
/// and leaves the corresponding slot values in `probe`.
fn localize_invariant_loss(
    rt: &Runtime,
    loc: usize,
    t: f64,
    slots: &[f64],
    hi: f64,
    tol: f64,
    probe: &mut [f64],
) -> Result<f64, SimError> {
    let nx = rt.nx();
    let (mut lo, mut hi) = (0.0f64, hi);
    while hi - lo > tol {
        let mid = (t + (lo + (hi - lo) / 2.0)) - t;
        if mid <= lo || mid >= hi {
            break;
        }
        let x = rt.rk4(loc, t, slots, mid)?;
        probe[..nx].copy_from_slice(&x);
        rt.fill_inputs(t + mid, probe);
        if rt.locations[loc].invariant.holds(probe)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = rt.rk4(loc, t, slots, lo)?;
    probe[..nx].copy_from_slice(&x);
    rt.fill_inputs(t + lo, probe);
    Ok(lo)
}

/// Integrates the flow available at `state` for up to `duration`, without
/// firing any transition: the result is truncated where an urgent guard
/// first holds or where the invariant ends. Times are relative, starting at
/// zero, and the samples range over the full variable set. `signals`, when
/// given, must cover `[0, duration]` over exactly the input variables;
/// absent signals hold every input variable at zero.
pub fn flow_from(
    model: &Hioa,
    state: &State,
    duration: f64,
    signals: Option<&Trajectory>,
    config: &SimConfig,
) -> Result<Trajectory, SimError> {
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(SimError::NonPositiveHorizon(duration));
    }
    if !(config.step > 0.0 && config.step.is_finite()) {
        return Err(SimError::NonPositiveStep(config.step));
    }
    if let Some(traj) = signals {
        if traj.vars() != &model.input_vars {
            return Err(SimError::SignalVarsMismatch);
        }
        if traj.start_time() > 0.0 || traj.end_time() < duration {
            return Err(SimError::SignalDomainTooShort {
                needed: duration,
                start: traj.start_time(),
                end: traj.end_time(),
            });
        }
    }
    let pseudo = Stimulus {
        horizon: duration.max(config.step),
        schedule: Vec::new(),
        signals: signals.cloned(),
    };
    let rt = Runtime::new(model, &pseudo)?;
    let loc = rt
        .locations
        .iter()
        .position(|l| l.name == state.location)
        .ok_or_else(|| SimError::Model(ModelError::StartLocationUnknown(state.location.clone())))?;

    let nx = rt.nx();
    let mut slots = vec![0.0; nx + model.input_vars.len()];
    for (i, name) in rt.x_names.iter().enumerate() {
        slots[i] = state
            .values
            .get(name)
            .map(|v| v.value())
            .ok_or(SimError::Model(ModelError::StartVariablesMismatch))?;
    }
    let mut t = 0.0f64;
    rt.fill_inputs(t, &mut slots);
    if !rt.locations[loc].invariant.holds(&slots)? {
        return Err(SimError::ProbeOutsideInvariant {
            location: state.location.clone(),
        });
    }
    let mut segment = vec![(t, rt.sample(loc, &slots)?)];

    let urgent_holds = |slots: &[f64]| -> Result<bool, SimError> {
        for rule in &rt.locations[loc].rules {
            if is_urgent(rule, config.urgency) && rule.guard.holds(slots)? {
                return Ok(true);
            }
        }
        Ok(false)
    };

    let mut k = 0u64;
    while t < duration && !urgent_holds(&slots)? {
        let remaining = duration - t;
        let t_next = if remaining <= config.step * (1.0 + 1e-9) {
            duration
        } else {
            k += 1;
            (k as f64) * config.step
        };
        let dt = t_next - t;
        let x_next = rt.rk4(loc, t, &slots, dt)?;

        let mut probe = slots.to_vec();
        probe[..nx].copy_from_slice(&x_next);
        rt.fill_inputs(t_next, &mut probe);
        let guard_hit = urgent_holds(&probe)?;
        let invariant_lost = !rt.locations[loc].invariant.holds(&probe)?;

        if guard_hit {
            let tol = config.event_tolerance;
            let (mut lo, mut hi) = (0.0f64, dt);
            while hi - lo > tol {
                let mid = (t + (lo + (hi - lo) / 2.0)) - t;
                if mid <= lo || mid >= hi {
                    break;
                }
                let x = rt.rk4(loc, t, &slots, mid)?;
                probe[..nx].copy_from_slice(&x);
                rt.fill_inputs(t + mid, &mut probe);
                if urgent_holds(&probe)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let x = rt.rk4(loc, t, &slots, hi)?;
            probe[..nx].copy_from_slice(&x);
            rt.fill_inputs(t + hi, &mut probe);
            if !rt.locations[loc].invariant.holds(&probe)? {
                let halt = localize_invariant_loss(&rt, loc, t, &slots, hi, tol, &mut probe)?;
                if halt > 0.0 {
                    segment.push((t + halt, rt.sample(loc, &probe)?));
                }
                break;
            }
            t += hi;
            slots.copy_from_slice(&probe);
            segment.push((t, rt.sample(loc, &slots)?));
            break;
        }
        if invariant_lost {
            let halt = localize_invariant_loss(
                &rt,
                loc,
                t,
                &slots,
                dt,
                config.event_tolerance,
                &mut probe,
            )?;
            if halt > 0.0 {
                segment.push((t + halt, rt.sample(loc, &probe)?));
            }
            break;
        }
        t = t_next;
        slots[..nx].copy_from_slice(&x_next);
        rt.fill_inputs(t, &mut slots);
        segment.push((t, rt.sample(loc, &slots)?));
    }
    Ok(Trajectory::new(segment)?)
}

/// Convenience wrapper: simulate and return the externally observable
/// input/output pair.
pub fn solution_pair(
    model: &Hioa,
    stim: &Stimulus,
    config: &SimConfig,
) -> Result<SolutionPair, SimError> {
    let exec = simulate(model, stim, config)?;
    Ok(exec.solution_pair(model)?)
}
