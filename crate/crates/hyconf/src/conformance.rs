//! Conformance between observed behaviours and between models.
//!
//! Two layers. The pair layer compares finite suites of input/output pairs:
//! every pair of the quantified suite must be answered by a pair of the
//! searched suite with the same input and a close output. The model layer
//! replays a test trace on both models and compares what each can do next,
//! enabled outputs first, then the flows reachable under matching inputs.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::automaton::{Hioa, ModelError, State, StepError, XI};
use crate::closeness::{
    close_ext, close_plain, CloseMode, ClosenessError, ClosenessParams, ClosenessVerdict,
};
use crate::expr::{EvalError, Predicate};
use crate::ext_real::ExtReal;
use crate::sequence::{ExternalSignature, HybridSequence, SequenceError, SolutionPair, Trace};
use crate::simulate::{
    flow_from, simulate, InputFn, Runtime, SimConfig, SimError, Stimulus, Urgency,
};
use crate::trajectory::{Trajectory, TrajectoryError};
use crate::valuation::Valuation;
use crate::{DELTA_MERGE, DELTA_REPLAY};

#[derive(Debug, Error)]
pub enum ConformanceError {
    #[error("the two interfaces are not comparable")]
    IncompatibleInterfaces,
    #[error("pair {index}: the {side} sequence ranges over the wrong variables")]
    PairVariables { index: usize, side: &'static str },
    #[error("pair {index}: the {side} sequence carries `{action}`, which the interface does not")]
    PairActions {
        index: usize,
        side: &'static str,
        action: String,
    },
    #[error("pair {index}: the input lasts {u} but the output lasts {y}")]
    PairDurations { index: usize, u: f64, y: f64 },
    #[error("test {index} is not a trace of the specification")]
    TestNotSpecTrace { index: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Closeness(#[from] ClosenessError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Where the pairs of a suite came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Simulated,
    Recorded,
}

/// A finite set of input/output pairs over one interface.
///
/// Every pair must range over the interface's variables and actions, and
/// its two halves must last equally long. The halves may live on shifted
/// time axes; only durations are required to agree.
#[derive(Debug, Clone)]
pub struct PairSuite {
    sig: ExternalSignature,
    provenance: Provenance,
    pairs: Vec<SolutionPair>,
}

impl PairSuite {
    pub fn new(
        sig: ExternalSignature,
        provenance: Provenance,
        pairs: Vec<SolutionPair>,
    ) -> Result<PairSuite, ConformanceError> {
        for (index, pair) in pairs.iter().enumerate() {
            if pair.u.vars() != &sig.input_vars {
                return Err(ConformanceError::PairVariables {
                    index,
                    side: "input",
                });
            }
            if pair.y.vars() != &sig.output_vars {
                return Err(ConformanceError::PairVariables {
                    index,
                    side: "output",
                });
            }
            for (side, seq, allowed) in [
                ("input", &pair.u, &sig.input_actions),
                ("output", &pair.y, &sig.output_actions),
            ] {
                if let Some(action) = seq.actions().iter().find(|a| !allowed.contains(*a)) {
                    return Err(ConformanceError::PairActions {
                        index,
                        side,
                        action: action.clone(),
                    });
                }
            }
            let (u, y) = (pair.u.duration(), pair.y.duration());
            if (u - y).abs() > DELTA_MERGE {
                return Err(ConformanceError::PairDurations { index, u, y });
            }
        }
        Ok(PairSuite {
            sig,
            provenance,
            pairs,
        })
    }

    /// Runs the model once per stimulus and collects the observable pairs.
    /// A run halted by its invariant contributes the part up to the halt.
    pub fn from_model(
        model: &Hioa,
        stimuli: &[Stimulus],
        config: &SimConfig,
    ) -> Result<PairSuite, ConformanceError> {
        let mut pairs = Vec::with_capacity(stimuli.len());
        for stim in stimuli {
            let exec = match simulate(model, stim, config) {
                Ok(exec) => exec,
                Err(SimError::InvariantHalt { partial, .. }) => *partial,
                Err(e) => return Err(e.into()),
            };
            pairs.push(exec.solution_pair(model)?);
        }
        PairSuite::new(model.signature(), Provenance::Simulated, pairs)
    }

    pub fn sig(&self) -> &ExternalSignature {
        &self.sig
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn pairs(&self) -> &[SolutionPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Whether two trajectories take the same values on the overlap of their
/// domains, compared at every sample time either of them has there.
fn trajectories_agree(a: &Trajectory, b: &Trajectory, tol: f64) -> bool {
    let lo = a.start_time().max(b.start_time());
    let hi = a.end_time().min(b.end_time());
    if hi < lo {
        return true;
    }
    let mut grid: Vec<f64> = a
        .times()
        .iter()
        .chain(b.times().iter())
        .copied()
        .filter(|t| *t >= lo && *t <= hi)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid.iter().all(|&t| match (a.value_at(t), b.value_at(t)) {
        (Ok(va), Ok(vb)) => va.approx_eq(&vb, tol),
        _ => false,
    })
}

/// Content equality of two input behaviours: the same action events at the
/// same absolute times and the same signal values wherever both halves are
/// defined. Start times and durations must agree within `tol` as well.
pub fn input_equal(a: &HybridSequence, b: &HybridSequence, tol: f64) -> bool {
    if a.vars() != b.vars() {
        return false;
    }
    if (a.start_time() - b.start_time()).abs() > tol
        || (a.duration() - b.duration()).abs() > tol
    {
        return false;
    }
    let ea = a.action_events();
    let eb = b.action_events();
    if ea.len() != eb.len() {
        return false;
    }
    for ((ta, na), (tb, nb)) in ea.iter().zip(eb.iter()) {
        if na != nb || (ta - tb).abs() > tol {
            return false;
        }
    }
    if a.vars().is_empty() {
        return true;
    }
    a.trajectories()
        .iter()
        .zip(b.trajectories().iter())
        .all(|(ta, tb)| trajectories_agree(ta, tb, tol))
}

/// What happened to one quantified pair.
#[derive(Debug, Clone)]
pub enum PairOutcome {
    /// Some searched pair has the same input and a close output.
    Matched {
        partner: usize,
        verdict: ClosenessVerdict,
    },
    /// No searched pair has the same input.
    InputNotCovered,
    /// Pairs with the same input exist but none is close; the verdict kept
    /// is the one of the candidate that came closest.
    NotClose {
        partner: usize,
        verdict: ClosenessVerdict,
    },
}

impl PairOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, PairOutcome::Matched { .. })
    }
}

/// Matches one input/output pair against a suite: among the searched pairs
/// with the same input, looks for one whose output is close to `pair`'s.
pub fn match_pair(
    pair: &SolutionPair,
    searched: &PairSuite,
    params: &ClosenessParams,
    mode: CloseMode,
) -> Result<PairOutcome, ConformanceError> {
    let mut universe = searched.sig.output_actions.clone();
    universe.extend(pair.y.actions().iter().cloned());
    let own = pair.y.to_atrace(&universe)?;

    let mut best: Option<(usize, ClosenessVerdict)> = None;
    for (partner, cand) in searched.pairs.iter().enumerate() {
        if !input_equal(&pair.u, &cand.u, DELTA_MERGE) {
            continue;
        }
        let other = cand.y.to_atrace(&universe)?;
        let verdict = match mode {
            CloseMode::Plain => close_plain(&own, &other, params)?,
            CloseMode::Extended => close_ext(&own, &other, params)?,
        };
        if verdict.close {
            return Ok(PairOutcome::Matched { partner, verdict });
        }
        let distance = |v: &ClosenessVerdict| {
            v.counterexample
                .as_ref()
                .map_or(ExtReal::INFINITY, |c| c.best_distance)
        };
        if best.as_ref().is_none_or(|(_, b)| distance(&verdict) < distance(b)) {
            best = Some((partner, verdict));
        }
    }
    Ok(match best {
        None => PairOutcome::InputNotCovered,
        Some((partner, verdict)) => PairOutcome::NotClose { partner, verdict },
    })
}

/// Outcome of checking every pair of a quantified suite against a searched
/// suite.
#[derive(Debug, Clone)]
pub struct ConformanceReport {
    pub conforms: bool,
    pub mode: CloseMode,
    pub params: ClosenessParams,
    /// One outcome per quantified pair, in suite order.
    pub outcomes: Vec<PairOutcome>,
}

/// Checks that every pair of `quantified` is answered by a pair of
/// `searched` with the same input and a `(tau, epsilon)`-close output.
pub fn conforms(
    quantified: &PairSuite,
    searched: &PairSuite,
    params: &ClosenessParams,
    mode: CloseMode,
) -> Result<ConformanceReport, ConformanceError> {
    if !quantified.sig.conformance_compatible(&searched.sig) {
        return Err(ConformanceError::IncompatibleInterfaces);
    }
    let outcomes = quantified
        .pairs
        .iter()
        .map(|pair| match_pair(pair, searched, params, mode))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConformanceReport {
        conforms: outcomes.iter().all(PairOutcome::passed),
        mode,
        params: *params,
        outcomes,
    })
}

/// The output actions the model can perform at `state`, plus the agility
/// marker `xi` when time itself can pass there. An enabled guard that is
/// urgent under `urgency` pins the state, so the marker is withheld even
/// when the invariant has room.
pub fn out_set(
    model: &Hioa,
    state: &State,
    urgency: Urgency,
) -> Result<BTreeSet<String>, ConformanceError> {
    let enabled = model.enabled_actions(state)?;
    let mut out: BTreeSet<String> = enabled
        .intersection(&model.output_actions)
        .cloned()
        .collect();

    let mut pinned = false;
    for rule in &model.transitions {
        if rule.source != state.location || rule.guard == Predicate::True {
            continue;
        }
        let urgent = match urgency {
            Urgency::Urgent => true,
            Urgency::ScheduledInputs => !model.input_actions.contains(&rule.action),
        };
        if !urgent {
            continue;
        }
        let lookup = |n: &str| state.values.get(n).map(|v| v.value());
        if rule.guard.holds(&lookup)? {
            pinned = true;
            break;
        }
    }
    if !pinned && model.is_agile(state)? {
        out.insert(XI.to_string());
    }
    Ok(out)
}

/// Replay settings for [`after`] and [`hioco`].
#[derive(Debug, Clone)]
pub struct HiocoConfig {
    /// Count the ability to let time pass as an observable output.
    pub include_xi: bool,
    /// Per-sample tolerance when replaying a test trace on a model.
    pub replay_tolerance: f64,
    /// Tolerance for comparing probe flows and their input projections.
    pub merge_tolerance: f64,
    pub sim: SimConfig,
}

impl Default for HiocoConfig {
    fn default() -> HiocoConfig {
        HiocoConfig {
            include_xi: false,
            replay_tolerance: DELTA_REPLAY,
            merge_tolerance: DELTA_MERGE,
            sim: SimConfig::default(),
        }
    }
}

/// Replays `trace` on `model` and returns the state it leads to, or `None`
/// when the model cannot reproduce the trace.
///
/// The replay drives the model's inputs with the trace's own input
/// projection, integrates across each recorded sample gap, and requires
/// every recorded output value to be met within the replay tolerance. Each
/// recorded action must be enabled where the trace fires it; an input
/// action with no enabled rule stutters. A trace that leaves the invariant,
/// misses an output transition, or hits an ambiguous jump yields `None`;
/// so does one whose jump cannot be resolved to a unique state.
pub fn after(
    model: &Hioa,
    trace: &Trace,
    config: &HiocoConfig,
) -> Result<Option<State>, ConformanceError> {
    if !model.signature().conformance_compatible(&trace.sig) {
        return Err(ConformanceError::IncompatibleInterfaces);
    }
    let start = model.start_state()?;
    let quiet = Stimulus {
        horizon: trace.seq.duration().max(config.sim.step),
        schedule: Vec::new(),
        signals: None,
    };
    let mut rt = Runtime::new(model, &quiet)?;
    let nx = rt.nx();
    let has_inputs = !model.input_vars.is_empty();
    let mut slots = vec![0.0; nx + model.input_vars.len()];
    for (i, name) in rt.x_names.iter().enumerate() {
        slots[i] = start
            .values
            .get(name)
            .map(|v| v.value())
            .ok_or(ModelError::StartVariablesMismatch)?;
    }
    let mut loc = rt
        .locations
        .iter()
        .position(|l| l.name == start.location)
        .ok_or_else(|| ModelError::StartLocationUnknown(start.location.clone()))?;

    let tol = config.replay_tolerance;
    let segments = trace.seq.trajectories();
    let actions = trace.seq.actions();
    let mut t_prev = 0.0f64;
    for (k, traj) in segments.iter().enumerate() {
        if has_inputs {
            rt.inputs = InputFn::from_trajectory(&traj.restrict(&model.input_vars)?);
        }
        for (i, (t, val)) in traj.iter().enumerate() {
            if i > 0 {
                let dt = t - t_prev;
                match rt.rk4(loc, t_prev, &slots, dt) {
                    Ok(x) => slots[..nx].copy_from_slice(&x),
                    Err(SimError::NonFiniteState { .. }) => return Ok(None),
                    Err(e) => return Err(e.into()),
                }
            }
            rt.fill_inputs(t, &mut slots);
            for (j, name) in rt.y_names.iter().enumerate() {
                let recorded = match val.get(name) {
                    Some(v) if v.is_finite() => v.value(),
                    _ => return Ok(None),
                };
                let computed = rt.locations[loc].outputs[j].eval(&slots)?;
                if (computed - recorded).abs() > tol {
                    return Ok(None);
                }
            }
            if let Some(slack) = rt.locations[loc].invariant.slack(&slots)? {
                if slack < -tol {
                    return Ok(None);
                }
            }
            t_prev = t;
        }
        if k < actions.len() {
            let action = &actions[k];
            let mut enabled = Vec::new();
            for rule in &rt.locations[loc].rules {
                if &rule.action == action && rule.guard.holds(&slots)? {
                    enabled.push(rule);
                }
            }
            match enabled.len() {
                0 if model.input_actions.contains(action) => {}
                0 => return Ok(None),
                1 => {
                    let rule = enabled[0];
                    let updates = rule
                        .resets
                        .iter()
                        .map(|(slot, e)| Ok((*slot, e.eval(&slots)?)))
                        .collect::<Result<Vec<_>, EvalError>>()?;
                    for (slot, v) in updates {
                        slots[slot] = v;
                    }
                    loc = rule.target;
                    if let Some(slack) = rt.locations[loc].invariant.slack(&slots)? {
                        if slack < -tol {
                            return Ok(None);
                        }
                    }
                }
                _ => return Ok(None),
            }
        }
    }
    let mut values = Valuation::new();
    for (i, name) in rt.x_names.iter().enumerate() {
        values.insert(name.clone(), slots[i]);
    }
    Ok(Some(State::new(rt.locations[loc].name.clone(), values)))
}

/// One maximal flow per probe duration, starting at `state` with times
/// relative to it. Each flow ends at its probe duration, at the moment an
/// urgent guard becomes enabled, or where the invariant ends, whichever
/// comes first.
pub fn traj_set(
    model: &Hioa,
    state: &State,
    probes: &[f64],
    signals: Option<&Trajectory>,
    config: &SimConfig,
) -> Result<Vec<Trajectory>, SimError> {
    probes
        .iter()
        .map(|&d| flow_from(model, state, d, signals, config))
        .collect()
}

/// Keeps the candidates whose input projection agrees with the input
/// projection of at least one allowed trajectory on their common domain.
/// Without input variables the inputs carry no information: every candidate
/// is kept, unless the allowed set is empty, which permits nothing.
pub fn infilter(
    candidates: &[Trajectory],
    allowed: &[Trajectory],
    input_vars: &BTreeSet<String>,
    tol: f64,
) -> Result<Vec<Trajectory>, TrajectoryError> {
    if allowed.is_empty() {
        return Ok(Vec::new());
    }
    if input_vars.is_empty() {
        return Ok(candidates.to_vec());
    }
    let allowed_inputs = allowed
        .iter()
        .map(|t| t.restrict(input_vars))
        .collect::<Result<Vec<_>, _>>()?;
    let mut kept = Vec::new();
    for cand in candidates {
        let inputs = cand.restrict(input_vars)?;
        if allowed_inputs
            .iter()
            .any(|a| trajectories_agree(&inputs, a, tol))
        {
            kept.push(cand.clone());
        }
    }
    Ok(kept)
}

/// What one test trace revealed.
#[derive(Debug, Clone, PartialEq)]
pub enum TestOutcome {
    /// The implementation does not exhibit the trace; nothing to check.
    NotExhibited,
    Passed,
    /// After the trace the implementation can produce an output the
    /// specification cannot.
    ForbiddenOutput { action: String },
    /// After the trace a flow of the implementation under admissible inputs
    /// matches no flow of the specification.
    ForbiddenFlow { probe: f64 },
}

impl TestOutcome {
    pub fn passed(&self) -> bool {
        !matches!(
            self,
            TestOutcome::ForbiddenOutput { .. } | TestOutcome::ForbiddenFlow { .. }
        )
    }
}

#[derive(Debug, Clone)]
pub struct HiocoReport {
    pub conforms: bool,
    /// One outcome per test, in suite order.
    pub outcomes: Vec<TestOutcome>,
}

/// Model-level input/output conformance over a suite of test traces.
///
/// Every test must be a trace of the specification; one that is not makes
/// the suite invalid and errors out. For each test the implementation is
/// taken to the state the trace leads to. If it cannot be (the trace is not
/// one of its behaviours) the test passes vacuously. Otherwise the enabled
/// outputs there must be a subset of the specification's, and every flow
/// the implementation can follow for a probe duration, under inputs the
/// specification also admits, must be a prefix of a specification flow.
/// Probe flows hold input variables at zero on both sides; flows are
/// compared on the external variables only.
pub fn hioco(
    implementation: &Hioa,
    specification: &Hioa,
    tests: &[Trace],
    probes: &[f64],
    config: &HiocoConfig,
) -> Result<HiocoReport, ConformanceError> {
    if !implementation
        .signature()
        .conformance_compatible(&specification.signature())
    {
        return Err(ConformanceError::IncompatibleInterfaces);
    }
    let external = implementation.external_vars();
    let mut outcomes = Vec::with_capacity(tests.len());
    for (index, test) in tests.iter().enumerate() {
        let spec_state = after(specification, test, config)?
            .ok_or(ConformanceError::TestNotSpecTrace { index })?;
        let impl_state = match after(implementation, test, config)? {
            Some(state) => state,
            None => {
                outcomes.push(TestOutcome::NotExhibited);
                continue;
            }
        };

        let mut impl_out = out_set(implementation, &impl_state, config.sim.urgency)?;
        let mut spec_out = out_set(specification, &spec_state, config.sim.urgency)?;
        if !config.include_xi {
            impl_out.remove(XI);
            spec_out.remove(XI);
        }
        if let Some(action) = impl_out.difference(&spec_out).next() {
            outcomes.push(TestOutcome::ForbiddenOutput {
                action: action.clone(),
            });
            continue;
        }

        let impl_flows = traj_set(implementation, &impl_state, probes, None, &config.sim)?;
        let spec_flows = traj_set(specification, &spec_state, probes, None, &config.sim)?;
        let spec_external = spec_flows
            .iter()
            .map(|t| t.restrict(&external))
            .collect::<Result<Vec<_>, _>>()?;
        let mut verdict = TestOutcome::Passed;
        for (probe, flow) in probes.iter().zip(impl_flows.iter()) {
            let admissible = infilter(
                std::slice::from_ref(flow),
                &spec_flows,
                &implementation.input_vars,
                config.merge_tolerance,
            )?;
            if admissible.is_empty() {
                continue;
            }
            let flow_external = flow.restrict(&external)?;
            if !spec_external
                .iter()
                .any(|s| flow_external.is_prefix_of(s, config.merge_tolerance))
            {
                verdict = TestOutcome::ForbiddenFlow { probe: *probe };
                break;
            }
        }
        outcomes.push(verdict);
    }
    Ok(HiocoReport {
        conforms: outcomes.iter().all(TestOutcome::passed),
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::{build_thermostat, TransitionRule};
    use crate::expr::Expr;

    fn quiet(horizon: f64) -> Stimulus {
        Stimulus {
            horizon,
            schedule: Vec::new(),
            signals: None,
        }
    }

    fn params(tau: f64, epsilon: f64) -> ClosenessParams {
        ClosenessParams::new(tau, epsilon, 10.0, 10).unwrap()
    }

    /// The thermostat with `ON` reclassified as an output the controller
    /// may also emit near the top of the band.
    fn chatty_thermostat() -> Hioa {
        let mut m = build_thermostat();
        m.input_actions.remove("ON");
        m.output_actions.insert("ON".to_string());
        m.transitions.push(TransitionRule {
            source: "mode_ON".to_string(),
            target: "mode_ON".to_string(),
            action: "ON".to_string(),
            guard: Predicate::parse("x >= 18").unwrap(),
            resets: std::collections::BTreeMap::new(),
        });
        m.validated().unwrap()
    }

    /// First-order lag with an input variable and no actions.
    fn lag() -> Hioa {
        let mut init = Valuation::new();
        init.insert("x", 0.0);
        Hioa {
            name: "lag".to_string(),
            input_vars: ["u".to_string()].into(),
            output_vars: ["y".to_string()].into(),
            internal_vars: ["x".to_string()].into(),
            input_actions: BTreeSet::new(),
            output_actions: BTreeSet::new(),
            internal_actions: BTreeSet::new(),
            locations: vec![crate::automaton::Location {
                name: "track".to_string(),
                flow: [("x".to_string(), Expr::parse("u - x").unwrap())].into(),
                invariant: Predicate::True,
                outputs: [("y".to_string(), Expr::parse("x").unwrap())].into(),
            }],
            transitions: Vec::new(),
            init: vec![("track".to_string(), init)],
        }
        .validated()
        .unwrap()
    }

    #[test]
    fn suite_conforms_to_itself() {
        let model = build_thermostat();
        let suite =
            PairSuite::from_model(&model, &[quiet(10.0)], &SimConfig::default()).unwrap();
        assert_eq!(suite.len(), 1);
        for mode in [CloseMode::Plain, CloseMode::Extended] {
            let report = conforms(&suite, &suite, &params(0.1, 1e-9), mode).unwrap();
            assert!(report.conforms);
            assert!(matches!(
                report.outcomes[0],
                PairOutcome::Matched { partner: 0, .. }
            ));
        }
    }

    #[test]
    fn input_equality_is_content_based() {
        let model = build_thermostat();
        let config = SimConfig {
            urgency: Urgency::ScheduledInputs,
            ..SimConfig::default()
        };
        let mut early = quiet(10.0);
        early.schedule.push((4.5, "ON".to_string()));
        let mut late = quiet(10.0);
        late.schedule.push((5.5, "ON".to_string()));

        let a = simulate(&model, &early, &config)
            .unwrap()
            .solution_pair(&model)
            .unwrap();
        let b = simulate(&model, &early, &config)
            .unwrap()
            .solution_pair(&model)
            .unwrap();
        let c = simulate(&model, &late, &config)
            .unwrap()
            .solution_pair(&model)
            .unwrap();
        assert!(input_equal(&a.u, &b.u, DELTA_MERGE));
        assert!(!input_equal(&a.u, &c.u, DELTA_MERGE));
    }

    #[test]
    fn unmatched_inputs_are_reported_as_coverage_failures() {
        let model = build_thermostat();
        let config = SimConfig {
            urgency: Urgency::ScheduledInputs,
            ..SimConfig::default()
        };
        let mut scheduled = quiet(10.0);
        scheduled.schedule.push((4.5, "ON".to_string()));
        let spec = PairSuite::from_model(&model, &[scheduled], &config).unwrap();
        let imp = PairSuite::from_model(&model, &[quiet(10.0)], &config).unwrap();
        let report = conforms(&spec, &imp, &params(0.5, 1.0), CloseMode::Extended).unwrap();
        assert!(!report.conforms);
        assert!(matches!(report.outcomes[0], PairOutcome::InputNotCovered));
    }

    #[test]
    fn replaying_a_simulated_trace_recovers_the_final_state() {
        let model = build_thermostat();
        let exec = simulate(&model, &quiet(10.0), &SimConfig::default()).unwrap();
        let expected = exec.final_state(&model).unwrap();
        let trace = exec.trace(&model).unwrap();
        let got = after(&model, &trace, &HiocoConfig::default())
            .unwrap()
            .expect("a simulated trace replays on its own model");
        assert_eq!(got.location, expected.location);
        let a = got.values.get("x").unwrap().value();
        let b = expected.values.get("x").unwrap().value();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn tampered_outputs_are_not_replayable() {
        let model = build_thermostat();
        let exec = simulate(&model, &quiet(10.0), &SimConfig::default()).unwrap();
        let trace = exec.trace(&model).unwrap();
        let shifted = Trace::new(
            trace.sig.clone(),
            HybridSequence::new(
                trace
                    .seq
                    .trajectories()
                    .iter()
                    .map(|t| {
                        let points = t
                            .iter()
                            .map(|(time, val)| {
                                let mut v = Valuation::new();
                                for (name, value) in val.iter() {
                                    v.insert(name.to_string(), value.value() + 1e-3);
                                }
                                (time, v)
                            })
                            .collect();
                        Trajectory::new(points).unwrap()
                    })
                    .collect(),
                trace.seq.actions().to_vec(),
            )
            .unwrap(),
        )
        .unwrap();
        let got = after(&model, &shifted, &HiocoConfig::default()).unwrap();
        assert!(got.is_none());
    }

    #[test]
    fn replay_follows_recorded_inputs() {
        let model = lag();
        let ramp = Trajectory::new(vec![
            (0.0, {
                let mut v = Valuation::new();
                v.insert("u", 0.0);
                v
            }),
            (2.0, {
                let mut v = Valuation::new();
                v.insert("u", 2.0);
                v
            }),
        ])
        .unwrap();
        let stim = Stimulus {
            horizon: 2.0,
            schedule: Vec::new(),
            signals: Some(ramp),
        };
        let exec = simulate(&model, &stim, &SimConfig::default()).unwrap();
        let expected = exec.final_state(&model).unwrap();
        let trace = exec.trace(&model).unwrap();
        let got = after(&model, &trace, &HiocoConfig::default())
            .unwrap()
            .expect("the recorded trace replays under its own inputs");
        let a = got.values.get("x").unwrap().value();
        let b = expected.values.get("x").unwrap().value();
        assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn out_set_reports_outputs_and_agility() {
        let model = build_thermostat();
        let start = model.start_state().unwrap();
        let out = out_set(&model, &start, Urgency::Urgent).unwrap();
        assert_eq!(out, [XI.to_string()].into());

        let mut vals = Valuation::new();
        vals.insert("x", 18.5);
        let pinned = State::new("mode_ON".to_string(), vals);
        let out = out_set(&model, &pinned, Urgency::Urgent).unwrap();
        assert_eq!(out, ["OFF".to_string()].into());
    }

    #[test]
    fn infilter_keeps_matching_input_contexts() {
        let model = lag();
        let state = model.start_state().unwrap();
        let config = SimConfig::default();
        let hold = |level: f64| {
            Trajectory::new(vec![
                (0.0, {
                    let mut v = Valuation::new();
                    v.insert("u", level);
                    v
                }),
                (1.0, {
                    let mut v = Valuation::new();
                    v.insert("u", level);
                    v
                }),
            ])
            .unwrap()
        };
        let driven = flow_from(&model, &state, 1.0, Some(&hold(1.0)), &config).unwrap();
        let idle = flow_from(&model, &state, 1.0, None, &config).unwrap();
        let allowed = vec![driven.clone()];
        let kept = infilter(
            &[driven.clone(), idle.clone()],
            &allowed,
            &model.input_vars,
            DELTA_MERGE,
        )
        .unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0], driven);
        assert!(infilter(&[driven], &[], &model.input_vars, DELTA_MERGE)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn hioco_accepts_the_model_against_itself() {
        let model = build_thermostat();
        let exec = simulate(&model, &quiet(10.0), &SimConfig::default()).unwrap();
        let tests = vec![exec.trace(&model).unwrap()];
        let report = hioco(&model, &model, &tests, &[0.5, 2.0], &HiocoConfig::default()).unwrap();
        assert!(report.conforms);
        assert_eq!(report.outcomes, vec![TestOutcome::Passed]);
    }

    #[test]
    fn hioco_flags_an_extra_enabled_output() {
        let spec = build_thermostat();
        let imp = chatty_thermostat();
        let exec = simulate(&spec, &quiet(10.0), &SimConfig::default()).unwrap();
        let seq = exec.to_sequence().unwrap();
        let prefix = HybridSequence::new(
            seq.trajectories()[..3].to_vec(),
            seq.actions()[..2].to_vec(),
        )
        .unwrap()
        .restrict(&spec.external_vars())
        .unwrap();
        let test = Trace::new(spec.signature(), prefix).unwrap();
        let report = hioco(&imp, &spec, &[test], &[1.0], &HiocoConfig::default()).unwrap();
        assert!(!report.conforms);
        assert_eq!(
            report.outcomes,
            vec![TestOutcome::ForbiddenOutput {
                action: "ON".to_string()
            }]
        );
    }

    #[test]
    fn hioco_rejects_tests_outside_the_specification() {
        let spec = build_thermostat();
        let mut warm = build_thermostat();
        let heat = warm
            .locations
            .iter_mut()
            .find(|l| l.name == "mode_ON")
            .unwrap();
        heat.flow
            .insert("x".to_string(), Expr::parse("-x + 19").unwrap());
        let warm = warm.validated().unwrap();
        let exec = simulate(&warm, &quiet(7.0), &SimConfig::default()).unwrap();
        let test = exec.trace(&warm).unwrap();
        let err = hioco(&warm, &spec, &[test], &[1.0], &HiocoConfig::default());
        assert!(matches!(
            err,
            Err(ConformanceError::TestNotSpecTrace { index: 0 })
        ));
    }
}
