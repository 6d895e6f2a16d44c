//! Hybrid I/O automata: locations with ODE flows and invariants, guarded
//! labeled transitions, and disjoint input/output/internal partitions of
//! both variables and actions.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::expr::{CmpOp, EvalError, Expr, Predicate};
use crate::valuation::Valuation;

/// Reserved name of the agility marker: the pseudo output action that is
/// enabled in a state exactly when time can still elapse there. It may never
/// be declared or appear on a transition.
pub const XI: &str = "xi";

/// Invariant-boundary tolerance for the agility test: a state on the boundary
/// counts as agile when one integration micro-step keeps the invariant slack
/// above `-AGILITY_TOL`.
pub const AGILITY_TOL: f64 = 1e-9;

const AGILITY_STEP: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("`{0}` is declared in more than one variable or action class")]
    OverlappingDeclaration(String),
    #[error("`{}` is reserved for the agility marker and cannot be declared", XI)]
    ReservedName,
    #[error("variable `{0}` is also declared as an action")]
    VariableActionClash(String),
    #[error("duplicate location `{0}`")]
    DuplicateLocation(String),
    #[error("automaton has no locations")]
    NoLocations,
    #[error("location `{location}` has no flow for internal variable `{variable}`")]
    MissingFlow { location: String, variable: String },
    #[error("location `{location}` defines a flow for `{variable}`, which is not internal")]
    FlowForNonInternal { location: String, variable: String },
    #[error("location `{location}` has no output map for output variable `{variable}`")]
    MissingOutput { location: String, variable: String },
    #[error("location `{location}` maps `{variable}`, which is not an output variable")]
    OutputForNonOutput { location: String, variable: String },
    #[error("{context} mentions undeclared variable `{variable}`")]
    UndeclaredVariable { context: String, variable: String },
    #[error("transition {index} refers to unknown location `{0}`", .location)]
    UnknownLocation { index: usize, location: String },
    #[error("transition {index} is labeled with undeclared action `{action}`")]
    UnknownAction { index: usize, action: String },
    #[error("transition {index} resets `{variable}`, which is not an internal variable")]
    ResetNonInternal { index: usize, variable: String },
    #[error(
        "transitions from `{location}` on `{action}` cannot be proven deterministic: \
         guards may overlap"
    )]
    AmbiguousTransitions { location: String, action: String },
    #[error("automaton has no start state")]
    NoStart,
    #[error("start state names unknown location `{0}`")]
    StartLocationUnknown(String),
    #[error("start state must assign exactly the internal variables")]
    StartVariablesMismatch,
    #[error("start state violates the invariant of `{0}`")]
    StartInvariantViolated(String),
    #[error("start state of a deterministic run must be unique, found {0}")]
    StartNotUnique(usize),
    #[error("evaluating `{context}`: {source}")]
    Eval {
        context: String,
        #[source]
        source: EvalError,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum StepError {
    #[error("action `{action}` is not enabled in location `{location}`")]
    NotEnabled { action: String, location: String },
    #[error("more than one transition on `{action}` is enabled in `{location}`")]
    Nondeterministic { action: String, location: String },
    #[error("transition on `{action}` leads to a state violating the invariant of `{target}`")]
    TargetInvariantViolated { action: String, target: String },
    #[error("unknown location `{0}`")]
    UnknownLocation(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A mode of continuous evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub name: String,
    /// Right-hand side of `dx/dt` per internal variable.
    pub flow: BTreeMap<String, Expr>,
    pub invariant: Predicate,
    /// Output variable definitions in terms of internal and input variables.
    pub outputs: BTreeMap<String, Expr>,
}

/// A guarded, labeled jump between locations.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRule {
    pub source: String,
    pub target: String,
    pub action: String,
    pub guard: Predicate,
    /// Assignments applied to internal variables on the jump; variables not
    /// mentioned keep their value.
    pub resets: BTreeMap<String, Expr>,
}

/// A discrete state: the current location plus a valuation of the internal
/// variables.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub location: String,
    pub values: Valuation,
}

impl State {
    pub fn new(location: impl Into<String>, values: Valuation) -> State {
        State {
            location: location.into(),
            values,
        }
    }
}

/// A hybrid I/O automaton.
///
/// Variables and actions are each partitioned into input, output, and
/// internal classes; the partitions are disjoint and share no names with
/// each other. Input actions are always accepted: a state with no matching
/// transition absorbs the action as a stutter step that leaves the state
/// unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Hioa {
    pub name: String,
    pub input_vars: BTreeSet<String>,
    pub output_vars: BTreeSet<String>,
    pub internal_vars: BTreeSet<String>,
    pub input_actions: BTreeSet<String>,
    pub output_actions: BTreeSet<String>,
    pub internal_actions: BTreeSet<String>,
    pub locations: Vec<Location>,
    pub transitions: Vec<TransitionRule>,
    /// Start states. Simulation and replay require exactly one.
    pub init: Vec<(String, Valuation)>,
}

/// How an input action is accepted in a location, per [`Hioa::check_e1`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputAcceptance {
    /// A transition with a constant-true guard accepts the action everywhere.
    Unconditional,
    /// Transitions exist but their guards can fail; stuttering fills the gap.
    Guarded,
    /// No transition at all; the action is always absorbed by stuttering.
    StutterOnly,
}

/// Result of the input-enabledness scan.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEnablingReport {
    /// One entry per (location, input action) pair.
    pub entries: Vec<(String, String, InputAcceptance)>,
}

impl InputEnablingReport {
    /// Input actions are always accepted thanks to stutter semantics, so the
    /// scan cannot fail; it only documents where stuttering carries the load.
    pub fn satisfied(&self) -> bool {
        true
    }

    /// Pairs that are accepted by stuttering at least somewhere.
    pub fn stutter_reliant(&self) -> Vec<(&str, &str)> {
        self.entries
            .iter()
            .filter(|(_, _, m)| *m != InputAcceptance::Unconditional)
            .map(|(l, a, _)| (l.as_str(), a.as_str()))
            .collect()
    }
}

impl Hioa {
    /// Validates the model and returns it. Every constructor path (builders,
    /// the text format parser, tests) funnels through this check.
    pub fn validated(self) -> Result<Hioa, ModelError> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = BTreeSet::new();
        for name in self
            .input_vars
            .iter()
            .chain(&self.output_vars)
            .chain(&self.internal_vars)
        {
            if name == XI {
                return Err(ModelError::ReservedName);
            }
            if !seen.insert(name.clone()) {
                return Err(ModelError::OverlappingDeclaration(name.clone()));
            }
        }
        let vars = seen.clone();
        for name in self
            .input_actions
            .iter()
            .chain(&self.output_actions)
            .chain(&self.internal_actions)
        {
            if name == XI {
                return Err(ModelError::ReservedName);
            }
            if vars.contains(name) {
                return Err(ModelError::VariableActionClash(name.clone()));
            }
            if !seen.insert(name.clone()) {
                return Err(ModelError::OverlappingDeclaration(name.clone()));
            }
        }

        if self.locations.is_empty() {
            return Err(ModelError::NoLocations);
        }
        let mut loc_names = BTreeSet::new();
        for loc in &self.locations {
            if !loc_names.insert(loc.name.clone()) {
                return Err(ModelError::DuplicateLocation(loc.name.clone()));
            }
        }

        // Flows, invariants, and output maps may read internal and input
        // variables; guards and resets read internal variables only, since
        // they are evaluated on discrete states.
        let flow_scope: BTreeSet<String> =
            self.internal_vars.union(&self.input_vars).cloned().collect();
        for loc in &self.locations {
            for x in &self.internal_vars {
                if !loc.flow.contains_key(x) {
                    return Err(ModelError::MissingFlow {
                        location: loc.name.clone(),
                        variable: x.clone(),
                    });
                }
            }
            for (x, e) in &loc.flow {
                if !self.internal_vars.contains(x) {
                    return Err(ModelError::FlowForNonInternal {
                        location: loc.name.clone(),
                        variable: x.clone(),
                    });
                }
                check_scope(e, &flow_scope, || {
                    format!("flow of `{x}` in location `{}`", loc.name)
                })?;
            }
            for y in &self.output_vars {
                if !loc.outputs.contains_key(y) {
                    return Err(ModelError::MissingOutput {
                        location: loc.name.clone(),
                        variable: y.clone(),
                    });
                }
            }
            for (y, e) in &loc.outputs {
                if !self.output_vars.contains(y) {
                    return Err(ModelError::OutputForNonOutput {
                        location: loc.name.clone(),
                        variable: y.clone(),
                    });
                }
                check_scope(e, &flow_scope, || {
                    format!("output map of `{y}` in location `{}`", loc.name)
                })?;
            }
            let mut inv_vars = BTreeSet::new();
            loc.invariant.variables(&mut inv_vars);
            for v in inv_vars {
                if !flow_scope.contains(&v) {
                    return Err(ModelError::UndeclaredVariable {
                        context: format!("invariant of `{}`", loc.name),
                        variable: v,
                    });
                }
            }
        }

        let all_actions: BTreeSet<&String> = self
            .input_actions
            .iter()
            .chain(&self.output_actions)
            .chain(&self.internal_actions)
            .collect();
        for (index, rule) in self.transitions.iter().enumerate() {
            for loc in [&rule.source, &rule.target] {
                if !loc_names.contains(loc) {
                    return Err(ModelError::UnknownLocation {
                        index,
                        location: loc.clone(),
                    });
                }
            }
            if !all_actions.contains(&rule.action) {
                return Err(ModelError::UnknownAction {
                    index,
                    action: rule.action.clone(),
                });
            }
            let mut guard_vars = BTreeSet::new();
            rule.guard.variables(&mut guard_vars);
            for v in guard_vars {
                if !self.internal_vars.contains(&v) {
                    return Err(ModelError::UndeclaredVariable {
                        context: format!("guard of transition {index}"),
                        variable: v,
                    });
                }
            }
            for (x, e) in &rule.resets {
                if !self.internal_vars.contains(x) {
                    return Err(ModelError::ResetNonInternal {
                        index,
                        variable: x.clone(),
                    });
                }
                check_scope(e, &self.internal_vars, || {
                    format!("reset of `{x}` in transition {index}")
                })?;
            }
        }
        self.check_determinism()?;

        if self.init.is_empty() {
            return Err(ModelError::NoStart);
        }
        for (loc_name, values) in &self.init {
            let loc = self
                .location(loc_name)
                .ok_or_else(|| ModelError::StartLocationUnknown(loc_name.clone()))?;
            if values.name_set() != self.internal_vars {
                return Err(ModelError::StartVariablesMismatch);
            }
            let holds = loc
                .invariant
                .holds(&|n| values.get(n).map(|v| v.value()))
                .map_err(|source| ModelError::Eval {
                    context: format!("invariant of `{loc_name}` at the start state"),
                    source,
                })?;
            if !holds {
                return Err(ModelError::StartInvariantViolated(loc_name.clone()));
            }
        }
        Ok(())
    }

    /// Rejects transition pairs on the same (location, action) unless both
    /// guards are single-variable interval constraints on the same variable
    /// with provably disjoint truth sets. Guards this check cannot reason
    /// about are rejected outright; runtime double-enable detection in
    /// [`Hioa::discrete_step`] backstops anything that slips through.
    fn check_determinism(&self) -> Result<(), ModelError> {
        for (i, a) in self.transitions.iter().enumerate() {
            for b in &self.transitions[i + 1..] {
                if a.source != b.source || a.action != b.action {
                    continue;
                }
                let disjoint = match (a.guard.as_interval(), b.guard.as_interval()) {
                    (Some(ga), Some(gb)) => intervals_disjoint(ga, gb),
                    _ => false,
                };
                if !disjoint {
                    return Err(ModelError::AmbiguousTransitions {
                        location: a.source.clone(),
                        action: a.action.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn location(&self, name: &str) -> Option<&Location> {
        self.locations.iter().find(|l| l.name == name)
    }

    /// The externally visible interface of the model.
    pub fn signature(&self) -> crate::sequence::ExternalSignature {
        crate::sequence::ExternalSignature {
            input_vars: self.input_vars.clone(),
            output_vars: self.output_vars.clone(),
            input_actions: self.input_actions.clone(),
            output_actions: self.output_actions.clone(),
        }
    }

    pub fn external_actions(&self) -> BTreeSet<String> {
        self.input_actions
            .union(&self.output_actions)
            .cloned()
            .collect()
    }

    pub fn external_vars(&self) -> BTreeSet<String> {
        self.input_vars.union(&self.output_vars).cloned().collect()
    }

    /// The unique start state; errors when the model declares several.
    pub fn start_state(&self) -> Result<State, ModelError> {
        if self.init.len() != 1 {
            return Err(ModelError::StartNotUnique(self.init.len()));
        }
        Ok(State::new(self.init[0].0.clone(), self.init[0].1.clone()))
    }

    /// Transition rules leaving `location` on `action` whose guard holds at
    /// `values`.
    fn enabled_rules(
        &self,
        location: &str,
        action: &str,
        values: &Valuation,
    ) -> Result<Vec<&TransitionRule>, EvalError> {
        let mut out = Vec::new();
        for rule in &self.transitions {
            if rule.source == location && rule.action == action {
                let lookup = |n: &str| values.get(n).map(|v| v.value());
                if rule.guard.holds(&lookup)? {
                    out.push(rule);
                }
            }
        }
        Ok(out)
    }

    /// Actions that can fire from `state`: transitions whose guard holds,
    /// plus every input action (stutter steps accept them unconditionally).
    pub fn enabled_actions(&self, state: &State) -> Result<BTreeSet<String>, StepError> {
        if self.location(&state.location).is_none() {
            return Err(StepError::UnknownLocation(state.location.clone()));
        }
        let mut out: BTreeSet<String> = self.input_actions.clone();
        for rule in &self.transitions {
            if rule.source == state.location && !out.contains(&rule.action) {
                let lookup = |n: &str| state.values.get(n).map(|v| v.value());
                if rule.guard.holds(&lookup)? {
                    out.insert(rule.action.clone());
                }
            }
        }
        Ok(out)
    }

    /// Applies `action` to `state`. A matching enabled transition performs
    /// its resets and moves to the target location; an input action with no
    /// enabled transition stutters, leaving the state unchanged. Output and
    /// internal actions with no enabled transition are errors.
    pub fn discrete_step(&self, state: &State, action: &str) -> Result<State, StepError> {
        if self.location(&state.location).is_none() {
            return Err(StepError::UnknownLocation(state.location.clone()));
        }
        let rules = self.enabled_rules(&state.location, action, &state.values)?;
        let rule = match rules.len() {
            0 => {
                return if self.input_actions.contains(action) {
                    Ok(state.clone())
                } else {
                    Err(StepError::NotEnabled {
                        action: action.to_string(),
                        location: state.location.clone(),
                    })
                }
            }
            1 => rules[0],
            _ => {
                return Err(StepError::Nondeterministic {
                    action: action.to_string(),
                    location: state.location.clone(),
                })
            }
        };

        let lookup = |n: &str| state.values.get(n).map(|v| v.value());
        let mut next = state.values.clone();
        for (x, e) in &rule.resets {
            next.insert(x.clone(), e.eval(&lookup)?);
        }
        let target = self
            .location(&rule.target)
            .expect("validated target location");
        let next_lookup = |n: &str| next.get(n).map(|v| v.value());
        if !target.invariant.holds(&next_lookup)? {
            return Err(StepError::TargetInvariantViolated {
                action: action.to_string(),
                target: rule.target.clone(),
            });
        }
        Ok(State::new(rule.target.clone(), next))
    }

    /// True when time can elapse at `state`: a flow trajectory of positive
    /// duration exists without leaving the invariant. Checked numerically by
    /// one RK4 micro-step; on the invariant boundary the state counts as
    /// agile when the flow does not point strictly outward.
    ///
    /// Input variables, if any, are held at zero for the probe.
    pub fn is_agile(&self, state: &State) -> Result<bool, StepError> {
        let loc = self
            .location(&state.location)
            .ok_or_else(|| StepError::UnknownLocation(state.location.clone()))?;
        let xs: Vec<&String> = self.internal_vars.iter().collect();
        let x0: Vec<f64> = xs
            .iter()
            .map(|x| state.values.get(x).map(|v| v.value()).unwrap_or(0.0))
            .collect();

        let slack_at = |vals: &[f64]| {
            let lookup = |n: &str| {
                if let Some(i) = xs.iter().position(|x| *x == n) {
                    return Some(vals[i]);
                }
                self.input_vars.contains(n).then_some(0.0)
            };
            loc.invariant.slack(&lookup)
        };
        match slack_at(&x0)? {
            None => {}
            Some(s) if s < -AGILITY_TOL => return Ok(false),
            Some(s) if s > AGILITY_TOL => return Ok(true),
            Some(_) => {}
        }

        // On (or within tolerance of) the boundary: probe one micro-step.
        let deriv = |vals: &[f64]| -> Result<Vec<f64>, EvalError> {
            let lookup = |n: &str| {
                if let Some(i) = xs.iter().position(|x| *x == n) {
                    return Some(vals[i]);
                }
                self.input_vars.contains(n).then_some(0.0)
            };
            xs.iter().map(|x| loc.flow[*x].eval(&lookup)).collect()
        };
        let h = AGILITY_STEP;
        let k1 = deriv(&x0)?;
        let k2 = deriv(&combine(&x0, &k1, h / 2.0))?;
        let k3 = deriv(&combine(&x0, &k2, h / 2.0))?;
        let k4 = deriv(&combine(&x0, &k3, h))?;
        let x1: Vec<f64> = x0
            .iter()
            .enumerate()
            .map(|(i, v)| v + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        match slack_at(&x1)? {
            None => Ok(true),
            Some(s) => Ok(s >= -AGILITY_TOL),
        }
    }

    /// Scans every (location, input action) pair and classifies how the
    /// action is accepted there. See [`InputEnablingReport`].
    pub fn check_e1(&self) -> InputEnablingReport {
        let mut entries = Vec::new();
        for loc in &self.locations {
            for action in &self.input_actions {
                let rules: Vec<&TransitionRule> = self
                    .transitions
                    .iter()
                    .filter(|r| r.source == loc.name && &r.action == action)
                    .collect();
                let mode = if rules.iter().any(|r| r.guard == Predicate::True) {
                    InputAcceptance::Unconditional
                } else if rules.is_empty() {
                    InputAcceptance::StutterOnly
                } else {
                    InputAcceptance::Guarded
                };
                entries.push((loc.name.clone(), action.clone(), mode));
            }
        }
        InputEnablingReport { entries }
    }
}

fn check_scope(
    e: &Expr,
    scope: &BTreeSet<String>,
    context: impl Fn() -> String,
) -> Result<(), ModelError> {
    let mut vars = BTreeSet::new();
    e.variables(&mut vars);
    for v in vars {
        if !scope.contains(&v) {
            return Err(ModelError::UndeclaredVariable {
                context: context(),
                variable: v,
            });
        }
    }
    Ok(())
}

fn combine(x: &[f64], k: &[f64], h: f64) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

/// Truth sets of two single-variable interval constraints are disjoint.
fn intervals_disjoint(a: (&str, CmpOp, f64), b: (&str, CmpOp, f64)) -> bool {
    let (va, opa, ca) = a;
    let (vb, opb, cb) = b;
    if va != vb {
        return false;
    }
    // Each constraint is a half-line; disjointness needs opposite directions
    // with a gap (or at most a shared boundary excluded by strictness).
    let lower = |op: CmpOp| matches!(op, CmpOp::Ge | CmpOp::Gt);
    let upper = |op: CmpOp| matches!(op, CmpOp::Le | CmpOp::Lt);
    let strict = |op: CmpOp| matches!(op, CmpOp::Lt | CmpOp::Gt);
    if lower(opa) && upper(opb) {
        ca > cb || (ca == cb && (strict(opa) || strict(opb)))
    } else if upper(opa) && lower(opb) {
        cb > ca || (ca == cb && (strict(opa) || strict(opb)))
    } else {
        false
    }
}

/// The two-mode heating model used throughout the tests and bundled as
/// `models/thermostat.hioa`: one internal temperature `x` published as the
/// output `y`, heating toward 20 in `mode_ON` while `x <= 20` and cooling
/// toward 0 in `mode_OFF` while `x >= 0`; the output action `OFF` becomes
/// enabled at `x >= 18`, the input action `ON` at `x <= 2`; started in
/// `mode_ON` at `x = 5`.
pub fn build_thermostat() -> Hioa {
    let flow_on: BTreeMap<String, Expr> =
        [("x".to_string(), Expr::parse("-x + 20").unwrap())].into();
    let flow_off: BTreeMap<String, Expr> = [("x".to_string(), Expr::parse("-x").unwrap())].into();
    let y_is_x: BTreeMap<String, Expr> = [("y".to_string(), Expr::parse("x").unwrap())].into();
    Hioa {
        name: "thermostat".to_string(),
        input_vars: BTreeSet::new(),
        output_vars: ["y".to_string()].into(),
        internal_vars: ["x".to_string()].into(),
        input_actions: ["ON".to_string()].into(),
        output_actions: ["OFF".to_string()].into(),
        internal_actions: BTreeSet::new(),
        locations: vec![
            Location {
                name: "mode_ON".to_string(),
                flow: flow_on,
                invariant: Predicate::parse("x <= 20").unwrap(),
                outputs: y_is_x.clone(),
            },
            Location {
                name: "mode_OFF".to_string(),
                flow: flow_off,
                invariant: Predicate::parse("x >= 0").unwrap(),
                outputs: y_is_x,
            },
        ],
        transitions: vec![
            TransitionRule {
                source: "mode_ON".to_string(),
                target: "mode_OFF".to_string(),
                action: "OFF".to_string(),
                guard: Predicate::parse("x >= 18").unwrap(),
                resets: BTreeMap::new(),
            },
            TransitionRule {
                source: "mode_OFF".to_string(),
                target: "mode_ON".to_string(),
                action: "ON".to_string(),
                guard: Predicate::parse("x <= 2").unwrap(),
                resets: BTreeMap::new(),
            },
        ],
        init: vec![("mode_ON".to_string(), [("x", 5.0)].into_iter().collect())],
    }
    .validated()
    .expect("the bundled thermostat model is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(loc: &str, x: f64) -> State {
        State::new(loc, [("x", x)].into_iter().collect())
    }

    #[test]
    fn thermostat_is_well_formed() {
        let a = build_thermostat();
        assert_eq!(a.external_actions().len(), 2);
        assert_eq!(a.external_vars(), ["y".to_string()].into());
        let start = a.start_state().unwrap();
        assert_eq!(start.location, "mode_ON");
        assert_eq!(start.values.get("x").unwrap().value(), 5.0);
    }

    #[test]
    fn enabled_actions_mix_guards_and_stutters() {
        let a = build_thermostat();
        // Below the OFF guard only the (always accepted) input is enabled.
        assert_eq!(
            a.enabled_actions(&state("mode_ON", 19.0)).unwrap(),
            ["ON".to_string(), "OFF".to_string()].into()
        );
        assert_eq!(
            a.enabled_actions(&state("mode_ON", 5.0)).unwrap(),
            ["ON".to_string()].into()
        );
        assert_eq!(
            a.enabled_actions(&state("mode_OFF", 1.5)).unwrap(),
            ["ON".to_string()].into()
        );
    }

    #[test]
    fn discrete_steps_fire_stutter_and_fail() {
        let a = build_thermostat();
        let after_off = a.discrete_step(&state("mode_ON", 18.5), "OFF").unwrap();
        assert_eq!(after_off.location, "mode_OFF");
        assert_eq!(after_off.values.get("x").unwrap().value(), 18.5);

        // Input action with a failing guard stutters.
        let stutter = a.discrete_step(&state("mode_ON", 5.0), "ON").unwrap();
        assert_eq!(stutter, state("mode_ON", 5.0));

        // Output action with a failing guard is an error.
        let err = a.discrete_step(&state("mode_ON", 5.0), "OFF").unwrap_err();
        assert!(matches!(err, StepError::NotEnabled { .. }));
    }

    #[test]
    fn resets_are_applied_on_the_jump() {
        let mut a = build_thermostat();
        a.transitions[0].resets =
            [("x".to_string(), Expr::parse("x / 2").unwrap())].into();
        let a = a.validated().unwrap();
        let next = a.discrete_step(&state("mode_ON", 18.0), "OFF").unwrap();
        assert_eq!(next.values.get("x").unwrap().value(), 9.0);
    }

    #[test]
    fn agility_along_the_invariant_boundary() {
        let a = build_thermostat();
        // Interior state: time can always elapse.
        assert!(a.is_agile(&state("mode_ON", 5.0)).unwrap());
        // On the boundary with the flow vanishing there: still agile.
        assert!(a.is_agile(&state("mode_ON", 20.0)).unwrap());

        // Flow pointing strictly out of the invariant: not agile.
        let mut b = build_thermostat();
        b.locations[0].flow = [("x".to_string(), Expr::parse("1").unwrap())].into();
        b.locations[0].invariant = Predicate::parse("x <= 0").unwrap();
        b.init = vec![("mode_ON".to_string(), [("x", -1.0)].into_iter().collect())];
        let b = b.validated().unwrap();
        assert!(!b.is_agile(&state("mode_ON", 0.0)).unwrap());
        assert!(!b.is_agile(&state("mode_ON", 0.5)).unwrap());
    }

    #[test]
    fn input_enabling_scan_classifies_pairs() {
        let a = build_thermostat();
        let report = a.check_e1();
        assert!(report.satisfied());
        let modes: BTreeMap<(String, String), InputAcceptance> = report
            .entries
            .iter()
            .map(|(l, n, m)| ((l.clone(), n.clone()), *m))
            .collect();
        assert_eq!(
            modes[&("mode_ON".to_string(), "ON".to_string())],
            InputAcceptance::StutterOnly
        );
        assert_eq!(
            modes[&("mode_OFF".to_string(), "ON".to_string())],
            InputAcceptance::Guarded
        );
        assert_eq!(report.stutter_reliant().len(), 2);
    }

    #[test]
    fn validation_rejects_malformed_models() {
        let mut dup = build_thermostat();
        dup.locations.push(dup.locations[0].clone());
        assert!(matches!(
            dup.validate().unwrap_err(),
            ModelError::DuplicateLocation(_)
        ));

        let mut reserved = build_thermostat();
        reserved.output_actions.insert(XI.to_string());
        assert_eq!(reserved.validate().unwrap_err(), ModelError::ReservedName);

        let mut clash = build_thermostat();
        clash.output_actions.insert("x".to_string());
        assert!(matches!(
            clash.validate().unwrap_err(),
            ModelError::VariableActionClash(_)
        ));

        let mut unknown = build_thermostat();
        unknown.locations[0].flow =
            [("x".to_string(), Expr::parse("-x + z").unwrap())].into();
        assert!(matches!(
            unknown.validate().unwrap_err(),
            ModelError::UndeclaredVariable { .. }
        ));

        let mut bad_start = build_thermostat();
        bad_start.init = vec![("mode_ON".to_string(), [("x", 25.0)].into_iter().collect())];
        assert!(matches!(
            bad_start.validate().unwrap_err(),
            ModelError::StartInvariantViolated(_)
        ));
    }

    #[test]
    fn determinism_check_accepts_disjoint_interval_guards() {
        let mut a = build_thermostat();
        // Same (location, action) with provably disjoint guards is fine.
        a.transitions.push(TransitionRule {
            source: "mode_OFF".to_string(),
            target: "mode_OFF".to_string(),
            action: "ON".to_string(),
            guard: Predicate::parse("x >= 18").unwrap(),
            resets: BTreeMap::new(),
        });
        assert!(a.clone().validated().is_ok());

        // Overlapping guards on the same pair are rejected.
        a.transitions.push(TransitionRule {
            source: "mode_OFF".to_string(),
            target: "mode_ON".to_string(),
            action: "ON".to_string(),
            guard: Predicate::parse("x >= 17").unwrap(),
            resets: BTreeMap::new(),
        });
        assert!(matches!(
            a.validate().unwrap_err(),
            ModelError::AmbiguousTransitions { .. }
        ));
    }

    #[test]
    fn runtime_nondeterminism_is_detected() {
        // Bypass validation to exercise the backstop.
        let mut a = build_thermostat();
        a.transitions.push(TransitionRule {
            source: "mode_ON".to_string(),
            target: "mode_ON".to_string(),
            action: "OFF".to_string(),
            guard: Predicate::parse("x >= 17").unwrap(),
            resets: BTreeMap::new(),
        });
        let err = a.discrete_step(&state("mode_ON", 19.0), "OFF").unwrap_err();
        assert!(matches!(err, StepError::Nondeterministic { .. }));
    }
}
