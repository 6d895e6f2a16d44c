//! Simulation and approximate conformance checking for hybrid I/O automata.
//!
//! The crate models cyber-physical components as hybrid I/O automata:
//! locations with ODE flows and invariants, connected by guarded, labeled
//! transitions over disjoint sets of input, output, and internal actions and
//! variables. On top of that model it provides
//!
//! * a fixed-step RK4 simulator with bisected event detection that produces
//!   executions (alternating trajectories and actions),
//! * sampled traces over hybrid time domains, where action occurrences are
//!   encoded as indicator variables spiking to infinity at the firing instant,
//! * approximate trace comparison: `(tau, eps)`-closeness in a plain
//!   (action-insensitive) and an extended (action-sensitive) mode,
//! * conformance relations between finite suites of input/output trace pairs
//!   and an exact, replay-based input-output conformance check between
//!   automata, and
//! * a randomized harness for the semi-transitivity law of the extended
//!   closeness relation.
//!
//! The numeric surface is deliberately small: everything is `f64`, all
//! tolerances are explicit, and identical inputs produce identical results.

pub mod atrace;
pub mod automaton;
pub mod closeness;
pub mod conformance;
pub mod dsl;
pub mod expr;
pub mod ext_real;
pub mod report;
pub mod semitrans;
pub mod sequence;
pub mod simulate;
pub mod trace_io;
pub mod trajectory;
pub mod valuation;

pub use atrace::{ATrace, HybridTimeDomain};
pub use automaton::{build_thermostat, Hioa, Location, State, TransitionRule, XI};
pub use closeness::{
    close_ext, close_naive, close_plain, min_epsilon, CloseMode, ClosenessError,
    ClosenessParams, ClosenessVerdict, Counterexample, Direction, PointId, Witness,
};
pub use conformance::{
    after, conforms, hioco, infilter, input_equal, match_pair, out_set, traj_set,
    ConformanceError, ConformanceReport, HiocoConfig, HiocoReport, PairOutcome, PairSuite,
    Provenance, TestOutcome,
};
pub use dsl::{parse_automaton, print_automaton, DslError};
pub use expr::{Expr, Predicate};
pub use ext_real::ExtReal;
pub use report::{
    closeness_report, conformance_report, hioco_report, semitrans_report, sig9, witness_csv,
    Report,
};
pub use semitrans::{
    semitrans_check, semitrans_trial, SemitransConfig, SemitransReport, SemitransTrial,
};
pub use sequence::{ExternalSignature, HybridSequence, SequenceError, SolutionPair, Trace};
pub use trace_io::{read_stimulus, read_trace, write_stimulus, write_trace, TraceIoError};
pub use simulate::{
    flow_from, simulate, solution_pair, Execution, SimConfig, SimError, Stimulus, Urgency,
};
pub use trajectory::Trajectory;
pub use valuation::Valuation;

/// Default tolerance for merging sample points that should coincide, e.g.
/// trajectory concatenation boundaries and input-equality of solution pairs.
pub const DELTA_MERGE: f64 = 1e-9;

/// Default tolerance for replaying a recorded trace against an automaton.
pub const DELTA_REPLAY: f64 = 1e-6;
