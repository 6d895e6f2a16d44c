//! Law-level tests over randomized inputs: trajectory algebra closure,
//! closeness relation laws, agreement between the windowed checker and the
//! brute-force one, serialization round trips, and self-conformance of the
//! shipped models.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hyconf::expr::CmpOp;
use hyconf::{
    close_ext, close_naive, close_plain, conforms, hioco, min_epsilon, parse_automaton,
    print_automaton, read_stimulus, read_trace, simulate, write_stimulus, write_trace, ATrace,
    CloseMode, ClosenessParams, Expr, ExtReal, HiocoConfig, PairSuite, Predicate, SimConfig,
    Stimulus, Trajectory, Valuation,
};

fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn val(pairs: &[(&str, f64)]) -> Valuation {
    let mut v = Valuation::new();
    for (name, x) in pairs {
        v.insert(*name, *x);
    }
    v
}

/// A random trajectory over `p` and `q` with 2 to 7 samples.
fn rand_trajectory(rng: &mut ChaCha8Rng, start: f64) -> Trajectory {
    let n = rng.random_range(2..=7);
    let mut t = start;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        points.push((
            t,
            val(&[
                ("p", rng.random_range(-3.0..3.0)),
                ("q", rng.random_range(-3.0..3.0)),
            ]),
        ));
        t += rng.random_range(0.1..0.8);
    }
    Trajectory::new(points).expect("strictly increasing times")
}

/// A random sampled trace over `p`, `q`, and one action indicator `blip`,
/// with 1 to 3 segments.
fn rand_atrace(rng: &mut ChaCha8Rng) -> ATrace {
    let segments = rng.random_range(1..=3);
    let mut start = rng.random_range(0.0..0.5);
    let mut out = Vec::with_capacity(segments);
    for j in 0..segments {
        let n = rng.random_range(2..=6);
        let mut points = Vec::with_capacity(n);
        let mut t = start;
        for i in 0..n {
            let closing = i == n - 1;
            let spikes = closing && (j < segments - 1 || rng.random_bool(0.2));
            let mut v = val(&[
                ("p", rng.random_range(-3.0..3.0)),
                ("q", rng.random_range(-3.0..3.0)),
            ]);
            v.insert("blip", if spikes { f64::INFINITY } else { 0.0 });
            points.push((t, v));
            if !closing {
                t += rng.random_range(0.1..0.8);
            }
        }
        start = t;
        out.push(Trajectory::new(points).expect("strictly increasing times"));
    }
    ATrace::new(out, BTreeSet::from(["blip".to_string()])).expect("well-formed by construction")
}

/// A pair to compare: half the time a shifted and offset copy, half the
/// time two unrelated traces.
fn rand_pair(rng: &mut ChaCha8Rng) -> (ATrace, ATrace) {
    let a = rand_atrace(rng);
    let b = if rng.random_bool(0.5) {
        let dt = rng.random_range(0..5) as f64 * 0.125;
        let dv = rng.random_range(-0.6..0.6);
        a.shift_time(dt).expect("forward shift").offset_values(dv)
    } else {
        rand_atrace(rng)
    };
    (a, b)
}

fn rand_params(rng: &mut ChaCha8Rng) -> ClosenessParams {
    let tau = [0.0, 0.05, 0.2, 0.5, 1.0][rng.random_range(0..5)];
    let epsilon = [0.1, 0.4, 1.0, 2.0][rng.random_range(0..4)];
    let horizon = [2.0, 4.0, 100.0][rng.random_range(0..3)];
    let max_jumps = rng.random_range(0..=4);
    ClosenessParams::new(tau, epsilon, horizon, max_jumps).expect("valid parameters")
}

// ---------------------------------------------------------------------
// Trajectory algebra closure laws.
// ---------------------------------------------------------------------

proptest! {
    #[test]
    fn prefixes_are_prefixes(seed in any::<u64>()) {
        let mut rng = rng_from(seed);
        let start = rng.random_range(0.0..2.0);
        let traj = rand_trajectory(&mut rng, start);
        // Both an existing sample time and an off-sample cut must work.
        let at_sample = traj.times()[rng.random_range(0..traj.len())];
        let interior = traj.start_time() + traj.duration() * rng.random_range(0.0..1.0);
        for t in [at_sample, interior] {
            let p = traj.prefix(t).expect("t is inside the domain");
            prop_assert!(p.is_prefix_of(&traj, 0.0));
            prop_assert_eq!(p.end_time(), t);
        }
    }

    #[test]
    fn suffixes_re_base_to_zero(seed in any::<u64>()) {
        let mut rng = rng_from(seed);
        let start = rng.random_range(0.0..2.0);
        let traj = rand_trajectory(&mut rng, start);
        let t = traj.start_time() + traj.duration() * rng.random_range(0.0..=1.0);
        let s = traj.suffix(t).expect("t is inside the domain");
        prop_assert_eq!(s.start_time(), 0.0);
        prop_assert_eq!(s.vars(), traj.vars());
        let tail = traj.end_time() - t;
        prop_assert!((s.duration() - tail).abs() <= 1e-12);
    }

    #[test]
    fn concatenation_recovers_both_pieces(seed in any::<u64>()) {
        let mut rng = rng_from(seed);
        let start = rng.random_range(0.0..2.0);
        let whole = rand_trajectory(&mut rng, start);
        let cut = rng.random_range(1..whole.len());
        let m = whole.times()[cut];
        let left = whole.prefix(m).expect("sample time");
        let right = Trajectory::new(
            whole.iter().skip(cut).map(|(t, v)| (t, v.clone())).collect(),
        )
        .expect("tail of a valid trajectory");
        let glued = left.concat(&right, 0.0).expect("shared boundary sample");
        prop_assert_eq!(&glued, &whole);
        prop_assert_eq!(&glued.prefix(m).expect("still a sample"), &left);
    }

    #[test]
    fn shift_then_suffix_is_identity(seed in any::<u64>()) {
        let mut rng = rng_from(seed);
        let traj = rand_trajectory(&mut rng, 0.0);
        let dt = rng.random_range(0.0..3.0);
        let back = traj.shift(dt).expect("forward shift").suffix(dt).expect("domain start");
        prop_assert_eq!(back.len(), traj.len());
        for ((ta, va), (tb, vb)) in back.iter().zip(traj.iter()) {
            prop_assert!((ta - tb).abs() <= 1e-12);
            prop_assert_eq!(va, vb);
        }
    }
}

// ---------------------------------------------------------------------
// Expression and predicate syntax round trips.
// ---------------------------------------------------------------------

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0.001..100.0f64).prop_map(Expr::Num),
        prop_oneof![Just("x"), Just("y"), Just("u")].prop_map(|v| Expr::Var(v.to_string())),
    ];
    leaf.prop_recursive(3, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            inner.prop_map(|a| Expr::Exp(Box::new(a))),
        ]
    })
}

proptest! {
    #[test]
    fn expressions_print_and_parse_back(e in arb_expr()) {
        let printed = e.to_string();
        let reparsed = Expr::parse(&printed).expect("printer output parses");
        prop_assert_eq!(&reparsed, &e, "printed as `{}`", printed);
    }

    #[test]
    fn predicates_print_and_parse_back(
        lhs in arb_expr(),
        rhs in arb_expr(),
        op in prop_oneof![Just(CmpOp::Le), Just(CmpOp::Ge), Just(CmpOp::Lt), Just(CmpOp::Gt)],
    ) {
        let pred = Predicate::Cmp {
            lhs: lhs.clone(),
            op,
            rhs: rhs.clone(),
        };
        let printed = pred.to_string();
        let reparsed = Predicate::parse(&printed).expect("printer output parses");
        prop_assert_eq!(reparsed, pred, "printed as `{}`", printed);
    }
}

// ---------------------------------------------------------------------
// CSV round trips.
// ---------------------------------------------------------------------

proptest! {
    #[test]
    fn trace_csv_round_trips(seed in any::<u64>()) {
        let mut rng = rng_from(seed);
        let trace = rand_atrace(&mut rng);
        let text = write_trace(&trace);
        let reread = read_trace(&text).expect("own output loads");
        prop_assert_eq!(write_trace(&reread), text);
        prop_assert_eq!(reread.action_vars(), trace.action_vars());
        prop_assert_eq!(reread.domain().boundaries(), trace.domain().boundaries());
    }

    #[test]
    fn stimulus_csv_round_trips(seed in any::<u64>()) {
        let mut rng = rng_from(seed);
        let horizon = 10.0;
        let schedule: Vec<(f64, String)> = (0..rng.random_range(0..4))
            .map(|_| {
                let name = if rng.random_bool(0.5) { "go" } else { "stop" };
                (rng.random_range(0.0..horizon), name.to_string())
            })
            .collect();
        let mut schedule = schedule;
        schedule.sort_by(|a, b| a.0.total_cmp(&b.0));
        let signals = if rng.random_bool(0.5) {
            let n = rng.random_range(2..6);
            let mut points = Vec::with_capacity(n);
            for i in 0..n {
                let t = horizon * i as f64 / (n - 1) as f64;
                points.push((t, val(&[("u", rng.random_range(-2.0..2.0))])));
            }
            Some(Trajectory::new(points).expect("increasing grid"))
        } else {
            None
        };
        let stim = Stimulus { horizon, schedule, signals };
        let text = write_stimulus(&stim);
        let reread = read_stimulus(&text, horizon).expect("own output loads");
        prop_assert_eq!(reread, stim);
    }
}

// ---------------------------------------------------------------------
// Closeness relation laws, seeded.
// ---------------------------------------------------------------------

#[test]
fn closeness_is_reflexive() {
    let mut rng = rng_from(11);
    for _ in 0..60 {
        let a = rand_atrace(&mut rng);
        let params = rand_params(&mut rng);
        let v = close_ext(&a, &a, &params).unwrap();
        assert!(v.close, "a trace is close to itself at {params:?}");
        let m = min_epsilon(&a, &a, &params, CloseMode::Extended).unwrap();
        assert_eq!(m, ExtReal::ZERO);
    }
}

#[test]
fn closeness_is_symmetric() {
    let mut rng = rng_from(12);
    for _ in 0..60 {
        let (a, b) = rand_pair(&mut rng);
        let params = rand_params(&mut rng);
        for mode in [CloseMode::Plain, CloseMode::Extended] {
            let ab = close_naive(&a, &b, &params, mode).unwrap();
            let ba = close_naive(&b, &a, &params, mode).unwrap();
            assert_eq!(ab, ba, "symmetry at {params:?}");
        }
    }
}

#[test]
fn closeness_is_monotone_in_both_slacks() {
    let mut rng = rng_from(13);
    for _ in 0..60 {
        let (a, b) = rand_pair(&mut rng);
        let params = rand_params(&mut rng);
        let v = close_ext(&a, &b, &params).unwrap();
        if !v.close {
            continue;
        }
        let wider = ClosenessParams::new(
            params.tau + rng.random_range(0.0..0.5),
            params.epsilon + rng.random_range(0.0..0.5),
            params.horizon,
            params.max_jumps,
        )
        .unwrap();
        assert!(
            close_ext(&a, &b, &wider).unwrap().close,
            "widening the slacks keeps {params:?} close"
        );
    }
}

#[test]
fn extended_closeness_implies_plain() {
    let mut rng = rng_from(14);
    for _ in 0..60 {
        let (a, b) = rand_pair(&mut rng);
        let params = rand_params(&mut rng);
        if close_ext(&a, &b, &params).unwrap().close {
            assert!(
                close_plain(&a, &b, &params).unwrap().close,
                "dropping the action columns cannot break closeness at {params:?}"
            );
        }
    }
}

#[test]
fn windowed_checker_agrees_with_the_oracle() {
    let mut rng = rng_from(15);
    for i in 0..150 {
        let (a, b) = rand_pair(&mut rng);
        let params = rand_params(&mut rng);
        for mode in [CloseMode::Plain, CloseMode::Extended] {
            let fast = match mode {
                CloseMode::Plain => close_plain(&a, &b, &params).unwrap(),
                CloseMode::Extended => close_ext(&a, &b, &params).unwrap(),
            };
            let slow = close_naive(&a, &b, &params, mode).unwrap();
            assert_eq!(fast.close, slow, "pair {i} at {params:?} in {mode:?}");
        }
    }
}

#[test]
fn min_epsilon_is_the_closeness_threshold() {
    let mut rng = rng_from(16);
    let mut checked = 0;
    for _ in 0..80 {
        let (a, b) = rand_pair(&mut rng);
        let base = rand_params(&mut rng);
        let m = min_epsilon(&a, &b, &base, CloseMode::Extended).unwrap();
        if m.is_infinite() || m == ExtReal::ZERO {
            continue;
        }
        let at = ClosenessParams::new(base.tau, m.value(), base.horizon, base.max_jumps).unwrap();
        assert!(close_naive(&a, &b, &at, CloseMode::Extended).unwrap());
        let below = f64::from_bits(m.value().to_bits() - 1);
        let under = ClosenessParams::new(base.tau, below, base.horizon, base.max_jumps).unwrap();
        assert!(!close_naive(&a, &b, &under, CloseMode::Extended).unwrap());
        checked += 1;
    }
    assert!(checked > 10, "enough nontrivial thresholds, got {checked}");
}

// ---------------------------------------------------------------------
// Shipped model files: parse, print, simulate, self-conformance.
// ---------------------------------------------------------------------

fn load_model(name: &str) -> hyconf::Hioa {
    let path = format!("{}/../../models/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    parse_automaton(&text).expect("shipped model parses")
}

#[test]
fn shipped_models_parse_and_round_trip() {
    for name in ["thermostat.hioa", "heater.hioa"] {
        let model = load_model(name);
        let printed = print_automaton(&model);
        let reparsed = parse_automaton(&printed).expect("printer output parses");
        assert_eq!(reparsed, model, "{name} round-trips");
    }
}

#[test]
fn shipped_thermostat_matches_the_builtin() {
    assert_eq!(load_model("thermostat.hioa"), hyconf::build_thermostat());
}

#[test]
fn shipped_models_conform_to_themselves() {
    let config = SimConfig::default();
    let params = ClosenessParams::new(0.5, 0.5, 10.0, 10).unwrap();

    let thermostat = load_model("thermostat.hioa");
    let stims = vec![Stimulus::quiet(6.0), Stimulus::quiet(10.0)];
    let suite = PairSuite::from_model(&thermostat, &stims, &config).unwrap();
    let report = conforms(&suite, &suite, &params, CloseMode::Extended).unwrap();
    assert!(report.conforms);

    let exec = simulate(&thermostat, &Stimulus::quiet(6.0), &config).unwrap();
    let trace = exec.trace(&thermostat).unwrap();
    let hr = hioco(
        &thermostat,
        &thermostat,
        &[trace],
        &[0.25, 1.0],
        &HiocoConfig::default(),
    )
    .unwrap();
    assert!(hr.conforms);

    let heater = load_model("heater.hioa");
    let ramp = Trajectory::new(vec![
        (0.0, val(&[("u", 0.0)])),
        (2.0, val(&[("u", 3.0)])),
        (5.0, val(&[("u", 1.0)])),
    ])
    .unwrap();
    let stim = Stimulus {
        horizon: 5.0,
        schedule: Vec::new(),
        signals: Some(ramp),
    };
    let suite = PairSuite::from_model(&heater, &[stim], &config).unwrap();
    let report = conforms(&suite, &suite, &params, CloseMode::Extended).unwrap();
    assert!(report.conforms);
}

// ---------------------------------------------------------------------
// Semi-transitivity on simulator output: three drift variants.
// ---------------------------------------------------------------------

/// The thermostat with its heating target lowered by `drop`.
fn drifted_thermostat(drop: f64) -> hyconf::Hioa {
    let mut model = hyconf::build_thermostat();
    let loc = model
        .locations
        .iter_mut()
        .find(|l| l.name == "mode_ON")
        .expect("mode_ON exists");
    let target = format!("-x + {}", 20.0 - drop);
    loc.flow.insert("x".to_string(), Expr::parse(&target).unwrap());
    model.validated().unwrap()
}

#[test]
fn closeness_is_semi_transitive_on_simulated_traces() {
    let config = SimConfig::default();
    let traces: Vec<ATrace> = [0.0, 0.1, 0.2]
        .iter()
        .map(|&drop| {
            let model = drifted_thermostat(drop);
            let exec = simulate(&model, &Stimulus::quiet(10.0), &config).unwrap();
            exec.trace(&model).unwrap().to_atrace().unwrap()
        })
        .collect();

    // Premises at the tightest workable slacks, conclusion at their sums.
    // The scope covers both traces completely, which the law requires.
    let scope = ClosenessParams::new(0.6, 0.0, 20.0, 10).unwrap();
    let m12 = min_epsilon(&traces[0], &traces[1], &scope, CloseMode::Extended).unwrap();
    let m23 = min_epsilon(&traces[1], &traces[2], &scope, CloseMode::Extended).unwrap();
    assert!(!m12.is_infinite() && !m23.is_infinite(), "spikes pair up within tau");

    let eps1 = m12.value() * 1.01;
    let eps2 = m23.value() * 1.01;
    let p1 = ClosenessParams::new(0.6, eps1, 20.0, 10).unwrap();
    let p2 = ClosenessParams::new(0.6, eps2, 20.0, 10).unwrap();
    assert!(close_ext(&traces[0], &traces[1], &p1).unwrap().close);
    assert!(close_ext(&traces[1], &traces[2], &p2).unwrap().close);

    let sum = ClosenessParams::new(1.2, eps1 + eps2, 20.0, 10).unwrap();
    assert!(
        close_ext(&traces[0], &traces[2], &sum).unwrap().close,
        "the summed slacks must absorb both drifts"
    );
}
