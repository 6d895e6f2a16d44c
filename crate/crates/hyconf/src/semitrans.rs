//! Randomized stress harness for slack composition: whenever `y1` and `y2`
//! are close under `(tau1, epsilon1)` and `y2` and `y3` are close under
//! `(tau2, epsilon2)`, then `y1` and `y3` must be close under the summed
//! slacks. Each trial generates a base trace, derives two neighbours inside
//! strict sub-budgets, verifies both premises, and checks the conclusion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::atrace::ATrace;
use crate::closeness::{close_ext, ClosenessError, ClosenessParams};
use crate::ext_real::ExtReal;
use crate::trajectory::Trajectory;
use crate::valuation::Valuation;

/// Trial counts, seeding, and the ranges the slack parameters are drawn
/// from.
#[derive(Debug, Clone)]
pub struct SemitransConfig {
    pub seed: u64,
    pub trials: u64,
    /// Premise time slacks are drawn uniformly from this range.
    pub tau_range: (f64, f64),
    /// Premise value slacks are drawn uniformly from this range.
    pub epsilon_range: (f64, f64),
    /// Attempts per trial to produce a triple whose premises hold.
    pub max_retries: u32,
}

impl Default for SemitransConfig {
    fn default() -> SemitransConfig {
        SemitransConfig {
            seed: 0,
            trials: 1000,
            tau_range: (0.05, 0.5),
            epsilon_range: (0.1, 2.0),
            max_retries: 10,
        }
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SemitransTrial {
    /// Triples discarded because a premise failed to hold.
    pub regenerated: u32,
    /// No premise-satisfying triple was found within the retry budget.
    pub exhausted: bool,
    /// Premises held but the summed-slack conclusion did not.
    pub violation: bool,
}

/// Aggregate outcome over all trials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemitransReport {
    pub trials: u64,
    pub regenerated: u64,
    /// Trials whose conclusion failed.
    pub violations: Vec<u64>,
    /// Trials that never produced premise-satisfying triples.
    pub exhausted: Vec<u64>,
}

impl SemitransReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.exhausted.is_empty()
    }
}

/// A randomly generated trace, kept alongside the plain sample grid the
/// derivation step works on.
struct RawTrace {
    /// Per segment, the sample times and one row of values per sample. Row
    /// layout is the continuous variables in name order, then the action
    /// indicators in name order.
    segments: Vec<(Vec<f64>, Vec<Vec<ExtReal>>)>,
    continuous: Vec<String>,
    actions: Vec<String>,
}

impl RawTrace {
    fn to_atrace(&self) -> ATrace {
        let segments = self
            .segments
            .iter()
            .map(|(times, rows)| {
                let points = times
                    .iter()
                    .zip(rows.iter())
                    .map(|(&t, row)| {
                        let mut val = Valuation::new();
                        for (i, name) in self.continuous.iter().enumerate() {
                            val.insert(name.clone(), row[i]);
                        }
                        for (i, name) in self.actions.iter().enumerate() {
                            val.insert(name.clone(), row[self.continuous.len() + i]);
                        }
                        (t, val)
                    })
                    .collect();
                Trajectory::new(points).expect("generated samples are ordered")
            })
            .collect();
        ATrace::new(segments, self.actions.iter().cloned().collect())
            .expect("generated segments abut and spike only at closes")
    }
}

fn base_trace(rng: &mut ChaCha8Rng) -> RawTrace {
    let n_vars = rng.random_range(1..=2usize);
    let continuous: Vec<String> = (0..n_vars).map(|i| format!("v{i}")).collect();
    let n_actions = rng.random_range(0..=2usize);
    let actions: Vec<String> = (0..n_actions).map(|i| format!("at:a{i}")).collect();
    let n_segments = rng.random_range(1..=3usize);

    // One bounded smooth waveform per continuous variable.
    let waves: Vec<(f64, f64, f64, f64, f64)> = continuous
        .iter()
        .map(|_| {
            (
                rng.random_range(-3.0..=3.0),
                rng.random_range(0.5..=3.0),
                rng.random_range(0.5..=2.5),
                rng.random_range(0.0..=std::f64::consts::TAU),
                rng.random_range(-0.5..=0.5),
            )
        })
        .collect();
    let value = |wave: &(f64, f64, f64, f64, f64), t: f64| {
        let (c0, c1, omega, phase, c2) = *wave;
        (c0 + c1 * (omega * t + phase).sin() + c2 * t).clamp(-10.0, 10.0)
    };

    let mut t = rng.random_range(0.0..=1.0);
    let mut segments = Vec::with_capacity(n_segments);
    for _ in 0..n_segments {
        let n_samples = rng.random_range(3..=8usize);
        let mut times = Vec::with_capacity(n_samples);
        times.push(t);
        for _ in 1..n_samples {
            t += rng.random_range(0.4..=1.5);
            times.push(t);
        }
        let spike = if actions.is_empty() || !rng.random_bool(0.8) {
            None
        } else {
            Some(rng.random_range(0..actions.len()))
        };
        let rows: Vec<Vec<ExtReal>> = times
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let mut row: Vec<ExtReal> = waves
                    .iter()
                    .map(|w| ExtReal::finite(value(w, s)))
                    .collect();
                for (i, _) in actions.iter().enumerate() {
                    let is_spike = k + 1 == times.len() && spike == Some(i);
                    row.push(if is_spike {
                        ExtReal::INFINITY
                    } else {
                        ExtReal::ZERO
                    });
                }
                row
            })
            .collect();
        segments.push((times, rows));
    }
    RawTrace {
        segments,
        continuous,
        actions,
    }
}

/// Produces a neighbour of `from` that stays strictly inside the budget:
/// every sample keeps its row, moves by less than `tau` in time, and its
/// continuous values shift by less than `epsilon` in norm. Segment
/// boundaries shift, interiors are remapped and jittered, so the grids of
/// the two traces differ while corresponding samples still pair up.
fn derive(rng: &mut ChaCha8Rng, from: &RawTrace, tau: f64, epsilon: f64) -> RawTrace {
    let tau_budget = tau * rng.random_range(0.3..=0.95);
    let eps_budget = epsilon * rng.random_range(0.3..=0.95);
    let per_var = eps_budget / (from.continuous.len() as f64).sqrt();

    // Shift each boundary by at most the time budget and well under the
    // adjacent sample gaps, so segments never collapse or cross.
    let n_seg = from.segments.len();
    let mut shifts = Vec::with_capacity(n_seg + 1);
    for b in 0..=n_seg {
        let mut room = f64::INFINITY;
        if b > 0 {
            let (times, _) = &from.segments[b - 1];
            room = room.min(times[times.len() - 1] - times[times.len() - 2]);
        }
        if b < n_seg {
            let (times, _) = &from.segments[b];
            room = room.min(times[1] - times[0]);
        }
        let bound = tau_budget.min(0.4 * room);
        // The first boundary must not be shifted to negative time.
        let lo = if b == 0 {
            -bound.min(from.segments[0].0[0])
        } else {
            -bound
        };
        shifts.push(rng.random_range(lo..=bound));
    }

    let mut segments = Vec::with_capacity(n_seg);
    for (j, (times, rows)) in from.segments.iter().enumerate() {
        let (a, b) = (times[0], times[times.len() - 1]);
        let (a2, b2) = (a + shifts[j], b + shifts[j + 1]);
        let scale = (b2 - a2) / (b - a);
        let mut new_times: Vec<f64> = times.iter().map(|&t| a2 + (t - a) * scale).collect();
        // Pin the endpoints exactly so consecutive segments still abut
        // bitwise; the affine image of `b` can land an ulp off `b2`.
        new_times[0] = a2;
        let last = new_times.len() - 1;
        new_times[last] = b2;

        // Jitter interior samples within what is left of the time budget
        // and under a third of each neighbouring gap.
        let snapshot = new_times.clone();
        for k in 1..new_times.len() - 1 {
            let moved = (snapshot[k] - times[k]).abs();
            let room = (snapshot[k] - snapshot[k - 1]).min(snapshot[k + 1] - snapshot[k]);
            let bound = (tau_budget - moved).min(0.3 * room).max(0.0);
            new_times[k] = snapshot[k] + rng.random_range(-bound..=bound);
        }

        let new_rows: Vec<Vec<ExtReal>> = rows
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        if i < from.continuous.len() {
                            ExtReal::finite(v.value() + rng.random_range(-per_var..=per_var))
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect();
        segments.push((new_times, new_rows));
    }
    RawTrace {
        segments,
        continuous: from.continuous.clone(),
        actions: from.actions.clone(),
    }
}

/// Scope parameters wide enough that every point of both traces needs a
/// partner.
fn full_scope(tau: f64, epsilon: f64, a: &ATrace, b: &ATrace) -> ClosenessParams {
    let horizon = a.domain().end().max(b.domain().end()) + 1.0;
    let jumps = a.domain().segments().max(b.domain().segments());
    ClosenessParams::new(tau, epsilon, horizon, jumps).expect("generated slacks are valid")
}

/// Runs one seeded trial. Trials are independent: the same configuration
/// and index always reproduce the same triple.
pub fn semitrans_trial(
    config: &SemitransConfig,
    trial: u64,
) -> Result<SemitransTrial, ClosenessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(trial);

    let (tau_lo, tau_hi) = config.tau_range;
    let (eps_lo, eps_hi) = config.epsilon_range;
    let mut regenerated = 0u32;
    loop {
        let tau1 = rng.random_range(tau_lo..=tau_hi);
        let tau2 = rng.random_range(tau_lo..=tau_hi);
        let eps1 = rng.random_range(eps_lo..=eps_hi);
        let eps2 = rng.random_range(eps_lo..=eps_hi);

        let raw1 = base_trace(&mut rng);
        let raw2 = derive(&mut rng, &raw1, tau1, eps1);
        let raw3 = derive(&mut rng, &raw2, tau2, eps2);
        let y1 = raw1.to_atrace();
        let y2 = raw2.to_atrace();
        let y3 = raw3.to_atrace();

        let p1 = full_scope(tau1, eps1, &y1, &y2);
        let p2 = full_scope(tau2, eps2, &y2, &y3);
        if !close_ext(&y1, &y2, &p1)?.close || !close_ext(&y2, &y3, &p2)?.close {
            regenerated += 1;
            if regenerated > config.max_retries {
                return Ok(SemitransTrial {
                    regenerated,
                    exhausted: true,
                    violation: false,
                });
            }
            continue;
        }

        let conclusion = full_scope(tau1 + tau2, eps1 + eps2, &y1, &y3);
        let verdict = close_ext(&y1, &y3, &conclusion)?;
        return Ok(SemitransTrial {
            regenerated,
            exhausted: false,
            violation: !verdict.close,
        });
    }
}

/// Runs every trial and aggregates the outcomes.
pub fn semitrans_check(config: &SemitransConfig) -> Result<SemitransReport, ClosenessError> {
    let mut report = SemitransReport {
        trials: config.trials,
        regenerated: 0,
        violations: Vec::new(),
        exhausted: Vec::new(),
    };
    for trial in 0..config.trials {
        let outcome = semitrans_trial(config, trial)?;
        report.regenerated += u64::from(outcome.regenerated);
        if outcome.violation {
            report.violations.push(trial);
        }
        if outcome.exhausted {
            report.exhausted.push(trial);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trials_are_reproducible() {
        let config = SemitransConfig {
            trials: 20,
            seed: 7,
            ..SemitransConfig::default()
        };
        let a = semitrans_check(&config).unwrap();
        let b = semitrans_check(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn premises_hold_by_construction() {
        let config = SemitransConfig::default();
        let mut exhausted = 0u32;
        for trial in 0..50 {
            let outcome = semitrans_trial(&config, trial).unwrap();
            exhausted += u32::from(outcome.exhausted);
            assert!(!outcome.violation, "trial {trial} violated the property");
        }
        assert_eq!(exhausted, 0, "the derivation left its budgets");
    }

    #[test]
    fn generated_traces_are_valid_and_varied() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut action_traces = 0;
        let mut multi_segment = 0;
        for _ in 0..40 {
            let raw = base_trace(&mut rng);
            let trace = raw.to_atrace();
            action_traces += usize::from(!trace.action_vars().is_empty());
            multi_segment += usize::from(trace.domain().segments() > 1);
        }
        assert!(action_traces > 5);
        assert!(multi_segment > 5);
    }

    #[test]
    fn derived_grids_differ_from_the_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw1 = base_trace(&mut rng);
        let raw2 = derive(&mut rng, &raw1, 0.3, 1.0);
        let t1: Vec<f64> = raw1.segments.iter().flat_map(|(t, _)| t.clone()).collect();
        let t2: Vec<f64> = raw2.segments.iter().flat_map(|(t, _)| t.clone()).collect();
        assert_eq!(t1.len(), t2.len());
        assert!(t1.iter().zip(&t2).any(|(a, b)| a != b));
    }
}
