//! Sampled trajectories and their algebra.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ext_real::ExtReal;
use crate::valuation::{Valuation, ValuationError};

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("a trajectory needs at least one sample")]
    Empty,
    #[error("sample times must be strictly increasing (sample {index} at t = {time})")]
    NonIncreasingTime { index: usize, time: f64 },
    #[error("sample {index} ranges over a different variable set")]
    InconsistentVariables { index: usize },
    #[error("sample times must be finite (sample {index})")]
    NonFiniteTime { index: usize },
    #[error("time {time} is outside the trajectory domain [{start}, {end}]")]
    OutOfDomain { time: f64, start: f64, end: f64 },
    #[error("shift by {shift} would move the domain start {start} below zero")]
    NegativeStart { shift: f64, start: f64 },
    #[error("trajectories do not abut: first ends at {end}, second starts at {start}")]
    DomainGap { end: f64, start: f64 },
    #[error(
        "boundary values differ at `{variable}` by {delta:e} (tolerance {tolerance:e}) \
         when joining trajectories"
    )]
    BoundaryMismatch {
        variable: String,
        delta: f64,
        tolerance: f64,
    },
    #[error(transparent)]
    Valuation(#[from] ValuationError),
}

/// A function of time represented by finitely many samples on a closed
/// interval, linearly interpolated between samples.
///
/// Invariants: at least one sample, strictly increasing sample times, and
/// every sample ranging over the same variable set. A single sample gives a
/// point trajectory whose domain is the degenerate interval `[t, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    samples: Vec<Valuation>,
    vars: BTreeSet<String>,
}

impl Trajectory {
    pub fn new(points: Vec<(f64, Valuation)>) -> Result<Trajectory, TrajectoryError> {
        if points.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        let vars = points[0].1.name_set();
        let mut times = Vec::with_capacity(points.len());
        let mut samples = Vec::with_capacity(points.len());
        for (index, (t, val)) in points.into_iter().enumerate() {
            if !t.is_finite() {
                return Err(TrajectoryError::NonFiniteTime { index });
            }
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(TrajectoryError::NonIncreasingTime { index, time: t });
                }
            }
            if val.name_set() != vars {
                return Err(TrajectoryError::InconsistentVariables { index });
            }
            times.push(t);
            samples.push(val);
        }
        Ok(Trajectory {
            times,
            samples,
            vars,
        })
    }

    /// A zero-duration trajectory holding a single sample.
    pub fn point(t: f64, val: Valuation) -> Trajectory {
        Trajectory::new(vec![(t, val)]).expect("a single sample is always valid")
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Value at the first time point.
    pub fn first_val(&self) -> &Valuation {
        &self.samples[0]
    }

    /// Value at the last time point.
    pub fn last_val(&self) -> &Valuation {
        self.samples.last().unwrap()
    }

    pub fn vars(&self) -> &BTreeSet<String> {
        &self.vars
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &Valuation)> {
        self.times.iter().copied().zip(self.samples.iter())
    }

    /// Largest gap between consecutive sample times; zero for a point.
    pub fn max_sample_gap(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Value at time `t`, linearly interpolating between samples.
    ///
    /// Exactly at a sample the stored valuation is returned, so infinite
    /// spikes are visible only at their own instant. Between samples a
    /// component with one infinite endpoint reads as the finite endpoint's
    /// value: indicator spikes are instantaneous, not ramps.
    pub fn value_at(&self, t: f64) -> Result<Valuation, TrajectoryError> {
        if t < self.start_time() || t > self.end_time() {
            return Err(TrajectoryError::OutOfDomain {
                time: t,
                start: self.start_time(),
                end: self.end_time(),
            });
        }
        match self.times.binary_search_by(|probe| probe.total_cmp(&t)) {
            Ok(k) => Ok(self.samples[k].clone()),
            Err(k) => {
                // k >= 1 and k < len because t is strictly inside the domain.
                let (t0, t1) = (self.times[k - 1], self.times[k]);
                let w = (t - t0) / (t1 - t0);
                let mut out = Valuation::new();
                for ((name, a), (_, b)) in self.samples[k - 1].iter().zip(self.samples[k].iter()) {
                    let v = match (a.is_infinite(), b.is_infinite()) {
                        (true, true) => ExtReal::INFINITY,
                        (true, false) => b,
                        (false, true) => a,
                        (false, false) => ExtReal::finite(a.value() + w * (b.value() - a.value())),
                    };
                    out.insert(name, v);
                }
                Ok(out)
            }
        }
    }

    /// Restricts every sample to the given variable set.
    pub fn restrict(&self, vars: &BTreeSet<String>) -> Result<Trajectory, TrajectoryError> {
        let samples = self
            .samples
            .iter()
            .map(|s| s.restrict(vars))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Trajectory {
            times: self.times.clone(),
            samples,
            vars: vars.clone(),
        })
    }

    /// Moves the domain by `dt` (positive or negative). The shifted domain
    /// must not start before zero.
    pub fn shift(&self, dt: f64) -> Result<Trajectory, TrajectoryError> {
        let start = self.start_time() + dt;
        if start < 0.0 {
            return Err(TrajectoryError::NegativeStart {
                shift: dt,
                start: self.start_time(),
            });
        }
        Ok(Trajectory {
            times: self.times.iter().map(|t| t + dt).collect(),
            samples: self.samples.clone(),
            vars: self.vars.clone(),
        })
    }

    /// The part of the trajectory from time `t` on, re-based to start at
    /// zero. Inserts an interpolated sample at `t` when `t` falls between
    /// samples.
    pub fn suffix(&self, t: f64) -> Result<Trajectory, TrajectoryError> {
        let cut = self.slice_from(t)?;
        let times = cut.times.iter().map(|x| x - t).collect();
        Ok(Trajectory { times, ..cut })
    }

    /// The part of the trajectory up to time `t`, keeping its start time.
    /// Inserts an interpolated sample at `t` when needed.
    pub fn prefix(&self, t: f64) -> Result<Trajectory, TrajectoryError> {
        if t < self.start_time() || t > self.end_time() {
            return Err(TrajectoryError::OutOfDomain {
                time: t,
                start: self.start_time(),
                end: self.end_time(),
            });
        }
        let k = self.times.partition_point(|&x| x <= t);
        let mut times: Vec<f64> = self.times[..k].to_vec();
        let mut samples: Vec<Valuation> = self.samples[..k].to_vec();
        if *times.last().unwrap() < t {
            times.push(t);
            samples.push(self.value_at(t)?);
        }
        Ok(Trajectory {
            times,
            samples,
            vars: self.vars.clone(),
        })
    }

    /// Like [`Trajectory::suffix`] but keeping absolute time.
    fn slice_from(&self, t: f64) -> Result<Trajectory, TrajectoryError> {
        if t < self.start_time() || t > self.end_time() {
            return Err(TrajectoryError::OutOfDomain {
                time: t,
                start: self.start_time(),
                end: self.end_time(),
            });
        }
        let k = self.times.partition_point(|&x| x < t);
        let mut times = Vec::with_capacity(self.times.len() - k + 1);
        let mut samples = Vec::with_capacity(times.capacity());
        if self.times[k] > t {
            times.push(t);
            samples.push(self.value_at(t)?);
        }
        times.extend_from_slice(&self.times[k..]);
        samples.extend_from_slice(&self.samples[k..]);
        Ok(Trajectory {
            times,
            samples,
            vars: self.vars.clone(),
        })
    }

    /// Joins two trajectories whose domains abut. The boundary samples must
    /// agree within `tol` on every variable; the left-hand sample wins in the
    /// result. Domains are compared exactly: the second trajectory must start
    /// at the first one's end time.
    pub fn concat(&self, other: &Trajectory, tol: f64) -> Result<Trajectory, TrajectoryError> {
        if self.vars != other.vars {
            return Err(TrajectoryError::InconsistentVariables { index: 0 });
        }
        if other.start_time() != self.end_time() {
            return Err(TrajectoryError::DomainGap {
                end: self.end_time(),
                start: other.start_time(),
            });
        }
        let left = self.last_val();
        let right = other.first_val();
        for ((name, a), (_, b)) in left.iter().zip(right.iter()) {
            let delta = a.abs_diff(b);
            if delta > ExtReal::finite(tol) {
                return Err(TrajectoryError::BoundaryMismatch {
                    variable: name.to_string(),
                    delta: if delta.is_infinite() {
                        f64::INFINITY
                    } else {
                        delta.value()
                    },
                    tolerance: tol,
                });
            }
        }
        let mut times = self.times.clone();
        let mut samples = self.samples.clone();
        times.extend_from_slice(&other.times[1..]);
        samples.extend_from_slice(&other.samples[1..]);
        Ok(Trajectory {
            times,
            samples,
            vars: self.vars.clone(),
        })
    }

    /// True when this trajectory equals `other` restricted to this domain:
    /// same variables, same start time, domain contained in the other's, and
    /// every sample matching the other's value there within `tol`.
    pub fn is_prefix_of(&self, other: &Trajectory, tol: f64) -> bool {
        if self.vars != other.vars {
            return false;
        }
        if self.start_time() != other.start_time() || self.end_time() > other.end_time() {
            return false;
        }
        self.iter().all(|(t, val)| match other.value_at(t) {
            Ok(reference) => val.approx_eq(&reference, tol),
            Err(_) => false,
        })
    }
}
