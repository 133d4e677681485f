//! Adaptive time integration of field and chain states.
//!
//! The semi-discrete field equation is stiff: the outgoing characteristic
//! speed and the damping coefficient both blow up towards `y = 1`, so
//! explicit schemes are limited to steps of order `n⁻⁴`. Everything here is
//! driven by the implicit Radau IIA stepper in [`radau`].

pub mod radau;

use serde::{Deserialize, Serialize};

pub use radau::{finite_difference_jacobian, Jacobian, OdeSystem, Stats};

use crate::error::{Error, Result};
use crate::ode_models::{ChainState, ChainSystem};
use crate::par::Execution;
use crate::spectral::Grid;
use crate::wavemap::{FieldState, FieldSystem};

/// Smallest step the integrator accepts before giving up.
pub const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Final time. May lie before the start time to integrate backwards.
    pub s_end: f64,
    pub sample_interval: f64,
    /// Step-size cap; `None` leaves steps limited by accuracy alone.
    pub max_step: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            s_end: 80.0,
            sample_interval: 0.5,
            max_step: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.sample_interval > 0.0) || !self.sample_interval.is_finite() {
            return Err(Error::InvalidArgument(
                "sample interval must be positive".into(),
            ));
        }
        if !self.s_end.is_finite() {
            return Err(Error::InvalidArgument("end time must be finite".into()));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument("max step must be positive".into()));
            }
        }
        Ok(())
    }

    fn tolerances(&self) -> radau::Tolerances {
        radau::Tolerances {
            rel: self.rel_tol,
            abs: self.abs_tol,
            max_step: self.max_step.unwrap_or(f64::INFINITY),
            min_step: MIN_STEP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Reached,
    Event { s: f64, label: String },
    StepFailure { s: f64, reason: String },
}

impl Termination {
    pub fn is_failure(&self) -> bool {
        matches!(self, Termination::StepFailure { .. })
    }
}

/// Sampled solution. The first sample is the initial state; on step
/// failure the last sample is the last accepted state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub times: Vec<f64>,
    pub states: Vec<T>,
    pub termination: Termination,
    pub stats: Stats,
}

impl<T> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&T> {
        self.states.last()
    }
}

/// Integrates `sys` from `(t0, y0)` to `cfg.s_end`.
///
/// `sample` is called at `t0` and every `sample_interval` after it (the end
/// time is always sampled) and may stop the run by returning a label.
/// `guard` is called after every accepted step with the same effect.
pub fn drive<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    cfg: &IntegratorConfig,
    mut sample: impl FnMut(f64, &[f64]) -> Option<String>,
    mut guard: impl FnMut(f64, &[f64]) -> Option<String>,
) -> Result<(Termination, Stats)> {
    cfg.validate()?;
    let dir = if cfg.s_end >= t0 { 1.0 } else { -1.0 };
    let dt = cfg.sample_interval;
    let sample_time = |k: usize| {
        let t = t0 + dir * dt * k as f64;
        if dir * (t - cfg.s_end) >= -1e-9 * dt {
            cfg.s_end
        } else {
            t
        }
    };
    if let Some(label) = sample(t0, y0) {
        return Ok((Termination::Event { s: t0, label }, Stats::default()));
    }
    if cfg.s_end == t0 {
        return Ok((Termination::Reached, Stats::default()));
    }
    let mut solver = radau::Radau::new(sys, t0, y0, cfg.s_end, cfg.tolerances())?;
    let mut k = 1;
    let mut last_sampled = t0;
    loop {
        let outcome = solver.step();
        let failure = match outcome {
            Ok(radau::StepOutcome::Accepted) => None,
            Ok(radau::StepOutcome::Collapsed { h }) => Some(format!("step size collapsed to {h:e}")),
            Err(e) => Some(e.to_string()),
        };
        if let Some(reason) = failure {
            let s = solver.t();
            if s != last_sampled {
                // Record the last good state; its verdict does not matter.
                let _ = sample(s, solver.y());
            }
            return Ok((Termination::StepFailure { s, reason }, solver.stats()));
        }
        let t_new = solver.t();
        let seg = solver.dense().expect("accepted step has dense output");
        loop {
            let ts = sample_time(k);
            if dir * (ts - t_new) > 0.0 {
                break;
            }
            let y = if ts == t_new { solver.y().to_vec() } else { seg.eval(ts) };
            last_sampled = ts;
            k += 1;
            if let Some(label) = sample(ts, &y) {
                return Ok((Termination::Event { s: ts, label }, solver.stats()));
            }
            if ts == cfg.s_end {
                return Ok((Termination::Reached, solver.stats()));
            }
        }
        if let Some(label) = guard(t_new, solver.y()) {
            if t_new != last_sampled {
                let _ = sample(t_new, solver.y());
            }
            return Ok((Termination::Event { s: t_new, label }, solver.stats()));
        }
        if solver.finished() {
            return Ok((Termination::Reached, solver.stats()));
        }
    }
}

/// Event predicate on field snapshots; returning `true` stops the run.
pub type FieldEvent<'a> = dyn FnMut(&FieldState) -> bool + 'a;

/// Evolves a field state on `grid` until `cfg.s_end` or until an event
/// fires.
pub fn evolve_field(
    state0: &FieldState,
    grid: &Grid,
    cfg: &IntegratorConfig,
    events: &mut [&mut FieldEvent<'_>],
) -> Result<Trajectory<FieldState>> {
    state0.validate(grid)?;
    let sys = FieldSystem::new(grid, state0.parity, state0.params)?;
    let z0 = sys.pack(state0);
    let mut times = Vec::new();
    let mut states: Vec<FieldState> = Vec::new();
    let (termination, stats) = drive(
        &sys,
        state0.s,
        &z0,
        cfg,
        |s, z| {
            let st = if states.is_empty() {
                FieldState { s, ..state0.clone() }
            } else {
                sys.unpack(s, z)
            };
            let fired = events
                .iter_mut()
                .position(|ev| ev(&st))
                .map(|i| format!("event {i}"));
            times.push(s);
            states.push(st);
            fired
        },
        |_, _| None,
    )?;
    Ok(Trajectory {
        times,
        states,
        termination,
        stats,
    })
}

/// Smallest admissible `r₁` before a chain run is declared collapsed.
pub const CHAIN_COLLAPSE: f64 = 1e-3;

/// Evolves a collective-coordinate chain state. Runs stop early when the
/// ordering `r₀ < r₁ < … < r_J` is lost or `r₁` collapses.
pub fn evolve_chain(state0: &ChainState, cfg: &IntegratorConfig) -> Result<Trajectory<ChainState>> {
    state0.validate()?;
    let sys = ChainSystem::new(state0.parity, state0.len());
    let y0 = state0.pack();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let check = |y: &[f64]| chain_breakdown(state0, y);
    let (termination, stats) = drive(
        &sys,
        state0.t,
        &y0,
        cfg,
        |t, y| {
            times.push(t);
            states.push(ChainState::unpack(state0.parity, t, y));
            check(y)
        },
        |_, y| check(y),
    )?;
    Ok(Trajectory {
        times,
        states,
        termination,
        stats,
    })
}

/// Evolves many chain states with a shared configuration, concurrently
/// when `exec` allows. Results keep the input order.
pub fn evolve_chains(
    states: &[ChainState],
    cfg: &IntegratorConfig,
    exec: Execution,
) -> Vec<Result<Trajectory<ChainState>>> {
    exec.map(states, |st| evolve_chain(st, cfg))
}

fn chain_breakdown(state0: &ChainState, y: &[f64]) -> Option<String> {
    let j = state0.len();
    let r = &y[..j];
    if r[0] <= CHAIN_COLLAPSE {
        return Some("collapse".into());
    }
    let floor = if state0.parity.is_odd() { 1.0 } else { 0.0 };
    if r[0] <= floor || r.windows(2).any(|w| w[1] <= w[0]) {
        return Some("ordering lost".into());
    }
    None
}
