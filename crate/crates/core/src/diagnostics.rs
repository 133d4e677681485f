//! Observables along field trajectories.
//!
//! Near null infinity the field behaves as `u ≈ nπ + b₊(s) e^{−x/2}`. Since
//! `e^{−x/2} = (1−y)/(1+y)`, the radiation coefficient is read off from the
//! slope at the boundary: `b₊ = −2 ∂_y u(1)`. On a full grid the left end
//! gives `b₋ = 2 ∂_y u(−1)`; on the half grid parity fixes `b₋ = ±b₊`. The
//! Bondi energy obeys `d𝓔/ds = −½(ḃ₋² + ḃ₊²)`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::Trajectory;
use crate::par::Execution;
use crate::spectral::Grid;
use crate::wavemap::{coords, FieldState, Parity};

pub use crate::wavemap::{bondi_energy, potential_energy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub s: f64,
    pub bondi: f64,
    pub b_plus: f64,
    pub b_minus: f64,
    /// `∂_s b₊`, from `v` at the boundary.
    pub b_plus_dot: f64,
    pub b_minus_dot: f64,
    /// π/2-level crossings in `x`, ascending.
    pub positions: Vec<f64>,
}

impl DiagnosticsRecord {
    /// Position of the outermost object.
    pub fn c1(&self) -> Option<f64> {
        self.positions.last().copied()
    }

    /// Physical time `t = s + cosh c₁` at the outermost object.
    pub fn t_inferred(&self) -> Option<f64> {
        self.c1().map(|c| coords::t_of_s(self.s, c))
    }
}

/// `(b₋, b₊)` of a sample vector.
fn boundary_coefficients(values: &[f64], grid: &Grid, parity: Parity) -> (f64, f64) {
    let n = grid.n();
    let plus = -2.0 * grid.derivative_at(values, n - 1);
    let minus = if grid.is_half_domain() {
        match parity {
            Parity::Even => plus,
            Parity::OddCentered => -plus,
        }
    } else {
        2.0 * grid.derivative_at(values, 0)
    };
    (minus, plus)
}

/// Radiation coefficient `b₊` at `y = 1`.
pub fn radiation_coefficient(state: &FieldState, grid: &Grid) -> f64 {
    boundary_coefficients(&state.u, grid, state.parity).1
}

/// `(b₋, b₊)`.
pub fn radiation_coefficients(state: &FieldState, grid: &Grid) -> (f64, f64) {
    boundary_coefficients(&state.u, grid, state.parity)
}

/// Crossings of `u` through `π/2 + mπ` mapped to `x`, ascending.
pub fn kink_positions(state: &FieldState, grid: &Grid) -> Vec<f64> {
    let (lo, hi) = state
        .u
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &u| (a.min(u), b.max(u)));
    if !(lo.is_finite() && hi.is_finite()) {
        return Vec::new();
    }
    let m_lo = ((lo - FRAC_PI_2) / PI).ceil() as i64;
    let m_hi = ((hi - FRAC_PI_2) / PI).floor() as i64;
    let mut xs: Vec<f64> = (m_lo..=m_hi)
        .flat_map(|m| grid.find_crossings(&state.u, FRAC_PI_2 + m as f64 * PI))
        .filter(|y| y.abs() < 1.0)
        .map(coords::x_of_y)
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

pub fn diagnose(state: &FieldState, grid: &Grid) -> DiagnosticsRecord {
    let (b_minus, b_plus) = boundary_coefficients(&state.u, grid, state.parity);
    let (b_minus_dot, b_plus_dot) = boundary_coefficients(&state.v, grid, state.parity);
    DiagnosticsRecord {
        s: state.s,
        bondi: bondi_energy(state, grid),
        b_plus,
        b_minus,
        b_plus_dot,
        b_minus_dot,
        positions: kink_positions(state, grid),
    }
}

/// Diagnostics for every snapshot of a trajectory.
pub fn diagnose_trajectory(
    trajectory: &Trajectory<FieldState>,
    grid: &Grid,
    exec: Execution,
) -> Vec<DiagnosticsRecord> {
    exec.map(&trajectory.states, |st| diagnose(st, grid))
}

/// Both sides of the energy balance at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxSample {
    pub s: f64,
    /// Finite-difference `d𝓔/ds`.
    pub energy_rate: f64,
    /// `−½(ḃ₋² + ḃ₊²)`.
    pub flux: f64,
    pub residual: f64,
}

/// Three-point derivative on a non-uniform grid.
fn centered_derivative(s: [f64; 3], f: [f64; 3]) -> f64 {
    let h1 = s[1] - s[0];
    let h2 = s[2] - s[1];
    -h2 / (h1 * (h1 + h2)) * f[0] + (h2 - h1) / (h1 * h2) * f[1] + h1 / (h2 * (h1 + h2)) * f[2]
}

/// Compares `d𝓔/ds`, differenced from the Bondi samples, with the radiated
/// flux at every interior sample.
pub fn energy_flux_check(records: &[DiagnosticsRecord]) -> Result<Vec<FluxSample>> {
    if records.len() < 3 {
        return Err(Error::InvalidArgument(
            "energy balance needs at least 3 samples".into(),
        ));
    }
    Ok(records
        .windows(3)
        .map(|w| {
            let rate = centered_derivative([w[0].s, w[1].s, w[2].s], [w[0].bondi, w[1].bondi, w[2].bondi]);
            let r = &w[1];
            let flux = -0.5 * (r.b_minus_dot.powi(2) + r.b_plus_dot.powi(2));
            FluxSample {
                s: r.s,
                energy_rate: rate,
                flux,
                residual: rate - flux,
            }
        })
        .collect())
}

/// Largest relative balance residual over `[s_lo, s_hi]`.
///
/// Each residual is divided by `max(|flux|, floor_fraction · max|flux|)`,
/// the maximum taken over the window, so that instants of negligible
/// radiation do not dominate.
pub fn max_relative_flux_residual(samples: &[FluxSample], s_lo: f64, s_hi: f64, floor_fraction: f64) -> Option<f64> {
    let window: Vec<&FluxSample> = samples.iter().filter(|f| f.s >= s_lo && f.s <= s_hi).collect();
    let peak = window.iter().map(|f| f.flux.abs()).fold(0.0, f64::max);
    if window.is_empty() {
        return None;
    }
    let floor = (floor_fraction * peak).max(f64::MIN_POSITIVE);
    Some(
        window
            .iter()
            .map(|f| f.residual.abs() / f.flux.abs().max(floor))
            .fold(0.0, f64::max),
    )
}

/// Samples at which the Bondi energy grows by more than `rel_tol · 𝓔`.
pub fn monotonicity_violations(records: &[DiagnosticsRecord], rel_tol: f64) -> Vec<(f64, f64)> {
    records
        .windows(2)
        .filter_map(|w| {
            let inc = w[1].bondi - w[0].bondi;
            (inc > rel_tol * w[0].bondi.abs().max(f64::MIN_POSITIVE)).then_some((w[1].s, inc))
        })
        .collect()
}

/// Settled energy of a run, in units of `4` (`2k` with `k = 2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyQuantum {
    pub n: u32,
    pub energy: f64,
    /// Spread of `𝓔` over the last quarter of the samples.
    pub variation: f64,
}

/// Allowed spread of `𝓔` over the last quarter of a settled run.
pub const SETTLED_VARIATION: f64 = 0.1;

pub fn final_energy_quantum(records: &[DiagnosticsRecord]) -> Result<EnergyQuantum> {
    if records.len() < 4 {
        return Err(Error::InvalidArgument(
            "need at least 4 samples to judge settling".into(),
        ));
    }
    let tail = &records[records.len() - records.len() / 4..];
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.bondi), b.max(r.bondi)));
    let variation = hi - lo;
    if variation >= SETTLED_VARIATION {
        return Err(Error::NotConverged { variation });
    }
    let energy = records.last().expect("non-empty").bondi;
    Ok(EnergyQuantum {
        n: (energy / 4.0).round().max(0.0) as u32,
        energy,
        variation,
    })
}
