//! Collective-coordinate models for asymptotically static N-chains.
//!
//! Positions are `r_j = e^{c_j}` with `c_j` the kink centers, and time is
//! rescaled by `8/√π` relative to the field equation. For `N = 2J+1`
//! (odd chains, `r₀ = 1`)
//!
//! ```text
//! r̈_j = −r²_{j−1}/r³_j + r_j/r²_{j+1},   r_{J+1} = ∞,
//! ```
//!
//! and for `N = 2J` the first equation becomes `r̈₁ = −1/r₁⁵ + r₁/r₂²`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{drive, IntegratorConfig, Jacobian, OdeSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainParity {
    /// `N = 2J`.
    Even,
    /// `N = 2J + 1`.
    Odd,
}

impl ChainParity {
    pub fn of(n_objects: usize) -> Self {
        if n_objects % 2 == 0 {
            ChainParity::Even
        } else {
            ChainParity::Odd
        }
    }

    pub fn is_odd(self) -> bool {
        self == ChainParity::Odd
    }
}

/// Positions and velocities of the `J` outer objects of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub parity: ChainParity,
    pub r: Vec<f64>,
    pub rdot: Vec<f64>,
    pub t: f64,
}

impl ChainState {
    /// State of an `n_objects`-chain.
    pub fn new(n_objects: usize, r: Vec<f64>, rdot: Vec<f64>, t: f64) -> Result<Self> {
        if n_objects < 2 {
            return Err(Error::InvalidArgument(format!(
                "a chain has at least 2 objects, got {n_objects}"
            )));
        }
        if r.len() != n_objects / 2 {
            return Err(Error::InvalidArgument(format!(
                "{n_objects}-chain needs {} positions, got {}",
                n_objects / 2,
                r.len()
            )));
        }
        let st = Self {
            parity: ChainParity::of(n_objects),
            r,
            rdot,
            t,
        };
        st.validate()?;
        Ok(st)
    }

    /// Number of moving particles `J`.
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn n_objects(&self) -> usize {
        2 * self.len() + usize::from(self.parity.is_odd())
    }

    pub fn validate(&self) -> Result<()> {
        if self.r.is_empty() || self.r.len() != self.rdot.len() {
            return Err(Error::InvalidArgument(
                "positions and velocities must be non-empty and of equal length".into(),
            ));
        }
        if self.r.iter().chain(&self.rdot).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("chain state is not finite".into()));
        }
        if self.r[0] <= 0.0 {
            return Err(Error::OutOfDomain {
                point: self.r[0],
                lower: 0.0,
                upper: f64::INFINITY,
            });
        }
        if self.r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "chain positions must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Kink centers `c_j = log r_j`.
    pub fn centers(&self) -> Vec<f64> {
        self.r.iter().map(|r| r.ln()).collect()
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut y = self.r.clone();
        y.extend_from_slice(&self.rdot);
        y
    }

    pub fn unpack(parity: ChainParity, t: f64, y: &[f64]) -> Self {
        let j = y.len() / 2;
        Self {
            parity,
            r: y[..j].to_vec(),
            rdot: y[j..].to_vec(),
            t,
        }
    }
}

fn accelerations(parity: ChainParity, r: &[f64], out: &mut [f64]) {
    let j = r.len();
    for i in 0..j {
        let ri = r[i];
        let inner = if i == 0 {
            match parity {
                ChainParity::Odd => -1.0 / (ri * ri * ri),
                ChainParity::Even => -1.0 / ri.powi(5),
            }
        } else {
            -r[i - 1] * r[i - 1] / (ri * ri * ri)
        };
        let outer = if i + 1 < j { ri / (r[i + 1] * r[i + 1]) } else { 0.0 };
        out[i] = inner + outer;
    }
}

/// Accelerations `r̈_j` of a chain state.
pub fn chain_rhs(state: &ChainState) -> Result<Vec<f64>> {
    if let Some(&bad) = state.r.iter().find(|&&r| !(r > 0.0)) {
        return Err(Error::OutOfDomain {
            point: bad,
            lower: 0.0,
            upper: f64::INFINITY,
        });
    }
    let mut out = vec![0.0; state.len()];
    accelerations(state.parity, &state.r, &mut out);
    Ok(out)
}

/// Conserved energy of the reduced model, measured from the energy of the
/// infinitely separated chain.
pub fn effective_energy(state: &ChainState) -> Result<f64> {
    if let Some(&bad) = state.r.iter().find(|&&r| !(r > 0.0)) {
        return Err(Error::OutOfDomain {
            point: bad,
            lower: 0.0,
            upper: f64::INFINITY,
        });
    }
    let kinetic: f64 = state.rdot.iter().map(|v| v * v).sum();
    let r = &state.r;
    let first = match state.parity {
        ChainParity::Odd => 1.0 / (r[0] * r[0]),
        ChainParity::Even => 0.5 / r[0].powi(4),
    };
    let rest: f64 = r.windows(2).map(|w| (w[0] / w[1]).powi(2)).sum();
    Ok(kinetic - first - rest)
}

/// First-order form `(r, ṙ)` of the chain equations.
#[derive(Debug, Clone, Copy)]
pub struct ChainSystem {
    parity: ChainParity,
    j: usize,
}

impl ChainSystem {
    pub fn new(parity: ChainParity, j: usize) -> Self {
        Self { parity, j }
    }
}

impl OdeSystem for ChainSystem {
    fn dim(&self) -> usize {
        2 * self.j
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let j = self.j;
        dydt[..j].copy_from_slice(&y[j..]);
        accelerations(self.parity, &y[..j], &mut dydt[j..]);
    }

    fn jacobian(&self, _t: f64, y: &[f64], _f: &[f64]) -> Jacobian {
        let j = self.j;
        let r = &y[..j];
        let mut du = DMatrix::zeros(j, j);
        for i in 0..j {
            let ri = r[i];
            if i == 0 {
                du[(0, 0)] += match self.parity {
                    ChainParity::Odd => 3.0 / ri.powi(4),
                    ChainParity::Even => 5.0 / ri.powi(6),
                };
            } else {
                let rm = r[i - 1];
                du[(i, i)] += 3.0 * rm * rm / ri.powi(4);
                du[(i, i - 1)] -= 2.0 * rm / ri.powi(3);
            }
            if i + 1 < j {
                let rp = r[i + 1];
                du[(i, i)] += 1.0 / (rp * rp);
                du[(i, i + 1)] -= 2.0 * ri / rp.powi(3);
            }
        }
        Jacobian::SecondOrder {
            du,
            dv: DMatrix::zeros(j, j),
        }
    }
}

/// Closed-form zero-energy solutions for `N = 2` and `N = 3`.
pub fn exact_solution(n_objects: usize, t: f64) -> Result<ChainState> {
    if !(t > 0.0) {
        return Err(Error::OutOfDomain {
            point: t,
            lower: 0.0,
            upper: f64::INFINITY,
        });
    }
    let (r, rdot) = match n_objects {
        3 => {
            let r = (2.0 * t).sqrt();
            (r, 1.0 / r)
        }
        2 => {
            let a = 3.0 / 2f64.sqrt();
            let r = (a * t).cbrt();
            (r, a / (3.0 * r * r))
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "closed-form solutions exist for N = 2, 3 only, got {other}"
            )))
        }
    };
    ChainState::new(n_objects, vec![r], vec![rdot], t)
}

/// Second derivative of the exact solution, for residual checks.
pub fn exact_acceleration(n_objects: usize, t: f64) -> Result<f64> {
    let st = exact_solution(n_objects, t)?;
    let r = st.r[0];
    Ok(match n_objects {
        3 => -1.0 / (r * r * r),
        _ => {
            let a = 3.0 / 2f64.sqrt();
            -2.0 * a * a / (9.0 * r.powi(5))
        }
    })
}

/// Rate constant and exponents of the leading power laws
/// `r_j ~ (A t)^{p_j}`.
pub fn leading_law(n_objects: usize) -> Result<(f64, Vec<f64>)> {
    if n_objects < 2 {
        return Err(Error::InvalidArgument(format!(
            "a chain has at least 2 objects, got {n_objects}"
        )));
    }
    let j = (n_objects / 2) as f64;
    let jj = n_objects / 2;
    Ok(if n_objects % 2 == 1 {
        let a = (j + 1.0) / j.sqrt();
        (a, (1..=jj).map(|i| i as f64 / (j + 1.0)).collect())
    } else {
        let a = (2.0 * j + 1.0) / (4.0 * j - 2.0).sqrt();
        (
            a,
            (1..=jj).map(|i| (2.0 * i as f64 - 1.0) / (2.0 * j + 1.0)).collect(),
        )
    })
}

/// Leading-order positions and velocities at rescaled time `t`.
pub fn leading_asymptotics(n_objects: usize, t: f64) -> Result<ChainState> {
    if !(t > 0.0) {
        return Err(Error::OutOfDomain {
            point: t,
            lower: 0.0,
            upper: f64::INFINITY,
        });
    }
    let (a, p) = leading_law(n_objects)?;
    let r: Vec<f64> = p.iter().map(|p| (a * t).powf(*p)).collect();
    let rdot = p.iter().zip(&r).map(|(p, r)| p * r / t).collect();
    ChainState::new(n_objects, r, rdot, t)
}

/// `8/√π`: ratio of rescaled to physical time.
pub fn time_scale() -> f64 {
    8.0 / PI.sqrt()
}

pub fn rescale(physical_t: f64) -> f64 {
    time_scale() * physical_t
}

pub fn unscale(rescaled_t: f64) -> f64 {
    rescaled_t / time_scale()
}

/// Rate constant of `c₁ = p(log t + log A)` in physical time.
pub fn a_physical(n_objects: usize) -> Result<f64> {
    Ok(leading_law(n_objects)?.0 * time_scale())
}

/// Exponent `p` of the innermost center `c₁ = p log(A t)`.
pub fn c1_exponent(n_objects: usize) -> Result<f64> {
    Ok(leading_law(n_objects)?.1[0])
}

pub fn centers_from_r(r: &[f64]) -> Vec<f64> {
    r.iter().map(|r| r.ln()).collect()
}

pub fn r_from_centers(c: &[f64]) -> Vec<f64> {
    c.iter().map(|c| c.exp()).collect()
}

/// Truncated large-time series for the `J = 2` chains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesParams {
    /// 4 or 5.
    pub n: usize,
    /// Time-translation parameter.
    pub c: f64,
    /// Highest inverse power of `τ` kept.
    pub order: u32,
}

impl SeriesParams {
    pub fn new(n: usize, c: f64) -> Result<Self> {
        let order = match n {
            5 => 6,
            4 => 8,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "series are available for N = 4, 5 only, got {n}"
                )))
            }
        };
        Ok(Self { n, c, order })
    }

    /// `(τ = (At)^{1/q}, q, A)`.
    fn clock(&self) -> (u32, f64) {
        match self.n {
            5 => (3, 3.0 / 2f64.sqrt()),
            _ => (5, 5.0 / 6f64.sqrt()),
        }
    }

    /// `r_j = τ^{e_j} v_j(τ)`.
    fn exponents(&self) -> [i32; 2] {
        match self.n {
            5 => [1, 2],
            _ => [1, 3],
        }
    }

    /// `(power, coefficient)` of `v₁ − 1` and `v₂ − 1` in `τ⁻¹`.
    fn terms(&self) -> [Vec<(i32, f64)>; 2] {
        let c = self.c;
        let all = match self.n {
            5 => [
                vec![
                    (2, -3.0 / 8.0),
                    (3, c),
                    (4, 3.0 / 128.0),
                    (5, 3.0 * c / 8.0),
                    (6, 443.0 / 3072.0 - c * c),
                ],
                vec![(2, -0.25), (3, 2.0 * c), (6, -(5.0 / 192.0 + c * c))],
            ],
            _ => [
                vec![(4, -1.0 / 6.0), (5, c / 3.0), (8, -83.0 / 1944.0)],
                vec![(4, -1.0 / 6.0), (5, c), (8, 7.0 / 648.0)],
            ],
        };
        all.map(|v| v.into_iter().filter(|(p, _)| *p as u32 <= self.order).collect())
    }
}

/// Series evaluation with its reliability flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub state: ChainState,
    pub tau: f64,
    /// `false` when `τ < 3`, where the truncated series is unreliable.
    pub reliable: bool,
}

/// Smallest `τ` at which the truncated series is trusted.
pub const SERIES_TAU_MIN: f64 = 3.0;

/// Evaluates `(r, ṙ, r̈)` of the series at rescaled time `t`.
fn series_derivatives(params: &SeriesParams, t: f64) -> ([f64; 2], [f64; 2], [f64; 2], f64) {
    let (q, a) = params.clock();
    let qf = f64::from(q);
    let tau = (a * t).powf(1.0 / qf);
    let tau_d = a / (qf * tau.powi(q as i32 - 1));
    let tau_dd = -(qf - 1.0) * a * a / (qf * qf * tau.powi(2 * q as i32 - 1));
    let exps = params.exponents();
    let terms = params.terms();
    let mut r = [0.0; 2];
    let mut rd = [0.0; 2];
    let mut rdd = [0.0; 2];
    for k in 0..2 {
        // g(τ) = τ^e + Σ a_p τ^{e−p}
        let mut g = 0.0;
        let mut g1 = 0.0;
        let mut g2 = 0.0;
        let mut add = |coef: f64, pw: i32| {
            let pf = f64::from(pw);
            g += coef * tau.powi(pw);
            g1 += coef * pf * tau.powi(pw - 1);
            g2 += coef * pf * (pf - 1.0) * tau.powi(pw - 2);
        };
        add(1.0, exps[k]);
        for &(p, coef) in &terms[k] {
            add(coef, exps[k] - p);
        }
        r[k] = g;
        rd[k] = tau_d * g1;
        rdd[k] = tau_dd * g1 + tau_d * tau_d * g2;
    }
    (r, rd, rdd, tau)
}

pub fn asymptotic_solution(params: &SeriesParams, t: f64) -> Result<SeriesPoint> {
    if params.n != 4 && params.n != 5 {
        return Err(Error::InvalidArgument(format!(
            "series are available for N = 4, 5 only, got {}",
            params.n
        )));
    }
    if !(t > 0.0) {
        return Err(Error::OutOfDomain {
            point: t,
            lower: 0.0,
            upper: f64::INFINITY,
        });
    }
    let (r, rd, _, tau) = series_derivatives(params, t);
    Ok(SeriesPoint {
        state: ChainState {
            parity: ChainParity::of(params.n),
            r: r.to_vec(),
            rdot: rd.to_vec(),
            t,
        },
        tau,
        reliable: tau >= SERIES_TAU_MIN,
    })
}

/// Rescaled time at which the series clock reads `tau`.
pub fn time_of_tau(n: usize, tau: f64) -> Result<f64> {
    let p = SeriesParams::new(n, 0.0)?;
    let (q, a) = p.clock();
    Ok(tau.powi(q as i32) / a)
}

/// Largest `|r̈_series − chain_rhs(r_series)|` over the two particles.
pub fn series_residual(params: &SeriesParams, t: f64) -> Result<f64> {
    let pt = asymptotic_solution(params, t)?;
    let (_, _, rdd, _) = series_derivatives(params, t);
    let acc = chain_rhs(&pt.state)?;
    Ok(rdd
        .iter()
        .zip(&acc)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Linearization of the `J = 2` series equations about `v_j = 1`,
/// returning `ξ''` in the series clock `τ`.
pub fn linearized_rhs(n: usize, tau: f64, xi: [f64; 2], xi_d: [f64; 2]) -> Result<[f64; 2]> {
    if !(tau > 0.0) {
        return Err(Error::OutOfDomain {
            point: tau,
            lower: 0.0,
            upper: f64::INFINITY,
        });
    }
    let t2 = tau * tau;
    let [x1, x2] = xi;
    let [d1, d2] = xi_d;
    match n {
        5 => Ok([
            (2.0 * x1 - 4.0 * t2 * (x2 - 2.0 * x1)) / t2,
            (-2.0 * tau * d2 + 8.0 * x2 - 4.0 * x1) / t2,
        ]),
        4 => Ok([
            (2.0 * tau * d1 + 4.0 * x1 - 12.0 * t2 * t2 * (x2 - 3.0 * x1)) / t2,
            (-2.0 * tau * d2 + 24.0 * x2 - 12.0 * x1) / t2,
        ]),
        other => Err(Error::InvalidArgument(format!(
            "linearized systems exist for N = 4, 5 only, got {other}"
        ))),
    }
}

/// Leading growing-mode asymptotics `(ξ, ξ')` at `τ`.
pub fn growing_mode_seed(n: usize, tau: f64) -> Result<([f64; 2], [f64; 2])> {
    match n {
        5 => {
            let s8 = 8f64.sqrt();
            let e = (s8 * tau).exp();
            let x2 = -0.5 * e / (tau * tau);
            Ok(([e, x2], [s8 * e, x2 * (s8 - 2.0 / tau)]))
        }
        4 => {
            let e = (3.0 * tau * tau).exp();
            let x1 = tau.sqrt() * e;
            let x2 = -e / (3.0 * tau.powf(3.5));
            Ok((
                [x1, x2],
                [x1 * (6.0 * tau + 0.5 / tau), x2 * (6.0 * tau - 3.5 / tau)],
            ))
        }
        other => Err(Error::InvalidArgument(format!(
            "growing modes are tabulated for N = 4, 5 only, got {other}"
        ))),
    }
}

struct Linearized(usize);

impl OdeSystem for Linearized {
    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, t: f64, y: &[f64], d: &mut [f64]) {
        let acc = linearized_rhs(self.0, t, [y[0], y[1]], [y[2], y[3]]).unwrap_or([f64::NAN; 2]);
        d[0] = y[2];
        d[1] = y[3];
        d[2] = acc[0];
        d[3] = acc[1];
    }
}

/// Integrates the linearized system from `τ₀` to `τ₁` starting at
/// `(ξ, ξ')`; returns the samples `(τ, ξ, ξ')` every `dtau`.
pub fn integrate_linearized(
    n: usize,
    tau0: f64,
    tau1: f64,
    xi: [f64; 2],
    xi_d: [f64; 2],
    dtau: f64,
    rel_tol: f64,
) -> Result<Vec<(f64, [f64; 2], [f64; 2])>> {
    linearized_rhs(n, tau0, xi, xi_d)?;
    let cfg = IntegratorConfig {
        rel_tol,
        abs_tol: rel_tol * xi[0].abs().max(1.0),
        s_end: tau1,
        sample_interval: dtau,
        max_step: None,
    };
    let mut out = Vec::new();
    let (term, _) = drive(
        &Linearized(n),
        tau0,
        &[xi[0], xi[1], xi_d[0], xi_d[1]],
        &cfg,
        |t, y| {
            out.push((t, [y[0], y[1]], [y[2], y[3]]));
            None
        },
        |_, _| None,
    )?;
    if term.is_failure() {
        return Err(Error::InvalidArgument(format!(
            "linearized integration failed: {term:?}"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn rhs_examples() {
        let odd = ChainState::new(3, vec![1.0], vec![0.0], 0.0).unwrap();
        assert_eq!(chain_rhs(&odd).unwrap(), vec![-1.0]);
        let even = ChainState::new(2, vec![1.0], vec![0.0], 0.0).unwrap();
        assert_eq!(chain_rhs(&even).unwrap(), vec![-1.0]);
        let even2 = ChainState::new(4, vec![2.0, 8.0], vec![0.0, 0.0], 0.0).unwrap();
        let a = chain_rhs(&even2).unwrap();
        assert_abs_diff_eq!(a[0], 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(a[1], -1.0 / 128.0, epsilon = 1e-16);
    }

    #[test]
    fn rejects_bad_states() {
        assert!(ChainState::new(4, vec![2.0, 1.0], vec![0.0, 0.0], 0.0).is_err());
        assert!(ChainState::new(3, vec![-1.0], vec![0.0], 0.0).is_err());
        assert!(ChainState::new(5, vec![1.0], vec![0.0], 0.0).is_err());
        let bad = ChainState {
            parity: ChainParity::Odd,
            r: vec![0.0],
            rdot: vec![0.0],
            t: 0.0,
        };
        assert!(chain_rhs(&bad).is_err());
        assert!(exact_solution(2, 0.0).is_err());
    }

    #[test]
    fn exact_solutions() {
        let s3 = exact_solution(3, 0.5).unwrap();
        assert_abs_diff_eq!(s3.r[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s3.rdot[0], 1.0, epsilon = 1e-15);
        let s2 = exact_solution(2, 2f64.sqrt() / 3.0).unwrap();
        assert_abs_diff_eq!(s2.r[0], 1.0, epsilon = 1e-15);
        for n in [2, 3] {
            for t in [1.0, 10.0, 100.0] {
                let st = exact_solution(n, t).unwrap();
                let acc = chain_rhs(&st).unwrap()[0];
                assert_abs_diff_eq!(acc, exact_acceleration(n, t).unwrap(), epsilon = 1e-12);
                assert_abs_diff_eq!(effective_energy(&st).unwrap(), 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn exact_acceleration_matches_finite_differences() {
        for n in [2, 3] {
            let t = 3.0;
            let h = 1e-4;
            let r = |t| exact_solution(n, t).unwrap().r[0];
            let fd = (r(t + h) - 2.0 * r(t) + r(t - h)) / (h * h);
            assert_relative_eq!(fd, exact_acceleration(n, t).unwrap(), max_relative = 1e-6);
        }
    }

    #[test]
    fn leading_laws() {
        let (a, p) = leading_law(3).unwrap();
        assert_abs_diff_eq!(a, 2.0, epsilon = 1e-15);
        assert_eq!(p, vec![0.5]);
        let (a, p) = leading_law(5).unwrap();
        assert_abs_diff_eq!(a, 3.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(p, vec![1.0 / 3.0, 2.0 / 3.0]);
        let (a, p) = leading_law(4).unwrap();
        assert_abs_diff_eq!(a, 5.0 / 6f64.sqrt(), epsilon = 1e-15);
        assert_eq!(p, vec![0.2, 0.6]);
        let lead = leading_asymptotics(3, 7.0).unwrap();
        let ex = exact_solution(3, 7.0).unwrap();
        assert_abs_diff_eq!(lead.r[0], ex.r[0], epsilon = 1e-14);
        assert_abs_diff_eq!(lead.rdot[0], ex.rdot[0], epsilon = 1e-14);
    }

    #[test]
    fn physical_constants() {
        assert_abs_diff_eq!(a_physical(2).unwrap(), 12.0 * (2.0 / PI).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(a_physical(3).unwrap(), 16.0 / PI.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(a_physical(2).unwrap(), 9.57461, epsilon = 5e-6);
        assert_abs_diff_eq!(a_physical(3).unwrap(), 9.02703, epsilon = 5e-6);
        assert_eq!(rescale(0.0), 0.0);
        assert_abs_diff_eq!(unscale(rescale(3.3)), 3.3, epsilon = 1e-15);
    }

    #[test]
    fn series_value_example() {
        let p = SeriesParams::new(5, 0.0).unwrap();
        let t = time_of_tau(5, 10.0).unwrap();
        let pt = asymptotic_solution(&p, t).unwrap();
        assert_abs_diff_eq!(pt.tau, 10.0, epsilon = 1e-12);
        // (3/128)·10⁻⁴ = 2.34375e-6
        let v1 = 1.0 - 0.00375 + 0.00000234375 + 443.0 / 3072.0 * 1e-6;
        assert_relative_eq!(pt.state.r[0], 10.0 * v1, max_relative = 1e-13);
        assert!(pt.reliable);
        let early = asymptotic_solution(&p, time_of_tau(5, 2.0).unwrap()).unwrap();
        assert!(!early.reliable);
    }

    #[test]
    fn series_tends_to_leading_order() {
        let p = SeriesParams::new(4, 0.0).unwrap();
        let t = time_of_tau(4, 1e3).unwrap();
        let pt = asymptotic_solution(&p, t).unwrap();
        let lead = leading_asymptotics(4, t).unwrap();
        for j in 0..2 {
            assert_relative_eq!(pt.state.r[j], lead.r[j], max_relative = 1e-12);
        }
    }

    #[test]
    fn series_velocity_matches_finite_difference() {
        for n in [4, 5] {
            let p = SeriesParams::new(n, 0.3).unwrap();
            let t = time_of_tau(n, 6.0).unwrap();
            let h = 1e-4 * t;
            let a = asymptotic_solution(&p, t + h).unwrap().state;
            let b = asymptotic_solution(&p, t - h).unwrap().state;
            let mid = asymptotic_solution(&p, t).unwrap().state;
            for j in 0..2 {
                let fd = (a.r[j] - b.r[j]) / (2.0 * h);
                assert_relative_eq!(fd, mid.rdot[j], max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn linearized_zero_is_fixed() {
        for n in [4, 5] {
            assert_eq!(linearized_rhs(n, 3.0, [0.0; 2], [0.0; 2]).unwrap(), [0.0, 0.0]);
        }
        assert!(linearized_rhs(6, 3.0, [0.0; 2], [0.0; 2]).is_err());
    }

    #[test]
    fn polynomial_modes_solve_linearization() {
        // N=5: ξ = (τ², 2τ²); N=4: ξ = (τ⁴, 3τ⁴).
        for (n, p, ratio) in [(5, 2, 2.0), (4, 4, 3.0)] {
            for tau in [2.0f64, 7.0, 50.0] {
                let pf = f64::from(p);
                let xi = [tau.powi(p), ratio * tau.powi(p)];
                let xid = [pf * tau.powi(p - 1), ratio * pf * tau.powi(p - 1)];
                let acc = linearized_rhs(n, tau, xi, xid).unwrap();
                let exact = pf * (pf - 1.0) * tau.powi(p - 2);
                assert_relative_eq!(acc[0], exact, max_relative = 1e-12);
                assert_relative_eq!(acc[1], ratio * exact, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn chain_jacobian_matches_finite_differences() {
        for st in [
            ChainState::new(5, vec![2.0, 5.0], vec![0.1, 0.2], 0.0).unwrap(),
            ChainState::new(6, vec![1.5, 4.0, 9.0], vec![0.0; 3], 0.0).unwrap(),
        ] {
            let sys = ChainSystem::new(st.parity, st.len());
            let y = st.pack();
            let mut f = vec![0.0; y.len()];
            sys.rhs(0.0, &y, &mut f);
            let fd = crate::evolve::finite_difference_jacobian(&sys, 0.0, &y, &f);
            let Jacobian::SecondOrder { du, .. } = sys.jacobian(0.0, &y, &f) else {
                panic!()
            };
            let j = st.len();
            for a in 0..j {
                for b in 0..j {
                    assert_abs_diff_eq!(fd[(j + a, b)], du[(a, b)], epsilon = 1e-6);
                }
            }
        }
    }
}
