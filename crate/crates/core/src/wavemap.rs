//! Reduced wave-map equation on the wormhole in hyperboloidal coordinates.
//!
//! With `x = asinh r`, `s = t − cosh x` and `y = tanh(x/4)` the field obeys
//!
//! ```text
//! u_ss + 2y(1+y²)/(1−y²) u_sy + (y⁴+6y²+1)/(1−y²)² u_s
//!     = (1/16)(1−y²) ∂_y((1−y²) u_y) − (k²/2) sin 2u
//! ```
//!
//! on `y ∈ (−1, 1)`. Null infinity sits at `y = ±1`, where the equation
//! degenerates and the field takes its vacuum value. States are usually
//! carried on the half domain `[0, 1]` with a parity condition at `y = 0`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{Jacobian, OdeSystem};
use crate::spectral::Grid;

/// Tolerance for the boundary values at null infinity.
pub const BOUNDARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Equivariance index.
    pub k: u32,
    /// Neck radius. Only `a = 1` is supported; it sets the unit of length.
    pub a: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { k: 2, a: 1.0 }
    }
}

impl ModelParams {
    pub fn new(k: u32) -> Result<Self> {
        let p = Self { k, a: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!(
                "equivariance index must be at least 2, got {}",
                self.k
            )));
        }
        if self.a != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "neck radius is fixed to 1, got {}",
                self.a
            )));
        }
        Ok(())
    }

    /// Coefficient `k²/2` of `sin 2u` in the field equation.
    pub fn coupling(&self) -> f64 {
        0.5 * f64::from(self.k * self.k)
    }
}

/// Symmetry class of a state, fixing both the degree and the `y = 0`
/// condition on the half domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    /// Degree 0, `u(−x) = u(x)`, `∂_y u = 0` at `y = 0`.
    Even,
    /// Degree 1, `u(−x) − π/2 = −(u(x) − π/2)`, `u = π/2` at `y = 0`.
    OddCentered,
}

impl Parity {
    pub fn degree(self) -> u32 {
        match self {
            Parity::Even => 0,
            Parity::OddCentered => 1,
        }
    }

    /// Value of the field at `y = 1`.
    pub fn vacuum_value(self) -> f64 {
        f64::from(self.degree()) * PI
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::OddCentered => "odd",
        }
    }
}

impl std::str::FromStr for Parity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "even" => Ok(Parity::Even),
            "odd" | "odd_centered" | "oddcentered" => Ok(Parity::OddCentered),
            other => Err(Error::InvalidArgument(format!("unknown parity `{other}`"))),
        }
    }
}

/// Compactified coordinate maps.
pub mod coords {
    pub fn y_of_x(x: f64) -> f64 {
        (0.25 * x).tanh()
    }

    pub fn x_of_y(y: f64) -> f64 {
        4.0 * y.atanh()
    }

    pub fn x_of_r(r: f64) -> f64 {
        r.asinh()
    }

    pub fn r_of_x(x: f64) -> f64 {
        x.sinh()
    }

    /// `s = t − cosh x`.
    pub fn s_of_t(t: f64, x: f64) -> f64 {
        t - x.cosh()
    }

    pub fn t_of_s(s: f64, x: f64) -> f64 {
        s + x.cosh()
    }
}

/// Static kink `2 arctan(e^{k(x−c)})`.
pub fn kink(x: f64, c: f64, k: u32) -> f64 {
    2.0 * (f64::from(k) * (x - c)).exp().atan()
}

/// Alternating N-chain with centers `±c_j`.
///
/// The sign is normalized so that the profile vanishes at `x → −∞` and
/// tends to `0` (even `N`) or `π` (odd `N`) at `x → +∞`; the object at the
/// outermost center `+c_J` is then an antikink for even `N` and a kink for
/// odd `N`.
pub fn chain_profile(n: usize, centers: &[f64], x: f64, k: u32) -> Result<f64> {
    validate_chain(n, centers)?;
    let odd = n % 2 == 1;
    let q = |z: f64| kink(z, 0.0, k);
    let mut sum = if odd { q(x) } else { 0.0 };
    for (idx, &c) in centers.iter().enumerate() {
        let sign = if idx % 2 == 0 { -1.0 } else { 1.0 };
        let pair = if odd { q(x + c) + q(x - c) } else { q(x + c) - q(x - c) };
        sum += sign * pair;
    }
    Ok(if centers.len() % 2 == 1 { -sum } else { sum })
}

fn validate_chain(n: usize, centers: &[f64]) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("chain needs N ≥ 2, got {n}")));
    }
    if centers.len() != n / 2 {
        return Err(Error::InvalidArgument(format!(
            "N = {n} needs {} centers, got {}",
            n / 2,
            centers.len()
        )));
    }
    let mut prev = 0.0;
    for &c in centers {
        if !(c > prev) || !c.is_finite() {
            return Err(Error::InvalidArgument(
                "chain centers must be positive and strictly ascending".into(),
            ));
        }
        prev = c;
    }
    Ok(())
}

/// Field `u` and its time derivative `v = ∂_s u` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub s: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub parity: Parity,
    pub params: ModelParams,
}

impl FieldState {
    /// The trivial map `u ≡ 0`.
    pub fn vacuum(grid: &Grid, params: ModelParams) -> Self {
        Self {
            s: 0.0,
            u: vec![0.0; grid.n()],
            v: vec![0.0; grid.n()],
            parity: Parity::Even,
            params,
        }
    }

    /// Static kink centered at the origin.
    pub fn kink(grid: &Grid, params: ModelParams) -> Self {
        let u = sample_in_x(grid, |x| kink(x, 0.0, params.k), PI);
        Self {
            s: 0.0,
            u,
            v: vec![0.0; grid.n()],
            parity: Parity::OddCentered,
            params,
        }
    }

    /// Static N-chain with the given centers.
    pub fn chain(grid: &Grid, n: usize, centers: &[f64], params: ModelParams) -> Result<Self> {
        validate_chain(n, centers)?;
        let parity = if n % 2 == 0 {
            Parity::Even
        } else {
            Parity::OddCentered
        };
        let far = parity.vacuum_value();
        let u = sample_in_x(
            grid,
            |x| chain_profile(n, centers, x, params.k).expect("validated"),
            far,
        );
        Ok(Self {
            s: 0.0,
            u,
            v: vec![0.0; grid.n()],
            parity,
            params,
        })
    }

    pub fn degree(&self) -> u32 {
        self.parity.degree()
    }

    /// Checks lengths, finiteness and the boundary values at null infinity.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let n = grid.n();
        if self.u.len() != n || self.v.len() != n {
            return Err(Error::InvalidArgument(format!(
                "state has {}/{} samples, grid has {n}",
                self.u.len(),
                self.v.len()
            )));
        }
        self.params.validate()?;
        check_finite("u", &self.u)?;
        check_finite("v", &self.v)?;
        let far = self.parity.vacuum_value();
        if (self.u[n - 1] - far).abs() > BOUNDARY_TOL || self.v[n - 1].abs() > BOUNDARY_TOL {
            return Err(Error::InvalidArgument(format!(
                "state is not at the vacuum value {far} at y = 1 (u = {}, v = {})",
                self.u[n - 1],
                self.v[n - 1]
            )));
        }
        if !grid.is_half_domain() && (self.u[0].abs() > BOUNDARY_TOL || self.v[0].abs() > BOUNDARY_TOL) {
            return Err(Error::InvalidArgument(format!(
                "state is not at the vacuum value 0 at y = −1 (u = {}, v = {})",
                self.u[0], self.v[0]
            )));
        }
        Ok(())
    }
}

fn check_finite(field: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { field, index }),
        None => Ok(()),
    }
}

/// Samples `f(x)` at the grid nodes, using `at_plus` at `y = 1` and `0` at
/// `y = −1`.
fn sample_in_x(grid: &Grid, f: impl Fn(f64) -> f64, at_plus: f64) -> Vec<f64> {
    grid.nodes()
        .iter()
        .map(|&y| {
            if y >= 1.0 {
                at_plus
            } else if y <= -1.0 {
                0.0
            } else {
                f(coords::x_of_y(y))
            }
        })
        .collect()
}

/// Even family: `u = 0`, `v = b·exp(4 − 4/(1−y²)²)`.
pub fn initial_data_even(b: f64, grid: &Grid) -> Result<FieldState> {
    if !(b >= 0.0) {
        return Err(Error::InvalidArgument(format!("amplitude must be ≥ 0, got {b}")));
    }
    let v = grid
        .nodes()
        .iter()
        .map(|&y| {
            let w = 1.0 - y * y;
            if w <= 0.0 {
                0.0
            } else {
                b * (4.0 - 4.0 / (w * w)).exp()
            }
        })
        .collect();
    Ok(FieldState {
        s: 0.0,
        u: vec![0.0; grid.n()],
        v,
        parity: Parity::Even,
        params: ModelParams::default(),
    })
}

/// Odd family: `u = (π/2)[1 + sin(πy/2) − 4b sin(πy/2) cos²(πy/2)]`, `v = 0`.
pub fn initial_data_odd(b: f64, grid: &Grid) -> Result<FieldState> {
    if !b.is_finite() {
        return Err(Error::InvalidArgument(format!("amplitude must be finite, got {b}")));
    }
    let n = grid.n();
    let mut u: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&y| {
            let (sn, cs) = (FRAC_PI_2 * y).sin_cos();
            FRAC_PI_2 * ((1.0 + sn) - 4.0 * b * sn * cs * cs)
        })
        .collect();
    // Exact boundary values despite the rounding of cos(π/2).
    u[n - 1] = PI;
    if grid.is_half_domain() {
        u[0] = FRAC_PI_2;
    } else {
        u[0] = 0.0;
    }
    Ok(FieldState {
        s: 0.0,
        u,
        v: vec![0.0; n],
        parity: Parity::OddCentered,
        params: ModelParams::default(),
    })
}

/// Energy density in `y` including the measure `dx = 4 dy/(1−y²)`; zero at
/// `y = ±1`.
fn energy_density(grid: &Grid, state: &FieldState, kinetic: bool) -> Vec<f64> {
    let uy = grid.differentiate(&state.u);
    let half_k2 = state.params.coupling();
    grid.nodes()
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let w = 1.0 - y * y;
            if w <= 0.0 {
                return 0.0;
            }
            let sn = state.u[i].sin();
            let mut pot = half_k2 * sn * sn;
            if kinetic {
                pot += 0.5 * state.v[i] * state.v[i];
            }
            pot * 4.0 / w + w * uy[i] * uy[i] / 8.0
        })
        .collect()
}

fn integrate_line(grid: &Grid, density: &[f64]) -> f64 {
    let total = grid.integrate(density);
    if grid.is_half_domain() {
        2.0 * total
    } else {
        total
    }
}

/// `V = ½∫(u_x² + k² sin²u) dx` over the whole line.
pub fn potential_energy(state: &FieldState, grid: &Grid) -> f64 {
    integrate_line(grid, &energy_density(grid, state, false))
}

/// `𝓔 = ∫(½u_s² + ½u_x² + (k²/2) sin²u) dx` on the hyperboloidal slice.
pub fn bondi_energy(state: &FieldState, grid: &Grid) -> f64 {
    integrate_line(grid, &energy_density(grid, state, true))
}

/// Semi-discrete system for the interior unknowns `(u_int, v_int)`.
///
/// Boundary nodes are not evolved: `y = 1` (and `y = −1` on a full grid)
/// hold the vacuum values, `y = 0` on a half grid either holds `π/2`
/// (odd) or is eliminated through `∂_y u = 0` (even).
#[derive(Debug, Clone)]
pub struct FieldSystem {
    n: usize,
    first: usize,
    m: usize,
    parity: Parity,
    params: ModelParams,
    half: bool,
    /// `(1/16) w D w D` with `w = 1−y²`.
    lap: DMatrix<f64>,
    /// `−a D − c` on interior rows.
    damp: DMatrix<f64>,
    /// Reduced blocks acting on interior unknowns.
    lap_red: DMatrix<f64>,
    damp_red: DMatrix<f64>,
    /// Contribution of fixed boundary values to the Laplacian rows.
    lap_fixed: DVector<f64>,
    /// Coefficients expressing `u_0` in terms of interior values (even).
    neumann: Option<Vec<f64>>,
    neumann_fixed: f64,
}

impl FieldSystem {
    pub fn new(grid: &Grid, parity: Parity, params: ModelParams) -> Result<Self> {
        params.validate()?;
        let n = grid.n();
        let half = grid.is_half_domain();
        if !half && (grid.lower() != -1.0 || grid.upper() != 1.0) {
            return Err(Error::InvalidArgument(
                "field grids must cover [0, 1] or [−1, 1]".into(),
            ));
        }
        let y = grid.nodes();
        let d = grid.diff1();
        let w = DMatrix::from_diagonal(&DVector::from_iterator(n, y.iter().map(|y| 1.0 - y * y)));
        let lap = (&w * d * &w * d) / 16.0;
        let mut a = vec![0.0; n];
        let mut c = vec![0.0; n];
        for i in 1..n - 1 {
            let yi = y[i];
            let one_m = 1.0 - yi * yi;
            a[i] = 2.0 * yi * (1.0 + yi * yi) / one_m;
            c[i] = (yi.powi(4) + 6.0 * yi * yi + 1.0) / (one_m * one_m);
        }
        let mut damp = DMatrix::from_fn(n, n, |i, j| -a[i] * d[(i, j)]);
        for i in 0..n {
            damp[(i, i)] -= c[i];
        }

        let first = 1;
        let m = n - 2;
        let far = parity.vacuum_value();
        let (neumann, neumann_fixed) = if half && parity == Parity::Even {
            let d00 = d[(0, 0)];
            let coeffs: Vec<f64> = (1..n - 1).map(|j| -d[(0, j)] / d00).collect();
            (Some(coeffs), -d[(0, n - 1)] * far / d00)
        } else {
            (None, 0.0)
        };
        let lower_fixed = match (half, parity) {
            (true, Parity::OddCentered) => FRAC_PI_2,
            (true, Parity::Even) => neumann_fixed,
            (false, _) => 0.0,
        };

        let reduce = |mat: &DMatrix<f64>| {
            DMatrix::from_fn(m, m, |i, j| {
                let row = i + first;
                let mut val = mat[(row, j + first)];
                if let Some(nm) = &neumann {
                    val += mat[(row, 0)] * nm[j];
                }
                val
            })
        };
        let lap_red = reduce(&lap);
        let damp_red = reduce(&damp);
        let lap_fixed =
            DVector::from_fn(m, |i, _| lap[(i + first, 0)] * lower_fixed + lap[(i + first, n - 1)] * far);

        Ok(Self {
            n,
            first,
            m,
            parity,
            params,
            half,
            lap,
            damp,
            lap_red,
            damp_red,
            lap_fixed,
            neumann,
            neumann_fixed,
        })
    }

    pub fn interior_len(&self) -> usize {
        self.m
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    /// Interior unknowns of a state.
    pub fn pack(&self, state: &FieldState) -> Vec<f64> {
        let r = self.first..self.first + self.m;
        let mut z = Vec::with_capacity(2 * self.m);
        z.extend_from_slice(&state.u[r.clone()]);
        z.extend_from_slice(&state.v[r]);
        z
    }

    /// Full-grid samples from interior unknowns.
    pub fn unpack(&self, s: f64, z: &[f64]) -> FieldState {
        let (u, v) = self.expand(z);
        FieldState {
            s,
            u,
            v,
            parity: self.parity,
            params: self.params,
        }
    }

    fn expand(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n, self.m);
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        u[1..n - 1].copy_from_slice(&z[..m]);
        v[1..n - 1].copy_from_slice(&z[m..]);
        u[n - 1] = self.parity.vacuum_value();
        if self.half {
            match &self.neumann {
                Some(nm) => {
                    u[0] = self.neumann_fixed + dot(nm, &z[..m]);
                    v[0] = dot(nm, &z[m..]);
                }
                None => u[0] = FRAC_PI_2,
            }
        }
        (u, v)
    }

    /// `dv/ds` at interior nodes.
    fn accel(&self, z: &[f64], out: &mut [f64]) {
        let m = self.m;
        let u = DVector::from_column_slice(&z[..m]);
        let v = DVector::from_column_slice(&z[m..]);
        let mut acc = &self.lap_red * &u + &self.damp_red * &v + &self.lap_fixed;
        let g = self.params.coupling();
        for i in 0..m {
            acc[i] -= g * (2.0 * z[i]).sin();
        }
        out.copy_from_slice(acc.as_slice());
    }

    /// Full-grid time derivatives of a state; boundary entries follow the
    /// boundary conditions.
    pub fn rhs_full(&self, state: &FieldState) -> (Vec<f64>, Vec<f64>) {
        let z = self.pack(state);
        let mut dz = vec![0.0; 2 * self.m];
        self.rhs(state.s, &z, &mut dz);
        let (du, dv) = self.expand_derivative(&dz);
        (du, dv)
    }

    fn expand_derivative(&self, dz: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n, self.m);
        let mut du = vec![0.0; n];
        let mut dv = vec![0.0; n];
        du[1..n - 1].copy_from_slice(&dz[..m]);
        dv[1..n - 1].copy_from_slice(&dz[m..]);
        if let Some(nm) = &self.neumann {
            du[0] = dot(nm, &dz[..m]);
            dv[0] = dot(nm, &dz[m..]);
        }
        (du, dv)
    }

    /// Full-row residual of the static equation, `L u − (k²/2) sin 2u`, at
    /// interior nodes.
    pub fn static_residual(&self, state: &FieldState) -> f64 {
        let u = DVector::from_column_slice(&state.u);
        let lu = &self.lap * &u;
        let g = self.params.coupling();
        (1..self.n - 1)
            .map(|i| (lu[i] - g * (2.0 * state.u[i]).sin()).abs())
            .fold(0.0, f64::max)
    }

    /// Damping operator rows, exposed for diagnostics.
    pub fn damping(&self) -> &DMatrix<f64> {
        &self.damp
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl OdeSystem for FieldSystem {
    fn dim(&self) -> usize {
        2 * self.m
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let m = self.m;
        dydt[..m].copy_from_slice(&y[m..]);
        self.accel(y, &mut dydt[m..]);
    }

    fn jacobian(&self, _t: f64, y: &[f64], _f: &[f64]) -> Jacobian {
        let mut du = self.lap_red.clone();
        let k2 = 2.0 * self.params.coupling();
        for i in 0..self.m {
            du[(i, i)] -= k2 * (2.0 * y[i]).cos();
        }
        Jacobian::SecondOrder {
            du,
            dv: self.damp_red.clone(),
        }
    }
}

/// Time derivatives `(∂_s u, ∂_s v)` of a state on the full grid.
pub fn rhs(state: &FieldState, grid: &Grid) -> Result<(Vec<f64>, Vec<f64>)> {
    if state.u.len() != grid.n() || state.v.len() != grid.n() {
        return Err(Error::InvalidArgument("state does not match grid".into()));
    }
    check_finite("u", &state.u)?;
    check_finite("v", &state.v)?;
    let sys = FieldSystem::new(grid, state.parity, state.params)?;
    Ok(sys.rhs_full(state))
}
