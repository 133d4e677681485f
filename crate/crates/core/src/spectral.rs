//! Chebyshev–Gauss–Lobatto collocation on an interval.
//!
//! Nodes are stored in ascending order. For the default half-domain grid the
//! interval is `[0, 1]`; full-line evolutions use `[-1, 1]`.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Smallest grid accepted by [`Grid::new`].
pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone)]
pub struct Grid {
    n: usize,
    lower: f64,
    upper: f64,
    nodes: Vec<f64>,
    bary: Vec<f64>,
    diff1: DMatrix<f64>,
    diff2: DMatrix<f64>,
    quad_weights: Vec<f64>,
}

/// Grid with `n` nodes on `[0, 1]`.
pub fn make_grid(n: usize) -> Result<Grid> {
    Grid::new(n)
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        Self::on_interval(n, 0.0, 1.0)
    }

    /// Grid with `n` nodes on `[-1, 1]`, used for unsymmetrized evolutions.
    pub fn full(n: usize) -> Result<Self> {
        Self::on_interval(n, -1.0, 1.0)
    }

    pub fn on_interval(n: usize, lower: f64, upper: f64) -> Result<Self> {
        if n < MIN_NODES {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least {MIN_NODES} nodes, got {n}"
            )));
        }
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bad interval [{lower}, {upper}]"
            )));
        }
        let big_n = n - 1;
        let len = upper - lower;
        let theta: Vec<f64> = (0..n)
            .map(|j| j as f64 * PI / (2.0 * big_n as f64))
            .collect();

        // sin^2 on the lower half, mirrored on the upper half so that the
        // node set is exactly symmetric about the midpoint.
        let unit: Vec<f64> = (0..n)
            .map(|j| {
                if 2 * j < big_n {
                    theta[j].sin().powi(2)
                } else if 2 * j == big_n {
                    0.5
                } else {
                    1.0 - theta[big_n - j].sin().powi(2)
                }
            })
            .collect();
        let mut nodes: Vec<f64> = unit.iter().map(|&s| lower + len * s).collect();
        nodes[0] = lower;
        nodes[big_n] = upper;

        let bary: Vec<f64> = (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == big_n {
                    0.5 * sign
                } else {
                    sign
                }
            })
            .collect();

        // Off-diagonal entries use the product form of the node differences,
        // the diagonal comes from the negative-sum trick.
        let mut diff1 = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let dy = len * (theta[i] + theta[j]).sin() * (theta[i] - theta[j]).sin();
                let d = (bary[j] / bary[i]) / dy;
                diff1[(i, j)] = d;
                row_sum += d;
            }
            diff1[(i, i)] = -row_sum;
        }
        let diff2 = &diff1 * &diff1;
        let quad_weights = clenshaw_curtis(n)
            .into_iter()
            .map(|w| 0.5 * len * w)
            .collect();

        Ok(Self {
            n,
            lower,
            upper,
            nodes,
            bary,
            diff1,
            diff2,
            quad_weights,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// True for grids on `[0, 1]` that carry a parity condition at `y = 0`.
    pub fn is_half_domain(&self) -> bool {
        self.lower == 0.0
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn diff1(&self) -> &DMatrix<f64> {
        &self.diff1
    }

    pub fn diff2(&self) -> &DMatrix<f64> {
        &self.diff2
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn barycentric_weights(&self) -> &[f64] {
        &self.bary
    }

    /// Smallest distance between neighbouring nodes.
    pub fn min_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn differentiate(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.n, "sample vector length");
        let v = DVector::from_column_slice(values);
        (&self.diff1 * v).as_slice().to_vec()
    }

    /// Derivative of the interpolant at a single node.
    pub fn derivative_at(&self, values: &[f64], node: usize) -> f64 {
        assert_eq!(values.len(), self.n, "sample vector length");
        self.diff1
            .row(node)
            .iter()
            .zip(values)
            .map(|(d, v)| d * v)
            .sum()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.n, "sample vector length");
        self.quad_weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Barycentric Lagrange interpolation, exact at nodes.
    pub fn interpolate(&self, values: &[f64], point: f64) -> Result<f64> {
        if values.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                self.n,
                values.len()
            )));
        }
        if !(point >= self.lower && point <= self.upper) {
            return Err(Error::OutOfDomain {
                point,
                lower: self.lower,
                upper: self.upper,
            });
        }
        Ok(self.eval_unchecked(values, point))
    }

    fn eval_unchecked(&self, values: &[f64], point: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&y, &w), &f) in self.nodes.iter().zip(&self.bary).zip(values) {
            let d = point - y;
            if d == 0.0 {
                return f;
            }
            let t = w / d;
            num += t * f;
            den += t;
        }
        num / den
    }

    /// All points where the interpolant of `values` equals `level`,
    /// ascending. Sign changes between neighbouring nodes are refined by
    /// bisection on the global interpolant.
    pub fn find_crossings(&self, values: &[f64], level: f64) -> Vec<f64> {
        assert_eq!(values.len(), self.n, "sample vector length");
        let g: Vec<f64> = values.iter().map(|v| v - level).collect();
        let mut out = Vec::new();
        for i in 0..self.n {
            if g[i] == 0.0 {
                out.push(self.nodes[i]);
                continue;
            }
            if i + 1 < self.n && g[i] * g[i + 1] < 0.0 {
                out.push(self.refine(values, level, i));
            }
        }
        out
    }

    fn refine(&self, values: &[f64], level: f64, i: usize) -> f64 {
        let (mut a, mut b) = (self.nodes[i], self.nodes[i + 1]);
        let fa = values[i] - level;
        let tol = 1e-15 * (self.upper - self.lower);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if b - a <= tol || m <= a || m >= b {
                break;
            }
            let fm = self.eval_unchecked(values, m) - level;
            if fm == 0.0 {
                return m;
            }
            if (fm < 0.0) == (fa < 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }
}

/// Clenshaw–Curtis weights on `[-1, 1]` for the `n` Chebyshev extreme points.
fn clenshaw_curtis(n: usize) -> Vec<f64> {
    let big_n = n - 1;
    let nf = big_n as f64;
    let mut w = vec![0.0; n];
    let mut v = vec![1.0; big_n.saturating_sub(1)];
    let theta = |j: usize| j as f64 * PI / nf;
    if big_n % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[big_n] = w[0];
        for k in 1..big_n / 2 {
            let kf = k as f64;
            for (idx, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta(idx + 1)).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (idx, vi) in v.iter_mut().enumerate() {
            *vi -= (nf * theta(idx + 1)).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[big_n] = w[0];
        for k in 1..=(big_n - 1) / 2 {
            let kf = k as f64;
            for (idx, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta(idx + 1)).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (idx, vi) in v.iter().enumerate() {
        w[idx + 1] = 2.0 * vi / nf;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn samples(grid: &Grid, f: impl Fn(f64) -> f64) -> Vec<f64> {
        grid.nodes().iter().map(|&y| f(y)).collect()
    }

    #[test]
    fn rejects_coarse_grids() {
        assert!(matches!(Grid::new(7), Err(Error::InvalidArgument(_))));
        assert!(Grid::new(8).is_ok());
    }

    #[test]
    fn nine_nodes_hit_zero_half_and_one() {
        let g = Grid::new(9).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.nodes()[4], 0.5);
        assert_eq!(g.nodes()[8], 1.0);
    }

    #[test]
    fn nodes_are_affine_images_of_cosines() {
        let g = Grid::new(17).unwrap();
        for (j, &y) in g.nodes().iter().enumerate() {
            let expected = 0.5 * (1.0 - (j as f64 * PI / 16.0).cos());
            assert_abs_diff_eq!(y, expected, epsilon = 1e-15);
        }
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rows_of_diff1_sum_to_zero() {
        for n in [8, 33, 129, 257] {
            let g = Grid::new(n).unwrap();
            for i in 0..n {
                let row = g.diff1().row(i);
                let s: f64 = row.iter().sum();
                let scale: f64 = row.iter().map(|x| x.abs()).sum();
                assert!(s.abs() <= 1e-14 * scale, "n={n} row {i}: {s}");
            }
        }
    }

    #[test]
    fn diff1_is_exact_on_monomials() {
        for n in [9, 33, 65] {
            let g = Grid::new(n).unwrap();
            for m in 1..n {
                let d = g.differentiate(&samples(&g, |y| y.powi(m as i32)));
                let mf = m as f64;
                for (&y, &dv) in g.nodes().iter().zip(&d) {
                    let exact = mf * y.powi(m as i32 - 1);
                    assert!(
                        (dv - exact).abs() <= 1e-10 * exact.abs().max(mf),
                        "n={n} m={m} y={y}: {dv} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn cubic_derivative_at_33_nodes() {
        let g = Grid::new(33).unwrap();
        let d = g.differentiate(&samples(&g, |y| y.powi(3)));
        let err = g
            .nodes()
            .iter()
            .zip(&d)
            .map(|(y, dv)| (dv - 3.0 * y * y).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn diff2_matches_square_of_diff1() {
        let g = Grid::new(33).unwrap();
        let sq = g.diff1() * g.diff1();
        assert!((g.diff2() - sq).abs().max() <= 1e-9);
    }

    #[test]
    fn quadrature_is_exact_on_monomials() {
        for n in [8, 9, 33, 64, 129] {
            let g = Grid::new(n).unwrap();
            for m in 0..n {
                let q = g.integrate(&samples(&g, |y| y.powi(m as i32)));
                let exact = 1.0 / (m as f64 + 1.0);
                assert!(
                    (q - exact).abs() <= 1e-12 * exact,
                    "n={n} m={m}: {q} vs {exact}"
                );
            }
        }
        let g = Grid::new(33).unwrap();
        assert_abs_diff_eq!(g.integrate(&samples(&g, |y| y.powi(4))), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn full_interval_quadrature_and_nodes() {
        let g = Grid::full(33).unwrap();
        assert_eq!(g.nodes()[0], -1.0);
        assert_eq!(g.nodes()[16], 0.0);
        assert_abs_diff_eq!(g.integrate(&samples(&g, |y| y * y)), 2.0 / 3.0, epsilon = 1e-13);
        let d = g.differentiate(&samples(&g, |y| y.powi(5)));
        for (&y, &dv) in g.nodes().iter().zip(&d) {
            assert_abs_diff_eq!(dv, 5.0 * y.powi(4), epsilon = 1e-11);
        }
    }

    #[test]
    fn interpolation_examples() {
        let g = Grid::new(33).unwrap();
        let c = samples(&g, |_| 7.0);
        for p in [0.0, 0.13, 0.5, 0.999, 1.0] {
            assert_abs_diff_eq!(g.interpolate(&c, p).unwrap(), 7.0, epsilon = 1e-13);
        }
        let sq = samples(&g, |y| y * y);
        assert_abs_diff_eq!(g.interpolate(&sq, 0.3).unwrap(), 0.09, epsilon = 1e-12);
        let s3 = samples(&g, |y| (3.0 * y).sin());
        assert_abs_diff_eq!(g.interpolate(&s3, 0.5).unwrap(), 1.5f64.sin(), epsilon = 1e-10);
        for (j, &y) in g.nodes().iter().enumerate() {
            assert_eq!(g.interpolate(&s3, y).unwrap(), s3[j]);
        }
    }

    #[test]
    fn interpolation_outside_interval_is_an_error() {
        let g = Grid::new(9).unwrap();
        let v = vec![0.0; 9];
        assert!(matches!(
            g.interpolate(&v, 1.5),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(g.interpolate(&v, -1e-9).is_err());
        assert!(g.interpolate(&v, f64::NAN).is_err());
    }

    #[test]
    fn crossing_examples() {
        let g = Grid::new(33).unwrap();
        let lin = samples(&g, |y| y - 0.4);
        let c = g.find_crossings(&lin, 0.0);
        assert_eq!(c.len(), 1);
        assert_abs_diff_eq!(c[0], 0.4, epsilon = 1e-12);

        assert!(g.find_crossings(&samples(&g, |_| 1.0), 0.0).is_empty());

        let g = Grid::new(49).unwrap();
        let cosine = samples(&g, |y| (4.0 * y).cos());
        let c = g.find_crossings(&cosine, 0.0);
        assert_eq!(c.len(), 1);
        assert_abs_diff_eq!(c[0], PI / 8.0, epsilon = 1e-8);
    }

    #[test]
    fn crossing_on_a_node_is_reported_once() {
        let g = Grid::new(9).unwrap();
        let v = samples(&g, |y| y - 0.5);
        assert_eq!(g.find_crossings(&v, 0.0), vec![0.5]);
    }

    #[test]
    fn interpolation_converges_spectrally_for_a_bump() {
        let bump = |y: f64| {
            let z = (2.0 * y - 1.0) * 0.9;
            (-1.0 / (1.0 - z * z)).exp()
        };
        let err = |n: usize| {
            let g = Grid::new(n).unwrap();
            let v = samples(&g, bump);
            (0..=1000)
                .map(|k| {
                    let p = k as f64 / 1000.0;
                    (g.interpolate(&v, p).unwrap() - bump(p)).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e24, e48) = (err(24), err(48));
        assert!(e48 * 1e3 <= e24, "e24={e24:e} e48={e48:e}");
    }
}
