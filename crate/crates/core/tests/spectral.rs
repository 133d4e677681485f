use proptest::prelude::*;
use wormhole_core::Grid;

fn poly(coeffs: &[f64], y: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * y + c)
}

fn dpoly(coeffs: &[f64], y: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, c)| acc * y + k as f64 * c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn differentiation_is_exact_for_low_degree_polynomials(
        coeffs in prop::collection::vec(-2.0f64..2.0, 1..12),
        n in 16usize..64,
    ) {
        let g = Grid::new(n).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|&y| poly(&coeffs, y)).collect();
        let d = g.differentiate(&vals);
        for (y, dv) in g.nodes().iter().zip(&d) {
            prop_assert!((dv - dpoly(&coeffs, *y)).abs() <= 1e-9, "at {y}: {dv}");
        }
    }

    #[test]
    fn quadrature_is_exact_for_low_degree_polynomials(
        coeffs in prop::collection::vec(-2.0f64..2.0, 1..12),
        n in 16usize..64,
    ) {
        let g = Grid::full(n).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|&y| poly(&coeffs, y)).collect();
        let exact: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| if k % 2 == 0 { 2.0 * c / (k as f64 + 1.0) } else { 0.0 })
            .sum();
        prop_assert!((g.integrate(&vals) - exact).abs() <= 1e-12);
    }

    #[test]
    fn interpolation_reproduces_node_values(seed in prop::collection::vec(-3.0f64..3.0, 17)) {
        let g = Grid::new(17).unwrap();
        for (i, &y) in g.nodes().iter().enumerate() {
            prop_assert_eq!(g.interpolate(&seed, y).unwrap(), seed[i]);
        }
    }

    /// Each simple crossing is found once, matching a 10⁴-point scan.
    #[test]
    fn crossings_match_dense_sampling(
        a in 0.5f64..2.0,
        w in 3.0f64..12.0,
        phase in 0.0f64..6.0,
        level in -0.4f64..0.4,
    ) {
        let f = |y: f64| a * (w * y + phase).sin();
        let g = Grid::new(65).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|&y| f(y)).collect();
        let found = g.find_crossings(&vals, level);
        let m = 10_000;
        let mut expected = Vec::new();
        for i in 0..m {
            let (y0, y1) = (i as f64 / m as f64, (i + 1) as f64 / m as f64);
            if (f(y0) - level) * (f(y1) - level) < 0.0 {
                expected.push(0.5 * (y0 + y1));
            }
        }
        prop_assert_eq!(found.len(), expected.len(), "{:?} vs {:?}", found, expected);
        for (x, e) in found.iter().zip(&expected) {
            prop_assert!((x - e).abs() <= 1e-4);
            prop_assert!((f(*x) - level).abs() <= 1e-8);
        }
        prop_assert!(found.windows(2).all(|p| p[1] > p[0]));
    }
}

#[test]
fn interpolation_error_decays_spectrally() {
    // Smooth but not polynomial: a flat bump centred in the interval.
    let f = |y: f64| {
        let z = 2.0 * y - 1.0;
        (-1.0 / (1.2 - z * z)).exp()
    };
    let err = |n: usize| {
        let g = Grid::new(n).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|&y| f(y)).collect();
        (0..=997)
            .map(|i| {
                let y = i as f64 / 997.0;
                (g.interpolate(&vals, y).unwrap() - f(y)).abs()
            })
            .fold(0.0, f64::max)
    };
    let (e24, e48) = (err(24), err(48));
    assert!(e24 >= 1e3 * e48, "n=24: {e24:e}, n=48: {e48:e}");
}

#[test]
fn nodes_are_nested_under_doubling() {
    let coarse = Grid::new(65).unwrap();
    let fine = Grid::new(129).unwrap();
    for (j, y) in coarse.nodes().iter().enumerate() {
        assert_eq!(*y, fine.nodes()[2 * j]);
    }
}
