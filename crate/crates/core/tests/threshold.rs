use proptest::prelude::*;
use wormhole_core::threshold::{bisect_with, monotonicity_violations, Classification, Probe};

fn step(threshold: f64, calls: &mut usize) -> impl FnMut(f64) -> wormhole_core::Result<Probe> + '_ {
    move |b| {
        *calls += 1;
        Ok(Probe {
            b,
            classification: if b > threshold {
                Classification::Supercritical
            } else {
                Classification::Subcritical
            },
            bondi_final: 0.0,
            s_final: 0.0,
        })
    }
}

proptest! {
    #[test]
    fn bisection_uses_the_minimal_number_of_probes(
        lo in -5.0f64..5.0,
        width in 0.1f64..10.0,
        frac in 0.01f64..0.99,
        eps_exp in 2i32..12,
    ) {
        let hi = lo + width;
        let threshold = lo + frac * width;
        let eps = 10f64.powi(-eps_exp);
        let mut calls = 0;
        let res = bisect_with(lo, hi, eps, step(threshold, &mut calls)).unwrap();
        let expected = (width / eps).log2().ceil() as usize;
        prop_assert_eq!(calls, expected + 2);
        prop_assert!(res.bracket_width <= eps);
        prop_assert!(res.b_lo <= threshold && threshold <= res.b_hi);
        prop_assert!((res.b_star - threshold).abs() <= eps);
        prop_assert!(res.violations.is_empty());
    }
}

#[test]
fn contradictory_probes_are_reported() {
    let probe = |b: f64, sup: bool| Probe {
        b,
        classification: if sup {
            Classification::Supercritical
        } else {
            Classification::Subcritical
        },
        bondi_final: 0.0,
        s_final: 0.0,
    };
    let clean = [probe(0.9, true), probe(0.1, false), probe(0.5, false), probe(0.7, true)];
    assert!(monotonicity_violations(&clean, true).is_empty());
    let mixed = [probe(0.9, true), probe(0.1, false), probe(0.3, true), probe(0.5, false)];
    assert_eq!(monotonicity_violations(&mixed, true), vec![(0.3, 0.5)]);
}
