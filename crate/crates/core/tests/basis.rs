use std::f64::consts::PI;

use diffcoef::basis::{basis_norms, default_probe, eval_basis, eval_basis_derivative, BasisSpec};
use diffcoef::bench::fit_slope;
use diffcoef::model::ProbeGrid;
use proptest::prelude::*;

#[test]
fn spline_norm_constant_is_at_most_one() {
    for knots in [1, 2, 5, 16, 40] {
        for degree in [0, 1, 2, 3, 4] {
            let spec = BasisSpec::spline(knots, degree, -2.0, 3.0).unwrap();
            let (l, _) = basis_norms(&spec, &default_probe(&spec)).unwrap();
            assert!(l <= 1.0 + 1e-12, "K = {knots}, M = {degree}: {l}");
        }
    }
}

#[test]
fn fourier_norm_constant_is_bounded_by_twice_the_dimension() {
    for d in 0..20 {
        let spec = BasisSpec::fourier(d, 0.0, 1.0).unwrap();
        let (l, _) = basis_norms(&spec, &default_probe(&spec)).unwrap();
        assert!(l <= 2.0 * spec.dim() as f64 + 1e-12);
    }
}

#[test]
fn fourier_norm_constant_grows_linearly() {
    let pts: Vec<(f64, f64, f64)> = (1..=32)
        .map(|d| {
            let spec = BasisSpec::fourier(d, 0.0, 1.0).unwrap();
            let (l, _) = basis_norms(&spec, &default_probe(&spec)).unwrap();
            ((spec.dim() as f64).ln(), l.ln(), 1.0)
        })
        .collect();
    let slope = fit_slope(&pts).unwrap().slope;
    assert!((slope - 1.0).abs() <= 0.1, "{slope}");
}

#[test]
fn fourier_derivative_at_origin() {
    let spec = BasisSpec::fourier(1, 0.0, 1.0).unwrap();
    let d = eval_basis_derivative(&spec, 0.0).unwrap();
    assert_eq!(d[0], 0.0);
    assert!(d[1].abs() < 1e-12);
    assert!((d[2] - 2.0 * PI * 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn spline_derivative_matches_finite_differences_between_knots() {
    let spec = BasisSpec::spline(6, 3, -1.0, 2.0).unwrap();
    let h = 1e-6;
    for x in [-0.93, -0.31, 0.27, 0.61, 1.13, 1.97] {
        let d = eval_basis_derivative(&spec, x).unwrap();
        let up = eval_basis(&spec, x + h).unwrap();
        let down = eval_basis(&spec, x - h).unwrap();
        for l in 0..spec.dim() {
            let fd = (up[l] - down[l]) / (2.0 * h);
            assert!((fd - d[l]).abs() <= 1e-6, "x = {x}, l = {l}: {fd} vs {}", d[l]);
        }
    }
}

fn spline_strategy() -> impl Strategy<Value = (BasisSpec, f64)> {
    (1usize..24, 0usize..5, -5.0f64..5.0, 0.1f64..10.0, 0.0f64..=1.0).prop_map(|(k, deg, a, w, u)| {
        let spec = BasisSpec::spline(k, deg, a, a + w).unwrap();
        (spec, a + u * w)
    })
}

proptest! {
    #[test]
    fn splines_form_a_nonnegative_partition_of_unity((spec, x) in spline_strategy()) {
        let v = eval_basis(&spec, x).unwrap();
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(v.iter().all(|&b| b >= -1e-15));
    }

    #[test]
    fn splines_vanish_outside_their_knot_span((spec, x) in spline_strategy()) {
        let (knots, degree) = match spec.kind {
            diffcoef::basis::BasisKind::Spline { knots, degree } => (knots, degree),
            _ => unreachable!(),
        };
        let v = eval_basis(&spec, x).unwrap();
        let t = spec.knot_vector();
        for (l, b) in v.iter().enumerate() {
            if x < t[l] || x > t[l + degree + 1] {
                prop_assert_eq!(*b, 0.0);
            }
        }
        prop_assert!(v.iter().filter(|&&b| b != 0.0).count() <= degree + 1);
        prop_assert_eq!(v.len(), knots + degree);
    }

    #[test]
    fn splines_are_zero_outside_the_interval(k in 1usize..10, deg in 0usize..4, off in 1e-6f64..5.0) {
        let spec = BasisSpec::spline(k, deg, 0.0, 1.0).unwrap();
        prop_assert!(eval_basis(&spec, 1.0 + off).unwrap().iter().all(|&b| b == 0.0));
        prop_assert!(eval_basis(&spec, -off).unwrap().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn normalized_fourier_is_orthonormal_on_any_interval(d in 0usize..6, a in -3.0f64..3.0, w in 0.2f64..5.0) {
        let spec = BasisSpec::fourier(d, a, a + w).unwrap().normalized(true);
        let m = spec.dim();
        // Trapezoid is exact for trigonometric polynomials of degree < points on a full period.
        let points = 64;
        let mut gram = vec![0.0; m * m];
        for x in ProbeGrid::new(a, a + w, points + 1).points().take(points) {
            let v = eval_basis(&spec, x).unwrap();
            for i in 0..m {
                for j in 0..m {
                    gram[i * m + j] += v[i] * v[j] * w / points as f64;
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[i * m + j] - target).abs() < 1e-10);
            }
        }
    }
}
