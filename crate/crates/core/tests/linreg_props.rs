mod common;

use common::*;
use martlens::linreg::{self, FitOptions, LinearModel, LinregError};
use proptest::prelude::*;

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

fn fit(x: &[Vec<f64>], y: &[f64], w: Option<&[f64]>, opts: FitOptions) -> LinearModel {
    linreg::fit(&names(x[0].len()), "y", x, y, w, opts).unwrap()
}

fn values(m: &LinearModel) -> Vec<f64> {
    m.coefficients.iter().map(|c| c.value).collect()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn assert_models_close(a: &LinearModel, b: &LinearModel, tol: f64) {
    assert!(rel_close(a.intercept, b.intercept, tol), "{} vs {}", a.intercept, b.intercept);
    for (x, y) in values(a).iter().zip(values(b)) {
        assert!(rel_close(*x, y, tol), "{x} vs {y}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raw_ridge_matches_normal_equations(seed in any::<u64>(), n in 12usize..60, d in 1usize..6, lambda in 0.0f64..20.0) {
        let (x, y, w) = random_problem(seed, n, d);
        let m = fit(&x, &y, Some(&w), FitOptions::raw(lambda));
        let (b0, coefs) = ridge_normal_equations(&x, &y, &w, lambda).unwrap();
        prop_assert!(rel_close(m.intercept, b0, 1e-8));
        for (a, b) in values(&m).iter().zip(&coefs) {
            prop_assert!(rel_close(*a, *b, 1e-8), "{a} vs {b}");
        }
    }

    #[test]
    fn standardized_ridge_matches_reference(seed in any::<u64>(), n in 12usize..60, d in 1usize..6, lambda in 0.0f64..20.0) {
        let (x, y, w) = random_problem(seed, n, d);
        let m = fit(&x, &y, Some(&w), FitOptions::ridge(lambda));
        let (b0, coefs) = standardized_ridge(&x, &y, &w, lambda).unwrap();
        prop_assert!(rel_close(m.intercept, b0, 1e-8));
        for (a, b) in values(&m).iter().zip(&coefs) {
            prop_assert!(rel_close(*a, *b, 1e-8), "{a} vs {b}");
        }
    }

    #[test]
    fn uniform_weights_equal_unweighted(seed in any::<u64>(), c in 0.1f64..10.0, lambda in 0.0f64..5.0) {
        let (x, y, _) = random_problem(seed, 30, 3);
        let w = vec![c; x.len()];
        // Scaling every weight by c is the same as scaling the penalty by 1/c.
        let weighted = fit(&x, &y, Some(&w), FitOptions::raw(lambda * c));
        let plain = fit(&x, &y, None, FitOptions::raw(lambda));
        assert_models_close(&weighted, &plain, 1e-8);
    }

    #[test]
    fn duplicated_rows_equal_weight_two(seed in any::<u64>(), lambda in 0.0f64..5.0) {
        let (x, y, _) = random_problem(seed, 25, 3);
        let mut xd = x.clone();
        let mut yd = y.clone();
        let mut w = vec![1.0; x.len()];
        for i in (0..x.len()).step_by(3) {
            xd.push(x[i].clone());
            yd.push(y[i]);
            w[i] = 2.0;
        }
        let dup = fit(&xd, &yd, None, FitOptions::raw(lambda));
        let weighted = fit(&x, &y, Some(&w), FitOptions::raw(lambda));
        assert_models_close(&dup, &weighted, 1e-8);
    }

    #[test]
    fn ridge_shrinks_standardized_norm(seed in any::<u64>(), l1 in 0.0f64..10.0, extra in 0.01f64..50.0) {
        let (x, y, w) = random_problem(seed, 40, 4);
        let norm = |m: &LinearModel| m.coefficients.iter().map(|c| c.standardized.powi(2)).sum::<f64>();
        let a = fit(&x, &y, Some(&w), FitOptions::ridge(l1));
        let b = fit(&x, &y, Some(&w), FitOptions::ridge(l1 + extra));
        prop_assert!(norm(&b) <= norm(&a) * (1.0 + 1e-12));
    }

    #[test]
    fn unweighted_fit_passes_through_centroid(seed in any::<u64>(), lambda in 0.0f64..10.0) {
        let (x, y, _) = random_problem(seed, 30, 3);
        let (mean, _) = column_moments(&x);
        let ybar = compensated_sum(y.iter().copied()) / y.len() as f64;
        for opts in [FitOptions::ridge(lambda), FitOptions::raw(0.0)] {
            let m = fit(&x, &y, None, opts);
            let at_mean = m.predict(&mean).unwrap();
            prop_assert!(rel_close(at_mean, ybar, 1e-9), "{at_mean} vs {ybar}");
        }
    }

    #[test]
    fn metrics_match_definitions(seed in any::<u64>(), n in 2usize..80) {
        let (x, y, _) = random_problem(seed, n, 2);
        let pred: Vec<f64> = x.iter().map(|r| r[0] + 0.5 * r[1]).collect();
        let m = linreg::metrics(&pred, &y).unwrap();
        let (rmse, mae, r2) = reference_metrics(&pred, &y);
        prop_assert!(rel_close(m.rmse, rmse, 1e-10));
        prop_assert!(rel_close(m.mae, mae, 1e-10));
        prop_assert!(rel_close(m.r2, r2, 1e-9), "{} vs {r2}", m.r2);
    }

    #[test]
    fn predictions_are_linear_in_coefficients(seed in any::<u64>()) {
        let (x, y, w) = random_problem(seed, 20, 3);
        let m = fit(&x, &y, Some(&w), FitOptions::ridge(1.0));
        for r in &x {
            let manual = m.intercept + r.iter().zip(values(&m)).map(|(a, b)| a * b).sum::<f64>();
            prop_assert!(rel_close(m.predict(r).unwrap(), manual, 1e-10));
        }
    }
}

#[test]
fn collinear_columns_are_singular_without_penalty() {
    let x: Vec<Vec<f64>> = (0..20).map(|i| vec![f64::from(i), 2.0 * f64::from(i)]).collect();
    let y: Vec<f64> = (0..20).map(|i| 1.0 + f64::from(i)).collect();
    let err = linreg::fit(&names(2), "y", &x, &y, None, FitOptions::raw(0.0)).unwrap_err();
    assert!(matches!(err, LinregError::SingularMatrix { .. }), "{err:?}");
    // Any positive penalty makes the system solvable.
    assert!(linreg::fit(&names(2), "y", &x, &y, None, FitOptions::raw(0.1)).is_ok());
}

#[test]
fn non_finite_input_is_rejected() {
    let x = vec![vec![1.0, 2.0], vec![f64::NAN, 1.0], vec![3.0, 0.0]];
    let y = vec![1.0, 2.0, 3.0];
    assert!(matches!(
        linreg::fit(&names(2), "y", &x, &y, None, FitOptions::raw(0.0)),
        Err(LinregError::NonFiniteInput(_))
    ));
}

#[test]
fn model_json_round_trips_exactly() {
    let (x, y, w) = random_problem(5, 40, 4);
    let m = fit(&x, &y, Some(&w), FitOptions::ridge(0.5));
    let text = serde_json::to_string(&m).unwrap();
    let back: LinearModel = serde_json::from_str(&text).unwrap();
    assert_eq!(m, back);
    for r in &x {
        assert_eq!(m.predict(r).unwrap().to_bits(), back.predict(r).unwrap().to_bits());
    }
}
