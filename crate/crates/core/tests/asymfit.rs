use num_rational::Rational64;
use proptest::prelude::*;
use subheat::asymfit::{corollary_verdict, fit_exponential, AsymptoticFit, VERDICT_EPS};
use subheat::heat::heisenberg_vertical_log;
use subheat::Error;

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}

fn synthetic(d2: f64, alpha: f64, c: f64, b: f64, ts: &[f64]) -> Vec<(f64, f64)> {
    ts.iter()
        .map(|&t| (t, c.ln() - alpha * t.ln() - d2 / (4.0 * t) + (1.0 + b * t).ln()))
        .collect()
}

fn fit_with(alpha: f64) -> AsymptoticFit {
    AsymptoticFit {
        d2_hat: 1.0,
        alpha_hat: alpha,
        c_hat: 1.0,
        residual_rms: 0.0,
        t_window: (1e-3, 1e-1),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn exact_model_is_recovered(d2 in 0.1f64..20.0, alpha in 0.5f64..4.0, c in 0.01f64..10.0) {
        let s = synthetic(d2, alpha, c, 0.0, &log_grid(1e-3, 1e-1, 20));
        let f = fit_exponential(&s).unwrap();
        prop_assert!((f.d2_hat - d2).abs() < 1e-8 * (1.0 + d2));
        prop_assert!((f.alpha_hat - alpha).abs() < 1e-6);
        prop_assert!((f.c_hat / c - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shrinking_the_window_never_hurts(b in -3.0f64..3.0, alpha in 0.5f64..3.0) {
        let mut last = f64::INFINITY;
        let mut tmax = 0.2;
        for _ in 0..4 {
            let f = fit_exponential(&synthetic(2.0, alpha, 1.0, b, &log_grid(tmax / 100.0, tmax, 20))).unwrap();
            let err = (f.alpha_hat - alpha).abs();
            prop_assert!(err <= last + 1e-9, "t_max {tmax}: {err} after {last}");
            last = err;
            tmax *= 0.5;
        }
    }
}

#[test]
fn heisenberg_vertical_kernel_gives_alpha_two() {
    let mut last = f64::INFINITY;
    for tmax in [0.4, 0.2, 0.1] {
        let s: Vec<_> = log_grid(1e-3, tmax, 20).into_iter().map(|t| (t, heisenberg_vertical_log(1.0, t))).collect();
        let f = fit_exponential(&s).unwrap();
        let err = (f.alpha_hat - 2.0).abs();
        assert!(err <= last + 1e-9);
        last = err;
        assert!((f.d2_hat - 4.0 * std::f64::consts::PI).abs() < 1e-2);
    }
    assert!(last < 1e-3);
}

#[test]
fn bad_windows_are_rejected() {
    let s = synthetic(1.0, 1.0, 1.0, 0.0, &log_grid(0.01, 0.1, 5));
    assert!(matches!(fit_exponential(&s), Err(Error::InvalidArgument(_))));
    let s = synthetic(1.0, 1.0, 1.0, 0.0, &log_grid(0.01, 0.02, 10));
    assert!(matches!(fit_exponential(&s), Err(Error::IllConditioned(_))));
    let mut s = synthetic(1.0, 1.0, 1.0, 0.0, &log_grid(0.01, 0.1, 10));
    s[3].1 = f64::NAN;
    assert!(matches!(fit_exponential(&s), Err(Error::InvalidArgument(_))));
}

#[test]
fn verdict_clauses() {
    let v = corollary_verdict(&fit_with(1.0), 2, 0, None, VERDICT_EPS);
    assert!(v.clauses.i && v.clauses.iii == Some(true) && v.clauses.ii.is_none());
    assert!(v.clauses.all_pass());

    let v = corollary_verdict(&fit_with(1.25), 2, 1, Some(Rational64::new(5, 4)), VERDICT_EPS);
    assert_eq!(v.clauses.ii, Some(true));
    assert_eq!(v.clauses.iii, None);
    assert_eq!(v.predicted_alpha, Some(1.25));

    // A non-conjugate pair with a raised exponent fails clause iii.
    let v = corollary_verdict(&fit_with(1.25), 2, 0, None, VERDICT_EPS);
    assert_eq!(v.clauses.iii, Some(false));
    assert!(!v.clauses.all_pass());

    // A conjugate pair at the Riemannian exponent fails clause ii.
    let v = corollary_verdict(&fit_with(1.5), 3, 1, None, VERDICT_EPS);
    assert_eq!(v.clauses.ii, Some(false));

    assert!(!corollary_verdict(&fit_with(2.7), 3, 1, None, VERDICT_EPS).clauses.i);
    assert!(!corollary_verdict(&fit_with(1.4), 3, 0, None, VERDICT_EPS).clauses.i);
}
