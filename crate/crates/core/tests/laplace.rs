use num_rational::Rational64;
use subheat::hinged::LaplaceForm;
use subheat::laplace::{heat_exponent, laplace_leading, laplace_oracle};

type Phase = Box<dyn Fn(&[f64]) -> f64 + Sync>;

fn form(m: &[u32], c: &[f64]) -> LaplaceForm {
    LaplaceForm {
        exponents: m.to_vec(),
        flat_dims: 0,
        diag_coeffs: c.to_vec(),
        jacobian_at_z0: 1.0,
    }
}

fn cases() -> Vec<(LaplaceForm, Phase, Phase)> {
    vec![
        (form(&[1], &[2.0]), Box::new(|x: &[f64]| 2.0 * x[0] * x[0]), Box::new(|_: &[f64]| 1.0)),
        (form(&[2], &[0.5]), Box::new(|x: &[f64]| 0.5 * x[0].powi(4)), Box::new(|x: &[f64]| 1.0 + x[0])),
        (form(&[3], &[1.0]), Box::new(|x: &[f64]| x[0].powi(6)), Box::new(|_: &[f64]| 3.0)),
        (
            form(&[1, 2], &[1.0, 1.0]),
            Box::new(|x: &[f64]| x[0] * x[0] + x[1].powi(4)),
            Box::new(|x: &[f64]| 1.0 + x[0] * x[0]),
        ),
        (
            form(&[1, 1, 2], &[1.0, 3.0, 0.7]),
            Box::new(|x: &[f64]| x[0] * x[0] + 3.0 * x[1] * x[1] + 0.7 * x[2].powi(4) + x[0].powi(4)),
            Box::new(|_: &[f64]| 1.0),
        ),
    ]
}

fn f0(f: &Phase, n: usize) -> f64 {
    f(&vec![0.0; n])
}

#[test]
fn oracle_ratio_tends_to_one() {
    for (k, (lf, g, f)) in cases().into_iter().enumerate() {
        let n = lf.exponents.len();
        let (lo, hi) = (vec![-1.0; n], vec![1.0; n]);
        let mut last = f64::INFINITY;
        let tol = if n == 3 { 1e-6 } else { 1e-9 };
        for t in [1e-2, 1e-3, 1e-4] {
            let (_, lead) = laplace_leading(f0(&f, n), &lf, t).unwrap();
            let o = laplace_oracle(&*g, &*f, &lo, &hi, t, tol).unwrap();
            let dev = (o / lead - 1.0).abs();
            assert!(dev <= last + 10.0 * tol, "case {k}, t = {t}: deviation {dev} after {last}");
            last = dev;
        }
        assert!(last <= 0.02, "case {k}: {last}");
    }
}

#[test]
fn leading_power_and_error_order() {
    let (l, _) = laplace_leading(1.0, &form(&[1, 2], &[4.0, 0.6]), 1.0).unwrap();
    assert_eq!(l.t_power, Rational64::new(3, 4));
    assert_eq!(l.error_order, Rational64::new(5, 4));
    let (l, _) = laplace_leading(1.0, &form(&[1, 1, 1], &[1.0; 3]), 1.0).unwrap();
    assert_eq!(l.t_power, Rational64::new(3, 2));
}

#[test]
fn exponent_bounds_hold_for_every_small_form() {
    // n/2 ≤ α always, and α ≤ n − 1/2 once some direction is Morse. The
    // hinged energy always has one: moving the hinge along the geodesic.
    for n in 1..=4usize {
        for mask in 0..(4usize.pow(n as u32)) {
            let m: Vec<u32> = (0..n).map(|i| (mask / 4usize.pow(i as u32) % 4) as u32 + 1).collect();
            let lf = form(&m, &vec![1.0; n]);
            let a = heat_exponent(n, &lf).unwrap();
            let half = Rational64::new(n as i64, 2);
            assert!(a >= half);
            if m.contains(&1) {
                assert!(a <= Rational64::from_integer(n as i64) - Rational64::new(1, 2), "{m:?}");
            }
            assert_eq!(a == half, m.iter().all(|&e| e == 1), "{m:?}");
        }
    }
}
