use std::f64::consts::{FRAC_PI_4, PI};

use proptest::prelude::*;
use statrs::function::gamma::gamma;
use subheat::heat::{
    free36_radial, free36_vertical_closed, free36_vertical_log, gaveau_kernel, grushin_kernel,
    grushin_kernel_with, heisenberg_kernel_real_line, heisenberg_vertical_closed, heisenberg_vertical_log,
    semigroup_glue, MehlerRoute,
};
use subheat::hinged::hinged_eval;
use subheat::quad::{cubature, QuadOptions};
use subheat::shoot::ShootOptions;
use subheat::SrModel;

const Q0: [f64; 2] = [-1.0, -FRAC_PI_4];
const Q1: [f64; 2] = [1.0, FRAC_PI_4];

fn grushin(q: &[f64], qp: &[f64], t: f64) -> f64 {
    grushin_kernel(q, qp, t, 1e-10).unwrap().value
}

/// `4t ln p + d² = 4t (ln C − α ln t)`, which for free36 (α = 7/2) is
/// still 0.078 at t = 1e-3.
#[test]
fn varadhan_limit_of_closed_forms() {
    let forms: [(f64, &dyn Fn(f64) -> f64); 3] = [
        (4.0 * PI, &|t| heisenberg_vertical_log(1.0, t)),
        (8.0 * PI, &|t| heisenberg_vertical_log(2.0, t)),
        (4.0 * PI, &free36_vertical_log),
    ];
    for (d2, log_p) in forms {
        let dev: Vec<f64> = [1e-3, 1e-4, 1e-5].iter().map(|&t| (4.0 * t * log_p(t) + d2).abs()).collect();
        assert!(dev[0] > dev[1] && dev[1] > dev[2] && dev[2] < 2e-3, "{dev:?}");
    }
}

#[test]
fn heisenberg_routes_agree_off_the_axis() {
    let h = SrModel::heisenberg();
    for (q, t) in [([0.7, -0.3, 0.4], 0.3), ([1.0, 0.0, 0.0], 0.5), ([0.2, 0.1, -1.2], 0.8)] {
        let a = gaveau_kernel(&h, &q, t, 1e-11).unwrap().value;
        let b = heisenberg_kernel_real_line(&q, t, 1e-11).unwrap().value;
        assert!((a / b - 1.0).abs() < 1e-8, "{q:?}, t = {t}: {a} vs {b}");
    }
    let a = gaveau_kernel(&h, &[0.0, 0.0, 0.0], 0.7, 1e-11).unwrap().value;
    assert!((a / heisenberg_vertical_closed(0.0, 0.7) - 1.0).abs() < 1e-9);
}

#[test]
fn free36_routes_agree() {
    for t in [0.25, 0.6, 1.5] {
        let r = free36_radial(1.0, t, 1e-10).unwrap().value;
        assert!((r / free36_vertical_closed(t) - 1.0).abs() < 1e-8, "t = {t}");
    }
    let f = SrModel::free36();
    let g = gaveau_kernel(&f, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0], 1.0, 1e-5).unwrap().value;
    assert!((g / free36_vertical_closed(1.0) - 1.0).abs() < 1e-5);
}

#[test]
fn grushin_routes_agree_where_both_are_accurate() {
    for t in [0.2, 0.4] {
        let a = grushin_kernel_with(&Q0, &Q1, t, 1e-10, MehlerRoute::Shifted).unwrap().value;
        let b = grushin_kernel_with(&Q0, &Q1, t, 1e-10, MehlerRoute::RealLine).unwrap().value;
        assert!((a / b - 1.0).abs() < 1e-8, "t = {t}");
    }
}

/// `p_t(0, 0) = 2 (2πt)^{−3/2} ∫₀^∞ √(τ / sinh 2τ) dτ`, and the integral is
/// `√2 Γ(3/2) Σ_k C(2k,k) 4^{−k} (4k+1)^{−3/2}`. The terms decay like
/// `k^{−2}/(8√π)`, so the tail past `K` is summed in closed form.
#[test]
fn grushin_origin_matches_series() {
    let big = 200_000usize;
    let mut c = 1.0;
    let mut s = 0.0;
    for k in 0..big {
        s += c * (4.0 * k as f64 + 1.0).powf(-1.5);
        c *= (2 * k + 1) as f64 / (2 * k + 2) as f64;
    }
    let kk = big as f64;
    s += 1.0 / (8.0 * PI.sqrt()) / (kk - 0.5);
    let integral = 2f64.sqrt() * gamma(1.5) * s;
    for t in [0.05, 0.3, 1.0] {
        let expect = 2.0 * (2.0 * PI * t).powf(-1.5) * integral;
        let got = grushin(&[0.0, 0.0], &[0.0, 0.0], t);
        assert!((got / expect - 1.0).abs() < 1e-6, "t = {t}: {got} vs {expect}");
    }
}

#[test]
fn grushin_kernel_conserves_mass() {
    let q = [0.3, 0.1];
    let t = 0.25;
    let f = |z: &[f64]| grushin_kernel(&q, z, t, 1e-9).map_or(f64::NAN, |k| k.value);
    let m = cubature(&f, &[-3.5, -4.0], &[3.5, 4.0], &QuadOptions::rel(1e-6)).unwrap();
    assert!((m.value - 1.0).abs() < 1e-5, "mass {}", m.value);
}

#[test]
fn grushin_glue_reproduces_the_kernel() {
    let k = |a: &[f64], b: &[f64], s: f64| grushin_kernel(a, b, s, 1e-9).map(|r| r.value);
    for (x, y, t) in [([0.5, 0.0], [0.5, 0.0], 0.4), ([0.0, 0.0], [0.0, 0.0], 0.3), (Q0, Q1, 0.5)] {
        let g = semigroup_glue(&k, &x, &y, t, &[-4.0, -4.0], &[4.0, 4.0], 1e-5).unwrap();
        let direct = grushin(&x, &y, t);
        assert!((g.value / direct - 1.0).abs() < 1e-4, "{x:?} → {y:?}: {} vs {direct}", g.value);
    }
}

/// The glued integrand `p_{t/2}(q0, z) p_{t/2}(z, q1)` behaves like
/// `e^{−h(z)/t}`, so its log-ratio to the midpoint value recovers the hinged
/// energy computed by shooting.
#[test]
fn glue_integrand_recovers_the_hinged_energy() {
    let log_i = |z: &[f64], t: f64| {
        grushin_kernel(&Q0, z, 0.5 * t, 1e-9).unwrap().log_value + grushin_kernel(z, &Q1, 0.5 * t, 1e-9).unwrap().log_value
    };
    let g = SrModel::grushin();
    for z in [[0.3, 0.2], [-0.4, 0.5], [0.6, 0.6]] {
        let h = hinged_eval(&g, &Q0, &Q1, &z, &ShootOptions::default()).unwrap() - PI * PI / 4.0;
        let mut last = f64::INFINITY;
        for t in [0.1, 0.05, 0.025, 0.0125, 0.00625] {
            let err = (-t * (log_i(&z, t) - log_i(&[0.0, 0.0], t)) - h).abs();
            assert!(err < 0.7 * last, "z = {z:?}, t = {t}: {err} after {last}");
            last = err;
        }
        assert!(last < 2e-3, "z = {z:?}: {last}");
    }
}

#[test]
fn kernels_are_positive_and_finite_in_log_space() {
    for t in [0.03, 0.05] {
        let k = grushin_kernel(&Q0, &Q1, t, 1e-8).unwrap();
        assert!(k.log_value.is_finite() && k.log_value < -30.0);
        assert!((4.0 * t * k.log_value + PI * PI).abs() < 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, ..ProptestConfig::default() })]

    #[test]
    fn heisenberg_vertical_scaling(z in -3.0f64..3.0, t in 0.05f64..2.0, lam in 0.2f64..5.0) {
        let a = heisenberg_vertical_closed(z, t);
        let b = heisenberg_vertical_closed(z / lam, t / lam) / (lam * lam);
        prop_assert!((a / b - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn grushin_kernel_is_symmetric(
        x in -1.0f64..1.0, y in -1.0f64..1.0, xp in -1.0f64..1.0, yp in -1.0f64..1.0, t in 0.1f64..1.0,
    ) {
        let a = grushin(&[x, y], &[xp, yp], t);
        let b = grushin(&[xp, yp], &[x, y], t);
        prop_assert!((a / b - 1.0).abs() < 1e-8);
    }
}
