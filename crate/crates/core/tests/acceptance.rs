//! One test per acceptance criterion. Each prints a `PASS`/`FAIL` line on
//! stdout (bypassing the test harness capture), and criteria whose stated
//! value disagrees with the computation also print the corrected check.

mod common;

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use common::{catalogue_pairs, Q0, Q1};
use nalgebra::DMatrix;
use num_rational::Rational64;
use subheat::asymfit::fit_exponential;
use subheat::flow::{exp_jacobian, first_conjugate_time, rank_deficiency, InitialCovector};
use subheat::heat::{
    self, free36_radial, free36_vertical_closed, free36_vertical_log, gaveau_kernel, grushin_kernel,
    heisenberg_vertical_closed, heisenberg_vertical_log, semigroup_glue,
};
use subheat::hinged::{HingedField, HingedOptions, LaplaceForm};
use subheat::laplace::{heat_exponent, laplace_leading, laplace_oracle};
use subheat::shoot::{self, GeodesicSolution, ShootOptions, JACOBIAN_RANK_TOL};
use subheat::SrModel;

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {n:>2} {name}: {verdict} ({detail})").unwrap();
    out.flush().unwrap();
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}

fn dist(model: &SrModel, x: &[f64], y: &[f64]) -> f64 {
    shoot::distance(model, x, y, &ShootOptions::default()).unwrap().d
}

/// The minimizer of `x → y` whose midpoint is closest to `z`.
fn minimizer_through(model: &SrModel, x: &[f64], y: &[f64], z: &[f64]) -> GeodesicSolution {
    let r = shoot::distance(model, x, y, &ShootOptions::default()).unwrap();
    let gap = |s: &GeodesicSolution| -> f64 {
        let half: Vec<f64> = s.full_covector().iter().map(|v| 0.5 * v).collect();
        let m = shoot::endpoint_of(model, x, &half, 1e-12).unwrap();
        m.iter().zip(z).map(|(p, q)| (p - q).powi(2)).sum()
    };
    r.minimizers().min_by(|a, b| gap(a).total_cmp(&gap(b))).unwrap().clone()
}

/// Deterministic scattered points in `[−s, s]^n`.
fn scatter(k: usize, n: usize, s: f64) -> Vec<f64> {
    (0..n)
        .map(|i| s * (1.7 * k as f64 + 2.3 * i as f64 + 0.4).sin() * (0.9 + 0.1 * (k as f64).cos()))
        .collect()
}

#[test]
fn c01_heisenberg_distance() {
    let d = dist(&SrModel::heisenberg(), &[0.0; 3], &[0.0, 0.0, 1.0]);
    let err = (d * d - 4.0 * PI).abs();
    report(1, "heisenberg distance", err <= 1e-6, &format!("d^2 = {:.10}, |d^2 - 4pi| = {err:.1e}", d * d));
    assert!(err <= 1e-6);
}

#[test]
fn c02_heisenberg_vertical_kernel() {
    let h = SrModel::heisenberg();
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let t = 0.1 + 0.9 * i as f64 / 4.0;
            let z = 0.2 + 1.8 * j as f64 / 4.0;
            let g = gaveau_kernel(&h, &[0.0, 0.0, z], t, 1e-11).unwrap().value;
            worst = worst.max((g / heisenberg_vertical_closed(z, t) - 1.0).abs());
        }
    }
    report(2, "heisenberg vertical kernel", worst <= 1e-8, &format!("worst rel error {worst:.1e} on 5x5 grid"));
    assert!(worst <= 1e-8);
}

#[test]
fn c03_heisenberg_hinged_hessian() {
    let h = SrModel::heisenberg();
    let (x, y) = ([0.0; 3], [0.0, 0.0, 1.0]);
    let f = HingedField::new(&h, &x, &y, None, &HingedOptions::default()).unwrap();
    let z = &f.z0;
    let r = z[0].hypot(z[1]);
    let w = minimizer_through(&h, &x, &y, z).p0.p0[2].abs();
    let cyl = DMatrix::from_row_slice(3, 2, &[z[0] / r, 0.0, z[1] / r, 0.0, 0.0, 1.0]);
    let m = f.hessian_in(&cyl).unwrap().matrix;
    let ok = (m[(0, 0)] - PI * PI / 2.0).abs() <= 1e-3
        && m[(0, 1)].abs() <= 1e-3
        && (m[(1, 1)] - 2.0 * w * w).abs() <= 1e-3;
    report(
        3,
        "heisenberg hinged hessian",
        ok,
        &format!(
            "h_rr = {:.7}, h_rz = {:.1e}, h_zz = {:.7}, 2w^2 = {:.7}, w = {w:.7}",
            m[(0, 0)],
            m[(0, 1)],
            m[(1, 1)],
            2.0 * w * w
        ),
    );
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "            gamma radius: r = {r:.9}, 2/w = {:.9}; r^2 = {:.9}, 2/w^2 = {:.9}, 4/w^2 = {:.9}",
        2.0 / w,
        r * r,
        2.0 / (w * w),
        4.0 / (w * w)
    )
    .unwrap();
    assert!(ok);
}

#[test]
fn c04_heisenberg_fit() {
    let s: Vec<_> = log_grid(1e-3, 1e-1, 20).into_iter().map(|t| (t, heisenberg_vertical_log(1.0, t))).collect();
    let f = fit_exponential(&s).unwrap();
    let ok = (f.d2_hat - 4.0 * PI).abs() <= 0.01 && (f.alpha_hat - 2.0).abs() <= 0.01;
    report(4, "heisenberg exponent fit", ok, &format!("d2_hat = {:.6}, alpha_hat = {:.6}", f.d2_hat, f.alpha_hat));
    assert!(ok);
}

#[test]
fn c05_free36_closed_form_and_fit() {
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let t = 0.2 + 1.8 * i as f64 / 9.0;
        let r = free36_radial(1.0, t, 1e-10).unwrap().value;
        worst = worst.max((r / free36_vertical_closed(t) - 1.0).abs());
    }
    let s: Vec<_> = log_grid(1e-3, 1e-1, 20).into_iter().map(|t| (t, free36_vertical_log(t))).collect();
    let f = fit_exponential(&s).unwrap();
    let ok = worst <= 1e-6 && (f.d2_hat - 4.0 * PI).abs() <= 0.01 && (f.alpha_hat - 3.5).abs() <= 0.01;
    report(
        5,
        "free36 vertical kernel",
        ok,
        &format!("radial vs closed {worst:.1e}; d2_hat = {:.6}, alpha_hat = {:.6}", f.d2_hat, f.alpha_hat),
    );
    assert!(ok);
}

#[test]
fn c06_grushin_geometry() {
    let g = SrModel::grushin();
    let d = dist(&g, &Q0, &Q1);
    let c = first_conjugate_time(&g, &InitialCovector::grushin(&Q0, FRAC_PI_2).unwrap(), 4.0)
        .unwrap()
        .unwrap()
        .t;
    let f = HingedField::new(&g, &Q0, &Q1, Some(&[0.0, 0.0]), &HingedOptions::default()).unwrap();
    let h = f.hessian().unwrap();
    let k = &h.kernel()[0];
    let angle = ((k[1] - k[0]).abs() / (2f64.sqrt() * k[0].hypot(k[1]))).min(1.0).acos();
    let rest = (c - PI).abs() <= 1e-6 && h.kernel_dim == 1 && angle <= 1e-3;
    let detail = format!("conjugate time {c:.9}, kernel_dim {}, kernel angle {angle:.1e}", h.kernel_dim);
    let literal = (d - FRAC_PI_2).abs() <= 1e-6 && rest;
    report(6, "grushin geometry", literal, &format!("d = {d:.11} vs pi/2; {detail}"));
    report(6, "grushin geometry, corrected d = pi", (d - PI).abs() <= 1e-6 && rest, &format!("|d - pi| = {:.1e}", (d - PI).abs()));
    assert!(literal, "d = {d}, stated pi/2");
}

#[test]
fn c07_grushin_quartic_taylor() {
    let f = HingedField::new(&SrModel::grushin(), &Q0, &Q1, Some(&[0.0, 0.0]), &HingedOptions::default()).unwrap();
    let bar = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
    let t = f.taylor4(&bar).unwrap();
    let a = 1.5 * PI * PI;
    let stated = [
        ([2, 0], 4.0),
        ([4, 0], (a - 32.0) / 24.0),
        ([3, 1], -a / 6.0),
        ([2, 2], (a - 32.0) / 4.0),
        ([1, 3], -a / 6.0),
        ([0, 4], a / 24.0),
    ];
    let check = |table: &[([u32; 2], f64)]| -> (bool, String) {
        let mut ok = true;
        let mut parts = Vec::new();
        for (e, want) in table {
            let got = t.coefficient(e);
            let rel = (got / want - 1.0).abs();
            ok &= rel <= 0.02;
            parts.push(format!("{e:?}: {got:.6} vs {want:.6}"));
        }
        (ok, parts.join(", "))
    };
    let (literal, detail) = check(&stated);
    report(7, "grushin quartic taylor", literal, &detail);
    let mut corrected = stated;
    corrected[3].1 = (a - 16.0) / 4.0;
    let (fixed, detail) = check(&corrected);
    report(7, "grushin quartic taylor, corrected u1^2 u2^2 = (alpha - 16)/4", fixed, &detail);
    assert!(literal);
}

#[test]
fn c08_grushin_normal_form() {
    let f = HingedField::new(&SrModel::grushin(), &Q0, &Q1, Some(&[0.0, 0.0]), &HingedOptions::default()).unwrap();
    let bar = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
    let form = f.to_laplace_form(&bar).unwrap();
    let alpha = heat_exponent(2, &form).unwrap();
    let a = 1.5 * PI * PI;
    let close = |want: [f64; 2]| form.diag_coeffs.iter().zip(want).all(|(c, w)| (c / w - 1.0).abs() <= 0.02);
    let shape = form.exponents == [1, 2] && alpha == Rational64::new(5, 4);
    let detail = format!("m = {:?}, c = {:?}, alpha = {alpha}", form.exponents, form.diag_coeffs);
    let literal = shape && close([8.0, a / 24.0]);
    report(8, "grushin normal form", literal, &format!("{detail}; stated c = (8, {:.5})", a / 24.0));
    report(8, "grushin normal form, corrected c = (4, alpha/24)", shape && close([4.0, a / 24.0]), &detail);
    assert!(literal);
}

#[test]
fn c09_grushin_mehler_fit() {
    let ts = log_grid(0.05, 0.4, 20);
    let s: Vec<_> = ts.iter().map(|&t| (t, grushin_kernel(&Q0, &Q1, t, 1e-6).unwrap().log_value)).collect();
    let f = fit_exponential(&s).unwrap();
    let a_ok = (f.alpha_hat - 1.25).abs() <= 0.1;
    let detail = format!("d2_hat = {:.5}, alpha_hat = {:.5}", f.d2_hat, f.alpha_hat);
    let literal = a_ok && (f.d2_hat - PI * PI / 4.0).abs() <= 0.05;
    report(9, "grushin mehler fit", literal, &format!("{detail}; stated d2 = {:.5}", PI * PI / 4.0));
    report(9, "grushin mehler fit, corrected d2 = pi^2", a_ok && (f.d2_hat - PI * PI).abs() <= 0.05, &detail);
    assert!(literal);
}

#[test]
fn c10_laplace_engine() {
    type Phase = Box<dyn Fn(&[f64]) -> f64 + Sync>;
    let t = 1e-4;
    let cases: Vec<(Vec<u32>, Phase, Phase)> = vec![
        (vec![1], Box::new(|x: &[f64]| x[0] * x[0]), Box::new(|_: &[f64]| 1.0)),
        (vec![2], Box::new(|x: &[f64]| x[0].powi(4)), Box::new(|_: &[f64]| 1.0)),
        (vec![3], Box::new(|x: &[f64]| x[0].powi(6)), Box::new(|_: &[f64]| 1.0)),
        (vec![1, 2], Box::new(|x: &[f64]| x[0] * x[0] + x[1].powi(4)), Box::new(|x: &[f64]| 1.0 + x[0] * x[0])),
    ];
    let mut worst: f64 = 0.0;
    for (m, g, f) in cases {
        let n = m.len();
        let form = LaplaceForm {
            exponents: m,
            flat_dims: 0,
            diag_coeffs: vec![1.0; n],
            jacobian_at_z0: 1.0,
        };
        let (_, lead) = laplace_leading(f(&vec![0.0; n]), &form, t).unwrap();
        let o = laplace_oracle(&*g, &*f, &vec![-1.0; n], &vec![1.0; n], t, 1e-8).unwrap();
        worst = worst.max((o / lead - 1.0).abs());
    }
    report(10, "laplace engine", worst <= 0.02, &format!("worst |oracle/leading - 1| = {worst:.1e} at t = 1e-4"));
    assert!(worst <= 0.02);
}

#[test]
fn c11_semigroup_gluing() {
    let h = SrModel::heisenberg();
    let (x, y, t) = ([0.0; 3], [0.0, 0.0, 1.0], 0.5);
    let k = |p: &[f64], q: &[f64], s: f64| heat::kernel(&h, p, q, s, 1e-9).map(|r| r.value);
    let g = semigroup_glue(&k, &x, &y, t, &[-3.0, -3.0, -0.6], &[3.0, 3.0, 1.6], 1e-3).unwrap();
    let direct = heat::kernel(&h, &x, &y, t, 1e-9).unwrap().value;
    let rel = (g.value / direct - 1.0).abs();
    report(11, "semigroup gluing", rel <= 1e-3, &format!("glued {:.9e}, direct {direct:.9e}, rel {rel:.1e}", g.value));
    assert!(rel <= 1e-3);
}

#[test]
fn c12_property_suite() {
    let mut failures = Vec::new();
    let g = SrModel::grushin();
    let hz = SrModel::heisenberg();

    // Hinged bounds, sampled over the whole plane for the Grushin pair and
    // around the vertical Heisenberg pair.
    let mut worst_h = f64::INFINITY;
    let mut worst_u = f64::INFINITY;
    let mut hinged = |m: &SrModel, x: &[f64], y: &[f64], zs: Vec<Vec<f64>>| {
        let d = dist(m, x, y);
        for z in zs {
            let (a, b) = (dist(m, x, &z), dist(m, &z, y));
            let h = 0.5 * (a * a + b * b);
            let u = a - 0.5 * d;
            worst_h = worst_h.min(h - 0.25 * d * d);
            worst_u = worst_u.min(h - 0.25 * d * d - u * u);
        }
    };
    let plane: Vec<Vec<f64>> = (0..5)
        .flat_map(|i| (0..5).map(move |j| vec![-2.0 + i as f64, -2.0 + j as f64]))
        .collect();
    hinged(&g, &Q0, &Q1, plane);
    hinged(&hz, &[0.0; 3], &[0.0, 0.0, 1.0], (0..6).map(|k| scatter(k, 3, 1.0)).collect());
    if worst_h < -1e-6 || worst_u < -1e-6 {
        failures.push("hinged bounds");
    }

    // Symmetry and triangle inequality.
    let mut worst_sym: f64 = 0.0;
    let mut worst_tri = f64::INFINITY;
    for (m, n, s, count) in [(&g, 2, 1.5, 8), (&hz, 3, 1.0, 4)] {
        for k in 0..count {
            let (a, b, c) = (scatter(3 * k, n, s), scatter(3 * k + 1, n, s), scatter(3 * k + 2, n, s));
            let (ab, bc, ac) = (dist(m, &a, &b), dist(m, &b, &c), dist(m, &a, &c));
            worst_sym = worst_sym.max((ab - dist(m, &b, &a)).abs());
            worst_tri = worst_tri.min(ab + bc - ac);
        }
    }
    if worst_sym > 1e-6 || worst_tri < -1e-6 {
        failures.push("symmetry/triangle");
    }

    // Hessian corank against the rank deficiency of the exponential map.
    let mut corank = Vec::new();
    for (name, model, x, y, z0) in catalogue_pairs() {
        let f = HingedField::new(&model, &x, &y, z0.as_deref(), &HingedOptions::default()).unwrap();
        let k = f.hessian().unwrap().kernel_dim;
        let s = minimizer_through(&model, &x, &y, &f.z0);
        let def = rank_deficiency(&exp_jacobian(&model, &s.p0, s.t, 1e-12).unwrap(), JACOBIAN_RANK_TOL);
        if k != def {
            failures.push("corank");
        }
        corank.push(format!("{name} {k}/{def}"));
    }

    // Varadhan limit of both closed forms.
    let varadhan = |t: f64| {
        (
            (4.0 * t * heisenberg_vertical_log(1.0, t) + 4.0 * PI).abs(),
            (4.0 * t * free36_vertical_log(t) + 4.0 * PI).abs(),
        )
    };
    let (vh, vf) = varadhan(1e-3);
    let (vh4, vf4) = varadhan(1e-4);
    let varadhan_ok = vh <= 0.05 && vf <= 0.05;

    let detail = format!(
        "min h - d^2/4 = {worst_h:.1e}, min h - d^2/4 - u^2 = {worst_u:.1e}, symmetry {worst_sym:.1e}, \
         min triangle slack {worst_tri:.1e}, corank/deficiency [{}]",
        corank.join(", ")
    );
    let rest = failures.is_empty();
    report(12, "property suite", rest && varadhan_ok, &format!("{detail}, varadhan at t = 1e-3 {vh:.4} / {vf:.4}"));
    report(
        12,
        "property suite, corrected varadhan at t = 1e-4",
        rest && vh4 <= 0.05 && vf4 <= 0.05,
        &format!("varadhan {vh4:.4} / {vf4:.4}"),
    );
    assert!(rest, "{failures:?}");
    assert!(varadhan_ok, "free36 varadhan deviation {vf} at t = 1e-3");
}
