//! Closed-form geodesics for the Heisenberg group and the Grushin plane.
//!
//! Both evaluators are written in terms of `sinc`-like functions with series
//! branches, so the straight-line limits (`w → 0`, `p_y → 0`) need no special
//! casing.

use crate::models::SrModel;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `(s − sin s) / s²`.
fn z_profile(s: f64) -> f64 {
    if s.abs() < 1e-3 {
        let s2 = s * s;
        s / 6.0 * (1.0 - s2 / 20.0 * (1.0 - s2 / 42.0))
    } else {
        (s - s.sin()) / (s * s)
    }
}

/// `(1 − sinc u) / u`, odd in `u`.
fn q_profile(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        let u2 = u * u;
        u / 6.0 * (1.0 - u2 / 20.0 * (1.0 - u2 / 42.0))
    } else {
        (1.0 - u.sin() / u) / u
    }
}

/// Heisenberg geodesic from the origin with covector angle `θ` and vertical
/// component `w`, at time `t`.
pub fn heisenberg_from_origin(theta: f64, w: f64, t: f64) -> [f64; 3] {
    let s = w * t;
    let half = 0.5 * s;
    let r = t * sinc(half);
    [
        -r * (theta + half).sin(),
        r * (theta + half).cos(),
        0.5 * t * t * z_profile(s),
    ]
}

/// Heisenberg geodesic from an arbitrary base point, by left translation.
pub fn heisenberg(base: &[f64], theta: f64, w: f64, t: f64) -> [f64; 3] {
    let g = heisenberg_from_origin(theta, w, t);
    let out = SrModel::heisenberg()
        .group_product(base, &g)
        .expect("heisenberg is two-step");
    [out[0], out[1], out[2]]
}

/// Grushin geodesic from `(x0, y0)` with covector `(p_x, p_y)` at time `t`.
/// The covector need not be normalized.
pub fn grushin(base: &[f64], p: &[f64], t: f64) -> [f64; 2] {
    let (x0, y0) = (base[0], base[1]);
    let (px, a) = (p[0], p[1]);
    let at = a * t;
    let x = x0 * at.cos() + px * t * sinc(at);
    // y' = x² a, integrated term by term.
    let y = y0
        + x0 * x0 * (0.5 * at + 0.25 * (2.0 * at).sin())
        + px * px * t * t * q_profile(2.0 * at)
        + x0 * px * t * at.sin() * sinc(at);
    [x, y]
}
