//! Heat kernels of the sum-of-squares sub-Laplacians of the catalogue.
//!
//! The integral representations are Fourier integrals whose value is
//! exponentially smaller than their integrand at small `t`. On the real line
//! that cancellation exhausts double precision quickly, so the contour is
//! moved to the horizontal line through (or near) the saddle of the
//! integrand inside its strip of analyticity. The integrand is then
//! integrated after dividing out its size at the saddle, and the scale is
//! carried in log space.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelId, SrModel};
use crate::quad::{self, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMethod {
    ClosedForm,
    GaveauIntegral,
    RadialReduction,
    MehlerIntegral,
    SemigroupGlue,
}

impl KernelMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelMethod::ClosedForm => "closed_form",
            KernelMethod::GaveauIntegral => "gaveau_integral",
            KernelMethod::RadialReduction => "radial_reduction",
            KernelMethod::MehlerIntegral => "mehler_integral",
            KernelMethod::SemigroupGlue => "semigroup_glue",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
    pub log_value: f64,
    pub method: KernelMethod,
    pub est_error: f64,
}

impl KernelSample {
    fn from_log(t: f64, x: &[f64], y: &[f64], log_value: f64, rel_err: f64, method: KernelMethod) -> Self {
        let value = log_value.exp();
        KernelSample {
            t,
            x: x.to_vec(),
            y: y.to_vec(),
            value,
            log_value,
            method,
            est_error: rel_err.abs() * value,
        }
    }
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("t must be positive and finite, got {t}")))
    }
}

/// `ln(1 + cosh a)` without overflow.
fn ln_one_plus_cosh(a: f64) -> f64 {
    let a = a.abs();
    a + 2.0 * (-a).exp().ln_1p() - 2f64.ln()
}

/// `ln sinh x` for `x > 0` without overflow.
fn ln_sinh(x: f64) -> f64 {
    if x > 1.0 {
        x + (-(-2.0 * x).exp()).ln_1p() - 2f64.ln()
    } else {
        x.sinh().ln()
    }
}

/// `ln p_t(0, (0, 0, z))` on the Heisenberg group.
pub fn heisenberg_vertical_log(z: f64, t: f64) -> f64 {
    -2.0 * t.ln() - 8f64.ln() - ln_one_plus_cosh(PI * z / t)
}

/// `p_t(0, (0, 0, z)) = 1 / (8 t² (1 + cosh(π z / t)))`.
pub fn heisenberg_vertical_closed(z: f64, t: f64) -> f64 {
    heisenberg_vertical_log(z, t).exp()
}

/// `ln p_t(0, ζ)` on the free (3,6) group for vertical `ζ` with `|z| = r`.
pub fn free36_vertical_log_at(r: f64, t: f64) -> f64 {
    let rho = r / t;
    if rho < 1e-6 {
        // The reduced integral tends to π⁴/8 as ρ → 0.
        return (8.0 * PI).ln() - 4.5 * (4.0 * PI * t).ln() + (PI.powi(4) / 8.0).ln();
    }
    (8.0 * PI).ln() - 4.5 * (4.0 * PI * t).ln() + (2.0 * PI.powi(3)).ln() + 4.0 * ln_sinh(0.5 * PI * rho)
        - rho.ln()
        - 3.0 * ln_sinh(PI * rho)
}

/// `p_t(0, ζ)` on the free (3,6) group at a vertical point with `|z| = 1`:
/// `sinh⁴(π/(2t)) / (32 √π t^{7/2} sinh³(π/t))`.
pub fn free36_vertical_closed(t: f64) -> f64 {
    free36_vertical_log_at(1.0, t).exp()
}

pub fn free36_vertical_log(t: f64) -> f64 {
    free36_vertical_log_at(1.0, t)
}

/// `w / sinh w`, entire except its poles at `iπℤ∖{0}`.
fn w_over_sinh(w: Complex64) -> Complex64 {
    if w.norm() < 1e-4 {
        1.0 - w * w / 6.0
    } else {
        w / w.sinh()
    }
}

/// `w / tanh w`.
fn w_over_tanh(w: Complex64) -> Complex64 {
    if w.norm() < 1e-4 {
        1.0 + w * w / 3.0
    } else {
        w / w.tanh()
    }
}

/// Spectral data of a skew matrix `B`: the rotation rates `λ_j ≥ 0` of
/// its invariant planes and, for `W(B) x·x`, the eigenvalues of `−B²`
/// with their eigenvectors.
struct SkewSpectrum {
    rates: Vec<f64>,
    sq: Vec<f64>,
    vecs: DMatrix<f64>,
}

fn skew_spectrum(b: &DMatrix<f64>) -> SkewSpectrum {
    let s = -(b * b);
    let s = 0.5 * (&s + s.transpose());
    let eig = SymmetricEigen::new(s);
    let mut sq: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let mut order: Vec<usize> = (0..sq.len()).collect();
    order.sort_by(|&a, &b| sq[b].total_cmp(&sq[a]));
    let vecs = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| eig.eigenvectors[(i, order[j])]);
    sq = order.iter().map(|&j| sq[j]).collect();
    // Eigenvalues of −B² come in equal pairs, one per invariant plane.
    let scale = sq.first().copied().unwrap_or(0.0).max(1e-300);
    let rates = sq
        .chunks(2)
        .filter(|c| c.len() == 2 && c[0] > 1e-14 * scale)
        .map(|c| (0.5 * (c[0] + c[1])).sqrt())
        .collect();
    SkewSpectrum { rates, sq, vecs }
}

/// `ln p_t(0, q)` integrand data for a two-step group with one vertical
/// direction: `ln F(τ)` with `F(τ) = V(τB) exp(−W(τB) x·x / 4t) e^{i z τ/t}`.
struct OneVertical {
    rates: Vec<f64>,
    weights: Vec<(f64, f64)>,
    z: f64,
    t: f64,
}

impl OneVertical {
    fn new(b: &DMatrix<f64>, x: &[f64], z: f64, t: f64) -> Self {
        let sp = skew_spectrum(b);
        let xv = DVector::from_column_slice(x);
        let weights = (0..sp.sq.len())
            .map(|k| (sp.sq[k].sqrt(), sp.vecs.column(k).dot(&xv).powi(2)))
            .collect();
        OneVertical {
            rates: sp.rates,
            weights,
            z,
            t,
        }
    }

    fn log_f(&self, tau: Complex64) -> Complex64 {
        let mut l = Complex64::i() * tau * (self.z / self.t);
        for &r in &self.rates {
            l += w_over_sinh(tau * r).ln();
        }
        let mut w = Complex64::new(0.0, 0.0);
        for &(mu, c) in &self.weights {
            w += w_over_tanh(tau * mu) * c;
        }
        l - w / (4.0 * self.t)
    }

    fn strip(&self) -> f64 {
        let top = self
            .rates
            .iter()
            .chain(self.weights.iter().filter(|w| w.1 > 0.0).map(|w| &w.0))
            .cloned()
            .fold(0.0, f64::max);
        if top > 0.0 {
            PI / top
        } else {
            f64::INFINITY
        }
    }
}

/// `Re ∫_ℝ exp(L(τ))` along the line through the saddle of `|exp L|`
/// searched in `[lo, hi]`. Returns `(ln |value|, relative error)`; the
/// value must be positive.
fn shifted_log_integral(
    log_f: &(dyn Fn(Complex64) -> Complex64 + Sync),
    saddle_objective: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    let sigma = quad::saddle_height(saddle_objective, lo, hi);
    let shift = log_f(Complex64::new(0.0, sigma)).re;
    let g = |tau: Complex64| (log_f(tau) - shift).exp();
    let e = quad::line_integral(&g, sigma, 1.0, &QuadOptions::rel(rel_tol))?;
    if !(e.value > 0.0) {
        return Err(Error::QuadratureFailure {
            estimate: e.value,
            error: e.error,
        });
    }
    Ok((e.value.ln() + shift, e.error / e.value))
}

/// `p_t(0, q)` for a two-step group from its Fourier integral over the dual
/// of the vertical layer, with `V(A) = √det(A/sinh A)` and
/// `W(A) = A/tanh A`.
///
/// One vertical direction: the integral is taken along a shifted contour
/// to relative tolerance `tol`. Several vertical directions: tensor
/// Gauss–Kronrod over a truncated box on the real space, practical only
/// at loose tolerance.
pub fn gaveau_kernel(model: &SrModel, q: &[f64], t: f64, tol: f64) -> Result<KernelSample> {
    check_t(t)?;
    let bs = model
        .bracket_matrices()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a two-step group", model.id())))?;
    let k = model.rank();
    if q.len() != model.dim() {
        return Err(Error::InvalidArgument("point has the wrong dimension".into()));
    }
    let qq = model.hausdorff_dim().expect("two-step groups have a Hausdorff dimension") as f64;
    let (x, z) = q.split_at(k);
    let origin = vec![0.0; q.len()];
    let pre = 2f64.ln() - 0.5 * qq * (4.0 * PI * t).ln();
    if bs.len() == 1 {
        let iv = OneVertical::new(&bs[0], x, z[0], t);
        let strip = iv.strip();
        let cap = if strip.is_finite() { strip * (1.0 - 1e-6) } else { 50.0 };
        let obj = |s: f64| iv.log_f(Complex64::new(0.0, s)).re;
        let (lo, hi) = if z[0] >= 0.0 { (0.0, cap) } else { (-cap, 0.0) };
        let (l, err) = shifted_log_integral(&|tau| iv.log_f(tau), &obj, lo, hi, tol)?;
        return Ok(KernelSample::from_log(t, &origin, q, pre + l, err, KernelMethod::GaveauIntegral));
    }
    let m = bs.len();
    let xv = DVector::from_column_slice(x);
    let integrand = |tau: &[f64]| -> f64 {
        let b = bs.iter().zip(tau).fold(DMatrix::zeros(k, k), |acc, (bh, th)| acc + bh * *th);
        let sp = skew_spectrum(&b);
        let mut v = 1.0;
        for &r in &sp.rates {
            v *= w_over_sinh(Complex64::new(r, 0.0)).re;
        }
        let mut w = 0.0;
        for j in 0..sp.sq.len() {
            let c = sp.vecs.column(j).dot(&xv).powi(2);
            if c > 0.0 {
                w += w_over_tanh(Complex64::new(sp.sq[j].sqrt(), 0.0)).re * c;
            }
        }
        let phase: f64 = z.iter().zip(tau).map(|(a, b)| a * b).sum::<f64>() / t;
        v * (-w / (4.0 * t)).exp() * phase.cos()
    };
    // Truncation: V(τB) ≤ ∏ |τ|λ_j e^{−|τ|λ_j}·2 along every ray; the box
    // half-width is chosen where that envelope is below tol times the
    // envelope integral scale.
    let lam_min = (0..64)
        .map(|i| {
            let u: Vec<f64> = (0..m).map(|d| crate::shoot::halton(i + 1, crate::shoot::PRIMES[d]) * 2.0 - 1.0).collect();
            let n = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
            let b = bs.iter().zip(&u).fold(DMatrix::zeros(k, k), |acc, (bh, th)| acc + bh * (*th / n));
            skew_spectrum(&b).rates.iter().sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    if !(lam_min > 1e-12) {
        return Err(Error::InvalidArgument("bracket matrices have a degenerate direction".into()));
    }
    let mut r = 10.0 / lam_min;
    while (r * lam_min).powi(m as i32 + 1) * (-r * lam_min).exp() > 1e-3 * tol {
        r *= 1.2;
    }
    let lo = vec![-r; m];
    let hi = vec![r; m];
    let e = quad::cubature(&integrand, &lo, &hi, &QuadOptions::rel(tol).with_abs(1e-3 * tol))?;
    if !(e.value > 0.0) {
        return Err(Error::QuadratureFailure {
            estimate: e.value,
            error: e.error,
        });
    }
    Ok(KernelSample::from_log(
        t,
        &origin,
        q,
        pre + e.value.ln(),
        e.error / e.value,
        KernelMethod::GaveauIntegral,
    ))
}

/// `p_t(x, y) = p_t(0, x⁻¹ y)` for a two-step group.
pub fn group_kernel(model: &SrModel, x: &[f64], y: &[f64], t: f64, tol: f64) -> Result<KernelSample> {
    let xi = model
        .group_inverse(x)
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a group", model.id())))?;
    let q = model.group_product(&xi, y).expect("two-step");
    let mut s = gaveau_kernel(model, &q, t, tol)?;
    s.x = x.to_vec();
    s.y = y.to_vec();
    Ok(s)
}

/// Heisenberg kernel from the scalar form of the Fourier integral,
/// `2/(4πt)² ∫ τ/sinh τ · exp(−(x²+y²) τ/(4t tanh τ)) cos(zτ/t) dτ`,
/// integrated on the real line: no matrix functions and no contour shift.
/// Accurate while the cancellation factor `e^{−d²/4t}` stays well above
/// `tol · 1e-16`.
pub fn heisenberg_kernel_real_line(q: &[f64], t: f64, tol: f64) -> Result<KernelSample> {
    check_t(t)?;
    if q.len() != 3 {
        return Err(Error::InvalidArgument("heisenberg points have 3 coordinates".into()));
    }
    let r2 = q[0] * q[0] + q[1] * q[1];
    let z = q[2];
    let amp = |tau: f64| {
        let w = Complex64::new(tau, 0.0);
        w_over_sinh(w).re * (-r2 * w_over_tanh(w).re / (4.0 * t)).exp()
    };
    let opts = QuadOptions::rel(tol).with_abs(1e-300);
    // Amplitude decays like τ e^{−τ}; beyond S the tail is below tol.
    let mut big = 40.0;
    while amp(big) * (big + 2.0) > 1e-3 * tol * amp(0.0) {
        big *= 1.5;
    }
    let omega = z.abs() / t;
    let core = if omega * big > 20.0 {
        let half = PI / omega;
        let head = quad::adaptive(|s| amp(s) * (omega * s).cos(), 0.0, 0.5 * half, &opts)?;
        let tail = quad::oscillatory_tail(|s| amp(s) * (omega * s).cos(), 0.5 * half, half, &opts.with_abs(1e-3 * tol * head.value.abs()), 100_000)?;
        quad::Estimate {
            value: head.value + tail.value,
            error: head.error + tail.error,
        }
    } else {
        quad::adaptive(|s| amp(s) * (omega * s).cos(), 0.0, big, &opts)?
    };
    let value = 2.0 * core.value * 2.0 / (4.0 * PI * t).powi(2);
    if !(value > 0.0) {
        return Err(Error::QuadratureFailure {
            estimate: value,
            error: core.error,
        });
    }
    Ok(KernelSample {
        t,
        x: vec![0.0; 3],
        y: q.to_vec(),
        value,
        log_value: value.ln(),
        method: KernelMethod::GaveauIntegral,
        est_error: 4.0 * core.error / (4.0 * PI * t).powi(2),
    })
}

/// Free (3,6) kernel at a vertical point with `|z| = r` from the radial
/// reduction `8π/(4πt)^{9/2} ∫_0^∞ τ² sin(ρτ)/(ρ sinh τ) dτ`, `ρ = r/t`.
pub fn free36_radial(r: f64, t: f64, tol: f64) -> Result<KernelSample> {
    check_t(t)?;
    if !(r > 0.0) {
        return Err(Error::InvalidArgument("radial reduction needs |z| > 0".into()));
    }
    let rho = r / t;
    // ∫_0^∞ τ² sin(ρτ)/sinh τ = ½ Im ∫_ℝ τ² e^{iρτ}/sinh τ; the factor −i
    // turns the imaginary part into the real part taken by the line rule.
    let log_f = move |tau: Complex64| -> Complex64 {
        (tau * tau).ln() + Complex64::i() * rho * tau - tau.sinh().ln() - Complex64::new(0.0, PI / 2.0)
    };
    let obj = move |s: f64| -rho * s - s.sin().ln();
    let (l, err) = shifted_log_integral(&log_f, &obj, 1e-3, PI * (1.0 - 1e-6), tol)?;
    let log_value = (8.0 * PI).ln() - 4.5 * (4.0 * PI * t).ln() + l - 2f64.ln() - rho.ln();
    let z = [0.0, 0.0, 0.0, r, 0.0, 0.0];
    Ok(KernelSample::from_log(t, &[0.0; 6], &z, log_value, err, KernelMethod::RadialReduction))
}

/// Route for the Grushin Fourier integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MehlerRoute {
    /// Shifted contour when it reduces cancellation by more than 100,
    /// otherwise the real line.
    Auto,
    RealLine,
    Shifted,
}

/// Grushin heat kernel for `∂_x² + x² ∂_y²` from the Mehler kernel:
/// `(2πt)^{−3/2} ∫ √(τ/sinh 2τ) exp(x x' τ/(t sinh 2τ) − (x²+x'²) τ/(2t tanh 2τ))
/// e^{i(y−y')τ/t} dτ`.
pub fn grushin_kernel(q: &[f64], qp: &[f64], t: f64, tol: f64) -> Result<KernelSample> {
    grushin_kernel_with(q, qp, t, tol, MehlerRoute::Auto)
}

pub fn grushin_kernel_with(q: &[f64], qp: &[f64], t: f64, tol: f64, route: MehlerRoute) -> Result<KernelSample> {
    check_t(t)?;
    if q.len() != 2 || qp.len() != 2 {
        return Err(Error::InvalidArgument("grushin points have 2 coordinates".into()));
    }
    let (x, xp) = (q[0], qp[0]);
    let dy = q[1] - qp[1];
    let omega = dy.abs() / t;
    if omega > 1e4 {
        return Err(Error::ToleranceUnachievable {
            requested: tol,
            achievable: 1e-16 * omega,
            reason: format!("oscillation frequency |y − y'|/t = {omega:e} exceeds 1e4"),
        });
    }
    let pre = -1.5 * (2.0 * PI * t).ln();
    let (a, b) = (x * xp / t, (x * x + xp * xp) / (2.0 * t));
    let log_f = move |tau: Complex64| -> Complex64 {
        let two = 2.0 * tau;
        // τ/sinh 2τ = ½ · 2τ/sinh 2τ, and τ/tanh 2τ = ½ · 2τ/tanh 2τ.
        let s = w_over_sinh(two) * 0.5;
        let c = w_over_tanh(two) * 0.5;
        0.5 * s.ln() + a * s - b * c + Complex64::i() * dy * tau / t
    };
    let obj = |s: f64| log_f(Complex64::new(0.0, s)).re;
    let cap = 0.5 * PI * (1.0 - 1e-6);
    let (lo, hi) = if dy <= 0.0 { (-cap, 0.0) } else { (0.0, cap) };
    let sigma = quad::saddle_height(&obj, lo, hi);
    let gain = obj(0.0) - obj(sigma);
    let shifted = match route {
        MehlerRoute::Auto => gain > 100f64.ln(),
        MehlerRoute::RealLine => false,
        MehlerRoute::Shifted => true,
    };
    let (l, err) = if shifted {
        shifted_log_integral(&log_f, &obj, lo, hi, tol)?
    } else {
        let amp = |s: f64| log_f(Complex64::new(s, 0.0)).re.exp();
        let opts = QuadOptions::rel(tol).with_abs(1e-300);
        let mut big = 20.0;
        while amp(big) * (big + 2.0) > 1e-3 * tol * amp(0.0) {
            big *= 1.5;
        }
        let core = if omega * big > 20.0 {
            let half = PI / omega;
            let head = quad::adaptive(|s| amp(s) * (omega * s).cos(), 0.0, 0.5 * half, &opts)?;
            let tail = quad::oscillatory_tail(
                |s| amp(s) * (omega * s).cos(),
                0.5 * half,
                half,
                &opts.with_abs(1e-3 * tol * head.value.abs()),
                100_000,
            )?;
            quad::Estimate {
                value: head.value + tail.value,
                error: head.error + tail.error,
            }
        } else {
            quad::adaptive(|s| amp(s) * (omega * s).cos(), 0.0, big, &opts)?
        };
        let v = 2.0 * core.value;
        if !(v > 0.0) {
            return Err(Error::QuadratureFailure {
                estimate: v,
                error: core.error,
            });
        }
        (v.ln(), core.error / core.value.abs())
    };
    Ok(KernelSample::from_log(t, q, qp, pre + l, err, KernelMethod::MehlerIntegral))
}

/// Kernel of a catalogue model for use in gluing and sampling.
pub fn kernel(model: &SrModel, x: &[f64], y: &[f64], t: f64, tol: f64) -> Result<KernelSample> {
    match model.id() {
        ModelId::Grushin => grushin_kernel(x, y, t, tol),
        _ => group_kernel(model, x, y, t, tol),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlueResult {
    pub value: f64,
    pub est_error: f64,
    /// Largest integrand value on the box boundary over the largest at the
    /// sample grid.
    pub boundary_ratio: f64,
}

/// `∫_box p_{t/2}(x, z) p_{t/2}(z, y) dz` with Lebesgue measure. The
/// integrand is first sampled on a grid; if its boundary maximum exceeds
/// `tol` times its interior maximum the box is rejected with a suggested
/// half-width.
pub fn semigroup_glue(
    kernel: &(dyn Fn(&[f64], &[f64], f64) -> Result<f64> + Sync),
    x: &[f64],
    y: &[f64],
    t: f64,
    lo: &[f64],
    hi: &[f64],
    tol: f64,
) -> Result<GlueResult> {
    glue_masked(kernel, x, y, t, lo, hi, tol, &|_| true)
}

/// As [`semigroup_glue`], integrating only where `keep(z)` holds.
#[allow(clippy::too_many_arguments)]
pub fn glue_masked(
    kernel: &(dyn Fn(&[f64], &[f64], f64) -> Result<f64> + Sync),
    x: &[f64],
    y: &[f64],
    t: f64,
    lo: &[f64],
    hi: &[f64],
    tol: f64,
    keep: &(dyn Fn(&[f64]) -> bool + Sync),
) -> Result<GlueResult> {
    check_t(t)?;
    let n = lo.len();
    if hi.len() != n || x.len() != n || y.len() != n {
        return Err(Error::InvalidArgument("box and points must have the same dimension".into()));
    }
    let half = 0.5 * t;
    let integrand = |z: &[f64]| -> f64 {
        if !keep(z) {
            return 0.0;
        }
        match (kernel(x, z, half), kernel(z, y, half)) {
            (Ok(a), Ok(b)) => a * b,
            _ => f64::NAN,
        }
    };
    // Boundary check on a 9-point grid per axis.
    let per = 9usize;
    let mut interior: f64 = 0.0;
    let mut boundary: f64 = 0.0;
    for idx in 0..per.pow(n as u32) {
        let mut c = idx;
        let mut on_face = false;
        let z: Vec<f64> = (0..n)
            .map(|d| {
                let i = c % per;
                c /= per;
                on_face |= i == 0 || i == per - 1;
                lo[d] + (hi[d] - lo[d]) * i as f64 / (per - 1) as f64
            })
            .collect();
        let v = integrand(&z);
        if !v.is_finite() {
            return Err(Error::QuadratureFailure {
                estimate: v,
                error: f64::INFINITY,
            });
        }
        if on_face {
            boundary = boundary.max(v);
        } else {
            interior = interior.max(v);
        }
    }
    let ratio = boundary / interior.max(f64::MIN_POSITIVE);
    if ratio > tol {
        let r = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).fold(0.0, f64::max);
        return Err(Error::BoxTooSmall {
            suggested_radius: 1.5 * r,
        });
    }
    let scale: f64 = interior * lo.iter().zip(hi).map(|(a, b)| b - a).product::<f64>();
    let e = quad::cubature(&integrand, lo, hi, &QuadOptions::rel(tol).with_abs(1e-3 * tol * scale))?;
    if !e.value.is_finite() {
        return Err(Error::QuadratureFailure {
            estimate: e.value,
            error: e.error,
        });
    }
    Ok(GlueResult {
        value: e.value,
        est_error: e.error,
        boundary_ratio: ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert!((heisenberg_vertical_closed(0.0, 1.0) - 1.0 / 16.0).abs() < 1e-16);
        let want = 1.0 / (8.0 * (1.0 + PI.cosh()));
        assert!((heisenberg_vertical_closed(1.0, 1.0) / want - 1.0).abs() < 1e-14);
        let l = heisenberg_vertical_log(1.0, 0.1);
        let direct = -2.0 * 0.1f64.ln() - 8f64.ln() - (1.0 + (10.0 * PI).cosh()).ln();
        assert!((l - direct).abs() < 1e-12);
        let h = (PI / 2.0).sinh().powi(4) / (32.0 * PI.sqrt() * PI.sinh().powi(3));
        assert!((free36_vertical_closed(1.0) / h - 1.0).abs() < 1e-14);
    }

    #[test]
    fn log_space_survives_tiny_t() {
        let l = heisenberg_vertical_log(1.0, 1e-4);
        assert!((l + PI * 1e4 - 2.0 * 1e4f64.ln() + 8f64.ln() - 2f64.ln()).abs() < 1e-6);
        assert!(free36_vertical_log(1e-4).is_finite());
    }

    #[test]
    fn skew_rates() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]);
        let sp = skew_spectrum(&b);
        assert_eq!(sp.rates.len(), 1);
        assert!((sp.rates[0] - 2.0).abs() < 1e-14);
    }
}
