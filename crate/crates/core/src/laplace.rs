//! Leading term of Laplace integrals `∫ f e^{−g/t}` for diagonal phases
//! `g = Σ c_i u_i^{2 m_i}`, a brute-force quadrature oracle, and the heat
//! exponent of a normal form.

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::hinged::LaplaceForm;
use crate::quad::{self, QuadOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceLeading {
    /// Coefficient of `t^{t_power}`.
    pub coefficient: f64,
    /// `Σ 1/(2 m_i)` over transverse directions.
    pub t_power: Rational64,
    /// Power of `t` of the first neglected term.
    pub error_order: Rational64,
}

impl LaplaceLeading {
    pub fn eval(&self, t: f64) -> f64 {
        self.coefficient * t.powf(to_f64(self.t_power))
    }
}

pub fn to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Leading term of `∫ f e^{−h/t}` for `h = Σ c_i u_i^{2m_i}` and
/// `f(0) = f0`, in the coordinates of the form. Flat directions are not
/// integrated: the caller integrates over Γ, and folds `jacobian_at_z0` into
/// `f0` when working in the original coordinates.
///
/// Each factor is `Γ(1/(2m))/m · (t/c)^{1/(2m)}`. The first neglected term
/// is smaller by `t^{1/max m}`.
pub fn laplace_leading(f0: f64, form: &LaplaceForm, t: f64) -> Result<(LaplaceLeading, f64)> {
    if form.exponents.len() != form.diag_coeffs.len() {
        return Err(Error::InvalidArgument("exponents and coefficients differ in length".into()));
    }
    if let Some(c) = form.diag_coeffs.iter().find(|c| !(**c > 0.0)) {
        return Err(Error::InvalidArgument(format!("coefficient {c} is not positive")));
    }
    if let Some(m) = form.exponents.iter().find(|m| **m == 0) {
        return Err(Error::InvalidArgument(format!("exponent {m} must be at least 1")));
    }
    let mut coefficient = f0;
    let mut t_power = Rational64::from_integer(0);
    for (&m, &c) in form.exponents.iter().zip(&form.diag_coeffs) {
        let e = 1.0 / (2.0 * m as f64);
        coefficient *= gamma(e) / m as f64 * c.powf(-e);
        t_power += Rational64::new(1, 2 * m as i64);
    }
    let m_max = form.exponents.iter().copied().max().unwrap_or(1);
    let lead = LaplaceLeading {
        coefficient,
        t_power,
        error_order: t_power + Rational64::new(1, m_max as i64),
    };
    let value = lead.eval(t);
    Ok((lead, value))
}

/// `∫_box f e^{−g/t}` by nested adaptive Gauss–Kronrod to relative
/// tolerance `tol`.
pub fn laplace_oracle(
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    lo: &[f64],
    hi: &[f64],
    t: f64,
    tol: f64,
) -> Result<f64> {
    if !(t > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("need t > 0 and tol > 0, got {t}, {tol}")));
    }
    let integrand = |x: &[f64]| {
        let e = (-g(x) / t).exp();
        if e == 0.0 {
            0.0
        } else {
            f(x) * e
        }
    };
    Ok(quad::cubature(&integrand, lo, hi, &QuadOptions::rel(tol))?.value)
}

/// Heat exponent `α = n − Σ 1/(2 m_i)`; flat directions contribute nothing.
pub fn heat_exponent(n: usize, form: &LaplaceForm) -> Result<Rational64> {
    if form.exponents.len() + form.flat_dims != n {
        return Err(Error::InvalidArgument(format!(
            "form has {} transverse and {} flat directions, expected {n} in total",
            form.exponents.len(),
            form.flat_dims
        )));
    }
    let mut a = Rational64::from_integer(n as i64);
    for &m in &form.exponents {
        if m == 0 {
            return Err(Error::InvalidArgument("exponent 0".into()));
        }
        a -= Rational64::new(1, 2 * m as i64);
    }
    Ok(a)
}
