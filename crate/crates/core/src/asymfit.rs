//! Extraction of `(d², α, C)` from small-time kernel samples
//! `p_t ≈ C t^{−α} e^{−d²/4t}`, and verdicts on the exponent bounds.

use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplace::to_f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit {
    pub d2_hat: f64,
    pub alpha_hat: f64,
    #[serde(rename = "C_hat")]
    pub c_hat: f64,
    pub residual_rms: f64,
    pub t_window: (f64, f64),
}

/// Least squares with column scaling; returns coefficients and residuals.
fn lstsq(cols: &[Vec<f64>], rhs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rhs.len();
    let k = cols.len();
    let scale: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300))
        .collect();
    let a = DMatrix::from_fn(n, k, |i, j| cols[j][i] / scale[j]);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-13 * smax) {
        return Err(Error::IllConditioned(format!(
            "design matrix condition {:e}",
            smax / smin.max(1e-300)
        )));
    }
    let b = DVector::from_column_slice(rhs);
    let x = svd
        .solve(&b, 1e-14 * smax)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    let r = &a * &x - &b;
    Ok(((0..k).map(|j| x[j] / scale[j]).collect(), r.iter().cloned().collect()))
}

/// Two-stage fit of samples `(t, ln p_t)`.
///
/// Stage 1 fits `−4t ln p = d² + 4α t ln t − 4t ln C` on the basis
/// `(1, t, t ln t)` and keeps the intercept. Stage 2 fits
/// `ln p + d²/4t = ln C − α ln t`.
pub fn fit_exponential(samples: &[(f64, f64)]) -> Result<AsymptoticFit> {
    if samples.len() < 6 {
        return Err(Error::InvalidArgument(format!("need at least 6 samples, got {}", samples.len())));
    }
    if let Some(s) = samples.iter().find(|s| !(s.0 > 0.0 && s.0.is_finite() && s.1.is_finite())) {
        return Err(Error::InvalidArgument(format!("bad sample {s:?}")));
    }
    let tmin = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let tmax = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    if tmax / tmin < 10f64.sqrt() {
        return Err(Error::IllConditioned(format!(
            "t window [{tmin}, {tmax}] spans less than half a decade"
        )));
    }
    let ts: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let one = vec![1.0; ts.len()];
    let tl: Vec<f64> = ts.iter().map(|t| t * t.ln()).collect();
    let y1: Vec<f64> = samples.iter().map(|(t, l)| -4.0 * t * l).collect();
    let (c1, _) = lstsq(&[one.clone(), ts.clone(), tl], &y1)?;
    let d2 = c1[0];
    let lt: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let y2: Vec<f64> = samples.iter().map(|(t, l)| l + d2 / (4.0 * t)).collect();
    let (c2, r2) = lstsq(&[one, lt], &y2)?;
    let rms = (r2.iter().map(|v| v * v).sum::<f64>() / r2.len() as f64).sqrt();
    Ok(AsymptoticFit {
        d2_hat: d2,
        alpha_hat: -c2[1],
        c_hat: c2[0].exp(),
        residual_rms: rms,
        t_window: (tmin, tmax),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clauses {
    /// `n/2 − ε ≤ α ≤ n − 1/2 + ε`.
    pub i: bool,
    /// `α ≥ n/2 + 1/4 − ε`; only checked at conjugate pairs.
    pub ii: Option<bool>,
    /// `|α − n/2| ≤ ε`; only checked at non-conjugate pairs.
    pub iii: Option<bool>,
}

impl Clauses {
    pub fn all_pass(&self) -> bool {
        self.i && self.ii.unwrap_or(true) && self.iii.unwrap_or(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub d2_hat: f64,
    pub alpha_hat: f64,
    #[serde(rename = "C_hat")]
    pub c_hat: f64,
    pub predicted_alpha: Option<f64>,
    pub predicted_alpha_exact: Option<Rational64>,
    pub clauses: Clauses,
}

pub const VERDICT_EPS: f64 = 0.05;

/// Check a fitted exponent against the bounds for an `n`-dimensional
/// structure; `conjugacy` is the Hessian corank of the hinged energy.
pub fn corollary_verdict(
    fit: &AsymptoticFit,
    n: usize,
    conjugacy: usize,
    predicted: Option<Rational64>,
    eps: f64,
) -> Verdict {
    let a = fit.alpha_hat;
    let half = 0.5 * n as f64;
    let clauses = Clauses {
        i: a >= half - eps && a <= n as f64 - 0.5 + eps,
        ii: (conjugacy > 0).then(|| a >= half + 0.25 - eps),
        iii: (conjugacy == 0).then(|| (a - half).abs() <= eps),
    };
    Verdict {
        d2_hat: fit.d2_hat,
        alpha_hat: fit.alpha_hat,
        c_hat: fit.c_hat,
        predicted_alpha: predicted.map(to_f64),
        predicted_alpha_exact: predicted,
        clauses,
    }
}
