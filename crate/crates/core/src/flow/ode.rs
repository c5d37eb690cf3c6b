//! Dormand–Prince 5(4) integrator with the standard fourth-order continuous
//! extension.

use crate::error::{Error, Result};

/// Step-size policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepping {
    /// Error-controlled steps; absolute and relative tolerance both `tol`.
    Adaptive { tol: f64 },
    /// Uniform steps. The resulting flow map is a smooth function of the
    /// initial data, which finite-difference stencils need.
    Fixed { steps: usize },
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension over one accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t0 + self.h
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }
}

/// Result of one integration.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub t_end: f64,
    pub y_end: Vec<f64>,
    /// Dense output, present when requested.
    pub dense: Vec<DenseStep>,
    pub accepted_steps: usize,
    pub rhs_evals: usize,
}

impl OdeSolution {
    /// Interpolated state at `t` (requires dense output).
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        let idx = self
            .dense
            .partition_point(|s| s.t0 + s.h < t)
            .min(self.dense.len().checked_sub(1)?);
        let step = &self.dense[idx];
        if t < step.t0 - 1e-14 * step.h.abs().max(1.0) {
            return None;
        }
        let mut out = vec![0.0; self.y_end.len()];
        step.eval_into(t, &mut out);
        Some(out)
    }
}

/// Integrate `y' = f(t, y)` from `t0` to `t1 ≥ t0`.
///
/// `observe` sees every accepted state `(t, y)`, including the initial one.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    stepping: Stepping,
    keep_dense: bool,
    mut observe: O,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(f64, &[f64]),
{
    let dim = y0.len();
    let span = t1 - t0;
    if !(span >= 0.0) || !span.is_finite() {
        return Err(Error::InvalidArgument(format!("bad integration span [{t0}, {t1}]")));
    }
    let mut y = y0.to_vec();
    let mut t = t0;
    observe(t, &y);
    let mut sol = OdeSolution {
        t_end: t0,
        y_end: y.clone(),
        dense: Vec::new(),
        accepted_steps: 0,
        rhs_evals: 0,
    };
    if span == 0.0 {
        return Ok(sol);
    }

    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut k5 = vec![0.0; dim];
    let mut k6 = vec![0.0; dim];
    let mut k7 = vec![0.0; dim];
    let mut ytmp = vec![0.0; dim];
    let mut ynew = vec![0.0; dim];

    f(t, &y, &mut k1);
    sol.rhs_evals += 1;

    let (tol, fixed_h) = match stepping {
        Stepping::Adaptive { tol } => {
            if !(tol > 0.0) {
                return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
            }
            (tol, None)
        }
        Stepping::Fixed { steps } => {
            if steps == 0 {
                return Err(Error::InvalidArgument("fixed stepping needs at least one step".into()));
            }
            (0.0, Some(span / steps as f64))
        }
    };

    let mut h = match fixed_h {
        Some(h) => h,
        None => initial_step(&y, &k1, tol, span),
    };
    let n_fixed = match stepping {
        Stepping::Fixed { steps } => steps,
        Stepping::Adaptive { .. } => 0,
    };
    let max_steps = 5_000_000usize;

    loop {
        let done = match fixed_h {
            Some(_) => sol.accepted_steps == n_fixed,
            None => t >= t1,
        };
        if done {
            break;
        }
        if sol.accepted_steps > max_steps {
            return Err(Error::IntegrationFailure {
                t,
                state: y,
                reason: "too many steps".into(),
            });
        }
        let last = match fixed_h {
            Some(_) => sol.accepted_steps + 1 == n_fixed,
            None => t + h >= t1,
        };
        if last && fixed_h.is_none() {
            h = t1 - t;
        }

        for i in 0..dim {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &ytmp, &mut k2);
        for i in 0..dim {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &ytmp, &mut k3);
        for i in 0..dim {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &ytmp, &mut k4);
        for i in 0..dim {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &ytmp, &mut k5);
        for i in 0..dim {
            ytmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, &ytmp, &mut k6);
        for i in 0..dim {
            ynew[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h, &ynew, &mut k7);
        sol.rhs_evals += 6;

        let mut next_h = h;
        if fixed_h.is_none() {
            let mut err = 0.0;
            for i in 0..dim {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = tol + tol * y[i].abs().max(ynew[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = (err / dim as f64).sqrt();
            let fac = if !err.is_finite() {
                0.2
            } else if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if !(err <= 1.0) {
                h *= fac.min(0.9);
                if h.abs() < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::IntegrationFailure {
                        t,
                        state: y,
                        reason: "step size underflow".into(),
                    });
                }
                continue;
            }
            next_h = (h * fac).min(span);
        }

        if keep_dense {
            let mut r2 = vec![0.0; dim];
            let mut r3 = vec![0.0; dim];
            let mut r4 = vec![0.0; dim];
            let mut r5 = vec![0.0; dim];
            for i in 0..dim {
                let ydiff = ynew[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                r2[i] = ydiff;
                r3[i] = bspl;
                r4[i] = ydiff - h * k7[i] - bspl;
                r5[i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                        + D7 * k7[i]);
            }
            sol.dense.push(DenseStep {
                t0: t,
                h,
                rcont: [y.clone(), r2, r3, r4, r5],
            });
        }

        t = if last && fixed_h.is_none() { t1 } else { t + h };
        if last && fixed_h.is_some() {
            t = t1;
        }
        std::mem::swap(&mut y, &mut ynew);
        std::mem::swap(&mut k1, &mut k7);
        sol.accepted_steps += 1;
        observe(t, &y);
        h = next_h;
    }

    sol.t_end = t;
    sol.y_end = y;
    Ok(sol)
}

fn initial_step(y: &[f64], f0: &[f64], tol: f64, span: f64) -> f64 {
    let dim = y.len() as f64;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..y.len() {
        let sc = tol + tol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (f0[i] / sc).powi(2);
    }
    let d0 = (d0 / dim).sqrt();
    let d1 = (d1 / dim).sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.min(span)
}
