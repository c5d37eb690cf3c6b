//! Normal Hamiltonian flow, exponential map and conjugate points.

pub mod closed;
pub mod covector;
pub mod ode;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::SrModel;
pub use covector::{CovectorChart, InitialCovector};
pub use ode::Stepping;

/// A point of the cotangent bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotangentState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl CotangentState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() || q.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "cotangent state needs finite q and p of equal length".into(),
            ));
        }
        Ok(CotangentState { q, p })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub stepping: Stepping,
    /// Number of uniformly spaced trajectory samples (0 for none).
    pub samples: usize,
}

impl FlowOptions {
    pub fn adaptive(tol: f64) -> Self {
        FlowOptions {
            stepping: Stepping::Adaptive { tol },
            samples: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub t: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub endpoint: Vec<f64>,
    pub covector: Vec<f64>,
    pub trajectory: Option<Vec<FlowSample>>,
    /// Largest deviation of `H` from its initial value over accepted steps.
    pub energy_drift: f64,
}

/// Right-hand side of the Hamiltonian system, optionally extended by
/// `ncol` variational columns `(δq, δp)`.
struct Rhs<'a> {
    model: &'a SrModel,
    n: usize,
    k: usize,
    ncol: usize,
    frame: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
    du: Vec<f64>,
}

impl<'a> Rhs<'a> {
    fn new(model: &'a SrModel, ncol: usize) -> Self {
        let (n, k) = (model.dim(), model.rank());
        Rhs {
            model,
            n,
            k,
            ncol,
            frame: vec![0.0; k * n],
            u: vec![0.0; k],
            g: vec![0.0; k * n],
            du: vec![0.0; k],
        }
    }

    fn eval(&mut self, y: &[f64], dy: &mut [f64]) {
        let (n, k) = (self.n, self.k);
        let d = self.model.frame_derivative();
        let (q, rest) = y.split_at(n);
        let p = &rest[..n];
        self.model.controls_into(q, p, &mut self.frame, &mut self.u);
        let x = &self.frame;
        let u = &self.u;
        // G_ia = Σ_l p_l ∂_a X_i^l
        for i in 0..k {
            for a in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += p[l] * d[(i * n + l) * n + a];
                }
                self.g[i * n + a] = s;
            }
        }
        for l in 0..n {
            dy[l] = (0..k).map(|i| u[i] * x[i * n + l]).sum();
        }
        for a in 0..n {
            dy[n + a] = -(0..k).map(|i| u[i] * self.g[i * n + a]).sum::<f64>();
        }
        for c in 0..self.ncol {
            let off = 2 * n * (c + 1);
            let dq = &y[off..off + n];
            let dp = &y[off + n..off + 2 * n];
            for i in 0..k {
                let mut s = 0.0;
                for a in 0..n {
                    s += self.g[i * n + a] * dq[a] + x[i * n + a] * dp[a];
                }
                self.du[i] = s;
            }
            for l in 0..n {
                let mut s = 0.0;
                for i in 0..k {
                    s += self.du[i] * x[i * n + l];
                    let row = &d[(i * n + l) * n..(i * n + l + 1) * n];
                    s += u[i] * row.iter().zip(dq).map(|(a, b)| a * b).sum::<f64>();
                }
                dy[off + l] = s;
            }
            for a in 0..n {
                let mut s = 0.0;
                for i in 0..k {
                    s += self.du[i] * self.g[i * n + a];
                    let mut t = 0.0;
                    for l in 0..n {
                        t += dp[l] * d[(i * n + l) * n + a];
                    }
                    s += u[i] * t;
                }
                dy[off + n + a] = -s;
            }
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("flow time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// Integrate the Hamiltonian flow from an arbitrary cotangent state.
pub fn hamiltonian_flow(
    model: &SrModel,
    state: &CotangentState,
    t: f64,
    opts: &FlowOptions,
) -> Result<FlowResult> {
    check_time(t)?;
    let n = model.dim();
    if state.q.len() != n || state.p.len() != n {
        return Err(Error::InvalidArgument("state dimension does not match model".into()));
    }
    let mut y0 = state.q.clone();
    y0.extend_from_slice(&state.p);
    let h0 = model.hamiltonian(&state.q, &state.p);
    let mut rhs = Rhs::new(model, 0);
    let mut drift: f64 = 0.0;
    let sol = ode::integrate(
        |_, y, dy| rhs.eval(y, dy),
        0.0,
        &y0,
        t,
        opts.stepping,
        opts.samples > 0,
        |_, y| {
            drift = drift.max((model.hamiltonian(&y[..n], &y[n..]) - h0).abs());
        },
    )?;
    let trajectory = (opts.samples > 0).then(|| {
        let m = opts.samples.max(2);
        (0..m)
            .map(|j| {
                let tj = t * j as f64 / (m - 1) as f64;
                let y = if j == m - 1 {
                    sol.y_end.clone()
                } else {
                    sol.eval(tj).unwrap_or_else(|| y0.clone())
                };
                let h = model.hamiltonian(&y[..n], &y[n..]);
                FlowSample {
                    t: tj,
                    q: y[..n].to_vec(),
                    p: y[n..].to_vec(),
                    h,
                }
            })
            .collect()
    });
    Ok(FlowResult {
        endpoint: sol.y_end[..n].to_vec(),
        covector: sol.y_end[n..].to_vec(),
        trajectory,
        energy_drift: drift,
    })
}

/// Exponential map `E_x(p0, t)` for a unit-energy covector.
pub fn exp_map(model: &SrModel, p0: &InitialCovector, t: f64, tol: f64) -> Result<FlowResult> {
    exp_map_with(model, p0, t, &FlowOptions::adaptive(tol))
}

pub fn exp_map_with(
    model: &SrModel,
    p0: &InitialCovector,
    t: f64,
    opts: &FlowOptions,
) -> Result<FlowResult> {
    let state = CotangentState::new(p0.base.clone(), p0.p0.clone())?;
    hamiltonian_flow(model, &state, t, opts)
}

/// Endpoint and its derivatives with respect to the initial covector.
#[derive(Debug, Clone)]
pub struct Linearized {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// `∂q(t)/∂p(0)`, n×n.
    pub dq_dp: DMatrix<f64>,
    /// `∂p(t)/∂p(0)`, n×n.
    pub dp_dp: DMatrix<f64>,
}

fn variational_y0(q: &[f64], p: &[f64]) -> Vec<f64> {
    let n = q.len();
    let mut y0 = vec![0.0; 2 * n * (n + 1)];
    y0[..n].copy_from_slice(q);
    y0[n..2 * n].copy_from_slice(p);
    for c in 0..n {
        y0[2 * n * (c + 1) + n + c] = 1.0;
    }
    y0
}

fn unpack_linearized(n: usize, y: &[f64]) -> Linearized {
    let mut dq_dp = DMatrix::zeros(n, n);
    let mut dp_dp = DMatrix::zeros(n, n);
    for c in 0..n {
        let off = 2 * n * (c + 1);
        for r in 0..n {
            dq_dp[(r, c)] = y[off + r];
            dp_dp[(r, c)] = y[off + n + r];
        }
    }
    Linearized {
        q: y[..n].to_vec(),
        p: y[n..2 * n].to_vec(),
        dq_dp,
        dp_dp,
    }
}

/// Flow together with the variational equations in the initial covector.
///
/// With fixed stepping the returned matrices are the exact derivatives of
/// the discrete flow map.
pub fn linearized_flow(
    model: &SrModel,
    q0: &[f64],
    p0: &[f64],
    t: f64,
    stepping: Stepping,
) -> Result<Linearized> {
    check_time(t)?;
    let n = model.dim();
    let y0 = variational_y0(q0, p0);
    let mut rhs = Rhs::new(model, n);
    let sol = ode::integrate(|_, y, dy| rhs.eval(y, dy), 0.0, &y0, t, stepping, false, |_, _| {})?;
    Ok(unpack_linearized(n, &sol.y_end))
}

fn velocity(model: &SrModel, q: &[f64], p: &[f64]) -> Vec<f64> {
    let (n, k) = (model.dim(), model.rank());
    let mut fb = vec![0.0; k * n];
    let mut u = vec![0.0; k];
    model.controls_into(q, p, &mut fb, &mut u);
    (0..n).map(|l| (0..k).map(|i| u[i] * fb[i * n + l]).sum()).collect()
}

fn square_jacobian(model: &SrModel, p0: &InitialCovector, lin: &Linearized) -> DMatrix<f64> {
    let n = model.dim();
    let c = p0.chart_jacobian(model);
    let left = &lin.dq_dp * c;
    let v = velocity(model, &lin.q, &lin.p);
    let mut jac = DMatrix::zeros(n, n);
    for r in 0..n {
        for j in 0..n - 1 {
            jac[(r, j)] = left[(r, j)];
        }
        jac[(r, n - 1)] = v[r];
    }
    jac
}

/// Jacobian of `(params, t) ↦ E_x(p0(params), t)` by the variational
/// equations. The last column is `∂/∂t`.
pub fn exp_jacobian(model: &SrModel, p0: &InitialCovector, t: f64, tol: f64) -> Result<DMatrix<f64>> {
    let lin = linearized_flow(model, &p0.base, &p0.p0, t, Stepping::Adaptive { tol })?;
    Ok(square_jacobian(model, p0, &lin))
}

/// The same Jacobian by central differences in the chart parameters and `t`.
pub fn exp_jacobian_fd(
    model: &SrModel,
    p0: &InitialCovector,
    t: f64,
    tol: f64,
    step: f64,
) -> Result<DMatrix<f64>> {
    let n = model.dim();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n - 1 {
        let mut pp = p0.params.clone();
        let mut pm = p0.params.clone();
        pp[j] += step;
        pm[j] -= step;
        let cp = InitialCovector::from_params(model, &p0.base, p0.chart, &pp)?;
        let cm = InitialCovector::from_params(model, &p0.base, p0.chart, &pm)?;
        let ep = exp_map(model, &cp, t, tol)?.endpoint;
        let em = exp_map(model, &cm, t, tol)?.endpoint;
        for r in 0..n {
            jac[(r, j)] = (ep[r] - em[r]) / (2.0 * step);
        }
    }
    let tp = t + step;
    let tm = (t - step).max(0.0);
    let ep = exp_map(model, p0, tp, tol)?.endpoint;
    let em = exp_map(model, p0, tm, tol)?.endpoint;
    for r in 0..n {
        jac[(r, n - 1)] = (ep[r] - em[r]) / (tp - tm);
    }
    Ok(jac)
}

/// Number of singular values below `rel · σ_max`.
pub fn rank_deficiency(jac: &DMatrix<f64>, rel: f64) -> usize {
    let sv = jac.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s <= rel * smax).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjugateKind {
    /// The Jacobian determinant changes sign.
    SignChange,
    /// The determinant touches zero without changing sign. Reported so that
    /// even-order conjugate points are not dropped.
    Graze,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugatePoint {
    pub t: f64,
    pub kind: ConjugateKind,
}

const CONJ_SCAN: usize = 400;
const CONJ_GRAZE: f64 = 1e-10;
const CONJ_TOL: f64 = 1e-8;

/// First conjugate time in `(0, t_max]`.
pub fn first_conjugate_time(
    model: &SrModel,
    p0: &InitialCovector,
    t_max: f64,
) -> Result<Option<ConjugatePoint>> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidArgument(format!("t_max must be positive, got {t_max}")));
    }
    let n = model.dim();
    let y0 = variational_y0(&p0.base, &p0.p0);
    let mut rhs = Rhs::new(model, n);
    let sol = ode::integrate(
        |_, y, dy| rhs.eval(y, dy),
        0.0,
        &y0,
        t_max,
        Stepping::Adaptive { tol: 1e-12 },
        true,
        |_, _| {},
    )?;
    let det_at = |t: f64| -> f64 {
        let y = if t >= t_max { sol.y_end.clone() } else { sol.eval(t).expect("dense output") };
        square_jacobian(model, p0, &unpack_linearized(n, &y)).determinant()
    };

    let ts: Vec<f64> = (1..=CONJ_SCAN).map(|j| t_max * j as f64 / CONJ_SCAN as f64).collect();
    let dets: Vec<f64> = ts.iter().map(|&t| det_at(t)).collect();
    let mut running: f64 = 0.0;
    for j in 0..ts.len() {
        let d = dets[j];
        running = running.max(d.abs());
        if j > 0 && dets[j - 1].abs() > 0.0 && d.signum() != dets[j - 1].signum() {
            let (mut a, mut b) = (ts[j - 1], ts[j]);
            let sa = dets[j - 1].signum();
            while b - a > CONJ_TOL {
                let m = 0.5 * (a + b);
                if det_at(m).signum() == sa {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(Some(ConjugatePoint {
                t: 0.5 * (a + b),
                kind: ConjugateKind::SignChange,
            }));
        }
        if j > 0 && d == 0.0 {
            return Ok(Some(ConjugatePoint {
                t: ts[j],
                kind: ConjugateKind::SignChange,
            }));
        }
        let is_local_min = j > 0
            && j + 1 < ts.len()
            && d.abs() <= dets[j - 1].abs()
            && d.abs() <= dets[j + 1].abs();
        if is_local_min && d.abs() < CONJ_GRAZE * running {
            // Golden-section search on |det| over the bracketing interval.
            let (mut a, mut b) = (ts[j - 1], ts[j + 1]);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            while b - a > CONJ_TOL {
                let c = b - g * (b - a);
                let e = a + g * (b - a);
                if det_at(c).abs() < det_at(e).abs() {
                    b = e;
                } else {
                    a = c;
                }
            }
            return Ok(Some(ConjugatePoint {
                t: 0.5 * (a + b),
                kind: ConjugateKind::Graze,
            }));
        }
    }
    Ok(None)
}
